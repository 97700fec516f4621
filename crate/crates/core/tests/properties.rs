use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::sync::Arc;

use fastce_core::ce::{label_page, CeConfig};
use fastce_core::features::{cosine, is_similar, tokenize, FeatureKey, FeatureVector};
use fastce_core::synth::{generate_pages, ArticleSpec, SyntheticSiteSpec};
use fastce_core::template::ConfigSnapshot;
use fastce_core::{
    atomic_partition, build_block_tree_from_str, build_template, fast::select_blocks, BlockTree,
    FastExtractorF64, RuleDepth, SegmentationConfig, SiteTemplateF64, TrainingCorpus,
    FORMAT_VERSION,
};
use num_rational::Ratio;
use proptest::prelude::*;

#[derive(Clone, Debug)]
enum Frag {
    Words(Vec<String>),
    El(&'static str, Vec<Frag>),
}

const TAGS: &[&str] = &["div", "p", "span", "section", "li", "b", "em", "a"];

fn frag() -> impl Strategy<Value = Frag> {
    let leaf = prop::collection::vec("[a-z]{1,6}", 1..5).prop_map(Frag::Words);
    leaf.prop_recursive(4, 40, 4, |inner| {
        (
            prop::sample::select(TAGS),
            prop::collection::vec(inner, 0..4),
        )
            .prop_map(|(t, kids)| Frag::El(t, kids))
    })
}

fn render(f: &Frag, html: &mut String, words: &mut Vec<String>) {
    match f {
        Frag::Words(ws) => {
            html.push(' ');
            html.push_str(&ws.join(" "));
            html.push(' ');
            words.extend(ws.iter().cloned());
        }
        Frag::El(tag, kids) => {
            html.push_str(&format!("<{tag}>"));
            for k in kids {
                render(k, html, words);
            }
            html.push_str(&format!("</{tag}>"));
        }
    }
}

fn page() -> impl Strategy<Value = (String, Vec<String>)> {
    prop::collection::vec(frag(), 1..4).prop_map(|frags| {
        let mut html = String::from("<html><body>");
        let mut words = Vec::new();
        for f in &frags {
            render(f, &mut html, &mut words);
        }
        html.push_str("</body></html>");
        (html, words)
    })
}

fn tree(html: &str) -> BlockTree {
    build_block_tree_from_str("p", html, Arc::new(SegmentationConfig::default()))
}

fn tokens(text: &str) -> Vec<String> {
    tokenize(text).collect()
}

fn sorted(mut v: Vec<String>) -> Vec<String> {
    v.sort();
    v
}

fn template(paths: impl IntoIterator<Item = fastce_core::TraversalPath>) -> SiteTemplateF64 {
    SiteTemplateF64 {
        site_id: "s".into(),
        format_version: FORMAT_VERSION,
        config_snapshot: ConfigSnapshot {
            segmentation: SegmentationConfig::default(),
            ce: CeConfig::default(),
        },
        built_from: 2,
        content_paths: paths.into_iter().collect(),
        decoys: BTreeMap::new(),
    }
}

/// Nodes whose path is in `p` and whose proper ancestors' paths are not.
fn maximal_oracle(tree: &BlockTree, p: &BTreeSet<String>) -> BTreeSet<usize> {
    let mut out = BTreeSet::new();
    for id in 0..tree.len() {
        if !p.contains(tree.path(id).unwrap().as_str()) {
            continue;
        }
        let mut anc = tree.node(id).unwrap().parent;
        let mut covered = false;
        while let Some(a) = anc {
            covered |= p.contains(tree.path(a).unwrap().as_str());
            anc = tree.node(a).unwrap().parent;
        }
        if !covered {
            out.insert(id);
        }
    }
    out
}

fn is_subsequence(needle: &[String], hay: &[String]) -> bool {
    let mut it = hay.iter();
    needle.iter().all(|w| it.any(|h| h == w))
}

fn sparse() -> impl Strategy<Value = FeatureVector> {
    prop::collection::btree_map("[a-e]", 1u32..40, 0..6).prop_map(|m| {
        FeatureVector::from_counts(m.into_iter().map(|(k, v)| (FeatureKey::term(k), v)))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn full_text_keeps_document_order((html, words) in page()) {
        prop_assert_eq!(tokens(&tree(&html).full_text()), words);
    }

    #[test]
    fn partition_is_lossless((html, words) in page()) {
        let t = tree(&html);
        let blocks = atomic_partition(&t);
        let got: Vec<String> = blocks.iter().flat_map(|b| tokens(&b.text)).collect();
        prop_assert_eq!(sorted(got), sorted(words));
        let sources: HashSet<usize> = blocks.iter().map(|b| b.source).collect();
        prop_assert_eq!(sources.len(), blocks.len());
        for b in &blocks {
            prop_assert_eq!(&b.path, &t.path(b.source).unwrap());
        }
    }

    #[test]
    fn whole_page_template_reproduces_page_text((html, words) in page()) {
        let t = tree(&html);
        let tpl = template(t.paths());
        let out = FastExtractorF64::new(tpl).extract_tree(&t).unwrap();
        prop_assert_eq!(tokens(&out.text), words);
    }

    #[test]
    fn selection_matches_oracle((html, _) in page(), mask in prop::collection::vec(any::<bool>(), 32)) {
        let t = tree(&html);
        let distinct: BTreeSet<String> = t.paths().iter().map(|p| p.as_str().to_string()).collect();
        let p: BTreeSet<String> = distinct
            .into_iter()
            .enumerate()
            .filter(|(i, _)| mask[i % mask.len()])
            .map(|(_, s)| s)
            .collect();
        let tpl = template(p.iter().map(|s| s.parse().unwrap()));
        for depth in [RuleDepth::Recursive, RuleDepth::DirectOnly] {
            let selected = select_blocks(&t, &tpl, depth).unwrap();
            let ids: BTreeSet<usize> = selected.iter().map(|b| b.node).collect();
            let maximal = maximal_oracle(&t, &p);
            prop_assert!(ids.is_subset(&maximal));
            for id in &maximal {
                let n = t.node(*id).unwrap();
                if !n.direct_text.is_empty() || !n.counts.is_zero() {
                    prop_assert!(ids.contains(id));
                }
            }
            for b in &selected {
                let sub = tokens(&t.subtree_text(b.node).unwrap());
                prop_assert!(is_subsequence(&tokens(&b.included_text), &sub));
            }
        }
    }

    #[test]
    fn cosine_agrees_with_exact_rational(a in sparse(), b in sparse()) {
        let c: f64 = cosine(&a, &b);
        prop_assert!((0.0..=1.0 + 1e-12).contains(&c));
        let dot = a.dot(&b) as i128;
        let (na, nb) = (a.norm_sq() as i128, b.norm_sq() as i128);
        if na > 0 && nb > 0 {
            let exact_sq = Ratio::new(dot * dot, na * nb);
            let approx = (c * c - *exact_sq.numer() as f64 / *exact_sq.denom() as f64).abs();
            prop_assert!(approx <= 1e-9);
            let similar = dot > 0 && exact_sq > Ratio::new(81, 100);
            let cfg = CeConfig::<f64>::default().similarity;
            prop_assert_eq!(is_similar(&a, &b, &cfg), similar);
        } else {
            prop_assert_eq!(c, 0.0);
        }
    }

    #[test]
    fn cloned_page_supports_every_block(f in prop::collection::vec(sparse(), 1..6), copies in 1usize..5) {
        let f: Vec<FeatureVector> = f.into_iter().filter(|v| !v.is_empty()).collect();
        let others: Vec<&[FeatureVector]> = (0..copies).map(|_| f.as_slice()).collect();
        let cfg = CeConfig::<f64>::default();
        let labels = label_page("p", &f, &others, &cfg);
        for l in &labels.labels {
            prop_assert_eq!(l.support, copies);
        }
    }

    #[test]
    fn higher_fraction_never_adds_non_content(
        pages in prop::collection::vec(prop::collection::vec(sparse(), 1..5), 3..6),
        lo in 0.05f64..0.95,
        hi in 0.05f64..0.95,
    ) {
        let (lo, hi) = if lo <= hi { (lo, hi) } else { (hi, lo) };
        let others: Vec<&[FeatureVector]> = pages[1..].iter().map(|p| p.as_slice()).collect();
        let strict = CeConfig::<f64> { frequency_fraction: hi, ..Default::default() };
        let loose = CeConfig::<f64> { frequency_fraction: lo, ..Default::default() };
        let a = label_page("p", &pages[0], &others, &strict);
        let b = label_page("p", &pages[0], &others, &loose);
        for (x, y) in a.labels.iter().zip(&b.labels) {
            prop_assert!(x.label != fastce_core::Label::NonContent || y.label == fastce_core::Label::NonContent);
        }
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(12))]

    #[test]
    fn generated_sites_are_recovered_exactly(
        seed in any::<u64>(),
        paragraphs in 1usize..6,
        nesting_depth in 0usize..3,
        spans in 0usize..3,
    ) {
        let spec = SyntheticSiteSpec {
            page_count: 12,
            train_pages: 8,
            seed,
            article: ArticleSpec {
                paragraphs,
                nesting_depth,
                spans_per_paragraph: spans,
                ..Default::default()
            },
            ..Default::default()
        };
        let pages = generate_pages(&spec).unwrap();
        let cfg = CeConfig::<f64>::default();
        let training = TrainingCorpus::from_html(
            "s",
            pages[..8].iter().map(|p| (p.page_id.clone(), p.html.as_bytes())),
            Arc::new(SegmentationConfig::default()),
            &cfg.similarity,
        )
        .unwrap();
        let tpl = build_template(&training, &cfg).unwrap();
        let seen: BTreeSet<String> = training
            .pages
            .iter()
            .flat_map(|p| p.tree.paths())
            .map(|p| p.as_str().to_string())
            .collect();
        for p in &tpl.content_paths {
            prop_assert!(seen.contains(p.as_str()));
        }
        prop_assert!(tpl.contains_path(&spec.content_path()));
        let fast = FastExtractorF64::new(tpl);
        for p in &pages[8..] {
            let out = fast.extract(&p.page_id, p.html.as_bytes()).unwrap();
            prop_assert_eq!(&out.text, &p.gold.gold_text);
        }
    }
}
