//! Template-driven extraction of primary content from a single page.
//!
//! Only blocks whose traversal path is in the template's content-path set
//! are looked at. Inside each such block, sub-blocks off the path set are cut
//! out unless they lead to content further down. Surviving blocks are checked
//! against the template's decoys and emitted in document order.

use std::collections::BTreeSet;
use std::sync::Arc;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::block::{build_block_tree, BlockTree, NodeId, Segment, StructuralCounts, TraversalPath};
use crate::error::{Error, Result};
use crate::features::{is_similar, FeatureVector, SimilarityConfig};
use crate::scalar::Scalar;
use crate::template::SiteTemplate;

/// How deep the pruning rules reach below a selected block.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum RuleDepth {
    /// Apply the rules again inside every retained sub-block.
    #[default]
    Recursive,
    /// Apply the rules to direct sub-blocks only; retained sub-blocks are
    /// kept whole.
    DirectOnly,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ExtractedBlock {
    pub node: NodeId,
    pub path: TraversalPath,
    /// Retained text in source order.
    pub included_text: String,
    /// Roots of pruned sub-trees.
    pub excluded_subblocks: Vec<NodeId>,
    pub doc_order: usize,
    /// Structural markers of every retained node.
    pub counts: StructuralCounts,
}

impl ExtractedBlock {
    pub fn features<S: Scalar>(&self, cfg: &SimilarityConfig<S>) -> FeatureVector {
        cfg.featurize(&self.included_text, self.counts)
    }
}

/// Selects the blocks of `tree` that the template marks as content.
pub fn select_blocks<S: Scalar>(
    tree: &BlockTree,
    template: &SiteTemplate<S>,
    depth: RuleDepth,
) -> Result<Vec<ExtractedBlock>> {
    if *tree.config() != template.config_snapshot.segmentation {
        return Err(Error::ConfigMismatch);
    }
    Ok(select_with(tree, |p| template.contains_path(p), depth))
}

fn select_with(
    tree: &BlockTree,
    in_set: impl Fn(&str) -> bool,
    depth: RuleDepth,
) -> Vec<ExtractedBlock> {
    let nodes = tree.nodes();
    let paths = tree.paths();
    let in_p: Vec<bool> = paths.iter().map(|p| in_set(p.as_str())).collect();
    // Children always have larger ids, so one reverse sweep fills this.
    let mut leads_to_p = vec![false; nodes.len()];
    for id in (0..nodes.len()).rev() {
        if let Some(parent) = nodes[id].parent {
            if in_p[id] || leads_to_p[id] {
                leads_to_p[parent] = true;
            }
        }
    }

    let mut out = Vec::new();
    let mut stack = vec![0usize];
    while let Some(id) = stack.pop() {
        if in_p[id] {
            let mut walk = Walk {
                tree,
                in_p: &in_p,
                leads_to_p: &leads_to_p,
                pieces: Vec::new(),
                excluded: Vec::new(),
                counts: StructuralCounts::default(),
            };
            match depth {
                RuleDepth::Recursive => walk.pruned(id),
                RuleDepth::DirectOnly => walk.direct_only(id),
            }
            if walk.pieces.is_empty() && walk.counts.is_zero() {
                continue;
            }
            out.push(ExtractedBlock {
                node: id,
                path: paths[id].clone(),
                included_text: walk.pieces.join(" "),
                excluded_subblocks: walk.excluded,
                doc_order: nodes[id].doc_order,
                counts: walk.counts,
            });
        } else {
            stack.extend(nodes[id].children.iter().rev());
        }
    }
    out
}

struct Walk<'t> {
    tree: &'t BlockTree,
    in_p: &'t [bool],
    leads_to_p: &'t [bool],
    pieces: Vec<&'t str>,
    excluded: Vec<NodeId>,
    counts: StructuralCounts,
}

impl<'t> Walk<'t> {
    fn keeps(&self, child: NodeId) -> bool {
        self.in_p[child] || self.leads_to_p[child]
    }

    fn pruned(&mut self, id: NodeId) {
        let node = &self.tree.nodes()[id];
        self.counts += node.counts;
        for seg in &node.segments {
            match seg {
                Segment::Text(t) => self.pieces.push(t),
                Segment::Child(c) if self.keeps(*c) => self.pruned(*c),
                Segment::Child(c) => self.excluded.push(*c),
            }
        }
    }

    fn direct_only(&mut self, id: NodeId) {
        let node = &self.tree.nodes()[id];
        self.counts += node.counts;
        for seg in &node.segments {
            match seg {
                Segment::Text(t) => self.pieces.push(t),
                Segment::Child(c) if self.keeps(*c) => self.whole(*c),
                Segment::Child(c) => self.excluded.push(*c),
            }
        }
    }

    fn whole(&mut self, id: NodeId) {
        let node = &self.tree.nodes()[id];
        self.counts += node.counts;
        for seg in &node.segments {
            match seg {
                Segment::Text(t) => self.pieces.push(t),
                Segment::Child(c) => self.whole(*c),
            }
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct FilterOutcome {
    pub kept: Vec<ExtractedBlock>,
    pub dropped: Vec<ExtractedBlock>,
    /// Decoy comparisons performed.
    pub comparisons: u64,
}

/// Drops every block that resembles a decoy stored at its own path.
pub fn filter_decoys<S: Scalar>(
    blocks: Vec<ExtractedBlock>,
    template: &SiteTemplate<S>,
    cfg: &SimilarityConfig<S>,
) -> FilterOutcome {
    let mut kept = Vec::with_capacity(blocks.len());
    let mut dropped = Vec::new();
    let mut comparisons = 0;
    for block in blocks {
        let decoys = template.decoys_at(block.path.as_str());
        let mut is_decoy = false;
        if !decoys.is_empty() {
            let features = block.features(cfg);
            for d in decoys {
                comparisons += 1;
                if is_similar(&features, &d.features, cfg) {
                    is_decoy = true;
                    break;
                }
            }
        }
        if is_decoy {
            dropped.push(block);
        } else {
            kept.push(block);
        }
    }
    FilterOutcome {
        kept,
        dropped,
        comparisons,
    }
}

/// Work counters of one detection run.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct DetectionStats {
    /// Blocks produced by selection (before decoy filtering).
    pub extracted_blocks: usize,
    /// Decoys stored at the paths of the extracted blocks.
    pub decoys_at_touched_paths: usize,
    pub comparisons: u64,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PrimaryContent {
    pub blocks: Vec<ExtractedBlock>,
    pub dropped: Vec<ExtractedBlock>,
    /// Block texts in document order, separated by blank lines.
    pub text: String,
    pub elapsed: Duration,
    pub stats: DetectionStats,
}

/// Detection-phase pipeline bound to one template.
#[derive(Clone, Debug)]
pub struct FastExtractor<S> {
    template: SiteTemplate<S>,
    segmentation: Arc<crate::block::SegmentationConfig>,
    depth: RuleDepth,
}

impl<S: Scalar> FastExtractor<S> {
    pub fn new(template: SiteTemplate<S>) -> Self {
        Self::with_depth(template, RuleDepth::default())
    }

    pub fn with_depth(template: SiteTemplate<S>, depth: RuleDepth) -> Self {
        let segmentation = Arc::new(template.config_snapshot.segmentation.clone());
        Self {
            template,
            segmentation,
            depth,
        }
    }

    pub fn template(&self) -> &SiteTemplate<S> {
        &self.template
    }

    pub fn depth(&self) -> RuleDepth {
        self.depth
    }

    /// Segments raw bytes with the template's own segmentation settings.
    pub fn segment(&self, page_id: &str, html: &[u8]) -> Result<BlockTree> {
        build_block_tree(page_id, html, self.segmentation.clone())
    }

    pub fn extract(&self, page_id: &str, html: &[u8]) -> Result<PrimaryContent> {
        let start = Instant::now();
        let tree = self.segment(page_id, html)?;
        let mut content = self.extract_tree(&tree)?;
        content.elapsed = start.elapsed();
        Ok(content)
    }

    pub fn extract_tree(&self, tree: &BlockTree) -> Result<PrimaryContent> {
        let start = Instant::now();
        let selected = select_blocks(tree, &self.template, self.depth)?;
        let touched: BTreeSet<&str> = selected.iter().map(|b| b.path.as_str()).collect();
        let decoys_at_touched_paths = touched
            .iter()
            .map(|p| self.template.decoys_at(p).len())
            .sum();
        let extracted_blocks = selected.len();
        let outcome = filter_decoys(selected, &self.template, self.template.similarity());
        let text = outcome
            .kept
            .iter()
            .map(|b| b.included_text.as_str())
            .filter(|t| !t.is_empty())
            .collect::<Vec<_>>()
            .join("\n\n");
        Ok(PrimaryContent {
            blocks: outcome.kept,
            dropped: outcome.dropped,
            text,
            elapsed: start.elapsed(),
            stats: DetectionStats {
                extracted_blocks,
                decoys_at_touched_paths,
                comparisons: outcome.comparisons,
            },
        })
    }
}

/// One-shot detection: segment, select, filter, join.
pub fn extract_text<S: Scalar>(
    page_bytes: &[u8],
    template: &SiteTemplate<S>,
) -> Result<PrimaryContent> {
    FastExtractor::new(template.clone()).extract("page", page_bytes)
}

#[cfg(test)]
mod tests {
    use std::collections::BTreeMap;

    use super::*;
    use crate::block::{build_block_tree_from_str, SegmentationConfig};
    use crate::ce::CeConfig;
    use crate::template::{ConfigSnapshot, Decoy, FORMAT_VERSION};

    fn template(paths: &[&str]) -> SiteTemplate<f64> {
        SiteTemplate {
            site_id: "s".into(),
            format_version: FORMAT_VERSION,
            config_snapshot: ConfigSnapshot {
                segmentation: SegmentationConfig::default(),
                ce: CeConfig::default(),
            },
            built_from: 2,
            content_paths: paths.iter().map(|p| p.parse().unwrap()).collect(),
            decoys: BTreeMap::new(),
        }
    }

    fn tree(html: &str) -> BlockTree {
        build_block_tree_from_str("t", html, Arc::new(SegmentationConfig::default()))
    }

    fn texts(blocks: &[ExtractedBlock]) -> Vec<&str> {
        blocks.iter().map(|b| b.included_text.as_str()).collect()
    }

    #[test]
    fn rule_one_keeps_whole_block() {
        let t = tree("<div><p>a <span>b</span> c <span>d</span> e</p></div>");
        let tpl = template(&["HTML.BODY.DIV.P", "HTML.BODY.DIV.P.SPAN"]);
        let got = select_blocks(&t, &tpl, RuleDepth::Recursive).unwrap();
        assert_eq!(texts(&got), ["a b c d e"]);
        assert!(got[0].excluded_subblocks.is_empty());
    }

    #[test]
    fn leaf_child_off_path_is_pruned() {
        let t = tree("<p>keep <span>drop</span> this</p>");
        let tpl = template(&["HTML.BODY.P"]);
        let got = select_blocks(&t, &tpl, RuleDepth::Recursive).unwrap();
        assert_eq!(texts(&got), ["keep this"]);
        assert_eq!(got[0].excluded_subblocks, vec![3]);
    }

    #[test]
    fn off_path_child_leading_to_content_is_kept() {
        let t = tree("<div>before <section>mid <p>deep</p> tail</section> after</div>");
        let tpl = template(&["HTML.BODY.DIV", "HTML.BODY.DIV.SECTION.P"]);
        let got = select_blocks(&t, &tpl, RuleDepth::Recursive).unwrap();
        assert_eq!(texts(&got), ["before mid deep tail after"]);
    }

    #[test]
    fn recursion_prunes_inside_retained_subblocks() {
        let html = "<div>a <section>b <p>c</p> <ul>x</ul></section> d</div>";
        let tpl = template(&["HTML.BODY.DIV", "HTML.BODY.DIV.SECTION.P"]);
        let t = tree(html);
        let rec = select_blocks(&t, &tpl, RuleDepth::Recursive).unwrap();
        assert_eq!(texts(&rec), ["a b c d"]);
        let direct = select_blocks(&t, &tpl, RuleDepth::DirectOnly).unwrap();
        assert_eq!(texts(&direct), ["a b c x d"]);
    }

    #[test]
    fn candidates_are_maximal_and_ordered() {
        let t =
            tree("<div><p>one</p><div><p>two</p></div></div><p>three</p><div><p>four</p></div>");
        let tpl = template(&["HTML.BODY.DIV", "HTML.BODY.DIV.P", "HTML.BODY.P"]);
        let got = select_blocks(&t, &tpl, RuleDepth::Recursive).unwrap();
        // The inner div (HTML.BODY.DIV.DIV) is not in P and holds nothing in P.
        assert_eq!(texts(&got), ["one", "three", "four"]);
        assert!(got.windows(2).all(|w| w[0].doc_order < w[1].doc_order));
    }

    #[test]
    fn no_path_in_set_gives_nothing() {
        let tpl = template(&["HTML.BODY.ARTICLE"]);
        let t = tree("<div><p>text</p></div>");
        assert!(select_blocks(&t, &tpl, RuleDepth::Recursive)
            .unwrap()
            .is_empty());
        let out = extract_text(b"<div><p>text</p></div>", &tpl).unwrap();
        assert_eq!(out.text, "");
    }

    #[test]
    fn config_mismatch_is_reported() {
        let tpl = template(&["HTML.BODY.P"]);
        let cfg = SegmentationConfig::with_tags(["body", "p"]).unwrap();
        let t = build_block_tree_from_str("t", "<p>x</p>", Arc::new(cfg));
        assert!(matches!(
            select_blocks(&t, &tpl, RuleDepth::Recursive),
            Err(Error::ConfigMismatch)
        ));
    }

    #[test]
    fn decoys_filter_only_their_own_path() {
        let mut tpl = template(&["HTML.BODY.DIV.P", "HTML.BODY.P"]);
        let disclaimer = "views expressed are not those of the publisher";
        tpl.decoys.insert(
            "HTML.BODY.DIV.P".parse().unwrap(),
            vec![Decoy {
                features: crate::features::featurize(disclaimer, StructuralCounts::default()),
                text_digest: None,
            }],
        );
        let html =
            format!("<div><p>real article words</p><p>{disclaimer}</p></div><p>{disclaimer}</p>");
        let out = extract_text(html.as_bytes(), &tpl).unwrap();
        assert_eq!(texts(&out.blocks), ["real article words", disclaimer]);
        assert_eq!(out.dropped.len(), 1);
        assert_eq!(out.stats.extracted_blocks, 3);
        assert_eq!(out.stats.decoys_at_touched_paths, 1);
        assert_eq!(out.stats.comparisons, 2);
        assert_eq!(out.text, format!("real article words\n\n{disclaimer}"));
    }
}
