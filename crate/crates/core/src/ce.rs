//! ContentExtractor baseline.
//!
//! Every atomic block of every page is compared with the atomic blocks of all
//! other pages of the same site. A block whose look-alikes show up on more
//! than `frequency_fraction` of the other pages is boilerplate.

use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::block::{
    atomic_partition, build_block_tree, AtomicBlock, BlockTree, SegmentationConfig,
};
use crate::error::{Error, Result};
use crate::features::{is_similar, FeatureVector, SimilarityConfig};
use crate::scalar::Scalar;

pub const DEFAULT_FREQUENCY_FRACTION: f64 = 0.5;

/// One segmented page with its atomic blocks and their features.
#[derive(Clone, Debug)]
pub struct CorpusPage {
    pub page_id: String,
    pub tree: BlockTree,
    pub blocks: Vec<AtomicBlock>,
    pub features: Vec<FeatureVector>,
}

impl CorpusPage {
    pub fn from_tree<S: Scalar>(tree: BlockTree, similarity: &SimilarityConfig<S>) -> Self {
        let blocks = atomic_partition(&tree);
        let features = blocks
            .iter()
            .map(|b| similarity.featurize_block(b))
            .collect();
        Self {
            page_id: tree.page_id().to_string(),
            tree,
            blocks,
            features,
        }
    }

    pub fn from_html<S: Scalar>(
        page_id: impl Into<String>,
        html: &[u8],
        segmentation: Arc<SegmentationConfig>,
        similarity: &SimilarityConfig<S>,
    ) -> Result<Self> {
        let tree = build_block_tree(page_id, html, segmentation)?;
        Ok(Self::from_tree(tree, similarity))
    }
}

/// Pages of a single site used for CE classification or template training.
#[derive(Clone, Debug)]
pub struct TrainingCorpus {
    pub site_id: String,
    pub pages: Vec<CorpusPage>,
}

impl TrainingCorpus {
    pub fn new(site_id: impl Into<String>, pages: Vec<CorpusPage>) -> Result<Self> {
        if pages.len() < 2 {
            return Err(Error::InsufficientCorpus(pages.len()));
        }
        let first = pages[0].tree.config();
        if pages.iter().any(|p| p.tree.config() != first) {
            return Err(Error::ConfigMismatch);
        }
        Ok(Self {
            site_id: site_id.into(),
            pages,
        })
    }

    pub fn from_html<S, I, B>(
        site_id: impl Into<String>,
        pages: I,
        segmentation: Arc<SegmentationConfig>,
        similarity: &SimilarityConfig<S>,
    ) -> Result<Self>
    where
        S: Scalar,
        I: IntoIterator<Item = (String, B)>,
        B: AsRef<[u8]>,
    {
        let pages = pages
            .into_iter()
            .map(|(id, html)| {
                CorpusPage::from_html(id, html.as_ref(), segmentation.clone(), similarity)
            })
            .collect::<Result<Vec<_>>>()?;
        Self::new(site_id, pages)
    }

    pub fn segmentation(&self) -> &SegmentationConfig {
        self.pages[0].tree.config()
    }

    pub fn len(&self) -> usize {
        self.pages.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pages.is_empty()
    }

    pub fn page(&self, page_id: &str) -> Option<&CorpusPage> {
        self.pages.iter().find(|p| p.page_id == page_id)
    }

    fn feature_sets(&self) -> Vec<&[FeatureVector]> {
        self.pages.iter().map(|p| p.features.as_slice()).collect()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "S: Scalar"))]
pub struct CeConfig<S> {
    pub similarity: SimilarityConfig<S>,
    /// A block is non-content when similar blocks occur on more than this
    /// fraction of the other pages.
    pub frequency_fraction: S,
}

impl<S: Scalar> Default for CeConfig<S> {
    fn default() -> Self {
        Self {
            similarity: SimilarityConfig::default(),
            frequency_fraction: S::lit(DEFAULT_FREQUENCY_FRACTION),
        }
    }
}

impl<S: Scalar> CeConfig<S> {
    pub fn validate(&self) -> Result<()> {
        self.similarity.validate()?;
        let f = self.frequency_fraction;
        if !(f > S::zero() && f <= S::one()) {
            return Err(Error::InvalidConfig(format!(
                "frequency fraction {f} is outside (0, 1]"
            )));
        }
        Ok(())
    }

    /// `support` out of `other_pages` marks a block as boilerplate.
    pub fn is_non_content(&self, support: usize, other_pages: usize) -> bool {
        S::from_count(support as u64) > self.frequency_fraction * S::from_count(other_pages as u64)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Label {
    Content,
    NonContent,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockLabel {
    /// Index into the page's atomic blocks.
    pub block: usize,
    pub label: Label,
    /// Number of other pages holding a block similar to this one.
    pub support: usize,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PageLabels {
    pub page_id: String,
    pub labels: Vec<BlockLabel>,
    /// Pairwise cosine evaluations spent on this page.
    pub comparisons: u64,
}

impl PageLabels {
    pub fn content_blocks(&self) -> impl Iterator<Item = usize> + '_ {
        self.labels
            .iter()
            .filter(|l| l.label == Label::Content)
            .map(|l| l.block)
    }
}

/// Labels one page's blocks against the feature sets of the other pages.
///
/// A page contributes at most one to a block's support, so the scan of a
/// page stops at its first similar block.
pub fn label_page<S: Scalar>(
    page_id: &str,
    features: &[FeatureVector],
    others: &[&[FeatureVector]],
    cfg: &CeConfig<S>,
) -> PageLabels {
    let mut comparisons = 0u64;
    let labels = features
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let mut support = 0;
            for other in others {
                for g in other.iter() {
                    comparisons += 1;
                    if is_similar(f, g, &cfg.similarity) {
                        support += 1;
                        break;
                    }
                }
            }
            let label = if cfg.is_non_content(support, others.len()) {
                Label::NonContent
            } else {
                Label::Content
            };
            BlockLabel {
                block: i,
                label,
                support,
            }
        })
        .collect();
    PageLabels {
        page_id: page_id.to_string(),
        labels,
        comparisons,
    }
}

fn others_of<'a>(sets: &[&'a [FeatureVector]], skip: usize) -> Vec<&'a [FeatureVector]> {
    sets.iter()
        .enumerate()
        .filter(|&(j, _)| j != skip)
        .map(|(_, s)| *s)
        .collect()
}

/// Labels every atomic block of every page in the corpus.
pub fn classify_blocks<S: Scalar>(
    corpus: &TrainingCorpus,
    cfg: &CeConfig<S>,
) -> Result<Vec<PageLabels>> {
    cfg.validate()?;
    check_corpus(corpus)?;
    let sets = corpus.feature_sets();
    Ok(corpus
        .pages
        .iter()
        .enumerate()
        .map(|(i, page)| label_page(&page.page_id, &page.features, &others_of(&sets, i), cfg))
        .collect())
}

/// Same result as [`classify_blocks`], computed with one task per page.
pub fn classify_blocks_parallel<S: Scalar>(
    corpus: &TrainingCorpus,
    cfg: &CeConfig<S>,
) -> Result<Vec<PageLabels>> {
    cfg.validate()?;
    check_corpus(corpus)?;
    let sets = corpus.feature_sets();
    Ok(corpus
        .pages
        .par_iter()
        .enumerate()
        .map(|(i, page)| label_page(&page.page_id, &page.features, &others_of(&sets, i), cfg))
        .collect())
}

fn check_corpus(corpus: &TrainingCorpus) -> Result<()> {
    if corpus.pages.len() < 2 {
        return Err(Error::InsufficientCorpus(corpus.pages.len()));
    }
    Ok(())
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct CeExtraction {
    pub blocks: Vec<AtomicBlock>,
    pub text: String,
}

/// Emits a page's content blocks in partition order (sub-blocks before the
/// residual of their parent), joined by newlines.
pub fn extract_content_ce(page: &CorpusPage, labels: &PageLabels) -> CeExtraction {
    let blocks: Vec<AtomicBlock> = labels
        .content_blocks()
        .map(|i| page.blocks[i].clone())
        .collect();
    let text = blocks
        .iter()
        .map(|b| b.text.as_str())
        .filter(|t| !t.is_empty())
        .collect::<Vec<_>>()
        .join("\n");
    CeExtraction { blocks, text }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CeStats {
    /// Mean number of stored blocks each page's blocks are compared against.
    pub num_block_temp: f64,
    /// Mean number of atomic blocks per page.
    pub num_block: f64,
}

pub fn ce_stats(corpus: &TrainingCorpus) -> CeStats {
    let counts: Vec<usize> = corpus.pages.iter().map(|p| p.blocks.len()).collect();
    let n = counts.len().max(1) as f64;
    let total: usize = counts.iter().sum();
    CeStats {
        num_block_temp: counts.iter().map(|c| (total - c) as f64).sum::<f64>() / n,
        num_block: total as f64 / n,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(pages: &[&str]) -> TrainingCorpus {
        TrainingCorpus::from_html(
            "site",
            pages
                .iter()
                .enumerate()
                .map(|(i, h)| (format!("p{i}"), h.as_bytes().to_vec())),
            Arc::new(SegmentationConfig::default()),
            &SimilarityConfig::<f64>::default(),
        )
        .unwrap()
    }

    fn page(article: &str) -> String {
        format!("<ul><li>Home</li><li>World</li></ul><div><p>{article}</p></div>")
    }

    #[test]
    fn boilerplate_vs_unique() {
        let articles = [
            "alpha beta gamma delta",
            "epsilon zeta eta theta",
            "iota kappa lambda mu",
            "nu xi omicron pi",
        ];
        let pages: Vec<String> = articles.iter().map(|a| page(a)).collect();
        let refs: Vec<&str> = pages.iter().map(String::as_str).collect();
        let c = corpus(&refs);
        let labels = classify_blocks(&c, &CeConfig::<f64>::default()).unwrap();
        for (page, pl) in c.pages.iter().zip(&labels) {
            for l in &pl.labels {
                let text = &page.blocks[l.block].text;
                if text == "Home" || text == "World" {
                    assert_eq!((l.label, l.support), (Label::NonContent, 3));
                } else {
                    assert_eq!((l.label, l.support), (Label::Content, 0), "{text}");
                }
            }
            let out = extract_content_ce(page, pl);
            assert_eq!(out.blocks.len(), 1);
        }
        assert_eq!(
            classify_blocks_parallel(&c, &CeConfig::<f64>::default()).unwrap(),
            labels
        );
    }

    #[test]
    fn half_support_is_still_content() {
        // Block "shared words here" appears on 2 of the 4 other pages.
        let pages = [
            page("shared words here"),
            page("shared words here"),
            page("shared words here"),
            page("unrelated one"),
            page("unrelated two"),
        ];
        let refs: Vec<&str> = pages.iter().map(String::as_str).collect();
        let c = corpus(&refs);
        let labels = classify_blocks(&c, &CeConfig::<f64>::default()).unwrap();
        let shared = labels[0]
            .labels
            .iter()
            .find(|l| c.pages[0].blocks[l.block].text == "shared words here")
            .unwrap();
        assert_eq!(shared.support, 2);
        assert_eq!(shared.label, Label::Content);
    }

    #[test]
    fn insufficient_corpus() {
        let p = CorpusPage::from_html(
            "only",
            b"<p>x</p>",
            Arc::new(SegmentationConfig::default()),
            &SimilarityConfig::<f64>::default(),
        )
        .unwrap();
        assert!(matches!(
            TrainingCorpus::new("s", vec![p]),
            Err(Error::InsufficientCorpus(1))
        ));
    }

    #[test]
    fn frequency_fraction_bounds() {
        let mut cfg = CeConfig::<f64> {
            frequency_fraction: 0.0,
            ..Default::default()
        };
        assert!(cfg.validate().is_err());
        cfg.frequency_fraction = 1.0;
        assert!(cfg.validate().is_ok());
        assert!(!cfg.is_non_content(9, 9));
    }

    #[test]
    fn stats_of_identical_single_block_pages() {
        let c = corpus(&["<p>same</p>", "<p>same</p>", "<p>same</p>"]);
        let s = ce_stats(&c);
        assert_eq!(s.num_block, 1.0);
        assert_eq!(s.num_block_temp, 2.0);
    }

    #[test]
    fn stats_mean_of_known_counts() {
        let c = corpus(&[
            "<p>a</p>",
            "<p>a</p><p>b</p>",
            "<p>a</p><p>b</p><p>c</p><p>d</p>",
        ]);
        let counts: Vec<usize> = c.pages.iter().map(|p| p.blocks.len()).collect();
        assert_eq!(counts, [1, 2, 4]);
        let s = ce_stats(&c);
        assert!((s.num_block - 7.0 / 3.0).abs() < 1e-12);
        // Stored blocks per page: 6, 5, 3.
        assert!((s.num_block_temp - 14.0 / 3.0).abs() < 1e-12);
    }
}
