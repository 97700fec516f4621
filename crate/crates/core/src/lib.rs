//! Template-based primary content extraction for news sites.
//!
//! A page is segmented into a tree of blocks. Blocks that recur across a
//! site's pages are labelled non-content ([`ce`]); the traversal paths of
//! the remaining blocks form a [`SiteTemplate`] that [`FastExtractor`] uses
//! to pull the article out of unseen pages without any cross-page work.

pub mod block;
pub mod ce;
pub mod config;
pub mod corpus;
pub mod decode;
pub mod error;
pub mod eval;
pub mod fast;
pub mod features;
pub mod scalar;
pub mod synth;
pub mod template;

pub use block::{
    atomic_partition, build_block_tree, build_block_tree_from_str, traversal_path, AtomicBlock,
    AtomicKind, BlockNode, BlockTag, BlockTree, NodeId, SegmentationConfig, StructuralCounts,
    TraversalPath,
};
pub use ce::{
    classify_blocks, classify_blocks_parallel, extract_content_ce, CeConfig, CorpusPage, Label,
    PageLabels, TrainingCorpus,
};
pub use config::{Settings, CONFIG_ENV};
pub use corpus::{load_corpus, CorpusManifest, LoadedCorpus};
pub use error::{Error, Result};
pub use eval::{block_f, f_measure, word_f, GoldAnnotation, Scores, SiteReport};
pub use fast::{extract_text, FastExtractor, PrimaryContent, RuleDepth};
pub use features::{cosine, featurize, is_similar, FeatureKey, FeatureVector, SimilarityConfig};
pub use scalar::Scalar;
pub use synth::{generate_pages, generate_site, SyntheticSiteSpec};
pub use template::{build_template, SiteTemplate, FORMAT_VERSION};

pub type CeConfigF64 = CeConfig<f64>;
pub type CeConfigF32 = CeConfig<f32>;
pub type SimilarityConfigF64 = SimilarityConfig<f64>;
pub type SimilarityConfigF32 = SimilarityConfig<f32>;
pub type SiteTemplateF64 = SiteTemplate<f64>;
pub type SiteTemplateF32 = SiteTemplate<f32>;
pub type FastExtractorF64 = FastExtractor<f64>;
pub type FastExtractorF32 = FastExtractor<f32>;
pub type SettingsF64 = Settings<f64>;
pub type SettingsF32 = Settings<f32>;
pub type ScoresF64 = Scores<f64>;
