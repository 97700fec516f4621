//! Site templates: the content-path set learned from a training corpus plus
//! exemplars of boilerplate blocks that share those paths.

use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::block::{SegmentationConfig, TraversalPath};
use crate::ce::{classify_blocks, CeConfig, Label, PageLabels, TrainingCorpus};
use crate::error::{Error, Result};
use crate::features::{is_similar, FeatureVector, SimilarityConfig};
use crate::scalar::Scalar;

pub const FORMAT_VERSION: u32 = 1;

/// Stored non-content exemplar.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Decoy {
    pub features: FeatureVector,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text_digest: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "S: Scalar"))]
pub struct ConfigSnapshot<S> {
    pub segmentation: SegmentationConfig,
    pub ce: CeConfig<S>,
}

impl<S: Scalar> ConfigSnapshot<S> {
    pub fn similarity(&self) -> &SimilarityConfig<S> {
        &self.ce.similarity
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, bound(deserialize = "S: Scalar"))]
pub struct SiteTemplate<S> {
    pub site_id: String,
    pub format_version: u32,
    pub config_snapshot: ConfigSnapshot<S>,
    /// Number of training pages.
    pub built_from: usize,
    pub content_paths: BTreeSet<TraversalPath>,
    pub decoys: BTreeMap<TraversalPath, Vec<Decoy>>,
}

impl<S: Scalar> SiteTemplate<S> {
    pub fn contains_path(&self, path: &str) -> bool {
        self.content_paths.contains(path)
    }

    pub fn decoys_at(&self, path: &str) -> &[Decoy] {
        self.decoys.get(path).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn decoy_count(&self) -> usize {
        self.decoys.values().map(Vec::len).sum()
    }

    pub fn similarity(&self) -> &SimilarityConfig<S> {
        self.config_snapshot.similarity()
    }

    pub fn validate(&self) -> Result<()> {
        if self.content_paths.is_empty() {
            return Err(Error::TemplateFormat("`content_paths` is empty".into()));
        }
        if let Some(p) = self
            .decoys
            .keys()
            .find(|p| !self.content_paths.contains(*p))
        {
            return Err(Error::TemplateFormat(format!(
                "`decoys` has path `{p}` that is not in `content_paths`"
            )));
        }
        self.config_snapshot.segmentation.validate()?;
        self.config_snapshot.ce.validate()
    }

    /// Canonical, pretty-printed JSON. Identical templates always produce
    /// identical bytes.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = serde_json::to_vec_pretty(self).expect("template serializes");
        out.push(b'\n');
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        let value: serde_json::Value =
            serde_json::from_slice(bytes).map_err(|e| Error::TemplateFormat(e.to_string()))?;
        let version = value
            .get("format_version")
            .ok_or_else(|| Error::TemplateFormat("missing field `format_version`".into()))?;
        let version = version.as_u64().ok_or_else(|| {
            Error::TemplateFormat(format!("`format_version`: expected integer, got {version}"))
        })?;
        if version != FORMAT_VERSION as u64 {
            return Err(Error::UnsupportedVersion {
                found: version,
                supported: FORMAT_VERSION,
            });
        }
        let template: Self = serde_path_to_error::deserialize(value).map_err(|e| {
            let path = e.path().to_string();
            if path == "." {
                Error::TemplateFormat(e.into_inner().to_string())
            } else {
                Error::TemplateFormat(format!("`{path}`: {}", e.into_inner()))
            }
        })?;
        template.validate()?;
        Ok(template)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_bytes()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_bytes(&bytes)
    }
}

/// Runs CE over the corpus and derives the template from its labels.
pub fn build_template<S: Scalar>(
    corpus: &TrainingCorpus,
    cfg: &CeConfig<S>,
) -> Result<SiteTemplate<S>> {
    let labels = classify_blocks(corpus, cfg)?;
    build_template_from_labels(corpus, &labels, cfg)
}

pub fn build_template_from_labels<S: Scalar>(
    corpus: &TrainingCorpus,
    labels: &[PageLabels],
    cfg: &CeConfig<S>,
) -> Result<SiteTemplate<S>> {
    if corpus.pages.len() < 2 {
        return Err(Error::InsufficientCorpus(corpus.pages.len()));
    }
    let mut content_paths = BTreeSet::new();
    for (page, page_labels) in corpus.pages.iter().zip(labels) {
        for i in page_labels.content_blocks() {
            content_paths.insert(page.blocks[i].path.clone());
        }
    }
    if content_paths.is_empty() {
        return Err(Error::EmptyTemplate);
    }

    let mut decoys: BTreeMap<TraversalPath, Vec<Decoy>> = BTreeMap::new();
    for (page, page_labels) in corpus.pages.iter().zip(labels) {
        for l in &page_labels.labels {
            let block = &page.blocks[l.block];
            if l.label != Label::NonContent || !content_paths.contains(&block.path) {
                continue;
            }
            let features = &page.features[l.block];
            let stored = decoys.entry(block.path.clone()).or_default();
            if stored
                .iter()
                .any(|d| is_similar(&d.features, features, &cfg.similarity))
            {
                continue;
            }
            stored.push(Decoy {
                features: features.clone(),
                text_digest: Some(text_digest(&block.text)),
            });
        }
    }

    Ok(SiteTemplate {
        site_id: corpus.site_id.clone(),
        format_version: FORMAT_VERSION,
        config_snapshot: ConfigSnapshot {
            segmentation: corpus.segmentation().clone(),
            ce: *cfg,
        },
        built_from: corpus.pages.len(),
        content_paths,
        decoys,
    })
}

/// Short SHA-256 fingerprint of a block's text.
pub fn text_digest(text: &str) -> String {
    let digest = Sha256::digest(text.as_bytes());
    hex::encode(&digest[..8])
}
