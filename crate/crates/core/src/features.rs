//! Sparse block features and cosine similarity.

use std::cmp::Ordering;
use std::collections::BTreeMap;

use serde::de::Error as _;
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::block::{AtomicBlock, StructuralCounts};
use crate::error::{Error, Result};
use crate::scalar::Scalar;

pub const DEFAULT_THRESHOLD: f64 = 0.9;

/// A feature dimension. Structural markers sort before terms and can never
/// collide with them.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum FeatureKey {
    Image,
    Script,
    Hyperlink,
    Term(String),
}

impl FeatureKey {
    const IMAGE: &'static str = "@image";
    const SCRIPT: &'static str = "@script";
    const HYPERLINK: &'static str = "@hyperlink";

    pub fn term(t: impl Into<String>) -> Self {
        FeatureKey::Term(t.into())
    }

    fn encode(&self) -> &str {
        match self {
            FeatureKey::Image => Self::IMAGE,
            FeatureKey::Script => Self::SCRIPT,
            FeatureKey::Hyperlink => Self::HYPERLINK,
            FeatureKey::Term(t) => t,
        }
    }

    fn decode(s: &str) -> Result<Self> {
        match s {
            Self::IMAGE => Ok(FeatureKey::Image),
            Self::SCRIPT => Ok(FeatureKey::Script),
            Self::HYPERLINK => Ok(FeatureKey::Hyperlink),
            _ if s.is_empty() || s.starts_with('@') => {
                Err(Error::TemplateFormat(format!("unknown feature key `{s}`")))
            }
            _ => Ok(FeatureKey::Term(s.to_string())),
        }
    }
}

/// Sparse vector of non-negative counts. Keys are unique and sorted; zero
/// counts are never stored.
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct FeatureVector {
    entries: Vec<(FeatureKey, u32)>,
    norm_sq: u128,
}

impl FeatureVector {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a vector, summing duplicate keys and dropping zeros.
    pub fn from_counts<I, K>(counts: I) -> Self
    where
        I: IntoIterator<Item = (K, u32)>,
        K: Into<FeatureKey>,
    {
        let mut map: BTreeMap<FeatureKey, u32> = BTreeMap::new();
        for (k, v) in counts {
            if v > 0 {
                *map.entry(k.into()).or_default() += v;
            }
        }
        let entries: Vec<_> = map.into_iter().collect();
        let norm_sq = entries.iter().map(|(_, v)| (*v as u128).pow(2)).sum();
        Self { entries, norm_sq }
    }

    pub fn get(&self, key: &FeatureKey) -> u32 {
        self.entries
            .binary_search_by(|(k, _)| k.cmp(key))
            .map(|i| self.entries[i].1)
            .unwrap_or(0)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&FeatureKey, u32)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn norm_sq(&self) -> u128 {
        self.norm_sq
    }

    pub fn dot(&self, other: &FeatureVector) -> u128 {
        let (mut i, mut j, mut dot) = (0, 0, 0u128);
        let (a, b) = (&self.entries, &other.entries);
        while i < a.len() && j < b.len() {
            match a[i].0.cmp(&b[j].0) {
                Ordering::Less => i += 1,
                Ordering::Greater => j += 1,
                Ordering::Equal => {
                    dot += a[i].1 as u128 * b[j].1 as u128;
                    i += 1;
                    j += 1;
                }
            }
        }
        dot
    }
}

impl From<&str> for FeatureKey {
    fn from(s: &str) -> Self {
        FeatureKey::Term(s.to_string())
    }
}

impl From<String> for FeatureKey {
    fn from(s: String) -> Self {
        FeatureKey::Term(s)
    }
}

impl Serialize for FeatureVector {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        let sorted: BTreeMap<&str, u32> = self.iter().map(|(k, v)| (k.encode(), v)).collect();
        sorted.serialize(s)
    }
}

impl<'de> Deserialize<'de> for FeatureVector {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let raw = BTreeMap::<String, u32>::deserialize(d)?;
        let mut pairs = Vec::with_capacity(raw.len());
        for (k, v) in raw {
            if v == 0 {
                return Err(D::Error::custom(format!("feature `{k}` has zero count")));
            }
            pairs.push((FeatureKey::decode(&k).map_err(D::Error::custom)?, v));
        }
        Ok(FeatureVector::from_counts(pairs))
    }
}

/// Splits text into case-folded terms on every non-alphanumeric character.
pub fn tokenize(text: &str) -> impl Iterator<Item = String> + '_ {
    text.split(|c: char| !c.is_alphanumeric())
        .filter(|w| !w.is_empty())
        .map(str::to_lowercase)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "S: Scalar"))]
pub struct SimilarityConfig<S> {
    /// Blocks are similar when their cosine is strictly greater than this.
    pub threshold: S,
    /// Multiplier applied to image/script/hyperlink counts.
    pub structural_weight: u32,
}

impl<S: Scalar> Default for SimilarityConfig<S> {
    fn default() -> Self {
        Self {
            threshold: S::lit(DEFAULT_THRESHOLD),
            structural_weight: 1,
        }
    }
}

impl<S: Scalar> SimilarityConfig<S> {
    pub fn with_threshold(threshold: S) -> Result<Self> {
        let cfg = Self {
            threshold,
            ..Self::default()
        };
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.threshold >= S::zero() && self.threshold <= S::one()) {
            return Err(Error::InvalidConfig(format!(
                "similarity threshold {} is outside [0, 1]",
                self.threshold
            )));
        }
        Ok(())
    }

    pub fn featurize(&self, text: &str, counts: StructuralCounts) -> FeatureVector {
        featurize_weighted(text, counts, self.structural_weight)
    }

    pub fn featurize_block(&self, block: &AtomicBlock) -> FeatureVector {
        self.featurize(&block.text, block.counts)
    }
}

/// Term frequencies of `text` plus raw structural counts.
pub fn featurize(text: &str, counts: StructuralCounts) -> FeatureVector {
    featurize_weighted(text, counts, 1)
}

pub fn featurize_weighted(text: &str, counts: StructuralCounts, weight: u32) -> FeatureVector {
    let structural = [
        (FeatureKey::Image, counts.images * weight),
        (FeatureKey::Script, counts.scripts * weight),
        (FeatureKey::Hyperlink, counts.anchors * weight),
    ];
    FeatureVector::from_counts(
        structural
            .into_iter()
            .chain(tokenize(text).map(|t| (FeatureKey::Term(t), 1))),
    )
}

/// Cosine of the angle between two count vectors; 0 when either is zero.
pub fn cosine<S: Scalar>(a: &FeatureVector, b: &FeatureVector) -> S {
    if a.norm_sq == 0 || b.norm_sq == 0 {
        return S::zero();
    }
    let dot = a.dot(b);
    if dot == 0 {
        return S::zero();
    }
    let denom_sq = S::from_u128(a.norm_sq * b.norm_sq)
        .unwrap_or_else(|| S::from_u128(a.norm_sq).unwrap() * S::from_u128(b.norm_sq).unwrap());
    let c = S::from_u128(dot).unwrap() / denom_sq.sqrt();
    c.min(S::one())
}

pub fn is_similar<S: Scalar>(
    a: &FeatureVector,
    b: &FeatureVector,
    cfg: &SimilarityConfig<S>,
) -> bool {
    cosine::<S>(a, b) > cfg.threshold
}
