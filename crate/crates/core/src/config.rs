//! Run-time settings shared by the library entry points and the CLI.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::block::SegmentationConfig;
use crate::ce::CeConfig;
use crate::error::{Error, Result};
use crate::fast::RuleDepth;
use crate::scalar::Scalar;

/// Environment variable naming the default settings file.
pub const CONFIG_ENV: &str = "FASTCE_CONFIG";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, bound(deserialize = "S: Scalar"))]
pub struct Settings<S: Scalar> {
    pub segmentation: SegmentationConfig,
    pub ce: CeConfig<S>,
    pub rule_depth: RuleDepth,
}

impl<S: Scalar> Default for Settings<S> {
    fn default() -> Self {
        Self {
            segmentation: SegmentationConfig::default(),
            ce: CeConfig::default(),
            rule_depth: RuleDepth::default(),
        }
    }
}

impl<S: Scalar> Settings<S> {
    pub fn validate(&self) -> Result<()> {
        self.segmentation.validate()?;
        self.ce.validate()
    }

    pub fn from_json(bytes: &[u8]) -> Result<Self> {
        let settings: Self =
            serde_json::from_slice(bytes).map_err(|e| Error::InvalidConfig(e.to_string()))?;
        settings.validate()?;
        Ok(settings)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&bytes).map_err(|e| match e {
            Error::InvalidConfig(msg) => Error::InvalidConfig(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    /// Loads `path`, else the file named by [`CONFIG_ENV`], else defaults.
    pub fn resolve(path: Option<&Path>) -> Result<Self> {
        if let Some(p) = path {
            return Self::load(p);
        }
        match std::env::var_os(CONFIG_ENV) {
            Some(p) if !p.is_empty() => Self::load(p),
            _ => Ok(Self::default()),
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("settings serialize")
    }
}
