use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("page is not valid UTF-8 and {0}")]
    Encoding(String),

    #[error("invalid configuration: {0}")]
    InvalidConfig(String),

    #[error("node {node} does not belong to tree `{page_id}` ({len} nodes)")]
    NodeNotInTree {
        node: usize,
        page_id: String,
        len: usize,
    },

    #[error("invalid traversal path `{0}`")]
    InvalidPath(String),

    #[error("corpus needs at least 2 pages, got {0}")]
    InsufficientCorpus(usize),

    #[error("corpus mixes sites: `{expected}` and `{found}`")]
    MixedSites { expected: String, found: String },

    #[error("every training block was labelled non-content; the template would be empty")]
    EmptyTemplate,

    #[error("unsupported template format version {found} (supported: {supported})")]
    UnsupportedVersion { found: u64, supported: u32 },

    #[error("malformed template: {0}")]
    TemplateFormat(String),

    #[error("segmentation config of the page does not match the template's config snapshot")]
    ConfigMismatch,

    #[error("invariant violated: {0}")]
    Invariant(String),

    #[error("gold text has no words; recall is undefined")]
    UndefinedRecall,

    #[error("no pages could be fetched ({0} failures)")]
    EmptyCorpus(usize),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
