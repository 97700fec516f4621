//! On-disk corpora: a manifest, one raw file per page and optional gold
//! annotations.
//!
//! ```text
//! <dir>/manifest.json
//! <dir>/pages/<id>.html
//! <dir>/gold/<id>.json
//! ```

use std::collections::HashSet;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::block::SegmentationConfig;
use crate::ce::{CorpusPage, TrainingCorpus};
use crate::error::{Error, Result};
use crate::eval::{BenchPage, GoldAnnotation};
use crate::features::SimilarityConfig;
use crate::scalar::Scalar;

pub const MANIFEST_FILE: &str = "manifest.json";
pub const PAGES_DIR: &str = "pages";
pub const GOLD_DIR: &str = "gold";

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Role {
    Train,
    Test,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct PageEntry {
    pub id: String,
    /// Page file, relative to the corpus directory.
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub url: Option<String>,
    /// RFC 3339 fetch time; absent for pages ingested from local files.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub fetched_at: Option<String>,
    pub role: Role,
    /// Gold annotation file, relative to the corpus directory.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FetchFailure {
    pub url: String,
    pub error: String,
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CorpusManifest {
    pub site_id: String,
    pub pages: Vec<PageEntry>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub failures: Vec<FetchFailure>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub encoding_notes: Option<String>,
}

impl CorpusManifest {
    pub fn save(&self, dir: &Path) -> Result<()> {
        let path = dir.join(MANIFEST_FILE);
        let mut bytes = serde_json::to_vec_pretty(self).expect("manifest serializes");
        bytes.push(b'\n');
        std::fs::write(&path, bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let path = dir.join(MANIFEST_FILE);
        let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))
    }
}

#[derive(Clone, Debug)]
pub struct LoadedPage {
    pub entry: PageEntry,
    pub html: Vec<u8>,
    pub gold: Option<GoldAnnotation>,
}

#[derive(Clone, Debug)]
pub struct LoadedCorpus {
    pub root: PathBuf,
    pub manifest: CorpusManifest,
    pub pages: Vec<LoadedPage>,
}

/// Reads a corpus directory, checking that every listed file exists and that
/// page URLs, when present, all belong to one host.
pub fn load_corpus(dir: impl AsRef<Path>) -> Result<LoadedCorpus> {
    let root = dir.as_ref().to_path_buf();
    let manifest = CorpusManifest::load(&root)?;
    let mut seen = HashSet::new();
    let mut host: Option<String> = None;
    let mut pages = Vec::with_capacity(manifest.pages.len());
    for entry in &manifest.pages {
        if !seen.insert(entry.id.as_str()) {
            return Err(Error::Invariant(format!(
                "duplicate page id `{}` in manifest",
                entry.id
            )));
        }
        if let Some(h) = entry.url.as_deref().and_then(url_host) {
            match &host {
                None => host = Some(h.to_string()),
                Some(expected) if expected != h => {
                    return Err(Error::MixedSites {
                        expected: expected.clone(),
                        found: h.to_string(),
                    })
                }
                Some(_) => {}
            }
        }
        let path = root.join(&entry.path);
        let html = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
        let gold = match &entry.gold {
            Some(g) => {
                let path = root.join(g);
                let bytes = std::fs::read(&path).map_err(|e| Error::io(&path, e))?;
                Some(serde_json::from_slice(&bytes).map_err(|e| Error::json(&path, e))?)
            }
            None => None,
        };
        pages.push(LoadedPage {
            entry: entry.clone(),
            html,
            gold,
        });
    }
    Ok(LoadedCorpus {
        root,
        manifest,
        pages,
    })
}

impl LoadedCorpus {
    pub fn site_id(&self) -> &str {
        &self.manifest.site_id
    }

    pub fn with_role(&self, role: Role) -> impl Iterator<Item = &LoadedPage> {
        self.pages.iter().filter(move |p| p.entry.role == role)
    }

    pub fn page(&self, id: &str) -> Option<&LoadedPage> {
        self.pages.iter().find(|p| p.entry.id == id)
    }

    /// Segmented training pages (all pages when none is marked `train`).
    pub fn training_corpus<S: Scalar>(
        &self,
        segmentation: Arc<SegmentationConfig>,
        similarity: &SimilarityConfig<S>,
    ) -> Result<TrainingCorpus> {
        let mut train: Vec<&LoadedPage> = self.with_role(Role::Train).collect();
        if train.is_empty() {
            train = self.pages.iter().collect();
        }
        self.segment(&train, segmentation, similarity)
    }

    /// Every page of the corpus, segmented.
    pub fn full_corpus<S: Scalar>(
        &self,
        segmentation: Arc<SegmentationConfig>,
        similarity: &SimilarityConfig<S>,
    ) -> Result<TrainingCorpus> {
        let all: Vec<&LoadedPage> = self.pages.iter().collect();
        self.segment(&all, segmentation, similarity)
    }

    fn segment<S: Scalar>(
        &self,
        pages: &[&LoadedPage],
        segmentation: Arc<SegmentationConfig>,
        similarity: &SimilarityConfig<S>,
    ) -> Result<TrainingCorpus> {
        let pages = pages
            .iter()
            .map(|p| CorpusPage::from_html(&p.entry.id, &p.html, segmentation.clone(), similarity))
            .collect::<Result<Vec<_>>>()?;
        TrainingCorpus::new(self.site_id(), pages)
    }

    pub fn bench_pages(&self) -> Vec<BenchPage> {
        self.pages
            .iter()
            .map(|p| BenchPage {
                page_id: p.entry.id.clone(),
                html: p.html.clone(),
                gold: p.gold.clone(),
            })
            .collect()
    }
}

/// Host part of an `http(s)://host[:port]/...` URL.
pub fn url_host(url: &str) -> Option<&str> {
    let rest = url
        .strip_prefix("http://")
        .or_else(|| url.strip_prefix("https://"))?;
    let end = rest.find(['/', ':', '?', '#']).unwrap_or(rest.len());
    Some(&rest[..end]).filter(|h| !h.is_empty())
}

#[derive(Clone, Debug)]
pub struct FetchOptions {
    pub site_id: Option<String>,
    /// Number of leading pages marked `train`; defaults to two thirds.
    pub train_count: Option<usize>,
    pub timeout: Duration,
    pub max_in_flight: usize,
}

impl Default for FetchOptions {
    fn default() -> Self {
        Self {
            site_id: None,
            train_count: None,
            timeout: Duration::from_secs(30),
            max_in_flight: 4,
        }
    }
}

struct Fetched {
    body: Vec<u8>,
    timestamp: Option<String>,
}

fn fetch_one(agent: &ureq::Agent, url: &str) -> std::result::Result<Fetched, String> {
    if let Some(path) = url.strip_prefix("file://") {
        let body = std::fs::read(path).map_err(|e| format!("{path}: {e}"))?;
        return Ok(Fetched {
            body,
            timestamp: None,
        });
    }
    let mut response = agent.get(url).call().map_err(|e| e.to_string())?;
    let body = response
        .body_mut()
        .with_config()
        .limit(64 * 1024 * 1024)
        .read_to_vec()
        .map_err(|e| e.to_string())?;
    Ok(Fetched {
        body,
        timestamp: Some(chrono::Utc::now().to_rfc3339_opts(chrono::SecondsFormat::Secs, true)),
    })
}

/// Downloads (or copies, for `file://` URLs) each distinct URL into
/// `dest/pages` and writes a manifest. Individual failures are recorded, not
/// fatal.
pub fn fetch_pages(
    urls: &[String],
    dest: impl AsRef<Path>,
    opts: &FetchOptions,
) -> Result<CorpusManifest> {
    let dest = dest.as_ref();
    let mut seen = HashSet::new();
    let unique: Vec<&str> = urls
        .iter()
        .map(|u| u.trim())
        .filter(|u| !u.is_empty() && seen.insert(*u))
        .collect();

    let agent: ureq::Agent = ureq::Agent::config_builder()
        .timeout_global(Some(opts.timeout))
        .build()
        .into();
    let results: Vec<Mutex<Option<std::result::Result<Fetched, String>>>> =
        unique.iter().map(|_| Mutex::new(None)).collect();
    let next = AtomicUsize::new(0);
    std::thread::scope(|s| {
        for _ in 0..opts.max_in_flight.clamp(1, unique.len().max(1)) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                let Some(url) = unique.get(i) else { break };
                let r = fetch_one(&agent, url);
                *results[i].lock().unwrap() = Some(r);
            });
        }
    });

    let pages_dir = dest.join(PAGES_DIR);
    std::fs::create_dir_all(&pages_dir).map_err(|e| Error::io(&pages_dir, e))?;
    let mut fetched = Vec::new();
    let mut failures = Vec::new();
    for (url, slot) in unique.iter().zip(results) {
        match slot.into_inner().unwrap().expect("every url visited") {
            Ok(f) => fetched.push((url, f)),
            Err(error) => failures.push(FetchFailure {
                url: url.to_string(),
                error,
            }),
        }
    }
    if fetched.is_empty() {
        return Err(Error::EmptyCorpus(failures.len()));
    }

    let train_count = opts
        .train_count
        .unwrap_or_else(|| (fetched.len() * 2).div_ceil(3))
        .min(fetched.len());
    let mut pages = Vec::with_capacity(fetched.len());
    for (i, (url, f)) in fetched.into_iter().enumerate() {
        let id = format!("page-{i:04}");
        let rel = format!("{PAGES_DIR}/{id}.html");
        let path = dest.join(&rel);
        std::fs::write(&path, &f.body).map_err(|e| Error::io(&path, e))?;
        pages.push(PageEntry {
            id,
            path: rel,
            url: Some(url.to_string()),
            fetched_at: f.timestamp,
            role: if i < train_count {
                Role::Train
            } else {
                Role::Test
            },
            gold: None,
        });
    }
    let site_id = opts
        .site_id
        .clone()
        .or_else(|| unique.iter().find_map(|u| url_host(u)).map(str::to_string))
        .unwrap_or_else(|| "local".to_string());
    let manifest = CorpusManifest {
        site_id,
        pages,
        failures,
        encoding_notes: None,
    };
    manifest.save(dest)?;
    Ok(manifest)
}
