//! Deterministic synthetic news sites with known ground truth.
//!
//! Every page repeats the same boilerplate (navigation, ads, footer) around
//! an article whose text is drawn from a seeded pseudo-word vocabulary, so
//! the article never repeats across pages. An optional decoy block with
//! fixed text is placed at the same path as the article paragraphs.

use std::fmt::Write as _;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::{CorpusManifest, PageEntry, Role, GOLD_DIR, PAGES_DIR};
use crate::error::{Error, Result};
use crate::eval::GoldAnnotation;

const SYLLABLES: &[&str] = &[
    "ba", "be", "bo", "da", "de", "di", "do", "fa", "fe", "fi", "ga", "go", "ka", "ke", "ki", "ko",
    "la", "le", "li", "lo", "lu", "ma", "me", "mi", "mo", "mu", "na", "ne", "ni", "no", "pa", "pe",
    "pi", "po", "ra", "re", "ri", "ro", "ru", "sa", "se", "si", "so", "ta", "te", "ti", "to", "tu",
    "va", "ve", "vi", "vo", "za", "zo",
];

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BoilerplateBlock {
    /// `<ul>` of linked items directly under `<body>`.
    Nav { items: Vec<String> },
    /// `<div>` with a linked banner image and a line of text.
    Ad { text: String },
    /// `<footer>` placed after the article.
    Footer { text: String },
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ArticleSpec {
    pub paragraphs: usize,
    pub min_words: usize,
    pub max_words: usize,
    /// Number of `<div>` wrappers between `<body>` and the paragraphs.
    pub nesting_depth: usize,
    /// `<span>` sub-blocks inside each paragraph.
    pub spans_per_paragraph: usize,
    pub span_words: usize,
    /// Inline links inside each paragraph.
    pub links_per_paragraph: usize,
    pub vocabulary: usize,
}

impl Default for ArticleSpec {
    fn default() -> Self {
        Self {
            paragraphs: 5,
            min_words: 25,
            max_words: 60,
            nesting_depth: 1,
            spans_per_paragraph: 1,
            span_words: 3,
            links_per_paragraph: 1,
            vocabulary: 3000,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DecoySpec {
    pub text: String,
}

impl Default for DecoySpec {
    fn default() -> Self {
        Self {
            text: "The opinions expressed in this article are those of the author and do not \
                   necessarily reflect the views of the publisher."
                .to_string(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticSiteSpec {
    pub site_id: String,
    pub page_count: usize,
    /// Leading pages marked `train`; the rest are `test`.
    pub train_pages: usize,
    pub seed: u64,
    pub boilerplate: Vec<BoilerplateBlock>,
    pub article: ArticleSpec,
    pub decoy: Option<DecoySpec>,
}

impl Default for SyntheticSiteSpec {
    fn default() -> Self {
        Self {
            site_id: "synthetic.example".to_string(),
            page_count: 30,
            train_pages: 20,
            seed: 1,
            boilerplate: vec![
                BoilerplateBlock::Nav {
                    items: ["Home", "World", "Business", "Science", "Sport", "Contact"]
                        .map(String::from)
                        .to_vec(),
                },
                BoilerplateBlock::Ad {
                    text: "Sponsored: upgrade to premium for an ad-free experience".to_string(),
                },
                BoilerplateBlock::Footer {
                    text: "Copyright 2008 Synthetic News Group. All rights reserved.".to_string(),
                },
            ],
            article: ArticleSpec::default(),
            decoy: None,
        }
    }
}

impl SyntheticSiteSpec {
    pub fn validate(&self) -> Result<()> {
        let a = &self.article;
        let problem = if self.page_count < 2 {
            Some("page_count must be at least 2")
        } else if self.train_pages > self.page_count {
            Some("train_pages exceeds page_count")
        } else if a.paragraphs == 0 {
            Some("article needs at least one paragraph")
        } else if a.min_words == 0 || a.min_words > a.max_words {
            Some("article word range is empty")
        } else if a.spans_per_paragraph > 0 && a.span_words == 0 {
            Some("span_words must be positive")
        } else if a.vocabulary < 100 {
            Some("vocabulary must hold at least 100 words")
        } else {
            None
        };
        match problem {
            Some(p) => Err(Error::InvalidConfig(p.to_string())),
            None => Ok(()),
        }
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
        let spec: Self = serde_json::from_slice(&bytes).map_err(|e| Error::json(path, e))?;
        spec.validate()?;
        Ok(spec)
    }

    /// Traversal path of the article paragraphs.
    pub fn content_path(&self) -> String {
        let mut p = "HTML.BODY".to_string();
        for _ in 0..self.article.nesting_depth {
            p.push_str(".DIV");
        }
        p.push_str(".P");
        p
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct GeneratedPage {
    pub page_id: String,
    pub role: Role,
    pub html: String,
    pub gold: GoldAnnotation,
}

fn vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut words = std::collections::BTreeSet::new();
    while words.len() < size {
        let n = rng.gen_range(2..=4);
        let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).unwrap()).collect();
        words.insert(w);
    }
    let mut words: Vec<String> = words.into_iter().collect();
    words.shuffle(rng);
    words
}

enum Piece {
    Word(String),
    Span(Vec<String>),
    Link(String),
}

fn paragraph(rng: &mut ChaCha8Rng, vocab: &[String], spec: &ArticleSpec) -> (String, String) {
    let n = rng.gen_range(spec.min_words..=spec.max_words);
    let mut pieces: Vec<Piece> = (0..n)
        .map(|_| Piece::Word(vocab.choose(rng).unwrap().clone()))
        .collect();
    // Sub-blocks and links never take the last slot, which carries the period.
    for _ in 0..spec.links_per_paragraph {
        let at = rng.gen_range(0..pieces.len().saturating_sub(1).max(1));
        if let Piece::Word(w) = &pieces[at] {
            pieces[at] = Piece::Link(w.clone());
        }
    }
    for _ in 0..spec.spans_per_paragraph {
        let at = rng.gen_range(0..pieces.len().saturating_sub(1).max(1));
        let words: Vec<String> = (0..spec.span_words)
            .map(|_| vocab.choose(rng).unwrap().clone())
            .collect();
        pieces.insert(at, Piece::Span(words));
    }
    if let Some(Piece::Word(first)) = pieces.first_mut() {
        *first = capitalize(first);
    }
    match pieces.last_mut() {
        Some(Piece::Word(last)) => last.push('.'),
        _ => pieces.push(Piece::Word(".".to_string())),
    }

    let mut html = String::from("<p>");
    let mut text = Vec::new();
    for (i, p) in pieces.iter().enumerate() {
        if i > 0 {
            html.push(' ');
        }
        match p {
            Piece::Word(w) => {
                html.push_str(w);
                text.push(w.clone());
            }
            Piece::Link(w) => {
                let _ = write!(html, "<a href=\"/topic/{w}\">{w}</a>");
                text.push(w.clone());
            }
            Piece::Span(ws) => {
                let joined = ws.join(" ");
                let _ = write!(html, "<span class=\"hl\">{joined}</span>");
                text.push(joined);
            }
        }
    }
    html.push_str("</p>");
    (html, text.join(" "))
}

fn capitalize(w: &str) -> String {
    let mut c = w.chars();
    match c.next() {
        Some(f) => f.to_uppercase().chain(c).collect(),
        None => String::new(),
    }
}

fn boilerplate_html(block: &BoilerplateBlock) -> String {
    match block {
        BoilerplateBlock::Nav { items } => {
            let mut s = String::from("<ul class=\"nav\">");
            for item in items {
                let _ = write!(
                    s,
                    "<li><a href=\"/{}\">{item}</a></li>",
                    item.to_lowercase()
                );
            }
            s.push_str("</ul>");
            s
        }
        BoilerplateBlock::Ad { text } => format!(
            "<div class=\"ad\"><a href=\"/ads\"><img src=\"/banner.gif\" alt=\"\"></a> {text}</div>"
        ),
        BoilerplateBlock::Footer { text } => format!("<footer>{text}</footer>"),
    }
}

/// Builds every page of the site in memory.
pub fn generate_pages(spec: &SyntheticSiteSpec) -> Result<Vec<GeneratedPage>> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let vocab = vocabulary(&mut rng, spec.article.vocabulary);
    let (before, after): (Vec<_>, Vec<_>) = spec
        .boilerplate
        .iter()
        .partition(|b| !matches!(b, BoilerplateBlock::Footer { .. }));
    let content_path = spec.content_path();

    let mut pages = Vec::with_capacity(spec.page_count);
    for i in 0..spec.page_count {
        let page_id = format!("page-{i:04}");
        let mut html = String::new();
        let _ = write!(
            html,
            "<!DOCTYPE html>\n<html>\n<head>\n<meta charset=\"utf-8\">\n<title>{} | {page_id}</title>\n\
             <script>window.analytics = {{ id: 42 }};</script>\n</head>\n<body>\n",
            spec.site_id
        );
        for b in &before {
            html.push_str(&boilerplate_html(b));
            html.push('\n');
        }
        for _ in 0..spec.article.nesting_depth {
            html.push_str("<div class=\"article\">\n");
        }
        let mut gold_blocks = Vec::with_capacity(spec.article.paragraphs);
        for _ in 0..spec.article.paragraphs {
            let (p_html, p_text) = paragraph(&mut rng, &vocab, &spec.article);
            html.push_str(&p_html);
            html.push('\n');
            gold_blocks.push(p_text);
        }
        if let Some(decoy) = &spec.decoy {
            let _ = writeln!(html, "<p class=\"disclaimer\">{}</p>", decoy.text);
        }
        for _ in 0..spec.article.nesting_depth {
            html.push_str("</div>\n");
        }
        for b in &after {
            html.push_str(&boilerplate_html(b));
            html.push('\n');
        }
        html.push_str("</body>\n</html>\n");

        let gold = GoldAnnotation {
            page_id: page_id.clone(),
            gold_text: gold_blocks.join("\n\n"),
            gold_block_count: gold_blocks.len(),
            gold_blocks,
            gold_paths: Some(vec![content_path.clone()]),
        };
        pages.push(GeneratedPage {
            page_id,
            role: if i < spec.train_pages {
                Role::Train
            } else {
                Role::Test
            },
            html,
            gold,
        });
    }
    Ok(pages)
}

/// Writes the site, its gold annotations and a manifest under `dest`.
pub fn generate_site(spec: &SyntheticSiteSpec, dest: impl AsRef<Path>) -> Result<CorpusManifest> {
    let dest = dest.as_ref();
    let pages = generate_pages(spec)?;
    for sub in [PAGES_DIR, GOLD_DIR] {
        let dir = dest.join(sub);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let mut entries = Vec::with_capacity(pages.len());
    for page in &pages {
        let page_rel = format!("{PAGES_DIR}/{}.html", page.page_id);
        let gold_rel = format!("{GOLD_DIR}/{}.json", page.page_id);
        let path = dest.join(&page_rel);
        std::fs::write(&path, &page.html).map_err(|e| Error::io(&path, e))?;
        let mut gold = serde_json::to_vec_pretty(&page.gold).expect("gold serializes");
        gold.push(b'\n');
        let path = dest.join(&gold_rel);
        std::fs::write(&path, gold).map_err(|e| Error::io(&path, e))?;
        entries.push(PageEntry {
            id: page.page_id.clone(),
            path: page_rel,
            url: None,
            fetched_at: None,
            role: page.role,
            gold: Some(gold_rel),
        });
    }
    let manifest = CorpusManifest {
        site_id: spec.site_id.clone(),
        pages: entries,
        failures: vec![],
        encoding_notes: Some("generated as UTF-8".to_string()),
    };
    manifest.save(dest)?;
    Ok(manifest)
}
