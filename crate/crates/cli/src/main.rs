use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Duration;

use anyhow::{anyhow, bail, Context, Result};
use clap::{Parser, Subcommand};
use fastce_core::ce::{classify_blocks, classify_blocks_parallel, CorpusPage};
use fastce_core::corpus::{fetch_pages, FetchOptions, LoadedCorpus, Role};
use fastce_core::eval::{bench, mean_f, score_page, write_csv, BenchOptions, PageScore};
use fastce_core::synth::{generate_site, SyntheticSiteSpec};
use fastce_core::{
    atomic_partition, build_block_tree, build_template, extract_content_ce, load_corpus,
    FastExtractorF64, RuleDepth, SettingsF64, SiteTemplateF64, TrainingCorpus, CONFIG_ENV,
};

#[derive(Parser)]
#[command(
    name = "fastce",
    version,
    about = "Template-based primary content extraction"
)]
struct Cli {
    /// Settings file (JSON).
    #[arg(long, global = true, env = CONFIG_ENV)]
    config: Option<PathBuf>,
    /// Cosine threshold above which two blocks are similar.
    #[arg(long, global = true)]
    threshold: Option<f64>,
    /// Share of other pages a block must recur on to be non-content.
    #[arg(long, global = true)]
    frequency_fraction: Option<f64>,
    /// Keep only direct text of selected blocks plus sub-blocks on template paths.
    #[arg(long, global = true)]
    non_recursive: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Print the block tree of a page, or its atomic blocks.
    Segment {
        page: PathBuf,
        #[arg(long)]
        atomic: bool,
    },
    /// Build a site template from a corpus directory.
    Train {
        corpus: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Extract the primary content of a page with a stored template.
    Extract {
        page: PathBuf,
        #[arg(long)]
        template: PathBuf,
        /// Print one line per extracted block with its path.
        #[arg(long)]
        blocks: bool,
    },
    /// Run the cross-page baseline on one page of a corpus.
    ExtractCe {
        corpus: PathBuf,
        /// Page id from the manifest, or a page file to classify against the corpus.
        page: String,
        #[arg(long)]
        parallel: bool,
    },
    /// Score extraction output against gold annotations.
    Eval {
        corpus: PathBuf,
        #[arg(long, required_unless_present = "ce")]
        template: Option<PathBuf>,
        /// Score the cross-page baseline instead of a template.
        #[arg(long)]
        ce: bool,
        /// Print per-page scores.
        #[arg(long)]
        verbose: bool,
    },
    /// Time the baseline against template extraction; writes CSV.
    Bench {
        #[arg(required = true)]
        corpora: Vec<PathBuf>,
        /// Template to use for every corpus; by default one is trained per corpus.
        #[arg(long)]
        template: Option<PathBuf>,
        #[arg(long, default_value_t = 3)]
        runs: usize,
        #[arg(long, default_value_t = 1)]
        warmup: usize,
        /// CSV destination; stdout when absent.
        #[arg(short, long)]
        output: Option<PathBuf>,
        /// Also print a summary table to stderr.
        #[arg(long)]
        summary: bool,
    },
    /// Generate a synthetic site with gold annotations.
    Gen {
        /// Site spec (JSON); defaults are used when absent.
        spec: Option<PathBuf>,
        #[arg(short, long)]
        output: PathBuf,
    },
    /// Download pages listed one URL per line into a corpus directory.
    Fetch {
        urls: PathBuf,
        #[arg(short, long)]
        output: PathBuf,
        #[arg(long)]
        site_id: Option<String>,
        #[arg(long)]
        train_count: Option<usize>,
        /// Per-request timeout in seconds.
        #[arg(long, default_value_t = 30)]
        timeout: u64,
    },
}

impl Cli {
    fn settings(&self) -> Result<SettingsF64> {
        let mut s = SettingsF64::resolve(self.config.as_deref()).context("config")?;
        if let Some(t) = self.threshold {
            s.ce.similarity.threshold = t;
        }
        if let Some(f) = self.frequency_fraction {
            s.ce.frequency_fraction = f;
        }
        if self.non_recursive {
            s.rule_depth = RuleDepth::DirectOnly;
        }
        s.validate().context("config")?;
        Ok(s)
    }
}

fn read(path: &Path, stage: &str) -> Result<Vec<u8>> {
    std::fs::read(path).with_context(|| format!("{stage}: cannot read {}", path.display()))
}

fn load(dir: &Path, stage: &str) -> Result<LoadedCorpus> {
    load_corpus(dir).with_context(|| format!("{stage}: loading corpus {}", dir.display()))
}

fn page_id(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "page".into())
}

fn train(corpus: &LoadedCorpus, settings: &SettingsF64) -> Result<SiteTemplateF64> {
    let seg = Arc::new(settings.segmentation.clone());
    let training = corpus
        .training_corpus(seg, &settings.ce.similarity)
        .context("train: segmenting training pages")?;
    build_template(&training, &settings.ce).context("train: building template")
}

fn load_template(path: &Path, stage: &str) -> Result<SiteTemplateF64> {
    SiteTemplateF64::load(path).with_context(|| format!("{stage}: loading template"))
}

fn segment(page: &Path, atomic: bool, settings: &SettingsF64, out: &mut impl Write) -> Result<()> {
    let html = read(page, "segment")?;
    let tree = build_block_tree(
        page_id(page),
        &html,
        Arc::new(settings.segmentation.clone()),
    )
    .context("segment: parsing page")?;
    if atomic {
        for b in atomic_partition(&tree) {
            let kind = match b.kind {
                fastce_core::AtomicKind::Leaf => "leaf",
                fastce_core::AtomicKind::Residual => "residual",
            };
            writeln!(out, "{}\t{kind}\t{}", b.path, b.text)?;
        }
    } else {
        for (id, node) in tree.nodes().iter().enumerate() {
            let indent = "  ".repeat(node.depth);
            writeln!(
                out,
                "{indent}{} [{id}] {}",
                tree.path(id)?,
                node.direct_text
            )?;
        }
    }
    Ok(())
}

/// Classifies every corpus page plus, optionally, one extra page.
fn ce_labels(
    corpus: &LoadedCorpus,
    extra: Option<CorpusPage>,
    settings: &SettingsF64,
    parallel: bool,
) -> Result<(TrainingCorpus, Vec<fastce_core::PageLabels>)> {
    let seg = Arc::new(settings.segmentation.clone());
    let mut all = corpus
        .full_corpus(seg, &settings.ce.similarity)
        .context("extract-ce: segmenting corpus")?;
    if let Some(page) = extra {
        all.pages.push(page);
    }
    let labels = if parallel {
        classify_blocks_parallel(&all, &settings.ce)
    } else {
        classify_blocks(&all, &settings.ce)
    }
    .context("extract-ce: classifying blocks")?;
    Ok((all, labels))
}

fn extract_ce(
    corpus_dir: &Path,
    page: &str,
    parallel: bool,
    settings: &SettingsF64,
) -> Result<String> {
    let corpus = load(corpus_dir, "extract-ce")?;
    let (id, extra) = if corpus.page(page).is_some() {
        (page.to_string(), None)
    } else {
        let path = Path::new(page);
        if !path.is_file() {
            bail!("extract-ce: `{page}` is neither a page id in the corpus nor a file");
        }
        let html = read(path, "extract-ce")?;
        let id = format!("external:{}", page_id(path));
        let seg = Arc::new(settings.segmentation.clone());
        let p = CorpusPage::from_html(id.clone(), &html, seg, &settings.ce.similarity)
            .context("extract-ce: parsing page")?;
        (id, Some(p))
    };
    let (all, labels) = ce_labels(&corpus, extra, settings, parallel)?;
    let i = all
        .pages
        .iter()
        .position(|p| p.page_id == id)
        .ok_or_else(|| anyhow!("extract-ce: page {id} vanished"))?;
    Ok(extract_content_ce(&all.pages[i], &labels[i]).text)
}

fn eval(
    corpus_dir: &Path,
    template: Option<&Path>,
    ce: bool,
    verbose: bool,
    settings: &SettingsF64,
    out: &mut impl Write,
) -> Result<()> {
    let corpus = load(corpus_dir, "eval")?;
    let has_test = corpus.with_role(Role::Test).next().is_some();
    let targets: Vec<_> = corpus
        .pages
        .iter()
        .filter(|p| p.gold.is_some() && (!has_test || p.entry.role == Role::Test))
        .collect();
    if targets.is_empty() {
        bail!(
            "eval: corpus {} has no gold annotations",
            corpus_dir.display()
        );
    }
    let mut scores: Vec<PageScore> = Vec::new();
    if ce {
        let (all, labels) = ce_labels(&corpus, None, settings, false)?;
        for page in &targets {
            let i = all
                .pages
                .iter()
                .position(|p| p.page_id == page.entry.id)
                .unwrap();
            let x = extract_content_ce(&all.pages[i], &labels[i]);
            let emitted: Vec<&str> = x.blocks.iter().map(|b| b.text.as_str()).collect();
            let gold = page.gold.as_ref().unwrap();
            scores.push(score_page(&emitted, &x.text, gold).context("eval: scoring")?);
        }
    } else {
        let path = template.expect("clap requires --template without --ce");
        let fast = FastExtractorF64::with_depth(load_template(path, "eval")?, settings.rule_depth);
        for page in &targets {
            let x = fast
                .extract(&page.entry.id, &page.html)
                .with_context(|| format!("eval: extracting {}", page.entry.id))?;
            let emitted: Vec<&str> = x.blocks.iter().map(|b| b.included_text.as_str()).collect();
            let gold = page.gold.as_ref().unwrap();
            scores.push(score_page(&emitted, &x.text, gold).context("eval: scoring")?);
        }
    }
    let fmt = |x: Option<f64>| x.map(|v| format!("{v:.4}")).unwrap_or_else(|| "-".into());
    if verbose {
        writeln!(out, "page\tb_f\tw_f")?;
        for s in &scores {
            writeln!(
                out,
                "{}\t{}\t{}",
                s.page_id,
                fmt(s.block.map(|b| b.f_measure)),
                fmt(s.word.map(|w| w.f_measure))
            )?;
        }
    }
    let (b, w) = mean_f(&scores);
    writeln!(out, "pages: {}", scores.len())?;
    writeln!(out, "B_F_measure: {}", fmt(b))?;
    writeln!(out, "W_F_measure: {}", fmt(w))?;
    Ok(())
}

fn run(cli: &Cli) -> Result<()> {
    let settings = cli.settings()?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match &cli.command {
        Command::Segment { page, atomic } => segment(page, *atomic, &settings, &mut out)?,
        Command::Train { corpus, output } => {
            let corpus = load(corpus, "train")?;
            let template = train(&corpus, &settings)?;
            template
                .save(output)
                .with_context(|| format!("train: writing {}", output.display()))?;
            eprintln!(
                "template: {} content paths, {} decoys, from {} pages",
                template.content_paths.len(),
                template.decoy_count(),
                template.built_from
            );
        }
        Command::Extract {
            page,
            template,
            blocks,
        } => {
            let fast = FastExtractorF64::with_depth(
                load_template(template, "extract")?,
                settings.rule_depth,
            );
            let html = read(page, "extract")?;
            let x = fast
                .extract(&page_id(page), &html)
                .context("extract: processing page")?;
            if *blocks {
                for b in &x.blocks {
                    writeln!(out, "{}\t{}", b.path, b.included_text)?;
                }
            } else {
                writeln!(out, "{}", x.text)?;
            }
        }
        Command::ExtractCe {
            corpus,
            page,
            parallel,
        } => {
            let text = extract_ce(corpus, page, *parallel, &settings)?;
            writeln!(out, "{text}")?;
        }
        Command::Eval {
            corpus,
            template,
            ce,
            verbose,
        } => eval(
            corpus,
            template.as_deref(),
            *ce,
            *verbose,
            &settings,
            &mut out,
        )?,
        Command::Bench {
            corpora,
            template,
            runs,
            warmup,
            output,
            summary,
        } => {
            let opts = BenchOptions {
                warmup: *warmup,
                runs: *runs,
            };
            let shared = template
                .as_deref()
                .map(|t| load_template(t, "bench"))
                .transpose()?;
            let mut reports = Vec::new();
            for dir in corpora {
                let corpus = load(dir, "bench")?;
                let tpl = match &shared {
                    Some(t) => t.clone(),
                    None => train(&corpus, &settings)?,
                };
                let fast = FastExtractorF64::with_depth(tpl, settings.rule_depth);
                let report = bench(
                    corpus.site_id(),
                    &corpus.bench_pages(),
                    &fast,
                    &settings.ce,
                    &opts,
                )
                .with_context(|| format!("bench: {}", dir.display()))?;
                if *summary {
                    eprintln!("{report}");
                }
                reports.push(report);
            }
            match output {
                Some(path) => {
                    let file = std::fs::File::create(path)
                        .with_context(|| format!("bench: creating {}", path.display()))?;
                    write_csv(&reports, file).context("bench: writing CSV")?;
                }
                None => write_csv(&reports, &mut out).context("bench: writing CSV")?,
            }
        }
        Command::Gen { spec, output } => {
            let spec = match spec {
                Some(p) => SyntheticSiteSpec::load(p)
                    .with_context(|| format!("gen: loading spec {}", p.display()))?,
                None => SyntheticSiteSpec::default(),
            };
            let manifest = generate_site(&spec, output)
                .with_context(|| format!("gen: writing {}", output.display()))?;
            eprintln!(
                "generated {} pages in {}",
                manifest.pages.len(),
                output.display()
            );
        }
        Command::Fetch {
            urls,
            output,
            site_id,
            train_count,
            timeout,
        } => {
            let list =
                String::from_utf8(read(urls, "fetch")?).context("fetch: URL list is not UTF-8")?;
            let urls: Vec<String> = list
                .lines()
                .map(str::trim)
                .filter(|l| !l.is_empty() && !l.starts_with('#'))
                .map(String::from)
                .collect();
            let opts = FetchOptions {
                site_id: site_id.clone(),
                train_count: *train_count,
                timeout: Duration::from_secs(*timeout),
                ..Default::default()
            };
            let manifest = fetch_pages(&urls, output, &opts)
                .with_context(|| format!("fetch: writing {}", output.display()))?;
            for f in &manifest.failures {
                eprintln!("failed: {} ({})", f.url, f.error);
            }
            eprintln!("fetched {} pages", manifest.pages.len());
        }
    }
    out.flush()?;
    Ok(())
}

fn is_broken_pipe(e: &anyhow::Error) -> bool {
    e.chain().any(|c| {
        c.downcast_ref::<std::io::Error>()
            .is_some_and(|io| io.kind() == std::io::ErrorKind::BrokenPipe)
    })
}

/// Joins the error chain, skipping causes already spelled out by their parent.
fn describe(e: &anyhow::Error) -> String {
    let mut parts: Vec<String> = Vec::new();
    for cause in e.chain() {
        let msg = cause.to_string();
        if !parts.last().is_some_and(|prev| prev.ends_with(&msg)) {
            parts.push(msg);
        }
    }
    parts.join(": ")
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) if is_broken_pipe(&e) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {}", describe(&e));
            ExitCode::FAILURE
        }
    }
}
