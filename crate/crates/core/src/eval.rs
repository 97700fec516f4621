//! Block- and word-level accuracy metrics and the CE vs template timing
//! comparison.

use std::collections::HashMap;
use std::fmt;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};

use crate::block::{atomic_partition, build_block_tree};
use crate::ce::{label_page, CeConfig, CorpusPage, PageLabels};
use crate::error::{Error, Result};
use crate::fast::FastExtractor;
use crate::features::{tokenize, FeatureVector};
use crate::scalar::Scalar;

/// Hand- or generator-produced truth for one page.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct GoldAnnotation {
    pub page_id: String,
    pub gold_text: String,
    /// Number of true content blocks; 0 when only text is annotated.
    #[serde(default)]
    pub gold_block_count: usize,
    /// Text of each true content block, in page order.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub gold_blocks: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub gold_paths: Option<Vec<String>>,
}

impl GoldAnnotation {
    pub fn has_block_gold(&self) -> bool {
        self.gold_block_count > 0 && self.gold_blocks.len() == self.gold_block_count
    }
}

/// Recall, precision and their harmonic mean.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Scores<S> {
    pub recall: S,
    pub precision: S,
    pub f_measure: S,
}

pub type BlockMetrics<S> = Scores<S>;
pub type WordMetrics<S> = Scores<S>;

impl<S: Scalar> Scores<S> {
    pub fn new(recall: S, precision: S) -> Self {
        Self {
            recall,
            precision,
            f_measure: f_measure(recall, precision),
        }
    }
}

/// `2RP / (R + P)`, or 0 when both are 0.
pub fn f_measure<S: Scalar>(recall: S, precision: S) -> S {
    let sum = recall + precision;
    if sum > S::zero() {
        S::lit(2.0) * recall * precision / sum
    } else {
        S::zero()
    }
}

fn ratio<S: Scalar>(num: usize, den: usize) -> S {
    if den == 0 {
        S::zero()
    } else {
        S::from_count(num as u64) / S::from_count(den as u64)
    }
}

/// Block-level scores from raw counts.
pub fn block_f<S: Scalar>(
    extracted_content: usize,
    extracted_total: usize,
    gold_blocks: usize,
) -> Result<BlockMetrics<S>> {
    if extracted_content > extracted_total || extracted_content > gold_blocks {
        return Err(Error::Invariant(format!(
            "{extracted_content} content blocks extracted out of {extracted_total} extracted / {gold_blocks} gold"
        )));
    }
    Ok(Scores::new(
        ratio(extracted_content, gold_blocks),
        ratio(extracted_content, extracted_total),
    ))
}

fn bag(text: &str) -> HashMap<String, usize> {
    let mut out = HashMap::new();
    for t in tokenize(text) {
        *out.entry(t).or_default() += 1;
    }
    out
}

fn overlap(a: &HashMap<String, usize>, b: &HashMap<String, usize>) -> usize {
    let (small, large) = if a.len() <= b.len() { (a, b) } else { (b, a) };
    small
        .iter()
        .map(|(w, &n)| n.min(large.get(w).copied().unwrap_or(0)))
        .sum()
}

/// Word-level scores: matched words are the multiset intersection of the
/// extracted and gold token bags.
pub fn word_f<S: Scalar>(extracted: &str, gold: &str) -> Result<WordMetrics<S>> {
    let gold_bag = bag(gold);
    let gold_words: usize = gold_bag.values().sum();
    if gold_words == 0 {
        return Err(Error::UndefinedRecall);
    }
    let ext_bag = bag(extracted);
    let ext_words: usize = ext_bag.values().sum();
    let matched = overlap(&ext_bag, &gold_bag);
    Ok(Scores::new(
        ratio(matched, gold_words),
        ratio(matched, ext_words),
    ))
}

/// Outcome of matching emitted blocks against gold blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BlockTally {
    /// Gold blocks hit by at least one emitted block.
    pub content: usize,
    /// `content` plus emitted blocks that belong to no gold block.
    pub total: usize,
    pub gold: usize,
}

impl BlockTally {
    pub fn scores<S: Scalar>(&self) -> Result<BlockMetrics<S>> {
        block_f(self.content, self.total, self.gold)
    }
}

/// Maps each emitted block onto the gold block sharing most of its words.
///
/// An emitted block is content when at least half of its words fall inside
/// its best gold block. Fragments of the same gold block count once, so
/// atomic (CE) and whole-block (template) outputs are scored at the gold
/// granularity.
pub fn match_blocks<T: AsRef<str>>(emitted: &[T], gold_blocks: &[String]) -> BlockTally {
    let gold_bags: Vec<_> = gold_blocks.iter().map(|g| bag(g)).collect();
    let mut hit = vec![false; gold_bags.len()];
    let mut stray = 0;
    for block in emitted {
        let words = bag(block.as_ref());
        let size: usize = words.values().sum();
        let best = gold_bags
            .iter()
            .enumerate()
            .map(|(i, g)| (overlap(&words, g), i))
            .max_by_key(|&(o, i)| (o, std::cmp::Reverse(i)));
        match best {
            Some((o, i)) if size > 0 && 2 * o >= size => hit[i] = true,
            _ => stray += 1,
        }
    }
    let content = hit.iter().filter(|&&h| h).count();
    BlockTally {
        content,
        total: content + stray,
        gold: gold_blocks.len(),
    }
}

/// Block and word scores of one page's output.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PageScore {
    pub page_id: String,
    pub block: Option<Scores<f64>>,
    pub word: Option<Scores<f64>>,
}

pub fn score_page<T: AsRef<str>>(
    emitted: &[T],
    text: &str,
    gold: &GoldAnnotation,
) -> Result<PageScore> {
    let block = if gold.has_block_gold() {
        Some(match_blocks(emitted, &gold.gold_blocks).scores()?)
    } else {
        None
    };
    let word = match word_f(text, &gold.gold_text) {
        Ok(w) => Some(w),
        Err(Error::UndefinedRecall) => None,
        Err(e) => return Err(e),
    };
    Ok(PageScore {
        page_id: gold.page_id.clone(),
        block,
        word,
    })
}

/// Mean F-measures over the pages that carry each kind of gold.
pub fn mean_f(scores: &[PageScore]) -> (Option<f64>, Option<f64>) {
    fn mean(xs: impl Iterator<Item = f64>) -> Option<f64> {
        let (n, s) = xs.fold((0usize, 0.0), |(n, s), x| (n + 1, s + x));
        (n > 0).then(|| s / n as f64)
    }
    (
        mean(scores.iter().filter_map(|s| s.block.map(|b| b.f_measure))),
        mean(scores.iter().filter_map(|s| s.word.map(|w| w.f_measure))),
    )
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize)]
pub struct TimingStats {
    /// Mean number of stored blocks compared against per page.
    pub num_block_temp: f64,
    /// Mean number of blocks generated per page.
    pub num_block: f64,
    /// Mean seconds per page.
    pub per_time: f64,
    /// Standard deviation of per-page seconds.
    pub per_time_std: f64,
}

/// `100 · per_time_ce / per_time_fast`.
pub fn improvement_pct(per_time_ce: f64, per_time_fast: f64) -> f64 {
    100.0 * per_time_ce / per_time_fast
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PageCounters {
    pub page_id: String,
    pub nbt_ce: usize,
    pub nb_ce: usize,
    pub nbt_fast: usize,
    pub nb_fast: usize,
    pub comparisons_ce: u64,
    pub comparisons_fast: u64,
    pub secs_ce: f64,
    pub secs_fast: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SiteReport {
    pub site: String,
    pub pages: usize,
    pub ce: TimingStats,
    pub fast: TimingStats,
    pub improvement_pct: f64,
    pub b_f_ce: Option<f64>,
    pub b_f_fast: Option<f64>,
    pub w_f_ce: Option<f64>,
    pub w_f_fast: Option<f64>,
    pub per_page: Vec<PageCounters>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct BenchOptions {
    pub warmup: usize,
    pub runs: usize,
}

impl Default for BenchOptions {
    fn default() -> Self {
        Self { warmup: 1, runs: 3 }
    }
}

#[derive(Clone, Debug)]
pub struct BenchPage {
    pub page_id: String,
    pub html: Vec<u8>,
    pub gold: Option<GoldAnnotation>,
}

fn median_time<T>(opts: &BenchOptions, mut f: impl FnMut() -> Result<T>) -> Result<(T, Duration)> {
    for _ in 0..opts.warmup {
        f()?;
    }
    let mut times = Vec::with_capacity(opts.runs.max(1));
    let mut last = None;
    for _ in 0..opts.runs.max(1) {
        let start = Instant::now();
        let out = f()?;
        times.push(start.elapsed());
        last = Some(out);
    }
    times.sort();
    Ok((last.expect("at least one run"), times[times.len() / 2]))
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / n;
    (mean, var.sqrt())
}

/// Runs CE and the template extractor over the same pages, single-threaded.
///
/// CE compares each page with the stored atomic blocks of all other pages;
/// the template extractor uses only `extractor`'s template. Per-page time
/// covers segmentation plus comparison and excludes I/O.
pub fn bench<S: Scalar>(
    site: &str,
    pages: &[BenchPage],
    extractor: &FastExtractor<S>,
    ce_cfg: &CeConfig<S>,
    opts: &BenchOptions,
) -> Result<SiteReport> {
    ce_cfg.validate()?;
    if pages.len() < 2 {
        return Err(Error::InsufficientCorpus(pages.len()));
    }
    let segmentation =
        std::sync::Arc::new(extractor.template().config_snapshot.segmentation.clone());
    let stored: Vec<CorpusPage> = pages
        .iter()
        .map(|p| {
            CorpusPage::from_html(
                &p.page_id,
                &p.html,
                segmentation.clone(),
                &ce_cfg.similarity,
            )
        })
        .collect::<Result<_>>()?;
    let sets: Vec<&[FeatureVector]> = stored.iter().map(|p| p.features.as_slice()).collect();
    let total_blocks: usize = stored.iter().map(|p| p.blocks.len()).sum();

    let mut per_page = Vec::with_capacity(pages.len());
    let mut ce_scores = Vec::new();
    let mut fast_scores = Vec::new();
    for (i, page) in pages.iter().enumerate() {
        let others: Vec<&[FeatureVector]> = sets
            .iter()
            .enumerate()
            .filter(|&(j, _)| j != i)
            .map(|(_, s)| *s)
            .collect();
        let ((blocks, labels), ce_time) = median_time(opts, || {
            let tree = build_block_tree(page.page_id.as_str(), &page.html, segmentation.clone())?;
            let blocks = atomic_partition(&tree);
            let features: Vec<_> = blocks
                .iter()
                .map(|b| ce_cfg.similarity.featurize_block(b))
                .collect();
            let labels: PageLabels = label_page(&page.page_id, &features, &others, ce_cfg);
            Ok((blocks, labels))
        })?;
        let (content, fast_time) =
            median_time(opts, || extractor.extract(&page.page_id, &page.html))?;

        if let Some(gold) = &page.gold {
            let ce_blocks: Vec<&str> = labels
                .content_blocks()
                .map(|b| blocks[b].text.as_str())
                .collect();
            ce_scores.push(score_page(&ce_blocks, &ce_blocks.join("\n"), gold)?);
            let fast_blocks: Vec<&str> = content
                .blocks
                .iter()
                .map(|b| b.included_text.as_str())
                .collect();
            fast_scores.push(score_page(&fast_blocks, &content.text, gold)?);
        }

        per_page.push(PageCounters {
            page_id: page.page_id.clone(),
            nbt_ce: total_blocks - stored[i].blocks.len(),
            nb_ce: blocks.len(),
            nbt_fast: content.stats.decoys_at_touched_paths,
            nb_fast: content.stats.extracted_blocks,
            comparisons_ce: labels.comparisons,
            comparisons_fast: content.stats.comparisons,
            secs_ce: ce_time.as_secs_f64(),
            secs_fast: fast_time.as_secs_f64(),
        });
    }

    let stats = |nbt: fn(&PageCounters) -> usize,
                 nb: fn(&PageCounters) -> usize,
                 secs: fn(&PageCounters) -> f64| {
        let n = per_page.len() as f64;
        let times: Vec<f64> = per_page.iter().map(secs).collect();
        let (per_time, per_time_std) = mean_std(&times);
        TimingStats {
            num_block_temp: per_page.iter().map(nbt).sum::<usize>() as f64 / n,
            num_block: per_page.iter().map(nb).sum::<usize>() as f64 / n,
            per_time,
            per_time_std,
        }
    };
    let ce = stats(|p| p.nbt_ce, |p| p.nb_ce, |p| p.secs_ce);
    let fast = stats(|p| p.nbt_fast, |p| p.nb_fast, |p| p.secs_fast);
    let (b_f_ce, w_f_ce) = mean_f(&ce_scores);
    let (b_f_fast, w_f_fast) = mean_f(&fast_scores);
    Ok(SiteReport {
        site: site.to_string(),
        pages: pages.len(),
        improvement_pct: improvement_pct(ce.per_time, fast.per_time),
        ce,
        fast,
        b_f_ce,
        b_f_fast,
        w_f_ce,
        w_f_fast,
        per_page,
    })
}

#[derive(Serialize)]
struct CsvRow<'a> {
    site: &'a str,
    nbt_ce: f64,
    nb_ce: f64,
    pertime_ce: f64,
    nbt_fastce: f64,
    nb_fastce: f64,
    pertime_fastce: f64,
    improvement_pct: f64,
    b_f_ce: Option<f64>,
    b_f_fastce: Option<f64>,
    w_f_ce: Option<f64>,
    w_f_fastce: Option<f64>,
}

/// One CSV row per site; `pertime_*` columns are in seconds.
pub fn write_csv<W: Write>(reports: &[SiteReport], out: W) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    for r in reports {
        w.serialize(CsvRow {
            site: &r.site,
            nbt_ce: r.ce.num_block_temp,
            nb_ce: r.ce.num_block,
            pertime_ce: r.ce.per_time,
            nbt_fastce: r.fast.num_block_temp,
            nb_fastce: r.fast.num_block,
            pertime_fastce: r.fast.per_time,
            improvement_pct: r.improvement_pct,
            b_f_ce: r.b_f_ce,
            b_f_fastce: r.b_f_fast,
            w_f_ce: r.w_f_ce,
            w_f_fastce: r.w_f_fast,
        })?;
    }
    w.flush().map_err(|e| Error::io("<csv>", e))?;
    Ok(())
}

fn opt(x: Option<f64>) -> String {
    x.map(|v| format!("{v:.3}")).unwrap_or_else(|| "-".into())
}

impl fmt::Display for SiteReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(
            f,
            "site: {} ({} pages, times in seconds)",
            self.site, self.pages
        )?;
        writeln!(
            f,
            "  {:<8} {:>10} {:>10} {:>12} {:>12}",
            "", "NBT", "NB", "PerTime", "std"
        )?;
        for (name, t) in [("CE", &self.ce), ("FastCE", &self.fast)] {
            writeln!(
                f,
                "  {:<8} {:>10.1} {:>10.1} {:>12.6} {:>12.6}",
                name, t.num_block_temp, t.num_block, t.per_time, t.per_time_std
            )?;
        }
        writeln!(f, "  improvement: {:.1}%", self.improvement_pct)?;
        writeln!(
            f,
            "  B_F  CE {}  FastCE {}",
            opt(self.b_f_ce),
            opt(self.b_f_fast)
        )?;
        write!(
            f,
            "  W_F  CE {}  FastCE {}",
            opt(self.w_f_ce),
            opt(self.w_f_fast)
        )
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn block_f_examples() {
        let perfect = block_f::<f64>(5, 5, 5).unwrap();
        assert_eq!(perfect.f_measure, 1.0);
        let half = block_f::<f64>(2, 2, 4).unwrap();
        assert_eq!((half.recall, half.precision), (0.5, 1.0));
        assert!((half.f_measure - 2.0 / 3.0).abs() < 1e-12);
        let none = block_f::<f64>(0, 0, 0).unwrap();
        assert_eq!(none.f_measure, 0.0);
        assert!(block_f::<f64>(3, 2, 5).is_err());
        assert!(block_f::<f64>(3, 5, 2).is_err());
    }

    #[test]
    fn word_f_examples() {
        let same = word_f::<f64>("a b c", "a b c").unwrap();
        assert_eq!(
            (same.recall, same.precision, same.f_measure),
            (1.0, 1.0, 1.0)
        );
        assert!(matches!(
            word_f::<f64>("x", " ... "),
            Err(Error::UndefinedRecall)
        ));
        let empty = word_f::<f64>("", "a").unwrap();
        assert_eq!(empty.f_measure, 0.0);
        // Duplicates only match as often as they occur in both.
        let dup = word_f::<f64>("a a a", "a b").unwrap();
        assert_eq!(dup.recall, 0.5);
        assert!((dup.precision - 1.0 / 3.0).abs() < 1e-12);
    }

    #[test]
    fn ninety_of_hundred_plus_ten_spurious() {
        let gold: Vec<String> = (0..100).map(|i| format!("g{i}")).collect();
        let mut extracted: Vec<String> = gold[..90].to_vec();
        extracted.extend((0..10).map(|i| format!("junk{i}")));
        let m = word_f::<f64>(&extracted.join(" "), &gold.join(" ")).unwrap();
        // Brute-force count of matched words.
        let matched = extracted.iter().filter(|w| gold.contains(w)).count();
        assert_eq!(matched, 90);
        assert!((m.recall - 0.9).abs() < 1e-12);
        assert!((m.precision - 0.9).abs() < 1e-12);
        assert!((m.f_measure - 0.9).abs() < 1e-12);
    }

    #[test]
    fn improvement_examples() {
        assert!((improvement_pct(1.914, 0.964) - 198.55).abs() < 0.01);
        assert_eq!(improvement_pct(2.0, 2.0), 100.0);
    }

    #[test]
    fn fragments_of_one_gold_block_count_once() {
        let gold = vec![
            "alpha beta gamma delta epsilon".to_string(),
            "zeta eta theta".to_string(),
        ];
        let t = match_blocks(&["beta gamma", "alpha delta epsilon", "menu home"], &gold);
        assert_eq!(
            t,
            BlockTally {
                content: 1,
                total: 2,
                gold: 2
            }
        );
        let t = match_blocks(&["alpha beta gamma delta epsilon", "zeta eta theta"], &gold);
        assert_eq!(t.scores::<f64>().unwrap().f_measure, 1.0);
        let t = match_blocks::<&str>(&[], &gold);
        assert_eq!(t.scores::<f64>().unwrap().f_measure, 0.0);
        // Mostly foreign words: not content.
        let t = match_blocks(&["alpha x y z"], &gold);
        assert_eq!((t.content, t.total), (0, 1));
    }

    #[test]
    fn csv_has_table_columns() {
        let report = SiteReport {
            site: "s".into(),
            pages: 2,
            ce: TimingStats {
                num_block_temp: 10.0,
                num_block: 5.0,
                per_time: 0.002,
                per_time_std: 0.0,
            },
            fast: TimingStats {
                num_block_temp: 1.0,
                num_block: 2.0,
                per_time: 0.001,
                per_time_std: 0.0,
            },
            improvement_pct: 200.0,
            b_f_ce: Some(1.0),
            b_f_fast: None,
            w_f_ce: Some(1.0),
            w_f_fast: Some(0.5),
            per_page: vec![],
        };
        let mut buf = Vec::new();
        write_csv(&[report], &mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "site,nbt_ce,nb_ce,pertime_ce,nbt_fastce,nb_fastce,pertime_fastce,improvement_pct,b_f_ce,b_f_fastce,w_f_ce,w_f_fastce"
        );
        assert_eq!(
            lines.next().unwrap(),
            "s,10.0,5.0,0.002,1.0,2.0,0.001,200.0,1.0,,1.0,0.5"
        );
    }
}
