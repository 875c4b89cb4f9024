//! Forecast accuracy, cross-strategy benchmarks and their summary tables.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::Path;
use std::time::Instant;

use ndarray::{Array2, ArrayView2, Zip};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{seasonal_naive_batch, ModelConfig};
use crate::train::{fit, forecast, PhaseTimings, StopReason, Strategy, TrainConfig, TrainLog};
use crate::tsdata::{Series, SplitCorpus};

/// Denominator floor of the symmetric percentage error.
pub const SMAPE_EPS: f64 = 1e-8;

/// Name under which the seasonal-naive baseline appears in reports.
pub const SEASONAL_NAIVE: &str = "seasonal_naive";

/// Mean over all cells of |ŷ − y| / max((|ŷ| + |y|) / 2, 1e-8), in [0, 2].
pub fn smape(forecast: ArrayView2<'_, f64>, actual: ArrayView2<'_, f64>) -> Result<f64> {
    if forecast.dim() != actual.dim() {
        return Err(Error::Shape(format!(
            "forecast {:?} vs actual {:?}",
            forecast.dim(),
            actual.dim()
        )));
    }
    if forecast.is_empty() {
        return Err(Error::Shape("no cells to score".into()));
    }
    if forecast.iter().chain(actual.iter()).any(|v| !v.is_finite()) {
        return Err(Error::NonFinite {
            layer: "smape input".into(),
            row: 0,
        });
    }
    let sum = Zip::from(forecast).and(actual).fold(0.0, |acc, &f, &y| {
        acc + (f - y).abs() / ((f.abs() + y.abs()) / 2.0).max(SMAPE_EPS)
    });
    Ok(sum / forecast.len() as f64)
}

pub fn smape_slice(forecast: &[f64], actual: &[f64]) -> Result<f64> {
    smape(
        ArrayView2::from_shape((1, forecast.len()), forecast).map_err(|e| Error::Shape(e.to_string()))?,
        ArrayView2::from_shape((1, actual.len()), actual).map_err(|e| Error::Shape(e.to_string()))?,
    )
}

/// Ranks of one dataset's scores: 1 = lowest, ties share the mean rank.
pub fn ranks(scores: &BTreeMap<String, f64>) -> BTreeMap<String, f64> {
    let mut order: Vec<(&String, f64)> = scores.iter().map(|(k, v)| (k, *v)).collect();
    order.sort_by(|a, b| a.1.total_cmp(&b.1));
    let mut out = BTreeMap::new();
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && order[j + 1].1 == order[i].1 {
            j += 1;
        }
        let rank = (i + j) as f64 / 2.0 + 1.0;
        for (name, _) in &order[i..=j] {
            out.insert((*name).clone(), rank);
        }
        i = j + 1;
    }
    out
}

/// Average rank per strategy over datasets (`dataset → strategy → score`).
pub fn rank_table(scores: &BTreeMap<String, BTreeMap<String, f64>>) -> BTreeMap<String, f64> {
    let mut sums: BTreeMap<String, (f64, usize)> = BTreeMap::new();
    for per_dataset in scores.values() {
        for (name, r) in ranks(per_dataset) {
            let e = sums.entry(name).or_insert((0.0, 0));
            e.0 += r;
            e.1 += 1;
        }
    }
    sums.into_iter().map(|(k, (s, n))| (k, s / n as f64)).collect()
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2.0
    })
}

/// 100 · (t − t_ref) / t_ref.
pub fn percent_difference(t: f64, t_ref: f64) -> f64 {
    100.0 * (t - t_ref) / t_ref
}

/// One scored (dataset, strategy, seed) run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunEntry {
    pub dataset: String,
    pub strategy: String,
    pub seed: u64,
    pub test_smape: f64,
    pub validation_smape: f64,
    pub timings: PhaseTimings,
    /// Seconds spent forecasting and scoring the test block.
    pub test_secs: f64,
    pub steps: u64,
    pub checkpoint_step: u64,
    pub stop_reason: Option<StopReason>,
}

impl RunEntry {
    /// Training, validation and testing wall-clock seconds.
    pub fn total_secs(&self) -> f64 {
        self.timings.total() + self.test_secs
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub dataset: String,
    pub strategy: String,
    pub seed: u64,
    pub error: String,
}

/// Summaries derived from the raw entries.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    /// dataset → strategy → test SMAPE averaged over seeds.
    pub dataset_scores: BTreeMap<String, BTreeMap<String, f64>>,
    /// strategy → mean over datasets of `dataset_scores`.
    pub average_smape: BTreeMap<String, f64>,
    pub average_rank: BTreeMap<String, f64>,
    /// strategy → dataset → mean over seeds of (validation − test) SMAPE.
    pub gap_by_dataset: BTreeMap<String, BTreeMap<String, f64>>,
    /// strategy → median over datasets of `gap_by_dataset`.
    pub validation_gap: BTreeMap<String, f64>,
    /// strategy → total seconds (sum over datasets of the mean over seeds).
    pub total_secs: BTreeMap<String, f64>,
    pub timing_reference: Option<String>,
    /// strategy → percent time difference against `timing_reference`.
    pub time_difference_pct: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub entries: Vec<RunEntry>,
    pub failures: Vec<RunFailure>,
    pub summary: ReportSummary,
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

/// (dataset, strategy) → values of `pick` over seeds, in entry order.
fn group(entries: &[RunEntry], pick: impl Fn(&RunEntry) -> f64) -> BTreeMap<(String, String), Vec<f64>> {
    let mut out: BTreeMap<(String, String), Vec<f64>> = BTreeMap::new();
    for e in entries {
        out.entry((e.dataset.clone(), e.strategy.clone())).or_default().push(pick(e));
    }
    out
}

/// Per-strategy median of the per-dataset (validation − test) SMAPE.
pub fn validation_gap(report: &RunReport) -> BTreeMap<String, f64> {
    gap_by_dataset(&report.entries)
        .into_iter()
        .filter_map(|(s, per)| median(&per.values().copied().collect::<Vec<_>>()).map(|m| (s, m)))
        .collect()
}

fn gap_by_dataset(entries: &[RunEntry]) -> BTreeMap<String, BTreeMap<String, f64>> {
    let mut out: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
    for ((d, s), diffs) in group(entries, |e| e.validation_smape - e.test_smape) {
        out.entry(s).or_default().insert(d, mean(&diffs));
    }
    out
}

fn total_secs(entries: &[RunEntry]) -> BTreeMap<String, f64> {
    let mut out: BTreeMap<String, f64> = BTreeMap::new();
    for ((_, s), secs) in group(entries, RunEntry::total_secs) {
        *out.entry(s).or_default() += mean(&secs);
    }
    out
}

/// Percent difference in total execution time of every strategy against
/// `reference`; negative means faster.
pub fn timing_report(report: &RunReport, reference: &str) -> Result<BTreeMap<String, f64>> {
    let totals = total_secs(&report.entries);
    let t_ref = *totals
        .get(reference)
        .ok_or_else(|| Error::Config(format!("no timings for reference strategy {reference:?}")))?;
    Ok(totals
        .into_iter()
        .map(|(s, t)| (s, percent_difference(t, t_ref)))
        .collect())
}

impl RunReport {
    /// Recomputes every derived field from `entries`.
    pub fn summarize(&mut self, timing_reference: Option<&str>) {
        let mut dataset_scores: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for ((d, s), v) in group(&self.entries, |e| e.test_smape) {
            dataset_scores.entry(d).or_default().insert(s, mean(&v));
        }
        let mut per_strategy: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for per in dataset_scores.values() {
            for (s, v) in per {
                per_strategy.entry(s.clone()).or_default().push(*v);
            }
        }
        let average_smape = per_strategy.iter().map(|(s, v)| (s.clone(), mean(v))).collect();
        let average_rank = rank_table(&dataset_scores);
        let gaps = gap_by_dataset(&self.entries);
        let validation_gap = validation_gap(self);
        let totals = total_secs(&self.entries);
        let time_difference_pct = timing_reference
            .and_then(|r| timing_report(self, r).ok())
            .unwrap_or_default();
        self.summary = ReportSummary {
            dataset_scores,
            average_smape,
            average_rank,
            gap_by_dataset: gaps,
            validation_gap,
            total_secs: totals,
            timing_reference: timing_reference.map(str::to_string),
            time_difference_pct,
        };
    }

    pub fn save_json(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text).map_err(|e| Error::io(path, e))
    }

    pub fn load_json(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Ok(serde_json::from_str(&text)?)
    }

    /// Writes `table_scores`, `table_ranks`, `table_gap` and `table_timing`
    /// as `.csv` and aligned `.txt`, plus `report.json`, into `dir`.
    pub fn write_tables(&self, dir: impl AsRef<Path>) -> Result<()> {
        let dir = dir.as_ref();
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        for (name, table) in self.tables() {
            let csv_path = dir.join(format!("{name}.csv"));
            std::fs::write(&csv_path, table.to_csv()).map_err(|e| Error::io(&csv_path, e))?;
            let txt_path = dir.join(format!("{name}.txt"));
            std::fs::write(&txt_path, table.to_text()).map_err(|e| Error::io(&txt_path, e))?;
        }
        self.save_json(dir.join("report.json"))
    }

    pub fn tables(&self) -> Vec<(&'static str, Table)> {
        vec![
            ("table_scores", self.scores_table()),
            ("table_ranks", self.ranks_table()),
            ("table_gap", self.gap_table()),
            ("table_timing", self.timing_table()),
        ]
    }

    fn strategies(&self) -> Vec<String> {
        self.summary.average_smape.keys().cloned().collect()
    }

    /// Rows per dataset plus an average row, one column per strategy.
    pub fn scores_table(&self) -> Table {
        let strategies = self.strategies();
        let mut t = Table::new(std::iter::once("dataset".to_string()).chain(strategies.iter().cloned()));
        for (d, per) in &self.summary.dataset_scores {
            t.row(std::iter::once(d.clone()).chain(strategies.iter().map(|s| fmt_opt(per.get(s)))));
        }
        t.row(
            std::iter::once("average".to_string())
                .chain(strategies.iter().map(|s| fmt_opt(self.summary.average_smape.get(s)))),
        );
        t
    }

    pub fn ranks_table(&self) -> Table {
        let mut t = Table::new(["strategy", "average_rank"].map(String::from));
        for (s, r) in &self.summary.average_rank {
            t.row([s.clone(), format!("{r:.2}")]);
        }
        t
    }

    pub fn gap_table(&self) -> Table {
        let datasets: Vec<String> = self.summary.dataset_scores.keys().cloned().collect();
        let mut t = Table::new(
            std::iter::once("strategy".to_string())
                .chain(datasets.iter().cloned())
                .chain(std::iter::once("median".to_string())),
        );
        for (s, per) in &self.summary.gap_by_dataset {
            t.row(
                std::iter::once(s.clone())
                    .chain(datasets.iter().map(|d| fmt_opt(per.get(d))))
                    .chain(std::iter::once(fmt_opt(self.summary.validation_gap.get(s)))),
            );
        }
        t
    }

    pub fn timing_table(&self) -> Table {
        let reference = self.summary.timing_reference.clone().unwrap_or_default();
        let mut t = Table::new(
            ["strategy", "total_secs", &format!("pct_vs_{reference}")].map(String::from),
        );
        for (s, secs) in &self.summary.total_secs {
            let pct = self
                .summary
                .time_difference_pct
                .get(s)
                .map(|p| format!("{p:.3}"))
                .unwrap_or_else(|| "-".into());
            t.row([s.clone(), format!("{secs:.3}"), pct]);
        }
        t
    }
}

fn fmt_opt(v: Option<&f64>) -> String {
    v.map(|v| format!("{v:.5}")).unwrap_or_else(|| "-".into())
}

/// A small string table rendered as CSV or aligned text.
#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: impl IntoIterator<Item = String>) -> Self {
        Self {
            header: header.into_iter().collect(),
            rows: Vec::new(),
        }
    }

    pub fn row(&mut self, cells: impl IntoIterator<Item = String>) {
        self.rows.push(cells.into_iter().collect());
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::new();
        for r in std::iter::once(&self.header).chain(&self.rows) {
            out.push_str(&r.join(","));
            out.push('\n');
        }
        out
    }

    pub fn to_text(&self) -> String {
        let cols = self.header.len();
        let widths: Vec<usize> = (0..cols)
            .map(|c| {
                std::iter::once(&self.header)
                    .chain(&self.rows)
                    .filter_map(|r| r.get(c))
                    .map(|s| s.chars().count())
                    .max()
                    .unwrap_or(0)
            })
            .collect();
        let mut out = String::new();
        for r in std::iter::once(&self.header).chain(&self.rows) {
            let line: Vec<String> = r
                .iter()
                .enumerate()
                .map(|(c, s)| {
                    if c == 0 {
                        format!("{s:<w$}", w = widths[c])
                    } else {
                        format!("{s:>w$}", w = widths[c])
                    }
                })
                .collect();
            let _ = writeln!(out, "{}", line.join("  ").trim_end());
        }
        out
    }
}

/// A corpus under a display name.
#[derive(Debug, Clone)]
pub struct NamedCorpus {
    pub name: String,
    pub corpus: SplitCorpus,
}

/// Test-block SMAPE of `model` forecasting from train+validation history.
fn score_test(corpus: &SplitCorpus, predict: impl FnOnce(&[Series]) -> Result<Array2<f64>>) -> Result<f64> {
    let history = corpus.history_views();
    let f = predict(&history)?;
    let actual = test_block(corpus);
    smape(f.view(), actual.view())
}

fn test_block(corpus: &SplitCorpus) -> Array2<f64> {
    let h = corpus.corpus().horizon();
    let mut out = Array2::zeros((corpus.len(), h));
    for (i, (s, r)) in corpus.full_series().iter().zip(corpus.ranges()).enumerate() {
        out.row_mut(i)
            .assign(&ndarray::ArrayView1::from(&s.values()[r.test.clone()]));
    }
    out
}

fn naive_entry(nc: &NamedCorpus) -> Result<RunEntry> {
    let h = nc.corpus.corpus().horizon();
    let t = Instant::now();
    let test_smape = score_test(&nc.corpus, |hist| seasonal_naive_batch(hist, h))?;
    let train_views = nc.corpus.train_views();
    let val_forecast = seasonal_naive_batch(&train_views, h)?;
    let mut val_actual = Array2::zeros((nc.corpus.len(), h));
    for (i, (s, r)) in nc.corpus.full_series().iter().zip(nc.corpus.ranges()).enumerate() {
        val_actual
            .row_mut(i)
            .assign(&ndarray::ArrayView1::from(&s.values()[r.validation.clone()]));
    }
    let validation_smape = smape(val_forecast.view(), val_actual.view())?;
    Ok(RunEntry {
        dataset: nc.name.clone(),
        strategy: SEASONAL_NAIVE.into(),
        seed: 0,
        test_smape,
        validation_smape,
        timings: PhaseTimings::default(),
        test_secs: t.elapsed().as_secs_f64(),
        steps: 0,
        checkpoint_step: 0,
        stop_reason: None,
    })
}

/// Fits and scores one (corpus, strategy, seed) combination.
pub fn run_once(
    nc: &NamedCorpus,
    strategy: &Strategy,
    seed: u64,
    model: &ModelConfig,
    train: &TrainConfig,
) -> Result<(RunEntry, TrainLog)> {
    let corpus = nc.corpus.corpus();
    let model_cfg = ModelConfig {
        input_size: corpus.input_size(),
        horizon: corpus.horizon(),
        ..model.clone()
    };
    let train_cfg = TrainConfig {
        seed,
        ..train.clone()
    };
    let res = fit(&nc.corpus, strategy, &model_cfg, &train_cfg)?;
    let t = Instant::now();
    let test_smape = score_test(&nc.corpus, |hist| forecast(&res.model, hist))?;
    let entry = RunEntry {
        dataset: nc.name.clone(),
        strategy: strategy.name().into(),
        seed,
        test_smape,
        validation_smape: res.log.best_validation_smape,
        timings: res.log.timings,
        test_secs: t.elapsed().as_secs_f64(),
        steps: res.log.steps_run(),
        checkpoint_step: res.log.checkpoint_step,
        stop_reason: Some(res.log.stop_reason),
    };
    Ok((entry, res.log))
}

/// Settings shared by every run of a benchmark.
#[derive(Debug, Clone)]
pub struct BenchmarkPlan<'a> {
    pub corpora: &'a [NamedCorpus],
    pub strategies: &'a [Strategy],
    pub seeds: &'a [u64],
    /// `input_size` and `horizon` are taken from each corpus.
    pub model: &'a ModelConfig,
    pub train: &'a TrainConfig,
    pub timing_reference: Option<&'a str>,
}

/// Runs every (corpus × strategy × seed) and the seasonal-naive baseline per
/// corpus. Failed runs are recorded and skipped.
pub fn run_benchmark(plan: &BenchmarkPlan<'_>) -> RunReport {
    run_benchmark_with(plan, |_, _| {})
}

/// [`run_benchmark`], handing each finished run and its log to `on_run`.
pub fn run_benchmark_with(plan: &BenchmarkPlan<'_>, mut on_run: impl FnMut(&RunEntry, &TrainLog)) -> RunReport {
    let mut report = RunReport::default();
    for nc in plan.corpora {
        match naive_entry(nc) {
            Ok(e) => report.entries.push(e),
            Err(e) => report.failures.push(RunFailure {
                dataset: nc.name.clone(),
                strategy: SEASONAL_NAIVE.into(),
                seed: 0,
                error: e.to_string(),
            }),
        }
        // strategies interleaved per seed so slow drift in machine load
        // spreads evenly over them
        for &seed in plan.seeds {
            for strategy in plan.strategies {
                log::info!("{} / {} / seed {seed}", nc.name, strategy.name());
                match run_once(nc, strategy, seed, plan.model, plan.train) {
                    Ok((entry, train_log)) => {
                        on_run(&entry, &train_log);
                        report.entries.push(entry);
                    }
                    Err(e) => {
                        log::warn!("{} / {} / seed {seed} failed: {e}", nc.name, strategy.name());
                        report.failures.push(RunFailure {
                            dataset: nc.name.clone(),
                            strategy: strategy.name().into(),
                            seed,
                            error: e.to_string(),
                        });
                    }
                }
            }
        }
    }
    report.summarize(plan.timing_reference);
    report
}
