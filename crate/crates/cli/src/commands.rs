use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{anyhow, Context};
use ondat::augment::{Augmenter, AugmenterConfig, Method};
use ondat::decomp::{self, StlParams};
use ondat::eval::{run_benchmark_with, smape, BenchmarkPlan, NamedCorpus, RunReport, SEASONAL_NAIVE};
use ondat::model::Checkpoint;
use ondat::synthetic::{seasonal_corpus, SyntheticSpec};
use ondat::train::{fit, forecast, Strategy, StrategyKind};
use ondat::tsdata::{load_corpus, read_long_csv, save_long_csv, SplitCorpus};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::config::ExperimentConfig;
use crate::{AugmentArgs, BenchmarkArgs, DecomposeArgs, Globals, ReportArgs, SynthArgs, TrainArgs};

/// Failure with its exit code: 2 for usage and config problems, 1 otherwise.
#[derive(Debug)]
pub enum CmdError {
    Usage(anyhow::Error),
    Runtime(anyhow::Error),
}

impl CmdError {
    pub fn usage(msg: impl std::fmt::Display) -> Self {
        CmdError::Usage(anyhow!("{msg}"))
    }

    pub fn code(&self) -> u8 {
        match self {
            CmdError::Usage(_) => 2,
            CmdError::Runtime(_) => 1,
        }
    }
}

impl std::fmt::Display for CmdError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CmdError::Usage(e) | CmdError::Runtime(e) => write!(f, "{e:#}"),
        }
    }
}

impl From<anyhow::Error> for CmdError {
    fn from(e: anyhow::Error) -> Self {
        CmdError::Runtime(e)
    }
}

impl From<ondat::Error> for CmdError {
    fn from(e: ondat::Error) -> Self {
        CmdError::Runtime(e.into())
    }
}

impl From<std::io::Error> for CmdError {
    fn from(e: std::io::Error) -> Self {
        CmdError::Runtime(e.into())
    }
}

type CmdResult = Result<(), CmdError>;

fn require_file(path: &Path) -> CmdResult {
    if path.is_file() {
        Ok(())
    } else {
        Err(CmdError::usage(format!("input file {} does not exist", path.display())))
    }
}

fn require_positive(name: &str, v: usize) -> CmdResult {
    if v == 0 {
        Err(CmdError::usage(format!("--{name} must be >= 1")))
    } else {
        Ok(())
    }
}

fn file_stem_for(id: &str) -> String {
    id.chars()
        .map(|c| if c.is_ascii_alphanumeric() || "-_.#".contains(c) { c } else { '_' })
        .collect()
}

pub fn decompose(a: &DecomposeArgs) -> CmdResult {
    require_file(&a.input)?;
    require_positive("period", a.period)?;
    let mut series = read_long_csv(&a.input, a.period)?;
    if !a.ids.is_empty() {
        series.retain(|s| a.ids.iter().any(|id| id == s.id()));
        if series.is_empty() {
            return Err(CmdError::usage("none of the requested --id values are in the input"));
        }
    }
    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;

    let params = StlParams::for_period(a.period);
    let mut ok = 0;
    for s in &series {
        let d = match decomp::decompose(s, &params) {
            Ok(d) => d,
            Err(e) => {
                eprintln!("{}: {e}", s.id());
                continue;
            }
        };
        let path = a.out.join(format!("{}.csv", file_stem_for(s.id())));
        let mut w = BufWriter::new(File::create(&path).with_context(|| format!("creating {}", path.display()))?);
        writeln!(w, "idx,trend,seasonal,remainder")?;
        for i in 0..d.len() {
            writeln!(w, "{},{},{},{}", i + 1, d.trend[i], d.seasonal[i], d.remainder[i])?;
        }
        w.flush()?;
        ok += 1;
    }
    println!("decomposed {ok}/{} series into {}", series.len(), a.out.display());
    if ok == 0 {
        return Err(CmdError::Runtime(anyhow!("every series failed to decompose")));
    }
    Ok(())
}

pub fn augment(a: &AugmentArgs, g: Globals) -> CmdResult {
    require_file(&a.input)?;
    require_positive("period", a.period)?;
    let method: Method = a.method.parse().map_err(CmdError::usage)?;
    let config = AugmenterConfig {
        block_size: a.block_size,
        multiplicity: a.multiplicity,
        ..AugmenterConfig::new(method)
    };
    config.validate().map_err(CmdError::usage)?;

    let series = read_long_csv(&a.input, a.period)?;
    let mut rng = ChaCha8Rng::seed_from_u64(g.seed.unwrap_or(0));
    let out = Augmenter::new(config).augment_batch(&series, &mut rng);
    save_long_csv(&a.output, &out)?;
    println!("wrote {} series ({} synthetic) to {}", out.len(), out.len() - series.len(), a.output.display());
    Ok(())
}

pub fn train(a: &TrainArgs, g: Globals) -> CmdResult {
    require_file(&a.input)?;
    for (name, v) in [("period", a.period), ("horizon", a.horizon), ("input-size", a.input_size)] {
        require_positive(name, v)?;
    }
    let preset = g.preset.unwrap_or_default();
    let kind: StrategyKind = a.strategy.parse().map_err(CmdError::usage)?;
    let mut strategy = Strategy::new(kind);
    strategy.augmenter.cache_decompositions = preset.cache_decompositions();
    if kind != StrategyKind::Standard {
        strategy.augmenter.block_size = a.block_size;
    }
    strategy.validate().map_err(CmdError::usage)?;

    let mut model_cfg = preset.model(a.input_size, a.horizon);
    if let Some(u) = a.hidden_units {
        model_cfg.hidden_units = u;
    }
    model_cfg.validate().map_err(CmdError::usage)?;
    let mut train_cfg = preset.train();
    train_cfg.seed = g.seed.unwrap_or(0);
    if let Some(s) = a.max_steps {
        train_cfg.max_steps = s;
    }

    let loaded = load_corpus(&a.input, a.period, a.horizon, a.input_size)?;
    if !loaded.dropped.is_empty() {
        eprintln!("dropped {} series shorter than {}", loaded.dropped.len(), a.input_size + 2 * a.horizon);
    }
    let corpus = SplitCorpus::new(loaded.corpus);
    let res = fit(&corpus, &strategy, &model_cfg, &train_cfg)?;

    let history = corpus.history_views();
    let f = forecast(&res.model, &history)?;
    let mut actual = f.clone();
    for (i, (s, r)) in corpus.full_series().iter().zip(corpus.ranges()).enumerate() {
        for (j, v) in s.values()[r.test.clone()].iter().enumerate() {
            actual[[i, j]] = *v;
        }
    }
    let test_smape = smape(f.view(), actual.view())?;

    std::fs::create_dir_all(&a.out).with_context(|| format!("creating {}", a.out.display()))?;
    Checkpoint::new(
        res.model.clone(),
        res.optimizer.clone(),
        res.log.checkpoint_step,
        Some(res.log.best_validation_smape),
    )
    .save(a.out.join("checkpoint.json"))?;
    res.log
        .write_jsonl(BufWriter::new(File::create(a.out.join("train_log.jsonl"))?))?;
    let mut w = BufWriter::new(File::create(a.out.join("forecasts.csv"))?);
    writeln!(w, "unique_id,step,forecast,actual")?;
    for (i, s) in corpus.full_series().iter().enumerate() {
        for j in 0..a.horizon {
            writeln!(w, "{},{},{},{}", s.id(), j + 1, f[[i, j]], actual[[i, j]])?;
        }
    }
    w.flush()?;

    let v = res.log.best_validation_smape;
    println!(
        "{}: {} steps ({:?}), checkpoint at step {}",
        strategy.name(),
        res.log.steps_run(),
        res.log.stop_reason,
        res.log.checkpoint_step
    );
    println!("validation SMAPE {v:.5} ({:.3}%)", v * 100.0);
    println!("test SMAPE       {test_smape:.5} ({:.3}%)", test_smape * 100.0);
    Ok(())
}

pub fn benchmark(a: &BenchmarkArgs, g: Globals) -> CmdResult {
    require_file(&a.config)?;
    let mut cfg = ExperimentConfig::load(&a.config).map_err(CmdError::Usage)?;
    if let Some(p) = g.preset {
        cfg.preset = p;
    }
    if let Some(s) = g.seed {
        cfg.seeds = vec![s];
    }
    let base = a.config.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut exp = cfg.resolve(&base).map_err(|e| CmdError::Usage(e.into()))?;
    if let Some(dir) = &a.output_dir {
        exp.output_dir = dir.clone();
    }

    let mut corpora = Vec::with_capacity(exp.datasets.len());
    for d in &exp.datasets {
        let loaded = load_corpus(&d.path, d.period, d.horizon, d.input_size)
            .with_context(|| format!("dataset `{}`", d.name))?;
        log::info!(
            "{}: {} series kept, {} dropped",
            d.name,
            loaded.corpus.len(),
            loaded.dropped.len()
        );
        corpora.push(NamedCorpus {
            name: d.name.clone(),
            corpus: SplitCorpus::new(loaded.corpus),
        });
    }

    let logs_dir = exp.output_dir.join("logs");
    std::fs::create_dir_all(&logs_dir).with_context(|| format!("creating {}", logs_dir.display()))?;
    let mut log_errors: Vec<String> = Vec::new();
    let plan = BenchmarkPlan {
        corpora: &corpora,
        strategies: &exp.strategies,
        seeds: &exp.seeds,
        model: &exp.model,
        train: &exp.train,
        timing_reference: exp.timing_reference.as_deref(),
    };
    let report = run_benchmark_with(&plan, |entry, train_log| {
        eprintln!(
            "{} / {} / seed {}: test {:.5}, validation {:.5}, {:.1}s",
            entry.dataset,
            entry.strategy,
            entry.seed,
            entry.test_smape,
            entry.validation_smape,
            entry.total_secs()
        );
        let path: PathBuf = logs_dir.join(format!(
            "{}__{}__seed{}.jsonl",
            file_stem_for(&entry.dataset),
            entry.strategy,
            entry.seed
        ));
        let written = File::create(&path)
            .map_err(anyhow::Error::from)
            .and_then(|f| Ok(train_log.write_jsonl(BufWriter::new(f))?));
        if let Err(e) = written {
            log_errors.push(format!("{}: {e}", path.display()));
        }
    });
    report.write_tables(&exp.output_dir)?;

    for f in &report.failures {
        eprintln!("failed: {} / {} / seed {}: {}", f.dataset, f.strategy, f.seed, f.error);
    }
    print_summary(&report);
    println!("tables written to {}", exp.output_dir.display());
    if !log_errors.is_empty() {
        return Err(CmdError::Runtime(anyhow!("could not write logs: {}", log_errors.join("; "))));
    }
    if !report.entries.iter().any(|e| e.strategy != SEASONAL_NAIVE) {
        return Err(CmdError::Runtime(anyhow!("every training run failed")));
    }
    Ok(())
}

fn print_summary(report: &RunReport) {
    for (name, table) in report.tables() {
        println!("{name}\n{}", table.to_text());
    }
    println!("average test SMAPE (%)");
    for (s, v) in &report.summary.average_smape {
        println!("  {s:<18} {:.3}", v * 100.0);
    }
}

pub fn report(a: &ReportArgs) -> CmdResult {
    require_file(&a.report)?;
    let mut report = RunReport::load_json(&a.report)?;
    let reference = a
        .timing_reference
        .clone()
        .or_else(|| report.summary.timing_reference.clone());
    report.summarize(reference.as_deref());
    print_summary(&report);
    if let Some(dir) = &a.out {
        report.write_tables(dir)?;
        println!("tables written to {}", dir.display());
    }
    Ok(())
}

pub fn synth(a: &SynthArgs, g: Globals) -> CmdResult {
    require_positive("n-series", a.n_series)?;
    require_positive("period", a.period)?;
    let spec = SyntheticSpec {
        n_series: a.n_series,
        length: a.length,
        period: a.period,
        seed: g.seed.unwrap_or(0),
        ..SyntheticSpec::default()
    };
    let series = seasonal_corpus(&spec);
    save_long_csv(&a.output, &series)?;
    println!("wrote {} series to {}", series.len(), a.output.display());
    Ok(())
}
