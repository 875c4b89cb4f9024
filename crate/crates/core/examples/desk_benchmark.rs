//! Standard vs on-the-fly augmentation on a generated monthly corpus.
//!
//! cargo run --release -p ondat --example desk_benchmark -- [seeds] [strategies]

use std::time::Instant;

use ondat::eval::{run_benchmark_with, BenchmarkPlan, NamedCorpus};
use ondat::model::ModelConfig;
use ondat::synthetic::{seasonal_corpus, SyntheticSpec};
use ondat::train::{Strategy, StrategyKind, TrainConfig};
use ondat::tsdata::{Corpus, SplitCorpus};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let mut args = std::env::args().skip(1);
    let n_seeds: u64 = args.next().map(|s| s.parse()).transpose()?.unwrap_or(1);
    let strategies: Vec<Strategy> = args
        .next()
        .unwrap_or_else(|| "standard,ondat".into())
        .split(',')
        .map(|s| s.parse::<StrategyKind>().map(|k| Strategy::new(k).cached()))
        .collect::<Result<_, _>>()?;

    let series = seasonal_corpus(&SyntheticSpec::default());
    let corpus = Corpus::new(series, 12, 18, 24)?;
    let corpora = [NamedCorpus {
        name: "synthetic_monthly".into(),
        corpus: SplitCorpus::new(corpus),
    }];
    let model = ModelConfig::new(24, 18).with_hidden_units(64);
    let train = TrainConfig {
        max_steps: 300,
        ..TrainConfig::default()
    };
    let seeds: Vec<u64> = (0..n_seeds).collect();
    let plan = BenchmarkPlan {
        corpora: &corpora,
        strategies: &strategies,
        seeds: &seeds,
        model: &model,
        train: &train,
        timing_reference: Some("ondat"),
    };
    let t = Instant::now();
    let report = run_benchmark_with(&plan, |e, log| {
        println!(
            "{:<18} seed {:>2}  test {:.5}  val {:.5}  steps {:>4}  ckpt {:>4}  {:.1}s (aug {:.1}s)",
            e.strategy,
            e.seed,
            e.test_smape,
            e.validation_smape,
            e.steps,
            e.checkpoint_step,
            e.total_secs(),
            log.timings.augment
        );
    });
    for (name, table) in report.tables() {
        println!("\n{name}\n{}", table.to_text());
    }
    println!("elapsed {:.1}s", t.elapsed().as_secs_f64());
    Ok(())
}
