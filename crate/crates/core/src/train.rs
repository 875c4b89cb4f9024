//! Training strategies, the mini-batch loop, early stopping and
//! checkpointing.

use std::fmt;
use std::io::Write;
use std::str::FromStr;
use std::time::Instant;

use ndarray::Array2;
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::augment::{Augmenter, AugmenterConfig, Method};
use crate::error::{Error, Result};
use crate::eval;
use crate::model::{adam_step, backward, forward, AdamConfig, ForecastModel, LrSchedule, ModelConfig, OptimizerState};
use crate::tsdata::{embed, last_window, Series, SplitCorpus, WindowSet};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StrategyKind {
    /// No augmentation.
    Standard,
    /// One synthetic per series generated once, before fitting.
    DaApriori,
    /// Fresh synthetics for every training batch and every validation check.
    Ondat,
    OndatTrainOnly,
    OndatValOnly,
    /// Like `Ondat` with i.i.d. bootstrap instead of moving blocks.
    OndatFixed,
}

impl StrategyKind {
    pub const ALL: [StrategyKind; 6] = [
        StrategyKind::Standard,
        StrategyKind::DaApriori,
        StrategyKind::Ondat,
        StrategyKind::OndatTrainOnly,
        StrategyKind::OndatValOnly,
        StrategyKind::OndatFixed,
    ];

    pub fn name(self) -> &'static str {
        match self {
            StrategyKind::Standard => "standard",
            StrategyKind::DaApriori => "da_apriori",
            StrategyKind::Ondat => "ondat",
            StrategyKind::OndatTrainOnly => "ondat_train_only",
            StrategyKind::OndatValOnly => "ondat_val_only",
            StrategyKind::OndatFixed => "ondat_fixed",
        }
    }

    pub fn augments_training(self) -> bool {
        matches!(
            self,
            StrategyKind::Ondat | StrategyKind::OndatTrainOnly | StrategyKind::OndatFixed
        )
    }

    pub fn augments_validation(self) -> bool {
        matches!(
            self,
            StrategyKind::Ondat | StrategyKind::OndatValOnly | StrategyKind::OndatFixed
        )
    }
}

impl fmt::Display for StrategyKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for StrategyKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        let alias = match key.as_str() {
            "da" => "da_apriori",
            "ondat_tr" => "ondat_train_only",
            "ondat_vl" => "ondat_val_only",
            other => other,
        };
        StrategyKind::ALL
            .into_iter()
            .find(|k| k.name() == alias)
            .ok_or_else(|| Error::Config(format!("unknown strategy {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Strategy {
    pub kind: StrategyKind,
    pub augmenter: AugmenterConfig,
}

impl Strategy {
    /// Default augmenter for `kind`: identity for standard, i.i.d. bootstrap
    /// for the fixed ablation, moving blocks otherwise.
    pub fn new(kind: StrategyKind) -> Self {
        let augmenter = match kind {
            StrategyKind::Standard => AugmenterConfig::identity(),
            StrategyKind::OndatFixed => AugmenterConfig::fixed_bootstrap(),
            _ => AugmenterConfig::mbb(),
        };
        Self { kind, augmenter }
    }

    pub fn with_augmenter(kind: StrategyKind, augmenter: AugmenterConfig) -> Result<Self> {
        let s = Self { kind, augmenter };
        s.validate()?;
        Ok(s)
    }

    /// Same strategy with the per-series decomposition cache switched on.
    pub fn cached(mut self) -> Self {
        self.augmenter.cache_decompositions = true;
        self
    }

    pub fn name(&self) -> &'static str {
        self.kind.name()
    }

    pub fn validate(&self) -> Result<()> {
        self.augmenter.validate()?;
        if self.kind == StrategyKind::Standard && self.augmenter.method != Method::Identity {
            return Err(Error::Config("standard strategy must use the identity augmenter".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub max_steps: u64,
    /// Series per batch.
    pub batch_size: usize,
    pub val_check_every: u64,
    /// Training steps without a strict validation improvement before stopping.
    pub patience: u64,
    pub seed: u64,
    pub learning_rate: f64,
    /// Number of ×0.5 learning-rate decays spread evenly over `max_steps`.
    pub lr_decays: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            max_steps: 1500,
            batch_size: 32,
            val_check_every: 50,
            patience: 50,
            seed: 0,
            learning_rate: 1e-3,
            lr_decays: 3,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        if self.val_check_every == 0 {
            return Err(Error::Config("val_check_every must be >= 1".into()));
        }
        if self.patience == 0 {
            return Err(Error::Config("patience must be >= 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }

    pub fn schedule(&self) -> LrSchedule {
        LrSchedule {
            max_steps: self.max_steps,
            n_decays: self.lr_decays,
            factor: 0.5,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxSteps,
    EarlyStop,
}

/// Wall-clock seconds spent per phase.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct PhaseTimings {
    /// Building synthetic training series (on-the-fly or up front).
    pub augment: f64,
    /// Windowing, forward, backward and the optimiser update.
    pub train: f64,
    /// Validation checks, including their augmentation.
    pub validation: f64,
}

impl PhaseTimings {
    pub fn total(&self) -> f64 {
        self.augment + self.train + self.validation
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ValidationCheck {
    pub step: u64,
    pub smape: f64,
    pub windows: usize,
    pub improved: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainLog {
    pub strategy: StrategyKind,
    pub seed: u64,
    /// Loss of step `i + 1`.
    pub step_losses: Vec<f64>,
    pub checks: Vec<ValidationCheck>,
    pub checkpoint_step: u64,
    pub best_validation_smape: f64,
    pub stop_reason: StopReason,
    pub timings: PhaseTimings,
}

#[derive(Serialize)]
#[serde(tag = "record", rename_all = "snake_case")]
enum LogRecord<'a> {
    Step {
        step: u64,
        loss: f64,
    },
    Check(&'a ValidationCheck),
    Summary {
        strategy: StrategyKind,
        seed: u64,
        steps: u64,
        checkpoint_step: u64,
        best_validation_smape: f64,
        stop_reason: StopReason,
        timings: &'a PhaseTimings,
    },
}

impl TrainLog {
    pub fn steps_run(&self) -> u64 {
        self.step_losses.len() as u64
    }

    /// One JSON object per line: every step, every check, then a summary.
    pub fn write_jsonl(&self, mut out: impl Write) -> Result<()> {
        let mut emit = |rec: LogRecord<'_>| -> Result<()> {
            serde_json::to_writer(&mut out, &rec)?;
            out.write_all(b"\n").map_err(|e| Error::io("<train log>", e))
        };
        for (i, &loss) in self.step_losses.iter().enumerate() {
            emit(LogRecord::Step {
                step: i as u64 + 1,
                loss,
            })?;
        }
        for c in &self.checks {
            emit(LogRecord::Check(c))?;
        }
        emit(LogRecord::Summary {
            strategy: self.strategy,
            seed: self.seed,
            steps: self.steps_run(),
            checkpoint_step: self.checkpoint_step,
            best_validation_smape: self.best_validation_smape,
            stop_reason: self.stop_reason,
            timings: &self.timings,
        })
    }
}

/// Independent random streams derived from one seed, so that e.g. batch
/// order does not depend on how many draws augmentation consumed.
#[derive(Debug, Clone)]
pub struct RngStreams {
    pub init: ChaCha8Rng,
    pub batches: ChaCha8Rng,
    pub train_augment: ChaCha8Rng,
    pub validation_augment: ChaCha8Rng,
    pub apriori: ChaCha8Rng,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        let stream = |id: u64| {
            let mut r = ChaCha8Rng::seed_from_u64(seed);
            r.set_stream(id);
            r
        };
        Self {
            init: stream(0),
            batches: stream(1),
            train_augment: stream(2),
            validation_augment: stream(3),
            apriori: stream(4),
        }
    }
}

/// Draws `batch_size` distinct series (all of them if the pool is smaller).
pub fn make_batch(pool: &[Series], batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<Series> {
    batch_indices(pool.len(), batch_size, rng)
        .into_iter()
        .map(|i| pool[i].clone())
        .collect()
}

/// Positions of the series [`make_batch`] would draw from a pool of `n`.
pub fn batch_indices(n: usize, batch_size: usize, rng: &mut ChaCha8Rng) -> Vec<usize> {
    sample(rng, n, batch_size.min(n)).into_vec()
}

/// Outcome of one optimisation step.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepOutcome {
    pub loss: f64,
    pub windows: usize,
    pub augment_secs: f64,
    pub train_secs: f64,
}

/// Augments `batch` when the strategy asks for it, embeds every series and
/// takes one Adam step on the mean loss over all windows.
pub fn train_step(
    model: &mut ForecastModel,
    optimizer: &mut OptimizerState,
    batch: &[Series],
    strategy: &Strategy,
    augmenter: &Augmenter,
    rng: &mut ChaCha8Rng,
) -> Result<StepOutcome> {
    let t0 = Instant::now();
    let augmented;
    let series = if strategy.kind.augments_training() {
        augmented = augmenter.augment_batch(batch, rng);
        &augmented[..]
    } else {
        batch
    };
    let augment_secs = t0.elapsed().as_secs_f64();

    let t1 = Instant::now();
    let (q, h) = (model.config.input_size, model.config.horizon);
    let parts: Vec<WindowSet> = series.iter().map(|s| embed(s, q, h)).collect();
    let windows = WindowSet::concat(&parts, q, h);
    if windows.is_empty() {
        return Err(Error::InsufficientHistory {
            needed: q + h,
            got: series.iter().map(Series::len).max().unwrap_or(0),
        });
    }
    let (_, cache) = forward(model, windows.inputs.view())?;
    let (loss, grads) = backward(model, &cache, &windows.targets)?;
    adam_step(model, &grads, optimizer)?;
    Ok(StepOutcome {
        loss,
        windows: windows.len(),
        augment_secs,
        train_secs: t1.elapsed().as_secs_f64(),
    })
}

/// Mean SMAPE over one window per series: the last `q` observations before
/// the final `h` as inputs, the final `h` as targets.
///
/// `pool` holds train+validation views. Strategies that augment validation
/// double the pool with fresh synthetics first.
pub fn validate(
    model: &ForecastModel,
    pool: &[Series],
    strategy: &Strategy,
    augmenter: &Augmenter,
    rng: &mut ChaCha8Rng,
) -> Result<(f64, usize)> {
    let augmented;
    let series = if strategy.kind.augments_validation() {
        augmented = augmenter.augment_batch(pool, rng);
        &augmented[..]
    } else {
        pool
    };
    let (q, h) = (model.config.input_size, model.config.horizon);
    let parts: Vec<WindowSet> = series.iter().filter_map(|s| last_window(s, q, h)).collect();
    let windows = WindowSet::concat(&parts, q, h);
    if windows.is_empty() {
        return Err(Error::NoValidationWindows);
    }
    let forecast = model.predict(windows.inputs.view())?;
    let score = eval::smape(forecast.view(), windows.targets.view())?;
    Ok((score, windows.len()))
}

/// Result of [`fit`]: the checkpointed model, the optimiser state saved with
/// it, and the log of the whole run.
#[derive(Debug, Clone)]
pub struct FitResult {
    pub model: ForecastModel,
    pub optimizer: OptimizerState,
    pub log: TrainLog,
}

/// Trains a fresh model on `corpus` and returns the parameters with the best
/// validation SMAPE.
///
/// Validation runs every `val_check_every` steps (and once more at the end if
/// the last step was not a check); a strictly better score replaces the
/// checkpoint. Training stops at `max_steps`, or at a check where at least
/// `patience` steps have passed since the last improvement.
pub fn fit(
    corpus: &SplitCorpus,
    strategy: &Strategy,
    model_config: &ModelConfig,
    train_config: &TrainConfig,
) -> Result<FitResult> {
    strategy.validate()?;
    train_config.validate()?;
    model_config.validate()?;
    let (q, h) = (model_config.input_size, model_config.horizon);
    if q != corpus.corpus().input_size() || h != corpus.corpus().horizon() {
        return Err(Error::Config(format!(
            "model expects q={q}, h={h} but corpus has q={}, h={}",
            corpus.corpus().input_size(),
            corpus.corpus().horizon()
        )));
    }

    let mut rngs = RngStreams::new(train_config.seed);
    let augmenter = Augmenter::new(strategy.augmenter.clone());
    let mut timings = PhaseTimings::default();

    // A-priori synthetics are paired with their originals: a batch holds the
    // sampled originals followed by their fixed twins.
    let mut train_pool: Vec<(Series, Option<Series>)> =
        corpus.train_views().into_iter().map(|s| (s, None)).collect();
    let mut val_pool = corpus.history_views();
    if strategy.kind == StrategyKind::DaApriori {
        let t = Instant::now();
        let history = val_pool.clone();
        for (s, (_, twin)) in history.iter().zip(train_pool.iter_mut()) {
            let syn = augmenter.synthesize(s, &mut rngs.apriori);
            *twin = Some(syn.view(0..syn.len() - h));
            val_pool.push(syn);
        }
        timings.augment += t.elapsed().as_secs_f64();
    }
    train_pool.retain(|(s, _)| s.len() >= q + h);
    if train_pool.is_empty() {
        return Err(Error::InsufficientHistory {
            needed: q + h,
            got: corpus.train_views().iter().map(Series::len).max().unwrap_or(0),
        });
    }

    let mut model = ForecastModel::new(model_config.clone(), &mut rngs.init)?;
    let adam = AdamConfig {
        lr: train_config.learning_rate,
        ..AdamConfig::default()
    };
    let mut optimizer = OptimizerState::new(&model.params, adam, train_config.schedule());

    let mut log = TrainLog {
        strategy: strategy.kind,
        seed: train_config.seed,
        step_losses: Vec::new(),
        checks: Vec::new(),
        checkpoint_step: 0,
        best_validation_smape: f64::INFINITY,
        stop_reason: StopReason::MaxSteps,
        timings,
    };
    let mut best: Option<(ForecastModel, OptimizerState)> = None;
    let mut last_improvement = 0u64;

    let mut check = |step: u64,
                     model: &ForecastModel,
                     optimizer: &OptimizerState,
                     log: &mut TrainLog,
                     rng: &mut ChaCha8Rng|
     -> Result<bool> {
        let t = Instant::now();
        let (smape, windows) = validate(model, &val_pool, strategy, &augmenter, rng)?;
        log.timings.validation += t.elapsed().as_secs_f64();
        let improved = smape < log.best_validation_smape;
        if improved {
            log.best_validation_smape = smape;
            log.checkpoint_step = step;
            best = Some((model.clone(), optimizer.clone()));
        }
        log.checks.push(ValidationCheck {
            step,
            smape,
            windows,
            improved,
        });
        Ok(improved)
    };

    let mut step = 0u64;
    while step < train_config.max_steps {
        step += 1;
        let picked = batch_indices(train_pool.len(), train_config.batch_size, &mut rngs.batches);
        let mut batch: Vec<Series> = picked.iter().map(|&i| train_pool[i].0.clone()).collect();
        batch.extend(picked.iter().filter_map(|&i| train_pool[i].1.clone()));
        let out = train_step(
            &mut model,
            &mut optimizer,
            &batch,
            strategy,
            &augmenter,
            &mut rngs.train_augment,
        )?;
        log.timings.augment += out.augment_secs;
        log.timings.train += out.train_secs;
        log.step_losses.push(out.loss);

        if step % train_config.val_check_every == 0 {
            if check(step, &model, &optimizer, &mut log, &mut rngs.validation_augment)? {
                last_improvement = step;
            }
            if log.best_validation_smape.is_finite() && step - last_improvement >= train_config.patience {
                log.stop_reason = StopReason::EarlyStop;
                break;
            }
        }
    }
    if log.checks.last().map(|c| c.step) != Some(step) {
        check(step, &model, &optimizer, &mut log, &mut rngs.validation_augment)?;
    }

    let (model, optimizer) = best.ok_or(Error::NoValidationWindows)?;
    Ok(FitResult { model, optimizer, log })
}

/// One h-step forecast per series from its last `q` values.
pub fn forecast(model: &ForecastModel, history: &[Series]) -> Result<Array2<f64>> {
    let inputs = crate::tsdata::forecast_inputs(history, model.config.input_size)?;
    model.predict(inputs.view())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tsdata::Corpus;

    fn pool(n: usize, len: usize) -> Vec<Series> {
        (0..n)
            .map(|i| {
                let v = (0..len)
                    .map(|t| 10.0 + i as f64 + (t as f64 * std::f64::consts::TAU / 12.0).sin())
                    .collect();
                Series::new(format!("s{i}"), 12, v).unwrap()
            })
            .collect()
    }

    #[test]
    fn batch_is_clamped_and_distinct() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(make_batch(&pool(1, 30), 32, &mut rng).len(), 1);
        let b = make_batch(&pool(10, 30), 5, &mut rng);
        let mut ids: Vec<_> = b.iter().map(|s| s.id().to_string()).collect();
        ids.sort();
        ids.dedup();
        assert_eq!(ids.len(), 5);
    }

    #[test]
    fn batch_sequence_is_seeded() {
        let p = pool(20, 30);
        let draw = || {
            let mut r = RngStreams::new(11).batches;
            (0..10)
                .map(|_| make_batch(&p, 4, &mut r).iter().map(|s| s.id().to_string()).collect::<Vec<_>>())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(), draw());
    }

    #[test]
    fn batch_frequencies_are_uniform() {
        let p = pool(3, 30);
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut counts = [0usize; 3];
        let n = 10_000;
        for _ in 0..n {
            let b = make_batch(&p, 1, &mut rng);
            counts[b[0].id()[1..].parse::<usize>().unwrap()] += 1;
        }
        let expected = n as f64 / 3.0;
        let sigma = (n as f64 * (1.0 / 3.0) * (2.0 / 3.0)).sqrt();
        for c in counts {
            assert!((c as f64 - expected).abs() <= 3.0 * sigma, "{counts:?}");
        }
    }

    #[test]
    fn strategy_names_round_trip() {
        for k in StrategyKind::ALL {
            assert_eq!(k.name().parse::<StrategyKind>().unwrap(), k);
        }
        assert_eq!("DA".parse::<StrategyKind>().unwrap(), StrategyKind::DaApriori);
        assert!("boost".parse::<StrategyKind>().is_err());
        assert!(Strategy::with_augmenter(StrategyKind::Standard, AugmenterConfig::mbb()).is_err());
        assert!(Strategy::with_augmenter(StrategyKind::Ondat, AugmenterConfig::identity()).is_ok());
    }

    fn tiny_model(q: usize, h: usize) -> ModelConfig {
        let mut c = ModelConfig::new(q, h).with_hidden_units(8);
        c.n_stacks = 1;
        c.pooling_kernels = vec![1];
        c
    }

    #[test]
    fn validation_window_counts() {
        let p = pool(5, 40);
        let model = ForecastModel::new(tiny_model(12, 6), &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let std = Strategy::new(StrategyKind::Standard);
        let aug = Augmenter::new(std.augmenter.clone());
        assert_eq!(validate(&model, &p, &std, &aug, &mut rng).unwrap().1, 5);
        let on = Strategy::new(StrategyKind::Ondat);
        let aug = Augmenter::new(on.augmenter.clone());
        assert_eq!(validate(&model, &p, &on, &aug, &mut rng).unwrap().1, 10);
        assert!(matches!(
            validate(&model, &pool(2, 10), &std, &aug, &mut rng),
            Err(Error::NoValidationWindows)
        ));
    }

    #[test]
    fn ondat_step_doubles_windows() {
        let p = pool(3, 40);
        let cfg = tiny_model(12, 6);
        let mut model = ForecastModel::new(cfg, &mut ChaCha8Rng::seed_from_u64(1)).unwrap();
        let mut opt = OptimizerState::new(&model.params, AdamConfig::default(), LrSchedule::constant());
        let on = Strategy::new(StrategyKind::Ondat);
        let aug = Augmenter::new(on.augmenter.clone());
        let out = train_step(&mut model, &mut opt, &p, &on, &aug, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(out.windows, 6 * (40 - 18 + 1));
    }

    #[test]
    fn max_steps_zero_returns_initial_model() {
        let corpus = SplitCorpus::new(Corpus::new(pool(4, 40), 12, 6, 12).unwrap());
        let tc = TrainConfig {
            max_steps: 0,
            ..TrainConfig::default()
        };
        let cfg = tiny_model(12, 6);
        let res = fit(&corpus, &Strategy::new(StrategyKind::Standard), &cfg, &tc).unwrap();
        let init = ForecastModel::new(cfg, &mut RngStreams::new(0).init).unwrap();
        assert_eq!(res.model, init);
        assert_eq!(res.log.stop_reason, StopReason::MaxSteps);
        assert_eq!(res.log.checks.len(), 1);
    }

    #[test]
    fn jsonl_has_one_line_per_record() {
        let corpus = SplitCorpus::new(Corpus::new(pool(4, 40), 12, 6, 12).unwrap());
        let tc = TrainConfig {
            max_steps: 7,
            val_check_every: 5,
            ..TrainConfig::default()
        };
        let res = fit(&corpus, &Strategy::new(StrategyKind::Standard), &tiny_model(12, 6), &tc).unwrap();
        let mut buf = Vec::new();
        res.log.write_jsonl(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 7 + 2 + 1);
        for line in text.lines() {
            serde_json::from_str::<serde_json::Value>(line).unwrap();
        }
    }
}
