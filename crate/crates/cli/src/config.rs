//! Experiment files: one TOML document per benchmark.

use std::collections::BTreeSet;
use std::path::{Path, PathBuf};

use anyhow::Context;
use clap::ValueEnum;
use ondat::model::{LossKind, ModelConfig, WindowScaling};
use ondat::train::{Strategy, StrategyKind, TrainConfig};
use serde::{Deserialize, Serialize};

/// Named bundles of model and training defaults.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "snake_case")]
pub enum Preset {
    /// 512 hidden units, 1500 steps, STL recomputed on every call.
    Paper,
    /// 64 hidden units, 300 steps, decompositions cached per series.
    #[default]
    Desk,
}

impl Preset {
    pub fn hidden_units(self) -> usize {
        match self {
            Preset::Paper => 512,
            Preset::Desk => 64,
        }
    }

    pub fn max_steps(self) -> u64 {
        match self {
            Preset::Paper => 1500,
            Preset::Desk => 300,
        }
    }

    pub fn cache_decompositions(self) -> bool {
        self == Preset::Desk
    }

    pub fn model(self, input_size: usize, horizon: usize) -> ModelConfig {
        ModelConfig::new(input_size, horizon).with_hidden_units(self.hidden_units())
    }

    pub fn train(self) -> TrainConfig {
        TrainConfig {
            max_steps: self.max_steps(),
            ..TrainConfig::default()
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub name: String,
    pub path: PathBuf,
    pub period: usize,
    pub horizon: usize,
    pub input_size: usize,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelOverrides {
    pub hidden_units: Option<usize>,
    pub n_stacks: Option<usize>,
    pub blocks_per_stack: Option<usize>,
    pub hidden_layers: Option<usize>,
    pub pooling_kernels: Option<Vec<usize>>,
    pub loss: Option<LossKind>,
    pub window_scaling: Option<WindowScaling>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainOverrides {
    pub max_steps: Option<u64>,
    pub batch_size: Option<usize>,
    pub val_check_every: Option<u64>,
    pub patience: Option<u64>,
    pub learning_rate: Option<f64>,
    pub lr_decays: Option<u32>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AugmentOverrides {
    pub block_size: Option<usize>,
    pub cache_decompositions: Option<bool>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub preset: Preset,
    pub output_dir: PathBuf,
    pub datasets: Vec<DatasetConfig>,
    pub strategies: Vec<String>,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default)]
    pub timing_reference: Option<String>,
    #[serde(default)]
    pub model: ModelOverrides,
    #[serde(default)]
    pub train: TrainOverrides,
    #[serde(default)]
    pub augment: AugmentOverrides,
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

/// A validated experiment with paths made absolute and presets expanded.
#[derive(Debug, Clone)]
pub struct Experiment {
    pub datasets: Vec<DatasetConfig>,
    pub strategies: Vec<Strategy>,
    pub seeds: Vec<u64>,
    /// `input_size` and `horizon` are replaced per dataset.
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub timing_reference: Option<String>,
    pub output_dir: PathBuf,
}

/// Every problem found in a config, reported together.
#[derive(Debug)]
pub struct ConfigErrors(pub Vec<String>);

impl std::fmt::Display for ConfigErrors {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{} problem(s) in experiment config:", self.0.len())?;
        for p in &self.0 {
            write!(f, "\n  - {p}")?;
        }
        Ok(())
    }
}

impl std::error::Error for ConfigErrors {}

impl ExperimentConfig {
    pub fn load(path: &Path) -> anyhow::Result<Self> {
        let text = std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
        toml::from_str(&text).with_context(|| format!("parsing {}", path.display()))
    }

    /// Checks everything and expands the preset. Relative paths are taken
    /// relative to `base` (the directory holding the config file).
    pub fn resolve(&self, base: &Path) -> Result<Experiment, ConfigErrors> {
        let mut problems = Vec::new();

        if self.datasets.is_empty() {
            problems.push("no datasets listed".to_string());
        }
        let mut names = BTreeSet::new();
        let mut datasets = Vec::with_capacity(self.datasets.len());
        for d in &self.datasets {
            if !names.insert(d.name.as_str()) {
                problems.push(format!("dataset name `{}` used twice", d.name));
            }
            let path = base.join(&d.path);
            if !path.is_file() {
                problems.push(format!("dataset `{}`: file {} does not exist", d.name, path.display()));
            }
            for (field, v) in [("period", d.period), ("horizon", d.horizon), ("input_size", d.input_size)] {
                if v == 0 {
                    problems.push(format!("dataset `{}`: {field} must be >= 1", d.name));
                }
            }
            datasets.push(DatasetConfig { path, ..d.clone() });
        }

        if self.strategies.is_empty() {
            problems.push("strategy list is empty".to_string());
        }
        let cache = self
            .augment
            .cache_decompositions
            .unwrap_or(self.preset.cache_decompositions());
        let mut strategies = Vec::new();
        let mut seen = BTreeSet::new();
        for name in &self.strategies {
            match name.parse::<StrategyKind>() {
                Ok(kind) => {
                    if !seen.insert(kind) {
                        problems.push(format!("strategy `{name}` listed twice"));
                        continue;
                    }
                    let mut s = Strategy::new(kind);
                    s.augmenter.cache_decompositions = cache;
                    if kind != StrategyKind::Standard {
                        s.augmenter.block_size = self.augment.block_size;
                    }
                    if let Err(e) = s.validate() {
                        problems.push(format!("strategy `{name}`: {e}"));
                    }
                    strategies.push(s);
                }
                Err(e) => problems.push(e.to_string()),
            }
        }
        if let Some(r) = &self.timing_reference {
            if !strategies.iter().any(|s| s.name() == r) {
                problems.push(format!("timing_reference `{r}` is not among the strategies"));
            }
        }

        if self.seeds.is_empty() {
            problems.push("seed list is empty".to_string());
        }

        let model = self.model_config();
        // q and h come from each dataset; check the rest with the first one
        let probe = self.datasets.first().map_or((1, 1), |d| (d.input_size.max(1), d.horizon.max(1)));
        let probe_cfg = ModelConfig {
            input_size: probe.0,
            horizon: probe.1,
            ..model.clone()
        };
        if let Err(e) = probe_cfg.validate() {
            problems.push(format!("model: {e}"));
        }
        let train = self.train_config();
        if let Err(e) = train.validate() {
            problems.push(format!("train: {e}"));
        }

        if !problems.is_empty() {
            return Err(ConfigErrors(problems));
        }
        Ok(Experiment {
            datasets,
            strategies,
            seeds: self.seeds.clone(),
            model,
            train,
            timing_reference: self.timing_reference.clone(),
            output_dir: base.join(&self.output_dir),
        })
    }

    fn model_config(&self) -> ModelConfig {
        let o = &self.model;
        let mut m = self.preset.model(1, 1);
        if let Some(v) = o.hidden_units {
            m.hidden_units = v;
        }
        if let Some(v) = o.n_stacks {
            m.n_stacks = v;
            if o.pooling_kernels.is_none() {
                m.pooling_kernels = vec![1; v];
            }
        }
        if let Some(v) = o.blocks_per_stack {
            m.blocks_per_stack = v;
        }
        if let Some(v) = o.hidden_layers {
            m.hidden_layers = v;
        }
        if let Some(v) = &o.pooling_kernels {
            m.pooling_kernels = v.clone();
        }
        if let Some(v) = o.loss {
            m.loss = v;
        }
        if let Some(v) = o.window_scaling {
            m.window_scaling = v;
        }
        m
    }

    fn train_config(&self) -> TrainConfig {
        let o = &self.train;
        let mut t = self.preset.train();
        if let Some(v) = o.max_steps {
            t.max_steps = v;
        }
        if let Some(v) = o.batch_size {
            t.batch_size = v;
        }
        if let Some(v) = o.val_check_every {
            t.val_check_every = v;
        }
        if let Some(v) = o.patience {
            t.patience = v;
        }
        if let Some(v) = o.learning_rate {
            t.learning_rate = v;
        }
        if let Some(v) = o.lr_decays {
            t.lr_decays = v;
        }
        t
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn parse(text: &str) -> ExperimentConfig {
        toml::from_str(text).unwrap()
    }

    #[test]
    fn presets_expand_to_documented_defaults() {
        assert_eq!((Preset::Paper.hidden_units(), Preset::Paper.max_steps()), (512, 1500));
        assert_eq!((Preset::Desk.hidden_units(), Preset::Desk.max_steps()), (64, 300));
        let m = Preset::Paper.model(8, 8);
        assert_eq!((m.n_stacks, m.hidden_layers, m.pooling_kernels.clone()), (3, 2, vec![1, 1, 1]));
    }

    #[test]
    fn every_problem_is_listed() {
        let cfg = parse(
            r#"
            output_dir = "out"
            strategies = ["standard", "bogus", "standard"]
            seeds = []
            timing_reference = "ondat"
            [[datasets]]
            name = "a"
            path = "missing.csv"
            period = 0
            horizon = 8
            input_size = 8
            [train]
            batch_size = 0
            "#,
        );
        let errs = cfg.resolve(Path::new("/nonexistent")).unwrap_err().0;
        let joined = errs.join("\n");
        for needle in ["does not exist", "period must be", "bogus", "listed twice", "timing_reference", "seed list", "train:"] {
            assert!(joined.contains(needle), "missing `{needle}` in\n{joined}");
        }
    }

    #[test]
    fn empty_strategy_list_is_an_error() {
        let cfg = parse("output_dir = \"o\"\nstrategies = []\ndatasets = []\n");
        let errs = cfg.resolve(Path::new(".")).unwrap_err().0;
        assert!(errs.iter().any(|e| e.contains("strategy list is empty")));
        assert!(errs.iter().any(|e| e.contains("no datasets")));
    }

    #[test]
    fn overrides_apply_on_top_of_preset() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("d.csv"), "unique_id,ds,y\n").unwrap();
        let cfg = parse(
            r#"
            preset = "paper"
            output_dir = "runs"
            strategies = ["standard", "ondat"]
            [[datasets]]
            name = "d"
            path = "d.csv"
            period = 12
            horizon = 18
            input_size = 24
            [model]
            hidden_units = 32
            n_stacks = 2
            [train]
            max_steps = 10
            [augment]
            block_size = 6
            "#,
        );
        let exp = cfg.resolve(dir.path()).unwrap();
        assert_eq!(exp.model.hidden_units, 32);
        assert_eq!(exp.model.pooling_kernels, vec![1, 1]);
        assert_eq!(exp.train.max_steps, 10);
        assert_eq!(exp.seeds, vec![0]);
        assert_eq!(exp.output_dir, dir.path().join("runs"));
        assert!(!exp.strategies[1].augmenter.cache_decompositions);
        assert_eq!(exp.strategies[1].augmenter.block_size, Some(6));
        assert_eq!(exp.strategies[0].augmenter.block_size, None);
    }

    #[test]
    fn unknown_keys_are_rejected() {
        assert!(toml::from_str::<ExperimentConfig>("output_dir = \"o\"\nstrategies = []\ndatasets = []\nfoo = 1\n").is_err());
    }
}
