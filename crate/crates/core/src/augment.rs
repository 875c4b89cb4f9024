//! Synthetic series by decomposing, resampling the remainder and recombining.
//!
//! The pipeline for one series is: log transform, STL, bootstrap the
//! remainder (moving blocks or i.i.d.), add trend and seasonal back, undo the
//! log. Series that cannot be decomposed pass through unchanged so batch
//! shapes never depend on which series were sampled.

use std::collections::{HashMap, HashSet};
use std::sync::{Arc, Mutex, OnceLock};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::decomp::{self, Decomposition, StlParams};
use crate::error::{Error, Result};
use crate::tsdata::Series;

pub const SYNTHETIC_SUFFIX: &str = "#syn";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    /// Moving-blocks bootstrap of the remainder.
    Mbb,
    /// i.i.d. bootstrap of the remainder, ignoring order.
    FixedBootstrap,
    Identity,
}

impl std::str::FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mbb" => Ok(Method::Mbb),
            "fixed" | "fixed_bootstrap" => Ok(Method::FixedBootstrap),
            "identity" => Ok(Method::Identity),
            other => Err(Error::Config(format!("unknown augmentation method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmenterConfig {
    pub method: Method,
    /// Block length for MBB; the series period when unset.
    #[serde(default)]
    pub block_size: Option<usize>,
    /// STL spans; [`StlParams::for_period`] when unset.
    #[serde(default)]
    pub stl: Option<StlParams>,
    /// Synthetic copies per original.
    #[serde(default = "one")]
    pub multiplicity: usize,
    /// Reuse trend/seasonal per (series, split) across calls. Only the
    /// resampling is random, so this leaves the output distribution unchanged.
    #[serde(default)]
    pub cache_decompositions: bool,
}

fn one() -> usize {
    1
}

impl AugmenterConfig {
    pub fn new(method: Method) -> Self {
        Self {
            method,
            block_size: None,
            stl: None,
            multiplicity: 1,
            cache_decompositions: false,
        }
    }

    pub fn mbb() -> Self {
        Self::new(Method::Mbb)
    }

    pub fn fixed_bootstrap() -> Self {
        Self::new(Method::FixedBootstrap)
    }

    pub fn identity() -> Self {
        Self::new(Method::Identity)
    }

    pub fn validate(&self) -> Result<()> {
        if self.multiplicity == 0 {
            return Err(Error::Config("multiplicity must be >= 1".into()));
        }
        if let Some(l) = self.block_size {
            if self.method == Method::Mbb && l < 2 {
                return Err(Error::Config(format!("MBB block size must be >= 2, got {l}")));
            }
        }
        if let Some(p) = &self.stl {
            p.validate()?;
        }
        Ok(())
    }

    fn stl_params(&self, period: usize) -> StlParams {
        self.stl.clone().unwrap_or_else(|| StlParams::for_period(period))
    }
}

/// Moving-blocks bootstrap: concatenates ⌈t/l⌉ blocks drawn uniformly from
/// the `t - l + 1` overlapping length-`l` blocks, truncated to length `t`.
pub fn mbb_resample<R: Rng + ?Sized>(remainder: &[f64], block: usize, rng: &mut R) -> Result<Vec<f64>> {
    let t = remainder.len();
    if block < 2 {
        return Err(Error::Config(format!("MBB block size must be >= 2, got {block}")));
    }
    if t < block {
        return Err(Error::BlockTooLong { len: t, block });
    }
    let n_blocks = t - block + 1;
    let draws = t.div_ceil(block);
    let mut out = Vec::with_capacity(draws * block);
    for _ in 0..draws {
        let start = rng.gen_range(0..n_blocks);
        out.extend_from_slice(&remainder[start..start + block]);
    }
    out.truncate(t);
    Ok(out)
}

/// Ordinary bootstrap: `t` i.i.d. draws with replacement.
pub fn fixed_bootstrap_resample<R: Rng + ?Sized>(remainder: &[f64], rng: &mut R) -> Vec<f64> {
    let t = remainder.len();
    (0..t).map(|_| remainder[rng.gen_range(0..t)]).collect()
}

/// One synthetic version of `series`, id suffixed with `#syn`.
pub fn synthesize<R: Rng + ?Sized>(series: &Series, config: &AugmenterConfig, rng: &mut R) -> Series {
    Augmenter::new(config.clone()).synthesize(series, rng)
}

/// Originals followed by `multiplicity` synthetics per original, in order.
pub fn augment_batch<R: Rng + ?Sized>(batch: &[Series], config: &AugmenterConfig, rng: &mut R) -> Vec<Series> {
    Augmenter::new(config.clone()).augment_batch(batch, rng)
}

type CacheKey = (String, usize);

/// Augmentation with an optional per-series decomposition cache.
#[derive(Debug)]
pub struct Augmenter {
    config: AugmenterConfig,
    cache: Option<Mutex<HashMap<CacheKey, Option<Arc<Decomposition>>>>>,
}

impl Augmenter {
    pub fn new(config: AugmenterConfig) -> Self {
        let cache = config.cache_decompositions.then(|| Mutex::new(HashMap::new()));
        Self { config, cache }
    }

    pub fn config(&self) -> &AugmenterConfig {
        &self.config
    }

    pub fn synthesize<R: Rng + ?Sized>(&self, series: &Series, rng: &mut R) -> Series {
        let values = self.synthetic_values(series, rng);
        Series::from_parts(format!("{}{SYNTHETIC_SUFFIX}", series.id()), series.period(), values)
    }

    pub fn augment_batch<R: Rng + ?Sized>(&self, batch: &[Series], rng: &mut R) -> Vec<Series> {
        let k = self.config.multiplicity.max(1);
        // One independent stream per synthetic so results do not depend on
        // how the work is scheduled.
        let seeds: Vec<u64> = (0..batch.len() * k).map(|_| rng.gen()).collect();
        let synthetic: Vec<Vec<f64>> = seeds
            .par_iter()
            .enumerate()
            .map(|(i, &seed)| {
                let mut sub = ChaCha8Rng::seed_from_u64(seed);
                self.synthetic_values(&batch[i / k], &mut sub)
            })
            .collect();

        let mut taken: HashSet<String> = batch.iter().map(|s| s.id().to_string()).collect();
        let mut out = batch.to_vec();
        out.reserve(synthetic.len());
        for (i, values) in synthetic.into_iter().enumerate() {
            let orig = &batch[i / k];
            let id = unique_id(orig.id(), i % k, &mut taken);
            out.push(Series::from_parts(id, orig.period(), values));
        }
        out
    }

    fn synthetic_values<R: Rng + ?Sized>(&self, series: &Series, rng: &mut R) -> Vec<f64> {
        if self.config.method == Method::Identity {
            return series.values().to_vec();
        }
        let Some(dec) = self.decomposition(series) else {
            return series.values().to_vec();
        };
        let resampled = match self.config.method {
            Method::Mbb => {
                let block = self.config.block_size.unwrap_or(series.period());
                match mbb_resample(&dec.remainder, block, rng) {
                    Ok(r) => r,
                    Err(e) => {
                        warn_once(series.id(), &e);
                        return series.values().to_vec();
                    }
                }
            }
            Method::FixedBootstrap => fixed_bootstrap_resample(&dec.remainder, rng),
            Method::Identity => unreachable!(),
        };
        let log_values: Vec<f64> = dec
            .trend
            .iter()
            .zip(&dec.seasonal)
            .zip(&resampled)
            .map(|((t, s), r)| t + s + r)
            .collect();
        match decomp::inverse_log(&log_values, dec.log_offset) {
            Ok(v) => v,
            Err(e) => {
                warn_once(series.id(), &decomp::with_series(e, series.id()));
                series.values().to_vec()
            }
        }
    }

    fn decomposition(&self, series: &Series) -> Option<Arc<Decomposition>> {
        let compute = || match decomp::decompose(series, &self.config.stl_params(series.period())) {
            Ok(d) => Some(Arc::new(d)),
            Err(e) => {
                warn_once(series.id(), &e);
                None
            }
        };
        match &self.cache {
            None => compute(),
            Some(cache) => {
                let key = (series.id().to_string(), series.len());
                if let Some(hit) = cache.lock().expect("cache poisoned").get(&key) {
                    return hit.clone();
                }
                let dec = compute();
                cache.lock().expect("cache poisoned").insert(key, dec.clone());
                dec
            }
        }
    }
}

fn unique_id(base: &str, copy: usize, taken: &mut HashSet<String>) -> String {
    let mut id = if copy == 0 {
        format!("{base}{SYNTHETIC_SUFFIX}")
    } else {
        format!("{base}{SYNTHETIC_SUFFIX}{}", copy + 1)
    };
    let mut bump = 2;
    while taken.contains(&id) {
        id = format!("{base}{SYNTHETIC_SUFFIX}{}_{bump}", copy + 1);
        bump += 1;
    }
    taken.insert(id.clone());
    id
}

// Short series fail decomposition on every batch; one warning per id is enough.
fn warn_once(id: &str, err: &Error) {
    static WARNED: OnceLock<Mutex<HashSet<String>>> = OnceLock::new();
    let set = WARNED.get_or_init(|| Mutex::new(HashSet::new()));
    if set.lock().map(|mut s| s.insert(id.to_string())).unwrap_or(false) {
        log::warn!("augmentation falls back to identity for `{id}`: {err}");
    }
}
