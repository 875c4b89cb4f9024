//! Seeded generator of seasonal test corpora: linear trend plus a
//! two-harmonic seasonal pattern plus AR(1) noise.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::tsdata::Series;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SyntheticSpec {
    pub n_series: usize,
    pub length: usize,
    pub period: usize,
    /// AR(1) coefficient of the noise.
    pub ar: f64,
    /// Innovation standard deviation as a fraction of the level.
    pub noise: f64,
    /// Seasonal amplitude range as a fraction of the level.
    pub amplitude: (f64, f64),
    /// Total trend drift over the series as a fraction of the level.
    pub drift: (f64, f64),
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            n_series: 50,
            length: 120,
            period: 12,
            ar: 0.6,
            noise: 0.04,
            amplitude: (0.1, 0.3),
            drift: (-0.2, 0.5),
            seed: 0,
        }
    }
}

/// Generates `spec.n_series` strictly positive series named `syn_0`, `syn_1`, ….
pub fn seasonal_corpus(spec: &SyntheticSpec) -> Vec<Series> {
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    (0..spec.n_series)
        .map(|i| {
            let values = one_series(spec, &mut rng);
            Series::new(format!("syn_{i}"), spec.period, values).expect("generated values are finite")
        })
        .collect()
}

fn one_series(spec: &SyntheticSpec, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let level: f64 = rng.gen_range(50.0..150.0);
    let drift = rng.gen_range(spec.drift.0..=spec.drift.1) * level;
    let amp = rng.gen_range(spec.amplitude.0..=spec.amplitude.1) * level;
    let phase1: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let phase2: f64 = rng.gen_range(0.0..std::f64::consts::TAU);
    let mix: f64 = rng.gen_range(0.0..0.5);
    let sigma = spec.noise * level;
    let m = spec.period as f64;
    let n = spec.length;

    let mut e = 0.0;
    (0..n)
        .map(|t| {
            let tf = t as f64;
            let angle = std::f64::consts::TAU * tf / m;
            let seasonal = amp * ((1.0 - mix) * (angle + phase1).sin() + mix * (2.0 * angle + phase2).sin());
            let z: f64 = rng.sample(StandardNormal);
            e = spec.ar * e + sigma * z;
            let y = level + drift * tf / n as f64 + seasonal + e;
            y.max(1e-3 * level)
        })
        .collect()
}
