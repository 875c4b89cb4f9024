//! Additive seasonal-trend decomposition by iterated loess.

use serde::{Deserialize, Serialize};

use super::loess::{fit_at, loess, Degree};
use crate::error::{Error, Result};

/// Seasonal smoothing span: a loess window over each cycle-subseries, or
/// `Periodic`, which replaces the subseries smoother by its (weighted) mean.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SeasonalWindow {
    Periodic,
    Window(usize),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StlParams {
    pub seasonal_window: SeasonalWindow,
    pub trend_window: usize,
    pub lowpass_window: usize,
    pub inner_iterations: usize,
    pub outer_iterations: usize,
}

fn next_odd(v: usize) -> usize {
    if v % 2 == 0 {
        v + 1
    } else {
        v
    }
}

impl StlParams {
    /// Default spans for period `m`: periodic seasonal, trend window the
    /// next odd integer ≥ 1.5m / (1 − 1.5/7), low-pass the next odd ≥ m,
    /// two inner passes and no robustness passes.
    pub fn for_period(period: usize) -> Self {
        let m = period as f64;
        let trend = (1.5 * m / (1.0 - 1.5 / 7.0)).ceil() as usize;
        Self {
            seasonal_window: SeasonalWindow::Periodic,
            trend_window: next_odd(trend).max(3),
            lowpass_window: next_odd(period).max(3),
            inner_iterations: 2,
            outer_iterations: 0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let check = |name: &str, w: usize| {
            if w < 3 || w % 2 == 0 {
                Err(Error::Config(format!("{name} must be odd and >= 3, got {w}")))
            } else {
                Ok(())
            }
        };
        if let SeasonalWindow::Window(w) = self.seasonal_window {
            check("seasonal_window", w)?;
        }
        check("trend_window", self.trend_window)?;
        check("lowpass_window", self.lowpass_window)?;
        if self.inner_iterations == 0 {
            return Err(Error::Config("inner_iterations must be >= 1".into()));
        }
        Ok(())
    }
}

/// Output of [`stl`] on an already log-scaled series.
#[derive(Debug, Clone, PartialEq)]
pub struct Components {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<f64>,
}

/// Minimum series length for decomposition: three full cycles.
pub fn min_length(period: usize) -> usize {
    3 * period
}

pub fn stl(values: &[f64], period: usize, params: &StlParams) -> Result<Components> {
    let skip = |reason: String| Error::DecompositionSkipped {
        id: String::new(),
        reason,
    };
    if period < 2 {
        return Err(skip(format!("period {period} < 2")));
    }
    if values.len() < min_length(period) {
        return Err(skip(format!(
            "length {} < {} (three cycles of period {period})",
            values.len(),
            min_length(period)
        )));
    }
    if let Some(i) = values.iter().position(|v| !v.is_finite()) {
        return Err(skip(format!("non-finite value at index {i}")));
    }
    params.validate()?;

    let n = values.len();
    let x: Vec<f64> = (0..n).map(|i| i as f64).collect();
    let mut trend = vec![0.0; n];
    let mut seasonal = vec![0.0; n];
    let mut robustness: Option<Vec<f64>> = None;

    for outer in 0..=params.outer_iterations {
        for _ in 0..params.inner_iterations {
            let detrended: Vec<f64> = values.iter().zip(&trend).map(|(y, t)| y - t).collect();
            let cycle = smooth_subseries(&detrended, period, params.seasonal_window, robustness.as_deref());
            let low = lowpass(&cycle, period, params.lowpass_window)?;
            for i in 0..n {
                seasonal[i] = cycle[period + i] - low[i];
            }
            let deseasonalized: Vec<f64> =
                values.iter().zip(&seasonal).map(|(y, s)| y - s).collect();
            trend = loess(
                &x,
                &deseasonalized,
                params.trend_window,
                Degree::Linear,
                robustness.as_deref(),
            )?;
        }
        if outer < params.outer_iterations {
            let residual: Vec<f64> = (0..n).map(|i| values[i] - trend[i] - seasonal[i]).collect();
            robustness = Some(bisquare_weights(&residual));
        }
    }

    let remainder = (0..n).map(|i| values[i] - trend[i] - seasonal[i]).collect();
    Ok(Components {
        trend,
        seasonal,
        remainder,
    })
}

/// Smooths each cycle-subseries and extends it by one value at both ends.
///
/// Slot `k * period + j` of the output holds cycle position `j` at time
/// `(k - 1) * period + j`, so the result has length `n + 2 * period`.
fn smooth_subseries(
    detrended: &[f64],
    period: usize,
    window: SeasonalWindow,
    robustness: Option<&[f64]>,
) -> Vec<f64> {
    let n = detrended.len();
    let mut out = vec![0.0; n + 2 * period];
    for j in 0..period {
        let idx: Vec<usize> = (j..n).step_by(period).collect();
        let k = idx.len();
        let sub: Vec<f64> = idx.iter().map(|&i| detrended[i]).collect();
        let sub_w: Option<Vec<f64>> = robustness.map(|rw| idx.iter().map(|&i| rw[i]).collect());

        match window {
            SeasonalWindow::Periodic => {
                let mean = weighted_mean(&sub, sub_w.as_deref());
                for slot in 0..k + 2 {
                    out[slot * period + j] = mean;
                }
            }
            SeasonalWindow::Window(w) => {
                let xs: Vec<f64> = (0..k).map(|i| i as f64).collect();
                for slot in 0..k + 2 {
                    let pos = slot as f64 - 1.0;
                    out[slot * period + j] = fit_at(&xs, &sub, pos, w, Degree::Constant, sub_w.as_deref());
                }
            }
        }
    }
    out
}

fn weighted_mean(v: &[f64], w: Option<&[f64]>) -> f64 {
    match w {
        Some(w) => {
            let total: f64 = w.iter().sum();
            if total > 0.0 {
                v.iter().zip(w).map(|(a, b)| a * b).sum::<f64>() / total
            } else {
                v.iter().sum::<f64>() / v.len() as f64
            }
        }
        None => v.iter().sum::<f64>() / v.len() as f64,
    }
}

fn moving_average(v: &[f64], len: usize) -> Vec<f64> {
    let out_len = v.len() + 1 - len;
    let mut out = Vec::with_capacity(out_len);
    let mut sum: f64 = v[..len].iter().sum();
    out.push(sum / len as f64);
    for i in len..v.len() {
        sum += v[i] - v[i - len];
        out.push(sum / len as f64);
    }
    out
}

/// Low-pass filter of the extended cycle-subseries: moving averages of length
/// `period`, `period` and 3, then a linear loess pass.
fn lowpass(cycle: &[f64], period: usize, window: usize) -> Result<Vec<f64>> {
    let a = moving_average(cycle, period);
    let b = moving_average(&a, period);
    let c = moving_average(&b, 3);
    let x: Vec<f64> = (0..c.len()).map(|i| i as f64).collect();
    loess(&x, &c, window, Degree::Linear, None)
}

fn bisquare_weights(residual: &[f64]) -> Vec<f64> {
    let mut abs: Vec<f64> = residual.iter().map(|r| r.abs()).collect();
    abs.sort_by(f64::total_cmp);
    let n = abs.len();
    let median = if n % 2 == 1 {
        abs[n / 2]
    } else {
        0.5 * (abs[n / 2 - 1] + abs[n / 2])
    };
    let h = 6.0 * median;
    residual
        .iter()
        .map(|r| {
            if h <= 0.0 {
                return 1.0;
            }
            let u = r.abs() / h;
            if u < 1.0 {
                let c = 1.0 - u * u;
                c * c
            } else {
                0.0
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_spans() {
        let p = StlParams::for_period(12);
        assert_eq!(p.trend_window, 23);
        assert_eq!(p.lowpass_window, 13);
        assert_eq!(p.seasonal_window, SeasonalWindow::Periodic);
        let p = StlParams::for_period(4);
        assert_eq!(p.trend_window, 9);
        assert_eq!(p.lowpass_window, 5);
        p.validate().unwrap();
    }

    #[test]
    fn rejects_even_windows_and_short_input() {
        let mut p = StlParams::for_period(12);
        p.trend_window = 24;
        assert!(p.validate().is_err());
        let p = StlParams::for_period(12);
        assert!(matches!(
            stl(&[1.0; 35], 12, &p),
            Err(Error::DecompositionSkipped { .. })
        ));
        assert!(stl(&[1.0; 36], 12, &p).is_ok());
        assert!(stl(&[1.0; 36], 1, &p).is_err());
    }

    #[test]
    fn moving_average_lengths() {
        let v: Vec<f64> = (0..10).map(f64::from).collect();
        let a = moving_average(&v, 4);
        assert_eq!(a.len(), 7);
        assert!((a[0] - 1.5).abs() < 1e-12);
        assert!((a[6] - 7.5).abs() < 1e-12);
    }

    #[test]
    fn constant_series_has_no_structure() {
        let y = vec![2.5; 60];
        let c = stl(&y, 12, &StlParams::for_period(12)).unwrap();
        for i in 0..60 {
            assert!((c.trend[i] - 2.5).abs() < 1e-6);
            assert!(c.seasonal[i].abs() < 1e-6);
            assert!(c.remainder[i].abs() < 1e-6);
        }
    }

    #[test]
    fn periodic_pattern_is_captured_exactly() {
        let pattern = [0.3, -0.1, 0.5, 0.2, -0.4, 0.0, 0.1];
        let y: Vec<f64> = (0..49).map(|i| 4.0 + pattern[i % 7]).collect();
        let c = stl(&y, 7, &StlParams::for_period(7)).unwrap();
        assert!(c.remainder.iter().all(|r| r.abs() < 1e-6));
    }

    #[test]
    fn windowed_seasonal_smoother_runs() {
        let y: Vec<f64> = (0..72)
            .map(|i| 1.0 + 0.01 * i as f64 + (i as f64 * std::f64::consts::TAU / 12.0).sin())
            .collect();
        let mut p = StlParams::for_period(12);
        p.seasonal_window = SeasonalWindow::Window(7);
        let c = stl(&y, 12, &p).unwrap();
        for i in 0..72 {
            let back = c.trend[i] + c.seasonal[i] + c.remainder[i];
            assert!((back - y[i]).abs() < 1e-9);
        }
        assert!(c.remainder.iter().all(|r| r.abs() < 0.05));
    }
}
