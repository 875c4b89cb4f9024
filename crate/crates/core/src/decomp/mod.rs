//! Variance stabilisation and seasonal-trend decomposition.

mod loess;
mod stl;

pub use loess::{loess, loess_at, Degree};
pub use stl::{min_length, stl, Components, SeasonalWindow, StlParams};

use crate::error::{Error, Result};
use crate::tsdata::Series;

/// Trend, seasonal and remainder of `ln(y + log_offset)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Decomposition {
    pub trend: Vec<f64>,
    pub seasonal: Vec<f64>,
    pub remainder: Vec<f64>,
    pub log_offset: f64,
}

impl Decomposition {
    pub fn len(&self) -> usize {
        self.trend.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trend.is_empty()
    }

    /// trend + seasonal + remainder, i.e. the log-scale input.
    pub fn reconstruct(&self) -> Vec<f64> {
        self.trend
            .iter()
            .zip(&self.seasonal)
            .zip(&self.remainder)
            .map(|((t, s), r)| t + s + r)
            .collect()
    }
}

/// Natural log, shifting by `1 - min` first when any value is ≤ 0.
///
/// Returns the transformed values and the offset that was added.
pub fn log_transform(values: &[f64]) -> (Vec<f64>, f64) {
    let min = values.iter().copied().fold(f64::INFINITY, f64::min);
    let offset = if min > 0.0 { 0.0 } else { 1.0 - min };
    let out = values.iter().map(|v| (v + offset).ln()).collect();
    (out, offset)
}

/// `exp(v) - offset`, failing on overflow.
pub fn inverse_log(values: &[f64], offset: f64) -> Result<Vec<f64>> {
    values
        .iter()
        .enumerate()
        .map(|(index, v)| {
            let out = v.exp() - offset;
            if out.is_finite() {
                Ok(out)
            } else {
                Err(Error::ExpOverflow {
                    id: String::new(),
                    index,
                })
            }
        })
        .collect()
}

/// Log-transform `series` and run [`stl`] with its period.
pub fn decompose(series: &Series, params: &StlParams) -> Result<Decomposition> {
    let (logged, log_offset) = log_transform(series.values());
    let c = stl(&logged, series.period(), params).map_err(|e| with_series(e, series.id()))?;
    Ok(Decomposition {
        trend: c.trend,
        seasonal: c.seasonal,
        remainder: c.remainder,
        log_offset,
    })
}

/// Fills in the series id on errors raised by id-agnostic routines.
pub(crate) fn with_series(err: Error, series_id: &str) -> Error {
    match err {
        Error::DecompositionSkipped { reason, .. } => Error::DecompositionSkipped {
            id: series_id.to_string(),
            reason,
        },
        Error::ExpOverflow { index, .. } => Error::ExpOverflow {
            id: series_id.to_string(),
            index,
        },
        other => other,
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::f64::consts::E;

    #[test]
    fn log_of_powers_of_e() {
        let (out, offset) = log_transform(&[1.0, E, E * E]);
        assert_eq!(offset, 0.0);
        for (o, want) in out.iter().zip([0.0, 1.0, 2.0]) {
            assert!((o - want).abs() < 1e-15);
        }
    }

    #[test]
    fn non_positive_values_get_offset() {
        let (out, offset) = log_transform(&[0.0, 1.0]);
        assert_eq!(offset, 1.0);
        assert_eq!(out, vec![1f64.ln(), 2f64.ln()]);
        let (out, offset) = log_transform(&[-3.0, 2.0]);
        assert_eq!(offset, 4.0);
        assert!(out.iter().all(|v| v.is_finite()));
    }

    #[test]
    fn inverse_log_basic_and_round_trip() {
        let back = inverse_log(&[0.0, 1.0], 0.0).unwrap();
        assert_eq!(back[0], 1.0);
        assert!((back[1] - E).abs() < 1e-15);

        let y = [0.0, 1.0, 5.0];
        let (l, off) = log_transform(&y);
        let back = inverse_log(&l, off).unwrap();
        for (a, b) in back.iter().zip(&y) {
            assert!((a - b).abs() <= 1e-12 * b.abs().max(1.0));
        }
    }

    #[test]
    fn inverse_log_overflow_names_index() {
        match inverse_log(&[0.0, 800.0], 0.0) {
            Err(Error::ExpOverflow { index, .. }) => assert_eq!(index, 1),
            other => panic!("unexpected {other:?}"),
        }
    }

    #[test]
    fn decompose_names_series_on_failure() {
        let s = Series::new("short", 12, vec![1.0; 20]).unwrap();
        match decompose(&s, &StlParams::for_period(12)) {
            Err(Error::DecompositionSkipped { id, .. }) => assert_eq!(id, "short"),
            other => panic!("unexpected {other:?}"),
        }
    }
}
