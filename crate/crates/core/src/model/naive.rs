use ndarray::Array2;

use crate::error::{Error, Result};
use crate::tsdata::Series;

/// Repeats the last full season: forecast `i` is `history[t - m + (i mod m)]`.
pub fn seasonal_naive(history: &[f64], period: usize, horizon: usize) -> Result<Vec<f64>> {
    if period == 0 {
        return Err(Error::Config("period must be >= 1".into()));
    }
    let t = history.len();
    if t < period {
        return Err(Error::InsufficientHistory {
            needed: period,
            got: t,
        });
    }
    Ok((0..horizon).map(|i| history[t - period + i % period]).collect())
}

/// Seasonal-naive forecasts for many series, one row each.
pub fn seasonal_naive_batch(history: &[Series], horizon: usize) -> Result<Array2<f64>> {
    let mut out = Array2::zeros((history.len(), horizon));
    for (row, s) in history.iter().enumerate() {
        let f = seasonal_naive(s.values(), s.period(), horizon)?;
        out.row_mut(row).assign(&ndarray::Array1::from(f));
    }
    Ok(out)
}
