//! Locally weighted regression with tricube distance weights.

use crate::error::{Error, Result};

/// Degree of the local polynomial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Degree {
    Constant,
    Linear,
}

/// Smooths `y` at every abscissa in `x`.
///
/// `x` must be sorted ascending. Each point is fitted from its `window`
/// nearest neighbours; `weights`, when given, multiplies the tricube weights
/// (robustness weights in STL).
pub fn loess(
    x: &[f64],
    y: &[f64],
    window: usize,
    degree: Degree,
    weights: Option<&[f64]>,
) -> Result<Vec<f64>> {
    check_inputs(x, y, window, weights)?;
    Ok(x.iter()
        .map(|&x0| fit_at(x, y, x0, window, degree, weights))
        .collect())
}

/// Evaluates the local fit at an arbitrary `x0`, which may lie outside the
/// data range (STL extends each cycle-subseries by one point on either side).
pub fn loess_at(
    x: &[f64],
    y: &[f64],
    x0: f64,
    window: usize,
    degree: Degree,
    weights: Option<&[f64]>,
) -> Result<f64> {
    check_inputs(x, y, window, weights)?;
    Ok(fit_at(x, y, x0, window, degree, weights))
}

fn check_inputs(x: &[f64], y: &[f64], window: usize, weights: Option<&[f64]>) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!(
            "loess: x has {} points, y has {}",
            x.len(),
            y.len()
        )));
    }
    if let Some(w) = weights {
        if w.len() != x.len() {
            return Err(Error::Shape(format!(
                "loess: {} weights for {} points",
                w.len(),
                x.len()
            )));
        }
    }
    if x.is_empty() {
        return Err(Error::Shape("loess: no points".into()));
    }
    if window < 2 {
        return Err(Error::Config(format!("loess window {window} < 2")));
    }
    Ok(())
}

/// Picks the contiguous run of `q` sorted points closest to `x0`.
fn neighbourhood(x: &[f64], x0: f64, q: usize) -> (usize, usize) {
    let n = x.len();
    let q = q.min(n);
    let p = x.partition_point(|&v| v < x0);
    let mut lo = p.saturating_sub(q / 2).min(n - q);
    while lo > 0 && x0 - x[lo - 1] < x[lo + q - 1] - x0 {
        lo -= 1;
    }
    while lo + q < n && x[lo + q] - x0 < x0 - x[lo] {
        lo += 1;
    }
    (lo, lo + q)
}

fn tricube(u: f64) -> f64 {
    if u >= 1.0 {
        0.0
    } else {
        let c = 1.0 - u * u * u;
        c * c * c
    }
}

pub(crate) fn fit_at(
    x: &[f64],
    y: &[f64],
    x0: f64,
    window: usize,
    degree: Degree,
    weights: Option<&[f64]>,
) -> f64 {
    let n = x.len();
    let (lo, hi) = neighbourhood(x, x0, window);
    let mut h = (x0 - x[lo]).max(x[hi - 1] - x0);
    if window > n {
        h += ((window - n) / 2) as f64;
    }

    let mut w = Vec::with_capacity(hi - lo);
    for j in lo..hi {
        let r = (x[j] - x0).abs();
        let base = if h > 0.0 {
            tricube(r / h)
        } else if r == 0.0 {
            1.0
        } else {
            0.0
        };
        w.push(base * weights.map_or(1.0, |rw| rw[j]));
    }
    let total: f64 = w.iter().sum();
    if !(total > 0.0) {
        // Every neighbour was zero-weighted: plain neighbourhood mean.
        return y[lo..hi].iter().sum::<f64>() / (hi - lo) as f64;
    }
    for wj in &mut w {
        *wj /= total;
    }

    let ybar: f64 = w.iter().zip(&y[lo..hi]).map(|(wj, yj)| wj * yj).sum();
    if degree == Degree::Constant {
        return ybar;
    }

    let xbar: f64 = w.iter().zip(&x[lo..hi]).map(|(wj, xj)| wj * xj).sum();
    let sxx: f64 = w
        .iter()
        .zip(&x[lo..hi])
        .map(|(wj, xj)| wj * (xj - xbar) * (xj - xbar))
        .sum();
    // Singular when the weighted spread vanishes relative to the bandwidth;
    // fall back to the weighted mean.
    if !(sxx.sqrt() > 1e-7 * h) {
        return ybar;
    }
    let sxy: f64 = w
        .iter()
        .zip(&x[lo..hi])
        .zip(&y[lo..hi])
        .map(|((wj, xj), yj)| wj * (xj - xbar) * (yj - ybar))
        .sum();
    ybar + sxy / sxx * (x0 - xbar)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn grid(n: usize) -> Vec<f64> {
        (0..n).map(|i| i as f64).collect()
    }

    #[test]
    fn constant_is_reproduced_by_degree_zero() {
        let x = grid(20);
        let y = vec![3.25; 20];
        for window in [3, 5, 7, 31] {
            let fit = loess(&x, &y, window, Degree::Constant, None).unwrap();
            assert!(fit.iter().all(|v| (v - 3.25).abs() < 1e-12));
        }
    }

    #[test]
    fn neighbourhood_is_centred_inside_and_clamped_at_edges() {
        let x = grid(10);
        assert_eq!(neighbourhood(&x, 5.0, 3), (4, 7));
        assert_eq!(neighbourhood(&x, 0.0, 3), (0, 3));
        assert_eq!(neighbourhood(&x, 9.0, 3), (7, 10));
        assert_eq!(neighbourhood(&x, -1.0, 3), (0, 3));
        assert_eq!(neighbourhood(&x, 10.0, 5), (5, 10));
        assert_eq!(neighbourhood(&x, 4.0, 50), (0, 10));
    }

    #[test]
    fn zero_weights_fall_back_to_mean() {
        let x = grid(5);
        let y = vec![1.0, 2.0, 3.0, 4.0, 5.0];
        let rw = vec![0.0; 5];
        let v = loess_at(&x, &y, 2.0, 3, Degree::Linear, Some(&rw)).unwrap();
        assert!((v - 3.0).abs() < 1e-12);
    }

    #[test]
    fn mismatched_lengths_error() {
        assert!(loess(&[0.0, 1.0], &[1.0], 3, Degree::Linear, None).is_err());
        assert!(loess(&[0.0, 1.0], &[1.0, 2.0], 3, Degree::Linear, Some(&[1.0])).is_err());
    }

    proptest! {
        #[test]
        fn linear_fit_is_exact_on_affine_data(
            a in -1e3f64..1e3,
            b in -1e2f64..1e2,
            n in 2usize..80,
            half in 1usize..20,
        ) {
            let window = 2 * half + 1;
            let x = grid(n);
            let y: Vec<f64> = x.iter().map(|xi| a + b * xi).collect();
            let fit = loess(&x, &y, window, Degree::Linear, None).unwrap();
            for (f, t) in fit.iter().zip(&y) {
                prop_assert!((f - t).abs() <= 1e-9 * (1.0 + t.abs()));
            }
            // extrapolated one step beyond each end
            let lo = loess_at(&x, &y, -1.0, window, Degree::Linear, None).unwrap();
            prop_assert!((lo - (a - b)).abs() <= 1e-9 * (1.0 + a.abs() + b.abs()));
        }
    }
}
