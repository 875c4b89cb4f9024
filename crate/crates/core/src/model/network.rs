use ndarray::{s, Array1, Array2, ArrayView2, Axis, Zip};
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{LossKind, ModelConfig, WindowScaling, SCALE_EPS};
use crate::error::{Error, Result};
use crate::eval::SMAPE_EPS;

/// Fully connected layer computing `x · weight + bias`, weight is (in, out).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Dense {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Dense {
    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self {
            weight: Array2::zeros((fan_in, fan_out)),
            bias: Array1::zeros(fan_out),
        }
    }

    fn uniform<R: Rng + ?Sized>(fan_in: usize, fan_out: usize, rng: &mut R) -> Self {
        let bound = (1.0 / fan_in as f64).sqrt();
        Self {
            weight: Array2::from_shape_simple_fn((fan_in, fan_out), || rng.gen_range(-bound..bound)),
            bias: Array1::from_shape_simple_fn(fan_out, || rng.gen_range(-bound..bound)),
        }
    }

    fn apply(&self, x: &Array2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

/// Every trainable tensor of the network, block by block. Gradients and
/// Adam moments use the same shape.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamSet {
    /// Per block: hidden layers followed by the output head.
    pub blocks: Vec<Vec<Dense>>,
}

impl ParamSet {
    pub fn zeros_like(other: &ParamSet) -> Self {
        Self {
            blocks: other
                .blocks
                .iter()
                .map(|b| b.iter().map(|d| Dense::zeros(d.weight.nrows(), d.weight.ncols())).collect())
                .collect(),
        }
    }

    pub fn slices(&self) -> Vec<&[f64]> {
        let mut out = Vec::new();
        for d in self.blocks.iter().flatten() {
            out.push(d.weight.as_slice().expect("standard layout"));
            out.push(d.bias.as_slice().expect("standard layout"));
        }
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut out = Vec::new();
        for d in self.blocks.iter_mut().flatten() {
            out.push(d.weight.as_slice_mut().expect("standard layout"));
            out.push(d.bias.as_slice_mut().expect("standard layout"));
        }
        out
    }

    pub fn num_params(&self) -> usize {
        self.slices().iter().map(|s| s.len()).sum()
    }

    /// Parameter at flat index `i` (slices in order).
    pub fn get(&self, mut i: usize) -> f64 {
        for s in self.slices() {
            if i < s.len() {
                return s[i];
            }
            i -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn set(&mut self, mut i: usize, value: f64) {
        for s in self.slices_mut() {
            if i < s.len() {
                s[i] = value;
                return;
            }
            i -= s.len();
        }
        panic!("parameter index out of range");
    }

    pub fn is_finite(&self) -> bool {
        self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }

    pub fn max_abs_diff(&self, other: &ParamSet) -> f64 {
        self.slices()
            .iter()
            .zip(other.slices())
            .flat_map(|(a, b)| a.iter().zip(b).map(|(x, y)| (x - y).abs()))
            .fold(0.0, f64::max)
    }

    pub fn norm(&self) -> f64 {
        self.slices()
            .iter()
            .flat_map(|s| s.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForecastModel {
    pub config: ModelConfig,
    pub params: ParamSet,
}

impl ForecastModel {
    /// Uniform(±√(1/fan_in)) initialisation for weights and biases.
    pub fn new<R: Rng + ?Sized>(config: ModelConfig, rng: &mut R) -> Result<Self> {
        config.validate()?;
        let blocks = (0..config.n_blocks())
            .map(|b| {
                layer_dims(&config, b)
                    .into_iter()
                    .map(|(i, o)| Dense::uniform(i, o, rng))
                    .collect()
            })
            .collect();
        Ok(Self {
            config,
            params: ParamSet { blocks },
        })
    }

    pub fn zeros(config: ModelConfig) -> Result<Self> {
        config.validate()?;
        let blocks = (0..config.n_blocks())
            .map(|b| {
                layer_dims(&config, b)
                    .into_iter()
                    .map(|(i, o)| Dense::zeros(i, o))
                    .collect()
            })
            .collect();
        Ok(Self {
            config,
            params: ParamSet { blocks },
        })
    }

    pub fn predict(&self, inputs: ArrayView2<'_, f64>) -> Result<Array2<f64>> {
        forward(self, inputs).map(|(f, _)| f)
    }
}

fn layer_dims(config: &ModelConfig, block: usize) -> Vec<(usize, usize)> {
    let k = config.block_kernel(block);
    let pooled = config.input_size.div_ceil(k);
    let coarse = config.horizon.div_ceil(k);
    let mut dims = Vec::with_capacity(config.hidden_layers + 1);
    let mut fan_in = pooled;
    for _ in 0..config.hidden_layers {
        dims.push((fan_in, config.hidden_units));
        fan_in = config.hidden_units;
    }
    dims.push((fan_in, config.input_size + coarse));
    dims
}

/// Activations of one block kept for backpropagation.
#[derive(Debug, Clone)]
pub struct BlockCache {
    /// Input of every dense layer: the pooled residual, then each hidden
    /// activation after ReLU.
    pub layer_inputs: Vec<Array2<f64>>,
    /// Flat argmax index of every pooled cell, when the kernel is > 1.
    pub pool_argmax: Option<Array2<usize>>,
    pub backcast: Array2<f64>,
    pub forecast: Array2<f64>,
}

#[derive(Debug, Clone)]
pub struct ForwardCache {
    /// Per-row divisor applied to the inputs.
    pub scales: Array1<f64>,
    pub scaled_inputs: Array2<f64>,
    pub blocks: Vec<BlockCache>,
    pub final_residual: Array2<f64>,
    /// Forecast in original units.
    pub forecast: Array2<f64>,
}

/// Runs the residual stack on `inputs` of shape (B, q).
///
/// Each block reads the running residual (max-pooled when its kernel is > 1)
/// and emits a backcast of length q and a forecast; the backcast is
/// subtracted from the residual and the forecasts are summed.
pub fn forward(model: &ForecastModel, inputs: ArrayView2<'_, f64>) -> Result<(Array2<f64>, ForwardCache)> {
    let cfg = &model.config;
    let (b, q) = inputs.dim();
    if q != cfg.input_size {
        return Err(Error::Shape(format!("inputs have {q} columns, model expects {}", cfg.input_size)));
    }
    if b == 0 {
        return Err(Error::Shape("empty input batch".into()));
    }
    if let Some(row) = first_bad_row(&inputs) {
        return Err(Error::NonFinite {
            layer: "input".into(),
            row,
        });
    }

    let scales = match cfg.window_scaling {
        WindowScaling::None => Array1::ones(b),
        WindowScaling::Mean => inputs
            .rows()
            .into_iter()
            .map(|r| {
                let m = r.sum() / q as f64;
                if m > SCALE_EPS {
                    m
                } else {
                    1.0
                }
            })
            .collect(),
    };
    let scaled = &inputs / &scales.view().insert_axis(Axis(1));

    let mut residual = scaled.clone();
    let mut total = Array2::<f64>::zeros((b, cfg.horizon));
    let mut blocks = Vec::with_capacity(cfg.n_blocks());
    for (bi, layers) in model.params.blocks.iter().enumerate() {
        let k = cfg.block_kernel(bi);
        let (pooled, argmax) = if k > 1 {
            let (p, a) = max_pool(&residual, k);
            (p, Some(a))
        } else {
            (residual.clone(), None)
        };

        let mut layer_inputs = Vec::with_capacity(layers.len());
        let mut a = pooled;
        let n_hidden = layers.len() - 1;
        for (li, dense) in layers[..n_hidden].iter().enumerate() {
            let mut z = dense.apply(&a);
            z.mapv_inplace(|v| v.max(0.0));
            if let Some(row) = first_bad_row(&z.view()) {
                return Err(Error::NonFinite {
                    layer: format!("block {bi} hidden {li}"),
                    row,
                });
            }
            layer_inputs.push(std::mem::replace(&mut a, z));
        }
        let out = layers[n_hidden].apply(&a);
        layer_inputs.push(a);
        if let Some(row) = first_bad_row(&out.view()) {
            return Err(Error::NonFinite {
                layer: format!("block {bi} head"),
                row,
            });
        }

        let backcast = out.slice(s![.., ..q]).to_owned();
        let coarse = out.slice(s![.., q..]).to_owned();
        let forecast = if k > 1 {
            coarse.dot(&interpolation_matrix(cfg.horizon, coarse.ncols()).t())
        } else {
            coarse
        };
        residual -= &backcast;
        total += &forecast;
        blocks.push(BlockCache {
            layer_inputs,
            pool_argmax: argmax,
            backcast,
            forecast,
        });
    }

    let forecast = &total * &scales.view().insert_axis(Axis(1));
    if let Some(row) = first_bad_row(&forecast.view()) {
        return Err(Error::NonFinite {
            layer: "output".into(),
            row,
        });
    }
    let cache = ForwardCache {
        scales,
        scaled_inputs: scaled,
        blocks,
        final_residual: residual,
        forecast: forecast.clone(),
    };
    Ok((forecast, cache))
}

fn first_bad_row(m: &ArrayView2<'_, f64>) -> Option<usize> {
    m.rows().into_iter().position(|r| r.iter().any(|v| !v.is_finite()))
}

/// Max-pooling with stride = kernel, keeping a partial last window.
fn max_pool(x: &Array2<f64>, k: usize) -> (Array2<f64>, Array2<usize>) {
    let (b, q) = x.dim();
    let out_len = q.div_ceil(k);
    let mut pooled = Array2::zeros((b, out_len));
    let mut arg = Array2::zeros((b, out_len));
    for r in 0..b {
        for j in 0..out_len {
            let lo = j * k;
            let hi = (lo + k).min(q);
            let mut best = lo;
            for c in lo + 1..hi {
                if x[[r, c]] > x[[r, best]] {
                    best = c;
                }
            }
            pooled[[r, j]] = x[[r, best]];
            arg[[r, j]] = best;
        }
    }
    (pooled, arg)
}

/// (h × c) matrix mapping `c` knots onto `h` points by linear interpolation
/// with half-pixel centres.
fn interpolation_matrix(h: usize, c: usize) -> Array2<f64> {
    let mut m = Array2::zeros((h, c));
    let ratio = c as f64 / h as f64;
    for i in 0..h {
        let src = ((i as f64 + 0.5) * ratio - 0.5).max(0.0);
        let i0 = (src.floor() as usize).min(c - 1);
        let i1 = (i0 + 1).min(c - 1);
        let w1 = if i1 == i0 { 0.0 } else { src - i0 as f64 };
        m[[i, i0]] += 1.0 - w1;
        m[[i, i1]] += w1;
    }
    m
}

/// Mean training loss over all B·h cells.
pub fn loss_value(kind: LossKind, forecast: &Array2<f64>, targets: &Array2<f64>) -> f64 {
    let n = forecast.len() as f64;
    let sum: f64 = match kind {
        LossKind::Mae => Zip::from(forecast).and(targets).fold(0.0, |acc, f, y| acc + (f - y).abs()),
        LossKind::Smape => Zip::from(forecast)
            .and(targets)
            .fold(0.0, |acc, f, y| acc + (f - y).abs() / ((f.abs() + y.abs()) / 2.0).max(SMAPE_EPS)),
    };
    sum / n
}

fn sign(v: f64) -> f64 {
    if v > 0.0 {
        1.0
    } else if v < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn loss_gradient(kind: LossKind, forecast: &Array2<f64>, targets: &Array2<f64>) -> Array2<f64> {
    let n = forecast.len() as f64;
    let mut g = Array2::zeros(forecast.dim());
    match kind {
        LossKind::Mae => Zip::from(&mut g)
            .and(forecast)
            .and(targets)
            .for_each(|g, &f, &y| *g = sign(f - y) / n),
        LossKind::Smape => Zip::from(&mut g).and(forecast).and(targets).for_each(|g, &f, &y| {
            let half_sum = (f.abs() + y.abs()) / 2.0;
            let err = f - y;
            *g = if half_sum > SMAPE_EPS {
                // d/df |f - y| / ((|f| + |y|) / 2)
                (sign(err) / half_sum - err.abs() * sign(f) / (2.0 * half_sum * half_sum)) / n
            } else {
                sign(err) / SMAPE_EPS / n
            };
        }),
    }
    g
}

/// Exact gradients of the configured loss with respect to every parameter.
///
/// Returns the loss and the gradients; `cache` must come from `forward` on
/// the same model.
pub fn backward(model: &ForecastModel, cache: &ForwardCache, targets: &Array2<f64>) -> Result<(f64, ParamSet)> {
    let cfg = &model.config;
    if targets.dim() != cache.forecast.dim() {
        return Err(Error::Shape(format!(
            "targets {:?} do not match forecast {:?}",
            targets.dim(),
            cache.forecast.dim()
        )));
    }
    if cache.blocks.len() != model.params.blocks.len() {
        return Err(Error::Shape("cache does not belong to this model".into()));
    }
    let loss = loss_value(cfg.loss, &cache.forecast, targets);
    let d_forecast = loss_gradient(cfg.loss, &cache.forecast, targets);
    // forecast = scale * Σ block forecasts
    let d_sum = &d_forecast * &cache.scales.view().insert_axis(Axis(1));

    let q = cfg.input_size;
    let b = targets.nrows();
    let mut grads = ParamSet::zeros_like(&model.params);
    // gradient w.r.t. the residual entering the block after the current one
    let mut d_residual_next = Array2::<f64>::zeros((b, q));

    for bi in (0..model.params.blocks.len()).rev() {
        let layers = &model.params.blocks[bi];
        let bc = &cache.blocks[bi];
        let k = cfg.block_kernel(bi);
        let coarse_len = layers.last().expect("head").weight.ncols() - q;

        let d_coarse = if k > 1 {
            d_sum.dot(&interpolation_matrix(cfg.horizon, coarse_len))
        } else {
            d_sum.clone()
        };
        let mut d_out = Array2::zeros((b, q + coarse_len));
        // residual_next = residual - backcast
        d_out.slice_mut(s![.., ..q]).assign(&(-&d_residual_next));
        d_out.slice_mut(s![.., q..]).assign(&d_coarse);

        let mut d_z = d_out;
        for li in (0..layers.len()).rev() {
            let input = &bc.layer_inputs[li];
            let g = &mut grads.blocks[bi][li];
            g.weight = input.t().dot(&d_z);
            g.bias = d_z.sum_axis(Axis(0));
            let mut d_in = d_z.dot(&layers[li].weight.t());
            if li > 0 {
                // input is a ReLU output; pass gradient only where it was active
                Zip::from(&mut d_in).and(input).for_each(|d, &a| {
                    if a <= 0.0 {
                        *d = 0.0;
                    }
                });
            }
            d_z = d_in;
        }

        let d_residual = match &bc.pool_argmax {
            None => d_z,
            Some(arg) => {
                let mut d = Array2::zeros((b, q));
                Zip::indexed(arg).for_each(|(r, j), &src| d[[r, src]] += d_z[[r, j]]);
                d
            }
        };
        d_residual_next = d_residual_next + d_residual;
    }

    Ok((loss, grads))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::LossKind;
    use ndarray::array;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn small_config(stacks: usize, kernel: usize, loss: LossKind) -> ModelConfig {
        ModelConfig {
            input_size: 6,
            horizon: 4,
            n_stacks: stacks,
            blocks_per_stack: 1,
            hidden_layers: 2,
            hidden_units: 8,
            activation: crate::model::Activation::Relu,
            pooling_kernels: vec![kernel; stacks],
            loss,
            window_scaling: WindowScaling::Mean,
        }
    }

    fn random_batch(rng: &mut ChaCha8Rng, b: usize, q: usize, h: usize) -> (Array2<f64>, Array2<f64>) {
        let x = Array2::from_shape_simple_fn((b, q), || rng.gen_range(1.0..5.0));
        let y = Array2::from_shape_simple_fn((b, h), || rng.gen_range(1.0..5.0));
        (x, y)
    }

    #[test]
    fn zero_network_forecasts_zero() {
        let m = ForecastModel::zeros(small_config(3, 1, LossKind::Mae)).unwrap();
        let x = Array2::from_elem((3, 6), 2.0);
        let f = m.predict(x.view()).unwrap();
        assert!(f.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn hand_set_weights_reproduce_naive_forecast() {
        let mut cfg = small_config(1, 1, LossKind::Mae);
        cfg.window_scaling = WindowScaling::None;
        cfg.hidden_units = 3;
        let mut m = ForecastModel::zeros(cfg).unwrap();
        let layers = &mut m.params.blocks[0];
        layers[0].weight[[5, 0]] = 1.0; // pick the last lag
        layers[1].weight[[0, 0]] = 1.0;
        for j in 0..4 {
            layers[2].weight[[0, 6 + j]] = 1.0; // forecast head, no backcast
        }
        let x = array![[1.0, 2.0, 3.0, 4.0, 5.0, 6.5], [3.0, 1.0, 4.0, 1.0, 5.0, 9.0]];
        let f = m.predict(x.view()).unwrap();
        assert_eq!(f, array![[6.5, 6.5, 6.5, 6.5], [9.0, 9.0, 9.0, 9.0]]);
    }

    #[test]
    fn duplicated_rows_give_duplicated_forecasts() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let m = ForecastModel::new(small_config(3, 2, LossKind::Mae), &mut rng).unwrap();
        let row = array![1.0, 3.0, 2.0, 5.0, 4.0, 2.5];
        let x = ndarray::stack![Axis(0), row, row];
        let f = m.predict(x.view()).unwrap();
        assert_eq!(f.row(0), f.row(1));
    }

    #[test]
    fn residual_stack_telescopes() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let m = ForecastModel::new(small_config(3, 2, LossKind::Mae), &mut rng).unwrap();
        let (x, _) = random_batch(&mut rng, 5, 6, 4);
        let (_, cache) = forward(&m, x.view()).unwrap();
        let mut total = cache.final_residual.clone();
        for b in &cache.blocks {
            total += &b.backcast;
        }
        let diff = (&total - &cache.scaled_inputs).mapv(f64::abs).fold(0.0f64, |a, &v| a.max(v));
        assert!(diff < 1e-9);
    }

    #[test]
    fn mean_scaling_is_equivariant() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let m = ForecastModel::new(small_config(3, 1, LossKind::Mae), &mut rng).unwrap();
        let (x, _) = random_batch(&mut rng, 4, 6, 4);
        let f = m.predict(x.view()).unwrap();
        let f7 = m.predict((&x * 7.0).view()).unwrap();
        for (a, b) in f.iter().zip(f7.iter()) {
            assert!((a * 7.0 - b).abs() < 1e-9 * (1.0 + b.abs()));
        }
    }

    #[test]
    fn interpolation_rows_sum_to_one() {
        for (h, c) in [(4, 2), (8, 3), (18, 9), (5, 1), (3, 3)] {
            let m = interpolation_matrix(h, c);
            for r in m.rows() {
                assert!((r.sum() - 1.0).abs() < 1e-12);
            }
        }
        // c == h is the identity
        assert_eq!(interpolation_matrix(3, 3), Array2::<f64>::eye(3));
    }

    #[test]
    fn shape_and_finiteness_errors() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let m = ForecastModel::new(small_config(1, 1, LossKind::Mae), &mut rng).unwrap();
        assert!(matches!(m.predict(Array2::zeros((2, 5)).view()), Err(Error::Shape(_))));
        let mut x = Array2::from_elem((3, 6), 1.0);
        x[[2, 1]] = f64::NAN;
        assert!(matches!(
            m.predict(x.view()),
            Err(Error::NonFinite { row: 2, .. })
        ));
        let (_, cache) = forward(&m, Array2::from_elem((2, 6), 1.0).view()).unwrap();
        assert!(backward(&m, &cache, &Array2::zeros((3, 4))).is_err());
    }

    #[test]
    fn gradient_vanishes_at_exact_fit() {
        // zero network forecasting zero targets: MAE subgradient is 0 at ties
        let m = ForecastModel::zeros(small_config(3, 1, LossKind::Mae)).unwrap();
        let x = Array2::from_elem((4, 6), 2.0);
        let (_, cache) = forward(&m, x.view()).unwrap();
        let (loss, g) = backward(&m, &cache, &Array2::zeros((4, 4))).unwrap();
        assert_eq!(loss, 0.0);
        assert!(g.norm() <= 1e-9);
    }

    #[test]
    fn duplicated_batch_has_same_gradient() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for loss in [LossKind::Mae, LossKind::Smape] {
            let m = ForecastModel::new(small_config(3, 2, loss), &mut rng).unwrap();
            let (x, y) = random_batch(&mut rng, 6, 6, 4);
            let (_, c1) = forward(&m, x.view()).unwrap();
            let (l1, g1) = backward(&m, &c1, &y).unwrap();
            let x2 = ndarray::concatenate![Axis(0), x, x];
            let y2 = ndarray::concatenate![Axis(0), y, y];
            let (_, c2) = forward(&m, x2.view()).unwrap();
            let (l2, g2) = backward(&m, &c2, &y2).unwrap();
            assert!((l1 - l2).abs() < 1e-12);
            assert!(g1.max_abs_diff(&g2) < 1e-12);
        }
    }

    fn loss_at(m: &ForecastModel, x: &Array2<f64>, y: &Array2<f64>) -> f64 {
        loss_value(m.config.loss, &m.predict(x.view()).unwrap(), y)
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for loss in [LossKind::Mae, LossKind::Smape] {
            for kernel in [1, 2] {
                let mut m = ForecastModel::new(small_config(3, kernel, loss), &mut rng).unwrap();
                let (x, y) = random_batch(&mut rng, 5, 6, 4);
                let (_, cache) = forward(&m, x.view()).unwrap();
                let (_, g) = backward(&m, &cache, &y).unwrap();
                for _ in 0..40 {
                    let i = rng.gen_range(0..m.params.num_params());
                    let w = m.params.get(i);
                    m.params.set(i, w + 1e-5);
                    let up = loss_at(&m, &x, &y);
                    m.params.set(i, w - 1e-5);
                    let down = loss_at(&m, &x, &y);
                    m.params.set(i, w);
                    let numeric = (up - down) / 2e-5;
                    let analytic = g.get(i);
                    let rel = (numeric - analytic).abs() / numeric.abs().max(analytic.abs()).max(1e-6);
                    assert!(rel <= 1e-4, "{loss:?} k={kernel} param {i}: {analytic} vs {numeric}");
                }
            }
        }
    }
}
