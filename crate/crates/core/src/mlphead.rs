//! Fixed classifier head:
//!
//! ```text
//! Linear(in, 64) -> BatchNorm(64) -> ReLU -> Dropout(0.25)
//!   -> Linear(64, 32) -> BatchNorm(32) -> ReLU -> Dropout(0.25)
//!   -> Linear(32, classes)
//! ```
//!
//! Forward and backward are written out by hand. Training-mode forward is a
//! pure function of `(params, batch, seed)`; running batch-norm statistics are
//! folded in afterwards with [`MlpParams::update_running_stats`].

use ndarray::{Array1, Array2, ArrayView2, Axis};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const HIDDEN: [usize; 2] = [64, 32];

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpSpec {
    pub in_dim: usize,
    pub hidden: [usize; 2],
    pub out_dim: usize,
    pub dropout_p: f64,
    pub bn_eps: f64,
    pub bn_momentum: f64,
}

impl MlpSpec {
    pub fn new(in_dim: usize, out_dim: usize) -> Result<Self> {
        if in_dim == 0 {
            return Err(Error::InvalidArgument("input dimension must be at least 1".into()));
        }
        if out_dim < 2 {
            return Err(Error::InvalidArgument("at least two classes are required".into()));
        }
        Ok(Self { in_dim, hidden: HIDDEN, out_dim, dropout_p: 0.25, bn_eps: 1e-5, bn_momentum: 0.1 })
    }
}

/// Learnable parameters of the head: three affine layers and two
/// batch-norm scale/shift pairs.
pub fn param_count(spec: &MlpSpec) -> usize {
    let [h1, h2] = spec.hidden;
    (spec.in_dim * h1 + h1) + 2 * h1 + (h1 * h2 + h2) + 2 * h2 + (h2 * spec.out_dim + spec.out_dim)
}

/// `y = x W + b` with `W` stored as `in x out`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Linear {
    pub weight: Array2<f64>,
    pub bias: Array1<f64>,
}

impl Linear {
    /// Uniform in `+-1/sqrt(fan_in)` for both weights and bias.
    fn init(fan_in: usize, fan_out: usize, rng: &mut ChaCha8Rng) -> Self {
        let bound = 1.0 / (fan_in as f64).sqrt();
        let weight = Array2::from_shape_fn((fan_in, fan_out), |_| rng.random_range(-bound..bound));
        let bias = Array1::from_shape_fn(fan_out, |_| rng.random_range(-bound..bound));
        Self { weight, bias }
    }

    fn zeros(fan_in: usize, fan_out: usize) -> Self {
        Self { weight: Array2::zeros((fan_in, fan_out)), bias: Array1::zeros(fan_out) }
    }

    fn forward(&self, x: &ArrayView2<f64>) -> Array2<f64> {
        x.dot(&self.weight) + &self.bias
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BatchNorm {
    pub gamma: Array1<f64>,
    pub beta: Array1<f64>,
    pub running_mean: Array1<f64>,
    pub running_var: Array1<f64>,
}

impl BatchNorm {
    fn new(width: usize) -> Self {
        Self {
            gamma: Array1::ones(width),
            beta: Array1::zeros(width),
            running_mean: Array1::zeros(width),
            running_var: Array1::ones(width),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpParams {
    pub fc1: Linear,
    pub bn1: BatchNorm,
    pub fc2: Linear,
    pub bn2: BatchNorm,
    pub fc3: Linear,
}

/// Gradients in the same layout as the learnables of [`MlpParams`].
#[derive(Debug, Clone, PartialEq)]
pub struct MlpGrads {
    pub fc1: Linear,
    pub bn1_gamma: Array1<f64>,
    pub bn1_beta: Array1<f64>,
    pub fc2: Linear,
    pub bn2_gamma: Array1<f64>,
    pub bn2_beta: Array1<f64>,
    pub fc3: Linear,
}

impl MlpParams {
    pub fn init(spec: &MlpSpec, seed: u64) -> Self {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let [h1, h2] = spec.hidden;
        Self {
            fc1: Linear::init(spec.in_dim, h1, &mut rng),
            bn1: BatchNorm::new(h1),
            fc2: Linear::init(h1, h2, &mut rng),
            bn2: BatchNorm::new(h2),
            fc3: Linear::init(h2, spec.out_dim, &mut rng),
        }
    }

    pub fn zeros(spec: &MlpSpec) -> Self {
        let [h1, h2] = spec.hidden;
        Self {
            fc1: Linear::zeros(spec.in_dim, h1),
            bn1: BatchNorm::new(h1),
            fc2: Linear::zeros(h1, h2),
            bn2: BatchNorm::new(h2),
            fc3: Linear::zeros(h2, spec.out_dim),
        }
    }

    fn learnables(&self) -> [&[f64]; 10] {
        [
            slice(&self.fc1.weight),
            self.fc1.bias.as_slice().expect("contiguous"),
            self.bn1.gamma.as_slice().expect("contiguous"),
            self.bn1.beta.as_slice().expect("contiguous"),
            slice(&self.fc2.weight),
            self.fc2.bias.as_slice().expect("contiguous"),
            self.bn2.gamma.as_slice().expect("contiguous"),
            self.bn2.beta.as_slice().expect("contiguous"),
            slice(&self.fc3.weight),
            self.fc3.bias.as_slice().expect("contiguous"),
        ]
    }

    /// Learnable parameters concatenated in layer order.
    pub fn flatten(&self) -> Vec<f64> {
        self.learnables().concat()
    }

    /// Inverse of [`flatten`](Self::flatten); running statistics are untouched.
    pub fn assign(&mut self, flat: &[f64]) -> Result<()> {
        let total: usize = self.learnables().iter().map(|s| s.len()).sum();
        if flat.len() != total {
            return Err(Error::DimensionMismatch { expected: total, got: flat.len() });
        }
        let mut rest = flat;
        let targets: [&mut [f64]; 10] = [
            self.fc1.weight.as_slice_mut().expect("contiguous"),
            self.fc1.bias.as_slice_mut().expect("contiguous"),
            self.bn1.gamma.as_slice_mut().expect("contiguous"),
            self.bn1.beta.as_slice_mut().expect("contiguous"),
            self.fc2.weight.as_slice_mut().expect("contiguous"),
            self.fc2.bias.as_slice_mut().expect("contiguous"),
            self.bn2.gamma.as_slice_mut().expect("contiguous"),
            self.bn2.beta.as_slice_mut().expect("contiguous"),
            self.fc3.weight.as_slice_mut().expect("contiguous"),
            self.fc3.bias.as_slice_mut().expect("contiguous"),
        ];
        for t in targets {
            let (head, tail) = rest.split_at(t.len());
            t.copy_from_slice(head);
            rest = tail;
        }
        Ok(())
    }

    /// Exponential moving average of the batch statistics in `cache`, using
    /// the unbiased batch variance.
    pub fn update_running_stats(&mut self, spec: &MlpSpec, cache: &Cache) {
        let m = spec.bn_momentum;
        for (bn, layer) in [(&mut self.bn1, &cache.layers[0]), (&mut self.bn2, &cache.layers[1])] {
            let Some(stats) = &layer.batch_stats else { continue };
            let count = layer.pre_bn.nrows() as f64;
            let unbiased = &stats.var * (count / (count - 1.0));
            bn.running_mean = &bn.running_mean * (1.0 - m) + &stats.mean * m;
            bn.running_var = &bn.running_var * (1.0 - m) + unbiased * m;
        }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(s: &str) -> Result<Self> {
        Ok(serde_json::from_str(s)?)
    }
}

impl MlpGrads {
    pub fn flatten(&self) -> Vec<f64> {
        [
            slice(&self.fc1.weight),
            self.fc1.bias.as_slice().expect("contiguous"),
            self.bn1_gamma.as_slice().expect("contiguous"),
            self.bn1_beta.as_slice().expect("contiguous"),
            slice(&self.fc2.weight),
            self.fc2.bias.as_slice().expect("contiguous"),
            self.bn2_gamma.as_slice().expect("contiguous"),
            self.bn2_beta.as_slice().expect("contiguous"),
            slice(&self.fc3.weight),
            self.fc3.bias.as_slice().expect("contiguous"),
        ]
        .concat()
    }
}

fn slice(a: &Array2<f64>) -> &[f64] {
    a.as_slice().expect("standard layout")
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    /// Batch statistics and dropout drawn from `seed`.
    Train { seed: u64 },
    /// Running statistics, no dropout.
    Eval,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchStats {
    pub mean: Array1<f64>,
    /// Biased (population) variance of the batch.
    pub var: Array1<f64>,
}

/// Intermediates of one hidden block.
#[derive(Debug, Clone, PartialEq)]
pub struct BlockCache {
    pub input: Array2<f64>,
    pub pre_bn: Array2<f64>,
    pub normalized: Array2<f64>,
    pub inv_std: Array1<f64>,
    pub post_bn: Array2<f64>,
    /// Inverted-dropout multipliers (0 or 1/(1-p)), all ones in eval mode.
    pub mask: Array2<f64>,
    pub batch_stats: Option<BatchStats>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Cache {
    pub layers: [BlockCache; 2],
    pub head_input: Array2<f64>,
}

pub fn forward(
    spec: &MlpSpec,
    params: &MlpParams,
    batch: ArrayView2<f64>,
    mode: Mode,
) -> Result<(Array2<f64>, Cache)> {
    if batch.ncols() != spec.in_dim {
        return Err(Error::DimensionMismatch { expected: spec.in_dim, got: batch.ncols() });
    }
    let rows = batch.nrows();
    let mut rng = match mode {
        Mode::Train { seed } => {
            if rows < 2 {
                return Err(Error::BatchNormUndefined(rows));
            }
            Some(ChaCha8Rng::seed_from_u64(seed))
        }
        Mode::Eval => None,
    };

    let block = |input: Array2<f64>, fc: &Linear, bn: &BatchNorm, rng: &mut Option<ChaCha8Rng>| {
        let pre_bn = fc.forward(&input.view());
        let (mean, var, batch_stats) = match rng {
            Some(_) => {
                let mean = pre_bn.mean_axis(Axis(0)).expect("nonempty batch");
                let var = pre_bn.var_axis(Axis(0), 0.0);
                (mean.clone(), var.clone(), Some(BatchStats { mean, var }))
            }
            None => (bn.running_mean.clone(), bn.running_var.clone(), None),
        };
        let inv_std = var.mapv(|v| 1.0 / (v + spec.bn_eps).sqrt());
        let normalized = (&pre_bn - &mean) * &inv_std;
        let post_bn = &normalized * &bn.gamma + &bn.beta;
        let mask = match rng {
            Some(r) => {
                let keep = 1.0 - spec.dropout_p;
                Array2::from_shape_fn(post_bn.raw_dim(), |_| {
                    if r.random::<f64>() < keep {
                        1.0 / keep
                    } else {
                        0.0
                    }
                })
            }
            None => Array2::ones(post_bn.raw_dim()),
        };
        let out = post_bn.mapv(|v| v.max(0.0)) * &mask;
        (out, BlockCache { input, pre_bn, normalized, inv_std, post_bn, mask, batch_stats })
    };

    let (h1, c1) = block(batch.to_owned(), &params.fc1, &params.bn1, &mut rng);
    let (h2, c2) = block(h1, &params.fc2, &params.bn2, &mut rng);
    let logits = params.fc3.forward(&h2.view());
    Ok((logits, Cache { layers: [c1, c2], head_input: h2 }))
}

/// Gradients of all learnables and of the input batch.
pub fn backward(params: &MlpParams, cache: &Cache, d_logits: ArrayView2<f64>) -> (MlpGrads, Array2<f64>) {
    let fc3 = Linear {
        weight: cache.head_input.t().dot(&d_logits),
        bias: d_logits.sum_axis(Axis(0)),
    };
    let d_h2 = d_logits.dot(&params.fc3.weight.t());

    let block_back = |d_out: Array2<f64>, c: &BlockCache, fc: &Linear, bn: &BatchNorm| {
        let relu = c.post_bn.mapv(|v| if v > 0.0 { 1.0 } else { 0.0 });
        let d_post = d_out * &c.mask * relu;
        let d_gamma = (&d_post * &c.normalized).sum_axis(Axis(0));
        let d_beta = d_post.sum_axis(Axis(0));
        let d_norm = &d_post * &bn.gamma;
        let d_pre = if c.batch_stats.is_some() {
            // Batch statistics depend on the input:
            // dx = inv_std / N * (N dxhat - sum dxhat - xhat * sum(dxhat * xhat))
            let count = c.pre_bn.nrows() as f64;
            let sum_d = d_norm.sum_axis(Axis(0));
            let sum_dx = (&d_norm * &c.normalized).sum_axis(Axis(0));
            ((&d_norm * count) - &sum_d - &c.normalized * &sum_dx) * &(&c.inv_std / count)
        } else {
            &d_norm * &c.inv_std
        };
        let lin = Linear { weight: c.input.t().dot(&d_pre), bias: d_pre.sum_axis(Axis(0)) };
        let d_in = d_pre.dot(&fc.weight.t());
        (lin, d_gamma, d_beta, d_in)
    };

    let (fc2, bn2_gamma, bn2_beta, d_h1) = block_back(d_h2, &cache.layers[1], &params.fc2, &params.bn2);
    let (fc1, bn1_gamma, bn1_beta, d_input) = block_back(d_h1, &cache.layers[0], &params.fc1, &params.bn1);
    (MlpGrads { fc1, bn1_gamma, bn1_beta, fc2, bn2_gamma, bn2_beta, fc3 }, d_input)
}

/// Mean softmax cross-entropy and its gradient `(softmax - onehot) / batch`.
pub fn cross_entropy(logits: ArrayView2<f64>, labels: &[usize]) -> Result<(f64, Array2<f64>)> {
    if logits.nrows() != labels.len() {
        return Err(Error::DimensionMismatch { expected: logits.nrows(), got: labels.len() });
    }
    let classes = logits.ncols();
    let rows = labels.len() as f64;
    let mut grad = Array2::zeros(logits.raw_dim());
    let mut loss = 0.0;
    for (i, (row, &label)) in logits.outer_iter().zip(labels).enumerate() {
        if label >= classes {
            return Err(Error::LabelOutOfRange { label, classes });
        }
        let max = row.fold(f64::NEG_INFINITY, |m, &v| m.max(v));
        let sum: f64 = row.iter().map(|v| (v - max).exp()).sum();
        let log_sum = max + sum.ln();
        loss += log_sum - row[label];
        for (c, &v) in row.iter().enumerate() {
            let p = (v - log_sum).exp();
            grad[[i, c]] = (p - if c == label { 1.0 } else { 0.0 }) / rows;
        }
    }
    Ok((loss / rows, grad))
}

/// Index of the largest logit per row.
pub fn predict(logits: ArrayView2<f64>) -> Vec<usize> {
    logits
        .outer_iter()
        .map(|row| {
            row.iter()
                .enumerate()
                .fold((0, f64::NEG_INFINITY), |best, (i, &v)| if v > best.1 { (i, v) } else { best })
                .0
        })
        .collect()
}
