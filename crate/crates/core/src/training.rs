//! AdamW with an exponentially decaying learning rate, and the circuit-fit
//! loops that train an ansatz to reproduce `k`-term target distributions.
//!
//! The fit loss is the batch mean of `||P_circuit(x_i) - P_target_i||_2`.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{self, CircuitSpec, Upstream};
use crate::error::{Error, Result};
use crate::tensornet::{self, DataVector};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AdamWConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub weight_decay: f64,
    /// Multiplicative learning-rate factor applied after every epoch.
    pub decay: f64,
}

impl Default for AdamWConfig {
    fn default() -> Self {
        Self { lr: 0.05, beta1: 0.9, beta2: 0.999, eps: 1e-8, weight_decay: 0.01, decay: 0.99 }
    }
}

/// Moment accumulators for one flat parameter vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdamW {
    pub config: AdamWConfig,
    m: Vec<f64>,
    v: Vec<f64>,
    step: u64,
    epoch: u32,
}

impl AdamW {
    pub fn new(config: AdamWConfig, len: usize) -> Self {
        Self { config, m: vec![0.0; len], v: vec![0.0; len], step: 0, epoch: 0 }
    }

    pub fn steps(&self) -> u64 {
        self.step
    }

    /// `lr0 * decay^epoch`.
    pub fn learning_rate(&self) -> f64 {
        self.config.lr * self.config.decay.powi(self.epoch as i32)
    }

    pub fn end_epoch(&mut self) {
        self.epoch += 1;
    }

    /// One decoupled-weight-decay Adam update of `params` in place.
    pub fn step(&mut self, params: &mut [f64], grads: &[f64]) -> Result<()> {
        if params.len() != self.m.len() || grads.len() != self.m.len() {
            return Err(Error::DimensionMismatch { expected: self.m.len(), got: grads.len() });
        }
        if let Some(i) = grads.iter().position(|g| !g.is_finite()) {
            return Err(Error::Divergence(i));
        }
        let AdamWConfig { beta1, beta2, eps, weight_decay, .. } = self.config;
        let lr = self.learning_rate();
        self.step += 1;
        let bc1 = 1.0 - beta1.powf(self.step as f64);
        let bc2 = 1.0 - beta2.powf(self.step as f64);
        for (((p, &g), m), v) in params.iter_mut().zip(grads).zip(&mut self.m).zip(&mut self.v) {
            *p *= 1.0 - lr * weight_decay;
            *m = beta1 * *m + (1.0 - beta1) * g;
            *v = beta2 * *v + (1.0 - beta2) * g * g;
            let m_hat = *m / bc1;
            let v_hat = *v / bc2;
            *p -= lr * m_hat / (v_hat.sqrt() + eps);
        }
        Ok(())
    }
}

/// A circuit input and the distribution it should produce.
#[derive(Debug, Clone, PartialEq)]
pub struct FitTarget {
    pub x: DataVector,
    pub target: Vec<f64>,
}

impl FitTarget {
    /// Target = probabilities of `x`'s own `k`-term truncation.
    pub fn from_vector(x: DataVector, k: usize) -> Result<Self> {
        let target = tensornet::decompose(&x)?.top_k(k).target_probabilities()?;
        Ok(Self { x, target })
    }
}

/// Builds targets for a sample with a shared term count.
pub fn targets_for(sample: &[DataVector], k: usize) -> Result<Vec<FitTarget>> {
    sample.iter().map(|x| FitTarget::from_vector(x.clone(), k)).collect()
}

/// Mean over the batch of `||forward(x_i) - target_i||_2`.
pub fn circuit_loss(spec: &CircuitSpec, params: &[f64], batch: &[FitTarget]) -> Result<f64> {
    if batch.is_empty() {
        return Err(Error::Empty("circuit loss over an empty batch"));
    }
    let norms = batch
        .par_iter()
        .map(|item| {
            let out = ansatz::forward(spec, params, &item.x)?;
            check_target(spec, &item.target)?;
            Ok(diff_norm(&out.probabilities, &item.target))
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(norms.iter().sum::<f64>() / batch.len() as f64)
}

/// Loss and its gradient with respect to the circuit angles.
pub fn circuit_loss_and_gradient(
    spec: &CircuitSpec,
    params: &[f64],
    batch: &[FitTarget],
) -> Result<(f64, Vec<f64>)> {
    if batch.is_empty() {
        return Err(Error::Empty("circuit loss over an empty batch"));
    }
    let scale = 1.0 / batch.len() as f64;
    let parts = batch
        .par_iter()
        .map(|item| {
            check_target(spec, &item.target)?;
            let out = ansatz::forward(spec, params, &item.x)?;
            let norm = diff_norm(&out.probabilities, &item.target);
            if norm == 0.0 {
                return Ok((0.0, vec![0.0; params.len()]));
            }
            let up: Vec<f64> = out
                .probabilities
                .iter()
                .zip(&item.target)
                .map(|(p, t)| scale * (p - t) / norm)
                .collect();
            let g = ansatz::gradient(spec, params, &item.x, Upstream::Probabilities(&up))?;
            Ok((norm, g))
        })
        .collect::<Result<Vec<_>>>()?;
    // Sequential reduction keeps results independent of thread scheduling.
    let mut loss = 0.0;
    let mut grad = vec![0.0; params.len()];
    for (norm, g) in parts {
        loss += norm;
        grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
    }
    Ok((loss * scale, grad))
}

fn check_target(spec: &CircuitSpec, target: &[f64]) -> Result<()> {
    if target.len() != 1 << spec.n {
        return Err(Error::DimensionMismatch { expected: 1 << spec.n, got: target.len() });
    }
    Ok(())
}

fn diff_norm(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub iters: usize,
    pub runs: usize,
    pub seed: u64,
    pub adamw: AdamWConfig,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self { iters: 300, runs: 5, seed: 0, adamw: AdamWConfig::default() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitReport {
    pub run: usize,
    pub seed: u64,
    /// Loss at the parameters entering each iteration.
    pub loss_history: Vec<f64>,
    pub best_loss: f64,
    pub best_params: Vec<f64>,
}

impl FitReport {
    /// Running minimum of the loss history.
    pub fn best_curve(&self) -> Vec<f64> {
        let mut best = f64::INFINITY;
        self.loss_history
            .iter()
            .map(|&l| {
                best = best.min(l);
                best
            })
            .collect()
    }
}

/// Arithmetic mean of the per-run minima.
pub fn mean_best(reports: &[FitReport]) -> f64 {
    reports.iter().map(|r| r.best_loss).sum::<f64>() / reports.len().max(1) as f64
}

/// Fits one vector against its own `spec.k`-term target, `runs` times.
pub fn fit_single(spec: &CircuitSpec, x: &DataVector, opts: &FitOptions) -> Result<Vec<FitReport>> {
    let batch = vec![FitTarget::from_vector(x.clone(), spec.k)?];
    fit_batch(spec, &batch, opts)
}

/// Fits a whole sample (shared circuit, per-vector targets), `runs` times.
pub fn fit_sample(spec: &CircuitSpec, sample: &[DataVector], opts: &FitOptions) -> Result<Vec<FitReport>> {
    if sample.is_empty() {
        return Err(Error::Empty("fit over an empty sample"));
    }
    let batch = targets_for(sample, spec.k)?;
    fit_batch(spec, &batch, opts)
}

/// Full-batch optimisation of precomputed targets; run `r` uses seed `seed + r`.
pub fn fit_batch(spec: &CircuitSpec, batch: &[FitTarget], opts: &FitOptions) -> Result<Vec<FitReport>> {
    if opts.iters == 0 {
        return Err(Error::InvalidArgument("iteration count must be at least 1".into()));
    }
    (0..opts.runs)
        .map(|run| {
            let seed = opts.seed.wrapping_add(run as u64);
            let mut params = ansatz::init_params(spec, seed);
            let mut opt = AdamW::new(opts.adamw, params.len());
            let mut loss_history = Vec::with_capacity(opts.iters);
            let mut best_loss = f64::INFINITY;
            let mut best_params = params.clone();
            for _ in 0..opts.iters {
                let (loss, grad) = circuit_loss_and_gradient(spec, &params, batch)?;
                loss_history.push(loss);
                if loss < best_loss {
                    best_loss = loss;
                    best_params.clone_from(&params);
                }
                opt.step(&mut params, &grad)?;
                opt.end_epoch();
            }
            Ok(FitReport { run, seed, loss_history, best_loss, best_params })
        })
        .collect()
}

/// Loss of the identity circuit (all angles zero).
pub fn identity_loss(spec: &CircuitSpec, batch: &[FitTarget]) -> Result<f64> {
    circuit_loss(spec, &vec![0.0; spec.param_count()], batch)
}
