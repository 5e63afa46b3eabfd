//! Cross-validated experiments: the classifier head on original or reduced
//! amplitude vectors, and the joint circuit + head model.
//!
//! In the joint model each sample passes through the ansatz, its `n` qubit
//! marginals feed the head, and one AdamW step updates the concatenated
//! `[circuit angles, head parameters]` vector.

use ndarray::Array2;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ansatz::{self, CircuitSpec, Upstream};
use crate::dataio::{self, Dataset};
use crate::error::{Error, Result};
use crate::mlphead::{self, MlpParams, MlpSpec};
use crate::tensornet::{self, DataVector};
use crate::training::{AdamW, AdamWConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Mode {
    ClassicalOriginal,
    ClassicalReduced,
    Hybrid,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::ClassicalOriginal => "classical-original",
            Mode::ClassicalReduced => "classical-reduced",
            Mode::Hybrid => "hybrid",
        }
    }
}

impl std::str::FromStr for Mode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "classical-original" | "original" => Ok(Mode::ClassicalOriginal),
            "classical-reduced" | "reduced" => Ok(Mode::ClassicalReduced),
            "hybrid" => Ok(Mode::Hybrid),
            other => Err(Error::InvalidArgument(format!("unknown mode {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: String,
    pub mode: Mode,
    pub gamma: f64,
    /// Term count; registry default (or mean-vector selection) when absent.
    pub k: Option<usize>,
    pub max_samples: usize,
    pub folds: usize,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    pub adamw: AdamWConfig,
    /// Standardise features before amplitude normalisation.
    pub zscore: bool,
    /// Rescale reduced vectors to unit norm (classical-reduced only).
    pub renormalize_reduced: bool,
    /// Keep the circuit angles at their initial values (hybrid only).
    pub freeze_quantum: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            dataset: "iris".into(),
            mode: Mode::Hybrid,
            gamma: 0.3,
            k: None,
            max_samples: 1000,
            folds: 5,
            epochs: 100,
            batch_size: 32,
            seed: 0,
            adamw: AdamWConfig::default(),
            zscore: false,
            renormalize_reduced: true,
            freeze_quantum: false,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParamCounts {
    pub quantum: usize,
    pub classical: usize,
    pub total: usize,
}

/// Learnable parameters for a mode on `n` qubits with `k` terms and `classes` outputs.
pub fn count_parameters(mode: Mode, n: usize, k: usize, classes: usize) -> Result<ParamCounts> {
    let (quantum, in_dim) = match mode {
        Mode::Hybrid => (ansatz::build_spec(n, k)?.param_count(), n),
        Mode::ClassicalOriginal | Mode::ClassicalReduced => (0, 1usize << n),
    };
    let classical = mlphead::param_count(&MlpSpec::new(in_dim, classes)?);
    Ok(ParamCounts { quantum, classical, total: quantum + classical })
}

/// Counts for a registered dataset using its default `k` and class count.
pub fn count_for_dataset(name: &str, mode: Mode) -> Result<ParamCounts> {
    let info = dataio::lookup(name)?;
    let classes = known_classes(name).ok_or_else(|| Error::NotClassification(name.to_string()))?;
    let k = info.default_k.unwrap_or(1);
    count_parameters(mode, info.qubits, k, classes)
}

/// Class counts of the registered classification datasets, available without
/// loading the data.
pub fn known_classes(name: &str) -> Option<usize> {
    Some(match name {
        "iris" | "wine" => 3,
        "breast_cancer" | "ionosphere" | "random5" | "random10" => 2,
        "covtype" => 7,
        "digits" => 10,
        _ => return None,
    })
}

/// `k` from the coefficients of the mean vector of a `sample`-row subset:
/// the number at or above `gamma`, at least one.
pub fn select_k(vectors: &[DataVector], gamma: f64, sample: usize, seed: u64) -> Result<(usize, DataVector)> {
    if vectors.is_empty() {
        return Err(Error::Empty("k selection over no vectors"));
    }
    let idx = dataio::sample_indices(vectors.len(), sample.max(1), seed);
    let subset: Vec<DataVector> = idx.iter().map(|&i| vectors[i].clone()).collect();
    let mean = tensornet::mean_vector(&subset)?;
    let k = tensornet::decompose(&mean)?.count_above(gamma).max(1);
    Ok((k, mean))
}

/// Per-class shuffle, then round-robin assignment to folds. The starting fold
/// carries over between classes so fold sizes stay within one of each other.
pub fn stratified_folds(labels: &[usize], folds: usize, seed: u64) -> Result<Vec<(Vec<usize>, Vec<usize>)>> {
    if folds < 2 {
        return Err(Error::InvalidArgument("at least two folds are required".into()));
    }
    let classes = labels.iter().max().map_or(0, |m| m + 1);
    let mut groups: Vec<Vec<usize>> = vec![Vec::new(); classes];
    for (i, &l) in labels.iter().enumerate() {
        groups[l].push(i);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut val: Vec<Vec<usize>> = vec![Vec::new(); folds];
    let mut offset = 0;
    for (class, group) in groups.iter_mut().enumerate() {
        if group.is_empty() {
            continue;
        }
        if group.len() < folds {
            return Err(Error::ClassTooSmall { class, count: group.len(), folds });
        }
        group.shuffle(&mut rng);
        for (j, &i) in group.iter().enumerate() {
            val[(offset + j) % folds].push(i);
        }
        offset = (offset + group.len()) % folds;
    }
    Ok(val
        .into_iter()
        .map(|mut v| {
            v.sort_unstable();
            let mut in_val = vec![false; labels.len()];
            v.iter().for_each(|&i| in_val[i] = true);
            let train = (0..labels.len()).filter(|&i| !in_val[i]).collect();
            (train, v)
        })
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldReport {
    pub fold: usize,
    /// Mean training cross-entropy per epoch.
    pub train_loss: Vec<f64>,
    /// Accuracy on the fold's validation split after each epoch.
    pub val_accuracy: Vec<f64>,
    pub final_accuracy: f64,
    pub param_counts: ParamCounts,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentReport {
    pub config: ExperimentConfig,
    pub n: usize,
    pub k: usize,
    pub classes: usize,
    pub samples: usize,
    pub per_fold: Vec<FoldReport>,
    pub mean_acc: f64,
    /// Population standard deviation over folds.
    pub std_acc: f64,
    pub param_counts: ParamCounts,
}

/// Mean and population standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let m = xs.iter().sum::<f64>() / xs.len() as f64;
    let var = xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / xs.len() as f64;
    (m, var.sqrt())
}

/// Loads `config.dataset` (from `data_dir` or the bundled copies) and runs it.
pub fn run(config: &ExperimentConfig, data_dir: Option<&std::path::Path>) -> Result<ExperimentReport> {
    let dataset = dataio::load_named(&config.dataset, data_dir)?;
    run_on(config, &dataset)
}

/// Runs `config.mode` on an already loaded dataset.
pub fn run_on(config: &ExperimentConfig, dataset: &Dataset) -> Result<ExperimentReport> {
    match config.mode {
        Mode::Hybrid => run_hybrid(config, dataset),
        Mode::ClassicalOriginal | Mode::ClassicalReduced => run_classical(config, dataset),
    }
}

/// Vectors, labels and `k` shared by every mode.
struct Prepared {
    vectors: Vec<DataVector>,
    labels: Vec<usize>,
    classes: usize,
    n: usize,
    k: usize,
    folds: Vec<(Vec<usize>, Vec<usize>)>,
}

fn prepare(config: &ExperimentConfig, dataset: &Dataset) -> Result<Prepared> {
    let classes = dataset.classes().ok_or_else(|| Error::NotClassification(dataset.name.clone()))?;
    if config.folds < 2 {
        return Err(Error::InvalidArgument("at least two folds are required".into()));
    }
    if config.max_samples < config.folds * classes {
        return Err(Error::InvalidArgument(format!(
            "max samples {} is below folds x classes = {}",
            config.max_samples,
            config.folds * classes
        )));
    }
    if config.epochs == 0 || config.batch_size < 2 {
        return Err(Error::InvalidArgument("need at least one epoch and a batch size of at least 2".into()));
    }
    let sample = dataio::subsample(dataset, config.max_samples, config.seed, true)?;
    let vec = dataio::to_vectors(&sample, config.zscore)?;
    let all_labels = sample.labels()?;
    let labels: Vec<usize> = vec.kept.iter().map(|&i| all_labels[i]).collect();
    let k = match config.k {
        Some(k) => k,
        None => match dataio::lookup(&dataset.name).ok().and_then(|i| i.default_k) {
            Some(k) => k,
            None => select_k(&vec.vectors, config.gamma, 100, config.seed)?.0,
        },
    };
    let folds = stratified_folds(&labels, config.folds, config.seed)?;
    Ok(Prepared { vectors: vec.vectors, labels, classes, n: dataset.n, k, folds })
}

fn fold_seed(config: &ExperimentConfig, fold: usize) -> u64 {
    config.seed.wrapping_add(1_000_003u64.wrapping_mul(fold as u64 + 1))
}

fn report(config: &ExperimentConfig, p: &Prepared, per_fold: Vec<FoldReport>, counts: ParamCounts) -> ExperimentReport {
    let accs: Vec<f64> = per_fold.iter().map(|f| f.final_accuracy).collect();
    let (mean_acc, std_acc) = mean_std(&accs);
    ExperimentReport {
        config: config.clone(),
        n: p.n,
        k: p.k,
        classes: p.classes,
        samples: p.labels.len(),
        per_fold,
        mean_acc,
        std_acc,
        param_counts: counts,
    }
}

/// The classifier head alone, on `2^n`-dimensional original or reduced vectors.
pub fn run_classical(config: &ExperimentConfig, dataset: &Dataset) -> Result<ExperimentReport> {
    if config.mode == Mode::Hybrid {
        return Err(Error::InvalidArgument("run_classical needs a classical mode".into()));
    }
    let p = prepare(config, dataset)?;
    let inputs: Vec<Vec<f64>> = match config.mode {
        Mode::ClassicalReduced => p
            .vectors
            .iter()
            .map(|v| {
                let t = tensornet::decompose(v)?.top_k(p.k);
                if config.renormalize_reduced {
                    Ok(t.reduced_vector()?.into_amplitudes())
                } else {
                    Ok(t.kept.reconstruct())
                }
            })
            .collect::<Result<_>>()?,
        _ => p.vectors.iter().map(|v| v.amplitudes().to_vec()).collect(),
    };
    let counts = count_parameters(config.mode, p.n, p.k, p.classes)?;
    let mlp = MlpSpec::new(1 << p.n, p.classes)?;
    let per_fold = p
        .folds
        .par_iter()
        .enumerate()
        .map(|(fold, (train, val))| {
            let model = ClassicalModel { inputs: &inputs, mlp };
            train_fold(config, fold, &p.labels, train, val, model, counts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(config, &p, per_fold, counts))
}

/// Circuit marginals feeding the head, trained jointly.
pub fn run_hybrid(config: &ExperimentConfig, dataset: &Dataset) -> Result<ExperimentReport> {
    if config.mode != Mode::Hybrid {
        return Err(Error::InvalidArgument("run_hybrid needs hybrid mode".into()));
    }
    let p = prepare(config, dataset)?;
    let circuit = ansatz::build_spec(p.n, p.k)?;
    let mlp = MlpSpec::new(p.n, p.classes)?;
    let counts = count_parameters(Mode::Hybrid, p.n, p.k, p.classes)?;
    let per_fold = p
        .folds
        .par_iter()
        .enumerate()
        .map(|(fold, (train, val))| {
            let model = HybridModel { vectors: &p.vectors, circuit, mlp, freeze: config.freeze_quantum };
            train_fold(config, fold, &p.labels, train, val, model, counts)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(report(config, &p, per_fold, counts))
}

/// What differs between the classical and joint models inside a fold.
trait FoldModel {
    /// Head input rows for `idx` given the circuit angles.
    fn features(&self, quantum: &[f64], idx: &[usize]) -> Result<Array2<f64>>;
    /// `dL/d angles` given `dL/d features` for rows `idx`.
    fn quantum_grad(&self, quantum: &[f64], idx: &[usize], d_features: &Array2<f64>) -> Result<Vec<f64>>;
    fn quantum_init(&self, seed: u64) -> Vec<f64>;
    fn mlp(&self) -> MlpSpec;
    fn trains_quantum(&self) -> bool;

    /// Batch loss, gradient of `[trained angles, head]` and the head cache.
    fn loss_and_gradient(
        &self,
        quantum: &[f64],
        head: &MlpParams,
        idx: &[usize],
        labels: &[usize],
        dropout_seed: u64,
    ) -> Result<(f64, Vec<f64>, mlphead::Cache)> {
        let x = self.features(quantum, idx)?;
        let spec = self.mlp();
        let (logits, cache) = mlphead::forward(&spec, head, x.view(), mlphead::Mode::Train { seed: dropout_seed })?;
        let y: Vec<usize> = idx.iter().map(|&i| labels[i]).collect();
        let (loss, d_logits) = mlphead::cross_entropy(logits.view(), &y)?;
        let (grads, d_x) = mlphead::backward(head, &cache, d_logits.view());
        let mut grad = if self.trains_quantum() { self.quantum_grad(quantum, idx, &d_x)? } else { Vec::new() };
        grad.extend(grads.flatten());
        Ok((loss, grad, cache))
    }
}

struct ClassicalModel<'a> {
    inputs: &'a [Vec<f64>],
    mlp: MlpSpec,
}

impl FoldModel for ClassicalModel<'_> {
    fn features(&self, _: &[f64], idx: &[usize]) -> Result<Array2<f64>> {
        let d = self.mlp.in_dim;
        Ok(Array2::from_shape_fn((idx.len(), d), |(r, c)| self.inputs[idx[r]][c]))
    }

    fn quantum_grad(&self, _: &[f64], _: &[usize], _: &Array2<f64>) -> Result<Vec<f64>> {
        Ok(Vec::new())
    }

    fn quantum_init(&self, _: u64) -> Vec<f64> {
        Vec::new()
    }

    fn mlp(&self) -> MlpSpec {
        self.mlp
    }

    fn trains_quantum(&self) -> bool {
        false
    }
}

struct HybridModel<'a> {
    vectors: &'a [DataVector],
    circuit: CircuitSpec,
    mlp: MlpSpec,
    freeze: bool,
}

impl FoldModel for HybridModel<'_> {
    fn features(&self, quantum: &[f64], idx: &[usize]) -> Result<Array2<f64>> {
        let rows = idx
            .par_iter()
            .map(|&i| Ok(ansatz::forward(&self.circuit, quantum, &self.vectors[i])?.marginals))
            .collect::<Result<Vec<_>>>()?;
        let n = self.circuit.n;
        Ok(Array2::from_shape_fn((idx.len(), n), |(r, c)| rows[r][c]))
    }

    fn quantum_grad(&self, quantum: &[f64], idx: &[usize], d_features: &Array2<f64>) -> Result<Vec<f64>> {
        let parts = idx
            .par_iter()
            .enumerate()
            .map(|(r, &i)| {
                let up: Vec<f64> = d_features.row(r).to_vec();
                ansatz::gradient(&self.circuit, quantum, &self.vectors[i], Upstream::Marginals(&up))
            })
            .collect::<Result<Vec<_>>>()?;
        let mut grad = vec![0.0; quantum.len()];
        for g in parts {
            grad.iter_mut().zip(&g).for_each(|(a, b)| *a += b);
        }
        Ok(grad)
    }

    fn quantum_init(&self, seed: u64) -> Vec<f64> {
        ansatz::init_params(&self.circuit, seed)
    }

    fn mlp(&self) -> MlpSpec {
        self.mlp
    }

    fn trains_quantum(&self) -> bool {
        !self.freeze
    }
}

/// Shuffled mini-batches; a trailing batch of one joins the previous batch
/// because batch statistics are undefined for a single row.
fn batches(train: &[usize], size: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<usize>> {
    let mut order = train.to_vec();
    order.shuffle(rng);
    let mut out: Vec<Vec<usize>> = order.chunks(size).map(<[usize]>::to_vec).collect();
    if out.len() > 1 && out.last().is_some_and(|b| b.len() == 1) {
        let last = out.pop().expect("nonempty");
        out.last_mut().expect("nonempty").extend(last);
    }
    out
}

/// Training-mode cross-entropy of the joint model on `vectors` and its
/// gradient with respect to `[angles, head parameters]`.
#[allow(clippy::too_many_arguments)]
pub fn hybrid_loss_and_gradient(
    circuit: &CircuitSpec,
    mlp: &MlpSpec,
    quantum: &[f64],
    head: &MlpParams,
    vectors: &[DataVector],
    labels: &[usize],
    dropout_seed: u64,
) -> Result<(f64, Vec<f64>)> {
    if vectors.len() != labels.len() {
        return Err(Error::DimensionMismatch { expected: vectors.len(), got: labels.len() });
    }
    let model = HybridModel { vectors, circuit: *circuit, mlp: *mlp, freeze: false };
    let idx: Vec<usize> = (0..vectors.len()).collect();
    let (loss, grad, _) = model.loss_and_gradient(quantum, head, &idx, labels, dropout_seed)?;
    Ok((loss, grad))
}

fn accuracy<M: FoldModel>(model: &M, quantum: &[f64], head: &MlpParams, idx: &[usize], labels: &[usize]) -> Result<f64> {
    let x = model.features(quantum, idx)?;
    let (logits, _) = mlphead::forward(&model.mlp(), head, x.view(), mlphead::Mode::Eval)?;
    let pred = mlphead::predict(logits.view());
    let correct = pred.iter().zip(idx).filter(|(p, &i)| **p == labels[i]).count();
    Ok(correct as f64 / idx.len().max(1) as f64)
}

fn train_fold<M: FoldModel>(
    config: &ExperimentConfig,
    fold: usize,
    labels: &[usize],
    train: &[usize],
    val: &[usize],
    model: M,
    counts: ParamCounts,
) -> Result<FoldReport> {
    let seed = fold_seed(config, fold);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let spec = model.mlp();
    let mut quantum = model.quantum_init(seed);
    let mut head = MlpParams::init(&spec, seed.wrapping_add(1));
    let q_len = if model.trains_quantum() { quantum.len() } else { 0 };
    let mut flat: Vec<f64> = quantum[..q_len].iter().copied().chain(head.flatten()).collect();
    let mut opt = AdamW::new(config.adamw, flat.len());

    let mut train_loss = Vec::with_capacity(config.epochs);
    let mut val_accuracy = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        let mut total = 0.0;
        for batch in batches(train, config.batch_size, &mut rng) {
            let dropout_seed: u64 = rng.random();
            let (loss, grad, cache) = model.loss_and_gradient(&quantum, &head, &batch, labels, dropout_seed)?;
            total += loss * batch.len() as f64;
            head.update_running_stats(&spec, &cache);
            opt.step(&mut flat, &grad)?;
            quantum[..q_len].copy_from_slice(&flat[..q_len]);
            head.assign(&flat[q_len..])?;
        }
        opt.end_epoch();
        train_loss.push(total / train.len() as f64);
        val_accuracy.push(accuracy(&model, &quantum, &head, val, labels)?);
        log::debug!(
            "fold {fold} epoch {}: loss {:.4} val acc {:.4}",
            train_loss.len(),
            train_loss.last().copied().unwrap_or(f64::NAN),
            val_accuracy.last().copied().unwrap_or(f64::NAN)
        );
    }
    let final_accuracy = val_accuracy.last().copied().unwrap_or(0.0);
    Ok(FoldReport { fold, train_loss, val_accuracy, final_accuracy, param_counts: counts })
}
