//! Recursive Schmidt decomposition of real vectors.
//!
//! A unit vector of length `2^n` is viewed as a `2 x 2^(n-1)` matrix whose row
//! index is the most significant qubit. One SVD of that matrix splits off the
//! leading qubit:
//!
//! ```text
//! psi = sum_i sigma_i * u_i (x) v_i        (at most two terms)
//! ```
//!
//! Recursing on every right vector `v_i` until only two-dimensional pieces are
//! left produces
//!
//! ```text
//! psi = sum_i s_i * t_i1 (x) t_i2 (x) ... (x) t_in
//! ```
//!
//! with pairwise orthonormal product states, so the squared coefficients sum
//! to one and the error of dropping terms is the root of the dropped squares.
//!
//! Sign conventions: each left singular vector is flipped so that its first
//! nonzero entry is nonnegative (the paired right vector is flipped with it).
//! Coefficients are therefore nonnegative and the last factor of each term
//! carries whatever sign is left over.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Singular values below this are treated as exact zeros and not recursed.
pub const SINGULAR_CUTOFF: f64 = 1e-12;

/// Tolerance for the unit-norm precondition.
pub const UNIT_TOLERANCE: f64 = 1e-9;

/// Real amplitude-encoded sample of length `2^n` with unit L2 norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataVector {
    amplitudes: Vec<f64>,
    n: usize,
}

impl DataVector {
    /// Zero-pads `raw` to `2^n` entries and scales it to unit norm.
    pub fn normalize(raw: &[f64], n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidArgument("qubit count must be at least 1".into()));
        }
        let dim = 1usize << n;
        if raw.len() > dim {
            return Err(Error::TooLong { len: raw.len(), dim, n });
        }
        let norm = l2_norm(raw);
        if norm == 0.0 || !norm.is_finite() {
            return Err(Error::ZeroVector);
        }
        let mut amplitudes = vec![0.0; dim];
        for (dst, &src) in amplitudes.iter_mut().zip(raw) {
            *dst = src / norm;
        }
        Ok(Self { amplitudes, n })
    }

    /// Wraps an already normalised vector, checking length and norm.
    pub fn from_unit(amplitudes: Vec<f64>) -> Result<Self> {
        let n = qubits_for_len(amplitudes.len())?;
        let norm = l2_norm(&amplitudes);
        if (norm - 1.0).abs() > UNIT_TOLERANCE {
            return Err(Error::NotUnitNorm(norm));
        }
        Ok(Self { amplitudes, n })
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn len(&self) -> usize {
        self.amplitudes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.amplitudes.is_empty()
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn into_amplitudes(self) -> Vec<f64> {
        self.amplitudes
    }
}

impl AsRef<[f64]> for DataVector {
    fn as_ref(&self) -> &[f64] {
        &self.amplitudes
    }
}

/// Normalised sum of the samples.
pub fn mean_vector(samples: &[DataVector]) -> Result<DataVector> {
    let first = samples.first().ok_or(Error::Empty("mean of an empty sample"))?;
    let mut sum = vec![0.0; first.len()];
    for s in samples {
        if s.len() != sum.len() {
            return Err(Error::DimensionMismatch { expected: sum.len(), got: s.len() });
        }
        for (acc, x) in sum.iter_mut().zip(s.amplitudes()) {
            *acc += x;
        }
    }
    let norm = l2_norm(&sum);
    if norm <= f64::EPSILON * samples.len() as f64 {
        return Err(Error::DegenerateMean);
    }
    sum.iter_mut().for_each(|x| *x /= norm);
    Ok(DataVector { amplitudes: sum, n: first.n })
}

/// One term `coeff * factors[0] (x) ... (x) factors[n-1]`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorTerm {
    pub coeff: f64,
    pub factors: Vec<[f64; 2]>,
}

impl TensorTerm {
    /// Kronecker product of the factors (without the coefficient).
    pub fn product_state(&self) -> Vec<f64> {
        let mut state = vec![1.0];
        for f in &self.factors {
            let mut next = Vec::with_capacity(state.len() * 2);
            for &s in &state {
                next.push(s * f[0]);
                next.push(s * f[1]);
            }
            state = next;
        }
        state
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TensorDecomposition {
    pub n: usize,
    /// Sorted by coefficient, largest first.
    pub terms: Vec<TensorTerm>,
}

/// Splits `v` into a coefficient-sorted sum of tensor products of
/// two-dimensional unit vectors.
pub fn decompose(v: &DataVector) -> Result<TensorDecomposition> {
    let norm = l2_norm(v.amplitudes());
    if (norm - 1.0).abs() > UNIT_TOLERANCE {
        return Err(Error::NotUnitNorm(norm));
    }
    let mut terms = schmidt_recursive(v.amplitudes());
    // Stable: ties keep the SVD emission order.
    terms.sort_by(|a, b| b.coeff.total_cmp(&a.coeff));
    Ok(TensorDecomposition { n: v.n(), terms })
}

fn schmidt_recursive(v: &[f64]) -> Vec<TensorTerm> {
    if v.len() == 2 {
        return vec![TensorTerm { coeff: 1.0, factors: vec![[v[0], v[1]]] }];
    }
    let mut out = Vec::new();
    for (sigma, left, right) in schmidt_split(v) {
        for child in schmidt_recursive(&right) {
            let mut factors = Vec::with_capacity(child.factors.len() + 1);
            factors.push(left);
            factors.extend(child.factors);
            out.push(TensorTerm { coeff: sigma * child.coeff, factors });
        }
    }
    out
}

/// SVD of the `2 x m` reshape of `v` via a single two-sided Jacobi rotation.
///
/// Returns `(sigma, u, v)` triplets with `sigma >= SINGULAR_CUTOFF`, largest
/// first, `u` canonicalised to a nonnegative first nonzero entry.
pub(crate) fn schmidt_split(v: &[f64]) -> Vec<(f64, [f64; 2], Vec<f64>)> {
    let half = v.len() / 2;
    let (r0, r1) = v.split_at(half);
    let a = dot(r0, r0);
    let b = dot(r1, r1);
    let c = dot(r0, r1);
    // Rotating the rows by phi makes them orthogonal; this branch of atan2
    // puts the larger singular value first.
    let phi = 0.5 * (2.0 * c).atan2(a - b);
    let (sin, cos) = phi.sin_cos();

    let p0: Vec<f64> = r0.iter().zip(r1).map(|(x, y)| cos * x + sin * y).collect();
    let p1: Vec<f64> = r0.iter().zip(r1).map(|(x, y)| -sin * x + cos * y).collect();
    let s0 = l2_norm(&p0);
    let s1 = l2_norm(&p1);

    let mut out = Vec::with_capacity(2);
    let mut first_right: Option<Vec<f64>> = None;
    for (sigma, mut u, mut right) in [(s0, [cos, sin], p0), (s1, [-sin, cos], p1)] {
        if sigma < SINGULAR_CUTOFF {
            continue;
        }
        right.iter_mut().for_each(|x| *x /= sigma);
        if let Some(prev) = &first_right {
            // Re-orthogonalise against the dominant vector; the small branch
            // loses orthogonality in proportion to s0 / s1.
            let overlap = dot(&right, prev);
            right.iter_mut().zip(prev).for_each(|(x, p)| *x -= overlap * p);
            let rn = l2_norm(&right);
            right.iter_mut().for_each(|x| *x /= rn);
        }
        let lead = if u[0] != 0.0 { u[0] } else { u[1] };
        if lead < 0.0 {
            u = [-u[0], -u[1]];
            right.iter_mut().for_each(|x| *x = -*x);
        }
        if first_right.is_none() {
            first_right = Some(right.clone());
        }
        out.push((sigma, u, right));
    }
    out
}

impl TensorDecomposition {
    /// `sum_i coeff_i * (factors_i0 (x) ... (x) factors_i(n-1))`.
    pub fn reconstruct(&self) -> Vec<f64> {
        let mut out = vec![0.0; 1usize << self.n];
        for term in &self.terms {
            for (o, p) in out.iter_mut().zip(term.product_state()) {
                *o += term.coeff * p;
            }
        }
        out
    }

    pub fn coefficients(&self) -> Vec<f64> {
        self.terms.iter().map(|t| t.coeff).collect()
    }

    /// Number of coefficients at or above `gamma`.
    pub fn count_above(&self, gamma: f64) -> usize {
        self.terms.iter().filter(|t| t.coeff >= gamma).count()
    }

    /// Keeps the terms with `coeff >= gamma`, at most `k_max` of them, and at
    /// least the single largest.
    pub fn truncate(&self, gamma: f64, k_max: usize) -> TruncationResult {
        let k_max = k_max.max(1);
        let mut k = self.count_above(gamma).min(k_max);
        if k == 0 {
            k = 1.min(self.terms.len());
        }
        let kept = TensorDecomposition { n: self.n, terms: self.terms[..k].to_vec() };
        let full = self.reconstruct();
        let approx = kept.reconstruct();
        let delta_psi = full
            .iter()
            .zip(&approx)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        TruncationResult { kept, k, gamma, delta_psi }
    }

    /// Keeps exactly the `k` largest terms (fewer if the decomposition is shorter).
    pub fn top_k(&self, k: usize) -> TruncationResult {
        self.truncate(0.0, k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruncationResult {
    pub kept: TensorDecomposition,
    pub k: usize,
    pub gamma: f64,
    /// `||psi - psi_k||_2`.
    pub delta_psi: f64,
}

impl TruncationResult {
    /// Squared entries of the truncated reconstruction, rescaled to sum to one.
    pub fn target_probabilities(&self) -> Result<Vec<f64>> {
        let approx = self.kept.reconstruct();
        let mut probs: Vec<f64> = approx.iter().map(|x| x * x).collect();
        let total: f64 = probs.iter().sum();
        if total <= 0.0 || self.kept.terms.is_empty() {
            return Err(Error::ZeroReconstruction);
        }
        probs.iter_mut().for_each(|p| *p /= total);
        Ok(probs)
    }

    /// Truncated reconstruction rescaled to unit norm.
    pub fn reduced_vector(&self) -> Result<DataVector> {
        let approx = self.kept.reconstruct();
        let norm = l2_norm(&approx);
        if norm <= 0.0 {
            return Err(Error::ZeroReconstruction);
        }
        Ok(DataVector { amplitudes: approx.iter().map(|x| x / norm).collect(), n: self.kept.n })
    }

    /// JSON export document for this truncation of `full`.
    pub fn export(&self, full: &TensorDecomposition) -> DecompositionExport {
        DecompositionExport {
            n: full.n,
            terms: full.terms.clone(),
            gamma: self.gamma,
            k: self.k,
            delta_psi: self.delta_psi,
        }
    }
}

/// Serialised decomposition: `{n, terms: [{coeff, factors}], gamma, k, delta_psi}`
/// with every real written to 17 significant digits.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DecompositionExport {
    pub n: usize,
    #[serde(serialize_with = "sig17::terms")]
    pub terms: Vec<TensorTerm>,
    #[serde(serialize_with = "sig17::real")]
    pub gamma: f64,
    pub k: usize,
    #[serde(serialize_with = "sig17::real")]
    pub delta_psi: f64,
}

impl DecompositionExport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }
}

pub(crate) mod sig17 {
    use serde::ser::{SerializeMap, SerializeSeq, Serializer};
    use serde_json::value::RawValue;

    use super::TensorTerm;

    pub fn format(x: f64) -> String {
        if x.is_finite() {
            format!("{x:.16e}")
        } else {
            "null".to_string()
        }
    }

    fn raw(x: f64) -> Box<RawValue> {
        RawValue::from_string(format(x)).expect("formatted float is valid JSON")
    }

    pub fn real<S: Serializer>(x: &f64, s: S) -> Result<S::Ok, S::Error> {
        serde::Serialize::serialize(&raw(*x), s)
    }

    pub fn terms<S: Serializer>(terms: &[TensorTerm], s: S) -> Result<S::Ok, S::Error> {
        let mut seq = s.serialize_seq(Some(terms.len()))?;
        for t in terms {
            seq.serialize_element(&Term17(t))?;
        }
        seq.end()
    }

    struct Term17<'a>(&'a TensorTerm);

    impl serde::Serialize for Term17<'_> {
        fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
            let factors: Vec<[Box<RawValue>; 2]> =
                self.0.factors.iter().map(|f| [raw(f[0]), raw(f[1])]).collect();
            let mut map = s.serialize_map(Some(2))?;
            map.serialize_entry("coeff", &raw(self.0.coeff))?;
            map.serialize_entry("factors", &factors)?;
            map.end()
        }
    }
}

pub(crate) fn qubits_for_len(len: usize) -> Result<usize> {
    if len < 2 || !len.is_power_of_two() {
        return Err(Error::NotPowerOfTwo(len));
    }
    Ok(len.trailing_zeros() as usize)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub(crate) fn l2_norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}
