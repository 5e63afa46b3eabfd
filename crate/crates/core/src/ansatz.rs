//! Block-encoded sum of rotated product states.
//!
//! For `k` terms on `n` data qubits the circuit uses `a = ceil(log2 k)`
//! ancilla qubits. Two ancilla layers (Ry on every ancilla, then a chain of
//! controlled-Ry `j -> j+1`) set the branch weights; term `i` is a product of
//! data-qubit Ry rotations applied only where the ancilla register reads `i`.
//! Only the data register is measured and no rotation follows the terms.
//!
//! Parameter layout (flat vector):
//!
//! ```text
//! [layer 0: Ry x a, CRy x (a-1)] [layer 1: Ry x a, CRy x (a-1)] [term 0: n] ... [term k-1: n]
//! ```
//!
//! Gradients use adjoint back-propagation through the real statevector, which
//! is exact for controlled rotations (the two-term shift rule is not).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::statevec::{self, for_each_pair, MaskedRy, StateVector};
use crate::tensornet::DataVector;

pub const ANCILLA_LAYERS: usize = 2;

/// Half-width of the uniform initialisation interval.
pub const INIT_HALF_WIDTH: f64 = std::f64::consts::PI / 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircuitSpec {
    pub n: usize,
    pub k: usize,
    pub a: usize,
    pub layers: usize,
}

/// Circuit for `k` terms on `n` data qubits.
pub fn build_spec(n: usize, k: usize) -> Result<CircuitSpec> {
    if n == 0 {
        return Err(Error::InvalidArgument("circuit needs at least one data qubit".into()));
    }
    if k == 0 {
        return Err(Error::InvalidArgument("circuit needs at least one term".into()));
    }
    if n < usize::BITS as usize - 1 && k > 1usize << n {
        return Err(Error::KExceedsSize { k, max: 1usize << n });
    }
    let a = ancillas_for(k);
    if n + a > statevec::MAX_QUBITS {
        return Err(Error::TooManyQubits(n + a));
    }
    Ok(CircuitSpec { n, k, a, layers: ANCILLA_LAYERS })
}

/// `ceil(log2 k)`, zero for a single term.
pub fn ancillas_for(k: usize) -> usize {
    if k <= 1 {
        0
    } else {
        (usize::BITS - (k - 1).leading_zeros()) as usize
    }
}

impl CircuitSpec {
    /// Angles per ancilla layer: `a` rotations plus `a - 1` chain links.
    pub fn layer_params(&self) -> usize {
        self.a + self.a.saturating_sub(1)
    }

    pub fn ancilla_params(&self) -> usize {
        self.layers * self.layer_params()
    }

    pub fn param_count(&self) -> usize {
        self.ancilla_params() + self.k * self.n
    }

    /// Offset of term `i`'s `n` angles in the flat parameter vector.
    pub fn term_offset(&self, i: usize) -> usize {
        self.ancilla_params() + i * self.n
    }

    /// Gate sequence with the parameter index each gate reads.
    pub(crate) fn gates(&self) -> Vec<(MaskedRy, usize)> {
        let total = self.n + self.a;
        let bit = |q: usize| total - 1 - q;
        let mut gates = Vec::with_capacity(self.param_count());
        let mut p = 0;
        for _ in 0..self.layers {
            for q in 0..self.a {
                gates.push((MaskedRy { target_bit: bit(q), mask: 0, pattern: 0 }, p));
                p += 1;
            }
            for q in 0..self.a.saturating_sub(1) {
                let c = 1usize << bit(q);
                gates.push((MaskedRy { target_bit: bit(q + 1), mask: c, pattern: c }, p));
                p += 1;
            }
        }
        for i in 0..self.k {
            for j in 0..self.n {
                gates.push((statevec::term_gate(self.n, self.a, i, j), p));
                p += 1;
            }
        }
        debug_assert_eq!(p, self.param_count());
        gates
    }

    fn check(&self, params: &[f64], x: &DataVector) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::DimensionMismatch { expected: self.param_count(), got: params.len() });
        }
        if x.n() != self.n {
            return Err(Error::DimensionMismatch { expected: 1 << self.n, got: x.len() });
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardOutput {
    /// Data-register distribution, length `2^n`.
    pub probabilities: Vec<f64>,
    /// `P(qubit j = 1)`, length `n`.
    pub marginals: Vec<f64>,
}

/// Final state of the circuit on input `x`.
pub fn run(spec: &CircuitSpec, params: &[f64], x: &DataVector) -> Result<StateVector> {
    spec.check(params, x)?;
    let mut state = statevec::prepare(x, spec.a)?;
    for (gate, p) in spec.gates() {
        state.apply_masked(gate, params[p]);
    }
    Ok(state)
}

pub fn forward(spec: &CircuitSpec, params: &[f64], x: &DataVector) -> Result<ForwardOutput> {
    let state = run(spec, params, x)?;
    let probabilities = state.data_probabilities();
    let marginals = statevec::marginals_from_probabilities(&probabilities, spec.n);
    Ok(ForwardOutput { probabilities, marginals })
}

/// Loss gradient with respect to one of the circuit outputs.
#[derive(Debug, Clone, Copy)]
pub enum Upstream<'a> {
    /// `dL/dP`, length `2^n`.
    Probabilities(&'a [f64]),
    /// `dL/dM`, length `n`.
    Marginals(&'a [f64]),
}

impl Upstream<'_> {
    fn to_probabilities(self, n: usize) -> Result<Vec<f64>> {
        match self {
            Upstream::Probabilities(g) => {
                if g.len() != 1 << n {
                    return Err(Error::DimensionMismatch { expected: 1 << n, got: g.len() });
                }
                Ok(g.to_vec())
            }
            Upstream::Marginals(g) => {
                if g.len() != n {
                    return Err(Error::DimensionMismatch { expected: n, got: g.len() });
                }
                // dM_j/dP_b is bit j of b.
                Ok((0..1usize << n)
                    .map(|b| {
                        g.iter()
                            .enumerate()
                            .filter(|(j, _)| (b >> (n - 1 - j)) & 1 == 1)
                            .map(|(_, gj)| gj)
                            .sum()
                    })
                    .collect())
            }
        }
    }
}

/// `dL/dparams` given `dL/d(output)`.
pub fn gradient(
    spec: &CircuitSpec,
    params: &[f64],
    x: &DataVector,
    upstream: Upstream<'_>,
) -> Result<Vec<f64>> {
    let g_probs = upstream.to_probabilities(spec.n)?;
    let mut psi = run(spec, params, x)?.amplitudes().to_vec();
    let data_mask = (1usize << spec.n) - 1;
    // dL/dpsi_i = 2 psi_i dL/dP_{i mod 2^n}
    let mut lambda: Vec<f64> =
        psi.iter().enumerate().map(|(i, amp)| 2.0 * amp * g_probs[i & data_mask]).collect();

    let mut grad = vec![0.0; spec.param_count()];
    let len = psi.len();
    for (gate, p) in spec.gates().into_iter().rev() {
        let (s, c) = (0.5 * params[p]).sin_cos();
        // Undo the gate on psi to recover its input.
        for_each_pair(len, gate, |i0, i1| {
            let y0 = psi[i0];
            let y1 = psi[i1];
            psi[i0] = c * y0 + s * y1;
            psi[i1] = -s * y0 + c * y1;
        });
        let mut acc = 0.0;
        for_each_pair(len, gate, |i0, i1| {
            let x0 = psi[i0];
            let x1 = psi[i1];
            // d/dtheta of [[c, -s], [s, c]] = 0.5 * [[-s, -c], [c, -s]]
            acc += lambda[i0] * (-s * x0 - c * x1) + lambda[i1] * (c * x0 - s * x1);
            let l0 = lambda[i0];
            let l1 = lambda[i1];
            lambda[i0] = c * l0 + s * l1;
            lambda[i1] = -s * l0 + c * l1;
        });
        grad[p] += 0.5 * acc;
    }
    Ok(grad)
}

/// Angles uniform in `[-pi/8, pi/8]`.
pub fn init_params(spec: &CircuitSpec, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..spec.param_count())
        .map(|_| rng.random_range(-INIT_HALF_WIDTH..=INIT_HALF_WIDTH))
        .collect()
}

/// Saved circuit parameters with their training trace.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub n: usize,
    pub k: usize,
    pub a: usize,
    pub params: Vec<f64>,
    pub seed: u64,
    pub loss_history: Vec<f64>,
}

impl Checkpoint {
    pub fn new(spec: &CircuitSpec, params: Vec<f64>, seed: u64, loss_history: Vec<f64>) -> Self {
        Self { n: spec.n, k: spec.k, a: spec.a, params, seed, loss_history }
    }

    pub fn spec(&self) -> Result<CircuitSpec> {
        let spec = build_spec(self.n, self.k)?;
        if spec.a != self.a || spec.param_count() != self.params.len() {
            return Err(Error::DimensionMismatch {
                expected: spec.param_count(),
                got: self.params.len(),
            });
        }
        Ok(spec)
    }
}
