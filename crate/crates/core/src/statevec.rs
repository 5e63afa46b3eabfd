//! Real statevector simulator for Ry-family circuits.
//!
//! The register holds `a` ancilla qubits above `n` data qubits. Qubits are
//! numbered top-down as in a circuit diagram: global index `0..a` are the
//! ancillas, `a..a+n` the data qubits, and lower indices are more significant
//! in the amplitude index. Amplitude `v * 2^n + b` therefore belongs to
//! ancilla value `v` and data basis state `b`, with data qubit 0 as the most
//! significant bit of `b`.
//!
//! Every gate is an Ry rotation on one target qubit, restricted to the
//! amplitudes whose index matches a control `(mask, pattern)`. Plain Ry has an
//! empty mask, controlled-Ry a single bit, and the ancilla-selected term
//! rotations use the full ancilla register as mask. Zero-controls are handled
//! by the pattern, no X conjugation needed.

use crate::error::{Error, Result};
use crate::tensornet::DataVector;

/// Upper bound on `n + a`.
pub const MAX_QUBITS: usize = 20;

/// Global qubit position, counted from the top of the register.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct QubitIndex(pub usize);

/// Ry restricted to the subspace `index & mask == pattern`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) struct MaskedRy {
    pub target_bit: usize,
    pub mask: usize,
    pub pattern: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StateVector {
    amplitudes: Vec<f64>,
    n: usize,
    a: usize,
}

/// `|0...0>_ancilla (x) |x>_data`.
pub fn prepare(x: &DataVector, a: usize) -> Result<StateVector> {
    let n = x.n();
    check_size(n, a)?;
    let mut amplitudes = vec![0.0; 1usize << (n + a)];
    amplitudes[..x.len()].copy_from_slice(x.amplitudes());
    Ok(StateVector { amplitudes, n, a })
}

fn check_size(n: usize, a: usize) -> Result<()> {
    if n + a > MAX_QUBITS {
        return Err(Error::TooManyQubits(n + a));
    }
    Ok(())
}

impl StateVector {
    /// Builds a state from raw amplitudes (length `2^(n+a)`), e.g. for tests.
    pub fn from_amplitudes(amplitudes: Vec<f64>, n: usize, a: usize) -> Result<Self> {
        check_size(n, a)?;
        let dim = 1usize << (n + a);
        if amplitudes.len() != dim {
            return Err(Error::DimensionMismatch { expected: dim, got: amplitudes.len() });
        }
        Ok(Self { amplitudes, n, a })
    }

    pub fn amplitudes(&self) -> &[f64] {
        &self.amplitudes
    }

    pub fn data_qubits(&self) -> usize {
        self.n
    }

    pub fn ancilla_qubits(&self) -> usize {
        self.a
    }

    pub fn total_qubits(&self) -> usize {
        self.n + self.a
    }

    pub fn norm(&self) -> f64 {
        crate::tensornet::l2_norm(&self.amplitudes)
    }

    pub fn ancilla(&self, i: usize) -> Result<QubitIndex> {
        if i >= self.a {
            return Err(Error::QubitOutOfRange { index: i, total: self.a });
        }
        Ok(QubitIndex(i))
    }

    pub fn data(&self, j: usize) -> Result<QubitIndex> {
        if j >= self.n {
            return Err(Error::QubitOutOfRange { index: j, total: self.n });
        }
        Ok(QubitIndex(self.a + j))
    }

    fn bit_of(&self, q: QubitIndex) -> Result<usize> {
        let total = self.total_qubits();
        if q.0 >= total {
            return Err(Error::QubitOutOfRange { index: q.0, total });
        }
        Ok(total - 1 - q.0)
    }

    pub fn apply_ry(&mut self, q: QubitIndex, theta: f64) -> Result<()> {
        let target_bit = self.bit_of(q)?;
        self.apply_masked(MaskedRy { target_bit, mask: 0, pattern: 0 }, theta);
        Ok(())
    }

    /// Ry on `target` where `control` is `|1>`.
    pub fn apply_cry(&mut self, control: QubitIndex, target: QubitIndex, theta: f64) -> Result<()> {
        if control == target {
            return Err(Error::ControlIsTarget(control.0));
        }
        let c = 1usize << self.bit_of(control)?;
        let target_bit = self.bit_of(target)?;
        self.apply_masked(MaskedRy { target_bit, mask: c, pattern: c }, theta);
        Ok(())
    }

    /// `Ry(thetas[0]) (x) ... (x) Ry(thetas[n-1])` on the data register, only
    /// where the ancilla register holds `ancilla_value`.
    pub fn apply_term_controlled(&mut self, ancilla_value: usize, thetas: &[f64]) -> Result<()> {
        if ancilla_value >= 1usize << self.a {
            return Err(Error::AncillaValueOutOfRange { value: ancilla_value, ancillas: self.a });
        }
        if thetas.len() != self.n {
            return Err(Error::DimensionMismatch { expected: self.n, got: thetas.len() });
        }
        for (j, &theta) in thetas.iter().enumerate() {
            let gate = term_gate(self.n, self.a, ancilla_value, j);
            self.apply_masked(gate, theta);
        }
        Ok(())
    }

    pub(crate) fn apply_masked(&mut self, gate: MaskedRy, theta: f64) {
        let (s, c) = (0.5 * theta).sin_cos();
        for_each_pair(self.amplitudes.len(), gate, |i0, i1| {
            let x0 = self.amplitudes[i0];
            let x1 = self.amplitudes[i1];
            self.amplitudes[i0] = c * x0 - s * x1;
            self.amplitudes[i1] = s * x0 + c * x1;
        });
    }

    /// `P[b] = sum_v amp[v * 2^n + b]^2`: measurement of the data register.
    pub fn data_probabilities(&self) -> Vec<f64> {
        let dim = 1usize << self.n;
        let mut probs = vec![0.0; dim];
        for block in self.amplitudes.chunks_exact(dim) {
            for (p, x) in probs.iter_mut().zip(block) {
                *p += x * x;
            }
        }
        probs
    }

    /// `M[j] = P(data qubit j = 1)`.
    pub fn qubit_marginals(&self) -> Vec<f64> {
        marginals_from_probabilities(&self.data_probabilities(), self.n)
    }
}

/// Bit-marginalises a data-register distribution.
pub fn marginals_from_probabilities(probs: &[f64], n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n];
    for (b, p) in probs.iter().enumerate() {
        for (j, mj) in m.iter_mut().enumerate() {
            if (b >> (n - 1 - j)) & 1 == 1 {
                *mj += p;
            }
        }
    }
    m
}

/// Gate for data qubit `j` of the term selected by `ancilla_value`.
pub(crate) fn term_gate(n: usize, a: usize, ancilla_value: usize, j: usize) -> MaskedRy {
    let mask = ((1usize << a) - 1) << n;
    MaskedRy { target_bit: n - 1 - j, mask, pattern: ancilla_value << n }
}

/// Calls `f(i0, i1)` for every amplitude pair the gate mixes (`i0` has the
/// target bit clear, `i1 = i0 | target`).
#[inline]
pub(crate) fn for_each_pair(len: usize, gate: MaskedRy, mut f: impl FnMut(usize, usize)) {
    let t = 1usize << gate.target_bit;
    for i0 in 0..len {
        if i0 & t != 0 || i0 & gate.mask != gate.pattern {
            continue;
        }
        f(i0, i0 | t);
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::f64::consts::{FRAC_1_SQRT_2 as H, PI};

    fn random_state(n: usize, a: usize, rng: &mut ChaCha8Rng) -> StateVector {
        let raw: Vec<f64> = (0..1 << (n + a)).map(|_| rng.random_range(-1.0..1.0)).collect();
        let norm = crate::tensornet::l2_norm(&raw);
        StateVector::from_amplitudes(raw.iter().map(|x| x / norm).collect(), n, a).unwrap()
    }

    fn assert_amps(s: &StateVector, want: &[f64]) {
        assert_eq!(s.amplitudes().len(), want.len());
        for (a, b) in s.amplitudes().iter().zip(want) {
            assert_abs_diff_eq!(*a, *b, epsilon = 1e-12);
        }
    }

    #[test]
    fn prepare_examples() {
        let x = DataVector::from_unit(vec![1.0, 0.0]).unwrap();
        assert_amps(&prepare(&x, 1).unwrap(), &[1.0, 0.0, 0.0, 0.0]);
        let x = DataVector::from_unit(vec![0.6, 0.8]).unwrap();
        assert_amps(&prepare(&x, 0).unwrap(), &[0.6, 0.8]);
        let x = DataVector::from_unit(vec![H, 0.0, 0.0, H]).unwrap();
        let s = prepare(&x, 2).unwrap();
        let mut want = vec![0.0; 16];
        want[0] = H;
        want[3] = H;
        assert_amps(&s, &want);
    }

    #[test]
    fn prepare_rejects_oversized_registers() {
        let x = DataVector::normalize(&[1.0], 18).unwrap();
        assert!(matches!(prepare(&x, 3), Err(Error::TooManyQubits(21))));
    }

    #[test]
    fn ry_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mut s = random_state(2, 1, &mut rng);
        let before = s.clone();
        s.apply_ry(QubitIndex(1), 0.0).unwrap();
        assert_eq!(s, before);

        let mut s = StateVector::from_amplitudes(vec![1.0, 0.0], 1, 0).unwrap();
        s.apply_ry(QubitIndex(0), PI).unwrap();
        assert_amps(&s, &[0.0, 1.0]);

        let mut s = StateVector::from_amplitudes(vec![1.0, 0.0], 1, 0).unwrap();
        s.apply_ry(QubitIndex(0), PI / 2.0).unwrap();
        assert_amps(&s, &[H, H]);

        assert!(s.apply_ry(QubitIndex(1), 0.3).is_err());
    }

    #[test]
    fn cry_examples() {
        // Control in |0>: nothing happens.
        let mut s = StateVector::from_amplitudes(vec![0.6, 0.8, 0.0, 0.0], 2, 0).unwrap();
        s.apply_cry(QubitIndex(0), QubitIndex(1), 1.234).unwrap();
        assert_amps(&s, &[0.6, 0.8, 0.0, 0.0]);

        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut s = random_state(2, 0, &mut rng);
        let before = s.clone();
        s.apply_cry(QubitIndex(0), QubitIndex(1), 0.0).unwrap();
        assert_eq!(s, before);

        // |10> (qubit 0 set) with control on qubit 0 flips qubit 1: |11>.
        let mut s = StateVector::from_amplitudes(vec![0.0, 0.0, 1.0, 0.0], 2, 0).unwrap();
        s.apply_cry(QubitIndex(0), QubitIndex(1), PI).unwrap();
        assert_amps(&s, &[0.0, 0.0, 0.0, 1.0]);

        // Mirror case: |01> with control on qubit 1 flips qubit 0.
        let mut s = StateVector::from_amplitudes(vec![0.0, 1.0, 0.0, 0.0], 2, 0).unwrap();
        s.apply_cry(QubitIndex(1), QubitIndex(0), PI).unwrap();
        assert_amps(&s, &[0.0, 0.0, 0.0, 1.0]);

        assert!(matches!(
            s.apply_cry(QubitIndex(1), QubitIndex(1), 0.1),
            Err(Error::ControlIsTarget(1))
        ));
    }

    #[test]
    fn term_controlled_examples() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let mut s = random_state(3, 0, &mut rng);
        let before = s.clone();
        s.apply_term_controlled(0, &[0.0; 3]).unwrap();
        assert_eq!(s, before);

        let x = DataVector::from_unit(vec![0.6, 0.8]).unwrap();
        let mut s = prepare(&x, 1).unwrap();
        s.apply_term_controlled(1, &[0.7]).unwrap();
        assert_amps(&s, &[0.6, 0.8, 0.0, 0.0]);

        let mut s = StateVector::from_amplitudes(vec![H, 0.0, H, 0.0], 1, 1).unwrap();
        s.apply_term_controlled(1, &[PI]).unwrap();
        assert_amps(&s, &[H, 0.0, 0.0, H]);

        assert!(matches!(
            s.apply_term_controlled(2, &[0.0]),
            Err(Error::AncillaValueOutOfRange { value: 2, ancillas: 1 })
        ));
        assert!(s.apply_term_controlled(0, &[0.0, 0.0]).is_err());
    }

    #[test]
    fn probability_examples() {
        let x = DataVector::from_unit(vec![0.6, 0.8]).unwrap();
        let p = prepare(&x, 1).unwrap().data_probabilities();
        assert_abs_diff_eq!(p[0], 0.36, epsilon = 1e-12);
        assert_abs_diff_eq!(p[1], 0.64, epsilon = 1e-12);

        let s = StateVector::from_amplitudes(vec![0.5; 4], 2, 0).unwrap();
        assert_eq!(s.data_probabilities(), vec![0.25; 4]);

        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let s = random_state(3, 2, &mut rng);
        assert_abs_diff_eq!(s.data_probabilities().iter().sum::<f64>(), 1.0, epsilon = 1e-12);
    }

    #[test]
    fn marginal_examples() {
        let s = StateVector::from_amplitudes(vec![0.0, 1.0, 0.0, 0.0], 2, 0).unwrap();
        assert_eq!(s.qubit_marginals(), vec![0.0, 1.0]);
        let s = StateVector::from_amplitudes(vec![0.5; 4], 2, 0).unwrap();
        assert_eq!(s.qubit_marginals(), vec![0.5, 0.5]);
        let s = StateVector::from_amplitudes(vec![0.6, 0.0, 0.0, 0.8], 2, 0).unwrap();
        let m = s.qubit_marginals();
        assert_abs_diff_eq!(m[0], 0.64, epsilon = 1e-12);
        assert_abs_diff_eq!(m[1], 0.64, epsilon = 1e-12);
    }

    #[test]
    fn marginals_match_direct_bit_sums() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..10_000 {
            let n = rng.random_range(1..=4);
            let a = rng.random_range(0..=2);
            let s = random_state(n, a, &mut rng);
            let m = s.qubit_marginals();
            let total = n + a;
            for (j, mj) in m.iter().enumerate() {
                let bit = total - 1 - (a + j);
                let direct: f64 = s
                    .amplitudes()
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| (i >> bit) & 1 == 1)
                    .map(|(_, x)| x * x)
                    .sum();
                assert_abs_diff_eq!(*mj, direct, epsilon = 1e-12);
            }
        }
    }

    #[test]
    fn gates_preserve_norm() {
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let mut s = random_state(3, 2, &mut rng);
        for _ in 0..200 {
            let theta = rng.random_range(-PI..PI);
            match rng.random_range(0..3) {
                0 => s.apply_ry(QubitIndex(rng.random_range(0..5)), theta).unwrap(),
                1 => {
                    let c = rng.random_range(0..5);
                    let t = (c + rng.random_range(1..5)) % 5;
                    s.apply_cry(QubitIndex(c), QubitIndex(t), theta).unwrap();
                }
                _ => {
                    let thetas: Vec<f64> = (0..3).map(|_| rng.random_range(-PI..PI)).collect();
                    s.apply_term_controlled(rng.random_range(0..4), &thetas).unwrap();
                }
            }
            assert_abs_diff_eq!(s.norm(), 1.0, epsilon = 1e-12);
        }
    }

    #[test]
    fn gates_are_linear() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let (n, a) = (2, 1);
        let psi = random_state(n, a, &mut rng);
        let thetas = [0.4, -1.1];
        let run = |s: &mut StateVector| {
            s.apply_ry(QubitIndex(0), 0.9).unwrap();
            s.apply_cry(QubitIndex(0), QubitIndex(2), -0.3).unwrap();
            s.apply_term_controlled(1, &thetas).unwrap();
        };
        let mut whole = psi.clone();
        run(&mut whole);
        let mut superposed = vec![0.0; 8];
        for (i, &amp) in psi.amplitudes().iter().enumerate() {
            let mut basis = vec![0.0; 8];
            basis[i] = 1.0;
            let mut b = StateVector::from_amplitudes(basis, n, a).unwrap();
            run(&mut b);
            for (acc, x) in superposed.iter_mut().zip(b.amplitudes()) {
                *acc += amp * x;
            }
        }
        assert_amps(&whole, &superposed);
    }

    #[test]
    fn unconditioned_term_is_sequential_ry() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let s0 = random_state(3, 0, &mut rng);
        let thetas = [0.3, -0.8, 2.1];
        let mut a = s0.clone();
        a.apply_term_controlled(0, &thetas).unwrap();
        let mut b = s0;
        for (j, t) in thetas.iter().enumerate() {
            let q = b.data(j).unwrap();
            b.apply_ry(q, *t).unwrap();
        }
        assert_amps(&a, b.amplitudes());
    }
}
