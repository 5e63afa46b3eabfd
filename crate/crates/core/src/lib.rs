//! Tensor-network structured quantum circuits for data compression.
//!
//! A data vector of dimension `2^n` is split into a sum of tensor products of
//! two-dimensional factors by repeated Schmidt (SVD) steps ([`tensornet`]).
//! Keeping the `k` largest terms gives a `k`-rank approximation, and a
//! rotation circuit with `ceil(log2 k)` ancilla qubits is trained to reproduce
//! it ([`statevec`], [`ansatz`], [`training`]). The per-qubit marginals of that
//! circuit feed a small batch-normalised classifier head ([`mlphead`]) and the
//! two are trained jointly under stratified cross validation ([`hybrid`]).

pub mod ansatz;
pub mod dataio;
mod error;
pub mod hybrid;
pub mod mlphead;
pub mod statevec;
pub mod tensornet;
pub mod training;

pub use error::{Error, Result};
pub use tensornet::{DataVector, TensorDecomposition, TensorTerm, TruncationResult};
