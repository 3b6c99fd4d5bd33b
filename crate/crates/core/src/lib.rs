//! Quantum-kernel support vector machines on classical hardware.
//!
//! The crate is layered bottom-up:
//!
//! * [`statevec`]: dense statevector with Hadamard and diagonal-phase layers
//! * [`featuremap`]: the ZZ / Pauli / Suzuki encoding circuits
//! * [`qkernel`]: exact and shot-sampled fidelity kernels, Gram assembly
//! * [`qka`]: kernel alignment of a fiducial rotation layer by SPSA
//! * [`svm`]: classical kernels, SMO dual solver, one-vs-one multiclass
//! * [`preprocess`]: rescalers, outlier filter, tree importances, PCA / LDA
//! * [`bench`]: dataset handling, cross-validation and experiment grids

// NaN must fail positivity checks, so `!(v > 0.0)` is deliberate.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod bench;
pub mod error;
pub mod featuremap;
pub mod oracle;
pub mod preprocess;
pub mod qka;
pub mod qkernel;
pub mod statevec;
pub mod svm;

pub use error::{Error, Result};
