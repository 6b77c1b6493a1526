//! Hamiltonian neural Koopman operators.
//!
//! An autoencoder lifts states of a Hamiltonian system onto a sphere in a
//! latent space where a learned special-orthogonal matrix advances them one
//! step at a time. Because the latent dynamics are norm preserving, long
//! rollouts inherit the conservation laws of the data, and eigenvectors of
//! the Koopman matrix with eigenvalue one expose conserved quantities.
//!
//! The crate is organized bottom-up:
//!
//! * [`numerics`] dense linear algebra (GEMM, pseudo-inverse, `expm`, eigen)
//! * [`autodiff`] tape-based reverse mode over the primitives the losses use
//! * [`orthogonal`] skew parameterization and Kronecker-factored variants
//! * [`systems`] ground-truth simulators and invariants
//! * [`model`] the encoder / Koopman / decoder model and its loss terms
//! * [`baselines`] DMD and Hermite EDMD
//! * [`training`] Adam and the training loop
//! * [`eval`] rollout metrics, Wasserstein distance, invariant discovery

pub mod autodiff;
pub mod baselines;
pub mod error;
pub mod eval;
pub mod model;
pub mod numerics;
pub mod orthogonal;
pub mod par;
pub mod rng;
pub mod systems;
pub mod training;

pub use error::{Error, Result};
pub use numerics::Matrix;
