//! Average sampling in finitely generated shift-invariant spaces.
//!
//! The library assembles truncated sampling operators for models
//! `(Φ, μ⃗, X)`, estimates their stability constants, evaluates perturbation
//! budgets for generator, measure and jitter perturbations, and reconstructs
//! signals with the frame algorithm.

// `!(x > 0.0)` is used on purpose so that NaN is rejected too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod amalgam;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod localization;
pub mod measure;
pub mod norm;
pub mod perturbation;
pub mod quadrature;
pub mod reconstruction;
pub mod sampling_op;
pub mod scenario;
pub mod shift_space;

pub use error::{Error, Result};
pub use norm::PNorm;
