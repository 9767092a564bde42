//! Lyapunov-inequality certificates for exponential stability of matrix
//! semigroups `T(t) = e^{tA}` on weighted Hilbert norms.
//!
//! A Hermitian PSD `Q` is a member of `L_A` when
//! `⟨QAx, x⟩ + ⟨Qx, Ax⟩ ≤ −‖x‖²` for all `x`. Members certify uniform
//! exponential stability, resolvent bounds on the right half-plane and a
//! left strip, and robustness under bounded perturbations.
//!
//! The `parallel` feature (default) runs grid scans, quadrature panels and
//! random trials on rayon; without it the same code runs sequentially with
//! identical results.

// `!(x > 0.0)` is deliberate: it rejects NaN along with nonpositive values.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod error;
pub mod lyapunov;
pub mod models;
pub mod numkernel;
pub mod par;
pub mod perturb;
pub mod resolvent;
pub mod semigroup;
pub mod space;

pub use error::{Error, Result};
pub use numkernel::{Complex64, Matrix, Vector};

use serde::{Deserialize, Serialize};

/// Largest whitened margin accepted for membership in `L_A`.
pub const MEMBERSHIP_TOL: f64 = 1e-8;
/// Relative residual demanded of linear and Lyapunov solves.
pub const SOLVER_RESIDUAL: f64 = 1e-10;
/// `λ_min(Q) ≥ −PSD_TOL·‖Q‖` counts as positive semidefinite.
pub const PSD_TOL: f64 = 1e-10;
/// `Re λ ≥ −REFUTE_TOL` counts as an unstable eigenvalue.
pub const REFUTE_TOL: f64 = 1e-10;

/// The tolerances in force for a run, recorded in reports.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub membership: f64,
    pub solver_residual: f64,
    pub psd: f64,
    pub refute: f64,
    pub expm: f64,
    pub verify: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            membership: MEMBERSHIP_TOL,
            solver_residual: SOLVER_RESIDUAL,
            psd: PSD_TOL,
            refute: REFUTE_TOL,
            expm: numkernel::DEFAULT_EXPM_TOL,
            verify: resolvent::VERIFY_TOL,
        }
    }
}
