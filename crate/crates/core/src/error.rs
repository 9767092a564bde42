use num_complex::Complex64;
use thiserror::Error;

use crate::lyapunov::InstabilityWitness;
use crate::numkernel::KernelError;

#[derive(Debug, Clone, Error)]
pub enum Error {
    #[error(transparent)]
    Kernel(#[from] KernelError),

    #[error("matrix is not Hermitian (relative defect {defect:e})")]
    NotHermitian { defect: f64 },

    #[error("norm weight is not positive definite (smallest eigenvalue {min_eigenvalue:e})")]
    NotPositiveDefinite { min_eigenvalue: f64 },

    #[error("candidate is not positive semidefinite (smallest eigenvalue {min_eigenvalue:e}, scale {scale:e})")]
    NotPositiveSemidefinite { min_eigenvalue: f64, scale: f64 },

    #[error("generator has spectrum in the closed right half-plane: eigenvalue {}{:+}i", .0.lambda.re, .0.lambda.im)]
    Unstable(Box<InstabilityWitness>),

    #[error("candidate is not in the Lyapunov cone (margin {margin:e} > tolerance {tol:e})")]
    NotMember { margin: f64, tol: f64 },

    #[error("scaling by {factor} < 1 is unsound: scaled margin would be {margin}")]
    ScaleBelowOne { factor: f64, margin: f64 },

    #[error("lambda = {}{:+}i is in the spectrum to working precision (nearest eigenvalue {}{:+}i)",
        .lambda.re, .lambda.im, .nearest.re, .nearest.im)]
    InSpectrum { lambda: Complex64, nearest: Complex64 },

    #[error("delta0 = {delta0} violates 2*delta0*|Q| < 1 for |Q| = {q_norm}; largest admissible delta0 is {max_delta0} (or enlarge Q with scale_member)")]
    StripPrecondition { delta0: f64, q_norm: f64, max_delta0: f64 },

    #[error("perturbation norm {b_norm} exceeds the admissible radius {radius} by {excess:e}")]
    PerturbationTooLarge { b_norm: f64, radius: f64, excess: f64 },

    #[error("alpha must exceed 1, got {alpha}")]
    AlphaNotAdmissible { alpha: f64 },

    #[error("no alpha > 1 is admissible: |B| = {b_norm} >= 1/(2|Q|) = {limit}")]
    RadiusUnreachable { b_norm: f64, limit: f64 },

    #[error("lower envelope check failed at t = {t}: m(t) = {m:e} < {floor:e}")]
    EnvelopeViolation { t: f64, m: f64, floor: f64 },

    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("malformed matrix file: {0}")]
    Malformed(String),

    #[error("ragged matrix data at offset {offset}: expected {expected} entries, found {found}")]
    Ragged { offset: usize, expected: usize, found: usize },

    #[error("non-finite matrix entry at offset {offset}")]
    NonFiniteEntry { offset: usize },

    #[error("i/o error: {0}")]
    Io(String),
}

pub type Result<T> = std::result::Result<T, Error>;

impl From<std::io::Error> for Error {
    fn from(e: std::io::Error) -> Self {
        Error::Io(e.to_string())
    }
}
