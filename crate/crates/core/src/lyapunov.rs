//! Membership in the Lyapunov cone `L_A`, refutation, and the two
//! constructions of members (algebraic solve and semigroup quadrature).
//!
//! In a norm model with weight `W`, `Q ∈ L_A` means
//! `⟨QAx, x⟩ + ⟨Qx, Ax⟩ ≤ −‖x‖²` for all `x`, i.e. `A*Q + QA + W ⪯ 0`.
//! The membership margin is the largest eigenvalue of the whitened residual
//! `W^{-1/2}(A*Q + QA + W)W^{-1/2}`; a member has margin `≤ 0` (up to the
//! membership tolerance).

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numkernel::{self, ensure_dim, ensure_square, hermitian_part, real, Matrix, Vector};
use crate::par;
use crate::semigroup::{self, PanelPlan};
use crate::space::{dual_map_norm, op_norm, strong_positivity_theta, NormModel, RieszMap};
use crate::{MEMBERSHIP_TOL, PSD_TOL, REFUTE_TOL};

/// Largest dimension solved through the dense `n² × n²` Kronecker system;
/// larger problems go through the Schur route.
pub const KRONECKER_MAX_DIM: usize = 24;

/// An eigenpair `(λ, v)` with `Re λ ≥ −REFUTE_TOL`.
///
/// For every PSD `Q`, `⟨QAv, v⟩ + ⟨Qv, Av⟩ = 2 Re λ·⟨Qv, v⟩`, which cannot be
/// `≤ −‖v‖²` when `Re λ ≥ 0`; so `L_A` is empty.
#[derive(Debug, Clone, PartialEq)]
pub struct InstabilityWitness {
    pub lambda: Complex64,
    pub v: Vector,
}

impl InstabilityWitness {
    /// `‖Av − λv‖ / (‖A‖_F·‖v‖)`.
    pub fn relative_residual(&self, a: &Matrix) -> f64 {
        let r = a * &self.v - &self.v * self.lambda;
        r.norm() / (a.norm().max(f64::MIN_POSITIVE) * self.v.norm())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LyapunovCandidate {
    pub q: Matrix,
    /// Whitened membership margin `μ`.
    pub margin: f64,
    /// `‖Q‖` as an operator `X → X*`.
    pub q_norm: f64,
    /// Strong positivity constant of `Q`.
    pub theta: f64,
}

impl LyapunovCandidate {
    pub fn is_member(&self, tol: f64) -> bool {
        self.margin <= tol
    }
}

/// Computes the membership margin of `Q` for the generator `A`.
pub fn membership_margin(q: &Matrix, a: &Matrix, nm: &NormModel) -> Result<LyapunovCandidate> {
    let n = ensure_square(a)?;
    ensure_dim(n, ensure_square(q)?)?;
    ensure_dim(n, nm.dim())?;
    let q_norm = dual_map_norm(q, nm)?;
    let q = hermitian_part(q);
    let (min_eig, max_eig) = numkernel::hermitian_extremes(&q)?;
    let scale = min_eig.abs().max(max_eig.abs());
    if min_eig < -PSD_TOL * scale {
        return Err(Error::NotPositiveSemidefinite { min_eigenvalue: min_eig, scale });
    }
    let residual = a.adjoint() * &q + &q * a + nm.weight();
    let (_, margin) = numkernel::hermitian_extremes(&hermitian_part(&nm.whiten_form(&residual)?))?;
    let theta = strong_positivity_theta(&q, nm)?;
    Ok(LyapunovCandidate { q, margin, q_norm, theta })
}

/// Returns an eigenpair in the closed right half-plane when one exists.
///
/// The eigenvalue with the largest real part is used; `Re λ ≥ −1e-10` counts
/// as unstable so that round-off on the imaginary axis cannot hide it.
pub fn refute_stability(a: &Matrix) -> Result<Option<InstabilityWitness>> {
    let (z, t) = numkernel::schur(a)?;
    let n = t.nrows();
    let Some(k) = (0..n).fold(None, |best: Option<usize>, i| match best {
        Some(b) if t[(b, b)].re >= t[(i, i)].re => Some(b),
        _ => Some(i),
    }) else {
        return Ok(None);
    };
    let lambda = t[(k, k)];
    if lambda.re < -REFUTE_TOL {
        return Ok(None);
    }
    let v = numkernel::schur_eigenvector(&z, &t, k);
    Ok(Some(InstabilityWitness { lambda, v }))
}

fn require_stable(a: &Matrix) -> Result<()> {
    match refute_stability(a)? {
        Some(w) => Err(Error::Unstable(Box::new(w))),
        None => Ok(()),
    }
}

/// Solves `A*Q + QA = −RHS` for Hermitian `Q`.
///
/// Uses the Kronecker linearization up to [`KRONECKER_MAX_DIM`] and the
/// complex Schur route above it.
pub fn solve_algebraic(a: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    if a.nrows() <= KRONECKER_MAX_DIM {
        solve_algebraic_kronecker(a, rhs)
    } else {
        solve_algebraic_schur(a, rhs)
    }
}

fn check_lyapunov_inputs(a: &Matrix, rhs: &Matrix) -> Result<usize> {
    let n = ensure_square(a)?;
    ensure_dim(n, ensure_square(rhs)?)?;
    numkernel::ensure_finite(a)?;
    numkernel::ensure_finite(rhs)?;
    let defect = numkernel::hermitian_defect(rhs);
    if defect > crate::space::HERMITIAN_TOL {
        return Err(Error::NotHermitian { defect });
    }
    require_stable(a)?;
    Ok(n)
}

fn finish_lyapunov(a: &Matrix, rhs: &Matrix, q: Matrix) -> Result<Matrix> {
    let q = hermitian_part(&q);
    let residual = (a.adjoint() * &q + &q * a + rhs).norm();
    if residual > 1e-8 * rhs.norm() {
        return Err(numkernel::KernelError::InaccurateSolve { residual }.into());
    }
    Ok(q)
}

/// `(I ⊗ A* + Aᵀ ⊗ I)·vec(Q) = −vec(RHS)` with column-major `vec`.
pub fn solve_algebraic_kronecker(a: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let n = check_lyapunov_inputs(a, rhs)?;
    let nn = n * n;
    let a_adj = a.adjoint();
    let mut k = Matrix::zeros(nn, nn);
    for j in 0..n {
        for i in 0..n {
            let row = i + j * n;
            // (A*Q)_{ij} = Σ_p A*_{ip} Q_{pj}
            for p in 0..n {
                k[(row, p + j * n)] += a_adj[(i, p)];
            }
            // (QA)_{ij} = Σ_p Q_{ip} A_{pj}
            for p in 0..n {
                k[(row, i + p * n)] += a[(p, j)];
            }
        }
    }
    let b = Matrix::from_iterator(nn, 1, rhs.iter().map(|z| -z));
    let x = numkernel::solve_linear(&k, &b)?;
    let q = Matrix::from_iterator(n, n, x.iter().copied());
    finish_lyapunov(a, rhs, q)
}

/// Bartels–Stewart on the complex Schur form: with `A = Z T Z*`, solve the
/// triangular `T* Y + Y T = −Z* RHS Z` column by column, `Q = Z Y Z*`.
pub fn solve_algebraic_schur(a: &Matrix, rhs: &Matrix) -> Result<Matrix> {
    let n = check_lyapunov_inputs(a, rhs)?;
    let (z, t) = numkernel::schur(a)?;
    let c = z.adjoint() * rhs * &z;
    let mut y = Matrix::zeros(n, n);
    for j in 0..n {
        // (T* + t_jj I) y_j = −c_j − Σ_{k<j} t_kj y_k ; T* is lower triangular.
        let mut b: Vec<Complex64> = (0..n).map(|i| -c[(i, j)]).collect();
        for kk in 0..j {
            let tkj = t[(kk, j)];
            for (i, bi) in b.iter_mut().enumerate() {
                *bi -= tkj * y[(i, kk)];
            }
        }
        let tjj = t[(j, j)];
        for i in 0..n {
            let mut acc = b[i];
            for p in 0..i {
                acc -= t[(p, i)].conj() * y[(p, j)];
            }
            y[(i, j)] = acc / (t[(i, i)].conj() + tjj);
        }
    }
    let q = &z * y * z.adjoint();
    finish_lyapunov(a, rhs, q)
}

/// Options for [`construct_q0`]; `None` picks the certified defaults.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Q0Options {
    pub t_max: Option<f64>,
    pub panels: Option<usize>,
    /// Target for the truncation tail bound.
    pub tail_tol: f64,
}

impl Default for Q0Options {
    fn default() -> Self {
        Self { t_max: None, panels: None, tail_tol: 1e-12 }
    }
}

#[derive(Debug, Clone)]
pub struct Q0Result {
    pub candidate: LyapunovCandidate,
    pub t_max: f64,
    pub panels: usize,
    /// Bound on the dual norm of the neglected `∫_{T_max}^∞` part.
    pub tail_bound: f64,
}

/// `Q₀ = (1/θ)·∫₀^∞ T(t)*·P·T(t) dt` by panel quadrature.
///
/// Panels are grouped in fixed chunks, each chunk starting from a directly
/// computed `T(t)`; chunk sums are combined pairwise in chunk order, so the
/// result does not depend on the thread count.
pub fn construct_q0(a: &Matrix, riesz: &RieszMap, nm: &NormModel, opts: Q0Options) -> Result<Q0Result> {
    let n = ensure_square(a)?;
    ensure_dim(n, nm.dim())?;
    ensure_dim(n, riesz.p.nrows())?;
    if !(riesz.theta > 0.0) {
        return Err(Error::InvalidParameter(format!("Riesz constant theta must be positive, got {}", riesz.theta)));
    }
    require_stable(a)?;
    let (rate, overshoot) = semigroup::tail_decay(a, nm)?;
    let decay = -2.0 * rate;
    let p_norm = dual_map_norm(&riesz.p, nm)?;
    let tail_at = |t: f64| overshoot * overshoot * p_norm / (decay * riesz.theta) * (-decay * t).exp();
    let t_max = match opts.t_max {
        Some(t) if t > 0.0 => t,
        Some(t) => return Err(Error::InvalidParameter(format!("t_max must be positive, got {t}"))),
        None => {
            let lead = overshoot * overshoot * p_norm / (decay * riesz.theta);
            ((lead / opts.tail_tol).ln() / decay).max(1e-3)
        }
    };
    let panels = match opts.panels {
        Some(p) if p >= 1 => p,
        Some(_) => return Err(Error::InvalidParameter("panels must be positive".into())),
        None => PanelPlan::auto_panels(a, t_max)?,
    };
    let plan = PanelPlan::new(a, t_max, panels)?;
    let mut kernel = Matrix::zeros(n, n);
    for (op, &w) in plan.node_ops.iter().zip(&plan.weights) {
        kernel += op.adjoint() * &riesz.p * op * real(w);
    }

    let chunk_sums = par::try_map_range(plan.chunks(), |chunk| -> Result<Matrix> {
        let range = plan.chunk_range(chunk);
        let mut g = semigroup::evaluate(a, plan.h * range.start as f64)?;
        let mut acc = Matrix::zeros(n, n);
        for _ in range {
            acc += g.adjoint() * &kernel * &g;
            g = &plan.step * g;
        }
        Ok(acc)
    })?;
    let total = par::pairwise_reduce(&chunk_sums, &|x: &Matrix, y: &Matrix| x + y).unwrap_or_else(|| Matrix::zeros(n, n));
    let q0 = hermitian_part(&total.unscale(riesz.theta));
    let candidate = membership_margin(&q0, a, nm)?;
    Ok(Q0Result { candidate, t_max, panels, tail_bound: tail_at(t_max) })
}

/// Outcome of the grid check of an exponential decay envelope.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GridCheck {
    pub pass: bool,
    /// `max_t ‖T(t)‖ / (M·e^{−εt})`.
    pub worst_ratio: f64,
    pub worst_t: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct StabilityCertificate {
    pub candidate: LyapunovCandidate,
    pub epsilon: f64,
    pub overshoot: f64,
    pub grid_check: GridCheck,
}

#[derive(Debug, Clone, PartialEq)]
pub enum StabilityOutcome {
    /// `‖T(t)‖ ≤ M·e^{−εt}` with explicit constants.
    Envelope(StabilityCertificate),
    /// Member without strong positivity: the Datko bound gives stability but no constants.
    DatkoOnly(LyapunovCandidate),
}

/// Relative slack on the envelope check.
pub const ENVELOPE_SLACK: f64 = 1e-8;

/// Turns a member into decay constants `ε = 1/(2‖Q‖)`, `M = √(‖Q‖/θ)`.
///
/// From `d/dt⟨QT(t)x, T(t)x⟩ ≤ −‖T(t)x‖² ≤ −⟨QT(t)x, T(t)x⟩/‖Q‖` one gets
/// `θ‖T(t)x‖² ≤ e^{−t/‖Q‖}‖Q‖‖x‖²`. The envelope is then compared with the
/// computed `‖T(t)‖` on `t_grid`.
pub fn certificate(cand: &LyapunovCandidate, a: &Matrix, nm: &NormModel, t_grid: &[f64]) -> Result<StabilityOutcome> {
    if !cand.is_member(MEMBERSHIP_TOL) {
        return Err(Error::NotMember { margin: cand.margin, tol: MEMBERSHIP_TOL });
    }
    if !(cand.theta > 0.0) {
        return Ok(StabilityOutcome::DatkoOnly(cand.clone()));
    }
    let epsilon = 1.0 / (2.0 * cand.q_norm);
    let overshoot = (cand.q_norm / cand.theta).sqrt();
    let ratios = par::map(t_grid, |&t| -> Result<f64> {
        let norm = op_norm(&semigroup::evaluate(a, t)?, nm)?;
        Ok(norm / (overshoot * (-epsilon * t).exp()))
    });
    let mut worst = (f64::NEG_INFINITY, 0.0);
    for (&t, r) in t_grid.iter().zip(ratios) {
        let r = r?;
        if r > worst.0 {
            worst = (r, t);
        }
    }
    let grid_check = GridCheck { pass: worst.0 <= 1.0 + ENVELOPE_SLACK, worst_ratio: worst.0, worst_t: worst.1 };
    Ok(StabilityOutcome::Envelope(StabilityCertificate { candidate: cand.clone(), epsilon, overshoot, grid_check }))
}

/// `c·Q` for `c ≥ 1`.
///
/// The whitened residual becomes `c(Ŝ − I) + I`, so the new margin is
/// `c·μ − (c − 1)` exactly. Factors below one are rejected with the margin
/// the scaled operator would have.
pub fn scale_member(cand: &LyapunovCandidate, c: f64) -> Result<LyapunovCandidate> {
    if !c.is_finite() {
        return Err(Error::InvalidParameter(format!("scale factor must be finite, got {c}")));
    }
    let margin = c * cand.margin - (c - 1.0);
    if c < 1.0 {
        return Err(Error::ScaleBelowOne { factor: c, margin });
    }
    if !cand.is_member(MEMBERSHIP_TOL) {
        return Err(Error::NotMember { margin: cand.margin, tol: MEMBERSHIP_TOL });
    }
    Ok(LyapunovCandidate { q: &cand.q * real(c), margin, q_norm: cand.q_norm * c, theta: cand.theta * c })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClosednessProbe {
    /// `(n, margin of Q + W/n)`.
    pub margins: Vec<(f64, f64)>,
    pub all_members: bool,
    /// Every `|μₙ − μ|` within the Weyl bound `‖Â + Â*‖/n`.
    pub converges: bool,
    pub limit_member: bool,
}

impl ClosednessProbe {
    pub fn pass(&self) -> bool {
        self.all_members && self.converges && self.limit_member
    }
}

/// Margins along `Qₙ = Q + W/n`, which tends to `Q` in the dual norm.
pub fn closedness_probe(cand: &LyapunovCandidate, a: &Matrix, nm: &NormModel, ns: &[f64]) -> Result<ClosednessProbe> {
    let a_hat = nm.whiten_operator(a)?;
    let sym_norm = numkernel::spectral_norm(&(&a_hat + a_hat.adjoint()))?;
    let margins = par::map(ns, |&k| -> Result<(f64, f64)> {
        let qn = &cand.q + nm.weight() * real(1.0 / k);
        Ok((k, membership_margin(&qn, a, nm)?.margin))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    let all_members = margins.iter().all(|&(_, m)| m <= MEMBERSHIP_TOL);
    let converges = margins
        .iter()
        .all(|&(k, m)| (m - cand.margin).abs() <= sym_norm / k + 1e-12 * (1.0 + cand.margin.abs()));
    Ok(ClosednessProbe { margins, all_members, converges, limit_member: cand.is_member(MEMBERSHIP_TOL) })
}

/// The canonical member `Q` solving `A*Q + QA = −W` (margin 0).
pub fn canonical_member(a: &Matrix, nm: &NormModel) -> Result<LyapunovCandidate> {
    let q = solve_algebraic(a, nm.weight())?;
    membership_margin(&q, a, nm)
}
