//! Robustness of a Lyapunov member under bounded perturbations `A → A + B`.
//!
//! With `‖B‖ ≤ 1/(2α‖Q‖)`, `α > 1`, the member `Q` of `L_A` satisfies
//! `⟨Q(A+B)x, x⟩ + ⟨Qx, (A+B)x⟩ ≤ −((α−1)/α)‖x‖²`, and `(α/(α−1))·Q` is a
//! member of `L_{A+B}`. Both statements are checked.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{membership_margin, LyapunovCandidate};
use crate::models::SplitMix64;
use crate::numkernel::{self, ensure_dim, ensure_square, hermitian_part, real, Matrix};
use crate::par;
use crate::space::{op_norm, NormModel};
use crate::MEMBERSHIP_TOL;

/// Slack on `margin_after` beyond the candidate's own margin.
pub const PERTURB_TOL: f64 = 1e-9;
/// Relative slack on `‖B‖ ≤ radius`.
pub const RADIUS_SLACK: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationReport {
    pub alpha: f64,
    pub radius: f64,
    pub b_norm: f64,
    /// Whitened `λ_max` of `(A+B)*Q + Q(A+B)`.
    pub perturbed_margin: f64,
    /// `perturbed_margin + (α−1)/α`.
    pub margin_after: f64,
    /// Margin of `(α/(α−1))·Q` for `A + B`.
    pub rescaled_margin: f64,
    pub rescaled_member: bool,
    pub pass: bool,
}

fn require_member(cand: &LyapunovCandidate) -> Result<()> {
    if cand.is_member(MEMBERSHIP_TOL) {
        Ok(())
    } else {
        Err(Error::NotMember { margin: cand.margin, tol: MEMBERSHIP_TOL })
    }
}

/// `1/(2α‖Q‖)`.
pub fn admissible_radius(cand: &LyapunovCandidate, alpha: f64) -> Result<f64> {
    if !(alpha > 1.0) || !alpha.is_finite() {
        return Err(Error::AlphaNotAdmissible { alpha });
    }
    require_member(cand)?;
    Ok(1.0 / (2.0 * alpha * cand.q_norm))
}

/// Checks the perturbed Lyapunov inequality and the rescaled membership.
pub fn verify_perturbation(
    a: &Matrix,
    b: &Matrix,
    cand: &LyapunovCandidate,
    alpha: f64,
    nm: &NormModel,
) -> Result<PerturbationReport> {
    let radius = admissible_radius(cand, alpha)?;
    let n = ensure_square(a)?;
    ensure_dim(n, ensure_square(b)?)?;
    let b_norm = op_norm(b, nm)?;
    if b_norm > radius * (1.0 + RADIUS_SLACK) {
        return Err(Error::PerturbationTooLarge { b_norm, radius, excess: b_norm - radius });
    }
    let ab = a + b;
    let lhs = ab.adjoint() * &cand.q + &cand.q * &ab;
    let (_, perturbed_margin) = numkernel::hermitian_extremes(&hermitian_part(&nm.whiten_form(&lhs)?))?;
    let margin_after = perturbed_margin + (alpha - 1.0) / alpha;
    let rescaled = membership_margin(&(&cand.q * real(alpha / (alpha - 1.0))), &ab, nm)?;
    let rescaled_member = rescaled.is_member(MEMBERSHIP_TOL);
    let pass = margin_after <= PERTURB_TOL + cand.margin.max(0.0) && rescaled_member;
    Ok(PerturbationReport {
        alpha,
        radius,
        b_norm,
        perturbed_margin,
        margin_after,
        rescaled_margin: rescaled.margin,
        rescaled_member,
        pass,
    })
}

/// Largest admissible `α* = 1/(2‖B‖‖Q‖)` with its decay constant `(α*−1)/α*`.
/// `B = 0` gives `α* = ∞` and constant `1`.
pub fn max_alpha(b: &Matrix, cand: &LyapunovCandidate, nm: &NormModel) -> Result<(f64, f64)> {
    require_member(cand)?;
    let b_norm = op_norm(b, nm)?;
    let limit = 1.0 / (2.0 * cand.q_norm);
    if b_norm >= limit {
        return Err(Error::RadiusUnreachable { b_norm, limit });
    }
    if b_norm == 0.0 {
        return Ok((f64::INFINITY, 1.0));
    }
    let alpha = limit / b_norm;
    Ok((alpha, (alpha - 1.0) / alpha))
}

/// `k` seeded perturbations with W-norm exactly `radius`, alternating
/// Hermitian and general complex.
pub fn random_perturbations(n: usize, k: usize, radius: f64, nm: &NormModel, seed: u64) -> Result<Vec<Matrix>> {
    let mut rng = SplitMix64::new(seed);
    (0..k)
        .map(|i| {
            let g = rng.complex_matrix(n);
            let g = if i % 2 == 0 { hermitian_part(&g) } else { g };
            let norm = op_norm(&g, nm)?;
            Ok(g * real(radius / norm))
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSummary {
    pub alpha: f64,
    pub trials: usize,
    pub passed: usize,
    pub rescaled_members: usize,
    pub worst_margin_after: f64,
    pub worst_perturbed_margin: f64,
}

/// Runs `k` random trials at the admissible radius; perturbations are drawn
/// sequentially from `seed`, evaluations run in parallel.
pub fn random_trials(
    a: &Matrix,
    cand: &LyapunovCandidate,
    alpha: f64,
    nm: &NormModel,
    k: usize,
    seed: u64,
) -> Result<(TrialSummary, Vec<PerturbationReport>)> {
    let radius = admissible_radius(cand, alpha)?;
    let bs = random_perturbations(ensure_square(a)?, k, radius, nm, seed)?;
    let reports = par::map(&bs, |b| verify_perturbation(a, b, cand, alpha, nm)).into_iter().collect::<Result<Vec<_>>>()?;
    let summary = TrialSummary {
        alpha,
        trials: k,
        passed: reports.iter().filter(|r| r.pass).count(),
        rescaled_members: reports.iter().filter(|r| r.rescaled_member).count(),
        worst_margin_after: reports.iter().map(|r| r.margin_after).fold(f64::NEG_INFINITY, f64::max),
        worst_perturbed_margin: reports.iter().map(|r| r.perturbed_margin).fold(f64::NEG_INFINITY, f64::max),
    };
    Ok((summary, reports))
}
