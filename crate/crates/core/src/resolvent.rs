//! Resolvent norms and grid verification of the resolvent bounds implied by
//! a Lyapunov member `Q`:
//!
//! * right half-plane: `‖R(λ, A)‖ ≤ 2‖Q‖` for `Re λ ≥ 0`;
//! * left strip: `‖R(λ, A)‖ ≤ 2‖Q‖ / (1 + 2‖Q‖ Re λ)` for
//!   `−1/(2‖Q‖) < Re λ < 0`, which equals `2‖Q‖ / (1 − 2δ₀‖Q‖)` on the line
//!   `Re λ = −δ₀`.
//!
//! Both rest on the pointwise inequality obtained from the Lyapunov
//! inequality with `x = R(λ)y`:
//! `(1 + 2‖Q‖ min(Re λ, 0))·‖x‖² ≤ 2 Re⟨Qx, y⟩ ≤ 2‖Q‖‖x‖‖y‖`,
//! which the scans also check on sampled `y`.

use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::{refute_stability, LyapunovCandidate};
use crate::models::SplitMix64;
use crate::numkernel::{self, c64, identity, KernelError, Matrix, Vector};
use crate::par;
use crate::semigroup::{linear_grid, log_grid};
use crate::space::{op_norm, vec_norm, NormModel};
use crate::MEMBERSHIP_TOL;

/// Relative slack for the bound comparisons.
pub const VERIFY_TOL: f64 = 1e-9;
/// Tolerance on `‖(λI − A)R − I‖_F`.
pub const IDENTITY_RESIDUAL_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScanReport {
    pub grid: Vec<Complex64>,
    pub norms: Vec<f64>,
    /// Bound in force at each grid point.
    pub bounds: Vec<f64>,
    /// Headline bound: `2 min‖Q‖` on the right, the endpoint bound on the strip.
    pub bound: f64,
    pub worst_ratio: f64,
    pub argmax: Complex64,
    pub pass: bool,
    pub max_identity_residual: f64,
    /// Worst relative violation of the pointwise proof inequality (≤ 0 is fine).
    pub proof_worst_slack: f64,
    /// Analytic bound `1/(|λ| − ‖A‖)` beyond the sampled region.
    pub tail_bound: f64,
    /// Strip scans only: worst ratio on the line `Re λ = −δ₀`.
    pub line_worst_ratio: Option<f64>,
}

impl ScanReport {
    /// CSV with columns `re_lambda, im_lambda, resolvent_norm, bound, ratio`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "re_lambda,im_lambda,resolvent_norm,bound,ratio")?;
        for ((z, &n), &b) in self.grid.iter().zip(&self.norms).zip(&self.bounds) {
            writeln!(out, "{},{},{},{},{}", z.re, z.im, n, b, n / b)?;
        }
        Ok(())
    }
}

/// `(λI − A)`, mapping a singular solve to [`Error::InSpectrum`].
fn resolvent_matrix(a: &Matrix, lambda: Complex64) -> Result<Matrix> {
    let n = numkernel::ensure_square(a)?;
    let shifted = identity(n) * lambda - a;
    match numkernel::solve_linear(&shifted, &identity(n)) {
        Ok(r) => Ok(r),
        Err(KernelError::Singular { .. }) | Err(KernelError::InaccurateSolve { .. }) => {
            let nearest = numkernel::eigenvalues(a)?
                .into_iter()
                .min_by(|x, y| (x - lambda).norm().total_cmp(&(y - lambda).norm()))
                .unwrap_or(lambda);
            Err(Error::InSpectrum { lambda, nearest })
        }
        Err(e) => Err(e.into()),
    }
}

/// `‖(λI − A)⁻¹‖` in the W-norm.
pub fn resolvent_norm(a: &Matrix, lambda: Complex64, nm: &NormModel) -> Result<f64> {
    op_norm(&resolvent_matrix(a, lambda)?, nm)
}

struct PointEval {
    norm: f64,
    residual: f64,
    slack: f64,
}

/// Evaluates one grid point, including the pointwise proof inequality on the
/// worst-case direction and two seeded random directions.
fn eval_point(a: &Matrix, nm: &NormModel, lambda: Complex64, cand: &LyapunovCandidate, seed: u64) -> Result<PointEval> {
    let n = a.nrows();
    let r = resolvent_matrix(a, lambda)?;
    let residual = ((identity(n) * lambda - a) * &r - identity(n)).norm();
    let r_hat = nm.whiten_operator(&r)?;
    let norm = numkernel::spectral_norm(&r_hat)?;

    let factor = 1.0 + 2.0 * cand.q_norm * lambda.re.min(0.0);
    let mut ys: Vec<Vector> = vec![nm.inv_sqrt_weight() * numkernel::top_right_singular_vector(&r_hat)?];
    let mut rng = SplitMix64::new(seed);
    ys.push(rng.complex_vector(n));
    ys.push(rng.complex_vector(n));
    let mut slack = f64::NEG_INFINITY;
    for y in &ys {
        let x = &r * y;
        let (xn, yn) = (vec_norm(&x, nm)?, vec_norm(y, nm)?);
        let mid = 2.0 * y.dotc(&(&cand.q * &x)).re;
        let rhs = 2.0 * cand.q_norm * xn * yn;
        let scale = rhs.max(f64::MIN_POSITIVE);
        let lower = factor * xn * xn - mid;
        let upper = mid - rhs;
        // A member with a small positive margin μ relaxes the left side by μ‖x‖².
        let allowance = cand.margin.max(0.0) * xn * xn;
        slack = slack.max((lower - allowance) / scale).max(upper / scale);
    }
    Ok(PointEval { norm, residual, slack })
}

fn point_seed(i: usize) -> u64 {
    0x5EED_0000_0000_0000 ^ i as u64
}

/// Reduces evaluated points into a report; the arg-max ties go to the
/// lexicographically smallest `(Re, Im)`.
fn assemble(grid: Vec<Complex64>, evals: Vec<PointEval>, bounds: Vec<f64>, bound: f64, tail_bound: f64) -> ScanReport {
    let mut worst_ratio = f64::NEG_INFINITY;
    let mut argmax = c64(f64::NAN, f64::NAN);
    for ((z, e), b) in grid.iter().zip(&evals).zip(&bounds) {
        let ratio = e.norm / b;
        let lex_smaller = (z.re, z.im) < (argmax.re, argmax.im) || argmax.re.is_nan();
        if ratio > worst_ratio || (ratio == worst_ratio && lex_smaller) {
            worst_ratio = ratio;
            argmax = *z;
        }
    }
    let max_identity_residual = evals.iter().map(|e| e.residual).fold(0.0, f64::max);
    let proof_worst_slack = evals.iter().map(|e| e.slack).fold(f64::NEG_INFINITY, f64::max);
    let norms = evals.iter().map(|e| e.norm).collect();
    let pass = worst_ratio <= 1.0 + VERIFY_TOL
        && max_identity_residual <= IDENTITY_RESIDUAL_TOL
        && proof_worst_slack <= VERIFY_TOL
        && tail_bound <= bound * (1.0 + VERIFY_TOL);
    ScanReport {
        grid,
        norms,
        bounds,
        bound,
        worst_ratio,
        argmax,
        pass,
        max_identity_residual,
        proof_worst_slack,
        tail_bound,
        line_worst_ratio: None,
    }
}

fn evaluate_grid(a: &Matrix, nm: &NormModel, grid: &[Complex64], cand: &LyapunovCandidate) -> Result<Vec<PointEval>> {
    par::try_map_range(grid.len(), |i| eval_point(a, nm, grid[i], cand, point_seed(i)))
}

/// `0` plus `k` log-spaced magnitudes on `[ω_max·10⁻⁶, ω_max]` on each side.
pub fn axis_frequencies(omega_max: f64, n: usize) -> Vec<f64> {
    let k = (n.max(3) - 1) / 2;
    let positive = if k >= 2 { log_grid(omega_max * 1e-6, omega_max, k) } else { vec![omega_max] };
    let mut out: Vec<f64> = positive.iter().rev().map(|w| -w).collect();
    out.push(0.0);
    out.extend(positive);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RightScanOptions {
    /// Defaults to `10·‖A‖`.
    pub omega_max: Option<f64>,
    pub n_axis: usize,
    pub n_interior: usize,
}

impl Default for RightScanOptions {
    fn default() -> Self {
        Self { omega_max: None, n_axis: 401, n_interior: 64 }
    }
}

fn check_members(members: &[LyapunovCandidate]) -> Result<&LyapunovCandidate> {
    for m in members {
        if !m.is_member(MEMBERSHIP_TOL) {
            return Err(Error::NotMember { margin: m.margin, tol: MEMBERSHIP_TOL });
        }
    }
    members
        .iter()
        .min_by(|x, y| x.q_norm.total_cmp(&y.q_norm))
        .ok_or_else(|| Error::InvalidParameter("at least one member is required".into()))
}

fn require_stable(a: &Matrix) -> Result<()> {
    match refute_stability(a)? {
        Some(w) => Err(Error::Unstable(Box::new(w))),
        None => Ok(()),
    }
}

/// Checks `sup_{Re λ ≥ 0} ‖R(λ, A)‖ ≤ 2 min‖Q‖` on the imaginary axis and a
/// coarse interior grid; beyond `ω_max` the analytic bound is used.
pub fn verify_bound_right(
    a: &Matrix,
    nm: &NormModel,
    members: &[LyapunovCandidate],
    opts: RightScanOptions,
) -> Result<ScanReport> {
    let best = check_members(members)?;
    require_stable(a)?;
    let a_norm = op_norm(a, nm)?;
    let omega_max = opts.omega_max.unwrap_or(10.0 * a_norm).max(f64::MIN_POSITIVE);
    let bound = 2.0 * best.q_norm;

    let mut grid: Vec<Complex64> = axis_frequencies(omega_max, opts.n_axis).into_iter().map(|w| c64(0.0, w)).collect();
    if opts.n_interior > 0 {
        let k_re = (opts.n_interior as f64).sqrt().ceil() as usize;
        let k_im = opts.n_interior.div_ceil(k_re);
        let res = if k_re >= 2 { log_grid(2.0 * omega_max * 1e-4, 2.0 * omega_max, k_re) } else { vec![omega_max] };
        let ims = if k_im >= 2 { linear_grid(-omega_max, omega_max, k_im) } else { vec![0.0] };
        let interior = res.iter().flat_map(|&re| ims.iter().map(move |&im| c64(re, im)));
        grid.extend(interior.take(opts.n_interior));
    }
    let evals = evaluate_grid(a, nm, &grid, best)?;
    let tail_bound = if omega_max > a_norm { 1.0 / (omega_max - a_norm) } else { f64::INFINITY };
    let bounds = vec![bound; grid.len()];
    Ok(assemble(grid, evals, bounds, bound, tail_bound))
}

/// Left edge of the strip where the pointwise bound is available.
pub fn strip_left_edge(a: &Matrix, cand: &LyapunovCandidate) -> Result<f64> {
    Ok(numkernel::spectral_abscissa(a)?.max(-1.0 / (2.0 * cand.q_norm)))
}

/// Largest admissible `δ₀` for a member, `(1 − 10⁻⁶)/(2‖Q‖)`.
pub fn max_delta0(cand: &LyapunovCandidate) -> f64 {
    (1.0 - 1e-6) / (2.0 * cand.q_norm)
}

/// Checks the pointwise strip bound on `Re λ ∈ (edge, −δ₀]`, `|Im λ| ≤ 10‖A‖`,
/// and reports the endpoint bound `2‖Q‖/(1 − 2δ₀‖Q‖)` for the line `Re λ = −δ₀`.
pub fn verify_bound_left_strip(
    a: &Matrix,
    nm: &NormModel,
    cand: &LyapunovCandidate,
    delta0: f64,
    n_grid: usize,
) -> Result<ScanReport> {
    check_members(std::slice::from_ref(cand))?;
    let q = cand.q_norm;
    if !(delta0 > 0.0) || !(2.0 * delta0 * q < 1.0) {
        return Err(Error::StripPrecondition { delta0, q_norm: q, max_delta0: max_delta0(cand) });
    }
    let edge = strip_left_edge(a, cand)?;
    if !(-delta0 > edge) {
        return Err(Error::InvalidParameter(format!("strip ({edge}, {}] is empty", -delta0)));
    }
    let a_norm = op_norm(a, nm)?;
    let im_max = (10.0 * a_norm).max(f64::MIN_POSITIVE);
    let k_re = ((n_grid.max(4) as f64).sqrt().ceil() as usize).max(2);
    let mut k_im = n_grid.max(4).div_ceil(k_re).max(3);
    if k_im.is_multiple_of(2) {
        k_im += 1;
    }
    let width = -delta0 - edge;
    let res: Vec<f64> =
        (1..=k_re).map(|i| if i == k_re { -delta0 } else { edge + width * i as f64 / k_re as f64 }).collect();
    let mut ims = linear_grid(-im_max, im_max, k_im);
    ims[k_im / 2] = 0.0;
    let grid: Vec<Complex64> = res.iter().flat_map(|&re| ims.iter().map(move |&im| c64(re, im))).collect();
    let bounds: Vec<f64> = grid.iter().map(|z| 2.0 * q / (1.0 + 2.0 * q * z.re)).collect();
    let endpoint = 2.0 * q / (1.0 - 2.0 * delta0 * q);

    let evals = evaluate_grid(a, nm, &grid, cand)?;
    let line_worst = grid
        .iter()
        .zip(&evals)
        .filter(|(z, _)| z.re == -delta0)
        .map(|(_, e)| e.norm / endpoint)
        .fold(f64::NEG_INFINITY, f64::max);
    // Beyond |λ| = 10‖A‖: ‖R‖ ≤ 1/(|λ| − ‖A‖) ≤ 1/(9‖A‖) ≤ 2‖Q‖ since 2‖Q‖‖A‖ ≥ 1 for members.
    let tail_bound = 1.0 / (im_max - a_norm).max(f64::MIN_POSITIVE);
    let mut report = assemble(grid, evals, bounds, endpoint, tail_bound);
    report.pass = report.pass && line_worst <= 1.0 + VERIFY_TOL;
    report.line_worst_ratio = Some(line_worst);
    Ok(report)
}

/// `sup_ω ‖R(re + iω)‖` over `|ω| ≤ ω_max`: grid search, golden-section
/// polish around the best sample, and grid doubling until the sup moves by
/// less than `10⁻⁶` relative. Returns `(sup, ω at sup)`.
pub fn line_sup(a: &Matrix, nm: &NormModel, re: f64, omega_max: f64, n: usize) -> Result<(f64, f64)> {
    let eval = |w: f64| resolvent_norm(a, c64(re, w), nm);
    let mut n = n.max(9);
    let mut prev: Option<(f64, f64)> = None;
    for _ in 0..10 {
        let mut omegas = linear_grid(-omega_max, omega_max, n | 1);
        omegas.extend(axis_frequencies(omega_max, 25));
        omegas.sort_by(f64::total_cmp);
        omegas.dedup();
        let values = par::map(&omegas, |&w| eval(w)).into_iter().collect::<Result<Vec<_>>>()?;
        let (k, &grid_best) = values.iter().enumerate().fold((0, &f64::NEG_INFINITY), |acc, (i, v)| {
            if *v > *acc.1 {
                (i, v)
            } else {
                acc
            }
        });
        let mut best = (grid_best, omegas[k]);
        let (mut lo, mut hi) = (omegas[k.saturating_sub(1)], omegas[(k + 1).min(omegas.len() - 1)]);
        let phi = 0.5 * (5f64.sqrt() - 1.0);
        let (mut x1, mut x2) = (hi - phi * (hi - lo), lo + phi * (hi - lo));
        let (mut f1, mut f2) = (eval(x1)?, eval(x2)?);
        for _ in 0..60 {
            if hi - lo <= 1e-12 * omega_max {
                break;
            }
            if f1 > f2 {
                hi = x2;
                (x2, f2) = (x1, f1);
                x1 = hi - phi * (hi - lo);
                f1 = eval(x1)?;
            } else {
                lo = x1;
                (x1, f1) = (x2, f2);
                x2 = lo + phi * (hi - lo);
                f2 = eval(x2)?;
            }
        }
        for (f, x) in [(f1, x1), (f2, x2)] {
            if f > best.0 {
                best = (f, x);
            }
        }
        if let Some(p) = prev {
            if (best.0 - p.0).abs() <= 1e-6 * best.0 {
                return Ok(if best.0 >= p.0 { best } else { p });
            }
        }
        prev = Some(if prev.is_some_and(|p| p.0 > best.0) { prev.unwrap() } else { best });
        n *= 2;
    }
    Ok(prev.expect("at least one refinement round"))
}

/// Vertical-line resolvent sups for each abscissa `a > s(A)`.
pub fn abscissa_profile(
    a: &Matrix,
    nm: &NormModel,
    a_values: &[f64],
    omega_max: f64,
    n: usize,
) -> Result<Vec<(f64, f64)>> {
    let s = numkernel::spectral_abscissa(a)?;
    if let Some(&bad) = a_values.iter().find(|&&x| !(x > s)) {
        return Err(Error::InvalidParameter(format!("abscissa {bad} does not exceed s(A) = {s}")));
    }
    a_values.iter().map(|&re| Ok((re, line_sup(a, nm, re, omega_max, n)?.0))).collect()
}
