//! The semigroup `T(t) = e^{tA}`: growth estimates, Datko integrals and
//! left-invertibility constants.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lyapunov::refute_stability;
use crate::numkernel::{self, expm, GaussLegendre, Matrix, Vector, DEFAULT_EXPM_TOL, QUAD_POINTS};
use crate::par;
use crate::space::{op_norm, vec_norm, NormModel};

/// Number of points in [`default_grid`].
pub const DEFAULT_GRID_POINTS: usize = 64;

/// Lower exponential envelope `m(t) ≥ c·e^{−αt}` fitted on a grid.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnvelopeFit {
    pub c: f64,
    pub alpha: f64,
    /// `(t, m(t))` samples.
    pub grid: Vec<(f64, f64)>,
}

impl EnvelopeFit {
    /// Largest relative shortfall of the samples below the envelope (≤ 0 when it holds).
    pub fn worst_violation(&self) -> f64 {
        self.grid
            .iter()
            .map(|&(t, m)| {
                let env = self.c * (-self.alpha * t).exp();
                (env - m) / env
            })
            .fold(f64::NEG_INFINITY, f64::max)
    }

    /// The bound `c²/(2α)` on strong positivity of every member, when `α > 0`.
    pub fn theta_lower_bound(&self) -> Option<f64> {
        (self.alpha > 0.0).then(|| self.c * self.c / (2.0 * self.alpha))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SpectralSummary {
    /// Spectral bound `s(A)`.
    pub s: f64,
    /// `min_t log‖T(t)‖ / t` over the grid.
    pub omega0_hat: f64,
    pub eigenvalues: Vec<Complex64>,
    /// `(t, ‖T(t)‖)` samples.
    pub samples: Vec<(f64, f64)>,
}

impl SpectralSummary {
    /// Decay rate used for tail truncation: midpoint of `s(A)` and the grid estimate.
    pub fn decay_rate(&self) -> f64 {
        0.5 * (self.s + self.omega0_hat)
    }

    /// Smallest `M ≥ 1` with `‖T(t)‖ ≤ M·e^{rate·t}` on the samples.
    pub fn overshoot(&self, rate: f64) -> f64 {
        self.samples.iter().map(|&(t, norm)| norm * (-rate * t).exp()).fold(1.0, f64::max)
    }
}

pub fn evaluate(a: &Matrix, t: f64) -> Result<Matrix> {
    Ok(expm(a, t, DEFAULT_EXPM_TOL)?)
}

/// `n` logarithmically spaced points on `[lo, hi]`.
pub fn log_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(lo > 0.0 && hi > lo && n >= 2);
    let (l0, l1) = (lo.ln(), hi.ln());
    (0..n)
        .map(|i| match i {
            0 => lo,
            _ if i + 1 == n => hi,
            _ => (l0 + (l1 - l0) * i as f64 / (n - 1) as f64).exp(),
        })
        .collect()
}

/// `n` equally spaced points on `[lo, hi]`, endpoints included.
pub fn linear_grid(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    assert!(n >= 2);
    (0..n)
        .map(|i| if i + 1 == n { hi } else { lo + (hi - lo) * i as f64 / (n - 1) as f64 })
        .collect()
}

/// 64 log-spaced points on `[0.01, 20/|s(A)|]` (`[0.01, 20]` when `s(A) ≥ 0`).
pub fn default_grid(a: &Matrix) -> Result<Vec<f64>> {
    let s = numkernel::spectral_abscissa(a)?;
    let hi = if s < 0.0 { (20.0 / -s).max(0.1) } else { 20.0 };
    Ok(log_grid(0.01, hi, DEFAULT_GRID_POINTS))
}

fn check_grid(grid: &[f64], min_len: usize, zero_ok: bool) -> Result<()> {
    if grid.len() < min_len {
        return Err(Error::InvalidParameter(format!("grid needs at least {min_len} points, got {}", grid.len())));
    }
    let first_ok = |t: f64| if zero_ok { t >= 0.0 } else { t > 0.0 };
    if !grid.iter().all(|t| t.is_finite()) || !first_ok(grid[0]) || grid.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::InvalidParameter("grid must be finite, positive and strictly increasing".into()));
    }
    Ok(())
}

/// Spectral bound and a grid estimate of the growth bound.
pub fn growth_bound_estimate(a: &Matrix, nm: &NormModel, t_grid: &[f64]) -> Result<SpectralSummary> {
    check_grid(t_grid, 8, false)?;
    let eigenvalues = numkernel::eigenvalues(a)?;
    let s = eigenvalues.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max);
    let norms = par::map(t_grid, |&t| -> Result<f64> { op_norm(&evaluate(a, t)?, nm) });
    let samples: Vec<(f64, f64)> =
        t_grid.iter().copied().zip(norms).map(|(t, n)| n.map(|n| (t, n))).collect::<Result<_>>()?;
    let omega0_hat = samples.iter().map(|&(t, n)| n.ln() / t).fold(f64::INFINITY, f64::min);
    Ok(SpectralSummary { s, omega0_hat, eigenvalues, samples })
}

fn require_stable(a: &Matrix) -> Result<()> {
    if let Some(w) = refute_stability(a)? {
        return Err(Error::Unstable(Box::new(w)));
    }
    Ok(())
}

/// Decay data `(ŝ, M̂)` for truncating `∫₀^∞` of a stable semigroup.
///
/// The default grid is stretched until the grid growth estimate is negative,
/// which for strongly nonnormal `A` can take longer than `20/|s(A)|`.
pub(crate) fn tail_decay(a: &Matrix, nm: &NormModel) -> Result<(f64, f64)> {
    let s = numkernel::spectral_abscissa(a)?;
    let mut hi = (20.0 / -s).max(0.1);
    for _ in 0..8 {
        let summary = growth_bound_estimate(a, nm, &log_grid(0.01, hi, DEFAULT_GRID_POINTS))?;
        if summary.omega0_hat < 0.0 {
            let rate = summary.decay_rate();
            return Ok((rate, summary.overshoot(rate)));
        }
        hi *= 4.0;
    }
    Err(Error::InvalidParameter("transient growth too large to resolve a decay rate".into()))
}

/// Equal-panel Gauss–Legendre plan for integrands built from `T(t)`.
///
/// Panel `k` covers `[kh, (k+1)h]`; `T(kh + τ_j) = T(τ_j)·T(h)^k` so only the
/// node operators and the step need exponentials.
pub(crate) struct PanelPlan {
    pub h: f64,
    pub panels: usize,
    pub step: Matrix,
    pub node_ops: Vec<Matrix>,
    pub weights: Vec<f64>,
}

/// Panels propagated from one directly computed exponential.
pub(crate) const CHUNK_PANELS: usize = 32;

impl PanelPlan {
    pub fn new(a: &Matrix, t_end: f64, panels: usize) -> Result<Self> {
        let h = t_end / panels as f64;
        let rule = GaussLegendre::new(QUAD_POINTS);
        let (taus, weights): (Vec<f64>, Vec<f64>) = rule.mapped(0.0, h).unzip();
        let node_ops = taus.iter().map(|&tau| evaluate(a, tau)).collect::<Result<Vec<_>>>()?;
        Ok(Self { h, panels, step: evaluate(a, h)?, node_ops, weights })
    }

    /// Panel count so that `h·‖A‖ ≤ 1`.
    pub fn auto_panels(a: &Matrix, t_end: f64) -> Result<usize> {
        let scale = numkernel::spectral_norm(a)?.max(1.0 / t_end);
        Ok(((t_end * scale).ceil() as usize).max(4))
    }

    pub fn chunks(&self) -> usize {
        self.panels.div_ceil(CHUNK_PANELS)
    }

    pub fn chunk_range(&self, chunk: usize) -> std::ops::Range<usize> {
        chunk * CHUNK_PANELS..((chunk + 1) * CHUNK_PANELS).min(self.panels)
    }
}

/// `∫₀^∞ ‖T(t)x‖² dt`, truncated at `T*` with tail at most `tail_tol·‖x‖²`.
pub fn datko_integral(a: &Matrix, nm: &NormModel, x: &Vector, tail_tol: f64) -> Result<f64> {
    Ok(datko_parts(a, nm, x, tail_tol)?.0)
}

/// `(value, T*, tail bound)`.
pub fn datko_parts(a: &Matrix, nm: &NormModel, x: &Vector, tail_tol: f64) -> Result<(f64, f64, f64)> {
    if !(tail_tol > 0.0 && tail_tol <= 1e-4) {
        return Err(Error::InvalidParameter(format!("tail_tol must lie in (0, 1e-4], got {tail_tol}")));
    }
    numkernel::ensure_dim(a.nrows(), x.len())?;
    require_stable(a)?;
    let x_norm_sq = vec_norm(x, nm)?.powi(2);
    if x_norm_sq == 0.0 {
        return Ok((0.0, 0.0, 0.0));
    }
    let (rate, overshoot) = tail_decay(a, nm)?;
    let decay = -2.0 * rate;
    let t_star = ((overshoot * overshoot / (decay * tail_tol)).ln() / decay).max(1e-3);
    let tail = overshoot * overshoot * (-decay * t_star).exp() / decay * x_norm_sq;
    let plan = PanelPlan::new(a, t_star, PanelPlan::auto_panels(a, t_star)?)?;
    let w = nm.weight();

    let per_chunk = par::try_map_range(plan.chunks(), |chunk| -> Result<Vec<f64>> {
        let range = plan.chunk_range(chunk);
        let mut v = evaluate(a, plan.h * range.start as f64)? * x;
        let mut out = Vec::with_capacity(range.len());
        for _ in range {
            let mut acc = 0.0;
            for (op, &wt) in plan.node_ops.iter().zip(&plan.weights) {
                let y = op * &v;
                acc += wt * y.dotc(&(w * &y)).re;
            }
            out.push(acc);
            v = &plan.step * v;
        }
        Ok(out)
    })?;
    let partials: Vec<f64> = per_chunk.into_iter().flatten().collect();
    Ok((par::pairwise_sum(&partials), t_star, tail))
}

/// `m(t) = inf_{‖x‖=1} ‖T(t)x‖`, computed as `1/‖T(−t)‖` to keep relative
/// accuracy when `m(t)` is tiny.
pub fn min_gain(a: &Matrix, nm: &NormModel, t: f64) -> Result<f64> {
    let inv = evaluate(&(-a), t)?;
    Ok(1.0 / op_norm(&inv, nm)?)
}

/// Conservative lower envelope of `m(t)` on the grid.
///
/// `α` is the steepest discrete decay rate between consecutive samples and
/// `c` the largest constant keeping every sample above `c·e^{−αt}`.
pub fn lower_envelope(a: &Matrix, nm: &NormModel, t_grid: &[f64]) -> Result<EnvelopeFit> {
    check_grid(t_grid, 2, false)?;
    let a_norm = op_norm(a, nm)?;
    let gains = par::map(t_grid, |&t| min_gain(a, nm, t));
    let mut grid = Vec::with_capacity(t_grid.len());
    for (&t, m) in t_grid.iter().zip(gains) {
        let m = m?;
        let floor = (-t * a_norm).exp();
        if m < floor * (1.0 - 1e-10) {
            return Err(Error::EnvelopeViolation { t, m, floor });
        }
        grid.push((t, m));
    }
    let alpha = grid
        .windows(2)
        .map(|w| -(w[1].1.ln() - w[0].1.ln()) / (w[1].0 - w[0].0))
        .fold(0.0, f64::max);
    let c = grid.iter().map(|&(t, m)| m * (alpha * t).exp()).fold(f64::INFINITY, f64::min);
    Ok(EnvelopeFit { c, alpha, grid })
}

/// `m₀` such that `‖T(t₀)x‖ ≥ m₀‖x‖` for all `x`.
pub fn left_invertibility_witness(a: &Matrix, nm: &NormModel, t0: f64) -> Result<f64> {
    if !(t0 > 0.0 && t0.is_finite()) {
        return Err(Error::InvalidParameter(format!("t0 must be positive, got {t0}")));
    }
    min_gain(a, nm, t0)
}

/// First grid sample with `m(t₀) ≥ e^{−rate·t₀}·(1 − rel_slack)`.
pub fn exponential_witness(fit: &EnvelopeFit, rate: f64, rel_slack: f64) -> Option<(f64, f64)> {
    fit.grid.iter().copied().find(|&(t, m)| m >= (-rate * t).exp() * (1.0 - rel_slack))
}
