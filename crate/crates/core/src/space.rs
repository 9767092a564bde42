//! Weighted inner-product norm models.
//!
//! A [`NormModel`] fixes an SPD weight `W` with `‖x‖² = x*Wx`. Operators
//! `X → X` are measured after the similarity `W^{1/2}·T·W^{-1/2}`; operators
//! `X → X*` (candidates `Q`, the Riesz map `P`) after the congruence
//! `W^{-1/2}·Q·W^{-1/2}`. Both are called whitening below.
//!
//! The pairing `⟨Qx, y⟩` is `y*·(Qx)`: linear in `x`, conjugate-linear in
//! `y`, so `⟨Qx, x⟩` is real for Hermitian `Q`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::numkernel::{self, ensure_dim, ensure_square, hermitian_defect, hermitian_eig, Matrix, Vector};

/// Relative Hermitian defect tolerated before symmetrization.
pub const HERMITIAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone)]
pub struct NormModel {
    w: Matrix,
    sqrt_w: Matrix,
    inv_sqrt_w: Matrix,
    euclidean: bool,
}

impl NormModel {
    /// Builds the model from an SPD weight, checking Hermitian symmetry and
    /// positive definiteness.
    pub fn new(w: Matrix) -> Result<Self> {
        ensure_square(&w)?;
        numkernel::ensure_finite(&w)?;
        let defect = hermitian_defect(&w);
        if defect > HERMITIAN_TOL {
            return Err(Error::NotHermitian { defect });
        }
        let w = numkernel::hermitian_part(&w);
        let (values, vectors) = hermitian_eig(&w)?;
        let min = values.first().copied().unwrap_or(0.0);
        if !(min > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: min });
        }
        let build = |f: &dyn Fn(f64) -> f64| {
            let mut scaled = vectors.clone();
            for (j, &lam) in values.iter().enumerate() {
                let s = f(lam);
                scaled.column_mut(j).scale_mut(s);
            }
            numkernel::hermitian_part(&(scaled * vectors.adjoint()))
        };
        let sqrt_w = build(&|l| l.sqrt());
        let inv_sqrt_w = build(&|l| 1.0 / l.sqrt());
        let euclidean = w == numkernel::identity(w.nrows());
        Ok(Self { w, sqrt_w, inv_sqrt_w, euclidean })
    }

    /// The Euclidean model `W = I`.
    pub fn identity(n: usize) -> Self {
        let eye = numkernel::identity(n);
        Self { w: eye.clone(), sqrt_w: eye.clone(), inv_sqrt_w: eye, euclidean: true }
    }

    pub fn dim(&self) -> usize {
        self.w.nrows()
    }

    pub fn weight(&self) -> &Matrix {
        &self.w
    }

    pub fn sqrt_weight(&self) -> &Matrix {
        &self.sqrt_w
    }

    pub fn inv_sqrt_weight(&self) -> &Matrix {
        &self.inv_sqrt_w
    }

    pub fn is_euclidean(&self) -> bool {
        self.euclidean
    }

    /// `W^{1/2}·T·W^{-1/2}`: the Euclidean representative of an operator on X.
    pub fn whiten_operator(&self, t: &Matrix) -> Result<Matrix> {
        self.check_square(t)?;
        if self.euclidean {
            return Ok(t.clone());
        }
        Ok(&self.sqrt_w * t * &self.inv_sqrt_w)
    }

    /// `W^{-1/2}·Q·W^{-1/2}`: the Euclidean representative of a form `X → X*`.
    pub fn whiten_form(&self, q: &Matrix) -> Result<Matrix> {
        self.check_square(q)?;
        if self.euclidean {
            return Ok(q.clone());
        }
        Ok(&self.inv_sqrt_w * q * &self.inv_sqrt_w)
    }

    /// Inverse of [`whiten_form`](Self::whiten_form).
    pub fn unwhiten_form(&self, q_hat: &Matrix) -> Result<Matrix> {
        self.check_square(q_hat)?;
        if self.euclidean {
            return Ok(q_hat.clone());
        }
        Ok(&self.sqrt_w * q_hat * &self.sqrt_w)
    }

    fn check_square(&self, m: &Matrix) -> Result<()> {
        let n = ensure_square(m)?;
        ensure_dim(self.dim(), n)?;
        Ok(())
    }
}

/// A strongly positive `P: X → X*` with its constant `θ`.
#[derive(Debug, Clone)]
pub struct RieszMap {
    pub p: Matrix,
    pub theta: f64,
}

impl RieszMap {
    pub fn new(p: Matrix, nm: &NormModel) -> Result<Self> {
        let theta = strong_positivity_theta(&p, nm)?;
        if !(theta > 0.0) {
            return Err(Error::NotPositiveDefinite { min_eigenvalue: theta });
        }
        Ok(Self { p: numkernel::hermitian_part(&p), theta })
    }

    /// `P = W`, `θ = 1`.
    pub fn canonical(nm: &NormModel) -> Self {
        Self { p: nm.weight().clone(), theta: 1.0 }
    }
}

pub fn vec_norm(x: &Vector, nm: &NormModel) -> Result<f64> {
    ensure_dim(nm.dim(), x.len())?;
    let v = x.dotc(&(nm.weight() * x)).re;
    Ok(v.max(0.0).sqrt())
}

/// `⟨Qx, y⟩ = y*·(Qx)`.
pub fn pairing(q: &Matrix, x: &Vector, y: &Vector) -> Result<Complex64> {
    let n = ensure_square(q)?;
    ensure_dim(n, x.len())?;
    ensure_dim(n, y.len())?;
    Ok(y.dotc(&(q * x)))
}

/// Operator norm on X in the W-norm.
pub fn op_norm(t: &Matrix, nm: &NormModel) -> Result<f64> {
    Ok(numkernel::spectral_norm(&nm.whiten_operator(t)?)?)
}

fn whitened_hermitian(q: &Matrix, nm: &NormModel) -> Result<Matrix> {
    let defect = hermitian_defect(q);
    if defect > HERMITIAN_TOL {
        return Err(Error::NotHermitian { defect });
    }
    Ok(numkernel::hermitian_part(&nm.whiten_form(q)?))
}

/// Norm of `Q` as an operator `X → X*`.
pub fn dual_map_norm(q: &Matrix, nm: &NormModel) -> Result<f64> {
    let (lo, hi) = numkernel::hermitian_extremes(&whitened_hermitian(q, nm)?)?;
    Ok(lo.abs().max(hi.abs()))
}

/// Largest `θ` with `⟨Qx, x⟩ ≥ θ‖x‖²`; positive iff `Q` is strongly positive.
pub fn strong_positivity_theta(q: &Matrix, nm: &NormModel) -> Result<f64> {
    Ok(numkernel::hermitian_extremes(&whitened_hermitian(q, nm)?)?.0)
}
