//! Dense complex linear algebra used by every other module.
//!
//! Everything works on [`Matrix`], a dynamically sized complex matrix. Real
//! inputs are promoted on construction; resolvents at `λ = iω` need complex
//! arithmetic anyway.
//!
//! Eigen and singular value routines are thin wrappers over `nalgebra`. The
//! matrix exponential and the quadrature rules are implemented here.

use nalgebra::linalg::{Schur, SymmetricEigen, LU, SVD};
use nalgebra::{DMatrix, DVector};
pub use num_complex::Complex64;
use thiserror::Error;

pub type Matrix = DMatrix<Complex64>;
pub type Vector = DVector<Complex64>;

/// Default relative tolerance for [`expm`].
pub const DEFAULT_EXPM_TOL: f64 = 1e-13;

const MAX_EIG_ITERS: usize = 100_000;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum KernelError {
    #[error("expected a square matrix, got {rows}x{cols}")]
    NonSquare { rows: usize, cols: usize },
    #[error("non-finite entry at ({row}, {col})")]
    NonFinite { row: usize, col: usize },
    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimensionMismatch { expected: usize, found: usize },
    #[error("matrix is singular to working precision (pivot ratio {pivot_ratio:e})")]
    Singular { pivot_ratio: f64 },
    #[error("linear solve residual {residual:e} exceeds tolerance")]
    InaccurateSolve { residual: f64 },
    #[error("{0} did not converge")]
    NoConvergence(&'static str),
    #[error("quadrature sample at t = {t} is not finite")]
    NonFiniteSample { t: f64 },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
}

pub type Result<T> = std::result::Result<T, KernelError>;

#[inline]
pub fn c64(re: f64, im: f64) -> Complex64 {
    Complex64::new(re, im)
}

#[inline]
pub fn real(re: f64) -> Complex64 {
    Complex64::new(re, 0.0)
}

pub fn identity(n: usize) -> Matrix {
    Matrix::identity(n, n)
}

/// Builds a complex matrix from real row-major data.
pub fn from_real_rows(rows: usize, cols: usize, data: &[f64]) -> Matrix {
    assert_eq!(data.len(), rows * cols, "data length must be rows*cols");
    Matrix::from_row_iterator(rows, cols, data.iter().map(|&x| real(x)))
}

pub fn real_diag(diag: &[f64]) -> Matrix {
    let n = diag.len();
    let mut m = Matrix::zeros(n, n);
    for (i, &d) in diag.iter().enumerate() {
        m[(i, i)] = real(d);
    }
    m
}

pub fn real_vector(data: &[f64]) -> Vector {
    Vector::from_iterator(data.len(), data.iter().map(|&x| real(x)))
}

pub fn ensure_square(m: &Matrix) -> Result<usize> {
    if m.nrows() != m.ncols() {
        return Err(KernelError::NonSquare { rows: m.nrows(), cols: m.ncols() });
    }
    Ok(m.nrows())
}

pub fn ensure_finite(m: &Matrix) -> Result<()> {
    for j in 0..m.ncols() {
        for i in 0..m.nrows() {
            let z = m[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return Err(KernelError::NonFinite { row: i, col: j });
            }
        }
    }
    Ok(())
}

pub fn ensure_dim(expected: usize, found: usize) -> Result<()> {
    if expected != found {
        return Err(KernelError::DimensionMismatch { expected, found });
    }
    Ok(())
}

/// `(H + H*) / 2`.
pub fn hermitian_part(h: &Matrix) -> Matrix {
    (h + h.adjoint()).unscale(2.0)
}

/// Relative distance of `h` from its Hermitian part, `‖H − H*‖_F / (2‖H‖_F)`.
pub fn hermitian_defect(h: &Matrix) -> f64 {
    let scale = h.norm();
    if scale == 0.0 {
        return 0.0;
    }
    (h - h.adjoint()).norm() / (2.0 * scale)
}

/// Matrix exponential `e^{tA}` by scaling and squaring with a truncated
/// Taylor kernel.
///
/// The squaring count makes the scaled Frobenius norm at most 0.5; the
/// Taylor degree is the smallest whose truncation error at that radius is
/// below `tol / 16`.
pub fn expm(a: &Matrix, t: f64, tol: f64) -> Result<Matrix> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    if !(t >= 0.0 && t.is_finite()) {
        return Err(KernelError::InvalidArgument(format!("expm time must be finite and >= 0, got {t}")));
    }
    if !(tol > 0.0 && tol <= 1e-3) {
        return Err(KernelError::InvalidArgument(format!("expm tolerance must lie in (0, 1e-3], got {tol}")));
    }
    if t == 0.0 {
        return Ok(identity(n));
    }
    let x = a * real(t);
    let norm = x.norm();
    let squarings = if norm > 0.5 { (norm / 0.5).log2().ceil() as i32 } else { 0 };
    let y = x.unscale(2f64.powi(squarings));
    let degree = taylor_degree(tol);

    let eye = identity(n);
    let mut e = eye.clone();
    for k in (1..=degree).rev() {
        e = &eye + (&y * &e).unscale(k as f64);
    }
    for _ in 0..squarings {
        e = &e * &e;
    }
    Ok(e)
}

fn taylor_degree(tol: f64) -> usize {
    let target = tol / 16.0;
    let mut term = 0.5; // 0.5^m / (m+1)! at m = 1
    let mut m = 1;
    while m < 30 {
        let bound = term / (m as f64 + 1.0);
        if bound <= target {
            return m;
        }
        m += 1;
        term *= 0.5 / m as f64;
    }
    30
}

/// Eigen-decomposition of a Hermitian matrix, eigenvalues ascending.
///
/// The input is symmetrized first; the returned eigenvector matrix is
/// unitary and its columns follow the eigenvalue order.
pub fn hermitian_eig(h: &Matrix) -> Result<(Vec<f64>, Matrix)> {
    let n = ensure_square(h)?;
    ensure_finite(h)?;
    if n == 0 {
        return Ok((Vec::new(), Matrix::zeros(0, 0)));
    }
    let sym = hermitian_part(h);
    let eig = SymmetricEigen::try_new(sym, f64::EPSILON, MAX_EIG_ITERS)
        .ok_or(KernelError::NoConvergence("Hermitian eigensolver"))?;
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[i].total_cmp(&eig.eigenvalues[j]));
    let values = order.iter().map(|&i| eig.eigenvalues[i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        vectors.set_column(dst, &eig.eigenvectors.column(src));
    }
    Ok((values, vectors))
}

/// Smallest and largest eigenvalue of a Hermitian matrix.
pub fn hermitian_extremes(h: &Matrix) -> Result<(f64, f64)> {
    let (values, _) = hermitian_eig(h)?;
    match (values.first(), values.last()) {
        (Some(&lo), Some(&hi)) => Ok((lo, hi)),
        _ => Err(KernelError::InvalidArgument("empty matrix".into())),
    }
}

/// Largest and smallest singular values `(σ_max, σ_min)`.
pub fn singular_extremes(m: &Matrix) -> Result<(f64, f64)> {
    ensure_square(m)?;
    ensure_finite(m)?;
    if m.nrows() == 0 {
        return Err(KernelError::InvalidArgument("empty matrix".into()));
    }
    let svd = SVD::try_new(m.clone(), false, false, f64::EPSILON, MAX_EIG_ITERS)
        .ok_or(KernelError::NoConvergence("SVD"))?;
    let sv = &svd.singular_values;
    let max = sv.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let min = sv.iter().copied().fold(f64::INFINITY, f64::min);
    Ok((max, min))
}

/// Euclidean spectral norm.
pub fn spectral_norm(m: &Matrix) -> Result<f64> {
    Ok(singular_extremes(m)?.0)
}

/// Right singular vector for `σ_max`, i.e. the input direction of maximal gain.
pub fn top_right_singular_vector(m: &Matrix) -> Result<Vector> {
    ensure_square(m)?;
    let svd = SVD::try_new(m.clone(), false, true, f64::EPSILON, MAX_EIG_ITERS)
        .ok_or(KernelError::NoConvergence("SVD"))?;
    let v_t = svd.v_t.ok_or(KernelError::NoConvergence("SVD"))?;
    let (best, _) = svd
        .singular_values
        .iter()
        .enumerate()
        .fold((0, f64::NEG_INFINITY), |acc, (i, &s)| if s > acc.1 { (i, s) } else { acc });
    Ok(v_t.row(best).adjoint())
}

/// Solves `M X = B` by LU with partial pivoting.
///
/// A pivot ratio `min|u_ii| / max|u_ii|` below `n·ε` is reported as
/// [`KernelError::Singular`].
pub fn solve_linear(m: &Matrix, b: &Matrix) -> Result<Matrix> {
    let n = ensure_square(m)?;
    ensure_dim(n, b.nrows())?;
    ensure_finite(m)?;
    ensure_finite(b)?;
    let lu = LU::new(m.clone());
    let u = lu.u();
    let (mut lo, mut hi) = (f64::INFINITY, 0.0f64);
    for i in 0..n {
        let p = u[(i, i)].norm();
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let pivot_ratio = if hi > 0.0 { lo / hi } else { 0.0 };
    if !(pivot_ratio > n as f64 * f64::EPSILON) {
        return Err(KernelError::Singular { pivot_ratio });
    }
    let x = lu.solve(b).ok_or(KernelError::Singular { pivot_ratio })?;
    let residual = (m * &x - b).norm();
    if residual > 1e-10 * m.norm() * x.norm() + f64::MIN_POSITIVE {
        return Err(KernelError::InaccurateSolve { residual });
    }
    Ok(x)
}

fn is_triangular(a: &Matrix, upper: bool) -> bool {
    let n = a.nrows();
    (0..n).all(|i| (0..n).all(|j| if upper { i <= j } else { i >= j } || a[(i, j)] == Complex64::new(0.0, 0.0)))
}

/// Complex Schur form `A = Z T Z*` with `T` upper triangular. Upper
/// triangular input is returned as is.
pub fn schur(a: &Matrix) -> Result<(Matrix, Matrix)> {
    let n = ensure_square(a)?;
    ensure_finite(a)?;
    if is_triangular(a, true) {
        return Ok((identity(n), a.clone()));
    }
    let s = Schur::try_new(a.clone(), f64::EPSILON, MAX_EIG_ITERS).ok_or(KernelError::NoConvergence("Schur"))?;
    Ok(s.unpack())
}

/// Eigenvalues of a general square matrix (diagonal of the Schur factor;
/// read off directly for triangular input).
pub fn eigenvalues(a: &Matrix) -> Result<Vec<Complex64>> {
    if ensure_square(a)? > 0 && is_triangular(a, false) {
        ensure_finite(a)?;
        return Ok(a.diagonal().iter().copied().collect());
    }
    let (_, t) = schur(a)?;
    Ok((0..t.nrows()).map(|i| t[(i, i)]).collect())
}

/// Largest real part over the spectrum.
pub fn spectral_abscissa(a: &Matrix) -> Result<f64> {
    Ok(eigenvalues(a)?.iter().map(|z| z.re).fold(f64::NEG_INFINITY, f64::max))
}

/// Unit eigenvector for the `k`-th diagonal entry of a Schur pair by
/// triangular back substitution.
pub fn schur_eigenvector(z: &Matrix, t: &Matrix, k: usize) -> Vector {
    let n = t.nrows();
    let lambda = t[(k, k)];
    let floor = f64::EPSILON * t.norm().max(f64::MIN_POSITIVE);
    let mut y = Vector::zeros(n);
    y[k] = real(1.0);
    for i in (0..k).rev() {
        let mut acc = Complex64::new(0.0, 0.0);
        for j in i + 1..=k {
            acc += t[(i, j)] * y[j];
        }
        let mut d = t[(i, i)] - lambda;
        if d.norm() < floor {
            d = real(floor);
        }
        y[i] = -acc / d;
    }
    let v = z * y;
    let norm = v.norm();
    v.unscale(norm)
}

/// Gauss–Legendre rule on `[-1, 1]`.
#[derive(Debug, Clone)]
pub struct GaussLegendre {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(points: usize) -> Self {
        assert!(points >= 1, "a quadrature rule needs at least one node");
        let n = points;
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        for i in 0..n.div_ceil(2) {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    /// Polynomial degree integrated exactly, `2n − 1`.
    pub fn degree(&self) -> usize {
        2 * self.nodes.len() - 1
    }

    /// Nodes and weights mapped to `[a, b]`.
    pub fn mapped(&self, a: f64, b: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let half = 0.5 * (b - a);
        let mid = 0.5 * (a + b);
        self.nodes.iter().zip(&self.weights).map(move |(&x, &w)| (mid + half * x, half * w))
    }

    /// Composite rule with `panels` equal panels on `[a, b]`.
    pub fn integrate<F: Fn(f64) -> f64>(&self, f: F, a: f64, b: f64, panels: usize) -> Result<f64> {
        let h = (b - a) / panels as f64;
        let mut partials = Vec::with_capacity(panels);
        for k in 0..panels {
            let lo = a + h * k as f64;
            let hi = if k + 1 == panels { b } else { lo + h };
            let mut acc = 0.0;
            for (t, w) in self.mapped(lo, hi) {
                let v = f(t);
                if !v.is_finite() {
                    return Err(KernelError::NonFiniteSample { t });
                }
                acc += w * v;
            }
            partials.push(acc);
        }
        Ok(crate::par::pairwise_sum(&partials))
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    let p = if n == 0 { 1.0 } else { p1 };
    let dp = n as f64 * (x * p - p0) / (x * x - 1.0);
    (p, dp)
}

/// Points per panel of [`quad_integral`].
pub const QUAD_POINTS: usize = 8;

/// `∫₀^T f(t) dt` by composite 8-point Gauss–Legendre on `panels` equal panels.
pub fn quad_integral<F: Fn(f64) -> f64>(f: F, t_end: f64, panels: usize) -> Result<f64> {
    if panels < 4 {
        return Err(KernelError::InvalidArgument(format!("need at least 4 panels, got {panels}")));
    }
    if !(t_end > 0.0 && t_end.is_finite()) {
        return Err(KernelError::InvalidArgument(format!("integration end must be positive, got {t_end}")));
    }
    GaussLegendre::new(QUAD_POINTS).integrate(f, 0.0, t_end, panels)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    fn max_abs_diff(a: &Matrix, b: &Matrix) -> f64 {
        (a - b).iter().map(|z| z.norm()).fold(0.0, f64::max)
    }

    #[test]
    fn expm_at_zero_is_exact_identity() {
        let a = from_real_rows(2, 2, &[3.0, -7.0, 0.5, 11.0]);
        assert_eq!(expm(&a, 0.0, 1e-12).unwrap(), identity(2));
    }

    #[test]
    fn expm_diagonal() {
        let e = expm(&real_diag(&[-1.0, -2.0]), 1.0, 1e-13).unwrap();
        assert_relative_eq!(e[(0, 0)].re, (-1f64).exp(), max_relative = 1e-13);
        assert_relative_eq!(e[(1, 1)].re, (-2f64).exp(), max_relative = 1e-13);
        assert!(e[(0, 1)].norm() < 1e-16 && e[(1, 0)].norm() < 1e-16);
    }

    #[test]
    fn expm_nilpotent() {
        let a = from_real_rows(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        for t in [0.3, 1.0, 7.5] {
            let e = expm(&a, t, 1e-13).unwrap();
            let want = from_real_rows(2, 2, &[1.0, t, 0.0, 1.0]);
            assert!(max_abs_diff(&e, &want) < 1e-14 * t.max(1.0));
        }
    }

    #[test]
    fn expm_matches_nalgebra_pade() {
        let a = from_real_rows(3, 3, &[-1.0, 4.0, 0.2, 0.0, -2.0, 1.5, -0.3, 0.7, -0.5]);
        for t in [0.1, 1.0, 4.0] {
            let ours = expm(&a, t, 1e-13).unwrap();
            let theirs = (&a * real(t)).exp();
            let rel = (&ours - &theirs).norm() / theirs.norm();
            assert!(rel < 1e-12, "t={t} rel={rel}");
        }
    }

    #[test]
    fn expm_rejects_bad_inputs() {
        let rect = Matrix::zeros(2, 3);
        assert!(matches!(expm(&rect, 1.0, 1e-12), Err(KernelError::NonSquare { .. })));
        let mut nan = identity(2);
        nan[(1, 0)] = c64(f64::NAN, 0.0);
        assert!(matches!(expm(&nan, 1.0, 1e-12), Err(KernelError::NonFinite { row: 1, col: 0 })));
        assert!(expm(&identity(2), 1.0, 0.1).is_err());
        assert!(expm(&identity(2), -1.0, 1e-12).is_err());
    }

    #[test]
    fn hermitian_eig_examples() {
        let (v, _) = hermitian_eig(&identity(3)).unwrap();
        assert_eq!(v.len(), 3);
        v.iter().for_each(|&x| assert_relative_eq!(x, 1.0, epsilon = 1e-14));

        let (v, vecs) = hermitian_eig(&from_real_rows(2, 2, &[2.0, 1.0, 1.0, 2.0])).unwrap();
        assert_relative_eq!(v[0], 1.0, epsilon = 1e-14);
        assert_relative_eq!(v[1], 3.0, epsilon = 1e-14);
        let gram = vecs.adjoint() * &vecs;
        assert!(max_abs_diff(&gram, &identity(2)) < 1e-14);

        let (v, _) = hermitian_eig(&real_diag(&[3.0, -1.0])).unwrap();
        assert_eq!(v, vec![-1.0, 3.0]);
    }

    #[test]
    fn singular_extremes_examples() {
        assert_eq!(singular_extremes(&identity(2)).unwrap(), (1.0, 1.0));
        let (hi, lo) = singular_extremes(&from_real_rows(2, 2, &[1.0, 0.0, 0.0, 0.0])).unwrap();
        assert_relative_eq!(hi, 1.0, epsilon = 1e-15);
        assert!(lo.abs() < 1e-15);
        let (hi, lo) = singular_extremes(&from_real_rows(2, 2, &[0.0, 2.0, 3.0, 0.0])).unwrap();
        assert_relative_eq!(hi, 3.0, max_relative = 1e-12);
        assert_relative_eq!(lo, 2.0, max_relative = 1e-12);
        let mut bad = identity(2);
        bad[(0, 0)] = c64(f64::INFINITY, 0.0);
        assert!(singular_extremes(&bad).is_err());
    }

    #[test]
    fn solve_linear_examples() {
        let b = from_real_rows(2, 2, &[1.0, 2.0, 3.0, 4.0]);
        assert!(max_abs_diff(&solve_linear(&identity(2), &b).unwrap(), &b) < 1e-15);
        let x = solve_linear(&real_diag(&[2.0, 4.0]), &identity(2)).unwrap();
        assert!(max_abs_diff(&x, &real_diag(&[0.5, 0.25])) < 1e-15);
        let m = &identity(2) * real(2.0) - from_real_rows(2, 2, &[0.0, 1.0, 0.0, 0.0]);
        let x = solve_linear(&m, &identity(2)).unwrap();
        assert!(max_abs_diff(&x, &from_real_rows(2, 2, &[0.5, 0.25, 0.0, 0.5])) < 1e-15);
    }

    #[test]
    fn solve_linear_flags_singular() {
        let m = from_real_rows(2, 2, &[1.0, 2.0, 2.0, 4.0]);
        assert!(matches!(solve_linear(&m, &identity(2)), Err(KernelError::Singular { .. })));
    }

    #[test]
    fn quad_examples() {
        assert_relative_eq!(quad_integral(|t| t, 1.0, 4).unwrap(), 0.5, epsilon = 1e-15);
        assert_relative_eq!(quad_integral(|t| (-t).exp(), 1.0, 4).unwrap(), 1.0 - (-1f64).exp(), epsilon = 1e-15);
        assert_relative_eq!(quad_integral(|_| 1.0, 1.0, 4).unwrap(), 1.0, epsilon = 1e-15);
        assert!(quad_integral(|_| 1.0, 1.0, 3).is_err());
        assert!(matches!(quad_integral(|_| f64::NAN, 1.0, 4), Err(KernelError::NonFiniteSample { .. })));
    }

    #[test]
    fn gauss_legendre_is_exact_to_its_degree() {
        for points in 1..=10 {
            let rule = GaussLegendre::new(points);
            let deg = rule.degree() as i32;
            let got = rule.integrate(|t| t.powi(deg), 0.0, 1.0, 1).unwrap();
            assert_relative_eq!(got, 1.0 / (deg as f64 + 1.0), max_relative = 1e-13);
            let weight_sum: f64 = rule.mapped(-1.0, 1.0).map(|(_, w)| w).sum();
            assert_relative_eq!(weight_sum, 2.0, epsilon = 1e-14);
        }
    }

    #[test]
    fn schur_eigenvector_of_jordan_block() {
        let a = from_real_rows(3, 3, &[0.5, 1.0, 0.0, 0.0, 0.5, 1.0, 0.0, 0.0, 0.5]);
        let (z, t) = schur(&a).unwrap();
        let v = schur_eigenvector(&z, &t, 0);
        let r = &a * &v - &v * t[(0, 0)];
        assert!(r.norm() < 1e-8);
        assert_relative_eq!(v.norm(), 1.0, epsilon = 1e-14);
    }
}
