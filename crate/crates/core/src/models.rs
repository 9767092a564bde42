//! Deterministic generator families and matrix file I/O.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::numkernel::{self, c64, real, Complex64, Matrix, Vector};

/// SplitMix64 with the standard increment and finalizer.
#[derive(Debug, Clone)]
pub struct SplitMix64 {
    state: u64,
}

impl SplitMix64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self.state.wrapping_add(0x9E37_79B9_7F4A_7C15);
        let mut z = self.state;
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    }

    /// Uniform on `[0, 1)` from the top 53 bits.
    pub fn next_unit(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform on `[-1, 1)`.
    pub fn next_symmetric(&mut self) -> f64 {
        2.0 * self.next_unit() - 1.0
    }

    pub fn next_complex(&mut self) -> Complex64 {
        let re = self.next_symmetric();
        let im = self.next_symmetric();
        c64(re, im)
    }

    pub fn complex_vector(&mut self, n: usize) -> Vector {
        Vector::from_iterator(n, (0..n).map(|_| self.next_complex()))
    }

    /// Complex matrix with entries uniform in the unit square, row-major fill.
    pub fn complex_matrix(&mut self, n: usize) -> Matrix {
        Matrix::from_row_iterator(n, n, (0..n * n).map(|_| self.next_complex()).collect::<Vec<_>>())
    }

    /// Random Hermitian positive semidefinite `G*G`, rank `rank`.
    pub fn psd_matrix(&mut self, n: usize, rank: usize) -> Matrix {
        let g = Matrix::from_row_iterator(rank, n, (0..rank * n).map(|_| self.next_complex()).collect::<Vec<_>>());
        numkernel::hermitian_part(&(g.adjoint() * g))
    }
}

/// Tridiagonal Dirichlet Laplacian `((n+1)/L)²·(1, −2, 1)`.
pub fn heat_dirichlet(n: usize, length: f64) -> Result<Matrix> {
    if n < 2 {
        return Err(Error::InvalidParameter(format!("heat family needs n >= 2, got {n}")));
    }
    if !(length > 0.0 && length.is_finite()) {
        return Err(Error::InvalidParameter(format!("heat family needs L > 0, got {length}")));
    }
    let scale = ((n as f64 + 1.0) / length).powi(2);
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = real(-2.0 * scale);
        if i + 1 < n {
            a[(i, i + 1)] = real(scale);
            a[(i + 1, i)] = real(scale);
        }
    }
    Ok(a)
}

/// Closed-form spectrum of [`heat_dirichlet`], ascending.
pub fn heat_eigenvalues(n: usize, length: f64) -> Vec<f64> {
    let np1 = n as f64 + 1.0;
    let mut v: Vec<f64> = (1..=n)
        .map(|k| -(4.0 * np1 * np1 / (length * length)) * (k as f64 * std::f64::consts::PI / (2.0 * np1)).sin().powi(2))
        .collect();
    v.sort_by(f64::total_cmp);
    v
}

/// First-order upwind transport: `(speed/h)·(−1 on the diagonal, 1 below it)`.
pub fn upwind_shift(n: usize, speed: f64, h: f64) -> Result<Matrix> {
    if n < 2 || !(speed > 0.0) || !(h > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "upwind family needs n >= 2, speed > 0, h > 0 (got n={n}, speed={speed}, h={h})"
        )));
    }
    let r = speed / h;
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = real(-r);
        if i > 0 {
            a[(i, i - 1)] = real(r);
        }
    }
    Ok(a)
}

pub fn jordan_block(n: usize, lambda: Complex64) -> Result<Matrix> {
    if n < 1 {
        return Err(Error::InvalidParameter("jordan block needs n >= 1".into()));
    }
    let mut a = Matrix::zeros(n, n);
    for i in 0..n {
        a[(i, i)] = lambda;
        if i + 1 < n {
            a[(i, i + 1)] = real(1.0);
        }
    }
    Ok(a)
}

/// Uniform `[-1, 1)` matrix shifted so its spectral abscissa is `−margin`.
pub fn random_stable(n: usize, margin: f64, seed: u64) -> Result<Matrix> {
    if n < 1 || !(margin > 0.0 && margin.is_finite()) {
        return Err(Error::InvalidParameter(format!("random-stable needs n >= 1 and margin > 0 (got {n}, {margin})")));
    }
    let mut rng = SplitMix64::new(seed);
    let g = Matrix::from_row_iterator(n, n, (0..n * n).map(|_| real(rng.next_symmetric())).collect::<Vec<_>>());
    let s = numkernel::spectral_abscissa(&g)?;
    Ok(g - numkernel::identity(n) * real(s + margin))
}

/// `[[0, 1], [−1, 0]]` plus `shift·I`.
pub fn rotation(shift: f64) -> Matrix {
    numkernel::from_real_rows(2, 2, &[shift, 1.0, -1.0, shift])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "kebab-case")]
pub enum Family {
    Heat { length: f64 },
    Upwind { speed: f64, h: f64 },
    Jordan { lambda_re: f64, lambda_im: f64 },
    RandomStable { margin: f64, seed: u64 },
    File { path: PathBuf },
}

/// A reproducible generator description.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelSpec {
    #[serde(flatten)]
    pub family: Family,
    pub n: usize,
    /// Added to the diagonal after construction.
    #[serde(default)]
    pub shift: f64,
}

impl ModelSpec {
    pub fn new(family: Family, n: usize) -> Self {
        Self { family, n, shift: 0.0 }
    }

    pub fn build(&self) -> Result<Matrix> {
        let mut a = match &self.family {
            Family::Heat { length } => heat_dirichlet(self.n, *length)?,
            Family::Upwind { speed, h } => upwind_shift(self.n, *speed, *h)?,
            Family::Jordan { lambda_re, lambda_im } => jordan_block(self.n, c64(*lambda_re, *lambda_im))?,
            Family::RandomStable { margin, seed } => random_stable(self.n, *margin, *seed)?,
            Family::File { path } => load_matrix(path)?,
        };
        if self.shift != 0.0 {
            let n = a.nrows();
            a += numkernel::identity(n) * real(self.shift);
        }
        Ok(a)
    }
}

/// Reads a matrix in the JSON schema: `rows`, `cols`, and exactly one of
/// `data` (row-major `[re, im]` pairs) or `data_real` (row-major numbers).
pub fn load_matrix(path: &Path) -> Result<Matrix> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::Io(format!("{}: {e}", path.display())))?;
    parse_matrix(&text)
}

pub fn parse_matrix(text: &str) -> Result<Matrix> {
    let value: Value = serde_json::from_str(text).map_err(|e| Error::Malformed(e.to_string()))?;
    matrix_from_value(&value)
}

pub fn matrix_from_value(value: &Value) -> Result<Matrix> {
    let obj = value.as_object().ok_or_else(|| Error::Malformed("top level must be an object".into()))?;
    let dim = |key: &str| -> Result<usize> {
        obj.get(key)
            .and_then(Value::as_u64)
            .map(|v| v as usize)
            .ok_or_else(|| Error::Malformed(format!("missing or non-integer \"{key}\"")))
    };
    let rows = dim("rows")?;
    let cols = dim("cols")?;
    let expected = rows * cols;
    let number = |v: &Value, offset: usize| -> Result<f64> {
        let x = v.as_f64().ok_or_else(|| Error::Malformed(format!("entry at offset {offset} is not a number")))?;
        if !x.is_finite() {
            return Err(Error::NonFiniteEntry { offset });
        }
        Ok(x)
    };
    let entries: Vec<Complex64> = match (obj.get("data"), obj.get("data_real")) {
        (Some(_), Some(_)) => return Err(Error::Malformed("both \"data\" and \"data_real\" present".into())),
        (None, None) => return Err(Error::Malformed("one of \"data\" or \"data_real\" is required".into())),
        (Some(data), None) => {
            let arr = data.as_array().ok_or_else(|| Error::Malformed("\"data\" must be an array".into()))?;
            if arr.len() != expected {
                return Err(Error::Ragged { offset: arr.len().min(expected), expected, found: arr.len() });
            }
            arr.iter()
                .enumerate()
                .map(|(i, pair)| {
                    let p = pair
                        .as_array()
                        .ok_or_else(|| Error::Malformed(format!("entry at offset {i} is not a [re, im] pair")))?;
                    if p.len() != 2 {
                        return Err(Error::Ragged { offset: i, expected: 2, found: p.len() });
                    }
                    Ok(c64(number(&p[0], i)?, number(&p[1], i)?))
                })
                .collect::<Result<_>>()?
        }
        (None, Some(data)) => {
            let arr = data.as_array().ok_or_else(|| Error::Malformed("\"data_real\" must be an array".into()))?;
            if arr.len() != expected {
                return Err(Error::Ragged { offset: arr.len().min(expected), expected, found: arr.len() });
            }
            arr.iter().enumerate().map(|(i, v)| Ok(real(number(v, i)?))).collect::<Result<_>>()?
        }
    };
    Ok(Matrix::from_row_iterator(rows, cols, entries))
}

/// JSON value in the matrix schema. Purely real matrices use `data_real`.
pub fn matrix_to_value(m: &Matrix) -> Value {
    let mut obj = serde_json::Map::new();
    obj.insert("rows".into(), Value::from(m.nrows()));
    obj.insert("cols".into(), Value::from(m.ncols()));
    let row_major = (0..m.nrows()).flat_map(|i| (0..m.ncols()).map(move |j| (i, j)));
    if m.iter().all(|z| z.im == 0.0) {
        let data: Vec<Value> = row_major.map(|(i, j)| Value::from(m[(i, j)].re)).collect();
        obj.insert("data_real".into(), Value::Array(data));
    } else {
        let data: Vec<Value> = row_major
            .map(|(i, j)| Value::Array(vec![Value::from(m[(i, j)].re), Value::from(m[(i, j)].im)]))
            .collect();
        obj.insert("data".into(), Value::Array(data));
    }
    Value::Object(obj)
}

pub fn save_matrix(m: &Matrix, path: &Path) -> Result<()> {
    let text = serde_json::to_string_pretty(&matrix_to_value(m)).map_err(|e| Error::Io(e.to_string()))?;
    std::fs::write(path, text + "\n")?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn splitmix_reference_values() {
        // First outputs for seed 0 of the reference SplitMix64.
        let mut rng = SplitMix64::new(0);
        assert_eq!(rng.next_u64(), 0xE220_A839_7B1D_CDAF);
        assert_eq!(rng.next_u64(), 0x6E78_9E6A_A1B9_65F4);
        assert_eq!(rng.next_u64(), 0x06C4_5D18_8009_454F);
    }

    #[test]
    fn heat_two_by_two() {
        let a = heat_dirichlet(2, 1.0).unwrap();
        assert_eq!(a, numkernel::from_real_rows(2, 2, &[-18.0, 9.0, 9.0, -18.0]));
        let (ev, _) = numkernel::hermitian_eig(&a).unwrap();
        assert_relative_eq!(ev[0], -27.0, epsilon = 1e-12);
        assert_relative_eq!(ev[1], -9.0, epsilon = 1e-12);
        assert!(heat_dirichlet(1, 1.0).is_err());
    }

    #[test]
    fn heat_spectrum_matches_sine_formula() {
        let a = heat_dirichlet(16, 1.0).unwrap();
        let (ev, _) = numkernel::hermitian_eig(&a).unwrap();
        let scale = a.norm();
        for (got, want) in ev.iter().zip(heat_eigenvalues(16, 1.0)) {
            assert!((got - want).abs() <= 1e-10 * scale);
        }
        assert!(numkernel::spectral_abscissa(&heat_dirichlet(8, 1.0).unwrap()).unwrap() < 0.0);
    }

    #[test]
    fn upwind_examples() {
        let a = upwind_shift(2, 1.0, 1.0).unwrap();
        assert_eq!(a, numkernel::from_real_rows(2, 2, &[-1.0, 0.0, 1.0, -1.0]));
        let a = upwind_shift(6, 2.0, 0.5).unwrap();
        assert_eq!(numkernel::spectral_abscissa(&a).unwrap(), -4.0);
        assert!(upwind_shift(4, -1.0, 1.0).is_err());
    }

    #[test]
    fn upwind_sigma_min_decreases_with_n() {
        let m = |n| {
            let a = upwind_shift(n, 1.0, 1.0).unwrap();
            let t1 = numkernel::expm(&a, 1.0, 1e-13).unwrap();
            numkernel::singular_extremes(&t1).unwrap().1
        };
        let (m4, m8, m16) = (m(4), m(8), m(16));
        assert!(m4 > m8 && m8 > m16, "{m4} {m8} {m16}");
    }

    #[test]
    fn jordan_examples() {
        assert_eq!(jordan_block(1, real(-2.0)).unwrap(), numkernel::real_diag(&[-2.0]));
        let j = jordan_block(3, real(-1.0)).unwrap();
        assert_relative_eq!(numkernel::spectral_abscissa(&j).unwrap(), -1.0, epsilon = 1e-12);
        let t = numkernel::expm(&j, 1.5, 1e-13).unwrap();
        let e = (-1.5f64).exp();
        assert_relative_eq!(t[(0, 0)].re, e, max_relative = 1e-12);
        assert_relative_eq!(t[(0, 2)].re, 1.5 * 1.5 * e / 2.0, max_relative = 1e-12);
    }

    #[test]
    fn random_stable_examples() {
        let a = random_stable(8, 0.5, 42).unwrap();
        assert!((numkernel::spectral_abscissa(&a).unwrap() + 0.5).abs() < 1e-10);
        assert_eq!(a, random_stable(8, 0.5, 42).unwrap());
        let (a1, a2) = (random_stable(4, 0.5, 1).unwrap(), random_stable(4, 0.5, 2).unwrap());
        assert_ne!(a1[(0, 0)], a2[(0, 0)]);
    }

    #[test]
    fn parse_examples() {
        let m = parse_matrix(r#"{"rows":2,"cols":2,"data":[[-1,0],[0,0],[0,0],[-1,0]]}"#).unwrap();
        assert_eq!(m, numkernel::real_diag(&[-1.0, -1.0]));
        let m = parse_matrix(r#"{"rows":2,"cols":2,"data_real":[-1,0,0,-1]}"#).unwrap();
        assert_eq!(m, numkernel::real_diag(&[-1.0, -1.0]));
        let err = parse_matrix(r#"{"rows":2,"cols":2,"data_real":[-1,0,0]}"#).unwrap_err();
        assert!(matches!(err, Error::Ragged { offset: 3, expected: 4, found: 3 }), "{err}");
        assert!(err.to_string().contains("offset 3"));
        let err = parse_matrix(r#"{"rows":1,"cols":2,"data":[[1,0],[2]]}"#).unwrap_err();
        assert!(matches!(err, Error::Ragged { offset: 1, .. }));
        assert!(matches!(parse_matrix("[1, 2"), Err(Error::Malformed(_))));
        assert!(matches!(parse_matrix(r#"{"rows":1,"cols":1}"#), Err(Error::Malformed(_))));
    }

    #[test]
    fn matrix_json_round_trip() {
        let mut rng = SplitMix64::new(9);
        let m = rng.complex_matrix(3);
        assert_eq!(matrix_from_value(&matrix_to_value(&m)).unwrap(), m);
        let r = heat_dirichlet(3, 2.0).unwrap();
        let v = matrix_to_value(&r);
        assert!(v.get("data_real").is_some());
        assert_eq!(matrix_from_value(&v).unwrap(), r);
    }

    #[test]
    fn spec_serializes_with_family_tag() {
        let spec = ModelSpec::new(Family::RandomStable { margin: 0.5, seed: 7 }, 12);
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"family\":\"random-stable\""), "{text}");
        let back: ModelSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
    }
}
