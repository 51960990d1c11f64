//! Thin dense helpers over faer. Everything here is sequential so results do
//! not depend on thread count.

use crate::error::{Error, Result};
use faer::{Mat, Side};
use num_complex::Complex64 as C;

pub type CMat = Mat<C>;

pub const I: C = C { re: 0.0, im: 1.0 };

pub fn c(re: f64) -> C {
    C::new(re, 0.0)
}

pub fn zeros(n: usize, m: usize) -> CMat {
    Mat::zeros(n, m)
}

pub fn identity(n: usize) -> CMat {
    Mat::from_fn(n, n, |i, j| if i == j { c(1.0) } else { c(0.0) })
}

pub fn diag(values: &[C]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { values[i] } else { c(0.0) })
}

pub fn diag_real(values: &[f64]) -> CMat {
    let n = values.len();
    Mat::from_fn(n, n, |i, j| if i == j { c(values[i]) } else { c(0.0) })
}

pub fn matmul(a: &CMat, b: &CMat) -> CMat {
    a * b
}

pub fn adjoint(a: &CMat) -> CMat {
    Mat::from_fn(a.ncols(), a.nrows(), |i, j| a[(j, i)].conj())
}

pub fn add(a: &CMat, b: &CMat) -> CMat {
    a + b
}

pub fn sub(a: &CMat, b: &CMat) -> CMat {
    a - b
}

pub fn scale(a: &CMat, s: C) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn scale_real(a: &CMat, s: f64) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * s)
}

pub fn commutator(a: &CMat, b: &CMat) -> CMat {
    &(a * b) - &(b * a)
}

pub fn anticommutator(a: &CMat, b: &CMat) -> CMat {
    &(a * b) + &(b * a)
}

/// A * D with D diagonal.
pub fn mul_diag_right(a: &CMat, d: &[C]) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| a[(i, j)] * d[j])
}

/// D * A with D diagonal.
pub fn mul_diag_left(d: &[C], a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| d[i] * a[(i, j)])
}

pub fn trace(a: &CMat) -> C {
    (0..a.nrows().min(a.ncols())).map(|i| a[(i, i)]).sum()
}

pub fn frobenius(a: &CMat) -> f64 {
    let mut s = 0.0;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            s += a[(i, j)].norm_sqr();
        }
    }
    s.sqrt()
}

pub fn max_abs(a: &CMat) -> f64 {
    let mut m = 0.0f64;
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            m = m.max(a[(i, j)].norm());
        }
    }
    m
}

pub fn max_abs_diff(a: &CMat, b: &CMat) -> f64 {
    max_abs(&(a - b))
}

pub fn is_finite(a: &CMat) -> bool {
    for j in 0..a.ncols() {
        for i in 0..a.nrows() {
            let z = a[(i, j)];
            if !z.re.is_finite() || !z.im.is_finite() {
                return false;
            }
        }
    }
    true
}

/// max |A - A*| relative to max |A|.
pub fn hermiticity_drift(a: &CMat) -> f64 {
    let n = a.nrows();
    let mut d = 0.0f64;
    for j in 0..n {
        for i in 0..=j {
            d = d.max((a[(i, j)] - a[(j, i)].conj()).norm());
        }
    }
    let scale = max_abs(a);
    if scale == 0.0 {
        0.0
    } else {
        d / scale
    }
}

pub fn hermitian_part(a: &CMat) -> CMat {
    Mat::from_fn(a.nrows(), a.ncols(), |i, j| (a[(i, j)] + a[(j, i)].conj()) * 0.5)
}

/// (A + A*)/2, rejecting drift above 1e-8.
pub fn resymmetrize(a: &CMat) -> Result<CMat> {
    let drift = hermiticity_drift(a);
    if drift > 1e-8 {
        return Err(Error::HermiticityDrift(drift));
    }
    Ok(hermitian_part(a))
}

pub struct Eigh {
    /// Ascending.
    pub values: Vec<f64>,
    pub vectors: CMat,
}

pub fn eigh(a: &CMat) -> Result<Eigh> {
    if !is_finite(a) {
        return Err(Error::Input("non-finite matrix entries".into()));
    }
    let e = a
        .self_adjoint_eigen(Side::Lower)
        .map_err(|e| Error::Linalg(format!("{e:?}")))?;
    let s = e.S();
    let values = (0..a.nrows()).map(|i| s[i].re).collect();
    Ok(Eigh {
        values,
        vectors: e.U().to_owned(),
    })
}

pub fn eigvalsh(a: &CMat) -> Result<Vec<f64>> {
    if !is_finite(a) {
        return Err(Error::Input("non-finite matrix entries".into()));
    }
    a.self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| Error::Linalg(format!("{e:?}")))
}

/// Descending singular values.
pub fn singular_values(a: &CMat) -> Result<Vec<f64>> {
    if !is_finite(a) {
        return Err(Error::Input("non-finite matrix entries".into()));
    }
    a.singular_values()
        .map_err(|e| Error::Linalg(format!("{e:?}")))
}

/// V f(Λ) V*.
pub fn recompose(e: &Eigh, f: impl Fn(f64) -> C) -> CMat {
    let fv: Vec<C> = e.values.iter().map(|&l| f(l)).collect();
    let left = mul_diag_right(&e.vectors, &fv);
    &left * e.vectors.adjoint()
}

/// exp(-i t H) for Hermitian H from an existing eigendecomposition.
pub fn unitary_from_eigh(e: &Eigh, t: f64) -> CMat {
    recompose(e, |l| C::from_polar(1.0, -t * l))
}

/// Unitary DFT matrix F[k][j] = exp(-2πi kj/n)/√n.
pub fn dft_matrix(n: usize) -> CMat {
    let norm = 1.0 / (n as f64).sqrt();
    Mat::from_fn(n, n, |k, j| {
        let ph = -2.0 * std::f64::consts::PI * ((k * j) % n) as f64 / n as f64;
        C::from_polar(norm, ph)
    })
}

pub fn kron(a: &CMat, b: &CMat) -> CMat {
    let (ra, ca) = (a.nrows(), a.ncols());
    let (rb, cb) = (b.nrows(), b.ncols());
    // index convention: row = ib + rb * ia, so the second factor varies fastest
    Mat::from_fn(ra * rb, ca * cb, |r, col| {
        a[(r / rb, col / cb)] * b[(r % rb, col % cb)]
    })
}

pub fn to_rows(a: &CMat) -> Vec<Vec<C>> {
    (0..a.nrows())
        .map(|i| (0..a.ncols()).map(|j| a[(i, j)]).collect())
        .collect()
}

pub fn from_rows(rows: &[Vec<C>]) -> Result<CMat> {
    let n = rows.len();
    let m = rows.first().map(|r| r.len()).unwrap_or(0);
    if rows.iter().any(|r| r.len() != m) {
        return Err(Error::Input("ragged matrix rows".into()));
    }
    Ok(Mat::from_fn(n, m, |i, j| rows[i][j]))
}
