//! Periodic grids, quadrature-weighted operator matrices, Schatten and
//! semiclassical norms, quantum gradients and momentum weights.
//!
//! An operator with integral kernel K(x,y) is stored as M = dx^d * K sampled
//! on the nodes, so composition is a matrix product and Tr = sum diag(M).

use crate::error::{Error, Result};
use crate::fft;
use crate::linalg::{self, c, CMat, I};
use num_complex::Complex64 as C;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex, OnceLock};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct GridSpec {
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L")]
    pub l: f64,
    pub hbar: f64,
}

impl GridSpec {
    pub fn new(d: usize, n: usize, l: f64, hbar: f64) -> Result<Self> {
        if d != 1 && d != 2 {
            return Err(Error::Input(format!("dimension d={d} unsupported (1 or 2)")));
        }
        if n < 4 || !n.is_power_of_two() {
            return Err(Error::Input(format!("n={n} must be a power of two >= 4")));
        }
        if n.pow(d as u32) > 4096 {
            return Err(Error::Input(format!("n^d = {} too large for dense operators", n.pow(d as u32))));
        }
        if !(l.is_finite() && l > 0.0) {
            return Err(Error::Input(format!("box length {l} must be positive")));
        }
        if !(hbar.is_finite() && hbar > 0.0) {
            return Err(Error::Input(format!("hbar {hbar} must be positive")));
        }
        Ok(Self { d, n, l, hbar })
    }

    pub fn line(n: usize, l: f64, hbar: f64) -> Result<Self> {
        Self::new(1, n, l, hbar)
    }

    pub fn h(&self) -> f64 {
        2.0 * PI * self.hbar
    }

    pub fn dx(&self) -> f64 {
        self.l / self.n as f64
    }

    /// Number of nodes, n^d.
    pub fn dim(&self) -> usize {
        self.n.pow(self.d as u32)
    }

    /// Quadrature weight dx^d.
    pub fn cell(&self) -> f64 {
        self.dx().powi(self.d as i32)
    }

    /// h^d.
    pub fn h_d(&self) -> f64 {
        self.h().powi(self.d as i32)
    }

    pub fn axis_positions(&self) -> Vec<f64> {
        (0..self.n).map(|i| -self.l / 2.0 + i as f64 * self.dx()).collect()
    }

    /// Coordinate along `axis` of flat node index `idx`.
    pub fn position(&self, idx: usize, axis: usize) -> f64 {
        let i = (idx / self.n.pow(axis as u32)) % self.n;
        -self.l / 2.0 + i as f64 * self.dx()
    }

    /// Momentum lattice spacing 2πħ/L.
    pub fn dp(&self) -> f64 {
        self.h() / self.l
    }

    /// Momentum component along `axis` for flat Fourier index `k`.
    pub fn momentum(&self, k: usize, axis: usize) -> f64 {
        let kk = (k / self.n.pow(axis as u32)) % self.n;
        fft::label(kk, self.n) as f64 * self.dp()
    }

    /// |p| for flat Fourier index `k`.
    pub fn momentum_norm(&self, k: usize) -> f64 {
        (0..self.d).map(|a| self.momentum(k, a).powi(2)).sum::<f64>().sqrt()
    }

    /// Ascending momentum lattice p_k, k = -n/2..n/2-1.
    pub fn momentum_lattice(&self) -> Vec<f64> {
        (0..self.n)
            .map(|i| (i as i64 - self.n as i64 / 2) as f64 * self.dp())
            .collect()
    }

    fn key(&self) -> (usize, usize, u64, u64) {
        (self.d, self.n, self.l.to_bits(), self.hbar.to_bits())
    }

    pub fn same_as(&self, other: &GridSpec) -> bool {
        self.key() == other.key()
    }

    pub fn check_same(&self, other: &GridSpec) -> Result<()> {
        if self.same_as(other) {
            Ok(())
        } else {
            Err(Error::GridMismatch(format!("{self:?} vs {other:?}")))
        }
    }

    pub fn require_1d(&self, what: &str) -> Result<()> {
        if self.d == 1 {
            Ok(())
        } else {
            Err(Error::Input(format!("{what} is implemented for d = 1 only")))
        }
    }
}

/// Dense Fourier-diagonal operators shared by all values on one grid.
pub struct Spectral {
    pub f: CMat,
    pub f_adj: CMat,
    pub momentum: Vec<CMat>,
    pub kinetic: CMat,
    weights: Mutex<HashMap<u32, Arc<CMat>>>,
}

fn spectral_cache() -> &'static Mutex<HashMap<(usize, usize, u64, u64), Arc<Spectral>>> {
    static CACHE: OnceLock<Mutex<HashMap<(usize, usize, u64, u64), Arc<Spectral>>>> = OnceLock::new();
    CACHE.get_or_init(|| Mutex::new(HashMap::new()))
}

pub fn spectral(grid: &GridSpec) -> Arc<Spectral> {
    if let Some(s) = spectral_cache().lock().unwrap().get(&grid.key()) {
        return s.clone();
    }
    let f1 = linalg::dft_matrix(grid.n);
    let f = if grid.d == 1 { f1 } else { linalg::kron(&f1, &f1) };
    let f_adj = linalg::adjoint(&f);
    let dim = grid.dim();
    let mult = |vals: Vec<C>| {
        let left = linalg::mul_diag_right(&f_adj, &vals);
        linalg::hermitian_part(&(&left * &f))
    };
    let momentum = (0..grid.d)
        .map(|a| mult((0..dim).map(|k| c(grid.momentum(k, a))).collect()))
        .collect();
    let kinetic = mult((0..dim).map(|k| c(0.5 * grid.momentum_norm(k).powi(2))).collect());
    let s = Arc::new(Spectral { f, f_adj, momentum, kinetic, weights: Mutex::new(HashMap::new()) });
    spectral_cache().lock().unwrap().insert(grid.key(), s.clone());
    s
}

/// F* diag(values) F for values indexed by flat Fourier index.
pub fn fourier_multiplier_matrix(grid: &GridSpec, values: &[C]) -> CMat {
    let s = spectral(grid);
    let left = linalg::mul_diag_right(&s.f_adj, values);
    &left * &s.f
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub struct Flags {
    pub hermitian: bool,
    pub diagonal_in_position: bool,
    pub diagonal_in_momentum: bool,
}

#[derive(Clone)]
pub struct OperatorMatrix {
    pub grid: GridSpec,
    pub matrix: CMat,
    pub flags: Flags,
}

impl std::fmt::Debug for OperatorMatrix {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("OperatorMatrix")
            .field("grid", &self.grid)
            .field("flags", &self.flags)
            .finish()
    }
}

impl OperatorMatrix {
    pub fn new(grid: GridSpec, matrix: CMat) -> Result<Self> {
        let dim = grid.dim();
        if matrix.nrows() != dim || matrix.ncols() != dim {
            return Err(Error::Input(format!(
                "matrix is {}x{}, grid needs {dim}x{dim}",
                matrix.nrows(),
                matrix.ncols()
            )));
        }
        let hermitian = linalg::hermiticity_drift(&matrix) <= 1e-12;
        Ok(Self { grid, matrix, flags: Flags { hermitian, ..Flags::default() } })
    }

    pub(crate) fn with_flags(grid: GridSpec, matrix: CMat, flags: Flags) -> Self {
        Self { grid, matrix, flags }
    }

    /// From kernel samples K(x_i, x_j).
    pub fn from_kernel(grid: GridSpec, kernel: &CMat) -> Result<Self> {
        Self::new(grid, linalg::scale_real(kernel, grid.cell()))
    }

    pub fn kernel(&self) -> CMat {
        linalg::scale_real(&self.matrix, 1.0 / self.grid.cell())
    }

    pub fn zero(grid: GridSpec) -> Self {
        let dim = grid.dim();
        Self::with_flags(
            grid,
            linalg::zeros(dim, dim),
            Flags { hermitian: true, diagonal_in_position: true, diagonal_in_momentum: true },
        )
    }

    pub fn identity(grid: GridSpec) -> Self {
        Self::with_flags(
            grid,
            linalg::identity(grid.dim()),
            Flags { hermitian: true, diagonal_in_position: true, diagonal_in_momentum: true },
        )
    }

    /// Multiplication by a function of position.
    pub fn multiplication(grid: GridSpec, values: &[C]) -> Result<Self> {
        if values.len() != grid.dim() {
            return Err(Error::Input("multiplier length does not match grid".into()));
        }
        let hermitian = values.iter().all(|z| z.im == 0.0);
        Ok(Self::with_flags(
            grid,
            linalg::diag(values),
            Flags { hermitian, diagonal_in_position: true, diagonal_in_momentum: false },
        ))
    }

    pub fn position(grid: GridSpec, axis: usize) -> Self {
        let vals: Vec<C> = (0..grid.dim()).map(|i| c(grid.position(i, axis))).collect();
        Self::with_flags(
            grid,
            linalg::diag(&vals),
            Flags { hermitian: true, diagonal_in_position: true, diagonal_in_momentum: false },
        )
    }

    /// Function of momentum, values per flat Fourier index.
    pub fn fourier_multiplier(grid: GridSpec, values: &[C]) -> Result<Self> {
        if values.len() != grid.dim() {
            return Err(Error::Input("multiplier length does not match grid".into()));
        }
        let hermitian = values.iter().all(|z| z.im == 0.0);
        let mut m = fourier_multiplier_matrix(&grid, values);
        if hermitian {
            m = linalg::hermitian_part(&m);
        }
        Ok(Self::with_flags(
            grid,
            m,
            Flags { hermitian, diagonal_in_position: false, diagonal_in_momentum: true },
        ))
    }

    pub fn momentum(grid: GridSpec, axis: usize) -> Self {
        let m = spectral(&grid).momentum[axis].clone();
        Self::with_flags(
            grid,
            m,
            Flags { hermitian: true, diagonal_in_position: false, diagonal_in_momentum: true },
        )
    }

    /// p^2/2.
    pub fn kinetic(grid: GridSpec) -> Self {
        let m = spectral(&grid).kinetic.clone();
        Self::with_flags(
            grid,
            m,
            Flags { hermitian: true, diagonal_in_position: false, diagonal_in_momentum: true },
        )
    }

    pub fn compose(&self, other: &OperatorMatrix) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let flags = Flags {
            hermitian: false,
            diagonal_in_position: self.flags.diagonal_in_position && other.flags.diagonal_in_position,
            diagonal_in_momentum: self.flags.diagonal_in_momentum && other.flags.diagonal_in_momentum,
        };
        Ok(Self::with_flags(self.grid, &self.matrix * &other.matrix, flags))
    }

    pub fn adjoint(&self) -> Self {
        Self::with_flags(self.grid, linalg::adjoint(&self.matrix), self.flags)
    }

    pub fn add(&self, other: &OperatorMatrix) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        let flags = Flags {
            hermitian: self.flags.hermitian && other.flags.hermitian,
            diagonal_in_position: self.flags.diagonal_in_position && other.flags.diagonal_in_position,
            diagonal_in_momentum: self.flags.diagonal_in_momentum && other.flags.diagonal_in_momentum,
        };
        Ok(Self::with_flags(self.grid, &self.matrix + &other.matrix, flags))
    }

    pub fn sub(&self, other: &OperatorMatrix) -> Result<Self> {
        self.add(&other.scale(-1.0))
    }

    pub fn scale(&self, s: f64) -> Self {
        Self::with_flags(self.grid, linalg::scale_real(&self.matrix, s), self.flags)
    }

    pub fn scale_complex(&self, s: C) -> Self {
        let mut flags = self.flags;
        flags.hermitian = flags.hermitian && s.im == 0.0;
        Self::with_flags(self.grid, linalg::scale(&self.matrix, s), flags)
    }

    /// [self, other].
    pub fn commutator(&self, other: &OperatorMatrix) -> Result<Self> {
        self.grid.check_same(&other.grid)?;
        Ok(Self::with_flags(
            self.grid,
            linalg::commutator(&self.matrix, &other.matrix),
            Flags::default(),
        ))
    }

    pub fn trace(&self) -> C {
        linalg::trace(&self.matrix)
    }

    /// (A + A*)/2, failing on drift above 1e-8.
    pub fn resymmetrized(&self) -> Result<Self> {
        let m = linalg::resymmetrize(&self.matrix)?;
        let mut flags = self.flags;
        flags.hermitian = true;
        Ok(Self::with_flags(self.grid, m, flags))
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        linalg::hermiticity_drift(&self.matrix) <= tol
    }
}

/// One-particle density operator normalized by h^d Tr = 1.
#[derive(Clone, Debug)]
pub struct DensityOperator {
    op: OperatorMatrix,
}

impl DensityOperator {
    /// Validates Hermiticity, positivity and normalization.
    pub fn new(op: OperatorMatrix) -> Result<Self> {
        Self::validate(&op)?;
        let mut op = op;
        op.matrix = linalg::hermitian_part(&op.matrix);
        op.flags.hermitian = true;
        Ok(Self { op })
    }

    /// Rescales a Hermitian PSD operator to unit mass, then validates.
    pub fn normalized(op: OperatorMatrix) -> Result<Self> {
        let tr = op.trace().re * op.grid.h_d();
        if !(tr > 0.0) {
            return Err(Error::Input(format!("cannot normalize operator with h^d Tr = {tr}")));
        }
        Self::new(op.scale(1.0 / tr))
    }

    /// Skips validation; for states produced by trace- and
    /// positivity-preserving maps.
    pub(crate) fn trusted(op: OperatorMatrix) -> Self {
        Self { op }
    }

    pub fn validate(op: &OperatorMatrix) -> Result<()> {
        if !linalg::is_finite(&op.matrix) {
            return Err(Error::Input("density operator has non-finite entries".into()));
        }
        let drift = linalg::hermiticity_drift(&op.matrix);
        if drift > 1e-12 {
            return Err(Error::Input(format!("density operator not Hermitian (drift {drift:e})")));
        }
        let ev = linalg::eigvalsh(&linalg::hermitian_part(&op.matrix))?;
        let max = ev.iter().cloned().fold(f64::MIN, f64::max);
        let min = ev.iter().cloned().fold(f64::MAX, f64::min);
        if min < -1e-10 * max.abs().max(f64::MIN_POSITIVE) {
            return Err(Error::Input(format!("density operator not PSD (min eigenvalue {min:e})")));
        }
        let mass = op.trace().re * op.grid.h_d();
        if (mass - 1.0).abs() > 1e-8 {
            return Err(Error::Input(format!("density operator has h^d Tr = {mass}")));
        }
        Ok(())
    }

    pub fn op(&self) -> &OperatorMatrix {
        &self.op
    }

    pub fn into_op(self) -> OperatorMatrix {
        self.op
    }

    pub fn grid(&self) -> &GridSpec {
        &self.op.grid
    }

    pub fn matrix(&self) -> &CMat {
        &self.op.matrix
    }

    pub fn kernel(&self) -> CMat {
        self.op.kernel()
    }

    /// h^d Tr.
    pub fn mass(&self) -> f64 {
        self.op.trace().re * self.op.grid.h_d()
    }

    /// ρ(x) = h^d ρ(x,x).
    pub fn spatial_density(&self) -> Vec<f64> {
        let g = &self.op.grid;
        let s = g.h_d() / g.cell();
        (0..g.dim()).map(|i| self.op.matrix[(i, i)].re * s).collect()
    }
}

/// m = 1 + |p|^n_w, diagonal in the Fourier basis.
#[derive(Clone, Debug)]
pub struct WeightOperator {
    pub grid: GridSpec,
    pub n_w: u32,
    /// Per flat Fourier index.
    pub values: Vec<f64>,
}

impl WeightOperator {
    pub fn new(grid: GridSpec, n_w: u32) -> Self {
        let values = (0..grid.dim())
            .map(|k| 1.0 + grid.momentum_norm(k).powi(n_w as i32))
            .collect();
        Self { grid, n_w, values }
    }

    pub fn matrix(&self) -> Arc<CMat> {
        let s = spectral(&self.grid);
        if let Some(m) = s.weights.lock().unwrap().get(&self.n_w) {
            return m.clone();
        }
        let vals: Vec<C> = self.values.iter().map(|&v| c(v)).collect();
        let m = Arc::new(linalg::hermitian_part(&fourier_multiplier_matrix(&self.grid, &vals)));
        s.weights.lock().unwrap().insert(self.n_w, m.clone());
        m
    }

    pub fn operator(&self) -> OperatorMatrix {
        OperatorMatrix::with_flags(
            self.grid,
            (*self.matrix()).clone(),
            Flags { hermitian: true, diagonal_in_position: false, diagonal_in_momentum: true },
        )
    }

    /// A * m.
    pub fn apply_right(&self, a: &OperatorMatrix) -> Result<OperatorMatrix> {
        a.grid.check_same(&self.grid)?;
        Ok(OperatorMatrix::with_flags(a.grid, &a.matrix * &*self.matrix(), Flags::default()))
    }
}

/// Schatten p-norm of a dense matrix; p = f64::INFINITY for the operator norm.
pub fn schatten_matrix(m: &CMat, p: f64) -> Result<f64> {
    if p.is_nan() || p < 1.0 {
        return Err(Error::Domain(format!("Schatten exponent p = {p} must be >= 1")));
    }
    if !linalg::is_finite(m) {
        return Err(Error::Input("non-finite matrix entries".into()));
    }
    if p == 2.0 {
        return Ok(linalg::frobenius(m));
    }
    if p == 4.0 {
        let g = &m.adjoint() * m;
        return Ok(linalg::frobenius(&g).sqrt());
    }
    let sv = linalg::singular_values(m)?;
    Ok(lp_of(&sv, p))
}

/// (Σ |v|^p)^(1/p) with overflow-safe scaling.
pub fn lp_of(values: &[f64], p: f64) -> f64 {
    let max = values.iter().fold(0.0f64, |a, &v| a.max(v.abs()));
    if max == 0.0 {
        return 0.0;
    }
    if p.is_infinite() {
        return max;
    }
    let s: f64 = values.iter().map(|v| (v.abs() / max).powf(p)).sum();
    max * s.powf(1.0 / p)
}

pub fn schatten_norm(a: &OperatorMatrix, p: f64) -> Result<f64> {
    if a.flags.hermitian && p != 2.0 && p != 4.0 {
        if p.is_nan() || p < 1.0 {
            return Err(Error::Domain(format!("Schatten exponent p = {p} must be >= 1")));
        }
        let ev = linalg::eigvalsh(&a.matrix)?;
        return Ok(lp_of(&ev, p));
    }
    schatten_matrix(&a.matrix, p)
}

/// h^{d/p} ||A m||_p.
pub fn semiclassical_norm(a: &OperatorMatrix, p: f64, weight: Option<&WeightOperator>) -> Result<f64> {
    let h_factor = if p.is_infinite() { 1.0 } else { a.grid.h().powf(a.grid.d as f64 / p) };
    let s = match weight {
        Some(w) => schatten_matrix(&w.apply_right(a)?.matrix, p)?,
        None => schatten_norm(a, p)?,
    };
    Ok(h_factor * s)
}

/// Dₓ A = (i/ħ)[P, A] along `axis`, i.e. the kernel of [∇, A].
pub fn quantum_grad_x(a: &OperatorMatrix, axis: usize) -> Result<OperatorMatrix> {
    if axis >= a.grid.d {
        return Err(Error::Input(format!("axis {axis} out of range")));
    }
    let s = spectral(&a.grid);
    let comm = linalg::commutator(&s.momentum[axis], &a.matrix);
    let m = linalg::scale(&comm, I / a.grid.hbar);
    let mut flags = Flags::default();
    if a.flags.hermitian {
        flags.hermitian = true;
    }
    Ok(OperatorMatrix::with_flags(a.grid, m, flags))
}

/// Dᵥ A = [x/(iħ), A], kernel (x - y)/(iħ) A(x, y).
pub fn quantum_grad_v(a: &OperatorMatrix, axis: usize) -> Result<OperatorMatrix> {
    if axis >= a.grid.d {
        return Err(Error::Input(format!("axis {axis} out of range")));
    }
    let g = a.grid;
    let xs: Vec<f64> = (0..g.dim()).map(|i| g.position(i, axis)).collect();
    let f = -I / g.hbar;
    let m = faer::Mat::from_fn(g.dim(), g.dim(), |i, j| a.matrix[(i, j)] * f * (xs[i] - xs[j]));
    Ok(OperatorMatrix::with_flags(g, m, Flags { hermitian: a.flags.hermitian, ..Flags::default() }))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct SobolevNorm {
    pub homogeneous: f64,
    pub inhomogeneous: f64,
}

/// All quantum gradients of order 1 (and 2 if requested) of A.
pub fn gradients(a: &OperatorMatrix, order: u32) -> Result<Vec<OperatorMatrix>> {
    if order != 1 && order != 2 {
        return Err(Error::Domain(format!("Sobolev order {order} must be 1 or 2")));
    }
    let d = a.grid.d;
    let mut out = Vec::new();
    let mut gx = Vec::new();
    for j in 0..d {
        let x = quantum_grad_x(a, j)?;
        out.push(quantum_grad_v(a, j)?);
        out.push(x.clone());
        gx.push(x);
    }
    if order == 2 {
        for j in 0..d {
            for k in 0..d {
                out.push(quantum_grad_x(&gx[k], j)?);
                out.push(quantum_grad_v(&quantum_grad_v(a, k)?, j)?);
                out.push(quantum_grad_v(&gx[k], j)?);
            }
        }
    }
    Ok(out)
}

/// Semiclassical Sobolev norms ||A||_{W^{order,p}(m)}; `n_w = None` means no weight.
pub fn sobolev_norm(a: &OperatorMatrix, p: f64, n_w: Option<u32>, order: u32) -> Result<SobolevNorm> {
    let w = n_w.map(|n| WeightOperator::new(a.grid, n));
    let terms: Vec<f64> = gradients(a, order)?
        .iter()
        .map(|g| semiclassical_norm(g, p, w.as_ref()))
        .collect::<Result<_>>()?;
    let base = semiclassical_norm(a, p, w.as_ref())?;
    Ok(combine_sobolev(&terms, base, p))
}

pub(crate) fn combine_sobolev(terms: &[f64], base: f64, p: f64) -> SobolevNorm {
    if p.is_infinite() {
        let hom = terms.iter().cloned().fold(0.0, f64::max);
        return SobolevNorm { homogeneous: hom, inhomogeneous: hom.max(base) };
    }
    let s: f64 = terms.iter().map(|t| t.powf(p)).sum();
    SobolevNorm { homogeneous: s.powf(1.0 / p), inhomogeneous: (s + base.powf(p)).powf(1.0 / p) }
}

/// f(A) for Hermitian A via eigendecomposition. `f` returns None where it
/// is undefined.
pub fn matrix_function(a: &OperatorMatrix, f: impl Fn(f64) -> Option<C>) -> Result<OperatorMatrix> {
    let drift = linalg::hermiticity_drift(&a.matrix);
    if drift > 1e-10 {
        return Err(Error::Domain(format!("matrix_function needs a Hermitian operator (drift {drift:e})")));
    }
    let e = linalg::eigh(&linalg::hermitian_part(&a.matrix))?;
    let mut vals = Vec::with_capacity(e.values.len());
    for &l in &e.values {
        match f(l) {
            Some(v) if v.re.is_finite() && v.im.is_finite() => vals.push(v),
            _ => return Err(Error::Domain(format!("function undefined at eigenvalue {l:e}"))),
        }
    }
    let hermitian = vals.iter().all(|v| v.im == 0.0);
    let left = linalg::mul_diag_right(&e.vectors, &vals);
    let mut m = &left * e.vectors.adjoint();
    if hermitian {
        m = linalg::hermitian_part(&m);
    }
    Ok(OperatorMatrix::with_flags(a.grid, m, Flags { hermitian, ..a.flags }))
}

/// √A for PSD A; eigenvalues down to -1e-10 max|λ| are treated as zero.
pub fn sqrt_psd(a: &OperatorMatrix) -> Result<OperatorMatrix> {
    let ev = linalg::eigvalsh(&linalg::hermitian_part(&a.matrix))?;
    let max = ev.iter().fold(0.0f64, |m, v| m.max(v.abs()));
    let tol = 1e-10 * max;
    matrix_function(a, |l| {
        if l >= 0.0 {
            Some(c(l.sqrt()))
        } else if l >= -tol {
            Some(c(0.0))
        } else {
            None
        }
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_basics() {
        let g = GridSpec::line(8, 4.0, 0.5).unwrap();
        assert_eq!(g.dx(), 0.5);
        assert_eq!(g.axis_positions()[0], -2.0);
        assert!((g.h() - PI).abs() < 1e-15);
        let lat = g.momentum_lattice();
        assert_eq!(lat.len(), 8);
        assert!((lat[0] + 4.0 * g.dp()).abs() < 1e-14);
        assert!(GridSpec::line(6, 1.0, 1.0).is_err());
        assert!(GridSpec::line(8, 1.0, 0.0).is_err());
    }

    #[test]
    fn momentum_matrix_acts_on_plane_waves() {
        let g = GridSpec::line(16, 2.0, 0.3).unwrap();
        let p = OperatorMatrix::momentum(g, 0);
        let k = 3.0;
        let psi: Vec<C> = g
            .axis_positions()
            .iter()
            .map(|x| C::from_polar(1.0, 2.0 * PI * k * x / g.l))
            .collect();
        for i in 0..16 {
            let v: C = (0..16).map(|j| p.matrix[(i, j)] * psi[j]).sum();
            assert!((v - psi[i] * k * g.dp()).norm() < 1e-12);
        }
    }
}
