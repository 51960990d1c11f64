//! Real fields on the (x, ξ) phase-space grid (one space dimension).

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::GridSpec;

#[derive(Clone, Debug)]
pub struct PhaseSpaceField {
    pub grid: GridSpec,
    /// Uniform, ascending momentum nodes.
    pub xi: Vec<f64>,
    /// values[i * n_xi + k] = f(x_i, ξ_k).
    pub values: Vec<f64>,
    /// Set for Wigner transforms, which may be negative.
    pub signed: bool,
}

impl PhaseSpaceField {
    pub fn new(grid: GridSpec, xi: Vec<f64>, values: Vec<f64>, signed: bool) -> Result<Self> {
        grid.require_1d("phase-space fields")?;
        if xi.len() < 2 {
            return Err(Error::Input("momentum grid needs at least two nodes".into()));
        }
        let dxi = xi[1] - xi[0];
        if !(dxi > 0.0) || xi.windows(2).any(|w| ((w[1] - w[0]) - dxi).abs() > 1e-9 * dxi) {
            return Err(Error::Input("momentum grid must be uniform and ascending".into()));
        }
        if values.len() != grid.n * xi.len() {
            return Err(Error::Input(format!(
                "field has {} values, grid needs {}",
                values.len(),
                grid.n * xi.len()
            )));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Input("field has non-finite values".into()));
        }
        Ok(Self { grid, xi, values, signed })
    }

    /// Samples a function on the grid.
    pub fn from_fn(grid: GridSpec, xi: Vec<f64>, f: impl Fn(f64, f64) -> f64) -> Result<Self> {
        let xs = grid.axis_positions();
        let mut values = Vec::with_capacity(xs.len() * xi.len());
        for &x in &xs {
            for &p in &xi {
                values.push(f(x, p));
            }
        }
        Self::new(grid, xi, values, false)
    }

    /// n_xi nodes covering [-xi_max, xi_max).
    pub fn momentum_nodes(n_xi: usize, xi_max: f64) -> Vec<f64> {
        let d = 2.0 * xi_max / n_xi as f64;
        (0..n_xi).map(|k| -xi_max + k as f64 * d).collect()
    }

    pub fn n_xi(&self) -> usize {
        self.xi.len()
    }

    pub fn dxi(&self) -> f64 {
        self.xi[1] - self.xi[0]
    }

    pub fn at(&self, i: usize, k: usize) -> f64 {
        self.values[i * self.n_xi() + k]
    }

    pub fn cell(&self) -> f64 {
        self.grid.dx() * self.dxi()
    }

    pub fn mass(&self) -> f64 {
        self.values.iter().sum::<f64>() * self.cell()
    }

    /// ρ_f(x) = Σ_ξ f dξ.
    pub fn spatial_density(&self) -> Vec<f64> {
        let m = self.n_xi();
        let dxi = self.dxi();
        self.values.chunks(m).map(|row| row.iter().sum::<f64>() * dxi).collect()
    }

    pub fn lp_norm(&self, p: f64) -> f64 {
        if p.is_infinite() {
            return self.values.iter().fold(0.0, |a, v| a.max(v.abs()));
        }
        (self.values.iter().map(|v| v.abs().powf(p)).sum::<f64>() * self.cell()).powf(1.0 / p)
    }

    pub fn min(&self) -> f64 {
        self.values.iter().cloned().fold(f64::INFINITY, f64::min)
    }

    pub fn scaled(&self, s: f64) -> Self {
        let mut out = self.clone();
        out.values.iter_mut().for_each(|v| *v *= s);
        out
    }

    pub fn normalized(&self) -> Result<Self> {
        let m = self.mass();
        if !(m > 0.0) {
            return Err(Error::Input(format!("cannot normalize field of mass {m}")));
        }
        Ok(self.scaled(1.0 / m))
    }

    pub fn column(&self, k: usize) -> Vec<f64> {
        (0..self.grid.n).map(|i| self.at(i, k)).collect()
    }

    fn map_columns(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = self.clone();
        let m = self.n_xi();
        for k in 0..m {
            let col = f(&self.column(k));
            for (i, v) in col.into_iter().enumerate() {
                out.values[i * m + k] = v;
            }
        }
        out
    }

    fn map_rows(&self, f: impl Fn(&[f64]) -> Vec<f64>) -> Self {
        let mut out = self.clone();
        let m = self.n_xi();
        for (dst, src) in out.values.chunks_mut(m).zip(self.values.chunks(m)) {
            dst.copy_from_slice(&f(src));
        }
        out
    }

    /// Periodic spectral ∂ₓ.
    pub fn grad_x(&self) -> Self {
        let l = self.grid.l;
        self.map_columns(|c| fft::derivative(c, l))
    }

    /// Spectral ∂_ξ treating ξ as periodic with period n_xi·dξ.
    pub fn grad_xi_periodic(&self) -> Self {
        let period = self.dxi() * self.n_xi() as f64;
        self.map_rows(|r| fft::derivative(r, period))
    }

    /// Spectral ∂_ξ of a field vanishing at the ξ-box edges.
    pub fn grad_xi_padded(&self) -> Self {
        let d = self.dxi();
        self.map_rows(|r| fft::derivative_padded(r, d))
    }

    pub fn check_same_lattice(&self, other: &PhaseSpaceField) -> Result<()> {
        self.grid.check_same(&other.grid)?;
        if self.xi.len() != other.xi.len()
            || (self.xi[0] - other.xi[0]).abs() > 1e-12 * (1.0 + self.xi[0].abs())
            || (self.dxi() - other.dxi()).abs() > 1e-12 * self.dxi()
        {
            return Err(Error::GridMismatch("phase-space momentum grids differ".into()));
        }
        Ok(())
    }

    pub fn max_abs_diff(&self, other: &PhaseSpaceField) -> Result<f64> {
        self.check_same_lattice(other)?;
        Ok(self.values.iter().zip(&other.values).fold(0.0, |a, (x, y)| a.max((x - y).abs())))
    }

    /// L² distance on the shared lattice.
    pub fn l2_distance(&self, other: &PhaseSpaceField) -> Result<f64> {
        self.check_same_lattice(other)?;
        let s: f64 = self.values.iter().zip(&other.values).map(|(x, y)| (x - y).powi(2)).sum();
        Ok((s * self.cell()).sqrt())
    }
}
