//! Pair potentials κ|x|^-a with Gaussian-superposition cutoff, mean-field
//! potential, force, exchange operator and the Hartree(-Fock) Hamiltonian.

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{DensityOperator, Flags, GridSpec, OperatorMatrix};
use crate::linalg::{self, c};
use num_complex::Complex64 as C;
use statrs::function::gamma::{gamma, gamma_lr};
use std::f64::consts::PI;

#[derive(Clone, Debug)]
pub struct KernelSpec {
    pub grid: GridSpec,
    pub a: f64,
    pub kappa: f64,
    pub cutoff: f64,
    /// K at every flat displacement index (minimal image per axis).
    pub row: Vec<f64>,
    /// Unnormalized FFT of `row`.
    pub fourier: Vec<C>,
}

/// ω_a = 2π^{a/2}/Γ(a/2): with it, K_R(0) = κ ω_a /(a R^a).
pub fn omega(a: f64) -> f64 {
    2.0 * PI.powf(a / 2.0) / gamma(a / 2.0)
}

/// Cutoff kernel at distance r:
/// κ π^{a/2}/Γ(a/2) ∫_0^{R^-2} s^{a/2-1} e^{-π r² s} ds = κ r^-a P(a/2, π r²/R²).
pub fn cutoff_value(a: f64, kappa: f64, r: f64, cutoff: f64) -> f64 {
    if cutoff == 0.0 {
        return kappa * r.powf(-a);
    }
    if r == 0.0 {
        return kappa * omega(a) / (a * cutoff.powf(a));
    }
    let z = PI * r * r / (cutoff * cutoff);
    // below this the series form avoids r^-a * (tiny) cancellation
    if z < 1e-8 {
        return kappa * omega(a) / (a * cutoff.powf(a)) * (1.0 - a / (a + 2.0) * z);
    }
    kappa * r.powf(-a) * gamma_lr(a / 2.0, z)
}

impl KernelSpec {
    pub fn build(a: f64, kappa: f64, cutoff: f64, grid: GridSpec) -> Result<Self> {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::Input(format!("exponent a = {a} must be positive")));
        }
        if !kappa.is_finite() {
            return Err(Error::Input("coupling must be finite".into()));
        }
        if !(cutoff.is_finite() && cutoff >= 0.0) {
            return Err(Error::Input(format!("cutoff R = {cutoff} must be >= 0")));
        }
        if cutoff == 0.0 && a >= grid.d as f64 {
            return Err(Error::Domain(format!(
                "|x|^-{a} is not locally integrable in d = {} without a cutoff",
                grid.d
            )));
        }
        let n = grid.n;
        let dx = grid.dx();
        let dim = grid.dim();
        let row: Vec<f64> = (0..dim)
            .map(|k| {
                let r2: f64 = (0..grid.d)
                    .map(|ax| {
                        let i = (k / n.pow(ax as u32)) % n;
                        let m = if i <= n / 2 { i as f64 } else { i as f64 - n as f64 };
                        (m * dx).powi(2)
                    })
                    .sum();
                let r = r2.sqrt();
                if r == 0.0 {
                    // the singular node takes the cutoff value at R = dx
                    let reff = if cutoff > 0.0 { cutoff } else { dx };
                    cutoff_value(a, kappa, 0.0, reff)
                } else {
                    cutoff_value(a, kappa, r, cutoff)
                }
            })
            .collect();
        let mut fourier: Vec<C> = row.iter().map(|&v| c(v)).collect();
        fft::fft_nd(&mut fourier, n, grid.d, false);
        Ok(Self { grid, a, kappa, cutoff, row, fourier })
    }

    /// 𝔟_d = d/(a+1).
    pub fn b(&self) -> f64 {
        self.grid.d as f64 / (self.a + 1.0)
    }

    /// Flat displacement index of node i relative to node j.
    fn disp(&self, i: usize, j: usize) -> usize {
        let n = self.grid.n;
        let mut k = 0;
        let mut stride = 1;
        for _ in 0..self.grid.d {
            let a = (i / stride) % n;
            let b = (j / stride) % n;
            k += ((a + n - b) % n) * stride;
            stride *= n;
        }
        k
    }

    /// K(x_i - x_j).
    pub fn between(&self, i: usize, j: usize) -> f64 {
        self.row[self.disp(i, j)]
    }

    /// Dense samples K(x_i - x_j).
    pub fn samples(&self) -> Vec<Vec<f64>> {
        let dim = self.grid.dim();
        (0..dim).map(|i| (0..dim).map(|j| self.between(i, j)).collect()).collect()
    }

    /// Radial profile `(r, K_R(r))` along axis 0 for 0 <= r <= L/2.
    pub fn profile(&self) -> Vec<(f64, f64)> {
        (0..=self.grid.n / 2).map(|i| (i as f64 * self.grid.dx(), self.row[i])).collect()
    }

    pub fn profile_csv(&self) -> String {
        let mut s = String::from("r,K_R(r)\n");
        for (r, k) in self.profile() {
            s.push_str(&format!("{r:.17e},{k:.17e}\n"));
        }
        s
    }
}

/// V = K ∗ ρ via FFT with quadrature weight dx^d.
pub fn mean_field_potential(rho_diag: &[f64], kernel: &KernelSpec) -> Result<Vec<f64>> {
    let g = &kernel.grid;
    if rho_diag.len() != g.dim() {
        return Err(Error::GridMismatch("density length does not match kernel grid".into()));
    }
    if rho_diag.iter().any(|v| !v.is_finite()) {
        return Err(Error::Input("density has non-finite values".into()));
    }
    let mut buf: Vec<C> = rho_diag.iter().map(|&v| c(v * g.cell())).collect();
    fft::fft_nd(&mut buf, g.n, g.d, false);
    for (z, k) in buf.iter_mut().zip(&kernel.fourier) {
        *z *= k;
    }
    fft::fft_nd(&mut buf, g.n, g.d, true);
    Ok(buf.iter().map(|z| z.re).collect())
}

/// E = -∇V, one vector of samples per axis.
pub fn force_field(v: &[f64], grid: &GridSpec) -> Result<Vec<Vec<f64>>> {
    if v.len() != grid.dim() {
        return Err(Error::GridMismatch("field length does not match grid".into()));
    }
    let n = grid.n;
    let mut out = Vec::with_capacity(grid.d);
    for axis in 0..grid.d {
        let mut buf: Vec<C> = v.iter().map(|&x| c(x)).collect();
        let stride = n.pow(axis as u32);
        for start in 0..buf.len() {
            if (start / stride) % n != 0 {
                continue;
            }
            let line: Vec<f64> = (0..n).map(|k| buf[start + k * stride].re).collect();
            let d = fft::derivative(&line, grid.l);
            for (k, dv) in d.into_iter().enumerate() {
                buf[start + k * stride] = c(-dv);
            }
        }
        out.push(buf.into_iter().map(|z| z.re).collect());
    }
    Ok(out)
}

/// 𝖷_A with kernel K(x-y) A(x,y), for any operator A.
pub fn exchange_of(a: &OperatorMatrix, kernel: &KernelSpec) -> Result<OperatorMatrix> {
    a.grid.check_same(&kernel.grid)?;
    let dim = a.grid.dim();
    let m = faer::Mat::from_fn(dim, dim, |i, j| a.matrix[(i, j)] * kernel.between(i, j));
    Ok(OperatorMatrix::with_flags(
        a.grid,
        m,
        Flags {
            hermitian: a.flags.hermitian,
            diagonal_in_position: a.flags.diagonal_in_position,
            diagonal_in_momentum: false,
        },
    ))
}

pub fn exchange_operator(rho: &DensityOperator, kernel: &KernelSpec) -> Result<OperatorMatrix> {
    exchange_of(rho.op(), kernel)
}

/// H = p²/2 + V_ρ - h^d 𝖷_ρ (exchange omitted when the flag is off).
pub fn hf_hamiltonian(rho: &DensityOperator, kernel: &KernelSpec, include_exchange: bool) -> Result<OperatorMatrix> {
    hamiltonian_of(rho.op(), kernel, include_exchange)
}

pub(crate) fn hamiltonian_of(rho: &OperatorMatrix, kernel: &KernelSpec, include_exchange: bool) -> Result<OperatorMatrix> {
    let g = rho.grid;
    g.check_same(&kernel.grid)?;
    let dim = g.dim();
    let dens_scale = g.h_d() / g.cell();
    let dens: Vec<f64> = (0..dim).map(|i| rho.matrix[(i, i)].re * dens_scale).collect();
    let v = mean_field_potential(&dens, kernel)?;
    let mut m = OperatorMatrix::kinetic(g).matrix;
    for i in 0..dim {
        m[(i, i)] += c(v[i]);
    }
    if include_exchange {
        let hd = g.h_d();
        for j in 0..dim {
            for i in 0..dim {
                m[(i, j)] -= rho.matrix[(i, j)] * (hd * kernel.between(i, j));
            }
        }
    }
    let m = linalg::hermitian_part(&m);
    Ok(OperatorMatrix::with_flags(g, m, Flags { hermitian: true, ..Flags::default() }))
}

/// Kinetic, direct and exchange parts of the HF energy.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct EnergyParts {
    pub kinetic: f64,
    pub direct: f64,
    pub exchange: f64,
}

impl EnergyParts {
    pub fn total(&self) -> f64 {
        self.kinetic + self.direct + self.exchange
    }
}

pub fn energy_parts(rho: &OperatorMatrix, kernel: &KernelSpec, include_exchange: bool) -> Result<EnergyParts> {
    let g = rho.grid;
    g.check_same(&kernel.grid)?;
    let dim = g.dim();
    let hd = g.h_d();
    let t = OperatorMatrix::kinetic(g);
    // Tr(T ρ) without forming the product
    let mut kin = 0.0;
    for j in 0..dim {
        for i in 0..dim {
            kin += (t.matrix[(i, j)] * rho.matrix[(j, i)]).re;
        }
    }
    let diag: Vec<f64> = (0..dim).map(|i| rho.matrix[(i, i)].re).collect();
    let dens: Vec<f64> = diag.iter().map(|v| v * hd / g.cell()).collect();
    let v = mean_field_potential(&dens, kernel)?;
    // ½ h^{2d} Σ K M_ii M_jj = ½ h^d Σ_i V_i M_ii
    let direct = 0.5 * hd * v.iter().zip(&diag).map(|(a, b)| a * b).sum::<f64>();
    let mut exchange = 0.0;
    if include_exchange {
        for j in 0..dim {
            for i in 0..dim {
                exchange += kernel.between(i, j) * rho.matrix[(i, j)].norm_sqr();
            }
        }
        exchange *= -0.5 * hd * hd;
    }
    Ok(EnergyParts { kinetic: hd * kin, direct, exchange })
}

pub fn hf_energy(rho: &DensityOperator, kernel: &KernelSpec, include_exchange: bool) -> Result<f64> {
    Ok(energy_parts(rho.op(), kernel, include_exchange)?.total())
}
