//! Wigner transform, Weyl quantization, coherent states and Töplitz
//! quantization on a periodic line.
//!
//! Grid convention (n divisible by 4): the ξ lattice is the momentum lattice
//! ξ_m = 2πħ m / L, m = -n/2..n/2-1, ascending. The antidiagonal offset
//! y = s·dx runs over s = -n/2..n/2-1. Even s reads ρ(x + y/2, x - y/2)
//! from the grid; odd s needs half-node positions, which are read from the
//! half-step translate ρ̃ = T ρ T* (T shifts by dx/2, applied as a phase
//! ramp in momentum). The s = -n/2 column symmetrizes the two pairs at
//! distance L/2. With this convention Weyl ∘ Wigner is the identity on
//! operators whose momentum kernel vanishes for |k| >= n/4.

use crate::error::{Error, Result};
use crate::fft;
use crate::grid::{spectral, DensityOperator, Flags, GridSpec, OperatorMatrix};
use crate::linalg::{self, c, CMat};
use crate::phase::PhaseSpaceField;
use faer::Mat;
use num_complex::Complex64 as C;
use std::f64::consts::PI;

fn check_grid(grid: &GridSpec) -> Result<()> {
    grid.require_1d("the Wigner transform")?;
    if grid.n % 4 != 0 {
        return Err(Error::Input("Wigner grid needs n divisible by 4".into()));
    }
    Ok(())
}

/// The ξ lattice shared by Wigner transforms and Weyl symbols.
pub fn wigner_xi(grid: &GridSpec) -> Vec<f64> {
    grid.momentum_lattice()
}

fn tau(k: usize, n: usize) -> C {
    C::from_polar(1.0, -PI * fft::label(k, n) as f64 / n as f64)
}

/// Kernel of T A T* from the kernel of A.
fn half_shift(kernel: &CMat, grid: &GridSpec) -> CMat {
    let s = spectral(grid);
    let n = grid.n;
    let mom = &(&s.f * kernel) * &s.f_adj;
    let shifted = Mat::from_fn(n, n, |a, b| mom[(a, b)] * tau(a, n) * tau(b, n).conj());
    &(&s.f_adj * &shifted) * &s.f
}

/// f(x_i, ξ_m) for any operator; the real part is returned (exact for
/// Hermitian input).
pub fn wigner_of(op: &OperatorMatrix) -> Result<PhaseSpaceField> {
    let grid = op.grid;
    check_grid(&grid)?;
    let n = grid.n;
    let dx = grid.dx();
    let kernel = op.kernel();
    let shifted = half_shift(&kernel, &grid);
    let q = n / 4;
    let mut values = vec![0.0; n * n];
    let mut buf = vec![c(0.0); n];
    for i in 0..n {
        for (idx, slot) in buf.iter_mut().enumerate() {
            let s = fft::label(idx, n);
            *slot = if s == -(n as i64) / 2 {
                0.5 * (kernel[((i + n - q) % n, (i + q) % n)] + kernel[((i + q) % n, (i + n - q) % n)])
            } else if s % 2 == 0 {
                let a = (i as i64 + s / 2).rem_euclid(n as i64) as usize;
                let b = (i as i64 - s / 2).rem_euclid(n as i64) as usize;
                kernel[(a, b)]
            } else {
                let a = (i as i64 + (s + 1) / 2).rem_euclid(n as i64) as usize;
                let b = (i as i64 - (s - 1) / 2).rem_euclid(n as i64) as usize;
                shifted[(a, b)]
            };
        }
        fft::fft(&mut buf);
        for k in 0..n {
            let m = k as i64 - n as i64 / 2;
            values[i * n + k] = dx * buf[fft::index_of(m, n)].re;
        }
    }
    PhaseSpaceField::new(grid, wigner_xi(&grid), values, true)
}

pub fn wigner_transform(rho: &DensityOperator) -> Result<PhaseSpaceField> {
    wigner_of(rho.op())
}

/// Fraction of Σg² carried by |ξ| in the top 10% of the lattice.
pub fn top_band_fraction(g: &PhaseSpaceField) -> f64 {
    let n = g.n_xi();
    let cut = (0.45 * n as f64).ceil() as i64;
    let mut top = 0.0;
    let mut all = 0.0;
    for i in 0..g.grid.n {
        for k in 0..n {
            let v = g.at(i, k).powi(2);
            all += v;
            if (k as i64 - n as i64 / 2).abs() >= cut {
                top += v;
            }
        }
    }
    if all == 0.0 {
        0.0
    } else {
        top / all
    }
}

/// Inverse of `wigner_of` on the band-limited set. A constant symbol c maps
/// to c times the identity, so Tr = (1/h)∬g.
pub fn weyl_quantize(g: &PhaseSpaceField) -> Result<OperatorMatrix> {
    let grid = g.grid;
    check_grid(&grid)?;
    let n = grid.n;
    let xi = wigner_xi(&grid);
    if g.n_xi() != n || (g.xi[0] - xi[0]).abs() > 1e-9 * xi[0].abs() || (g.dxi() - grid.dp()).abs() > 1e-9 * grid.dp() {
        return Err(Error::GridMismatch("Weyl symbols must live on the Wigner lattice".into()));
    }
    let frac = top_band_fraction(g);
    if frac > 1e-10 {
        log::warn!("Weyl symbol has {frac:.2e} of its energy in the top 10% of ξ modes; aliasing likely");
    }
    let dx = grid.dx();
    let q = n / 4;
    // G_s(i) indexed [i][s mod n]
    let mut gs = vec![vec![c(0.0); n]; n];
    for (i, row) in gs.iter_mut().enumerate() {
        for k in 0..n {
            let m = k as i64 - n as i64 / 2;
            row[fft::index_of(m, n)] = c(g.at(i, k));
        }
        fft::ifft(row);
        for z in row.iter_mut() {
            *z /= dx;
        }
    }
    let mut even = linalg::zeros(n, n);
    let mut odd = linalg::zeros(n, n);
    let nyq = n / 2;
    for i in 0..n {
        for idx in 0..n {
            let s = fft::label(idx, n);
            let v = gs[i][idx];
            if s == -(n as i64) / 2 {
                let avg = 0.5 * (v + gs[(i + nyq) % n][idx]);
                even[((i + n - q) % n, (i + q) % n)] = avg;
            } else if s % 2 == 0 {
                let a = (i as i64 + s / 2).rem_euclid(n as i64) as usize;
                let b = (i as i64 - s / 2).rem_euclid(n as i64) as usize;
                even[(a, b)] = v;
            } else {
                let a = (i as i64 + (s + 1) / 2).rem_euclid(n as i64) as usize;
                let b = (i as i64 - (s - 1) / 2).rem_euclid(n as i64) as usize;
                odd[(a, b)] = v;
            }
        }
    }
    let sp = spectral(&grid);
    let e_hat = &(&sp.f * &even) * &sp.f_adj;
    let o_hat = &(&sp.f * &odd) * &sp.f_adj;
    let mut mom = linalg::zeros(n, n);
    let rank = |k1: usize, k2: usize| {
        let l1 = fft::label(k1, n).abs();
        let l2 = fft::label(k2, n).abs();
        (l1.max(l2), l1 + l2)
    };
    for k1 in 0..n / 2 {
        for k2 in 0..n {
            let b1 = k1 + nyq;
            let b2 = (k2 + nyq) % n;
            let phi_a = tau(k1, n) * tau(k2, n).conj();
            let phi_b = tau(b1, n) * tau(b2, n).conj();
            let e = e_hat[(k1, k2)];
            let o = o_hat[(k1, k2)];
            let denom = phi_a + phi_b;
            let (ca, cb) = if denom.norm() > 1e-8 {
                let ca = 2.0 * (phi_b * e + o) / denom;
                (ca, 2.0 * e - ca)
            } else {
                // only the sum of the pair is visible; give it to the lower mode
                let (ra, rb) = (rank(k1, k2), rank(b1, b2));
                if ra < rb {
                    (2.0 * e, c(0.0))
                } else if rb < ra {
                    (c(0.0), 2.0 * e)
                } else {
                    (e, e)
                }
            };
            mom[(k1, k2)] = ca;
            mom[(b1, b2)] = cb;
        }
    }
    let kernel = &(&sp.f_adj * &mom) * &sp.f;
    let m = linalg::hermitian_part(&linalg::scale_real(&kernel, dx));
    Ok(OperatorMatrix::with_flags(grid, m, Flags { hermitian: true, ..Flags::default() }))
}

/// Periodicized coherent states φ_{x,ξ}(y) = h^{-1/4} φ((y - x)/√h) e^{i(y - x)ξ/ħ}
/// with φ(y) = e^{-π y²/2}, normalized on the grid.
#[derive(Clone, Debug)]
pub struct CoherentFrame {
    pub grid: GridSpec,
    /// √h.
    pub width: f64,
    /// Images summed on each side for periodicization.
    pub images: i32,
}

impl CoherentFrame {
    pub fn new(grid: GridSpec) -> Result<Self> {
        grid.require_1d("coherent states")?;
        let width = grid.h().sqrt();
        if width >= grid.l / 4.0 {
            return Err(Error::Input(format!(
                "coherent width √h = {width} is not resolved by box L = {}",
                grid.l
            )));
        }
        Ok(Self { grid, width, images: 2 })
    }

    /// h^{-1/4} e^{-π r²/(2h)}.
    pub fn envelope(&self, r: f64) -> f64 {
        let h = self.grid.h();
        h.powf(-0.25) * (-PI * r * r / (2.0 * h)).exp()
    }

    pub fn state(&self, x0: f64, xi0: f64) -> Vec<C> {
        let g = &self.grid;
        let mut psi: Vec<C> = g
            .axis_positions()
            .iter()
            .map(|&y| {
                (-self.images..=self.images)
                    .map(|k| {
                        let r = y - x0 + k as f64 * g.l;
                        C::from_polar(self.envelope(r), r * xi0 / g.hbar)
                    })
                    .sum()
            })
            .collect();
        let norm = (g.dx() * psi.iter().map(|z| z.norm_sqr()).sum::<f64>()).sqrt();
        psi.iter_mut().for_each(|z| *z /= norm);
        psi
    }
}

pub fn coherent_state(x0: f64, xi0: f64, grid: &GridSpec) -> Result<Vec<C>> {
    Ok(CoherentFrame::new(*grid)?.state(x0, xi0))
}

/// |ψ⟩⟨ψ| for a grid vector with dx Σ|ψ|² = 1.
pub fn projector(grid: GridSpec, psi: &[C]) -> Result<OperatorMatrix> {
    if psi.len() != grid.dim() {
        return Err(Error::Input("state length does not match grid".into()));
    }
    let dx = grid.cell();
    let m = Mat::from_fn(psi.len(), psi.len(), |i, j| psi[i] * psi[j].conj() * dx);
    Ok(OperatorMatrix::with_flags(grid, m, Flags { hermitian: true, ..Flags::default() }))
}

/// Analytic Wigner function of the unit coherent projector at (x0, ξ0):
/// 2 exp(-(x-x0)²/(2ħ) - 2(ξ-ξ0)²/ħ), with minimal-image x distance.
pub fn coherent_wigner(grid: &GridSpec, x0: f64, xi0: f64, x: f64, xi: f64) -> f64 {
    let hb = grid.hbar;
    let r = wrap(x - x0, grid.l);
    2.0 * (-(r * r) / (2.0 * hb) - 2.0 * (xi - xi0).powi(2) / hb).exp()
}

pub(crate) fn wrap(r: f64, l: f64) -> f64 {
    r - l * (r / l).round()
}

/// h^{-d} ∬ g(x,ξ) |φ_{x,ξ}⟩⟨φ_{x,ξ}| dx dξ by quadrature over the nodes of g,
/// renormalized to h Tr = 1. The x nodes of g are the grid nodes; its ξ grid
/// may be finer than the Wigner lattice.
pub fn toeplitz_quantize(g: &PhaseSpaceField) -> Result<DensityOperator> {
    let grid = g.grid;
    let frame = CoherentFrame::new(grid)?;
    let max = g.lp_norm(f64::INFINITY);
    if g.min() < -1e-14 * max {
        return Err(Error::Input(format!("Töplitz symbol is negative (min {:e})", g.min())));
    }
    let n = grid.n;
    let nx = g.n_xi();
    let dx = grid.dx();
    let hb = grid.hbar;
    // Ĝ[i][Δ + n - 1] = Σ_m g(x_i, ξ_m) e^{iΔ dx ξ_m/ħ} dξ, Δ = -(n-1)..n-1
    let phase = Mat::from_fn(nx, 2 * n - 1, |m, d| {
        let delta = d as f64 - (n as f64 - 1.0);
        C::from_polar(g.dxi(), delta * dx * g.xi[m] / hb)
    });
    let gm = Mat::from_fn(n, nx, |i, m| c(g.at(i, m).max(0.0)));
    let ghat = &gm * &phase;
    let env: Vec<f64> = (0..n)
        .map(|t| {
            let r = fft::label(t, n) as f64 * dx;
            frame.envelope(r)
        })
        .collect();
    let pref = dx / grid.h();
    let mut kernel = linalg::zeros(n, n);
    for i in 0..n {
        for j1 in 0..n {
            let t1 = (j1 + n - i) % n;
            let r1 = fft::label(t1, n);
            let w1 = env[t1];
            if w1 == 0.0 {
                continue;
            }
            for j2 in 0..n {
                let t2 = (j2 + n - i) % n;
                let r2 = fft::label(t2, n);
                let idx = (r1 - r2 + n as i64 - 1) as usize;
                kernel[(j1, j2)] += ghat[(i, idx)] * (pref * w1 * env[t2]);
            }
        }
    }
    let m = linalg::hermitian_part(&linalg::scale_real(&kernel, dx));
    DensityOperator::normalized(OperatorMatrix::with_flags(grid, m, Flags { hermitian: true, ..Flags::default() }))
}

/// Gaussian symbol normalized to unit mass:
/// exp(-(x-x0)²/(2σx²) - (ξ-ξ0)²/(2σξ²)) / (2π σx σξ), minimal image in x.
pub fn gaussian_symbol(grid: GridSpec, xi: Vec<f64>, x0: f64, xi0: f64, sx: f64, sxi: f64) -> Result<PhaseSpaceField> {
    let l = grid.l;
    PhaseSpaceField::from_fn(grid, xi, |x, p| {
        let r = wrap(x - x0, l);
        (-(r * r) / (2.0 * sx * sx) - (p - xi0).powi(2) / (2.0 * sxi * sxi)).exp() / (2.0 * PI * sx * sxi)
    })
}

/// ξ nodes fine enough for Töplitz quadrature of symbols supported in
/// |ξ| < xi_max: spacing at most h/(2L).
pub fn toeplitz_xi(grid: &GridSpec, xi_max: f64) -> Vec<f64> {
    let dmax = grid.h() / (2.0 * grid.l);
    let mut n_xi = ((2.0 * xi_max / dmax).ceil() as usize).max(8);
    n_xi += n_xi % 2;
    PhaseSpaceField::momentum_nodes(n_xi, xi_max)
}
