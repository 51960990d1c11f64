//! Randomized checks of explicit-constant operator inequalities.
//!
//! Every trial draws from its own ChaCha stream, seeded from the suite seed,
//! the check name and the trial index, so any single failure can be replayed
//! from the reported seed.

use crate::error::{Error, Result};
use crate::fock;
use crate::grid::{self, GridSpec, OperatorMatrix, WeightOperator};
use crate::linalg::{self, c, CMat};
use crate::potential::{self, KernelSpec};
use crate::wigner;
use faer::Mat;
use num_complex::Complex64 as C;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use std::collections::BTreeMap;
use std::f64::consts::PI;

pub type Rand = ChaCha8Rng;

/// Relative slack on dense matrix inequalities.
pub const MATRIX_SLACK: f64 = 1e-12;
/// Relative slack on grid inequalities.
pub const GRID_SLACK: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Ensemble {
    GueHermitian,
    PsdWishart,
    GridOperator,
    Separable,
}

/// Constants asserted by the checks. Changing one is how the mutation
/// self-test injects a wrong bound.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Constants {
    pub unmixing: f64,
    pub unmixing_psd: f64,
    pub ad_base: f64,
    pub diag_trace: f64,
}

impl Default for Constants {
    fn default() -> Self {
        Self { unmixing: 2.0, unmixing_psd: 1.0, ad_base: 2.0, diag_trace: 2.0 }
    }
}

#[derive(Clone, Debug)]
pub struct InstanceGenerator {
    pub seed: u64,
    pub min_size: usize,
    pub max_size: usize,
    pub constants: Constants,
}

fn fnv1a(s: &str) -> u64 {
    let mut h: u64 = 0xcbf29ce484222325;
    for b in s.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x100000001b3);
    }
    h
}

fn splitmix(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9e3779b97f4a7c15);
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58476d1ce4e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d049bb133111eb);
    z ^ (z >> 31)
}

impl InstanceGenerator {
    pub fn new(seed: u64) -> Self {
        Self { seed, min_size: 2, max_size: 16, constants: Constants::default() }
    }

    pub fn with_sizes(mut self, min: usize, max: usize) -> Result<Self> {
        if min == 0 || min > max {
            return Err(Error::Input(format!("bad size range {min}..={max}")));
        }
        self.min_size = min;
        self.max_size = max;
        Ok(self)
    }

    pub fn trial_seed(&self, check: &str, trial: u64) -> u64 {
        splitmix(self.seed ^ splitmix(fnv1a(check) ^ splitmix(trial)))
    }

    pub fn rng(seed: u64) -> Rand {
        Rand::seed_from_u64(seed)
    }

    /// Draws one instance of the given ensemble (size = matrix size, or
    /// grid points for the grid ensembles).
    pub fn instance(&self, rng: &mut Rand, ensemble: Ensemble, size: usize) -> Result<CMat> {
        match ensemble {
            Ensemble::GueHermitian => Ok(gue(rng, size)),
            Ensemble::PsdWishart => Ok(wishart(rng, size)),
            Ensemble::GridOperator => {
                let g = GridSpec::line(size.next_power_of_two().max(4), 2.0 * PI, 0.125)?;
                Ok(grid_operator(rng, &g, false).matrix)
            }
            Ensemble::Separable => {
                let g = GridSpec::line(size.next_power_of_two().max(4), 2.0 * PI, 0.125)?;
                let f = trig_poly(rng, g.n, 3);
                let gv = trig_poly(rng, g.n, 3);
                let fx = OperatorMatrix::multiplication(g, &f.iter().map(|&v| c(v)).collect::<Vec<_>>())?;
                let gp = OperatorMatrix::fourier_multiplier(g, &gv.iter().map(|&v| c(v)).collect::<Vec<_>>())?;
                Ok(fx.compose(&gp)?.matrix)
            }
        }
    }
}

fn cnormal(rng: &mut Rand) -> C {
    C::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
}

/// GUE-distributed Hermitian matrix.
pub fn gue(rng: &mut Rand, n: usize) -> CMat {
    let x = Mat::from_fn(n, n, |_, _| cnormal(rng));
    let m = linalg::scale_real(&(&x + x.adjoint()), 0.5);
    linalg::hermitian_part(&m)
}

/// X X* / n with Gaussian X.
/// U diag(λ) U* with U the eigenbasis of a GUE draw and λ uniform on [0, 1].
pub fn random_one_pdm(rng: &mut Rand, m: usize) -> Result<CMat> {
    let u = linalg::eigh(&gue(rng, m))?.vectors;
    let lam: Vec<f64> = (0..m).map(|_| rng.random::<f64>()).collect();
    Ok(linalg::hermitian_part(&(&linalg::mul_diag_right(&u, &lam.iter().map(|&l| c(l)).collect::<Vec<_>>()) * u.adjoint())))
}

pub fn wishart(rng: &mut Rand, n: usize) -> CMat {
    let x = Mat::from_fn(n, n, |_, _| cnormal(rng));
    linalg::hermitian_part(&linalg::scale_real(&(&x * x.adjoint()), 1.0 / n as f64))
}

/// A, B = V diag V* sharing eigenvectors.
fn commuting_pair(rng: &mut Rand, n: usize, psd_a: bool) -> Result<(CMat, CMat)> {
    let v = linalg::eigh(&gue(rng, n))?.vectors;
    let da: Vec<C> = (0..n)
        .map(|_| {
            let x: f64 = rng.sample(StandardNormal);
            c(if psd_a { x.abs() } else { x })
        })
        .collect();
    let db: Vec<C> = (0..n).map(|_| c(rng.sample(StandardNormal))).collect();
    let a = &linalg::mul_diag_right(&v, &da) * v.adjoint();
    let b = &linalg::mul_diag_right(&v, &db) * v.adjoint();
    Ok((linalg::hermitian_part(&a), linalg::hermitian_part(&b)))
}

/// Real trigonometric polynomial of degree `deg` sampled at n points.
pub fn trig_poly(rng: &mut Rand, n: usize, deg: usize) -> Vec<f64> {
    let coef: Vec<(f64, f64)> = (0..=deg)
        .map(|k| {
            let s = 1.0 / (1.0 + k as f64 * k as f64);
            (s * rng.sample::<f64, _>(StandardNormal), s * rng.sample::<f64, _>(StandardNormal))
        })
        .collect();
    (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            coef.iter().enumerate().map(|(k, (a, b))| a * (k as f64 * t).cos() + b * (k as f64 * t).sin()).sum()
        })
        .collect()
}

/// Band-limited random vector with modes |k| <= n/8.
fn smooth_vector(rng: &mut Rand, n: usize) -> Vec<C> {
    let kmax = (n / 8).max(1) as i64;
    let coef: Vec<C> = (-kmax..=kmax).map(|_| cnormal(rng)).collect();
    (0..n)
        .map(|i| {
            let t = 2.0 * PI * i as f64 / n as f64;
            coef.iter()
                .enumerate()
                .map(|(j, a)| a * C::from_polar(1.0, (j as i64 - kmax) as f64 * t))
                .sum()
        })
        .collect()
}

/// Random smooth Hermitian (or PSD) grid operator Σ c_j |ψ_j><ψ_j|.
pub fn grid_operator(rng: &mut Rand, g: &GridSpec, psd: bool) -> OperatorMatrix {
    let n = g.dim();
    let mut m = linalg::zeros(n, n);
    let terms = rng.random_range(1..=4);
    for _ in 0..terms {
        let psi = smooth_vector(rng, n);
        let norm: f64 = psi.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let w: f64 = if psd { rng.random_range(0.1..1.0) } else { rng.sample(StandardNormal) };
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += psi[i] * psi[j].conj() * (w / (norm * norm));
            }
        }
    }
    OperatorMatrix::new(*g, linalg::hermitian_part(&m)).expect("finite by construction")
}

/// Convex mixture of coherent projectors, normalized to ‖ρ‖_ℒ¹ = 1.
pub fn coherent_mixture(rng: &mut Rand, g: &GridSpec, terms: usize, xi_max: f64) -> Result<OperatorMatrix> {
    let frame = wigner::CoherentFrame::new(*g)?;
    let n = g.dim();
    let mut m = linalg::zeros(n, n);
    for _ in 0..terms {
        let x0 = rng.random_range(-g.l / 2.0..g.l / 2.0);
        let xi0 = rng.random_range(-xi_max..xi_max);
        let w = rng.random_range(0.1..1.0);
        let psi = frame.state(x0, xi0);
        for i in 0..n {
            for j in 0..n {
                m[(i, j)] += psi[i] * psi[j].conj() * w;
            }
        }
    }
    let tr = linalg::trace(&m).re * g.h_d();
    Ok(OperatorMatrix::new(*g, linalg::hermitian_part(&linalg::scale_real(&m, 1.0 / tr)))?)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ViolationReport {
    pub check: String,
    pub trials: usize,
    pub violations: usize,
    /// min over samples of (rhs - lhs) / max(|lhs|, |rhs|); negative on violation.
    pub worst_margin: f64,
    pub worst_seed: u64,
    /// Smallest size at which a violating seed still fails.
    pub shrunk_size: Option<usize>,
}

impl ViolationReport {
    pub fn passed(&self) -> bool {
        self.violations == 0
    }

    pub fn csv_header() -> &'static str {
        "check,trials,violations,worst_margin,worst_seed"
    }

    pub fn csv_row(&self) -> String {
        format!("{},{},{},{:e},{}", self.check, self.trials, self.violations, self.worst_margin, self.worst_seed)
    }
}

/// One (lhs, rhs) pair of an inequality lhs <= rhs.
pub type Sample = (f64, f64);

fn relative_margin(lhs: f64, rhs: f64) -> f64 {
    let scale = lhs.abs().max(rhs.abs());
    if scale == 0.0 {
        0.0
    } else {
        (rhs - lhs) / scale
    }
}

fn violates(samples: &[Sample], slack: f64) -> bool {
    samples.iter().any(|&(l, r)| !(l.is_finite() && r.is_finite()) || relative_margin(l, r) < -slack)
}

/// Runs `trial(rng, size)` for each trial and aggregates the samples.
pub fn drive(
    name: &str,
    gen: &InstanceGenerator,
    trials: usize,
    slack: f64,
    sizes: (usize, usize),
    trial: impl Fn(&mut Rand, usize) -> Result<Vec<Sample>>,
) -> Result<ViolationReport> {
    let mut rep = ViolationReport {
        check: name.to_string(),
        trials,
        violations: 0,
        worst_margin: f64::INFINITY,
        worst_seed: gen.trial_seed(name, 0),
        shrunk_size: None,
    };
    let run = |seed: u64, size: usize| -> Result<Vec<Sample>> {
        let mut rng = InstanceGenerator::rng(seed);
        rng.set_stream(1);
        trial(&mut rng, size)
    };
    for t in 0..trials as u64 {
        let seed = gen.trial_seed(name, t);
        let size = InstanceGenerator::rng(seed).random_range(sizes.0..=sizes.1);
        let samples = run(seed, size)?;
        for &(l, r) in &samples {
            let m = if l.is_finite() && r.is_finite() { relative_margin(l, r) } else { f64::NEG_INFINITY };
            if m < rep.worst_margin {
                rep.worst_margin = m;
                rep.worst_seed = seed;
            }
        }
        if violates(&samples, slack) {
            rep.violations += 1;
            if rep.shrunk_size.is_none() {
                let mut best = size;
                let mut s = size / 2;
                while s >= sizes.0 && s > 0 {
                    if violates(&run(seed, s)?, slack) {
                        best = s;
                        s /= 2;
                    } else {
                        break;
                    }
                }
                rep.shrunk_size = Some(best);
                log::warn!("{name}: violation at seed {seed}, shrunk to size {best}");
            }
        }
    }
    if rep.worst_margin == f64::INFINITY {
        rep.worst_margin = 0.0;
    }
    Ok(rep)
}

fn mpow(b: &CMat, k: usize) -> CMat {
    let mut out = linalg::identity(b.nrows());
    for _ in 0..k {
        out = &out * b;
    }
    out
}

const SCHATTEN_PS: [f64; 4] = [1.0, 2.0, 4.0, f64::INFINITY];

/// ‖BⁿAB^m‖_p <= 2‖AB^{n+m}‖_p for self-adjoint A, B; every fourth trial
/// uses a commuting pair.
pub fn check_unmixing(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    let k = gen.constants.unmixing;
    drive("unmixing", gen, trials, MATRIX_SLACK, (gen.min_size, gen.max_size), |rng, size| {
        let (a, b) = if rng.random_range(0..4) == 0 {
            commuting_pair(rng, size, false)?
        } else {
            (gue(rng, size), gue(rng, size))
        };
        unmixing_samples(rng, &a, &b, k)
    })
}

/// Same with A >= 0 and constant 1.
pub fn check_unmixing_psd(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    let k = gen.constants.unmixing_psd;
    drive("unmixing_psd", gen, trials, MATRIX_SLACK, (gen.min_size, gen.max_size), |rng, size| {
        let (a, b) = if rng.random_range(0..4) == 0 {
            commuting_pair(rng, size, true)?
        } else {
            (wishart(rng, size), gue(rng, size))
        };
        unmixing_samples(rng, &a, &b, k)
    })
}

fn unmixing_samples(rng: &mut Rand, a: &CMat, b: &CMat, k: f64) -> Result<Vec<Sample>> {
    let n = rng.random_range(0..=3);
    let m = rng.random_range(0..=3);
    let lhs_m = &(&mpow(b, n) * a) * &mpow(b, m);
    let rhs_m = a * &mpow(b, n + m);
    SCHATTEN_PS
        .iter()
        .map(|&p| Ok((grid::schatten_matrix(&lhs_m, p)?, k * grid::schatten_matrix(&rhs_m, p)?)))
        .collect()
}

/// ‖ad_Bⁿ(A)‖_p <= 2^{n+1}‖ABⁿ‖_p, n <= 4.
pub fn check_ad_expansion(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    let base = gen.constants.ad_base;
    drive("ad_expansion", gen, trials, MATRIX_SLACK, (gen.min_size, gen.max_size), |rng, size| {
        let a = gue(rng, size);
        let b = gue(rng, size);
        let n = rng.random_range(0..=4);
        let mut ad = a.clone();
        for _ in 0..n {
            ad = linalg::commutator(&b, &ad);
        }
        let rhs_m = &a * &mpow(&b, n);
        SCHATTEN_PS
            .iter()
            .map(|&p| Ok((grid::schatten_matrix(&ad, p)?, base.powi(n as i32 + 1) * grid::schatten_matrix(&rhs_m, p)?)))
            .collect()
    })
}

const HBARS: [f64; 3] = [0.25, 0.125, 0.0625];

fn random_grid(rng: &mut Rand, log2n: usize) -> Result<GridSpec> {
    let hbar = HBARS[rng.random_range(0..HBARS.len())];
    GridSpec::line(1 << log2n, 2.0 * PI, hbar)
}

/// Discrete Lᵖ norm in x.
fn lp_x(g: &GridSpec, f: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return grid::lp_of(f, p);
    }
    grid::lp_of(f, p) * g.cell().powf(1.0 / p)
}

/// Discrete Lᵖ norm on the momentum lattice, cell (h/L)^d.
fn lp_xi(g: &GridSpec, f: &[f64], p: f64) -> f64 {
    if p.is_infinite() {
        return grid::lp_of(f, p);
    }
    grid::lp_of(f, p) * g.dp().powi(g.d as i32).powf(1.0 / p)
}

fn kss_pair(rng: &mut Rand, log2n: usize) -> Result<(GridSpec, Vec<f64>, Vec<f64>, OperatorMatrix)> {
    let g = random_grid(rng, log2n)?;
    let f = trig_poly(rng, g.n, 4);
    // g is a trigonometric polynomial in the Fourier label
    let gl = trig_poly(rng, g.n, 4);
    let gk: Vec<f64> = (0..g.n).map(|k| gl[crate::fft::index_of(crate::fft::label(k, g.n) + g.n as i64 / 2, g.n)]).collect();
    let fx = OperatorMatrix::multiplication(g, &f.iter().map(|&v| c(v)).collect::<Vec<_>>())?;
    let gp = OperatorMatrix::fourier_multiplier(g, &gk.iter().map(|&v| c(v)).collect::<Vec<_>>())?;
    Ok((g, f, gk, fx.compose(&gp)?))
}

/// ‖f(x)g(p)‖_ℒᵖ <= ‖f‖_Lᵖ‖g‖_Lᵖ, p ∈ {2, 4, 8}.
pub fn check_kss(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    drive("kss", gen, trials, GRID_SLACK, (3, 5), |rng, log2n| {
        let (g, f, gk, op) = kss_pair(rng, log2n)?;
        [2.0, 4.0, 8.0]
            .iter()
            .map(|&p| Ok((grid::semiclassical_norm(&op, p, None)?, lp_x(&g, &f, p) * lp_xi(&g, &gk, p))))
            .collect()
    })
}

/// |‖f(x)g(p)‖_ℒ² - ‖f‖_L²‖g‖_L²| <= 1e-9 ‖f‖‖g‖.
pub fn check_kss_equality(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    drive("kss_p2_equality", gen, trials, 0.0, (3, 5), |rng, log2n| {
        let (g, f, gk, op) = kss_pair(rng, log2n)?;
        let lhs = grid::semiclassical_norm(&op, 2.0, None)?;
        let rhs = lp_x(&g, &f, 2.0) * lp_xi(&g, &gk, 2.0);
        Ok(vec![((lhs - rhs).abs(), GRID_SLACK * rhs)])
    })
}

/// 2‖w‖²_{L^{2p'}} with w = (1 + |ξ|^{n_w})^{-1/2} on the momentum lattice.
pub fn diag_trace_constant(g: &GridSpec, p: f64, n_w: u32, factor: f64) -> f64 {
    let pp = if p.is_infinite() { 1.0 } else if p == 1.0 { f64::INFINITY } else { p / (p - 1.0) };
    let w: Vec<f64> = (0..g.dim()).map(|k| (1.0 + g.momentum_norm(k).powi(n_w as i32)).powf(-0.5)).collect();
    factor * lp_xi(g, &w, 2.0 * pp).powi(2)
}

/// ‖Diag μ‖_Lᵖ with Diag μ(x) = h^d μ(x, x).
pub fn diag_lp(mu: &OperatorMatrix, p: f64) -> f64 {
    let g = mu.grid;
    let s = g.h_d() / g.cell();
    let d: Vec<f64> = (0..g.dim()).map(|i| (mu.matrix[(i, i)] * s).norm()).collect();
    lp_x(&g, &d, p)
}

/// ‖Diag μ‖_Lᵖ <= C‖μ m‖_ℒᵖ, m = 1 + |p|^{n_w}, p ∈ {2, 4, ∞}.
pub fn check_diag_trace(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    let factor = gen.constants.diag_trace;
    drive("diag_trace", gen, trials, GRID_SLACK, (3, 5), |rng, log2n| {
        let g = random_grid(rng, log2n)?;
        let mu = if rng.random_range(0..3) == 0 {
            coherent_mixture(rng, &g, 1, 1.0)?
        } else {
            grid_operator(rng, &g, false)
        };
        let mut out = Vec::new();
        for n_w in [2u32, 3] {
            let w = WeightOperator::new(g, n_w);
            for p in [2.0, 4.0, f64::INFINITY] {
                let rhs = diag_trace_constant(&g, p, n_w, factor) * grid::semiclassical_norm(&mu, p, Some(&w))?;
                out.push((diag_lp(&mu, p), rhs));
            }
        }
        Ok(out)
    })
}

/// sup |E'| of a real trigonometric polynomial, from a 16x refined sampling.
fn sup_derivative(e: &[f64], l: f64) -> f64 {
    let n = e.len();
    let mut buf: Vec<C> = e.iter().map(|&v| c(v)).collect();
    crate::fft::fft(&mut buf);
    let fine = 16 * n;
    let mut up = vec![c(0.0); fine];
    for k in 0..n {
        let lab = crate::fft::label(k, n);
        if 2 * lab.unsigned_abs() as usize == n {
            continue;
        }
        let q = 2.0 * PI * lab as f64 / l;
        up[crate::fft::index_of(lab, fine)] = buf[k] * C::new(0.0, q) / n as f64;
    }
    crate::fft::ifft(&mut up);
    // ifft normalizes by 1/fine; undo it
    up.iter().fold(0.0f64, |a, z| a.max(z.re.abs() * fine as f64))
}

/// ħ⁻¹‖[E, ρ₂]‖_ℒ² <= ‖∇E‖_∞‖Dᵥρ₂‖_ℒ².
pub fn check_commutator_transport(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    drive("commutator_transport", gen, trials, GRID_SLACK, (3, 5), |rng, log2n| {
        let g = random_grid(rng, log2n)?;
        let e = trig_poly(rng, g.n, 3);
        let rho = grid_operator(rng, &g, false);
        Ok(vec![transport_sides(&g, &e, &rho)?])
    })
}

/// (ħ⁻¹‖[E, ρ]‖_ℒ², ‖∇E‖_∞‖Dᵥρ‖_ℒ²).
pub fn transport_sides(g: &GridSpec, e: &[f64], rho: &OperatorMatrix) -> Result<Sample> {
    let eop = OperatorMatrix::multiplication(*g, &e.iter().map(|&v| c(v)).collect::<Vec<_>>())?;
    let lhs = grid::semiclassical_norm(&eop.commutator(rho)?, 2.0, None)? / g.hbar;
    let dv = grid::quantum_grad_v(rho, 0)?;
    Ok((lhs, sup_derivative(e, g.l) * grid::semiclassical_norm(&dv, 2.0, None)?))
}

pub fn check_powers_stormer(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    drive("powers_stormer", gen, trials, MATRIX_SLACK, (0, 2), |rng, s| {
        let n = [4, 8, 16][s];
        let r = fock::powers_stormer_check(&wishart(rng, n), &wishart(rng, n))?;
        Ok(vec![(r.lhs, r.rhs)])
    })
}

fn random_sector_state(rng: &mut Rand, m: usize, n: usize) -> Vec<C> {
    (0..1usize << m)
        .map(|s| if s.count_ones() as usize == n { cnormal(rng) } else { c(0.0) })
        .collect()
}

/// γ_ij = <Ψ, a*_j a_i Ψ> for a pure state vector.
pub fn one_pdm_pure(psi: &[C], m: usize) -> CMat {
    let norm2: f64 = psi.iter().map(|z| z.norm_sqr()).sum();
    let mut g = linalg::zeros(m, m);
    for i in 0..m {
        for j in 0..m {
            let mut s = c(0.0);
            for (src, &amp) in psi.iter().enumerate() {
                if amp == c(0.0) {
                    continue;
                }
                let Some((s1, t)) = fock::annihilate(src, i) else { continue };
                let Some((s2, u)) = fock::create(t, j) else { continue };
                s += psi[u].conj() * amp * (s1 * s2);
            }
            g[(i, j)] = s / norm2;
        }
    }
    g
}

/// 0 <= γ <= (Tr γ/N) I and ‖γ‖₂² <= ‖γ‖₁‖γ‖∞ for random N-sector pure states.
pub fn check_fermionic_bound(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    drive("fermionic_bound", gen, trials, 1e-10, (2, 8), |rng, m| {
        let n = rng.random_range(1..m);
        let psi = random_sector_state(rng, m, n);
        let gamma = one_pdm_pure(&psi, m);
        let reps = fock::fermionic_bound_check(&gamma, n as f64)?;
        // absolute floor: the nonnegativity bound has rhs = 0
        Ok(reps.iter().map(|r| (r.lhs, r.rhs + 1e-12)).collect())
    })
}

fn apply(m: &CMat, v: &[C]) -> Vec<C> {
    (0..m.nrows()).map(|i| (0..m.ncols()).map(|j| m[(i, j)] * v[j]).sum()).collect()
}

fn vnorm(v: &[C]) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// ‖dΓ(O)Ψ‖ <= ‖O‖_p‖𝒩^{1/p'}Ψ‖ and |<Ψ, dΓ(O)Ψ>| <= ‖O‖_p<Ψ, 𝒩^{1/p'}Ψ>,
/// p ∈ {1, 2, ∞}.
pub fn check_dgamma(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    drive("dgamma_bounds", gen, trials, MATRIX_SLACK, (1, 6), |rng, m| {
        let o = Mat::from_fn(m, m, |_, _| cnormal(rng));
        let herm = linalg::hermitian_part(&o);
        let psi: Vec<C> = (0..1usize << m).map(|_| cnormal(rng)).collect();
        let mut out = Vec::new();
        for op in [&o, &herm] {
            let dg = fock::second_quantize(op)?;
            let dpsi = apply(&dg.matrix, &psi);
            let quad: C = psi.iter().zip(&dpsi).map(|(a, b)| a.conj() * b).sum();
            for p in [1.0, 2.0, f64::INFINITY] {
                let op_norm = grid::schatten_matrix(op, p)?;
                let inv_conj = if p == 1.0 { 0.0 } else if p.is_infinite() { 1.0 } else { 1.0 - 1.0 / p };
                let npow = fock::FockOperator::number_function(m, |x| if inv_conj == 0.0 { 1.0 } else { x.powf(inv_conj) })?;
                let npsi = apply(&npow.matrix, &psi);
                out.push((vnorm(&dpsi), op_norm * vnorm(&npsi)));
                let nq: f64 = psi.iter().zip(&npsi).map(|(a, b)| (a.conj() * b).re).sum();
                out.push((quad.norm(), op_norm * nq));
            }
        }
        Ok(out)
    })
}

/// C‖(Dη u) m‖_p <= ‖(Dη ω) m‖_p + ‖ω Dη m‖_p with u = √(1-ω),
/// C = 2√(1 - ‖ω‖∞), for η ∈ {x, ξ}.
pub fn check_nabla_u(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    drive("nabla_u", gen, trials, GRID_SLACK, (3, 5), |rng, log2n| {
        let g = random_grid(rng, log2n)?;
        let raw = grid_operator(rng, &g, true);
        let top = linalg::eigvalsh(&raw.matrix)?.last().copied().unwrap_or(1.0);
        let lambda = rng.random_range(0.05..0.9);
        let omega = raw.scale(lambda / top);
        nabla_u_samples(&omega, rng.random_range(1..=2))
    })
}

pub fn nabla_u_samples(omega: &OperatorMatrix, n_w: u32) -> Result<Vec<Sample>> {
    let g = omega.grid;
    let norm_inf = linalg::eigvalsh(&omega.matrix)?.iter().fold(0.0f64, |a, v| a.max(v.abs()));
    if norm_inf >= 1.0 {
        return Err(Error::Domain(format!("‖ω‖∞ = {norm_inf} must be < 1")));
    }
    let one_minus = OperatorMatrix::identity(g).sub(omega)?;
    let u = grid::sqrt_psd(&one_minus)?;
    let w = WeightOperator::new(g, n_w);
    let m = w.operator();
    let cst = 2.0 * (1.0 - norm_inf).sqrt();
    let mut out = Vec::new();
    for eta in 0..2 {
        let grad = |a: &OperatorMatrix| if eta == 0 { grid::quantum_grad_x(a, 0) } else { grid::quantum_grad_v(a, 0) };
        let du = grad(&u)?;
        let dw = grad(omega)?;
        let dm = grad(&m)?;
        let odm = omega.compose(&dm)?;
        for p in [1.0, 2.0, 4.0, f64::INFINITY] {
            let lhs = cst * grid::semiclassical_norm(&du, p, Some(&w))?;
            let rhs = grid::semiclassical_norm(&dw, p, Some(&w))? + grid::semiclassical_norm(&odm, p, None)?;
            out.push((lhs, rhs));
        }
    }
    Ok(out)
}

/// Kernel and grid used by the exchange identity checks: smooth cutoff so
/// that K ∘ ρ stays resolved for near-diagonal ρ.
pub fn exchange_setup() -> Result<KernelSpec> {
    let g = GridSpec::line(128, 2.0 * PI, 1.0 / 32.0)?;
    KernelSpec::build(0.5, 1.0, 1.0, g)
}

/// (max|[A, 𝖷_ρ] - 𝖷_{[A,ρ]}|, max|𝖷_{[A,ρ]}|) for A = x (axis 0) or ∇.
pub fn exchange_residuals(rho: &OperatorMatrix, kernel: &KernelSpec) -> Result<[(f64, f64); 2]> {
    let x = rho.grid;
    let xop = OperatorMatrix::position(x, 0);
    let xr = potential::exchange_of(rho, kernel)?;
    let lhs_x = xop.commutator(&xr)?;
    let rhs_x = potential::exchange_of(&xop.commutator(rho)?, kernel)?;
    let lhs_g = grid::quantum_grad_x(&xr, 0)?;
    let rhs_g = potential::exchange_of(&grid::quantum_grad_x(rho, 0)?, kernel)?;
    Ok([
        (linalg::max_abs_diff(&lhs_x.matrix, &rhs_x.matrix), linalg::max_abs(&rhs_x.matrix)),
        (linalg::max_abs_diff(&lhs_g.matrix, &rhs_g.matrix), linalg::max_abs(&rhs_g.matrix)),
    ])
}

/// [x, 𝖷_ρ] = 𝖷_{[x,ρ]} to 1e-12 and [∇, 𝖷_ρ] = 𝖷_{[∇,ρ]} to 1e-8, relative to max entry.
pub fn check_exchange_identities(gen: &InstanceGenerator, trials: usize) -> Result<ViolationReport> {
    let kernel = exchange_setup()?;
    drive("exchange_identities", gen, trials, 0.0, (1, 4), |rng, terms| {
        let rho = coherent_mixture(rng, &kernel.grid, terms, 0.5)?;
        let [(ex, sx), (eg, sg)] = exchange_residuals(&rho, &kernel)?;
        Ok(vec![(ex, 1e-12 * sx), (eg, 1e-8 * sg)])
    })
}

#[derive(Clone, Debug)]
pub struct SuiteConfig {
    pub seed: u64,
    /// Trials per check unless overridden.
    pub trials: usize,
    pub overrides: BTreeMap<String, usize>,
    pub constants: Constants,
    pub threads: usize,
}

impl SuiteConfig {
    pub fn new(seed: u64, trials: usize) -> Self {
        Self { seed, trials, overrides: BTreeMap::new(), constants: Constants::default(), threads: 1 }
    }

    /// Default trial counts, about 1.3e4 trials in total.
    pub fn standard(seed: u64) -> Self {
        let mut s = Self::new(seed, 1000);
        for (k, v) in [("unmixing", 2500), ("unmixing_psd", 1500), ("ad_expansion", 2000), ("nabla_u", 500), ("exchange_identities", 100)] {
            s.overrides.insert(k.to_string(), v);
        }
        s
    }

    pub fn trials_for(&self, check: &str) -> usize {
        self.overrides.get(check).copied().unwrap_or(self.trials)
    }
}

type CheckFn = fn(&InstanceGenerator, usize) -> Result<ViolationReport>;

pub const CHECKS: [(&str, CheckFn); 12] = [
    ("ad_expansion", check_ad_expansion),
    ("commutator_transport", check_commutator_transport),
    ("dgamma_bounds", check_dgamma),
    ("diag_trace", check_diag_trace),
    ("exchange_identities", check_exchange_identities),
    ("fermionic_bound", check_fermionic_bound),
    ("kss", check_kss),
    ("kss_p2_equality", check_kss_equality),
    ("nabla_u", check_nabla_u),
    ("powers_stormer", check_powers_stormer),
    ("unmixing", check_unmixing),
    ("unmixing_psd", check_unmixing_psd),
];

#[derive(Clone, Debug)]
pub struct SuiteReport {
    /// Sorted by check name.
    pub reports: Vec<ViolationReport>,
}

impl SuiteReport {
    pub fn passed(&self) -> bool {
        self.reports.iter().all(|r| r.passed())
    }

    pub fn total_trials(&self) -> usize {
        self.reports.iter().map(|r| r.trials).sum()
    }

    pub fn get(&self, check: &str) -> Option<&ViolationReport> {
        self.reports.iter().find(|r| r.check == check)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from(ViolationReport::csv_header());
        s.push('\n');
        for r in &self.reports {
            s.push_str(&r.csv_row());
            s.push('\n');
        }
        s
    }
}

/// Runs every check, in parallel over `cfg.threads` workers.
pub fn run_suite(cfg: &SuiteConfig) -> Result<SuiteReport> {
    let gen = InstanceGenerator { constants: cfg.constants, ..InstanceGenerator::new(cfg.seed) };
    let threads = cfg.threads.clamp(1, CHECKS.len());
    let mut results: Vec<Result<ViolationReport>> = Vec::new();
    if threads == 1 {
        for (name, f) in CHECKS {
            results.push(f(&gen, cfg.trials_for(name)));
        }
    } else {
        let next = std::sync::atomic::AtomicUsize::new(0);
        let slots: Vec<std::sync::Mutex<Option<Result<ViolationReport>>>> =
            CHECKS.iter().map(|_| std::sync::Mutex::new(None)).collect();
        std::thread::scope(|s| {
            for _ in 0..threads {
                s.spawn(|| loop {
                    let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                    if i >= CHECKS.len() {
                        break;
                    }
                    let (name, f) = CHECKS[i];
                    *slots[i].lock().unwrap() = Some(f(&gen, cfg.trials_for(name)));
                });
            }
        });
        results = slots.into_iter().map(|m| m.into_inner().unwrap().expect("every slot filled")).collect();
    }
    let mut reports = results.into_iter().collect::<Result<Vec<_>>>()?;
    reports.sort_by(|a, b| a.check.cmp(&b.check));
    Ok(SuiteReport { reports })
}
