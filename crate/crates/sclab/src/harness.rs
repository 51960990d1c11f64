//! Experiment configuration, orchestration and run folders.

use crate::error::{Error, Result};
use crate::fock;
use crate::grid::{DensityOperator, GridSpec};
use crate::hf::{self, DiagConfig, HfModel, Stepper};
use crate::ineq;
use crate::io;
use crate::linalg::{self, c, CMat};
use crate::phase::PhaseSpaceField;
use crate::potential::KernelSpec;
use crate::vlasov::{self, Interp, VlasovSolver};
use crate::wigner;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use std::path::{Path, PathBuf};
use std::time::Instant;

pub const EXPERIMENTS: [&str; 6] =
    ["hf-evolve", "vlasov-evolve", "semiclassical-rate", "meanfield-compare", "ineq-suite", "regularity-report"];

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSection {
    #[serde(default = "one")]
    pub d: usize,
    pub n: usize,
    #[serde(rename = "L", default = "two_pi")]
    pub l: f64,
    pub hbar: Option<f64>,
    pub hbar_sweep: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}
fn two_pi() -> f64 {
    2.0 * std::f64::consts::PI
}
fn yes() -> bool {
    true
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PotentialSection {
    pub a: f64,
    pub kappa: f64,
    #[serde(default, rename = "cutoff_R")]
    pub cutoff_r: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InitSection {
    pub kind: String,
    #[serde(default)]
    pub x0: f64,
    #[serde(default)]
    pub xi0: f64,
    #[serde(default = "half")]
    pub sigma_x: f64,
    #[serde(default = "sigma_xi_default")]
    pub sigma_xi: f64,
    /// Half-width of the ξ window used by the Töplitz quadrature.
    #[serde(default = "two")]
    pub xi_max: f64,
    pub file: Option<String>,
}

fn half() -> f64 {
    0.5
}
fn sigma_xi_default() -> f64 {
    0.3
}
fn two() -> f64 {
    2.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HfSection {
    #[serde(rename = "T")]
    pub t: f64,
    pub dt: f64,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "yes")]
    pub exchange: bool,
    #[serde(default)]
    pub dump: bool,
    #[serde(default)]
    pub light_diagnostics: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VlasovSection {
    #[serde(rename = "T")]
    pub t: Option<f64>,
    pub dt: f64,
    #[serde(default = "one")]
    pub stride: usize,
    #[serde(default = "spectral")]
    pub interp: String,
    #[serde(default = "two")]
    pub xi_max: f64,
    /// Nodes per unit ξ-lattice step; defaults to the semiclassical rule.
    pub n_xi: Option<usize>,
    #[serde(default = "n_w_default")]
    pub n_w: u32,
    #[serde(default)]
    pub dump: bool,
}

fn spectral() -> String {
    "spectral".into()
}
fn n_w_default() -> u32 {
    2
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MeanfieldSection {
    #[serde(rename = "M", default = "m_default")]
    pub m: usize,
    #[serde(rename = "N", default = "n_default")]
    pub n: Vec<f64>,
    #[serde(rename = "T", default = "half")]
    pub t: f64,
    #[serde(default = "mf_dt")]
    pub dt: f64,
    /// Inverse temperature of the initial occupations.
    #[serde(default = "beta_default")]
    pub beta: f64,
    /// Strength of the cos x rotation applied to the initial ω.
    #[serde(default = "beta_default")]
    pub rotation: f64,
    /// Grid points used to sample the pair potential.
    #[serde(default = "kernel_n")]
    pub kernel_n: usize,
}

fn m_default() -> usize {
    8
}
fn n_default() -> Vec<f64> {
    vec![2.0, 3.0, 4.0, 6.0]
}
fn mf_dt() -> f64 {
    1e-3
}
fn beta_default() -> f64 {
    1.0
}
fn kernel_n() -> usize {
    64
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegularitySection {
    #[serde(default = "factor_default")]
    pub factor: f64,
    #[serde(default = "n_w_default")]
    pub n_w: u32,
    #[serde(default = "q_default")]
    pub q: f64,
}

fn factor_default() -> f64 {
    10.0
}
fn q_default() -> f64 {
    4.0
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct IneqSection {
    pub trials: Option<usize>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: String,
    #[serde(default)]
    pub seed: u64,
    pub output: Option<String>,
    pub grid: Option<GridSection>,
    pub potential: Option<PotentialSection>,
    pub init: Option<InitSection>,
    pub hf: Option<HfSection>,
    pub vlasov: Option<VlasovSection>,
    pub meanfield: Option<MeanfieldSection>,
    pub regularity: Option<RegularitySection>,
    pub ineq: Option<IneqSection>,
}

fn cfg_err(msg: impl Into<String>) -> Error {
    Error::Config(msg.into())
}

fn need<'a, T>(v: &'a Option<T>, key: &str, exp: &str) -> Result<&'a T> {
    v.as_ref().ok_or_else(|| cfg_err(format!("`{key}` section is required for {exp}")))
}

fn positive(v: f64, key: &str) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(cfg_err(format!("`{key}` must be positive (got {v})")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        let cfg: Self = toml::from_str(text).map_err(|e| cfg_err(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<(Self, String)> {
        let text = std::fs::read_to_string(path).map_err(|e| cfg_err(format!("{}: {e}", path.display())))?;
        Ok((Self::parse(&text)?, text))
    }

    pub fn validate(&self) -> Result<()> {
        let exp = self.experiment.as_str();
        if !EXPERIMENTS.contains(&exp) {
            return Err(cfg_err(format!("`experiment` = `{exp}` is not one of {EXPERIMENTS:?}")));
        }
        if let Some(p) = &self.potential {
            if !(p.a >= 0.0) {
                return Err(cfg_err(format!("`potential.a` must be >= 0 (got {})", p.a)));
            }
            if !p.kappa.is_finite() {
                return Err(cfg_err("`potential.kappa` must be finite"));
            }
            if !(p.cutoff_r >= 0.0) {
                return Err(cfg_err("`potential.cutoff_R` must be >= 0"));
            }
        }
        if let Some(h) = &self.hf {
            positive(h.dt, "hf.dt")?;
            if !(h.t >= 0.0 && h.t.is_finite()) {
                return Err(cfg_err(format!("`hf.T` must be >= 0 (got {})", h.t)));
            }
            if h.stride == 0 {
                return Err(cfg_err("`hf.stride` must be >= 1"));
            }
            hf::step_count(h.t, h.dt).map_err(|e| cfg_err(format!("`hf.T`/`hf.dt`: {e}")))?;
        }
        if let Some(v) = &self.vlasov {
            positive(v.dt, "vlasov.dt")?;
            positive(v.xi_max, "vlasov.xi_max")?;
            if v.stride == 0 {
                return Err(cfg_err("`vlasov.stride` must be >= 1"));
            }
            self.interp()?;
        }
        if let Some(i) = &self.init {
            if !["toeplitz_gaussian", "weyl", "file"].contains(&i.kind.as_str()) {
                return Err(cfg_err(format!("`init.kind` = `{}` is not toeplitz_gaussian, weyl or file", i.kind)));
            }
            if i.kind == "file" && i.file.is_none() {
                return Err(cfg_err("`init.file` is required when init.kind = file"));
            }
            positive(i.sigma_x, "init.sigma_x")?;
            positive(i.sigma_xi, "init.sigma_xi")?;
            positive(i.xi_max, "init.xi_max")?;
        }
        if let Some(g) = &self.grid {
            for hb in self.hbars()? {
                GridSpec::new(g.d, g.n, g.l, hb).map_err(|e| cfg_err(format!("`grid`: {e}")))?;
            }
        }
        match exp {
            "hf-evolve" => {
                need(&self.grid, "grid", exp)?;
                need(&self.potential, "potential", exp)?;
                need(&self.init, "init", exp)?;
                need(&self.hf, "hf", exp)?;
            }
            "vlasov-evolve" => {
                need(&self.grid, "grid", exp)?;
                need(&self.potential, "potential", exp)?;
                need(&self.init, "init", exp)?;
                need(&self.vlasov, "vlasov", exp)?;
                if self.vlasov.as_ref().unwrap().t.is_none() {
                    return Err(cfg_err("`vlasov.T` is required for vlasov-evolve"));
                }
            }
            "semiclassical-rate" => {
                need(&self.grid, "grid", exp)?;
                need(&self.potential, "potential", exp)?;
                need(&self.init, "init", exp)?;
                need(&self.hf, "hf", exp)?;
                need(&self.vlasov, "vlasov", exp)?;
                if self.hbars()?.len() < 3 {
                    return Err(cfg_err("`grid.hbar_sweep` needs at least 3 values for semiclassical-rate"));
                }
            }
            "meanfield-compare" => {
                need(&self.potential, "potential", exp)?;
                let m = need(&self.meanfield, "meanfield", exp)?;
                if m.m == 0 || m.m > 10 {
                    return Err(cfg_err(format!("`meanfield.M` = {} must lie in 1..=10", m.m)));
                }
                if m.n.is_empty() || m.n.iter().any(|&n| !(n > 0.0 && n < m.m as f64)) {
                    return Err(cfg_err("`meanfield.N` entries must lie strictly between 0 and M"));
                }
                positive(m.dt, "meanfield.dt")?;
                hf::step_count(m.t, m.dt).map_err(|e| cfg_err(format!("`meanfield.T`/`meanfield.dt`: {e}")))?;
            }
            "regularity-report" => {
                need(&self.grid, "grid", exp)?;
                need(&self.potential, "potential", exp)?;
                need(&self.init, "init", exp)?;
                need(&self.hf, "hf", exp)?;
            }
            _ => {}
        }
        Ok(())
    }

    /// The single ħ or the sweep list.
    pub fn hbars(&self) -> Result<Vec<f64>> {
        let g = self.grid.as_ref().ok_or_else(|| cfg_err("`grid` section missing"))?;
        match (&g.hbar, &g.hbar_sweep) {
            (Some(h), None) => Ok(vec![*h]),
            (None, Some(v)) if !v.is_empty() => Ok(v.clone()),
            (Some(_), Some(_)) => Err(cfg_err("give either `grid.hbar` or `grid.hbar_sweep`, not both")),
            _ => Err(cfg_err("`grid.hbar` or `grid.hbar_sweep` is required")),
        }
    }

    pub fn grid_for(&self, hbar: f64) -> Result<GridSpec> {
        let g = self.grid.as_ref().ok_or_else(|| cfg_err("`grid` section missing"))?;
        GridSpec::new(g.d, g.n, g.l, hbar)
    }

    pub fn kernel_for(&self, grid: GridSpec) -> Result<KernelSpec> {
        let p = self.potential.as_ref().ok_or_else(|| cfg_err("`potential` section missing"))?;
        KernelSpec::build(p.a, p.kappa, p.cutoff_r, grid)
    }

    pub fn interp(&self) -> Result<Interp> {
        match self.vlasov.as_ref().map(|v| v.interp.as_str()).unwrap_or("spectral") {
            "spectral" => Ok(Interp::Spectral),
            "spline" => Ok(Interp::CubicSpline { limiter: false }),
            "spline_limited" => Ok(Interp::CubicSpline { limiter: true }),
            other => Err(cfg_err(format!("`vlasov.interp` = `{other}` is not spectral, spline or spline_limited"))),
        }
    }
}

/// Worker count: `SCLAB_THREADS` if set, else the available parallelism.
pub fn worker_count() -> usize {
    std::env::var("SCLAB_THREADS")
        .ok()
        .and_then(|s| s.parse::<usize>().ok())
        .filter(|&n| n > 0)
        .unwrap_or_else(|| std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1))
}

/// Maps `f` over `items` on up to `threads` workers; results keep input order.
pub fn parallel_map<T: Sync, R: Send>(items: &[T], threads: usize, f: impl Fn(&T) -> R + Sync) -> Vec<R> {
    let threads = threads.clamp(1, items.len().max(1));
    if threads == 1 {
        return items.iter().map(&f).collect();
    }
    let next = std::sync::atomic::AtomicUsize::new(0);
    let slots: Vec<std::sync::Mutex<Option<R>>> = items.iter().map(|_| std::sync::Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..threads {
            s.spawn(|| loop {
                let i = next.fetch_add(1, std::sync::atomic::Ordering::SeqCst);
                if i >= items.len() {
                    break;
                }
                let r = f(&items[i]);
                *slots[i].lock().unwrap() = Some(r);
            });
        }
    });
    slots.into_iter().map(|m| m.into_inner().unwrap().expect("slot filled")).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct RateFit {
    pub x: Vec<f64>,
    pub errors: Vec<f64>,
    pub slope: f64,
    pub slope_sigma: f64,
    pub intercept: f64,
    pub r2: f64,
}

impl RateFit {
    /// Weighted least squares of log(err) on log(x); the point at
    /// `emphasize` gets weight 2.
    pub fn fit(x: &[f64], errors: &[f64], emphasize: usize) -> Result<Self> {
        if x.len() != errors.len() {
            return Err(Error::Input("rate fit needs matching abscissae and errors".into()));
        }
        if x.len() < 3 {
            return Err(Error::Input(format!("rate fit needs >= 3 points (got {})", x.len())));
        }
        if x.iter().chain(errors).any(|v| !(*v > 0.0 && v.is_finite())) {
            return Err(Error::Domain("rate fit needs positive finite values".into()));
        }
        let lx: Vec<f64> = x.iter().map(|v| v.ln()).collect();
        let ly: Vec<f64> = errors.iter().map(|v| v.ln()).collect();
        let w: Vec<f64> = (0..x.len()).map(|i| if i == emphasize { 2.0 } else { 1.0 }).collect();
        let sw: f64 = w.iter().sum();
        let mx = lx.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
        let my = ly.iter().zip(&w).map(|(a, b)| a * b).sum::<f64>() / sw;
        let sxx: f64 = lx.iter().zip(&w).map(|(a, b)| b * (a - mx).powi(2)).sum();
        let sxy: f64 = lx.iter().zip(&ly).zip(&w).map(|((a, y), b)| b * (a - mx) * (y - my)).sum();
        if sxx == 0.0 {
            return Err(Error::Domain("rate fit abscissae are all equal".into()));
        }
        let slope = sxy / sxx;
        let intercept = my - slope * mx;
        let ssr: f64 = lx.iter().zip(&ly).zip(&w).map(|((a, y), b)| b * (y - intercept - slope * a).powi(2)).sum();
        let sst: f64 = ly.iter().zip(&w).map(|(y, b)| b * (y - my).powi(2)).sum();
        let dof = (x.len() - 2) as f64;
        let slope_sigma = (ssr / dof / sxx).sqrt();
        let r2 = if sst == 0.0 { 1.0 } else { 1.0 - ssr / sst };
        Ok(Self { x: x.to_vec(), errors: errors.to_vec(), slope, slope_sigma, intercept, r2 })
    }

    pub fn to_csv(&self) -> String {
        io::csv(
            &["slope", "slope_sigma", "intercept", "r2", "points"],
            &[vec![
                io::fmt_f64(self.slope),
                io::fmt_f64(self.slope_sigma),
                io::fmt_f64(self.intercept),
                io::fmt_f64(self.r2),
                self.x.len().to_string(),
            ]],
        )
    }
}

/// Initial density operator from the `init` section.
pub fn initial_state(cfg: &ExperimentConfig, grid: GridSpec) -> Result<DensityOperator> {
    let init = cfg.init.as_ref().ok_or_else(|| cfg_err("`init` section missing"))?;
    match init.kind.as_str() {
        "toeplitz_gaussian" => {
            let g = wigner::gaussian_symbol(grid, wigner::toeplitz_xi(&grid, init.xi_max), init.x0, init.xi0, init.sigma_x, init.sigma_xi)?;
            wigner::toeplitz_quantize(&g)
        }
        "weyl" => {
            let g = wigner::gaussian_symbol(grid, wigner::wigner_xi(&grid), init.x0, init.xi0, init.sigma_x, init.sigma_xi)?;
            DensityOperator::normalized(wigner::weyl_quantize(&g)?)
        }
        "file" => {
            let op = io::load_operator(Path::new(init.file.as_deref().unwrap_or_default()))?;
            op.grid.check_same(&grid)?;
            DensityOperator::normalized(op)
        }
        k => Err(cfg_err(format!("unknown init.kind `{k}`"))),
    }
}

/// ξ nodes for a Vlasov run on `grid`: they contain the Wigner lattice
/// (spacing ħ·2π/L) refined until dξ <= ħ/2, or `n_xi` nodes if given.
pub fn vlasov_xi(grid: &GridSpec, xi_max: f64, n_xi: Option<usize>) -> Vec<f64> {
    if let Some(n) = n_xi {
        return PhaseSpaceField::momentum_nodes(n, xi_max);
    }
    let dp = grid.dp();
    let r = (dp / (grid.hbar / 2.0)).ceil().max(1.0);
    let dxi = dp / r;
    let half = (xi_max / dxi).ceil() as i64;
    (-half..half).map(|j| j as f64 * dxi).collect()
}

/// Vlasov values resampled on the Wigner lattice of `grid`, zero outside the
/// Vlasov box. The Vlasov nodes must contain the lattice.
pub fn on_wigner_lattice(f: &PhaseSpaceField) -> Result<PhaseSpaceField> {
    let g = f.grid;
    let dp = g.dp();
    let dxi = f.dxi();
    let r = dp / dxi;
    if (r - r.round()).abs() > 1e-9 || (f.xi[0] / dxi - (f.xi[0] / dxi).round()).abs() > 1e-9 {
        return Err(Error::GridMismatch("Vlasov ξ nodes do not contain the Wigner lattice".into()));
    }
    let r = r.round() as i64;
    let j0 = (f.xi[0] / dxi).round() as i64;
    let xi = wigner::wigner_xi(&g);
    let n = g.n;
    let mut values = vec![0.0; n * n];
    for i in 0..n {
        for m in 0..n {
            let l = m as i64 - n as i64 / 2;
            let j = l * r - j0;
            if j >= 0 && (j as usize) < f.n_xi() {
                values[i * n + m] = f.at(i, j as usize);
            }
        }
    }
    PhaseSpaceField::new(g, xi, values, false)
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemiclassicalMember {
    pub hbar: f64,
    pub h: f64,
    pub error: f64,
    pub baseline_error: f64,
    pub max_iterations: usize,
    pub aborted: Option<String>,
}

/// One ħ of the semiclassical sweep.
pub fn semiclassical_member(cfg: &ExperimentConfig, hbar: f64) -> Result<SemiclassicalMember> {
    let grid = cfg.grid_for(hbar)?;
    grid.require_1d("semiclassical-rate")?;
    let kernel = cfg.kernel_for(grid)?;
    let init = cfg.init.as_ref().unwrap();
    let hfc = cfg.hf.as_ref().unwrap();
    let vc = cfg.vlasov.as_ref().unwrap();
    let rho0 = initial_state(cfg, grid)?;
    let stepper = Stepper::new(HfModel::new(kernel.clone(), hfc.exchange));
    let steps = hf::step_count(hfc.t, hfc.dt)?;
    let traj = hf::evolve_model(&rho0, &stepper, hfc.t, hfc.dt, steps.max(1), &DiagConfig::light())?;
    let xi = vlasov_xi(&grid, vc.xi_max, vc.n_xi);
    let f0 = wigner::gaussian_symbol(grid, xi, init.x0, init.xi0, init.sigma_x, init.sigma_xi)?;
    let solver = VlasovSolver { kernel, interp: cfg.interp()? };
    let vsteps = hf::step_count(vc.t.unwrap_or(hfc.t), vc.dt)?;
    let vt = vlasov::evolve_with(&f0, &solver, vc.t.unwrap_or(hfc.t), vc.dt, vsteps.max(1), vc.n_w)?;
    let aborted = traj.aborted.clone().or(vt.aborted.clone());
    let fw = wigner::wigner_transform(traj.last())?;
    let error = fw.l2_distance(&on_wigner_lattice(vt.last())?)?;
    let baseline_error = wigner::wigner_transform(&rho0)?.l2_distance(&on_wigner_lattice(&f0)?)?;
    Ok(SemiclassicalMember { hbar, h: grid.h(), error, baseline_error, max_iterations: traj.max_iterations, aborted })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SemiclassicalOutcome {
    pub members: Vec<SemiclassicalMember>,
    pub fit: RateFit,
}

pub fn semiclassical_rate(cfg: &ExperimentConfig) -> Result<SemiclassicalOutcome> {
    let hbars = cfg.hbars()?;
    let members: Vec<SemiclassicalMember> = parallel_map(&hbars, worker_count(), |&hb| semiclassical_member(cfg, hb))
        .into_iter()
        .collect::<Result<_>>()?;
    let ok: Vec<&SemiclassicalMember> = members
        .iter()
        .filter(|m| {
            if let Some(a) = &m.aborted {
                log::warn!("ħ = {}: run aborted ({a}); excluded from the fit", m.hbar);
                false
            } else {
                true
            }
        })
        .collect();
    if ok.len() < 3 {
        return Err(Error::Abort(format!("only {} of {} sweep members survived", ok.len(), members.len())));
    }
    let h: Vec<f64> = ok.iter().map(|m| m.h).collect();
    let e: Vec<f64> = ok.iter().map(|m| m.error).collect();
    let smallest = h.iter().enumerate().fold(0, |b, (i, v)| if *v < h[b] { i } else { b });
    let fit = RateFit::fit(&h, &e, smallest)?;
    Ok(SemiclassicalOutcome { members, fit })
}

pub fn semiclassical_csv(out: &SemiclassicalOutcome) -> String {
    let rows: Vec<Vec<String>> = out
        .members
        .iter()
        .map(|m| {
            vec![
                io::fmt_f64(m.hbar),
                io::fmt_f64(m.h),
                io::fmt_f64(m.error),
                io::fmt_f64(m.baseline_error),
                m.max_iterations.to_string(),
                m.aborted.is_some().to_string(),
            ]
        })
        .collect();
    io::csv(&["hbar", "h", "error", "baseline_error", "max_iterations", "aborted"], &rows)
}

/// Plane-wave basis, Fermi–Dirac occupations rotated by exp(-i s cos x).
pub struct MeanfieldSetup {
    pub basis: fock::ModeBasis,
    pub rotation: CMat,
}

impl MeanfieldSetup {
    pub fn new(cfg: &ExperimentConfig) -> Result<Self> {
        let m = cfg.meanfield.as_ref().ok_or_else(|| cfg_err("`meanfield` section missing"))?;
        let p = cfg.potential.as_ref().ok_or_else(|| cfg_err("`potential` section missing"))?;
        let grid = GridSpec::line(m.kernel_n, 2.0 * std::f64::consts::PI, 1.0)?;
        let kernel = KernelSpec::build(p.a, p.kappa, p.cutoff_r, grid)?;
        let basis = fock::ModeBasis::plane_waves(&kernel, m.m)?;
        let cosx = CMat::from_fn(m.m, m.m, |i, j| if i.abs_diff(j) == 1 { c(0.5) } else { c(0.0) });
        let rotation = linalg::unitary_from_eigh(&linalg::eigh(&cosx)?, m.rotation);
        Ok(Self { basis, rotation })
    }

    /// ω with Tr ω = N.
    pub fn omega(&self, n: f64, beta: f64) -> Result<CMat> {
        let eps: Vec<f64> = (0..self.basis.modes).map(|i| self.basis.one_body[(i, i)].re).collect();
        let occ = |mu: f64| -> Vec<f64> { eps.iter().map(|e| 1.0 / (1.0 + (beta * (e - mu)).exp())).collect() };
        let (mut lo, mut hi) = (-1e3, 1e3);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if occ(mid).iter().sum::<f64>() < n {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        let d = linalg::diag_real(&occ(0.5 * (lo + hi)));
        Ok(linalg::hermitian_part(&(&(&self.rotation * &d) * self.rotation.adjoint())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanfieldMember {
    pub n: f64,
    pub m: usize,
    pub t: f64,
    pub trace_norm_error: f64,
    pub hs_norm_error: f64,
}

/// Exact evolution of the quasi-free state with 1-pdm ω against the HF flow
/// of ω; errors are per particle (‖·‖/N).
pub fn meanfield_member(setup: &MeanfieldSetup, n: f64, t: f64, dt: f64, beta: f64) -> Result<MeanfieldMember> {
    let omega = setup.omega(n, beta)?;
    let state = fock::gaussian_state(&omega)?;
    let h = fock::many_body_hamiltonian(&setup.basis, n)?;
    let traj = fock::evolve_exact(&state, &h, t, t.max(f64::MIN_POSITIVE))?;
    let gamma = fock::reduced_density_matrix(&traj.last().unwrap().1);
    let hf_gamma = if t > 0.0 { fock::evolve_hf_modes(&setup.basis, &omega, n, t, dt)? } else { omega.clone() };
    let diff = linalg::hermitian_part(&(&gamma - &hf_gamma));
    let ev = linalg::eigvalsh(&diff)?;
    let tr: f64 = ev.iter().map(|v| v.abs()).sum();
    Ok(MeanfieldMember {
        n,
        m: setup.basis.modes,
        t,
        trace_norm_error: tr / n,
        hs_norm_error: linalg::frobenius(&diff) / n,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct MeanfieldOutcome {
    pub members: Vec<MeanfieldMember>,
    pub strictly_decreasing: bool,
    /// Informational only.
    pub fit: Option<RateFit>,
}

pub fn meanfield_rate(cfg: &ExperimentConfig) -> Result<MeanfieldOutcome> {
    let m = cfg.meanfield.as_ref().ok_or_else(|| cfg_err("`meanfield` section missing"))?;
    let setup = MeanfieldSetup::new(cfg)?;
    let members: Vec<MeanfieldMember> = parallel_map(&m.n, worker_count(), |&n| meanfield_member(&setup, n, m.t, m.dt, m.beta))
        .into_iter()
        .collect::<Result<_>>()?;
    let strictly_decreasing = members.windows(2).all(|w| w[1].trace_norm_error < w[0].trace_norm_error);
    let ns: Vec<f64> = members.iter().map(|r| r.n).collect();
    let es: Vec<f64> = members.iter().map(|r| r.trace_norm_error).collect();
    let largest = ns.iter().enumerate().fold(0, |b, (i, v)| if *v > ns[b] { i } else { b });
    let fit = RateFit::fit(&ns, &es, largest).ok();
    Ok(MeanfieldOutcome { members, strictly_decreasing, fit })
}

pub fn meanfield_csv(out: &MeanfieldOutcome) -> String {
    let rows: Vec<Vec<String>> = out
        .members
        .iter()
        .map(|r| {
            vec![
                io::fmt_f64(r.n),
                r.m.to_string(),
                io::fmt_f64(r.t),
                io::fmt_f64(r.trace_norm_error),
                io::fmt_f64(r.hs_norm_error),
            ]
        })
        .collect();
    io::csv(&["N", "M", "T", "trace_norm_error", "hs_norm_error"], &rows)
}

#[derive(Clone, Debug)]
pub struct RegularityMember {
    pub hbar: f64,
    pub report: hf::RegularityReport,
    pub aborted: Option<String>,
}

pub fn regularity_member(cfg: &ExperimentConfig, hbar: f64) -> Result<RegularityMember> {
    let grid = cfg.grid_for(hbar)?;
    let kernel = cfg.kernel_for(grid)?;
    let hfc = cfg.hf.as_ref().unwrap();
    let reg = cfg.regularity.clone().unwrap_or(RegularitySection { factor: 10.0, n_w: 2, q: 4.0 });
    let rho0 = initial_state(cfg, grid)?;
    let stepper = Stepper::new(HfModel::new(kernel, hfc.exchange));
    let dcfg = DiagConfig { n_w: reg.n_w, q: reg.q, q1: reg.q, ..DiagConfig::default() };
    let traj = hf::evolve_model(&rho0, &stepper, hfc.t, hfc.dt, hfc.stride, &dcfg)?;
    Ok(RegularityMember { hbar, report: hf::regularity_report(&traj, reg.factor), aborted: traj.aborted })
}

pub fn regularity_sweep(cfg: &ExperimentConfig) -> Result<Vec<RegularityMember>> {
    let hbars = cfg.hbars()?;
    parallel_map(&hbars, worker_count(), |&hb| regularity_member(cfg, hb)).into_iter().collect()
}

pub fn regularity_csv(members: &[RegularityMember]) -> String {
    let mut rows = Vec::new();
    for m in members {
        for c in &m.report.channels {
            rows.push(vec![
                io::fmt_f64(m.hbar),
                c.name.clone(),
                io::fmt_f64(c.initial),
                io::fmt_f64(c.min),
                io::fmt_f64(c.max),
                io::fmt_f64(c.last),
                c.within_factor.to_string(),
            ]);
        }
        rows.push(vec![
            io::fmt_f64(m.hbar),
            "sqrt_lemma_violations".into(),
            m.report.sqrt_lemma_violations.to_string(),
            String::new(),
            String::new(),
            String::new(),
            (m.report.sqrt_lemma_violations == 0).to_string(),
        ]);
    }
    io::csv(&["hbar", "channel", "initial", "min", "max", "last", "within_factor"], &rows)
}

/// What a run produced; `failed` marks a completed run whose check failed.
#[derive(Clone, Debug)]
pub struct RunOutcome {
    pub dir: PathBuf,
    pub outputs: Vec<String>,
    pub failed: Option<String>,
}

#[derive(Serialize)]
struct Manifest<'a> {
    experiment: &'a str,
    version: &'a str,
    seed: u64,
    config_text: &'a str,
    resolved_config: &'a ExperimentConfig,
    wall_seconds: f64,
    outputs: Vec<(String, String)>,
}

pub fn sha256_file(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path)?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn write(dir: &Path, name: &str, text: &str, outputs: &mut Vec<String>) -> Result<()> {
    std::fs::write(dir.join(name), text)?;
    outputs.push(name.to_string());
    Ok(())
}

/// Runs a parsed config into `dir`, writing `config.toml` and `manifest.json`.
pub fn run_config(cfg: &ExperimentConfig, text: &str, dir: &Path) -> Result<RunOutcome> {
    std::fs::create_dir_all(dir)?;
    std::fs::write(dir.join("config.toml"), text)?;
    let start = Instant::now();
    let mut outputs = Vec::new();
    let mut failed = None;
    match cfg.experiment.as_str() {
        "hf-evolve" => {
            let hb = cfg.hbars()?;
            let grid = cfg.grid_for(hb[0])?;
            let hfc = cfg.hf.as_ref().unwrap();
            let rho0 = initial_state(cfg, grid)?;
            let stepper = Stepper::new(HfModel::new(cfg.kernel_for(grid)?, hfc.exchange));
            let dcfg = if hfc.light_diagnostics || grid.d != 1 { DiagConfig::light() } else { DiagConfig::default() };
            let traj = hf::evolve_model(&rho0, &stepper, hfc.t, hfc.dt, hfc.stride, &dcfg)?;
            write(dir, "diagnostics.csv", &traj.diagnostics.to_csv(), &mut outputs)?;
            if hfc.dump {
                io::save_operator(&dir.join("rho_init.op"), rho0.op())?;
                io::save_operator(&dir.join("rho_final.op"), traj.last().op())?;
                outputs.push("rho_init.op".into());
                outputs.push("rho_final.op".into());
            }
            failed = traj.aborted.clone();
        }
        "vlasov-evolve" => {
            let hb = cfg.hbars()?;
            let grid = cfg.grid_for(hb[0])?;
            let init = cfg.init.as_ref().unwrap();
            let vc = cfg.vlasov.as_ref().unwrap();
            let xi = vlasov_xi(&grid, vc.xi_max, vc.n_xi);
            let f0 = wigner::gaussian_symbol(grid, xi, init.x0, init.xi0, init.sigma_x, init.sigma_xi)?;
            let solver = VlasovSolver { kernel: cfg.kernel_for(grid)?, interp: cfg.interp()? };
            let traj = vlasov::evolve_with(&f0, &solver, vc.t.unwrap(), vc.dt, vc.stride, vc.n_w)?;
            write(dir, "diagnostics.csv", &traj.diagnostics.to_csv(), &mut outputs)?;
            if vc.dump {
                for (k, f) in traj.states.iter().enumerate() {
                    let name = format!("f_{k:05}.psf");
                    io::save_field(&dir.join(&name), f)?;
                    outputs.push(name);
                }
            }
            failed = traj.aborted.clone();
        }
        "semiclassical-rate" => {
            let out = semiclassical_rate(cfg)?;
            write(dir, "semiclassical.csv", &semiclassical_csv(&out), &mut outputs)?;
            write(dir, "rate_fit.csv", &out.fit.to_csv(), &mut outputs)?;
        }
        "meanfield-compare" => {
            let out = meanfield_rate(cfg)?;
            write(dir, "mf_error.csv", &meanfield_csv(&out), &mut outputs)?;
            if let Some(f) = &out.fit {
                write(dir, "rate_fit.csv", &f.to_csv(), &mut outputs)?;
            }
            if !out.strictly_decreasing {
                failed = Some("mean-field errors are not strictly decreasing in N".into());
            }
        }
        "ineq-suite" => {
            let trials = cfg.ineq.as_ref().and_then(|i| i.trials);
            let mut sc = match trials {
                Some(t) => ineq::SuiteConfig::new(cfg.seed, t),
                None => ineq::SuiteConfig::standard(cfg.seed),
            };
            sc.threads = worker_count();
            let rep = ineq::run_suite(&sc)?;
            write(dir, "report.csv", &rep.to_csv(), &mut outputs)?;
            if !rep.passed() {
                failed = Some("inequality violations found".into());
            }
        }
        "regularity-report" => {
            let members = regularity_sweep(cfg)?;
            write(dir, "regularity.csv", &regularity_csv(&members), &mut outputs)?;
            let bad: Vec<String> = members
                .iter()
                .flat_map(|m| {
                    m.report.channels.iter().filter(|c| !c.within_factor).map(move |c| format!("{}@ħ={}", c.name, m.hbar))
                })
                .collect();
            if !bad.is_empty() {
                failed = Some(format!("channels left the factor window: {}", bad.join(" ")));
            }
        }
        other => return Err(cfg_err(format!("unknown experiment `{other}`"))),
    }
    let hashes = outputs
        .iter()
        .map(|n| Ok((n.clone(), sha256_file(&dir.join(n))?)))
        .collect::<Result<Vec<_>>>()?;
    let manifest = Manifest {
        experiment: &cfg.experiment,
        version: env!("CARGO_PKG_VERSION"),
        seed: cfg.seed,
        config_text: text,
        resolved_config: cfg,
        wall_seconds: start.elapsed().as_secs_f64(),
        outputs: hashes,
    };
    let json = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Format(e.to_string()))?;
    std::fs::write(dir.join("manifest.json"), json)?;
    Ok(RunOutcome { dir: dir.to_path_buf(), outputs, failed })
}

/// Loads and runs a config file. `out` overrides the config's `output`.
pub fn run(config_path: &Path, out: Option<&Path>) -> Result<RunOutcome> {
    let (cfg, text) = ExperimentConfig::load(config_path)?;
    let dir = match (out, &cfg.output) {
        (Some(o), _) => o.to_path_buf(),
        (None, Some(o)) => PathBuf::from(o),
        (None, None) => PathBuf::from("runs").join(&cfg.experiment),
    };
    run_config(&cfg, &text, &dir)
}

/// Exit status for a run result: 0 ok, 2 invalid config, 3 runtime abort or failed check.
pub fn exit_code(r: &Result<RunOutcome>) -> i32 {
    match r {
        Ok(o) if o.failed.is_none() => 0,
        Ok(_) => 3,
        Err(Error::Config(_)) => 2,
        Err(_) => 3,
    }
}
