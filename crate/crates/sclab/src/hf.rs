//! Hartree / Hartree–Fock time stepping by midpoint-Hamiltonian unitary
//! conjugation, trajectories and regularity diagnostics.

use crate::error::{Error, Result};
use crate::grid::{self, DensityOperator, Flags, GridSpec, OperatorMatrix, WeightOperator};
use crate::linalg::{self, c, CMat};
use crate::potential::{self, KernelSpec};

/// The one-body dynamics: kernel, exchange switch and an optional external
/// potential sampled on the nodes.
#[derive(Clone, Debug)]
pub struct HfModel {
    pub kernel: KernelSpec,
    pub include_exchange: bool,
    pub external: Option<Vec<f64>>,
}

impl HfModel {
    pub fn new(kernel: KernelSpec, include_exchange: bool) -> Self {
        Self { kernel, include_exchange, external: None }
    }

    pub fn with_external(mut self, v: Vec<f64>) -> Result<Self> {
        if v.len() != self.kernel.grid.dim() {
            return Err(Error::Input("external potential length does not match grid".into()));
        }
        self.external = Some(v);
        Ok(self)
    }

    pub fn grid(&self) -> &GridSpec {
        &self.kernel.grid
    }

    pub fn hamiltonian(&self, rho: &OperatorMatrix) -> Result<OperatorMatrix> {
        let mut h = potential::hamiltonian_of(rho, &self.kernel, self.include_exchange)?;
        if let Some(v) = &self.external {
            for (i, vi) in v.iter().enumerate() {
                h.matrix[(i, i)] += c(*vi);
            }
        }
        Ok(h)
    }

    pub fn energy(&self, rho: &OperatorMatrix) -> Result<f64> {
        let mut e = potential::energy_parts(rho, &self.kernel, self.include_exchange)?.total();
        if let Some(v) = &self.external {
            let hd = rho.grid.h_d();
            e += hd * v.iter().enumerate().map(|(i, vi)| vi * rho.matrix[(i, i)].re).sum::<f64>();
        }
        Ok(e)
    }
}

/// Self-consistent midpoint stepper. One predictor/corrector pass is
/// `max_iter = 1`; the default iterates H = H(ρ_mid) to a fixed point, which
/// makes the step exactly time-symmetric.
#[derive(Clone, Debug)]
pub struct Stepper {
    pub model: HfModel,
    pub tol: f64,
    pub max_iter: usize,
}

#[derive(Clone, Copy, Debug, Default)]
pub struct StepInfo {
    pub iterations: usize,
    pub residual: f64,
}

fn conjugate(u: &CMat, rho: &CMat) -> CMat {
    linalg::hermitian_part(&(&(u * rho) * u.adjoint()))
}

impl Stepper {
    pub fn new(model: HfModel) -> Self {
        Self { model, tol: 1e-12, max_iter: 30 }
    }

    pub fn predictor_corrector(model: HfModel) -> Self {
        Self { model, tol: 0.0, max_iter: 1 }
    }

    /// One step of signed length dt.
    pub fn step(&self, rho: &OperatorMatrix, dt: f64) -> Result<(OperatorMatrix, StepInfo)> {
        let (out, info, _) = self.step_from(rho, dt, None)?;
        Ok((out, info))
    }

    /// As `step`, starting the fixed-point iteration from `guess` for the
    /// midpoint Hamiltonian. Also returns the converged midpoint Hamiltonian.
    pub fn step_from(
        &self,
        rho: &OperatorMatrix,
        dt: f64,
        guess: Option<OperatorMatrix>,
    ) -> Result<(OperatorMatrix, StepInfo, OperatorMatrix)> {
        if !dt.is_finite() || dt == 0.0 {
            return Err(Error::Input(format!("time step {dt} must be finite and nonzero")));
        }
        let hb = rho.grid.hbar;
        let mut h = match guess {
            Some(g) => g,
            None => self.model.hamiltonian(rho)?,
        };
        let mut e = linalg::eigh(&h.matrix)?;
        let mut info = StepInfo::default();
        let mut prev = f64::INFINITY;
        loop {
            info.iterations += 1;
            let u_half = linalg::unitary_from_eigh(&e, 0.5 * dt / hb);
            let mid = OperatorMatrix::with_flags(rho.grid, conjugate(&u_half, &rho.matrix), rho.flags);
            let h_new = self.model.hamiltonian(&mid)?;
            let scale = linalg::max_abs(&h.matrix).max(f64::MIN_POSITIVE);
            let delta = linalg::max_abs_diff(&h_new.matrix, &h.matrix) / scale;
            info.residual = delta;
            // converged, or stuck at rounding level
            if delta <= self.tol || (delta < 1e-10 && delta >= 0.5 * prev) {
                break;
            }
            h = h_new;
            e = linalg::eigh(&h.matrix)?;
            if info.iterations >= self.max_iter {
                break;
            }
            prev = delta;
        }
        let u = linalg::unitary_from_eigh(&e, dt / hb);
        let out = OperatorMatrix::with_flags(
            rho.grid,
            conjugate(&u, &rho.matrix),
            Flags { hermitian: true, ..Flags::default() },
        );
        if !linalg::is_finite(&out.matrix) {
            return Err(Error::Abort("non-finite state after step".into()));
        }
        Ok((out, info, h))
    }
}

/// One forward step of the Hartree(-Fock) flow.
pub fn step_midpoint_unitary(rho: &DensityOperator, kernel: &KernelSpec, dt: f64, include_exchange: bool) -> Result<DensityOperator> {
    if !(dt > 0.0) {
        return Err(Error::Input(format!("time step {dt} must be positive")));
    }
    let s = Stepper::new(HfModel::new(kernel.clone(), include_exchange));
    Ok(DensityOperator::trusted(s.step(rho.op(), dt)?.0))
}

/// Named channels sampled on a shared time array.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DiagnosticSeries {
    pub times: Vec<f64>,
    pub names: Vec<String>,
    pub values: Vec<Vec<f64>>,
}

impl DiagnosticSeries {
    pub fn push(&mut self, t: f64, row: Vec<(String, f64)>) -> Result<()> {
        if self.names.is_empty() && self.times.is_empty() {
            self.names = row.iter().map(|(n, _)| n.clone()).collect();
            self.values = vec![Vec::new(); self.names.len()];
        }
        if row.len() != self.names.len() || row.iter().zip(&self.names).any(|((n, _), m)| n != m) {
            return Err(Error::Input("diagnostic row does not match channel layout".into()));
        }
        self.times.push(t);
        for (col, (_, v)) in self.values.iter_mut().zip(row) {
            col.push(v);
        }
        Ok(())
    }

    pub fn channel(&self, name: &str) -> Option<&[f64]> {
        self.names.iter().position(|n| n == name).map(|i| self.values[i].as_slice())
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("t");
        for n in &self.names {
            s.push(',');
            s.push_str(n);
        }
        s.push('\n');
        for (k, t) in self.times.iter().enumerate() {
            s.push_str(&format!("{t}"));
            for col in &self.values {
                s.push_str(&format!(",{}", col[k]));
            }
            s.push('\n');
        }
        s
    }
}

/// What to compute at each snapshot.
#[derive(Clone, Debug)]
pub struct DiagConfig {
    pub n_w: u32,
    /// Exponent of the N_q, M̃_q and Ñ_q channels besides 2.
    pub q: f64,
    pub q0: f64,
    pub q1: f64,
    pub regularity: bool,
    pub sqrt_channels: bool,
}

impl Default for DiagConfig {
    fn default() -> Self {
        Self { n_w: 2, q: 4.0, q0: 2.0, q1: 4.0, regularity: true, sqrt_channels: true }
    }
}

impl DiagConfig {
    pub fn light() -> Self {
        Self { regularity: false, sqrt_channels: false, ..Self::default() }
    }
}

fn weighted(a: &OperatorMatrix, w: &WeightOperator, p: f64) -> Result<f64> {
    grid::semiclassical_norm(a, p, Some(w))
}

/// Snapshot channels for one state.
pub fn diagnose(rho: &OperatorMatrix, model: &HfModel, cfg: &DiagConfig) -> Result<Vec<(String, f64)>> {
    let g = rho.grid;
    let h = g.h();
    let d = g.d as f64;
    let mut out: Vec<(String, f64)> = Vec::new();
    let mut put = |n: &str, v: f64| out.push((n.to_string(), v));
    let ev = linalg::eigvalsh(&rho.matrix)?;
    put("mass", rho.trace().re * g.h_d());
    put("energy", model.energy(rho)?);
    for (name, p) in [("L1", 1.0), ("L2", 2.0), ("L4", 4.0)] {
        put(name, h.powf(d / p) * grid::lp_of(&ev, p));
    }
    put("Linf", grid::lp_of(&ev, f64::INFINITY));
    put("eig_min", ev.first().copied().unwrap_or(0.0));
    put("eig_max", ev.last().copied().unwrap_or(0.0));
    if !cfg.regularity {
        return Ok(out);
    }
    let w = WeightOperator::new(g, cfg.n_w);
    let first = grid::gradients(rho, 1)?;
    let second = grid::gradients(rho, 2)?;
    let sob = |p: f64| -> Result<grid::SobolevNorm> {
        let terms: Vec<f64> = first.iter().map(|gr| weighted(gr, &w, p)).collect::<Result<_>>()?;
        Ok(grid::combine_sobolev(&terms, weighted(rho, &w, p)?, p))
    };
    put("M2", sob(2.0)?.inhomogeneous);
    put("M4", sob(4.0)?.inhomogeneous);
    put("Minf", weighted(rho, &w, f64::INFINITY)?);
    // second-order gradients come after the first-order ones, in (Dx², Dv², DvDx) triples
    let second_only = &second[first.len()..];
    for (name, p) in [("N2", 2.0), ("Nq", cfg.q)] {
        let mut s = 0.0;
        for gr in second_only {
            s += weighted(gr, &w, p)?;
        }
        put(name, s);
    }
    // D_q = ||Dv ρ m||_q + ||ρ Dv m||_q
    let dv = first.iter().step_by(2).cloned().collect::<Vec<_>>();
    let wop = w.operator();
    let dv_m: Vec<OperatorMatrix> = (0..g.d).map(|j| grid::quantum_grad_v(&wop, j)).collect::<Result<_>>()?;
    let d_q = |p: f64| -> Result<f64> {
        let mut s = 0.0;
        for j in 0..g.d {
            s += weighted(&dv[j], &w, p)?;
            s += grid::semiclassical_norm(&rho.compose(&dv_m[j])?, p, None)?;
        }
        Ok(s)
    };
    put("D_q0q1", (d_q(cfg.q0)? * d_q(cfg.q1)?).sqrt());
    if !cfg.sqrt_channels {
        return Ok(out);
    }
    let s = grid::sqrt_psd(rho)?;
    let sfirst = grid::gradients(&s, 1)?;
    let shom = |p: f64| -> Result<f64> {
        let terms: Vec<f64> = sfirst.iter().map(|gr| weighted(gr, &w, p)).collect::<Result<_>>()?;
        Ok(grid::combine_sobolev(&terms, 0.0, p).homogeneous)
    };
    put("Mt_q", weighted(&s, &w, 2.0)? + weighted(&s, &w, cfg.q)?);
    let (s2, sq) = (shom(2.0)?, shom(cfg.q)?);
    put("Nt_q", s2 + sq);
    let sdv: Vec<&OperatorMatrix> = sfirst.iter().step_by(2).collect();
    let dvn = |p: f64| -> Result<f64> {
        let terms: Vec<f64> = sdv.iter().map(|gr| weighted(gr, &w, p)).collect::<Result<_>>()?;
        Ok(grid::lp_of(&terms, p))
    };
    put("Dt_q0q1", (dvn(cfg.q0)? * dvn(cfg.q1)?).sqrt());
    // ||ρ||_{Ẇ^{1,q}(m)} <= 2 ||√ρ m||_{ℒ∞} ||√ρ||_{Ẇ^{1,q}(m)}
    let lhs = {
        let terms: Vec<f64> = first.iter().map(|gr| weighted(gr, &w, cfg.q)).collect::<Result<_>>()?;
        grid::combine_sobolev(&terms, 0.0, cfg.q).homogeneous
    };
    let rhs = 2.0 * weighted(&s, &w, f64::INFINITY)? * sq;
    put("sqrt_lemma_margin", rhs - lhs);
    Ok(out)
}

#[derive(Clone, Debug)]
pub struct HFTrajectory {
    pub times: Vec<f64>,
    pub states: Vec<DensityOperator>,
    pub diagnostics: DiagnosticSeries,
    pub aborted: Option<String>,
    /// Largest fixed-point iteration count over all steps.
    pub max_iterations: usize,
}

impl HFTrajectory {
    pub fn last(&self) -> &DensityOperator {
        self.states.last().expect("trajectory holds at least the initial state")
    }
}

/// Number of steps of length dt covering [0, T]; T must be a multiple of dt.
pub fn step_count(t_final: f64, dt: f64) -> Result<usize> {
    if !(t_final >= 0.0) || !t_final.is_finite() {
        return Err(Error::Input(format!("final time {t_final} must be >= 0")));
    }
    if !(dt > 0.0) {
        return Err(Error::Input(format!("time step {dt} must be positive")));
    }
    let n = (t_final / dt).round();
    if (n * dt - t_final).abs() > 1e-9 * t_final.max(dt) {
        return Err(Error::Input(format!("T = {t_final} is not a multiple of dt = {dt}")));
    }
    Ok(n as usize)
}

pub fn evolve_model(
    rho0: &DensityOperator,
    stepper: &Stepper,
    t_final: f64,
    dt: f64,
    stride: usize,
    cfg: &DiagConfig,
) -> Result<HFTrajectory> {
    rho0.grid().check_same(stepper.model.grid())?;
    let steps = step_count(t_final, dt)?;
    if stride == 0 {
        return Err(Error::Input("stride must be >= 1".into()));
    }
    let mut traj = HFTrajectory {
        times: vec![0.0],
        states: vec![rho0.clone()],
        diagnostics: DiagnosticSeries::default(),
        aborted: None,
        max_iterations: 0,
    };
    traj.diagnostics.push(0.0, diagnose(rho0.op(), &stepper.model, cfg)?)?;
    let mass0 = rho0.mass();
    let mut cur = rho0.op().clone();
    // previous two midpoint Hamiltonians, for a linear extrapolation guess
    let mut hist: Vec<OperatorMatrix> = Vec::new();
    for k in 1..=steps {
        let guess = if hist.len() == 2 {
            Some(OperatorMatrix::with_flags(
                cur.grid,
                &linalg::scale_real(&hist[1].matrix, 2.0) - &hist[0].matrix,
                hist[1].flags,
            ))
        } else {
            None
        };
        let (next, info) = match stepper.step_from(&cur, dt, guess) {
            Ok((r, info, hmid)) => {
                if hist.len() == 2 {
                    hist.remove(0);
                }
                hist.push(hmid);
                (r, info)
            }
            Err(e) => {
                traj.aborted = Some(format!("step {k}: {e}"));
                break;
            }
        };
        traj.max_iterations = traj.max_iterations.max(info.iterations);
        cur = next;
        let mass = cur.trace().re * cur.grid.h_d();
        if (mass - mass0).abs() > 1e-6 {
            traj.aborted = Some(format!("step {k}: mass drift {:e}", mass - mass0));
            break;
        }
        if k % stride == 0 || k == steps {
            let t = k as f64 * dt;
            let state = match DensityOperator::new(cur.clone()) {
                Ok(s) => s,
                Err(e) => {
                    traj.aborted = Some(format!("step {k}: {e}"));
                    break;
                }
            };
            traj.diagnostics.push(t, diagnose(state.op(), &stepper.model, cfg)?)?;
            traj.times.push(t);
            traj.states.push(state);
        }
    }
    Ok(traj)
}

pub fn evolve(
    rho0: &DensityOperator,
    kernel: &KernelSpec,
    t_final: f64,
    dt: f64,
    stride: usize,
    include_exchange: bool,
) -> Result<HFTrajectory> {
    let s = Stepper::new(HfModel::new(kernel.clone(), include_exchange));
    evolve_model(rho0, &s, t_final, dt, stride, &DiagConfig::default())
}

pub fn hf_energy(rho: &DensityOperator, kernel: &KernelSpec, include_exchange: bool) -> Result<f64> {
    potential::hf_energy(rho, kernel, include_exchange)
}

#[derive(Clone, Debug, PartialEq)]
pub struct ChannelSummary {
    pub name: String,
    pub initial: f64,
    pub min: f64,
    pub max: f64,
    pub last: f64,
    pub within_factor: bool,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RegularityReport {
    pub factor: f64,
    pub channels: Vec<ChannelSummary>,
    /// Snapshots where the √ρ lemma margin went negative.
    pub sqrt_lemma_violations: usize,
}

/// Channels whose boundedness is tracked.
pub const REGULARITY_CHANNELS: [&str; 9] = ["M2", "M4", "Minf", "N2", "Nq", "D_q0q1", "Mt_q", "Nt_q", "Dt_q0q1"];

pub fn regularity_report(traj: &HFTrajectory, factor: f64) -> RegularityReport {
    let d = &traj.diagnostics;
    let mut channels = Vec::new();
    for name in REGULARITY_CHANNELS {
        let Some(v) = d.channel(name) else { continue };
        let initial = v[0];
        let min = v.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let within = v.iter().all(|x| x.is_finite())
            && if initial > 0.0 {
                max <= factor * initial && min >= initial / factor
            } else {
                max <= 0.0
            };
        channels.push(ChannelSummary {
            name: name.to_string(),
            initial,
            min,
            max,
            last: *v.last().unwrap(),
            within_factor: within,
        });
    }
    let sqrt_lemma_violations = d
        .channel("sqrt_lemma_margin")
        .map(|m| m.iter().filter(|&&x| x < 0.0).count())
        .unwrap_or(0);
    RegularityReport { factor, channels, sqrt_lemma_violations }
}

impl RegularityReport {
    pub fn channel(&self, name: &str) -> Option<&ChannelSummary> {
        self.channels.iter().find(|c| c.name == name)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("channel,initial,min,max,last,within_factor\n");
        for c in &self.channels {
            s.push_str(&format!("{},{},{},{},{},{}\n", c.name, c.initial, c.min, c.max, c.last, c.within_factor));
        }
        s
    }
}
