//! End-to-end acceptance runs. Each test prints one `PASS`/`FAIL` line and
//! asserts the same condition. The full set takes tens of minutes on one core.

use sclab::fock::{gaussian_state, reduced_density_matrix};
use sclab::grid::{schatten_norm, DensityOperator, GridSpec};
use sclab::harness::*;
use sclab::hf::{evolve_model, DiagConfig, HfModel, Stepper};
use sclab::ineq::{self, random_one_pdm, InstanceGenerator, SuiteConfig};
use sclab::linalg;
use sclab::potential::KernelSpec;
use sclab::vlasov::{evolve_with, VlasovSolver};
use sclab::wigner::*;
use std::f64::consts::PI;
use std::time::Instant;

fn verdict(name: &str, pass: bool, detail: String) {
    println!("[acceptance] {name:<26} {} {detail}", if pass { "PASS" } else { "FAIL" });
}

#[test]
fn inequality_suite() {
    let t0 = Instant::now();
    let mut cfg = SuiteConfig::standard(2024);
    cfg.threads = worker_count();
    let rep = ineq::run_suite(&cfg).unwrap();
    let secs = t0.elapsed().as_secs_f64();
    let violations: usize = rep.reports.iter().map(|r| r.violations).sum();
    for r in &rep.reports {
        println!("    {:<22} trials={:<5} violations={} worst_margin={:e}", r.check, r.trials, r.violations, r.worst_margin);
    }
    let pass = violations == 0 && rep.total_trials() >= 10_000 && secs < 300.0;
    verdict("inequality suite", pass, format!("trials={} violations={violations} {secs:.0}s", rep.total_trials()));
    assert!(pass);
}

#[test]
fn exchange_identities() {
    let kernel = ineq::exchange_setup().unwrap();
    let gen = InstanceGenerator::new(77);
    let (mut wx, mut wg) = (0.0f64, 0.0f64);
    for t in 0..100u64 {
        let mut rng = InstanceGenerator::rng(gen.trial_seed("acceptance_exchange", t));
        let terms = 1 + (t % 4) as usize;
        let rho = ineq::coherent_mixture(&mut rng, &kernel.grid, terms, 0.5).unwrap();
        let [(ex, sx), (eg, sg)] = ineq::exchange_residuals(&rho, &kernel).unwrap();
        wx = wx.max(ex / sx);
        wg = wg.max(eg / sg);
    }
    let pass = wx < 1e-12 && wg < 1e-8;
    verdict("exchange identities", pass, format!("x: {wx:e} grad: {wg:e}"));
    assert!(pass);
}

#[test]
fn wigner_schatten_identity() {
    let mut worst = 0.0f64;
    for k in 2..=6 {
        let hb = 1.0 / (1u32 << k) as f64;
        // wider box where the coherent state is broad
        let l = if hb >= 0.125 { 4.0 * PI } else { 2.0 * PI };
        let g = GridSpec::line(128, l, hb).unwrap();
        let psi = coherent_state(0.3, -0.2, &g).unwrap();
        let rho = DensityOperator::new(projector(g, &psi).unwrap().scale(1.0 / g.h())).unwrap();
        let f = wigner_transform(&rho).unwrap();
        let l2 = f.lp_norm(2.0);
        let rel = (l2 - g.h().sqrt() * schatten_norm(rho.op(), 2.0).unwrap()).abs() / l2;
        worst = worst.max(rel);
    }
    let pass = worst < 1e-8;
    verdict("wigner-schatten identity", pass, format!("worst relative {worst:e}"));
    assert!(pass);
}

#[test]
fn hf_conservation() {
    let t0 = Instant::now();
    let g = GridSpec::line(256, 2.0 * PI, 1.0 / 16.0).unwrap();
    let gs = gaussian_symbol(g, toeplitz_xi(&g, 3.0), 0.0, 0.3, 0.5, 0.3).unwrap();
    let rho = toeplitz_quantize(&gs).unwrap();
    let kernel = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let st = Stepper::new(HfModel::new(kernel, true));
    let traj = evolve_model(&rho, &st, 1.0, 1e-3, 250, &DiagConfig::light()).unwrap();
    assert!(traj.aborted.is_none(), "{:?}", traj.aborted);
    let drift = |ch: &str| {
        let v = traj.diagnostics.channel(ch).unwrap();
        v.iter().map(|x| (x - v[0]).abs()).fold(0.0, f64::max) / v[0].abs()
    };
    let mass = drift("mass");
    let energy = drift("energy");
    let ev0 = linalg::eigvalsh(rho.matrix()).unwrap();
    let ev1 = linalg::eigvalsh(traj.last().matrix()).unwrap();
    let spec = ev0.iter().zip(&ev1).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max) / ev0[ev0.len() - 1];
    let (fwd, _) = st.step(rho.op(), 1e-3).unwrap();
    let (back, _) = st.step(&fwd, -1e-3).unwrap();
    let rev = linalg::max_abs_diff(&back.matrix, &rho.op().matrix) / linalg::max_abs(&rho.op().matrix);
    let secs = t0.elapsed().as_secs_f64();
    let pass = mass < 1e-8 && spec < 1e-9 && energy < 1e-6 && rev < 1e-9 && secs < 600.0;
    verdict(
        "hf conservation",
        pass,
        format!("mass {mass:e} spectrum {spec:e} energy {energy:e} reversal {rev:e} {secs:.0}s"),
    );
    assert!(pass);
}

/// Slope of successive differences ‖u(dt_i) - u(dt_{i+1})‖ against dt_i.
fn refinement_slope(diffs: &[f64], dts: &[f64]) -> f64 {
    RateFit::fit(&dts[..diffs.len()], diffs, diffs.len() - 1).unwrap().slope
}

#[test]
fn self_convergence() {
    let dts = [4e-3, 2e-3, 1e-3, 5e-4];
    let tf = 0.1;
    let g = GridSpec::line(128, 2.0 * PI, 1.0 / 16.0).unwrap();
    let kernel = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let rho = toeplitz_quantize(&gaussian_symbol(g, toeplitz_xi(&g, 3.0), 0.0, 0.3, 0.5, 0.4).unwrap()).unwrap();
    let st = Stepper::new(HfModel::new(kernel.clone(), true));
    let hf: Vec<_> = dts
        .iter()
        .map(|&dt| evolve_model(&rho, &st, tf, dt, usize::MAX, &DiagConfig::light()).unwrap().last().matrix().clone())
        .collect();
    let dh: Vec<f64> = hf.windows(2).map(|w| linalg::frobenius(&(&w[0] - &w[1]))).collect();

    let f0 = gaussian_symbol(g, vlasov_xi(&g, 2.5, None), 0.0, 0.3, 0.5, 0.4).unwrap().normalized().unwrap();
    let solver = VlasovSolver::new(kernel);
    let vl: Vec<_> = dts.iter().map(|&dt| evolve_with(&f0, &solver, tf, dt, usize::MAX, 2).unwrap().last().clone()).collect();
    let dv: Vec<f64> = vl.windows(2).map(|w| w[0].l2_distance(&w[1]).unwrap()).collect();

    let (sh, sv) = (refinement_slope(&dh, &dts), refinement_slope(&dv, &dts));
    let pass = (sh - 2.0).abs() <= 0.2 && (sv - 2.0).abs() <= 0.2;
    verdict("dt self-convergence", pass, format!("hf slope {sh:.3} vlasov slope {sv:.3}"));
    assert!(pass);
}

const SEMICLASSICAL: &str = r#"
experiment = "semiclassical-rate"
[grid]
n = 256
hbar_sweep = [0.125, 0.0625, 0.03125, 0.015625]
[potential]
a = 0.4
kappa = 1.0
[init]
kind = "toeplitz_gaussian"
sigma_x = 1.0
sigma_xi = 0.5
[hf]
T = 0.5
dt = 0.002
[vlasov]
xi_max = 4.0
dt = 0.002
"#;

#[test]
fn semiclassical_rate_slope() {
    let t0 = Instant::now();
    let cfg = ExperimentConfig::parse(SEMICLASSICAL).unwrap();
    let out = semiclassical_rate(&cfg).unwrap();
    for m in &out.members {
        println!("    hbar={} error={:e} aborted={:?}", m.hbar, m.error, m.aborted);
    }
    let secs = t0.elapsed().as_secs_f64();
    let s = out.fit.slope;
    let pass = (0.8..=1.3).contains(&s) && out.members.iter().all(|m| m.aborted.is_none()) && secs < 1200.0;
    verdict("semiclassical rate", pass, format!("h-slope {s:.3} ± {:.3} {secs:.0}s", out.fit.slope_sigma));
    assert!(pass);
}

fn meanfield_cfg(kappa: f64) -> ExperimentConfig {
    ExperimentConfig::parse(&format!(
        "experiment = \"meanfield-compare\"\n[potential]\na = 0.5\nkappa = {kappa}\n[meanfield]\nM = 8\nN = [2.0, 3.0, 4.0, 6.0]\nT = 0.5\n"
    ))
    .unwrap()
}

#[test]
fn meanfield_monotonicity() {
    let t0 = Instant::now();
    let inter = meanfield_rate(&meanfield_cfg(1.0)).unwrap();
    let free = meanfield_rate(&meanfield_cfg(0.0)).unwrap();
    let errs: Vec<f64> = inter.members.iter().map(|m| m.trace_norm_error * m.n).collect();
    let raw_decreasing = errs.windows(2).all(|w| w[1] < w[0]);
    let free_worst = free.members.iter().map(|m| m.trace_norm_error * m.n).fold(0.0, f64::max);
    let secs = t0.elapsed().as_secs_f64();
    let pass = inter.strictly_decreasing && raw_decreasing && free_worst < 1e-10 && secs < 600.0;
    verdict("mean-field monotonicity", pass, format!("errors {:?} free {free_worst:e} {secs:.0}s", errs.iter().map(|e| format!("{e:.2e}")).collect::<Vec<_>>()));
    assert!(pass);
}

#[test]
fn quasi_free_construction() {
    let mut rng = InstanceGenerator::rng(6);
    let (mut eg, mut ew) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let omega = random_one_pdm(&mut rng, 6).unwrap();
        let s = gaussian_state(&omega).unwrap();
        let g = reduced_density_matrix(&s);
        eg = eg.max(linalg::max_abs_diff(&g, &omega));
        for p in 0..6 {
            for q in 0..6 {
                for r in 0..6 {
                    for t in 0..6 {
                        let want = omega[(t, p)] * omega[(r, q)] - omega[(r, p)] * omega[(t, q)];
                        ew = ew.max((s.four_point(p, q, r, t) - want).norm());
                    }
                }
            }
        }
    }
    let pass = eg < 1e-10 && ew < 1e-10;
    verdict("quasi-free construction", pass, format!("gamma {eg:e} wick {ew:e}"));
    assert!(pass);
}

const REGULARITY: &str = r#"
experiment = "regularity-report"
[grid]
n = 256
hbar_sweep = [0.125, 0.0625, 0.03125, 0.015625]
[potential]
a = 0.4
kappa = 1.0
[init]
kind = "toeplitz_gaussian"
sigma_x = 1.0
sigma_xi = 0.5
[hf]
T = 0.5
dt = 0.002
stride = 25
"#;

#[test]
fn regularity_flags() {
    let t0 = Instant::now();
    let cfg = ExperimentConfig::parse(REGULARITY).unwrap();
    let members = regularity_sweep(&cfg).unwrap();
    let mut pass = true;
    let mut worst = 0.0f64;
    for m in &members {
        pass &= m.aborted.is_none();
        for name in ["M2", "M4", "Minf", "Nt_q"] {
            let c = m.report.channel(name).unwrap();
            let ratio = (c.max / c.initial).max(c.initial / c.min);
            worst = worst.max(ratio);
            pass &= c.within_factor;
            println!("    hbar={} {name:<5} initial={:e} min={:e} max={:e}", m.hbar, c.initial, c.min, c.max);
        }
    }
    let secs = t0.elapsed().as_secs_f64();
    verdict("regularity flags", pass, format!("largest ratio {worst:.3} {secs:.0}s"));
    assert!(pass);
}

fn outputs_of(text: &str) -> Vec<(String, Vec<u8>)> {
    let cfg = ExperimentConfig::parse(text).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let out = run_config(&cfg, text, dir.path()).unwrap();
    out.outputs
        .iter()
        .filter(|n| n.ends_with(".csv"))
        .map(|n| (n.clone(), std::fs::read(dir.path().join(n)).unwrap()))
        .collect()
}

#[test]
fn determinism() {
    let grid = "[grid]\nn = 32\nhbar = 0.25\n[potential]\na = 0.5\nkappa = 1.0\n";
    let init = "[init]\nkind = \"toeplitz_gaussian\"\nsigma_x = 0.6\nsigma_xi = 0.5\n";
    let configs = [
        format!("experiment = \"hf-evolve\"\nseed = 9\n{grid}{init}[hf]\nT = 0.05\ndt = 0.01\n"),
        format!("experiment = \"vlasov-evolve\"\nseed = 9\n{grid}{init}[vlasov]\nT = 0.05\ndt = 0.01\n"),
        format!(
            "experiment = \"regularity-report\"\nseed = 9\n{grid}{init}[hf]\nT = 0.05\ndt = 0.01\n"
        ),
        format!(
            "experiment = \"semiclassical-rate\"\nseed = 9\n{}{init}[hf]\nT = 0.05\ndt = 0.01\n[vlasov]\nxi_max = 4.0\ndt = 0.01\n",
            grid.replace("hbar = 0.25", "hbar_sweep = [0.25, 0.125, 0.0625]")
        ),
        "experiment = \"meanfield-compare\"\nseed = 9\n[potential]\na = 0.5\nkappa = 1.0\n[meanfield]\nM = 4\nN = [1.0, 2.0, 3.0]\nT = 0.05\n".to_string(),
        "experiment = \"ineq-suite\"\nseed = 9\n[ineq]\ntrials = 3\n".to_string(),
    ];
    let mut pass = true;
    let mut files = 0;
    for text in &configs {
        let a = outputs_of(text);
        let b = outputs_of(text);
        files += a.len();
        pass &= !a.is_empty() && a == b;
    }
    verdict("determinism", pass, format!("{files} csv files byte-identical across reruns"));
    assert!(pass);
}
