use num_complex::Complex64 as C;
use sclab::grid::*;
use sclab::hf::*;
use sclab::ineq::{grid_operator, trig_poly, InstanceGenerator};
use sclab::linalg::{self, c};
use sclab::phase::PhaseSpaceField;
use sclab::potential::KernelSpec;
use sclab::vlasov::*;
use sclab::wigner;
use std::f64::consts::PI;

fn line(n: usize, hbar: f64) -> GridSpec {
    GridSpec::line(n, 2.0 * PI, hbar).unwrap()
}

/// Normalized e^{-P²} e^{...}: diagonal in momentum, uniform density.
fn momentum_state(g: GridSpec) -> DensityOperator {
    let vals: Vec<C> = (0..g.dim()).map(|k| c((-g.momentum(k, 0).powi(2)).exp())).collect();
    DensityOperator::normalized(OperatorMatrix::fourier_multiplier(g, &vals).unwrap()).unwrap()
}

#[test]
fn zero_time_returns_input() {
    let g = line(16, 0.2);
    let rho = momentum_state(g);
    let k = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let tr = evolve(&rho, &k, 0.0, 0.01, 1, true).unwrap();
    assert_eq!(tr.states.len(), 1);
    assert_eq!(tr.last().matrix(), rho.matrix());
    let f = wigner::wigner_transform(&rho).unwrap();
    let vt = evolve_vlasov(&f.scaled(1.0), &k, 0.0, 0.01, 1).unwrap();
    assert_eq!(vt.states.len(), 1);
}

#[test]
fn time_grid_errors() {
    assert!(step_count(0.1, 0.03).is_err());
    assert!(step_count(0.1, 0.0).is_err());
    assert_eq!(step_count(0.1, 0.01).unwrap(), 10);
    let g = line(16, 0.2);
    let k = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let rho = momentum_state(g);
    assert!(step_midpoint_unitary(&rho, &k, -0.1, true).is_err());
}

#[test]
fn momentum_diagonal_state_is_stationary() {
    let g = line(32, 0.1);
    for kappa in [0.0, 1.0] {
        let k = KernelSpec::build(0.5, kappa, 0.0, g).unwrap();
        let rho = momentum_state(g);
        let next = step_midpoint_unitary(&rho, &k, 0.05, true).unwrap();
        assert!(linalg::max_abs_diff(next.matrix(), rho.matrix()) < 1e-12 * linalg::max_abs(rho.matrix()));
    }
}

#[test]
fn step_preserves_spectrum() {
    let g = line(32, 0.1);
    let k = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let mut rng = InstanceGenerator::rng(4);
    let rho = DensityOperator::normalized(grid_operator(&mut rng, &g, true)).unwrap();
    let next = step_midpoint_unitary(&rho, &k, 0.05, true).unwrap();
    let a = linalg::eigvalsh(rho.matrix()).unwrap();
    let b = linalg::eigvalsh(next.matrix()).unwrap();
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() < 1e-10);
    }
}

#[test]
fn mass_and_energy_along_a_run() {
    let g = line(64, 1.0 / 16.0);
    let gs = wigner::gaussian_symbol(g, wigner::toeplitz_xi(&g, 3.0), 0.0, 0.3, 0.5, 0.4).unwrap();
    let rho = wigner::toeplitz_quantize(&gs).unwrap();
    let k = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let st = Stepper::new(HfModel::new(k, true));
    let tr = evolve_model(&rho, &st, 0.2, 1e-3, 20, &DiagConfig::light()).unwrap();
    assert!(tr.aborted.is_none());
    let mass = tr.diagnostics.channel("mass").unwrap();
    assert!(mass.iter().all(|m| (m - 1.0).abs() < 1e-8));
    let e = tr.diagnostics.channel("energy").unwrap();
    assert!(e.iter().all(|x| (x - e[0]).abs() < 1e-6 * e[0].abs()));
    assert_eq!(tr.times.len(), 11);
}

/// x'' = -sin x by RK4.
fn pendulum(x0: f64, v0: f64, t: f64, steps: usize) -> f64 {
    let h = t / steps as f64;
    let (mut x, mut v) = (x0, v0);
    for _ in 0..steps {
        let f = |x: f64, v: f64| (v, -x.sin());
        let (a1, b1) = f(x, v);
        let (a2, b2) = f(x + 0.5 * h * a1, v + 0.5 * h * b1);
        let (a3, b3) = f(x + 0.5 * h * a2, v + 0.5 * h * b2);
        let (a4, b4) = f(x + h * a3, v + h * b3);
        x += h / 6.0 * (a1 + 2.0 * a2 + 2.0 * a3 + a4);
        v += h / 6.0 * (b1 + 2.0 * b2 + 2.0 * b3 + b4);
    }
    x
}

#[test]
fn coherent_center_follows_classical_orbit() {
    let g = line(128, 1.0 / 64.0);
    let xs = g.axis_positions();
    let k = KernelSpec::build(0.5, 0.0, 0.0, g).unwrap();
    let model = HfModel::new(k, false).with_external(xs.iter().map(|x| 1.0 - x.cos()).collect()).unwrap();
    let psi = wigner::coherent_state(0.8, 0.0, &g).unwrap();
    let rho = DensityOperator::new(wigner::projector(g, &psi).unwrap().scale(1.0 / g.h())).unwrap();
    let tr = evolve_model(&rho, &Stepper::new(model), 1.0, 0.01, 100, &DiagConfig::light()).unwrap();
    let last = tr.last();
    let xmean: f64 = (0..128).map(|i| xs[i] * last.matrix()[(i, i)].re).sum::<f64>() * g.h();
    let want = pendulum(0.8, 0.0, 1.0, 1000);
    assert!((xmean - want).abs() < 2.0 * g.hbar, "{xmean} vs {want}");
}

#[test]
fn stationary_state_has_constant_channels() {
    let g = line(32, 0.1);
    let k = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let rho = momentum_state(g);
    let tr = evolve(&rho, &k, 0.05, 0.01, 1, true).unwrap();
    let rep = regularity_report(&tr, 10.0);
    assert_eq!(rep.sqrt_lemma_violations, 0);
    for ch in &rep.channels {
        assert!((ch.max - ch.min).abs() <= 1e-6 * ch.initial.abs().max(1e-12), "{}", ch.name);
        assert!(ch.within_factor);
    }
    assert!(rep.to_csv().starts_with("channel,initial,min,max,last,within_factor\n"));
}

#[test]
fn sqrt_lemma_holds_on_random_states() {
    let g = line(32, 0.1);
    let model = HfModel::new(KernelSpec::build(0.5, 1.0, 0.0, g).unwrap(), true);
    let mut rng = InstanceGenerator::rng(12);
    for _ in 0..5 {
        let rho = DensityOperator::normalized(grid_operator(&mut rng, &g, true)).unwrap();
        let d = diagnose(rho.op(), &model, &DiagConfig::default()).unwrap();
        let margin = d.iter().find(|(n, _)| n == "sqrt_lemma_margin").unwrap().1;
        assert!(margin >= 0.0, "{margin}");
    }
}

fn gauss_field(g: GridSpec, xi: Vec<f64>, a: f64, b: f64) -> PhaseSpaceField {
    PhaseSpaceField::from_fn(g, xi, |x, p| (-(x * x) / (2.0 * a * a) - p * p / (2.0 * b * b)).exp()).unwrap()
}

#[test]
fn separable_gaussian_gradient_integral() {
    let g = line(128, 0.1);
    let (a, b) = (0.4, 0.5);
    let f = gauss_field(g, PhaseSpaceField::momentum_nodes(256, 5.0), a, b);
    let k = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let d = classical_diagnostics(&f, &k, 2.0, 2).unwrap();
    let sp = PI.sqrt();
    // ∫ x²/a⁴ e^{-x²/a²} dx · ∫ e^{-ξ²/b²}(1 + ξ⁴) dξ
    let want = sp / (2.0 * a) * (sp * b + 0.75 * sp * b.powi(5));
    assert!((d.n_x - want).abs() < 1e-6 * want, "{} vs {want}", d.n_x);
    let flat = PhaseSpaceField::from_fn(g, f.xi.clone(), |_, p| (-p * p).exp()).unwrap();
    assert!(classical_diagnostics(&flat, &k, 2.0, 2).unwrap().n_x < 1e-20);
}

#[test]
fn spatial_density_of_separable_field() {
    let g = line(64, 0.1);
    let mut rng = InstanceGenerator::rng(2);
    let gx: Vec<f64> = trig_poly(&mut rng, 64, 4).iter().map(|v| v.abs() + 0.1).collect();
    let xi = PhaseSpaceField::momentum_nodes(64, 3.0);
    let dxi = xi[1] - xi[0];
    let z: f64 = xi.iter().map(|p| (-p * p).exp()).sum::<f64>() * dxi;
    let mut values = Vec::new();
    for &v in &gx {
        for &p in &xi {
            values.push(v * (-p * p).exp() / z);
        }
    }
    let f = PhaseSpaceField::new(g, xi, values, false).unwrap();
    let rho = f.spatial_density();
    for (a, b) in rho.iter().zip(&gx) {
        assert!((a - b).abs() < 1e-12);
    }
}

#[test]
fn free_transport_is_exact_translation() {
    let g = line(64, 0.1);
    let k = KernelSpec::build(0.5, 0.0, 0.0, g).unwrap();
    let mut rng = InstanceGenerator::rng(5);
    let prof = trig_poly(&mut rng, 64, 6);
    let xi = PhaseSpaceField::momentum_nodes(16, 2.0);
    let k0 = 11;
    let xi0 = xi[k0];
    let mut values = vec![0.0; 64 * 16];
    for i in 0..64 {
        values[i * 16 + k0] = prof[i].abs() + 0.5;
    }
    let f0 = PhaseSpaceField::new(g, xi, values, false).unwrap();
    let t = 0.3;
    let tr = evolve_vlasov(&f0, &k, t, 0.01, 30).unwrap();
    let moved = sclab::fft::shift(&f0.column(k0), xi0 * t / g.dx(), 64.0);
    let col = tr.last().column(k0);
    for (a, b) in col.iter().zip(&moved) {
        assert!((a - b).abs() < 1e-10);
    }
}

#[test]
fn uniform_in_x_field_is_invariant() {
    let g = line(32, 0.1);
    let k = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let f0 = PhaseSpaceField::from_fn(g, PhaseSpaceField::momentum_nodes(32, 3.0), |_, p| (-p * p).exp()).unwrap();
    let solver = VlasovSolver::new(k.clone());
    assert!(solver.force(&f0).unwrap().iter().all(|e| e.abs() < 1e-12));
    let f1 = step_vlasov(&f0, &k, 0.1).unwrap();
    assert!(f1.max_abs_diff(&f0).unwrap() < 1e-12);
}

#[test]
fn vlasov_conserves_mass_and_l2() {
    let g = line(64, 0.1);
    let k = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let f0 = wigner::gaussian_symbol(g, PhaseSpaceField::momentum_nodes(128, 3.0), 0.0, 0.3, 0.5, 0.4).unwrap();
    let tr = evolve_vlasov(&f0, &k, 1.0, 0.01, 1).unwrap();
    assert!(tr.aborted.is_none());
    // per-step budget; the ξ-kick truncates interpolation tails at the box edge
    let m = tr.diagnostics.channel("mass").unwrap();
    assert!(m.windows(2).all(|w| (w[1] - w[0]).abs() < 1e-8), "{m:?}");
    let l2 = tr.diagnostics.channel("L2").unwrap();
    assert!(l2.iter().all(|x| (x - l2[0]).abs() < 1e-4 * l2[0]));
    let t = &tr.times;
    let b = fit_gronwall_constant(t, tr.diagnostics.channel("U").unwrap(), tr.diagnostics.channel("Einf").unwrap(), 2);
    assert!(b.is_some_and(f64::is_finite));
}

#[test]
fn two_stream_filaments() {
    let g = line(64, 0.1);
    let k = KernelSpec::build(0.5, -1.0, 0.0, g).unwrap();
    let f0 = PhaseSpaceField::from_fn(g, PhaseSpaceField::momentum_nodes(128, 3.0), |x, p| {
        ((-(p - 0.8).powi(2) / 0.1).exp() + (-(p + 0.8).powi(2) / 0.1).exp()) * (1.0 + 0.05 * x.cos())
    })
    .unwrap()
    .normalized()
    .unwrap();
    let tr = evolve_vlasov(&f0, &k, 1.0, 0.01, 10).unwrap();
    assert!(tr.aborted.is_none());
    let n2 = tr.diagnostics.channel("N2_x").unwrap();
    for w in n2.windows(2) {
        assert!(w[1] >= w[0], "{n2:?}");
    }
}

#[test]
fn oversized_step_is_rejected() {
    let g = line(32, 0.1);
    let k = KernelSpec::build(0.5, 1.0, 0.0, g).unwrap();
    let f0 = PhaseSpaceField::from_fn(g, PhaseSpaceField::momentum_nodes(32, 3.0), |_, p| (-p * p).exp()).unwrap();
    assert!(step_vlasov(&f0, &k, 2.0).is_err());
}
