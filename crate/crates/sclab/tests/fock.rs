use faer::Mat;
use num_complex::Complex64 as C;
use proptest::prelude::*;
use sclab::fock::*;
use sclab::ineq::{gue, random_one_pdm, InstanceGenerator};
use sclab::linalg::{self, c, CMat};
use sclab::Error;

fn dense(l: &[Ladder]) -> Vec<CMat> {
    l.iter().map(|x| x.to_dense()).collect()
}

#[test]
fn canonical_anticommutation() {
    let m = 4;
    let (a, ad) = ladder_matrices(m).unwrap();
    let (a, ad) = (dense(&a), dense(&ad));
    let id = linalg::identity(1 << m);
    let zero = linalg::zeros(1 << m, 1 << m);
    for i in 0..m {
        for j in 0..m {
            let mixed = linalg::anticommutator(&a[i], &ad[j]);
            let want = if i == j { &id } else { &zero };
            assert!(linalg::max_abs_diff(&mixed, want) < 1e-15, "{{a_{i}, a*_{j}}}");
            assert!(linalg::max_abs(&linalg::anticommutator(&a[i], &a[j])) < 1e-15);
        }
    }
    assert_eq!(linalg::adjoint(&a[2]), ad[2]);
}

#[test]
fn dgamma_of_identity_is_number() {
    for m in 1..=5 {
        let n = second_quantize(&linalg::identity(m)).unwrap();
        assert_eq!(n.matrix, FockOperator::number(m).unwrap().matrix);
    }
    let f = FockOperator::number_function(3, |k| k * k).unwrap();
    assert_eq!(f.matrix[(0b111, 0b111)], c(9.0));
}

#[test]
fn dgamma_on_one_particle_sector_is_the_matrix() {
    let mut rng = InstanceGenerator::rng(5);
    let o = gue(&mut rng, 5);
    let d = second_quantize(&o).unwrap();
    for i in 0..5 {
        for j in 0..5 {
            assert!((d.matrix[(1 << i, 1 << j)] - o[(i, j)]).norm() < 1e-15);
        }
    }
    assert_eq!(d.number_commutator_norm(), 0.0);
}

#[test]
fn too_many_modes_rejected() {
    assert!(matches!(ladder_matrices(MAX_MODES + 1), Err(Error::Input(_))));
    assert!(ladder_matrices(MAX_MODES).is_ok());
}

/// K_ijkl = <ij|W|kl> with W Hermitian and swap-symmetric on C^m ⊗ C^m.
fn random_two_body(rng: &mut sclab::ineq::Rand, m: usize) -> Vec<C> {
    let w = gue(rng, m * m);
    let swap = |r: usize| (r % m) * m + r / m;
    let ws = Mat::from_fn(m * m, m * m, |r, s| 0.5 * (w[(r, s)] + w[(swap(r), swap(s))]));
    let mut k = vec![c(0.0); m * m * m * m];
    for r in 0..m * m {
        for s in 0..m * m {
            k[r * m * m + s] = ws[(r, s)];
        }
    }
    k
}

#[test]
fn two_particles_match_first_quantization() {
    let m = 3;
    let n = 2.0;
    let mut rng = InstanceGenerator::rng(11);
    let t = gue(&mut rng, m);
    let k = random_two_body(&mut rng, m);
    let basis = ModeBasis::new(t.clone(), k.clone()).unwrap();
    let h = many_body_hamiltonian(&basis, n).unwrap();

    // first quantization: H = T⊗1 + 1⊗T + W/N on antisymmetric pairs
    let pairs: Vec<(usize, usize)> = (0..m).flat_map(|i| (i + 1..m).map(move |j| (i, j))).collect();
    let amp = |(i, j): (usize, usize), a: usize, b: usize| -> f64 {
        let s = std::f64::consts::FRAC_1_SQRT_2;
        if (a, b) == (i, j) {
            s
        } else if (a, b) == (j, i) {
            -s
        } else {
            0.0
        }
    };
    let h1 = |a: usize, b: usize, c2: usize, d2: usize| -> C {
        let mut v = C::new(0.0, 0.0);
        if b == d2 {
            v += t[(a, c2)];
        }
        if a == c2 {
            v += t[(b, d2)];
        }
        v + k[((a * m + b) * m + c2) * m + d2] / n
    };
    let fq = Mat::from_fn(pairs.len(), pairs.len(), |r, s| {
        let mut v = c(0.0);
        for a in 0..m {
            for b in 0..m {
                for c2 in 0..m {
                    for d2 in 0..m {
                        v += amp(pairs[r], a, b) * h1(a, b, c2, d2) * amp(pairs[s], c2, d2);
                    }
                }
            }
        }
        v
    });
    let idx: Vec<usize> = pairs.iter().map(|&(i, j)| (1 << i) | (1 << j)).collect();
    let sector = Mat::from_fn(idx.len(), idx.len(), |r, s| h.matrix[(idx[r], idx[s])]);
    let want = linalg::eigvalsh(&linalg::hermitian_part(&fq)).unwrap();
    let got = linalg::eigvalsh(&sector).unwrap();
    for (a, b) in want.iter().zip(&got) {
        assert!((a - b).abs() < 1e-12, "{want:?} vs {got:?}");
    }
    assert!(h.number_commutator_norm() < 1e-14);
}

fn wick_error(omega: &CMat) -> (f64, f64) {
    let m = omega.nrows();
    let s = gaussian_state(omega).unwrap();
    let g = reduced_density_matrix(&s);
    let mut worst = 0.0f64;
    for p in 0..m {
        for q in 0..m {
            for r in 0..m {
                for t in 0..m {
                    // <a*_p a*_q a_r a_t> = γ_tp γ_rq - γ_rp γ_tq
                    let want = g[(t, p)] * g[(r, q)] - g[(r, p)] * g[(t, q)];
                    worst = worst.max((s.four_point(p, q, r, t) - want).norm());
                }
            }
        }
    }
    (linalg::max_abs_diff(&g, omega), worst)
}

#[test]
fn quasi_free_state_reproduces_omega_and_wick() {
    let mut rng = InstanceGenerator::rng(3);
    for _ in 0..10 {
        let omega = random_one_pdm(&mut rng, 4).unwrap();
        let (e_gamma, e_wick) = wick_error(&omega);
        assert!(e_gamma < 1e-12 && e_wick < 1e-12, "{e_gamma:e} {e_wick:e}");
    }
}

#[test]
fn pure_slater_determinant_from_projector() {
    // ω = projector onto modes 0 and 2: state is |0101>
    let omega = linalg::diag_real(&[1.0, 0.0, 1.0, 0.0]);
    let s = gaussian_state(&omega).unwrap();
    assert!((s.matrix[(0b0101, 0b0101)] - c(1.0)).norm() < 1e-14);
    assert!(gaussian_state_exponential(&omega).is_err());
}

#[test]
fn product_and_exponential_forms_agree() {
    let mut rng = InstanceGenerator::rng(8);
    for _ in 0..5 {
        let u = linalg::eigh(&gue(&mut rng, 4)).unwrap().vectors;
        let lam = [0.1, 0.35, 0.6, 0.9].map(c);
        let omega = linalg::hermitian_part(&(&linalg::mul_diag_right(&u, &lam) * u.adjoint()));
        let a = gaussian_state(&omega).unwrap();
        let b = gaussian_state_exponential(&omega).unwrap();
        assert!(linalg::max_abs_diff(&a.matrix, &b.matrix) < 1e-12);
    }
}

#[test]
fn omega_outside_unit_interval_is_domain_error() {
    let omega = linalg::diag_real(&[1.2, 0.3]);
    assert!(matches!(gaussian_state(&omega), Err(Error::Domain(_))));
    let omega = linalg::diag_real(&[-0.1, 0.3]);
    assert!(matches!(gaussian_state(&omega), Err(Error::Domain(_))));
}

#[test]
fn hf_derivative_is_exact_on_quasi_free_states() {
    let m = 4;
    let n = 2.0;
    let mut rng = InstanceGenerator::rng(21);
    let basis = ModeBasis::new(gue(&mut rng, m), random_two_body(&mut rng, m)).unwrap();
    let h = many_body_hamiltonian(&basis, n).unwrap();
    for _ in 0..5 {
        let omega = random_one_pdm(&mut rng, m).unwrap();
        let s = gaussian_state(&omega).unwrap();
        let exact = exact_gamma_derivative(&s, &h);
        let hf = linalg::scale(&linalg::commutator(&hf_one_body(&basis, &omega, n), &omega), C::new(0.0, -1.0));
        assert!(linalg::max_abs_diff(&exact, &hf) < 1e-11, "{:e}", linalg::max_abs_diff(&exact, &hf));
    }
}

#[test]
fn free_modes_hf_equals_exact() {
    let m = 4;
    let mut rng = InstanceGenerator::rng(4);
    let basis = ModeBasis::new(gue(&mut rng, m), vec![c(0.0); m.pow(4)]).unwrap();
    let omega = random_one_pdm(&mut rng, m).unwrap();
    let h = many_body_hamiltonian(&basis, 2.0).unwrap();
    let exact = evolve_exact(&gaussian_state(&omega).unwrap(), &h, 0.5, 0.5).unwrap();
    let g_exact = reduced_density_matrix(&exact.last().unwrap().1);
    let g_hf = evolve_hf_modes(&basis, &omega, 2.0, 0.5, 0.01).unwrap();
    assert!(linalg::max_abs_diff(&g_exact, &g_hf) < 1e-11);
}

#[test]
fn bound_checks_on_slater_state() {
    let omega = linalg::diag_real(&[1.0, 1.0, 0.0]);
    for r in fermionic_bound_check(&omega, 2.0).unwrap() {
        assert!(r.passed, "{r:?}");
    }
    // ‖γ‖∞ = 1 > Tr γ / N when N is overstated
    let over = fermionic_bound_check(&omega, 4.0).unwrap();
    assert!(!over[1].passed);
    let a = linalg::diag_real(&[1.0, 0.0]);
    let b = linalg::diag_real(&[0.0, 1.0]);
    let r = powers_stormer_check(&a, &b).unwrap();
    assert!((r.lhs - 2.0).abs() < 1e-15 && (r.rhs - 2.0).abs() < 1e-15 && r.passed);
}

proptest! {
    #[test]
    fn create_undoes_annihilate(s in 0usize..(1 << 10), mode in 0usize..10) {
        match annihilate(s, mode) {
            Some((sign, t)) => {
                let (sign2, back) = create(t, mode).unwrap();
                prop_assert_eq!(back, s);
                prop_assert_eq!(sign * sign2, 1.0);
                prop_assert_eq!(t.count_ones() + 1, s.count_ones());
            }
            None => prop_assert_eq!(s & (1 << mode), 0),
        }
    }

    #[test]
    fn gaussian_state_has_unit_trace(seed in 0u64..1000) {
        let mut rng = InstanceGenerator::rng(seed);
        let omega = random_one_pdm(&mut rng, 3).unwrap();
        let s = gaussian_state(&omega).unwrap();
        prop_assert!((linalg::trace(&s.matrix).re - 1.0).abs() < 1e-12);
        let n = FockOperator::number(3).unwrap();
        let mean = s.expect(&n.matrix).re;
        prop_assert!((mean - linalg::trace(&omega).re).abs() < 1e-12);
    }
}
