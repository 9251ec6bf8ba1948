use malliavin_lab::pathspace::{make_grid, sample_ensemble, wiener_integral, Direction, PathSource, WienerEnsemble};
use malliavin_lab::stats;
use malliavin_lab::wiener_calculus::*;
use proptest::prelude::*;

fn ensemble(n_paths: usize, seed: u64) -> WienerEnsemble {
    let g = make_grid(1.0, 32).unwrap();
    sample_ensemble(&g, 2, n_paths, seed).unwrap()
}

#[test]
fn smooth_matrix_quotients_converge_at_rate_one() {
    let e = ensemble(10_000, 71);
    let (fs, hs) = test_matrix(e.grid()).unwrap();
    for f in &fs {
        for h in &hs {
            let target = gradient_pairing(f, h, &e).unwrap().value;
            let r = convergence_test(f, &target, &e, h, &default_schedule(), 1.0, Tolerance::Auto).unwrap();
            assert!(r.passed, "{} {:?}", f.name(), r);
            assert!(r.slope_within(1.0, 0.2), "{} slope {:?}", f.name(), r.slope);
        }
    }
}

#[test]
fn central_quotients_converge_at_rate_two() {
    let e = ensemble(5_000, 72);
    let (fs, hs) = test_matrix(e.grid()).unwrap();
    let schedule = dyadic_schedule(2, 6);
    for f in &fs {
        for h in &hs {
            let target = gradient_pairing(f, h, &e).unwrap().value;
            let r = central_convergence_test(f, &target, &e, h, &schedule, 1.0, Tolerance::Auto).unwrap();
            assert!(r.passed, "{} {:?}", f.name(), r);
            assert!(r.slope_within(2.0, 0.2), "{} slope {:?}", f.name(), r.slope);
        }
    }
}

#[test]
fn linear_functional_has_zero_error_and_corrupted_target_fails() {
    let e = ensemble(2_000, 73);
    let (_, hs) = test_matrix(e.grid()).unwrap();
    let k = &hs[1];
    let h = &hs[0];
    let f = CylindricalFunctional::wiener(k);
    let target = gradient_pairing(&f, h, &e).unwrap().value;
    let r = convergence_test(&f, &target, &e, h, &default_schedule(), 1.0, Tolerance::Auto).unwrap();
    assert!(r.passed);
    assert!(r.errors.iter().zip(&r.floors).all(|(e, fl)| *e <= *fl), "{r:?}");

    let sq = CylindricalFunctional::square(h);
    let good = gradient_pairing(&sq, h, &e).unwrap().value;
    let r = convergence_test(&sq, &good, &e, h, &default_schedule(), 1.0, Tolerance::Auto).unwrap();
    assert!(r.passed);
    assert!(r.slope_within(1.0, 0.2), "{:?}", r.slope);
    let c = h.norm_sq();
    for (err, eps) in r.errors.iter().zip(&r.eps_schedule) {
        assert!((err - eps * c * c).abs() < 1e-8 * (1.0 + err));
    }

    let bad: Vec<f64> = good.iter().map(|v| v + 1.0).collect();
    let r = convergence_test(&sq, &bad, &e, h, &default_schedule(), 1.0, Tolerance::Auto).unwrap();
    assert!(!r.passed);
    assert!(r.errors.iter().all(|e| (e - 1.0).abs() < 0.2));
}

#[test]
fn exponential_quotient_error_is_order_epsilon() {
    let e = ensemble(20_000, 74);
    let h = Direction::from_fn(e.grid(), 2, |t| vec![0.5, 0.5 * t]).unwrap();
    let f = CylindricalFunctional::exp(&h);
    let target = gradient_pairing(&f, &h, &e).unwrap().value;
    let r = convergence_test(&f, &target, &e, &h, &default_schedule(), 1.0, Tolerance::Auto).unwrap();
    assert!(r.passed, "{r:?}");
    assert!(r.slope_within(1.0, 0.2));
}

#[test]
fn cameron_martin_on_matrix() {
    let e = ensemble(20_000, 75);
    let (fs, hs) = test_matrix(e.grid()).unwrap();
    for f in &fs {
        for h in &hs {
            let r = cameron_martin_gap(f, h, &e).unwrap();
            assert!(r.within(3.0), "{} {r:?}", f.name());
        }
    }
}

#[test]
fn duality_on_matrix() {
    let e = ensemble(20_000, 76);
    let (fs, hs) = test_matrix(e.grid()).unwrap();
    for f in &fs {
        for h in &hs {
            let r = duality_residual(f, f, h, &e).unwrap();
            assert!(r.within(3.0), "{} {r:?}", f.name());
        }
    }
}

#[test]
fn duality_linear_f_against_unit_g() {
    let e = ensemble(20_000, 77);
    let h = Direction::from_fn(e.grid(), 2, |t| vec![1.0, t]).unwrap();
    let f = CylindricalFunctional::wiener(&h);
    let one = CylindricalFunctional::constant(1.0, &h);
    let r = duality_residual(&f, &one, &h, &e).unwrap();
    assert!(r.within(3.0), "{r:?}");
    assert!((r.rhs - h.norm_sq()).abs() < 1e-12);
}

#[test]
fn skorohod_of_bounded_g_is_centred() {
    let e = ensemble(20_000, 78);
    let (fs, hs) = test_matrix(e.grid()).unwrap();
    for g in &fs {
        let d = skorohod_product(g, &hs[1], &e).unwrap();
        let est = stats::Estimate::of(&d);
        assert!(est.covers(0.0, 3.0), "{} {est:?}", g.name());
    }
}

#[test]
fn verdict_is_invariant_under_rescaling() {
    let e = ensemble(4_000, 79);
    let (fs, hs) = test_matrix(e.grid()).unwrap();
    let lambda = 2.0;
    for f in &fs {
        let h = &hs[0];
        let target = gradient_pairing(f, h, &e).unwrap().value;
        let r1 = convergence_test(f, &target, &e, h, &default_schedule(), 1.0, Tolerance::Auto).unwrap();
        let h2 = h.scaled(lambda);
        let target2: Vec<f64> = target.iter().map(|v| lambda * v).collect();
        let sched2: Vec<f64> = default_schedule().iter().map(|e| e / lambda).collect();
        let r2 = convergence_test(f, &target2, &e, &h2, &sched2, 1.0, Tolerance::Auto).unwrap();
        assert_eq!(r1.passed, r2.passed);
        for (a, b) in r1.errors.iter().zip(&r2.errors) {
            assert!((lambda * a - b).abs() <= 1e-9 * b.max(1e-12));
        }
    }
}

fn direction_strategy() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(-2.0..2.0f64, 16)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    #[test]
    fn gradient_pairing_is_linear_in_the_probe(a in direction_strategy(), b in direction_strategy(), s in -3.0..3.0f64) {
        let g = make_grid(1.0, 8).unwrap();
        let e = sample_ensemble(&g, 2, 20, 5).unwrap();
        let (fs, _) = test_matrix(&g).unwrap();
        let ka = Direction::from_density(&g, 2, a).unwrap();
        let kb = Direction::from_density(&g, 2, b).unwrap();
        let kc = ka.combine(1.0, &kb, s).unwrap();
        for f in &fs {
            let pa = gradient_pairing(f, &ka, &e).unwrap().value;
            let pb = gradient_pairing(f, &kb, &e).unwrap().value;
            let pc = gradient_pairing(f, &kc, &e).unwrap().value;
            for i in 0..pa.len() {
                prop_assert!((pc[i] - pa[i] - s * pb[i]).abs() <= 1e-10 * (1.0 + pc[i].abs()));
            }
        }
    }

    #[test]
    fn quotient_is_linear_in_the_functional(a in -2.0..2.0f64, b in -2.0..2.0f64, eps in 0.01..0.5f64) {
        let g = make_grid(1.0, 8).unwrap();
        let e = sample_ensemble(&g, 2, 20, 6).unwrap();
        let (fs, hs) = test_matrix(&g).unwrap();
        let (f1, f2) = (fs[0].clone(), fs[3].clone());
        let combo = move |paths: &dyn PathSource| -> malliavin_lab::Result<Vec<f64>> {
            let x = eval(&f1, paths)?;
            let y = eval(&f2, paths)?;
            Ok(x.iter().zip(&y).map(|(u, v)| a * u + b * v).collect())
        };
        let qc = gateaux_quotient(&combo, &e, &hs[1], eps).unwrap();
        let q1 = gateaux_quotient(&fs[0], &e, &hs[1], eps).unwrap();
        let q2 = gateaux_quotient(&fs[3], &e, &hs[1], eps).unwrap();
        for i in 0..qc.len() {
            prop_assert!((qc[i] - a * q1[i] - b * q2[i]).abs() <= 1e-9);
        }
    }

    #[test]
    fn linear_pairing_equals_inner_product(a in direction_strategy(), b in direction_strategy()) {
        let g = make_grid(1.0, 8).unwrap();
        let e = sample_ensemble(&g, 2, 10, 7).unwrap();
        let h = Direction::from_density(&g, 2, a).unwrap();
        let k = Direction::from_density(&g, 2, b).unwrap();
        let hk = malliavin_lab::pathspace::inner_h(&h, &k).unwrap();
        let p = gradient_pairing(&CylindricalFunctional::wiener(&h), &k, &e).unwrap();
        prop_assert!(p.value.iter().all(|v| *v == hk));
        let w = wiener_integral(&h, &e).unwrap();
        prop_assert_eq!(w.len(), 10);
    }
}
