use std::sync::Arc;

use malliavin_lab::bsde::{
    solve_backward, BsdeSpec, Driver, MarkovState, Regime, RegressionBasis, ScalarTerminal, StateVariable, Terminal,
};
use malliavin_lab::forward_sde::SdeSpec;
use malliavin_lab::malliavin_bsde::{
    bsde_quotient, frozen_quotient, initial_derivative, markovian_identity_check, solve_linear_malliavin,
    verify_malliavin, DEFAULT_BUMP_CELLS,
};
use malliavin_lab::pathspace::{inner_h, make_grid, sample_ensemble, wiener_integral, Direction, PathSource, WienerEnsemble};
use malliavin_lab::stats;
use malliavin_lab::wiener_calculus::{dyadic_schedule, gradient_pairing, CylindricalFunctional};

const SIN: ScalarTerminal = ScalarTerminal::Sin { amp: 1.0, omega: 1.0 };

fn ensemble(n_steps: usize, n_paths: usize, seed: u64) -> WienerEnsemble {
    sample_ensemble(&make_grid(1.0, n_steps).unwrap(), 1, n_paths, seed).unwrap()
}

fn brownian(terminal: Terminal, driver: Driver, regime: Regime) -> BsdeSpec {
    BsdeSpec::new(1, MarkovState::brownian(1), terminal, driver, regime).unwrap()
}

fn wiener_state(k: &Direction, terminal: Terminal) -> BsdeSpec {
    let state = MarkovState::new(vec![StateVariable::WienerIntegral(k.clone())]).unwrap();
    BsdeSpec::new(1, state, terminal, Driver::zero(), Regime::Lipschitz).unwrap()
}

fn k_direction(e: &WienerEnsemble) -> Direction {
    Direction::from_fn(e.grid(), 1, |t| vec![1.0 + t]).unwrap()
}

fn half_indicator(e: &WienerEnsemble) -> Direction {
    Direction::indicator(e.grid(), 1, 0, 0.0, 0.5, 1.0).unwrap()
}

#[test]
fn linear_terminal_has_constant_derivative() {
    let e = ensemble(20, 2_000, 31);
    let k = k_direction(&e);
    let h = Direction::from_fn(e.grid(), 1, |t| vec![(3.0 * t).cos()]).unwrap();
    let spec = wiener_state(&k, Terminal::scalar(ScalarTerminal::Linear { a: 0.0, b: 1.0 }, 0));
    let basis = RegressionBasis::default();
    let base = solve_backward(&spec, &e, &basis).unwrap();
    let lin = solve_linear_malliavin(&spec, &base, &h, &e, &basis).unwrap();
    let target = inner_h(&k, &h).unwrap();
    for p in 0..e.n_paths() {
        assert!(lin.yhat_path(p).iter().all(|v| (v - target).abs() < 1e-9));
        assert!((0..20).all(|i| lin.zhat_at(p, i)[0].abs() < 1e-9));
    }
    for eps in [0.5, 0.01] {
        let q = bsde_quotient(&spec, &base, &e, &h, eps).unwrap();
        for p in 0..e.n_paths() {
            assert!(q.yq_path(p).iter().all(|v| (v - target).abs() < 1e-8), "eps {eps}");
        }
    }
}

#[test]
fn discounted_sine_derivative_matches_closed_form() {
    let beta = 0.5;
    let e = ensemble(50, 50_000, 32);
    let spec = brownian(Terminal::scalar(SIN, 0), Driver::affine(0.0, -beta, &[0.0]), Regime::Lipschitz);
    let basis = RegressionBasis::with_degree(5);
    let base = solve_backward(&spec, &e, &basis).unwrap();
    let th = 0.5;
    let h = half_indicator(&e);
    let lin = solve_linear_malliavin(&spec, &base, &h, &e, &basis).unwrap();
    // D_sY_t = e^{−(β+1/2)(T−t)} cos(W_t) for s ≤ t, paired with 1_{[0, th]}.
    for node in [25, 35, 50] {
        let tau = 1.0 - e.grid().time(node);
        let (mut num, mut den) = (0.0, 0.0);
        for p in 0..e.n_paths() {
            let w = e.values(p)[node];
            let exact = (-(beta + 0.5) * tau).exp() * w.cos() * th;
            num += (lin.yhat_at(p, node) - exact).powi(2);
            den += exact * exact;
        }
        let rel = (num / den).sqrt();
        assert!(rel <= 0.03, "node {node}: {rel}");
    }
}

#[test]
fn linear_solution_is_additive_in_the_direction() {
    let e = ensemble(20, 3_000, 33);
    let spec = brownian(Terminal::scalar(SIN, 0), Driver::affine(0.2, -0.4, &[0.3]), Regime::Lipschitz);
    let basis = RegressionBasis::default();
    let base = solve_backward(&spec, &e, &basis).unwrap();
    let h1 = half_indicator(&e);
    let h2 = Direction::from_fn(e.grid(), 1, |t| vec![t * t]).unwrap();
    let sum = h1.combine(1.0, &h2, 1.0).unwrap();
    let a = solve_linear_malliavin(&spec, &base, &h1, &e, &basis).unwrap();
    let b = solve_linear_malliavin(&spec, &base, &h2, &e, &basis).unwrap();
    let c = solve_linear_malliavin(&spec, &base, &sum, &e, &basis).unwrap();
    for p in 0..e.n_paths() {
        for i in 0..=20 {
            let (x, y) = (c.yhat_at(p, i), a.yhat_at(p, i) + b.yhat_at(p, i));
            assert!((x - y).abs() <= 1e-6 * x.abs().max(1.0), "{x} vs {y}");
        }
    }
}

#[test]
fn terminal_value_is_the_pairing() {
    let e = ensemble(16, 1_000, 34);
    let k = k_direction(&e);
    let h = half_indicator(&e);
    let spec = wiener_state(&k, Terminal::square(0));
    let basis = RegressionBasis::default();
    let base = solve_backward(&spec, &e, &basis).unwrap();
    let lin = solve_linear_malliavin(&spec, &base, &h, &e, &basis).unwrap();
    let wk = wiener_integral(&k, &e).unwrap();
    let kh = inner_h(&k, &h).unwrap();
    for (p, w) in wk.iter().enumerate() {
        let expected = 2.0 * w * kh;
        assert!((lin.yhat_at(p, 16) - expected).abs() <= 1e-12 * expected.abs().max(1.0));
    }
}

#[test]
fn frozen_quotient_ignores_direction_after_t() {
    let e = ensemble(20, 2_000, 35);
    let spec = brownian(Terminal::scalar(SIN, 0), Driver::affine(0.1, -0.5, &[0.2]), Regime::Lipschitz);
    let base = solve_backward(&spec, &e, &RegressionBasis::default()).unwrap();
    let h = Direction::from_fn(e.grid(), 1, |t| vec![1.0 + t]).unwrap();
    let j = 8;
    let cut = h.truncated(e.grid().time(j));
    let full = frozen_quotient(&base, &e, &h, 0.1).unwrap();
    let trunc = frozen_quotient(&base, &e, &cut, 0.1).unwrap();
    for p in 0..e.n_paths() {
        assert_eq!(&full.yq_path(p)[..=j], &trunc.yq_path(p)[..=j]);
    }
    // The tail does matter after t.
    assert!((0..e.n_paths()).any(|p| full.yq_at(p, 20) != trunc.yq_at(p, 20)));
}

#[test]
fn central_quotient_beats_one_sided() {
    let e = ensemble(20, 10_000, 36);
    let spec = brownian(Terminal::scalar(SIN, 0), Driver::affine(0.3, 0.5, &[0.4]), Regime::Lipschitz);
    let basis = RegressionBasis::with_degree(5);
    let base = solve_backward(&spec, &e, &basis).unwrap();
    let h = half_indicator(&e);
    let lin = solve_linear_malliavin(&spec, &base, &h, &e, &basis).unwrap();
    let eps = 0.25;
    let up = bsde_quotient(&spec, &base, &e, &h, eps).unwrap();
    let dn = bsde_quotient(&spec, &base, &e, &h, -eps).unwrap();
    let gap = |f: &dyn Fn(usize, usize) -> f64| {
        let v: Vec<f64> = (0..e.n_paths())
            .map(|p| (0..=20).map(|i| (f(p, i) - lin.yhat_at(p, i)).abs()).fold(0.0, f64::max))
            .collect();
        stats::mean(&v)
    };
    let g_up = gap(&|p, i| up.yq_at(p, i));
    let g_dn = gap(&|p, i| dn.yq_at(p, i));
    let g_c = gap(&|p, i| 0.5 * (up.yq_at(p, i) + dn.yq_at(p, i)));
    assert!(g_c < g_up.min(g_dn), "{g_c} vs {g_up}, {g_dn}");
}

#[test]
fn affine_quotient_gap_has_slope_one() {
    let e = ensemble(20, 10_000, 37);
    let spec = brownian(Terminal::scalar(SIN, 0), Driver::affine(0.3, 0.5, &[0.4]), Regime::Lipschitz);
    let r = verify_malliavin(&spec, &e, &half_indicator(&e), &dyadic_schedule(2, 7), 1.5, &RegressionBasis::with_degree(5)).unwrap();
    assert!(r.y.slope_within(1.0, 0.2), "{:?}", r.y);
    assert!(r.passed);
}

#[test]
fn square_of_wiener_integral_passes() {
    let e = ensemble(32, 20_000, 38);
    let k = k_direction(&e);
    let spec = wiener_state(&k, Terminal::square(0));
    let r = verify_malliavin(&spec, &e, &half_indicator(&e), &dyadic_schedule(3, 8), 1.5, &RegressionBasis::default()).unwrap();
    assert!(r.passed, "{:?}", r);
    assert!(r.y.slope_within(1.0, 0.2), "{:?}", r.y.slope);
    assert!(r.y.monotone && r.z.monotone);
}

#[test]
fn wrong_terminal_pairing_fails() {
    let e = ensemble(32, 20_000, 39);
    let k = k_direction(&e);
    let spec = wiener_state(&k, Terminal::square(0));
    let right = spec.xi_pairing().unwrap();
    let wrong = spec.clone().with_dxi_pairing(Arc::new(move |s, tan| 2.0 * right(s, tan)));
    let r = verify_malliavin(&wrong, &e, &half_indicator(&e), &dyadic_schedule(3, 8), 1.5, &RegressionBasis::default()).unwrap();
    assert!(!r.passed);
    // The error plateaus at the size of the true derivative.
    let last = r.y.smallest_error();
    assert!(last > 0.5 * r.y.errors[0], "{:?}", r.y.errors);
}

#[test]
fn quadratic_driver_passes_for_large_and_small_p() {
    let (c, a) = (1.0, 0.5);
    let e = ensemble(50, 20_000, 40);
    let spec = brownian(Terminal::scalar(ScalarTerminal::Linear { a: 0.0, b: a }, 0), Driver::quadratic(c), Regime::Quadratic);
    let h = half_indicator(&e);
    for p in [1.5, 3.0] {
        let r = verify_malliavin(&spec, &e, &h, &dyadic_schedule(3, 8), p, &RegressionBasis::default()).unwrap();
        assert!(r.passed, "p = {p}: {r:?}");
    }
    let basis = RegressionBasis::default();
    let base = solve_backward(&spec, &e, &basis).unwrap();
    let lin = solve_linear_malliavin(&spec, &base, &h, &e, &basis).unwrap();
    // Y_t = aW_t + ca²(T−t)/2, so ⟨DY_t, 1_{[0,1/2]}⟩ = a/2 for t ≥ 1/2.
    for node in [25, 40, 50] {
        let m = stats::mean(&lin.yhat_node(node));
        assert!((m - 0.5 * a).abs() <= 0.01, "node {node}: {m}");
    }
}

#[test]
fn lipschitz_regime_rejects_large_p() {
    let e = ensemble(8, 100, 41);
    let spec = brownian(Terminal::scalar(SIN, 0), Driver::zero(), Regime::Lipschitz);
    assert!(verify_malliavin(&spec, &e, &half_indicator(&e), &dyadic_schedule(3, 8), 3.0, &RegressionBasis::default()).is_err());
}

#[test]
fn linear_solution_agrees_with_gradient_pairing() {
    let e = ensemble(20, 50_000, 42);
    let k = k_direction(&e);
    let h = half_indicator(&e);
    let spec = wiener_state(&k, Terminal::scalar(SIN, 0));
    let basis = RegressionBasis::with_degree(5);
    let base = solve_backward(&spec, &e, &basis).unwrap();
    let lin = solve_linear_malliavin(&spec, &base, &h, &e, &basis).unwrap();
    let y0 = initial_derivative(&lin).mean;
    let g = gradient_pairing(&CylindricalFunctional::sin(&k), &h, &e).unwrap();
    let est = stats::Estimate::of(&g.value);
    assert!(est.covers(y0, 3.0), "{y0} vs {est:?}");
    // E[cos(W(k))]⟨k,h⟩ = e^{−‖k‖²/2}⟨k,h⟩.
    let exact = (-0.5 * k.norm_sq()).exp() * inner_h(&k, &h).unwrap();
    assert!((y0 - exact).abs() <= 3.0 * est.stderr + 1e-3, "{y0} vs {exact}");
}

fn interior_times(e: &WienerEnsemble) -> Vec<f64> {
    let g = e.grid();
    (0..g.n_nodes()).map(|i| g.time(i)).filter(|&t| (0.2..=0.8).contains(&t)).collect()
}

fn forward_state() -> MarkovState {
    MarkovState::new(vec![StateVariable::Forward(SdeSpec::additive(0.0, 1.0))]).unwrap()
}

#[test]
fn markovian_identity_on_closed_form_scenarios() {
    let e = ensemble(50, 50_000, 43);
    let width = DEFAULT_BUMP_CELLS as f64 * e.grid().dt(0);
    let times = interior_times(&e);
    let cases = [
        (Terminal::scalar(ScalarTerminal::Linear { a: 0.0, b: 1.0 }, 0), Driver::zero(), Regime::Lipschitz, 3, 0.03),
        (Terminal::scalar(SIN, 0), Driver::affine(0.0, -0.5, &[0.0]), Regime::Lipschitz, 5, 0.05),
        (Terminal::scalar(ScalarTerminal::Linear { a: 0.0, b: 0.5 }, 0), Driver::quadratic(1.0), Regime::Quadratic, 3, 0.03),
    ];
    for (terminal, driver, regime, degree, tol) in cases {
        let spec = BsdeSpec::new(1, forward_state(), terminal, driver, regime).unwrap();
        let base = solve_backward(&spec, &e, &RegressionBasis::with_degree(degree)).unwrap();
        let s = markovian_identity_check(&spec, &base, &e, &times, width, 0).unwrap();
        assert!(s.pooled_relative_l2 <= tol, "{}: {}", spec.terminal.name(), s.pooled_relative_l2);
    }
}

#[test]
fn markovian_identity_rejects_sub_cell_bump() {
    let e = ensemble(10, 100, 44);
    let spec = BsdeSpec::new(1, forward_state(), Terminal::scalar(SIN, 0), Driver::zero(), Regime::Lipschitz).unwrap();
    let base = solve_backward(&spec, &e, &RegressionBasis::default()).unwrap();
    assert!(markovian_identity_check(&spec, &base, &e, &[0.5], 0.05, 0).is_err());
}
