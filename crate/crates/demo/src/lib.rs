//! WebAssembly bindings behind `www/index.html`. Each export takes a few
//! numbers, runs a small computation from `malliavin-lab` and returns a JSON
//! string for the page to plot. The same computations are available natively
//! through the `*_json` functions, which the tests call.

use malliavin_lab::bsde::{
    affine_oracle, solve_backward, BsdeSpec, Driver, MarkovState, Regime, RegressionBasis, ScalarTerminal, Terminal,
};
use malliavin_lab::pathspace::{cm_weight, make_grid, sample_ensemble, shift, Direction, Grid, PathSource};
use malliavin_lab::stats;
use malliavin_lab::wiener_calculus::{
    central_convergence_test, convergence_test, default_schedule, gradient_pairing, CylindricalFunctional, Tolerance,
};
use serde_json::{json, Value};
use wasm_bindgen::prelude::*;

/// Largest ensemble the page may request; keeps a click under a second or so.
pub const MAX_PATHS: usize = 20_000;

fn err(e: impl std::fmt::Display) -> String {
    e.to_string()
}

fn check_paths(n: usize) -> Result<(), String> {
    if n == 0 || n > MAX_PATHS {
        return Err(format!("path count must be in 1..={MAX_PATHS}, got {n}"));
    }
    Ok(())
}

fn direction(grid: &Grid, shape: &str) -> Result<Direction, String> {
    let t_end = grid.horizon();
    match shape {
        "constant" => Direction::constant(grid, &[1.0]),
        "ramp" => Direction::from_fn(grid, 1, |t| vec![2.0 * (1.0 - t / t_end)]),
        "first-half" => Direction::indicator(grid, 1, 0, 0.0, 0.5 * t_end, 2.0),
        "wave" => Direction::from_fn(grid, 1, |t| vec![(2.0 * std::f64::consts::PI * t / t_end).cos() * 2.0]),
        other => return Err(format!("unknown direction shape `{other}`")),
    }
    .map_err(err)
}

/// A handful of Brownian paths, the same paths shifted by `εh`, and the
/// Cameron-Martin weight `exp(εW(h) − ε²|h|²/2)` of each.
pub fn shifted_paths_json(epsilon: f64, shape: &str, n_show: usize, seed: u64) -> Result<Value, String> {
    check_paths(n_show)?;
    let grid = make_grid(1.0, 128).map_err(err)?;
    let ens = sample_ensemble(&grid, 1, n_show, seed).map_err(err)?;
    let h = direction(&grid, shape)?;
    let moved = shift(&ens, &h, epsilon).map_err(err)?;
    let weights = cm_weight(&h.scaled(epsilon), &ens).map_err(err)?;
    let base: Vec<Vec<f64>> = (0..n_show).map(|p| ens.values(p)).collect();
    let shifted: Vec<Vec<f64>> = (0..n_show).map(|p| moved.values(p)).collect();
    Ok(json!({
        "times": grid.times(),
        "h": h.cumulative(),
        "base": base,
        "shifted": shifted,
        "weights": weights,
    }))
}

/// Forward and central quotient errors of a cylindrical functional against
/// its gradient pairing; with `corrupt` the target is off by one and the
/// verdict should fail.
pub fn quotient_curve_json(functional: &str, n_paths: usize, seed: u64, corrupt: bool) -> Result<Value, String> {
    check_paths(n_paths)?;
    let grid = make_grid(1.0, 32).map_err(err)?;
    let ens = sample_ensemble(&grid, 1, n_paths, seed).map_err(err)?;
    let k = Direction::from_fn(&grid, 1, |t| vec![1.0 + t]).map_err(err)?;
    let h = Direction::constant(&grid, &[1.0]).map_err(err)?;
    let f = match functional {
        "sin" => CylindricalFunctional::sin(&k),
        "square" => CylindricalFunctional::square(&k),
        "exp" => CylindricalFunctional::exp(&k),
        "linear" => CylindricalFunctional::wiener(&k),
        other => return Err(format!("unknown functional `{other}`")),
    };
    let mut target = gradient_pairing(&f, &h, &ens).map_err(err)?.value;
    if corrupt {
        target.iter_mut().for_each(|v| *v += 1.0);
    }
    let eps = default_schedule();
    let fwd = convergence_test(&f, &target, &ens, &h, &eps, 1.0, Tolerance::Auto).map_err(err)?;
    let cen = central_convergence_test(&f, &target, &ens, &h, &eps, 1.0, Tolerance::Auto).map_err(err)?;
    Ok(json!({
        "functional": f.name(),
        "eps": eps,
        "forward": { "errors": fwd.errors, "slope": fwd.slope, "passed": fwd.passed },
        "central": { "errors": cen.errors, "slope": cen.slope, "passed": cen.passed },
        "floors": fwd.floors,
    }))
}

/// Regression solution of `Y = sin(W_T) − ∫βY ds − ∫Z dW` with its 10/50/90%
/// bands per node, next to the closed-form mean.
pub fn bsde_profile_json(beta: f64, n_paths: usize, seed: u64) -> Result<Value, String> {
    check_paths(n_paths)?;
    if !beta.is_finite() || beta.abs() > 5.0 {
        return Err(format!("beta must lie in [-5, 5], got {beta}"));
    }
    let grid = make_grid(1.0, 25).map_err(err)?;
    let ens = sample_ensemble(&grid, 1, n_paths, seed).map_err(err)?;
    let xi = ScalarTerminal::Sin { amp: 1.0, omega: 1.0 };
    let spec = BsdeSpec::new(
        1,
        MarkovState::brownian(1),
        Terminal::scalar(xi, 0),
        Driver::affine(0.0, -beta, &[0.0]),
        Regime::Lipschitz,
    )
    .map_err(err)?;
    let sol = solve_backward(&spec, &ens, &RegressionBasis::with_degree(5)).map_err(err)?;
    let oracle = affine_oracle(0.0, -beta, &[0.0], xi, 0, &ens, 1, seed).map_err(err)?;
    let band = |q: f64| -> Vec<f64> { (0..grid.n_nodes()).map(|i| stats::quantile(&sol.y_node(i), q)).collect() };
    let rms_gap: Vec<f64> = (0..grid.n_nodes())
        .map(|i| {
            let d: Vec<f64> = (0..n_paths).map(|p| sol.y_at(p, i) - oracle.y_at(p, i)).collect();
            stats::rms(&d)
        })
        .collect();
    Ok(json!({
        "times": grid.times(),
        "y_q10": band(0.1),
        "y_q50": band(0.5),
        "y_q90": band(0.9),
        "oracle_mean": (0..grid.n_nodes()).map(|i| stats::mean(&oracle.y_node(i))).collect::<Vec<_>>(),
        "solver_mean": (0..grid.n_nodes()).map(|i| stats::mean(&sol.y_node(i))).collect::<Vec<_>>(),
        "rms_gap": rms_gap,
        "y0": sol.y0(),
    }))
}

fn to_js(v: Result<Value, String>) -> Result<String, JsError> {
    v.map(|v| v.to_string()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn shifted_paths(epsilon: f64, shape: &str, n_show: usize, seed: u32) -> Result<String, JsError> {
    to_js(shifted_paths_json(epsilon, shape, n_show, seed as u64))
}

#[wasm_bindgen]
pub fn quotient_curve(functional: &str, n_paths: usize, seed: u32, corrupt: bool) -> Result<String, JsError> {
    to_js(quotient_curve_json(functional, n_paths, seed as u64, corrupt))
}

#[wasm_bindgen]
pub fn bsde_profile(beta: f64, n_paths: usize, seed: u32) -> Result<String, JsError> {
    to_js(bsde_profile_json(beta, n_paths, seed as u64))
}
