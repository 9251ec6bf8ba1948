//! Euler scheme for scalar SDEs `dX = b(t,X)dt + σ(t,X)dW^j` with its
//! first-variation (tangent) process along a Cameron-Martin direction.

use std::fmt;
use std::sync::Arc;

use serde::Serialize;

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::pathspace::{shift, Direction, PathSource, WienerEnsemble};
use crate::stats;
use crate::wiener_calculus::{roundoff_floor, validate_schedule, ConvergenceReport, Tolerance};

pub type Coefficient = Arc<dyn Fn(f64, f64) -> f64 + Send + Sync>;

#[derive(Clone)]
pub struct SdeSpec {
    pub x0: f64,
    b: Coefficient,
    sigma: Coefficient,
    b_x: Coefficient,
    sigma_x: Coefficient,
    /// Brownian component driving the noise.
    pub component: usize,
    pub bound_b: Option<f64>,
    pub bound_sigma: Option<f64>,
}

impl fmt::Debug for SdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SdeSpec")
            .field("x0", &self.x0)
            .field("component", &self.component)
            .field("bound_b", &self.bound_b)
            .field("bound_sigma", &self.bound_sigma)
            .finish_non_exhaustive()
    }
}

const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;

impl SdeSpec {
    pub fn new(x0: f64, b: Coefficient, sigma: Coefficient, b_x: Coefficient, sigma_x: Coefficient) -> Result<Self> {
        let spec = SdeSpec {
            x0,
            b,
            sigma,
            b_x,
            sigma_x,
            component: 0,
            bound_b: None,
            bound_sigma: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// `dX = μX dt + νX dW`.
    pub fn geometric(x0: f64, mu: f64, nu: f64) -> Self {
        Self::new(
            x0,
            Arc::new(move |_, x| mu * x),
            Arc::new(move |_, x| nu * x),
            Arc::new(move |_, _| mu),
            Arc::new(move |_, _| nu),
        )
        .expect("linear coefficients")
        .with_bounds(mu.abs(), nu.abs())
        .expect("bounds hold")
    }

    /// `dX = σ dW`.
    pub fn additive(x0: f64, sigma: f64) -> Self {
        Self::new(
            x0,
            Arc::new(|_, _| 0.0),
            Arc::new(move |_, _| sigma),
            Arc::new(|_, _| 0.0),
            Arc::new(|_, _| 0.0),
        )
        .expect("constant coefficients")
    }

    /// Records Lipschitz bounds and checks them at the probe points.
    pub fn with_bounds(mut self, bound_b: f64, bound_sigma: f64) -> Result<Self> {
        self.bound_b = Some(bound_b);
        self.bound_sigma = Some(bound_sigma);
        self.validate()?;
        Ok(self)
    }

    pub fn driven_by(mut self, component: usize) -> Self {
        self.component = component;
        self
    }

    pub fn b(&self, t: f64, x: f64) -> f64 {
        (self.b)(t, x)
    }

    pub fn sigma(&self, t: f64, x: f64) -> f64 {
        (self.sigma)(t, x)
    }

    pub fn b_x(&self, t: f64, x: f64) -> f64 {
        (self.b_x)(t, x)
    }

    pub fn sigma_x(&self, t: f64, x: f64) -> f64 {
        (self.sigma_x)(t, x)
    }

    fn probes(&self) -> Vec<(f64, f64)> {
        let scale = self.x0.abs().max(1.0);
        let mut v = Vec::new();
        for t in [0.0, 0.25, 0.5, 1.0] {
            for u in [-2.0, -1.0, -0.3, 0.0, 0.7, 1.5] {
                v.push((t, self.x0 + u * scale));
            }
        }
        v
    }

    fn validate(&self) -> Result<()> {
        if !self.x0.is_finite() {
            return Err(invalid("X0 must be finite"));
        }
        let check = |name: &str, f: &Coefficient, df: &Coefficient, bound: Option<f64>| -> Result<()> {
            for (t, x) in self.probes() {
                let step = FD_STEP * x.abs().max(1.0);
                let fd = (f(t, x + step) - f(t, x - step)) / (2.0 * step);
                let an = df(t, x);
                if !an.is_finite() || (fd - an).abs() > FD_TOL * an.abs().max(1.0) {
                    return Err(Error::ContractViolation(format!(
                        "{name}_x disagrees with finite differences at (t={t}, x={x}): {an} vs {fd}"
                    )));
                }
                if let Some(k) = bound {
                    if an.abs() > k * (1.0 + 1e-12) {
                        return Err(Error::ContractViolation(format!(
                            "|{name}_x| = {} exceeds the bound {k} at (t={t}, x={x})",
                            an.abs()
                        )));
                    }
                }
            }
            Ok(())
        };
        check("b", &self.b, &self.b_x, self.bound_b)?;
        check("sigma", &self.sigma, &self.sigma_x, self.bound_sigma)
    }

    fn check_paths(&self, paths: &dyn PathSource) -> Result<()> {
        if self.component >= paths.dim() {
            return Err(invalid(format!(
                "noise component {} out of range for dimension {}",
                self.component,
                paths.dim()
            )));
        }
        Ok(())
    }
}

/// A scalar process on the grid nodes, row-major `[path][node]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SdePath {
    pub n_paths: usize,
    pub n_nodes: usize,
    pub seed: u64,
    pub values: Vec<f64>,
}

impl SdePath {
    pub fn path(&self, p: usize) -> &[f64] {
        &self.values[p * self.n_nodes..(p + 1) * self.n_nodes]
    }

    pub fn at(&self, p: usize, node: usize) -> f64 {
        self.values[p * self.n_nodes + node]
    }

    pub fn node(&self, node: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.at(p, node)).collect()
    }

    pub fn terminal(&self) -> Vec<f64> {
        self.node(self.n_nodes - 1)
    }
}

/// Runs `step(path, increments, out)` on every path and turns the first
/// non-finite output (smallest step, then smallest path) into a blow-up error.
fn integrate(
    paths: &dyn PathSource,
    step: impl Fn(usize, &[f64], &mut [f64]) + Sync,
) -> Result<SdePath> {
    let n_nodes = paths.grid().n_nodes();
    let row = paths.grid().n_steps() * paths.dim();
    let mut values = vec![0.0; paths.n_paths() * n_nodes];
    exec::fill_rows(&mut values, n_nodes, |p, out| {
        let mut inc = vec![0.0; row];
        paths.increments_into(p, &mut inc);
        step(p, &inc, out);
    });
    let mut worst: Option<(usize, usize)> = None;
    for p in 0..paths.n_paths() {
        if let Some(i) = values[p * n_nodes..(p + 1) * n_nodes].iter().position(|v| !v.is_finite()) {
            if worst.is_none_or(|(s, _)| i < s) {
                worst = Some((i, p));
            }
        }
    }
    if let Some((node, path)) = worst {
        return Err(Error::BlowUp { step: node - 1, path });
    }
    Ok(SdePath {
        n_paths: paths.n_paths(),
        n_nodes,
        seed: paths.seed(),
        values,
    })
}

/// `X_{i+1} = X_i + b(t_i, X_i)Δt_i + σ(t_i, X_i)ΔW_i`.
pub fn solve_sde(spec: &SdeSpec, paths: &dyn PathSource) -> Result<SdePath> {
    spec.check_paths(paths)?;
    let grid = paths.grid();
    let d = paths.dim();
    let k = spec.component;
    integrate(paths, |_, inc, out| {
        out[0] = spec.x0;
        for i in 0..grid.n_steps() {
            let t = grid.time(i);
            let x = out[i];
            out[i + 1] = x + spec.b(t, x) * grid.dt(i) + spec.sigma(t, x) * inc[i * d + k];
        }
    })
}

/// Derivative of the Euler map along `h`:
/// `N_{i+1} = N_i(1 + b_x Δt + σ_x ΔW_i) + σ ḣ_i Δt`, `N_0 = 0`.
pub fn tangent_pairing(spec: &SdeSpec, x: &SdePath, paths: &dyn PathSource, h: &Direction) -> Result<SdePath> {
    spec.check_paths(paths)?;
    paths.check_direction(h)?;
    if x.n_paths != paths.n_paths() || x.n_nodes != paths.grid().n_nodes() {
        return Err(invalid("SDE path and ensemble do not match"));
    }
    let grid = paths.grid();
    let d = paths.dim();
    let k = spec.component;
    integrate(paths, |p, inc, out| {
        let xs = x.path(p);
        out[0] = 0.0;
        for i in 0..grid.n_steps() {
            let t = grid.time(i);
            let dt = grid.dt(i);
            let n = out[i];
            out[i + 1] = n * (1.0 + spec.b_x(t, xs[i]) * dt + spec.sigma_x(t, xs[i]) * inc[i * d + k])
                + spec.sigma(t, xs[i]) * h.density_at(i)[k] * dt;
        }
    })
}

/// For each `ε`, `P = (X∘τ_{εh} − X)/ε − N^h` and its error
/// `E[sup_i |P_i|]`.
pub fn shift_remainder(
    spec: &SdeSpec,
    ensemble: &WienerEnsemble,
    h: &Direction,
    eps_schedule: &[f64],
    tolerance: Tolerance,
) -> Result<ConvergenceReport> {
    validate_schedule(eps_schedule)?;
    let x = solve_sde(spec, ensemble)?;
    let tangent = tangent_pairing(spec, &x, ensemble, h)?;
    let scale = x.values.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
    let n_nodes = x.n_nodes;
    let mut errors = Vec::new();
    let mut floors = Vec::new();
    let mut last_sup = Vec::new();
    for &eps in eps_schedule {
        let xs = solve_sde(spec, &shift(ensemble, h, eps)?)?;
        let mut sup_p = Vec::with_capacity(x.n_paths);
        let mut sup_q = Vec::with_capacity(x.n_paths);
        for p in 0..x.n_paths {
            let (mut mp, mut mq) = (0.0f64, 0.0f64);
            for i in 0..n_nodes {
                let q = (xs.at(p, i) - x.at(p, i)) / eps;
                mq = mq.max(q.abs());
                mp = mp.max((q - tangent.at(p, i)).abs());
            }
            sup_p.push(mp);
            sup_q.push(mq);
        }
        errors.push(stats::lq_norm(&sup_p, 1.0));
        floors.push(roundoff_floor(scale * n_nodes as f64, eps));
        last_sup = sup_q;
    }
    let tol = match tolerance {
        Tolerance::Auto => 10.0 * stats::std_error(&last_sup),
        Tolerance::Absolute(t) => t,
    };
    Ok(ConvergenceReport::assemble(
        "sde-shift-remainder",
        eps_schedule.to_vec(),
        1.0,
        errors,
        floors,
        tol,
        ensemble.n_paths(),
        ensemble.seed(),
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::{make_grid, sample_ensemble};

    #[test]
    fn brownian_coefficients_reproduce_w() {
        let g = make_grid(1.0, 16).unwrap();
        let e = sample_ensemble(&g, 1, 20, 1).unwrap();
        let x = solve_sde(&SdeSpec::additive(0.0, 1.0), &e).unwrap();
        for p in 0..20 {
            assert_eq!(x.path(p), e.values(p).as_slice());
        }
    }

    #[test]
    fn deterministic_constant() {
        let g = make_grid(1.0, 16).unwrap();
        let e = sample_ensemble(&g, 1, 20, 1).unwrap();
        let x = solve_sde(&SdeSpec::additive(3.5, 0.0), &e).unwrap();
        assert!(x.values.iter().all(|&v| v == 3.5));
    }

    #[test]
    fn wrong_derivative_is_rejected() {
        let r = SdeSpec::new(
            1.0,
            Arc::new(|_, x| x.sin()),
            Arc::new(|_, _| 1.0),
            Arc::new(|_, x| x.sin()),
            Arc::new(|_, _| 0.0),
        );
        assert!(matches!(r, Err(Error::ContractViolation(_))));
        assert!(SdeSpec::geometric(1.0, 0.5, 0.2).with_bounds(0.1, 0.2).is_err());
    }

    #[test]
    fn blow_up_reports_first_step() {
        let g = make_grid(1.0, 64).unwrap();
        let e = sample_ensemble(&g, 1, 4, 1).unwrap();
        let spec = SdeSpec::new(
            1e100,
            Arc::new(|_, x| x * x),
            Arc::new(|_, _| 0.0),
            Arc::new(|_, x| 2.0 * x),
            Arc::new(|_, _| 0.0),
        )
        .unwrap();
        match solve_sde(&spec, &e) {
            Err(Error::BlowUp { step, path }) => {
                assert_eq!(path, 0);
                assert_eq!(step, 1);
            }
            other => panic!("expected blow-up, got {other:?}"),
        }
    }

    #[test]
    fn additive_tangent_is_h() {
        let g = make_grid(1.0, 16).unwrap();
        let e = sample_ensemble(&g, 1, 10, 1).unwrap();
        let spec = SdeSpec::additive(0.0, 1.0);
        let h = Direction::from_fn(&g, 1, |t| vec![1.0 - t]).unwrap();
        let x = solve_sde(&spec, &e).unwrap();
        let n = tangent_pairing(&spec, &x, &e, &h).unwrap();
        for p in 0..10 {
            for (a, b) in n.path(p).iter().zip(h.cumulative()) {
                assert!((a - b).abs() < 1e-15);
            }
        }
        let zero = Direction::zero(&g, 1).unwrap();
        let n0 = tangent_pairing(&SdeSpec::geometric(1.0, 0.1, 0.3), &x, &e, &zero).unwrap();
        assert!(n0.values.iter().all(|&v| v == 0.0));
    }
}
