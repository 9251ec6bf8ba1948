use serde::Serialize;

use super::{BsdeSpec, FeatureMap, Projector, Regime, RegressionBasis, StateField};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::pathspace::{Grid, PathSource};
use crate::stats;

/// Regression output of one backward step.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StepFit {
    pub features: FeatureMap,
    /// Coefficients of `E[Y_{i+1} | s_i]`.
    pub cond: Vec<f64>,
    /// Coefficients of each component of `Z_i`.
    pub z: Vec<Vec<f64>>,
    pub condition: f64,
}

/// Discrete `(Y, Z)` together with the per-step regressions that define it
/// as a functional of the state.
#[derive(Debug, Clone)]
pub struct BackwardSolution {
    pub(crate) spec: BsdeSpec,
    pub(crate) grid: Grid,
    pub(crate) n_paths: usize,
    pub(crate) seed: u64,
    /// `[path][node]`.
    pub(crate) y: Vec<f64>,
    /// `[path][step][k]`.
    pub(crate) z: Vec<f64>,
    /// `E[Y_{i+1} | s_i]` per path, `[path][step]`.
    pub(crate) cond: Vec<f64>,
    pub(crate) fits: Vec<StepFit>,
    pub(crate) basis: RegressionBasis,
}

impl BackwardSolution {
    pub fn spec(&self) -> &BsdeSpec {
        &self.spec
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    /// Basis the regressions were fitted with.
    pub fn basis(&self) -> &RegressionBasis {
        &self.basis
    }

    pub fn fits(&self) -> &[StepFit] {
        &self.fits
    }

    pub fn y_at(&self, path: usize, node: usize) -> f64 {
        self.y[path * self.grid.n_nodes() + node]
    }

    pub fn y_node(&self, node: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.y_at(p, node)).collect()
    }

    pub fn y_path(&self, path: usize) -> &[f64] {
        let n = self.grid.n_nodes();
        &self.y[path * n..(path + 1) * n]
    }

    pub fn z_at(&self, path: usize, step: usize) -> &[f64] {
        let d = self.spec.d;
        let o = (path * self.grid.n_steps() + step) * d;
        &self.z[o..o + d]
    }

    /// Component `k` of `Z` at `step` across paths.
    pub fn z_step(&self, step: usize, k: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.z_at(p, step)[k]).collect()
    }

    /// Mean of `Y_0`; all paths agree when the state starts deterministic.
    pub fn y0(&self) -> f64 {
        stats::mean(&self.y_node(0))
    }

    /// Evaluates the stored regression functionals on other paths (for
    /// example a shifted view) without re-fitting.
    pub fn evaluate_on(&self, paths: &dyn PathSource) -> Result<BackwardSolution> {
        if self.fits.len() != self.grid.n_steps() {
            return Err(invalid("solution carries no regression functionals"));
        }
        if !self.grid.is_compatible(paths.grid()) {
            return Err(Error::GridMismatch("solution and paths use different grids".into()));
        }
        let state = self.spec.state.evaluate(paths)?;
        let n = self.grid.n_steps();
        let n_paths = paths.n_paths();
        let d = self.spec.d;
        let mut y = vec![0.0; n_paths * (n + 1)];
        let mut z = vec![0.0; n_paths * n * d];
        let mut cond = vec![0.0; n_paths * n];
        for p in 0..n_paths {
            y[p * (n + 1) + n] = self.spec.terminal.value(state.at(p, n));
        }
        for i in (0..n).rev() {
            let fit = &self.fits[i];
            let cols = exec::map_paths(n_paths, |p| {
                let s = state.at(p, i);
                let c = fit.features.predict(&fit.cond, s);
                let zi: Vec<f64> = fit.z.iter().map(|coef| fit.features.predict(coef, s)).collect();
                let yi = sweep(&self.spec, self.grid.time(i), self.grid.dt(i), s, c, &zi);
                (c, zi, yi)
            });
            for (p, (c, zi, yi)) in cols.into_iter().enumerate() {
                cond[p * n + i] = c;
                z[(p * n + i) * d..(p * n + i + 1) * d].copy_from_slice(&zi);
                y[p * (n + 1) + i] = yi;
            }
        }
        Ok(BackwardSolution {
            spec: self.spec.clone(),
            grid: self.grid.clone(),
            n_paths,
            seed: paths.seed(),
            y,
            z,
            cond,
            fits: self.fits.clone(),
            basis: self.basis,
        })
    }

    /// Quantile summaries: `node,t,q05,q25,q50,q75,q95,mean` for `Y` and
    /// `step,t,component,q05,q25,q50,q75,q95,mean` for `Z`.
    pub fn quantile_csv(&self) -> (String, String) {
        const QS: [f64; 5] = [0.05, 0.25, 0.5, 0.75, 0.95];
        let row = |xs: &mut Vec<f64>| -> String {
            let m = stats::mean(xs);
            xs.sort_by(|a, b| a.total_cmp(b));
            let q: Vec<String> = QS.iter().map(|&q| format!("{:e}", stats::quantile_sorted(xs, q))).collect();
            format!("{},{m:e}", q.join(","))
        };
        let mut ys = String::from("node,t,q05,q25,q50,q75,q95,mean\n");
        for i in 0..self.grid.n_nodes() {
            let mut v = self.y_node(i);
            ys.push_str(&format!("{i},{:e},{}\n", self.grid.time(i), row(&mut v)));
        }
        let mut zs = String::from("step,t,component,q05,q25,q50,q75,q95,mean\n");
        for i in 0..self.grid.n_steps() {
            for k in 0..self.spec.d {
                let mut v = self.z_step(i, k);
                zs.push_str(&format!("{i},{:e},{k},{}\n", self.grid.time(i), row(&mut v)));
            }
        }
        (ys, zs)
    }
}

/// Two fixed-point passes for `y = c + f(t, s, y, z)Δt`, starting at `c`.
pub(crate) fn sweep(spec: &BsdeSpec, t: f64, dt: f64, s: &[f64], c: f64, z: &[f64]) -> f64 {
    let y1 = c + spec.driver.f(t, s, c, z) * dt;
    c + spec.driver.f(t, s, y1, z) * dt
}

/// Increments `[path][step][k]` of any path source.
pub(crate) fn collect_increments(paths: &dyn PathSource) -> Vec<f64> {
    let row = paths.grid().n_steps() * paths.dim();
    let mut out = vec![0.0; paths.n_paths() * row];
    exec::fill_rows(&mut out, row, |p, r| paths.increments_into(p, r));
    out
}

pub(crate) fn check_setup(spec: &BsdeSpec, paths: &dyn PathSource, basis: &RegressionBasis) -> Result<()> {
    basis.validate()?;
    if spec.d != paths.dim() {
        return Err(Error::DimensionMismatch {
            expected: spec.d,
            got: paths.dim(),
        });
    }
    spec.state.check_paths(paths)?;
    if paths.n_paths() < 2 {
        return Err(invalid("regression needs at least two paths"));
    }
    if spec.regime == Regime::Lipschitz {
        let lip = spec.driver.bound().unwrap_or(f64::INFINITY);
        for (i, dt) in paths.grid().steps().iter().enumerate() {
            if !(dt * lip < 1.0) {
                return Err(Error::RegimeFailure {
                    step: i,
                    detail: format!("step guard Δt·L = {} is not below 1", dt * lip),
                });
            }
        }
    }
    Ok(())
}

/// Projects `(Y_{i+1} − c_i)ΔW^k_i / Δt_i` for every `k`: the centred
/// martingale-increment estimate of `Z_i`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn project_z(
    pr: &Projector,
    next: &[f64],
    cond: &[f64],
    incs: &[f64],
    step: usize,
    n_steps: usize,
    d: usize,
    dt: f64,
) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
    let mut coefs = Vec::with_capacity(d);
    let mut values = Vec::with_capacity(d);
    for k in 0..d {
        let target: Vec<f64> = (0..next.len())
            .map(|p| (next[p] - cond[p]) * incs[(p * n_steps + step) * d + k] / dt)
            .collect();
        let coef = pr.fit(&target);
        values.push(pr.fitted(&coef));
        coefs.push(coef);
    }
    (coefs, values)
}

fn terminal_values(spec: &BsdeSpec, state: &StateField, n: usize) -> Result<Vec<f64>> {
    let v: Vec<f64> = (0..state.n_paths).map(|p| spec.terminal.value(state.at(p, n))).collect();
    if let Some(p) = v.iter().position(|x| !x.is_finite()) {
        return Err(Error::BlowUp { step: n, path: p });
    }
    Ok(v)
}

/// Backward Euler with regression conditional expectations:
/// `c_i = E[Y_{i+1}|s_i]`, `Z_i = E[(Y_{i+1} − c_i)ΔW_i|s_i]/Δt`,
/// `Y_i = c_i + f(t_i, s_i, Y_i, Z_i)Δt` by two fixed-point passes.
pub fn solve_backward(spec: &BsdeSpec, paths: &dyn PathSource, basis: &RegressionBasis) -> Result<BackwardSolution> {
    check_setup(spec, paths, basis)?;
    let grid = paths.grid().clone();
    let n = grid.n_steps();
    let n_paths = paths.n_paths();
    let d = spec.d;
    let state = spec.state.evaluate(paths)?;
    let incs = collect_increments(paths);
    let mut y = vec![0.0; n_paths * (n + 1)];
    let mut z = vec![0.0; n_paths * n * d];
    let mut cond_all = vec![0.0; n_paths * n];
    let mut fits = vec![None; n];
    let mut next = terminal_values(spec, &state, n)?;
    for (p, v) in next.iter().enumerate() {
        y[p * (n + 1) + n] = *v;
    }
    for i in (0..n).rev() {
        let (t, dt) = (grid.time(i), grid.dt(i));
        let pr = Projector::build(basis, &state, i, i)?;
        let cond_coef = pr.fit(&next);
        let cond = pr.fitted(&cond_coef);
        let (z_coef, z_vals) = project_z(&pr, &next, &cond, &incs, i, n, d, dt);
        if spec.regime == Regime::Quadratic {
            let c = spec.driver.bound().unwrap_or(f64::INFINITY);
            let zmax = (0..n_paths)
                .map(|p| (0..d).map(|k| z_vals[k][p] * z_vals[k][p]).sum::<f64>().sqrt())
                .fold(0.0f64, f64::max);
            if !(dt * c * (1.0 + zmax) < 0.5) {
                return Err(Error::RegimeFailure {
                    step: i,
                    detail: format!("quadratic step guard Δt·C·(1+max‖Z‖) = {} is not below 1/2", dt * c * (1.0 + zmax)),
                });
            }
        }
        let yi = exec::map_paths(n_paths, |p| {
            let zi: Vec<f64> = (0..d).map(|k| z_vals[k][p]).collect();
            sweep(spec, t, dt, state.at(p, i), cond[p], &zi)
        });
        if let Some(p) = yi.iter().position(|v| !v.is_finite()) {
            return Err(Error::BlowUp { step: i, path: p });
        }
        for p in 0..n_paths {
            y[p * (n + 1) + i] = yi[p];
            cond_all[p * n + i] = cond[p];
            for k in 0..d {
                z[(p * n + i) * d + k] = z_vals[k][p];
            }
        }
        fits[i] = Some(StepFit {
            features: pr.map.clone(),
            cond: cond_coef,
            z: z_coef,
            condition: pr.condition,
        });
        next = yi;
    }
    Ok(BackwardSolution {
        spec: spec.clone(),
        grid,
        n_paths,
        seed: paths.seed(),
        y,
        z,
        cond: cond_all,
        fits: fits.into_iter().map(|f| f.expect("every step fitted")).collect(),
        basis: *basis,
    })
}

/// Picard iterates with their contraction diagnostics.
#[derive(Debug, Clone)]
pub struct PicardSolution {
    pub solution: BackwardSolution,
    /// `‖Yⁿ − Y^{n−1}‖`, root mean square over paths and nodes.
    pub increments: Vec<f64>,
    /// `increments[n] / increments[n−1]`.
    pub ratios: Vec<f64>,
    /// Iterations performed; fewer than requested once an increment is zero.
    pub iterations: usize,
}

/// `Yⁿ_i = E[Yⁿ_{i+1}|s_i] + f(t_i, s_i, Y^{n−1}_i, Z^{n−1}_i)Δt` from
/// `Y⁰ = Z⁰ = 0`.
pub fn solve_picard(
    spec: &BsdeSpec,
    paths: &dyn PathSource,
    basis: &RegressionBasis,
    n_iter: usize,
) -> Result<PicardSolution> {
    if spec.regime != Regime::Lipschitz {
        return Err(Error::ContractViolation("Picard iteration requires the Lipschitz regime".into()));
    }
    check_setup(spec, paths, basis)?;
    let grid = paths.grid().clone();
    let n = grid.n_steps();
    let n_paths = paths.n_paths();
    let d = spec.d;
    let mut current = BackwardSolution {
        spec: spec.clone(),
        grid: grid.clone(),
        n_paths,
        seed: paths.seed(),
        y: vec![0.0; n_paths * (n + 1)],
        z: vec![0.0; n_paths * n * d],
        cond: vec![0.0; n_paths * n],
        fits: Vec::new(),
        basis: *basis,
    };
    if n_iter == 0 {
        return Ok(PicardSolution {
            solution: current,
            increments: vec![],
            ratios: vec![],
            iterations: 0,
        });
    }
    let state = spec.state.evaluate(paths)?;
    let incs = collect_increments(paths);
    let projectors = (0..n).map(|i| Projector::build(basis, &state, i, i)).collect::<Result<Vec<_>>>()?;
    let xi = terminal_values(spec, &state, n)?;
    let mut increments = Vec::new();
    let mut ratios = Vec::new();
    let mut iterations = 0;
    for _ in 0..n_iter {
        let prev = &current;
        let mut y = vec![0.0; n_paths * (n + 1)];
        let mut z = vec![0.0; n_paths * n * d];
        let mut cond_all = vec![0.0; n_paths * n];
        let mut fits = Vec::with_capacity(n);
        let mut next = xi.clone();
        for (p, v) in next.iter().enumerate() {
            y[p * (n + 1) + n] = *v;
        }
        for i in (0..n).rev() {
            let (t, dt) = (grid.time(i), grid.dt(i));
            let pr = &projectors[i];
            let cond_coef = pr.fit(&next);
            let cond = pr.fitted(&cond_coef);
            let (z_coef, z_vals) = project_z(pr, &next, &cond, &incs, i, n, d, dt);
            let yi = exec::map_paths(n_paths, |p| {
                cond[p] + spec.driver.f(t, state.at(p, i), prev.y_at(p, i), prev.z_at(p, i)) * dt
            });
            if let Some(p) = yi.iter().position(|v| !v.is_finite()) {
                return Err(Error::BlowUp { step: i, path: p });
            }
            for p in 0..n_paths {
                y[p * (n + 1) + i] = yi[p];
                cond_all[p * n + i] = cond[p];
                for k in 0..d {
                    z[(p * n + i) * d + k] = z_vals[k][p];
                }
            }
            fits.push(StepFit {
                features: pr.map.clone(),
                cond: cond_coef,
                z: z_coef,
                condition: pr.condition,
            });
            next = yi;
        }
        fits.reverse();
        let inc = stats::rms(&y.iter().zip(&prev.y).map(|(a, b)| a - b).collect::<Vec<_>>());
        if let Some(&last) = increments.last() {
            let r: f64 = if last > 0.0 { inc / last } else { 0.0 };
            ratios.push(r);
            let k = ratios.len();
            if k >= 3 && ratios[k - 3..].iter().all(|&r| r >= 1.0) {
                return Err(Error::Divergence { ratios });
            }
        }
        increments.push(inc);
        iterations += 1;
        current = BackwardSolution {
            spec: spec.clone(),
            grid: grid.clone(),
            n_paths,
            seed: paths.seed(),
            y,
            z,
            cond: cond_all,
            fits,
            basis: *basis,
        };
        if inc == 0.0 {
            break;
        }
    }
    Ok(PicardSolution {
        solution: current,
        increments,
        ratios,
        iterations,
    })
}

/// Root mean square of `a − b` over all paths and nodes, relative to that of
/// `b`.
pub fn relative_l2_gap(a: &BackwardSolution, b: &BackwardSolution) -> f64 {
    let num = stats::rms(&a.y.iter().zip(&b.y).map(|(x, y)| x - y).collect::<Vec<_>>());
    num / stats::rms(&b.y)
}
