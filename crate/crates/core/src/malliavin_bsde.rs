//! Directional Malliavin derivatives of BSDE solutions.
//!
//! Two routes to `⟨DY, ḣ⟩` are computed on the same paths and compared:
//! the linear BSDE obtained by differentiating the scheme
//! ([`solve_linear_malliavin`]) and the Cameron-Martin difference quotient of
//! the solver itself ([`bsde_quotient`]). [`verify_malliavin`] measures the
//! gap along an `ε` schedule, and [`markovian_identity_check`] compares `Z`
//! with the derivative along a narrow bump ending at `t`.

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::bsde::{
    check_setup, collect_increments, project_z, solve_backward, BackwardSolution, BsdeSpec, DfPairing, Projector,
    Regime, RegressionBasis, StateField, XiPairing,
    with_scratch,
};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::pathspace::{shift, Direction, PathSource, WienerEnsemble};
use crate::stats::{self, Estimate};
use crate::wiener_calculus::{roundoff_floor, validate_schedule, ConvergenceReport, REPORT_SCHEMA_VERSION};

/// Where a linear solution came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub terminal: String,
    pub driver: String,
    pub n_paths: usize,
    pub seed: u64,
    /// `Y_0` of the base solve.
    pub y0: f64,
}

/// `(Ŷ^h, Ẑ^h)`, the solution of the linearised BSDE along `h`.
#[derive(Debug, Clone)]
pub struct LinearMalliavinSolution {
    pub direction: Direction,
    pub provenance: Provenance,
    n_paths: usize,
    n_nodes: usize,
    d: usize,
    /// `[path][node]`.
    yhat: Vec<f64>,
    /// `[path][step][k]`.
    zhat: Vec<f64>,
}

impl LinearMalliavinSolution {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn yhat_at(&self, path: usize, node: usize) -> f64 {
        self.yhat[path * self.n_nodes + node]
    }

    pub fn yhat_path(&self, path: usize) -> &[f64] {
        &self.yhat[path * self.n_nodes..(path + 1) * self.n_nodes]
    }

    pub fn yhat_node(&self, node: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.yhat_at(p, node)).collect()
    }

    pub fn zhat_at(&self, path: usize, step: usize) -> &[f64] {
        let o = (path * (self.n_nodes - 1) + step) * self.d;
        &self.zhat[o..o + self.d]
    }
}

/// `Y^ε = (Y∘τ_{εh} − Y)/ε` and `Z^ε` likewise, per path.
#[derive(Debug, Clone)]
pub struct QuotientSolution {
    pub epsilon: f64,
    n_paths: usize,
    n_nodes: usize,
    d: usize,
    yq: Vec<f64>,
    zq: Vec<f64>,
}

impl QuotientSolution {
    pub fn n_paths(&self) -> usize {
        self.n_paths
    }

    pub fn yq_at(&self, path: usize, node: usize) -> f64 {
        self.yq[path * self.n_nodes + node]
    }

    pub fn yq_path(&self, path: usize) -> &[f64] {
        &self.yq[path * self.n_nodes..(path + 1) * self.n_nodes]
    }

    pub fn zq_at(&self, path: usize, step: usize) -> &[f64] {
        let o = (path * (self.n_nodes - 1) + step) * self.d;
        &self.zq[o..o + self.d]
    }

    fn between(a: &BackwardSolution, b: &BackwardSolution, epsilon: f64) -> Self {
        let inv = 1.0 / epsilon;
        QuotientSolution {
            epsilon,
            n_paths: b.n_paths(),
            n_nodes: b.grid().n_nodes(),
            d: b.spec().d,
            yq: a.y.iter().zip(&b.y).map(|(x, y)| (x - y) * inv).collect(),
            zq: a.z.iter().zip(&b.z).map(|(x, y)| (x - y) * inv).collect(),
        }
    }
}

/// Everything the linear sweep reads that does not depend on `h`.
struct Linearization<'a> {
    spec: &'a BsdeSpec,
    base: &'a BackwardSolution,
    basis: RegressionBasis,
    state: StateField,
    incs: Vec<f64>,
    xi: XiPairing,
    df: DfPairing,
    /// Per-step projections, built on first use; repeated sweeps share them.
    projectors: Vec<OnceLock<Projector>>,
}

impl<'a> Linearization<'a> {
    fn new(spec: &'a BsdeSpec, base: &'a BackwardSolution, paths: &dyn PathSource, basis: &RegressionBasis) -> Result<Self> {
        let xi = spec
            .xi_pairing()
            .ok_or_else(|| Error::ContractViolation("the terminal condition has no derivative pairing".into()))?;
        let df = spec
            .f_pairing()
            .ok_or_else(|| Error::ContractViolation("the driver has no state-derivative pairing".into()))?;
        check_setup(spec, paths, basis)?;
        if base.fits().len() != paths.grid().n_steps() {
            return Err(invalid("the base solution must come from solve_backward"));
        }
        if base.basis() != basis {
            return Err(invalid("the base solution was fitted with a different basis"));
        }
        if !base.grid().is_compatible(paths.grid()) || base.n_paths() != paths.n_paths() || base.seed() != paths.seed() {
            return Err(Error::GridMismatch("the base solution was computed on other paths".into()));
        }
        Ok(Linearization {
            spec,
            base,
            basis: *basis,
            state: spec.state.evaluate(paths)?,
            incs: collect_increments(paths),
            xi,
            df,
            projectors: (0..paths.grid().n_steps()).map(|_| OnceLock::new()).collect(),
        })
    }

    fn projector(&self, step: usize) -> Result<&Projector> {
        let slot = &self.projectors[step];
        if let Some(p) = slot.get() {
            return Ok(p);
        }
        let built = Projector::build(&self.basis, &self.state, step, step)?;
        Ok(slot.get_or_init(|| built))
    }

    /// Backward sweep of the linearised scheme from `N` down to `stop`.
    ///
    /// Differentiating `y₁ = c + f(c, Z)Δt`, `Y = c + f(y₁, Z)Δt` with the
    /// projections held fixed gives the two passes below; the projection of
    /// a shifted W-type state is unchanged, so this is also the `ε → 0`
    /// limit of the re-fitted quotient.
    fn solve(&self, tan: &StateField, stop: usize) -> Result<(Vec<f64>, Vec<f64>)> {
        let grid = self.base.grid();
        let n = grid.n_steps();
        let n_paths = self.base.n_paths();
        let d = self.spec.d;
        let drv = &self.spec.driver;
        let mut yhat = vec![0.0; n_paths * (n + 1)];
        let mut zhat = vec![0.0; n_paths * n * d];
        let mut next: Vec<f64> = (0..n_paths).map(|p| (self.xi)(self.state.at(p, n), tan.at(p, n))).collect();
        for (p, v) in next.iter().enumerate() {
            yhat[p * (n + 1) + n] = *v;
        }
        for i in (stop..n).rev() {
            let (t, dt) = (grid.time(i), grid.dt(i));
            let pr = self.projector(i)?;
            let chat = pr.fitted(&pr.fit(&next));
            let (_, zh) = project_z(pr, &next, &chat, &self.incs, i, n, d, dt);
            let yi = exec::map_paths(n_paths, |p| {
                let s = self.state.at(p, i);
                let ds = tan.at(p, i);
                let c = self.base.cond[p * n + i];
                let z = self.base.z_at(p, i);
                with_scratch(d, |fz| {
                    let mut lin = |y: f64, yh: f64| {
                        drv.f_z(t, s, y, z, fz);
                        let dz: f64 = fz.iter().zip(&zh).map(|(a, col)| a * col[p]).sum();
                        (self.df)(t, s, ds, y, z) + drv.f_y(t, s, y, z) * yh + dz
                    };
                    let y1 = c + drv.f(t, s, c, z) * dt;
                    let yh1 = chat[p] + lin(c, chat[p]) * dt;
                    chat[p] + lin(y1, yh1) * dt
                })
            });
            if let Some(p) = yi.iter().position(|v| !v.is_finite()) {
                return Err(Error::BlowUp { step: i, path: p });
            }
            for p in 0..n_paths {
                yhat[p * (n + 1) + i] = yi[p];
                for k in 0..d {
                    zhat[(p * n + i) * d + k] = zh[k][p];
                }
            }
            next = yi;
        }
        Ok((yhat, zhat))
    }

    fn provenance(&self) -> Provenance {
        Provenance {
            terminal: self.spec.terminal.name().to_string(),
            driver: self.spec.driver.name().to_string(),
            n_paths: self.base.n_paths(),
            seed: self.base.seed(),
            y0: self.base.y0(),
        }
    }
}

/// Solves `Ŷ_s = ⟨Dξ, ḣ⟩ + ∫_s^T (⟨Df, ḣ⟩ + f_y Ŷ + f_z·Ẑ) dr − ∫_s^T Ẑ·dW`
/// with `(Y, Z)` read from `base`, by the same regression scheme.
pub fn solve_linear_malliavin(
    spec: &BsdeSpec,
    base: &BackwardSolution,
    h: &Direction,
    paths: &dyn PathSource,
    basis: &RegressionBasis,
) -> Result<LinearMalliavinSolution> {
    let lin = Linearization::new(spec, base, paths, basis)?;
    let tan = spec.state.tangent(paths, h)?;
    let (yhat, zhat) = lin.solve(&tan, 0)?;
    Ok(LinearMalliavinSolution {
        direction: h.clone(),
        provenance: lin.provenance(),
        n_paths: paths.n_paths(),
        n_nodes: paths.grid().n_nodes(),
        d: spec.d,
        yhat,
        zhat,
    })
}

/// Re-solves on `ensemble + εh`, re-fitting every regression on the shifted
/// data, and forms the per-path quotients against `base`.
pub fn bsde_quotient(
    spec: &BsdeSpec,
    base: &BackwardSolution,
    ensemble: &WienerEnsemble,
    h: &Direction,
    epsilon: f64,
) -> Result<QuotientSolution> {
    if epsilon == 0.0 || !epsilon.is_finite() {
        return Err(invalid("epsilon must be non-zero and finite"));
    }
    if base.n_paths() != ensemble.n_paths() || !base.grid().is_compatible(ensemble.grid()) {
        return Err(Error::GridMismatch("the base solution was computed on other paths".into()));
    }
    let shifted = shift(ensemble, h, epsilon)?;
    let moved = solve_backward(spec, &shifted, base.basis())?;
    Ok(QuotientSolution::between(&moved, base, epsilon))
}

/// The quotient of the frozen solution functional: `base`'s regression
/// coefficients evaluated on shifted and unshifted paths. Node `i` reads
/// only the state at `t_i`, so the quotient there ignores `ḣ` after `t_i`.
pub fn frozen_quotient(
    base: &BackwardSolution,
    ensemble: &WienerEnsemble,
    h: &Direction,
    epsilon: f64,
) -> Result<QuotientSolution> {
    if epsilon == 0.0 || !epsilon.is_finite() {
        return Err(invalid("epsilon must be non-zero and finite"));
    }
    let at_rest = base.evaluate_on(ensemble)?;
    let moved = base.evaluate_on(&shift(ensemble, h, epsilon)?)?;
    Ok(QuotientSolution::between(&moved, &at_rest, epsilon))
}

/// Convergence of both components of the quotient.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MalliavinReport {
    pub label: String,
    pub p: f64,
    /// `E[sup_t |Y^ε_t − Ŷ_t|^p]^{1/p}`.
    pub y: ConvergenceReport,
    /// `E[(∫‖Z^ε − Ẑ‖² dt)^{p/2}]^{1/p}`.
    pub z: ConvergenceReport,
    pub passed: bool,
}

impl MalliavinReport {
    /// Columns `eps,y_error,y_stderr,y_floor,z_error,z_stderr,z_floor`; the
    /// verdict tolerances are constant along the schedule and live in
    /// [`summary_json`](Self::summary_json).
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,y_error,y_stderr,y_floor,z_error,z_stderr,z_floor\n");
        for i in 0..self.y.eps_schedule.len() {
            s.push_str(&format!(
                "{:e},{:e},{:e},{:e},{:e},{:e},{:e}\n",
                self.y.eps_schedule[i],
                self.y.errors[i],
                self.y.stderrs[i],
                self.y.floors[i],
                self.z.errors[i],
                self.z.stderrs[i],
                self.z.floors[i]
            ));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "label": self.label,
            "p": self.p,
            "passed": self.passed,
            "y": self.y.summary_json(),
            "z": self.z.summary_json(),
        })
    }
}

/// Relative size of the regression noise floor added to the round-off floor.
pub const REGRESSION_FLOOR: f64 = 1e-6;

/// Runs the base solve, the linear solve and one re-fitted shifted solve per
/// `ε`, and reports the `L^p` gaps of `Y` (sup over the grid) and `Z`
/// (`L²(dt)` over the grid).
///
/// The Lipschitz regime needs `p ∈ (1, 2)`, the quadratic one any `p > 1`.
/// The pass threshold is ten standard errors of the corresponding norm of
/// `(Ŷ, Ẑ)`.
pub fn verify_malliavin(
    spec: &BsdeSpec,
    ensemble: &WienerEnsemble,
    h: &Direction,
    eps_schedule: &[f64],
    p: f64,
    basis: &RegressionBasis,
) -> Result<MalliavinReport> {
    validate_schedule(eps_schedule)?;
    let ok = match spec.regime {
        Regime::Lipschitz => p > 1.0 && p < 2.0,
        Regime::Quadratic => p > 1.0 && p.is_finite(),
    };
    if !ok {
        return Err(invalid(format!("p = {p} is outside the range allowed for the {:?} regime", spec.regime)));
    }
    let base = solve_backward(spec, ensemble, basis)?;
    let lin = solve_linear_malliavin(spec, &base, h, ensemble, basis)?;
    let grid = ensemble.grid();
    let (n, n_paths, d) = (grid.n_steps(), ensemble.n_paths(), spec.d);

    let sup_y = |p_: usize, yq: &dyn Fn(usize) -> f64| (0..=n).map(|i| (yq(i) - lin.yhat_at(p_, i)).abs()).fold(0.0, f64::max);
    let l2_z = |p_: usize, zq: &dyn Fn(usize) -> Vec<f64>| {
        (0..n)
            .map(|i| {
                let a = zq(i);
                let b = lin.zhat_at(p_, i);
                a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>() * grid.dt(i)
            })
            .sum::<f64>()
            .sqrt()
    };
    let yhat_norm: Vec<f64> = (0..n_paths).map(|q| sup_y(q, &|_| 0.0)).collect();
    let zhat_norm: Vec<f64> = (0..n_paths).map(|q| l2_z(q, &|_| vec![0.0; d])).collect();

    let scale_y = base.y.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
    let scale_z = base.z.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
    let dt_min = grid.steps().iter().cloned().fold(f64::INFINITY, f64::min);
    let mut y_err = Vec::with_capacity(eps_schedule.len());
    let mut z_err = Vec::with_capacity(eps_schedule.len());
    let mut y_floor = Vec::with_capacity(eps_schedule.len());
    let mut z_floor = Vec::with_capacity(eps_schedule.len());
    for &eps in eps_schedule {
        let q = bsde_quotient(spec, &base, ensemble, h, eps)?;
        let ys: Vec<f64> = (0..n_paths).map(|k| sup_y(k, &|i| q.yq_at(k, i))).collect();
        let zs: Vec<f64> = (0..n_paths).map(|k| l2_z(k, &|i| q.zq_at(k, i).to_vec())).collect();
        y_err.push(stats::lq_norm(&ys, p));
        z_err.push(stats::lq_norm(&zs, p));
        y_floor.push(roundoff_floor(scale_y * (n + 1) as f64, eps) + REGRESSION_FLOOR * scale_y);
        z_floor.push(roundoff_floor(scale_y * (n + 1) as f64 / dt_min.sqrt(), eps) + REGRESSION_FLOOR * scale_z);
    }
    let label = format!("malliavin[{} | {}]", spec.terminal.name(), spec.driver.name());
    let y = ConvergenceReport::assemble(
        format!("{label}:Y"),
        eps_schedule.to_vec(),
        p,
        y_err,
        y_floor,
        10.0 * stats::std_error(&yhat_norm),
        n_paths,
        ensemble.seed(),
    );
    let z = ConvergenceReport::assemble(
        format!("{label}:Z"),
        eps_schedule.to_vec(),
        p,
        z_err,
        z_floor,
        10.0 * stats::std_error(&zhat_norm),
        n_paths,
        ensemble.seed(),
    );
    let passed = y.passed && z.passed;
    Ok(MalliavinReport { label, p, y, z, passed })
}

/// Bump width used for the diagonal identity, in grid cells.
pub const DEFAULT_BUMP_CELLS: usize = 4;

/// Per-node comparison of `Z^k_t` with `⟨DY_t, ḣ_bump⟩`, the bump being
/// mass-normalised and ending at `t`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentityNode {
    pub node: usize,
    pub t: f64,
    /// `‖Z − Ŷ^bump‖_{L²} / ‖Z‖_{L²}`.
    pub relative_l2: f64,
    pub mean_z: f64,
    pub mean_derivative: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdentitySummary {
    pub component: usize,
    pub width: f64,
    pub nodes: Vec<IdentityNode>,
    pub max_relative_l2: f64,
    /// Relative `L²` residual pooled over all checked nodes.
    pub pooled_relative_l2: f64,
}

impl IdentitySummary {
    /// Columns `node,t,relative_l2,mean_z,mean_derivative`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("node,t,relative_l2,mean_z,mean_derivative\n");
        for r in &self.nodes {
            s.push_str(&format!("{},{:e},{:e},{:e},{:e}\n", r.node, r.t, r.relative_l2, r.mean_z, r.mean_derivative));
        }
        s
    }
}

/// Checks `(D_tY_t)^k = Z^k_t` at the nodes nearest to `times`.
///
/// For each node `j` a bump of the given `width` (time units) ending at
/// `t_j` is built and the linear BSDE is swept from `T` down to `j`; its
/// value at `t_j` approximates `D_tY_t`. Nodes need a full bump inside
/// `[0, t_j]` and at least one step after `t_j`.
pub fn markovian_identity_check(
    spec: &BsdeSpec,
    solution: &BackwardSolution,
    ensemble: &WienerEnsemble,
    times: &[f64],
    width: f64,
    component: usize,
) -> Result<IdentitySummary> {
    if component >= spec.d {
        return Err(invalid("component out of range"));
    }
    if times.is_empty() {
        return Err(invalid("no evaluation times given"));
    }
    let basis = *solution.basis();
    let lin = Linearization::new(spec, solution, ensemble, &basis)?;
    let grid = ensemble.grid();
    let mut nodes = Vec::with_capacity(times.len());
    let (mut num, mut den) = (0.0, 0.0);
    for &t in times {
        let j = grid.nearest_node(t);
        if j == 0 || j >= grid.n_steps() {
            return Err(invalid(format!("time {t} has no interior node")));
        }
        let bump = Direction::bump(grid, spec.d, component, grid.time(j), width)?;
        if grid.time(j) - width < -1e-9 * grid.horizon() {
            return Err(invalid(format!("a bump of width {width} does not fit before t = {}", grid.time(j))));
        }
        let tan = spec.state.tangent(ensemble, &bump)?;
        let (yhat, _) = lin.solve(&tan, j)?;
        let n_nodes = grid.n_nodes();
        let deriv: Vec<f64> = (0..ensemble.n_paths()).map(|p| yhat[p * n_nodes + j]).collect();
        let z = solution.z_step(j, component);
        let diff: Vec<f64> = z.iter().zip(&deriv).map(|(a, b)| a - b).collect();
        let (rn, rd) = (stats::rms(&diff), stats::rms(&z));
        num += rn * rn;
        den += rd * rd;
        nodes.push(IdentityNode {
            node: j,
            t: grid.time(j),
            relative_l2: rn / rd,
            mean_z: stats::mean(&z),
            mean_derivative: stats::mean(&deriv),
        });
    }
    let max_relative_l2 = nodes.iter().map(|r| r.relative_l2).fold(0.0, f64::max);
    Ok(IdentitySummary {
        component,
        width,
        nodes,
        max_relative_l2,
        pooled_relative_l2: (num / den).sqrt(),
    })
}

/// MC estimate of `Ŷ_0`, the derivative of `Y_0` along the linear solution's
/// direction.
pub fn initial_derivative(lin: &LinearMalliavinSolution) -> Estimate {
    Estimate::of(&lin.yhat_node(0))
}
