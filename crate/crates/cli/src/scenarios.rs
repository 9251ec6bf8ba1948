use std::path::PathBuf;
use std::sync::Arc;

use malliavin_lab::bsde::{
    affine_oracle, quadratic_oracle, relative_l2_gap, solve_backward, solve_picard, sup_grid_relative_l2,
    z_sup_grid_relative_l2, BackwardSolution, BsdeSpec, Driver, MarkovState, Regime, RegressionBasis,
    ScalarTerminal, StateVariable, Terminal,
};
use malliavin_lab::forward_sde::{shift_remainder, SdeSpec};
use malliavin_lab::malliavin_bsde::{markovian_identity_check, verify_malliavin, MalliavinReport};
use malliavin_lab::pathspace::{
    make_grid, sample_ensemble, shifted_stochastic_integral_identity, Direction, Grid, PathSource, StepProcess,
    WienerEnsemble,
};
use malliavin_lab::wiener_calculus::{
    cameron_martin_gap, convergence_test, dyadic_schedule, gradient_pairing, test_matrix, CylindricalFunctional,
    Tolerance,
};

use crate::config::{DirectionConfig, EnsembleConfig, GridConfig, HarnessConfig, ModelConfig, OutputConfig};
use crate::{Artifact, At, Check, CliError, ScenarioConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ScenarioInfo {
    pub name: &'static str,
    pub description: &'static str,
    /// The result the scenario exercises, in words.
    pub anchor: &'static str,
}

const CATALOG: &[ScenarioInfo] = &[
    ScenarioInfo {
        name: "shift-identities",
        description: "shifted Ito integral identity for constant, Brownian and disjoint-support integrands",
        anchor: "shift of a stochastic integral",
    },
    ScenarioInfo {
        name: "cameron-martin",
        description: "E[F(W+h)] against E[F(W) exp(W(h) - |h|^2/2)] on the 5x3 test matrix",
        anchor: "Cameron-Martin formula",
    },
    ScenarioInfo {
        name: "theorem-4.1-cylindrical",
        description: "L^q convergence of Gateaux quotients of cylindrical functionals, plus linear and corrupted controls",
        anchor: "quotient characterisation of D^{1,p}",
    },
    ScenarioInfo {
        name: "skorohod-duality",
        description: "E[F delta(Gh)] against E[G <DF, h>] on the 5x3 test matrix",
        anchor: "duality of D and delta on product elements",
    },
    ScenarioInfo {
        name: "forward-tangent",
        description: "shift remainder of geometric (mu = 0.2, nu = 0.4) and additive Euler SDEs against the tangent process",
        anchor: "differentiability of forward SDEs",
    },
    ScenarioInfo {
        name: "affine",
        description: "regression BSDE solver against the closed-form affine oracle",
        anchor: "explicit solution of affine BSDEs",
    },
    ScenarioInfo {
        name: "picard",
        description: "Picard iterates for f = -beta y, xi = sin(W_T) against the direct solver",
        anchor: "Picard iteration for Lipschitz BSDEs",
    },
    ScenarioInfo {
        name: "theorem-5.1-lipschitz",
        description: "quotients of the BSDE solution against the linearised BSDE for three Lipschitz scenarios",
        anchor: "Malliavin differentiability of Lipschitz BSDEs",
    },
    ScenarioInfo {
        name: "theorem-7.2-quadratic",
        description: "quadratic driver (c/2)z^2: exponential-transform oracle, Z = a, quotient convergence at two exponents",
        anchor: "Malliavin differentiability of quadratic BSDEs",
    },
    ScenarioInfo {
        name: "markovian-identity",
        description: "Z_t against the bump-approximated D_t Y_t on three closed-form scenarios",
        anchor: "diagonal identity D_t Y_t = Z_t",
    },
];

pub fn list_scenarios() -> &'static [ScenarioInfo] {
    CATALOG
}

pub fn info(name: &str) -> Result<&'static ScenarioInfo, CliError> {
    CATALOG.iter().find(|s| s.name == name).ok_or_else(|| {
        let names: Vec<&str> = CATALOG.iter().map(|s| s.name).collect();
        CliError::Config(format!("field `scenario`: unknown scenario `{name}`; expected one of {}", names.join(", ")))
    })
}

/// Defaults of each built-in scenario; these are the sizes the acceptance
/// suite runs at.
pub fn default_config(name: &str) -> Result<ScenarioConfig, CliError> {
    let info = info(name)?;
    let (n_steps, dim, n_paths, degree) = match info.name {
        "shift-identities" => (64, 1, 1_000, 3),
        "cameron-martin" | "skorohod-duality" => (32, 2, 100_000, 3),
        "theorem-4.1-cylindrical" => (32, 2, 10_000, 3),
        "forward-tangent" => (128, 1, 10_000, 3),
        "affine" | "theorem-7.2-quadratic" => (50, 1, 100_000, 3),
        _ => (50, 1, 100_000, 5),
    };
    let eps_schedule = match info.name {
        "theorem-5.1-lipschitz" | "theorem-7.2-quadratic" => dyadic_schedule(3, 8),
        _ => dyadic_schedule(3, 10),
    };
    let model = match info.name {
        "affine" => ModelConfig {
            alpha: 0.0,
            beta: 0.5,
            gamma: 0.0,
            c: 1.0,
            a: 0.5,
        },
        _ => ModelConfig {
            alpha: 0.3,
            beta: 0.5,
            gamma: 0.4,
            c: 1.0,
            a: 0.5,
        },
    };
    Ok(ScenarioConfig {
        scenario: info.name.to_string(),
        grid: GridConfig { horizon: 1.0, n_steps },
        ensemble: EnsembleConfig {
            dim,
            n_paths,
            seed: 20_240_601,
        },
        harness: HarnessConfig {
            eps_schedule,
            p: 1.5,
            q: 1.0,
            degree,
            ridge: RegressionBasis::default().ridge,
            bump_cells: 4,
        },
        model,
        directions: Vec::new(),
        output: OutputConfig {
            dir: PathBuf::from("out").join(info.name),
        },
    })
}

pub(crate) struct Outcome {
    pub checks: Vec<Check>,
    pub artifacts: Vec<Artifact>,
}

pub(crate) fn execute(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    match info(&cfg.scenario)?.name {
        "shift-identities" => shift_identities(cfg),
        "cameron-martin" => cameron_martin(cfg),
        "theorem-4.1-cylindrical" => cylindrical(cfg),
        "skorohod-duality" => skorohod_duality(cfg),
        "forward-tangent" => forward_tangent(cfg),
        "affine" => affine(cfg),
        "picard" => picard(cfg),
        "theorem-5.1-lipschitz" => lipschitz_malliavin(cfg),
        "theorem-7.2-quadratic" => quadratic(cfg),
        "markovian-identity" => markovian(cfg),
        other => unreachable!("catalogued scenario {other} has no runner"),
    }
}

fn grid(cfg: &ScenarioConfig) -> Result<Grid, CliError> {
    make_grid(cfg.grid.horizon, cfg.grid.n_steps).at("pathspace")
}

fn ensemble(cfg: &ScenarioConfig, g: &Grid) -> Result<WienerEnsemble, CliError> {
    sample_ensemble(g, cfg.ensemble.dim, cfg.ensemble.n_paths, cfg.ensemble.seed).at("pathspace")
}

fn require_dim(cfg: &ScenarioConfig, d: usize) -> Result<(), CliError> {
    if cfg.ensemble.dim != d {
        return Err(CliError::Config(format!(
            "field `ensemble.dim`: scenario {} needs dim = {d}, got {}",
            cfg.scenario, cfg.ensemble.dim
        )));
    }
    Ok(())
}

/// Configured directions, or `fallback` when none are given.
fn directions(cfg: &ScenarioConfig, g: &Grid, fallback: Vec<Direction>) -> Result<Vec<Direction>, CliError> {
    if cfg.directions.is_empty() {
        return Ok(fallback);
    }
    cfg.directions
        .iter()
        .map(|d: &DirectionConfig| d.build(g, cfg.ensemble.dim))
        .collect::<malliavin_lab::Result<Vec<_>>>()
        .map_err(|e| CliError::Config(format!("field `direction`: {e}")))
}

fn basis(cfg: &ScenarioConfig) -> RegressionBasis {
    RegressionBasis {
        ridge: cfg.harness.ridge,
        ..RegressionBasis::with_degree(cfg.harness.degree)
    }
}

fn first_half(g: &Grid, d: usize) -> Result<Direction, CliError> {
    Direction::indicator(g, d, 0, 0.0, 0.5 * g.horizon(), 1.0).at("pathspace")
}

fn shift_identities(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let g = grid(cfg)?;
    let e = ensemble(cfg, &g)?;
    let d = cfg.ensemble.dim;
    let smooth = Direction::from_fn(&g, d, |t| vec![1.0 + t * t; d]).at("pathspace")?;
    let h = directions(cfg, &g, vec![smooth])?.remove(0);
    let first = Direction::indicator(&g, d, 0, 0.0, 0.5 * g.horizon(), 1.5).at("pathspace")?;
    let mid = g.n_steps() / 2;
    let cases = [
        ("constant", StepProcess::constant(vec![0.7; d]), h.clone()),
        ("brownian", StepProcess::brownian(d), h),
        ("disjoint-support", StepProcess::brownian(d).supported_from(mid), first),
    ];
    let mut checks = Vec::new();
    let mut csv = String::from("integrand,max_abs_residual,max_abs_drift_correction\n");
    for (name, z, dir) in cases {
        let r = shifted_stochastic_integral_identity(&z, &dir, &e).at("pathspace")?;
        let drift = r.drift_correction.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        csv.push_str(&format!("{name},{:e},{:e}\n", r.max_abs_residual(), drift));
        checks.push(Check::at_most(format!("{name} residual"), r.max_abs_residual(), 1e-12));
        if name == "disjoint-support" {
            checks.push(Check::flag(
                "disjoint-support drift correction vanishes",
                drift == 0.0,
                drift,
                "exactly zero",
            ));
        }
    }
    Ok(Outcome {
        checks,
        artifacts: vec![Artifact::new("residuals.csv", csv)],
    })
}

fn matrix(cfg: &ScenarioConfig) -> Result<(WienerEnsemble, Vec<CylindricalFunctional>, Vec<Direction>), CliError> {
    require_dim(cfg, 2)?;
    let g = grid(cfg)?;
    let e = ensemble(cfg, &g)?;
    let (fs, hs) = test_matrix(&g).at("wiener_calculus")?;
    let hs = directions(cfg, &g, hs)?;
    Ok((e, fs, hs))
}

fn paired_csv() -> String {
    String::from("functional,direction,lhs,rhs,residual,stderr\n")
}

fn cameron_martin(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let (e, fs, hs) = matrix(cfg)?;
    let mut checks = Vec::new();
    let mut csv = paired_csv();
    for f in &fs {
        for (j, h) in hs.iter().enumerate() {
            let r = cameron_martin_gap(f, h, &e).at("wiener_calculus")?;
            csv.push_str(&format!("{},{j},{:e},{:e},{:e},{:e}\n", f.name(), r.lhs, r.rhs, r.residual, r.stderr));
            checks.push(Check::at_most(format!("{} / h{j} (in standard errors)", f.name()), r.residual / r.stderr, 3.0));
        }
    }
    Ok(Outcome {
        checks,
        artifacts: vec![Artifact::new("gaps.csv", csv)],
    })
}

fn skorohod_duality(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let (e, fs, hs) = matrix(cfg)?;
    let mut checks = Vec::new();
    let mut csv = paired_csv();
    for f in &fs {
        for (j, h) in hs.iter().enumerate() {
            let r = malliavin_lab::wiener_calculus::duality_residual(f, f, h, &e).at("wiener_calculus")?;
            csv.push_str(&format!("{},{j},{:e},{:e},{:e},{:e}\n", f.name(), r.lhs, r.rhs, r.residual, r.stderr));
            checks.push(Check::at_most(format!("{} / h{j} (in standard errors)", f.name()), r.residual / r.stderr, 3.0));
        }
    }
    Ok(Outcome {
        checks,
        artifacts: vec![Artifact::new("residuals.csv", csv)],
    })
}

fn convergence_rows(csv: &mut String, tag: &str, r: &malliavin_lab::wiener_calculus::ConvergenceReport) {
    for i in 0..r.errors.len() {
        csv.push_str(&format!(
            "{tag},{:e},{:e},{:e},{:e}\n",
            r.eps_schedule[i], r.errors[i], r.stderrs[i], r.floors[i]
        ));
    }
}

fn cylindrical(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let (e, fs, hs) = matrix(cfg)?;
    let eps = &cfg.harness.eps_schedule;
    let q = cfg.harness.q;
    let mut checks = Vec::new();
    let mut csv = String::from("case,eps,lq_error,stderr,floor\n");
    for f in &fs {
        for (j, h) in hs.iter().enumerate() {
            let target = gradient_pairing(f, h, &e).at("wiener_calculus")?.value;
            let r = convergence_test(f, &target, &e, h, eps, q, Tolerance::Auto).at("wiener_calculus")?;
            convergence_rows(&mut csv, &format!("{}/h{j}", f.name()), &r);
            let slope = r.slope.unwrap_or(f64::NAN);
            checks.push(Check::flag(
                format!("{} / h{j}", f.name()),
                r.passed && r.slope_within(1.0, 0.2),
                slope,
                "verdict passed and slope within 1 +- 0.2",
            ));
        }
    }
    let h = &hs[0];
    let linear = CylindricalFunctional::wiener(&hs[hs.len() - 1]);
    let target = gradient_pairing(&linear, h, &e).at("wiener_calculus")?.value;
    let r = convergence_test(&linear, &target, &e, h, eps, q, Tolerance::Auto).at("wiener_calculus")?;
    convergence_rows(&mut csv, "linear", &r);
    let zero = r.errors.iter().zip(&r.floors).all(|(a, b)| a <= b);
    checks.push(Check::flag("linear functional error is zero", zero && r.passed, r.smallest_error(), "every error below the round-off floor"));

    let sq = CylindricalFunctional::square(h);
    let bad: Vec<f64> = gradient_pairing(&sq, h, &e).at("wiener_calculus")?.value.iter().map(|v| v + 1.0).collect();
    let r = convergence_test(&sq, &bad, &e, h, eps, q, Tolerance::Auto).at("wiener_calculus")?;
    convergence_rows(&mut csv, "corrupted", &r);
    checks.push(Check::flag("corrupted target is rejected", !r.passed, r.smallest_error(), "verdict fails"));
    Ok(Outcome {
        checks,
        artifacts: vec![Artifact::new("convergence.csv", csv)],
    })
}

fn forward_tangent(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    let g = grid(cfg)?;
    let e = ensemble(cfg, &g)?;
    let d = cfg.ensemble.dim;
    let fallback = Direction::from_fn(&g, d, |t| vec![1.0 - 0.5 * t; d]).at("pathspace")?;
    let h = directions(cfg, &g, vec![fallback])?.remove(0);
    let eps = &cfg.harness.eps_schedule;
    let geo = shift_remainder(&SdeSpec::geometric(1.0, 0.2, 0.4), &e, &h, eps, Tolerance::Auto).at("forward_sde")?;
    let add = shift_remainder(&SdeSpec::additive(1.0, 0.7), &e, &h, eps, Tolerance::Auto).at("forward_sde")?;
    let zero = add.errors.iter().zip(&add.floors).all(|(a, b)| a <= b);
    let checks = vec![
        Check::flag(
            "geometric remainder converges at rate 1",
            geo.passed && geo.slope_within(1.0, 0.2),
            geo.slope.unwrap_or(f64::NAN),
            "verdict passed and slope within 1 +- 0.2",
        ),
        Check::flag(
            "additive remainder is zero",
            zero,
            add.errors.iter().cloned().fold(0.0, f64::max),
            "every error below the round-off floor",
        ),
    ];
    Ok(Outcome {
        checks,
        artifacts: vec![Artifact::new("geometric.csv", geo.to_csv()), Artifact::new("additive.csv", add.to_csv())],
    })
}

fn brownian_spec(terminal: Terminal, driver: Driver, regime: Regime) -> Result<BsdeSpec, CliError> {
    BsdeSpec::new(1, MarkovState::brownian(1), terminal, driver, regime).at("bsde_solver")
}

const W_T: ScalarTerminal = ScalarTerminal::Linear { a: 0.0, b: 1.0 };
const SIN: ScalarTerminal = ScalarTerminal::Sin { amp: 1.0, omega: 1.0 };

fn solution_artifacts(prefix: &str, sol: &BackwardSolution) -> Vec<Artifact> {
    let (y, z) = sol.quantile_csv();
    vec![
        Artifact::new(format!("{prefix}y_quantiles.csv"), y),
        Artifact::new(format!("{prefix}z_quantiles.csv"), z),
    ]
}

fn affine(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    require_dim(cfg, 1)?;
    let g = grid(cfg)?;
    let e = ensemble(cfg, &g)?;
    let m = &cfg.model;
    let spec = brownian_spec(Terminal::scalar(W_T, 0), Driver::affine(m.alpha, m.beta, &[m.gamma]), Regime::Lipschitz)?;
    let sol = solve_backward(&spec, &e, &basis(cfg)).at("bsde_solver")?;
    let oracle = affine_oracle(m.alpha, m.beta, &[m.gamma], W_T, 0, &e, 1, cfg.ensemble.seed).at("bsde_solver")?;
    let err = sup_grid_relative_l2(&sol, &oracle).at("bsde_solver")?;
    let mut csv = String::from("node,t,rms_error,rms_oracle\n");
    for i in 0..g.n_nodes() {
        let diff: Vec<f64> = (0..e.n_paths()).map(|p| sol.y_at(p, i) - oracle.y_at(p, i)).collect();
        csv.push_str(&format!(
            "{i},{:e},{:e},{:e}\n",
            g.time(i),
            malliavin_lab::stats::rms(&diff),
            malliavin_lab::stats::rms(&oracle.y_node(i))
        ));
    }
    let mut artifacts = vec![Artifact::new("node_errors.csv", csv)];
    artifacts.extend(solution_artifacts("", &sol));
    Ok(Outcome {
        checks: vec![Check::at_most("Y vs oracle, sup-grid relative L2", err, 0.03)],
        artifacts,
    })
}

fn picard(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    require_dim(cfg, 1)?;
    let g = grid(cfg)?;
    let e = ensemble(cfg, &g)?;
    let beta = cfg.model.beta;
    let spec = brownian_spec(Terminal::scalar(SIN, 0), Driver::affine(0.0, -beta, &[0.0]), Regime::Lipschitz)?;
    let b = basis(cfg);
    let direct = solve_backward(&spec, &e, &b).at("bsde_solver")?;
    let lip = spec.driver.bound().unwrap_or(0.0);
    let n_iter = ((5.0 * lip * g.horizon()).ceil() as usize).max(1);
    let pic = solve_picard(&spec, &e, &b, n_iter).at("bsde_solver")?;
    let gap = relative_l2_gap(&pic.solution, &direct);
    let mut csv = String::from("iteration,increment,ratio\n");
    for (k, inc) in pic.increments.iter().enumerate() {
        let ratio = if k == 0 { String::new() } else { format!("{:e}", pic.ratios[k - 1]) };
        csv.push_str(&format!("{},{inc:e},{ratio}\n", k + 1));
    }
    let worst = pic.ratios.iter().cloned().fold(0.0, f64::max);
    Ok(Outcome {
        checks: vec![
            Check::at_most(format!("gap to direct solver after {n_iter} iterations"), gap, 0.01),
            Check::at_most("largest contraction ratio", worst, 1.0 - 1e-9),
        ],
        artifacts: vec![Artifact::new("iterations.csv", csv)],
    })
}

fn malliavin_check(name: &str, r: &MalliavinReport) -> Check {
    let part = |c: &malliavin_lab::wiener_calculus::ConvergenceReport| {
        format!(
            "error {:.3e} vs tolerance {:.3e}, monotone {}, slope {:.3}",
            c.smallest_error(),
            c.tolerance,
            c.monotone,
            c.slope.unwrap_or(f64::NAN)
        )
    };
    Check::flag(name, r.passed, r.y.smallest_error(), format!("Y: {}; Z: {}", part(&r.y), part(&r.z)))
}

/// CSV and JSON summary of one quotient-convergence report.
fn malliavin_artifacts(stem: &str, r: &MalliavinReport) -> [Artifact; 2] {
    let json = serde_json::to_string_pretty(&r.summary_json()).expect("report serialises");
    [Artifact::new(format!("{stem}.csv"), r.to_csv()), Artifact::new(format!("{stem}.json"), json)]
}

fn lipschitz_malliavin(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    require_dim(cfg, 1)?;
    let g = grid(cfg)?;
    let e = ensemble(cfg, &g)?;
    let h = directions(cfg, &g, vec![first_half(&g, 1)?])?.remove(0);
    let m = &cfg.model;
    let k = Direction::constant(&g, &[1.0]).at("pathspace")?;
    let wk = MarkovState::new(vec![StateVariable::WienerIntegral(k)]).at("bsde_solver")?;
    let square = BsdeSpec::new(1, wk, Terminal::square(0), Driver::zero(), Regime::Lipschitz).at("bsde_solver")?;
    let cases = vec![
        ("zero-driver-square", square.clone()),
        (
            "affine-constants",
            brownian_spec(Terminal::scalar(SIN, 0), Driver::affine(m.alpha, m.beta, &[m.gamma]), Regime::Lipschitz)?,
        ),
        (
            "discounted-sine",
            brownian_spec(Terminal::scalar(SIN, 0), Driver::affine(0.0, -m.beta, &[0.0]), Regime::Lipschitz)?,
        ),
    ];
    let (eps, p, b) = (&cfg.harness.eps_schedule, cfg.harness.p, basis(cfg));
    let mut checks = Vec::new();
    let mut artifacts = Vec::new();
    for (name, spec) in &cases {
        let r = verify_malliavin(spec, &e, &h, eps, p, &b).at("malliavin_bsde")?;
        checks.push(malliavin_check(name, &r));
        artifacts.extend(malliavin_artifacts(name, &r));
    }
    // Negative control: doubling the terminal pairing must be detected.
    let right = square.xi_pairing().expect("square terminal has a gradient");
    let wrong = square.with_dxi_pairing(Arc::new(move |s, t| 2.0 * right(s, t)));
    let r = verify_malliavin(&wrong, &e, &h, eps, p, &b).at("malliavin_bsde")?;
    checks.push(Check::flag("doubled pairing is rejected", !r.passed, r.y.smallest_error(), "verdict fails"));
    artifacts.extend(malliavin_artifacts("doubled-pairing", &r));
    Ok(Outcome { checks, artifacts })
}

fn quadratic(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    require_dim(cfg, 1)?;
    let g = grid(cfg)?;
    let e = ensemble(cfg, &g)?;
    let (c, a) = (cfg.model.c, cfg.model.a);
    let xi = ScalarTerminal::Linear { a: 0.0, b: a };
    let spec = brownian_spec(Terminal::scalar(xi, 0), Driver::quadratic(c), Regime::Quadratic)?;
    let b = basis(cfg);
    let sol = solve_backward(&spec, &e, &b).at("bsde_solver")?;
    let oracle = quadratic_oracle(c, xi, 0, &e, 1, cfg.ensemble.seed).at("bsde_solver")?;
    let ye = sup_grid_relative_l2(&sol, &oracle).at("bsde_solver")?;
    let ze = z_sup_grid_relative_l2(&sol, &oracle, 0).at("bsde_solver")?;
    let mut checks = vec![
        Check::at_most("Y vs exponential-transform oracle", ye, 0.05),
        Check::at_most("Z vs a", ze, 0.03),
    ];
    let mut artifacts = solution_artifacts("", &sol);
    let h = directions(cfg, &g, vec![first_half(&g, 1)?])?.remove(0);
    for p in [cfg.harness.p, 2.0 * cfg.harness.p] {
        let r = verify_malliavin(&spec, &e, &h, &cfg.harness.eps_schedule, p, &b).at("malliavin_bsde")?;
        checks.push(malliavin_check(&format!("quotient convergence at p = {p}"), &r));
        artifacts.extend(malliavin_artifacts(&format!("malliavin_p{p}"), &r));
    }
    Ok(Outcome { checks, artifacts })
}

fn markovian(cfg: &ScenarioConfig) -> Result<Outcome, CliError> {
    require_dim(cfg, 1)?;
    let g = grid(cfg)?;
    let e = ensemble(cfg, &g)?;
    let state = || MarkovState::new(vec![StateVariable::Forward(SdeSpec::additive(0.0, 1.0))]).at("bsde_solver");
    let m = &cfg.model;
    let cases = vec![
        ("zero-driver-linear", Terminal::scalar(W_T, 0), Driver::zero(), Regime::Lipschitz),
        ("discounted-sine", Terminal::scalar(SIN, 0), Driver::affine(0.0, -m.beta, &[0.0]), Regime::Lipschitz),
        (
            "quadratic-linear",
            Terminal::scalar(ScalarTerminal::Linear { a: 0.0, b: m.a }, 0),
            Driver::quadratic(m.c),
            Regime::Quadratic,
        ),
    ];
    let horizon = g.horizon();
    let times: Vec<f64> = (0..g.n_nodes())
        .map(|i| g.time(i))
        .filter(|&t| t >= 0.2 * horizon - 1e-12 && t <= 0.8 * horizon + 1e-12)
        .collect();
    let width = cfg.harness.bump_cells as f64 * g.dt(0);
    let b = basis(cfg);
    let mut checks = Vec::new();
    let mut artifacts = Vec::new();
    for (name, terminal, driver, regime) in cases {
        let spec = BsdeSpec::new(1, state()?, terminal, driver, regime).at("bsde_solver")?;
        let sol = solve_backward(&spec, &e, &b).at("bsde_solver")?;
        let s = markovian_identity_check(&spec, &sol, &e, &times, width, 0).at("malliavin_bsde")?;
        checks.push(Check::at_most(format!("{name}: relative L2 residual"), s.pooled_relative_l2, 0.05));
        artifacts.push(Artifact::new(format!("{name}.csv"), s.to_csv()));
    }
    Ok(Outcome { checks, artifacts })
}
