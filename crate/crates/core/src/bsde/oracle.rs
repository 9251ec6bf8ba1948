use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use super::{BackwardSolution, ScalarTerminal};
use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::pathspace::PathSource;

/// Reference values `Y(t_i)` per path and node, with the Monte Carlo
/// standard error of each entry (zero where a closed form was used) and
/// the closed-form `Z` when available.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleSolution {
    pub n_paths: usize,
    pub n_nodes: usize,
    /// `[path][node]`.
    pub y: Vec<f64>,
    pub stderr: Vec<f64>,
    /// `∂_x Y` along the driving component, `[path][node]`.
    pub z: Option<Vec<f64>>,
}

impl OracleSolution {
    pub fn y_at(&self, path: usize, node: usize) -> f64 {
        self.y[path * self.n_nodes + node]
    }

    pub fn y_node(&self, node: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.y_at(p, node)).collect()
    }

    pub fn z_node(&self, node: usize) -> Option<Vec<f64>> {
        let z = self.z.as_ref()?;
        Some((0..self.n_paths).map(|p| z[p * self.n_nodes + node]).collect())
    }

    pub fn max_stderr(&self) -> f64 {
        self.stderr.iter().fold(0.0, |m, v| m.max(*v))
    }
}

/// Inner-sample budget of [`affine_oracle`] and [`quadratic_oracle`].
pub const NESTED_BUDGET: u64 = 400_000_000;

/// Seeded standard normals for the nested sample at `(path, node)`.
fn inner_normals(seed: u64, path: usize, node: usize, n_nodes: usize, n_inner: usize) -> impl Iterator<Item = f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x6e65_7374);
    rng.set_stream((path * n_nodes + node) as u64);
    (0..n_inner).map(move |_| <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
}

fn check_budget(paths: &dyn PathSource, n_inner: usize) -> Result<()> {
    if n_inner == 0 {
        return Err(invalid("n_inner must be positive"));
    }
    let required = paths.n_paths() as u64 * paths.grid().n_nodes() as u64 * n_inner as u64;
    if required > NESTED_BUDGET {
        return Err(Error::BudgetExceeded {
            required,
            budget: NESTED_BUDGET,
        });
    }
    Ok(())
}

/// Affine driver `α + βy + γ·z` with constant coefficients and
/// `ξ = g(W^j_T)`:
/// `Y_t = E[M_{t,T} ξ + ∫_t^T M_{t,s} α ds | F_t]` with
/// `M_{t,s} = exp(∫_t^s γ·dW − ½∫_t^s |γ|² du + ∫_t^s β du)`.
///
/// `M_{t,T}` turns `W^j` into a Brownian motion with drift `γ_j`, so
/// `Y_t = e^{βτ} E[g(W^j_t + γ_j τ + √τ N)] + α(e^{βτ} − 1)/β`, `τ = T − t`.
/// The Gaussian mean is closed-form when `g` admits it and estimated from
/// `n_inner` seeded draws otherwise.
#[allow(clippy::too_many_arguments)]
pub fn affine_oracle(
    alpha: f64,
    beta: f64,
    gamma: &[f64],
    xi: ScalarTerminal,
    component: usize,
    paths: &dyn PathSource,
    n_inner: usize,
    seed: u64,
) -> Result<OracleSolution> {
    if gamma.len() != paths.dim() {
        return Err(Error::DimensionMismatch {
            expected: paths.dim(),
            got: gamma.len(),
        });
    }
    if component >= paths.dim() {
        return Err(invalid("terminal component out of range"));
    }
    if ![alpha, beta].iter().chain(gamma).all(|v| v.is_finite()) {
        return Err(invalid("affine coefficients must be finite"));
    }
    let closed = xi.gaussian_mean(0.0, 1.0).is_some();
    if !closed {
        check_budget(paths, n_inner)?;
    }
    let grid = paths.grid();
    let horizon = grid.horizon();
    let n_nodes = grid.n_nodes();
    let d = paths.dim();
    let drift = gamma[component];
    let rows = exec::map_paths(paths.n_paths(), |p| {
        let w = paths.values(p);
        let mut y = vec![0.0; n_nodes];
        let mut se = vec![0.0; n_nodes];
        let mut z = vec![0.0; n_nodes];
        for i in 0..n_nodes {
            let tau = horizon - grid.time(i);
            let growth = (beta * tau).exp();
            let running = if beta == 0.0 { alpha * tau } else { alpha * (growth - 1.0) / beta };
            let x = w[i * d + component] + drift * tau;
            if let Some((m, dm)) = xi.gaussian_mean(x, tau) {
                y[i] = growth * m + running;
                z[i] = growth * dm;
            } else {
                let samples: Vec<f64> = inner_normals(seed, p, i, n_nodes, n_inner)
                    .map(|u| xi.value(x + tau.sqrt() * u))
                    .collect();
                let est = crate::stats::Estimate::of(&samples);
                y[i] = growth * est.mean + running;
                se[i] = growth * if n_inner > 1 { est.stderr } else { 0.0 };
            }
        }
        (y, se, z)
    });
    Ok(assemble(paths.n_paths(), n_nodes, rows, closed))
}

/// Quadratic driver `(c/2)‖z‖²` and `ξ = g(W^j_T)` through the exponential
/// transform: `Y_t = (1/c) log E[exp(cξ) | F_t]`.
///
/// Closed form for linear and constant `g`; otherwise `n_inner` seeded
/// draws, with the standard error carried through the logarithm.
pub fn quadratic_oracle(
    c: f64,
    xi: ScalarTerminal,
    component: usize,
    paths: &dyn PathSource,
    n_inner: usize,
    seed: u64,
) -> Result<OracleSolution> {
    if c == 0.0 || !c.is_finite() {
        return Err(invalid("quadratic coefficient must be non-zero and finite"));
    }
    if component >= paths.dim() {
        return Err(invalid("terminal component out of range"));
    }
    let closed = matches!(xi, ScalarTerminal::Linear { .. });
    if !closed {
        check_budget(paths, n_inner)?;
    }
    let grid = paths.grid();
    let horizon = grid.horizon();
    let n_nodes = grid.n_nodes();
    let d = paths.dim();
    const EXP_GUARD: f64 = 700.0;
    let rows = exec::map_paths(paths.n_paths(), |p| -> Result<_> {
        let w = paths.values(p);
        let mut y = vec![0.0; n_nodes];
        let mut se = vec![0.0; n_nodes];
        let mut z = vec![0.0; n_nodes];
        for i in 0..n_nodes {
            let tau = horizon - grid.time(i);
            let x = w[i * d + component];
            match xi {
                ScalarTerminal::Linear { a, b } => {
                    y[i] = a + b * x + 0.5 * c * b * b * tau;
                    z[i] = b;
                }
                _ => {
                    let mut vals = Vec::with_capacity(n_inner);
                    for u in inner_normals(seed, p, i, n_nodes, n_inner) {
                        let e = c * xi.value(x + tau.sqrt() * u);
                        if e > EXP_GUARD {
                            return Err(Error::Overflow(format!(
                                "exp({e}) in the inner expectation at node {i}, path {p}"
                            )));
                        }
                        vals.push(e.exp());
                    }
                    let est = crate::stats::Estimate::of(&vals);
                    y[i] = est.mean.ln() / c;
                    se[i] = if n_inner > 1 { est.stderr / (est.mean * c.abs()) } else { 0.0 };
                }
            }
        }
        Ok((y, se, z))
    })
    .into_iter()
    .collect::<Result<Vec<_>>>()?;
    Ok(assemble(paths.n_paths(), n_nodes, rows, closed))
}

/// `max_i ‖Y_i − Yᵒ_i‖_{L²} / max_i ‖Yᵒ_i‖_{L²}` over the grid nodes.
pub fn sup_grid_relative_l2(sol: &BackwardSolution, oracle: &OracleSolution) -> Result<f64> {
    check_shape(sol, oracle)?;
    let n_nodes = oracle.n_nodes;
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..n_nodes {
        let diff: Vec<f64> = (0..oracle.n_paths).map(|p| sol.y_at(p, i) - oracle.y_at(p, i)).collect();
        num = num.max(crate::stats::rms(&diff));
        den = den.max(crate::stats::rms(&oracle.y_node(i)));
    }
    Ok(num / den)
}

/// The same metric for component `k` of `Z` against the closed-form `Z`,
/// over steps `0..N`.
pub fn z_sup_grid_relative_l2(sol: &BackwardSolution, oracle: &OracleSolution, k: usize) -> Result<f64> {
    check_shape(sol, oracle)?;
    let Some(z) = oracle.z.as_ref() else {
        return Err(invalid("oracle has no closed-form Z"));
    };
    let (mut num, mut den) = (0.0f64, 0.0f64);
    for i in 0..sol.grid().n_steps() {
        let zs = sol.z_step(i, k);
        let zo: Vec<f64> = (0..oracle.n_paths).map(|p| z[p * oracle.n_nodes + i]).collect();
        let diff: Vec<f64> = zs.iter().zip(&zo).map(|(a, b)| a - b).collect();
        num = num.max(crate::stats::rms(&diff));
        den = den.max(crate::stats::rms(&zo));
    }
    Ok(num / den)
}

fn check_shape(sol: &BackwardSolution, oracle: &OracleSolution) -> Result<()> {
    if sol.n_paths() != oracle.n_paths || sol.grid().n_nodes() != oracle.n_nodes {
        return Err(Error::GridMismatch("solution and oracle have different shapes".into()));
    }
    Ok(())
}

fn assemble(n_paths: usize, n_nodes: usize, rows: Vec<(Vec<f64>, Vec<f64>, Vec<f64>)>, closed: bool) -> OracleSolution {
    let mut y = Vec::with_capacity(n_paths * n_nodes);
    let mut stderr = Vec::with_capacity(n_paths * n_nodes);
    let mut z = Vec::with_capacity(n_paths * n_nodes);
    for (a, b, c) in rows {
        y.extend(a);
        stderr.extend(b);
        z.extend(c);
    }
    OracleSolution {
        n_paths,
        n_nodes,
        y,
        stderr,
        z: closed.then_some(z),
    }
}
