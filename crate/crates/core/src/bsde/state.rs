use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::forward_sde::{solve_sde, tangent_pairing, SdeSpec};
use crate::pathspace::{Direction, PathSource};

/// One coordinate of the finite-dimensional state the driver and terminal
/// condition read.
#[derive(Debug, Clone)]
pub enum StateVariable {
    /// `W^k_t`.
    Brownian(usize),
    /// `∫_0^t k̇·dW`.
    WienerIntegral(Direction),
    /// `∫_0^t W^k ds`, left-point sums.
    TimeIntegral(usize),
    /// Euler solution `X_t` of a forward SDE.
    Forward(SdeSpec),
}

/// The Markov state `s_t = (s^1_t, …, s^m_t)`.
#[derive(Debug, Clone)]
pub struct MarkovState {
    vars: Vec<StateVariable>,
}

/// State values per path and node, row-major `[path][node][m]`.
#[derive(Debug, Clone, PartialEq)]
pub struct StateField {
    pub n_paths: usize,
    pub n_nodes: usize,
    pub m: usize,
    pub data: Vec<f64>,
}

impl StateField {
    pub fn at(&self, path: usize, node: usize) -> &[f64] {
        let o = (path * self.n_nodes + node) * self.m;
        &self.data[o..o + self.m]
    }

    /// Component `j` at `node` across paths.
    pub fn column(&self, node: usize, j: usize) -> Vec<f64> {
        (0..self.n_paths).map(|p| self.at(p, node)[j]).collect()
    }
}

impl MarkovState {
    pub fn new(vars: Vec<StateVariable>) -> Result<Self> {
        if vars.is_empty() {
            return Err(invalid("a Markov state needs at least one variable"));
        }
        Ok(MarkovState { vars })
    }

    /// `(W^1_t, …, W^d_t)`.
    pub fn brownian(d: usize) -> Self {
        MarkovState {
            vars: (0..d).map(StateVariable::Brownian).collect(),
        }
    }

    pub fn variables(&self) -> &[StateVariable] {
        &self.vars
    }

    pub fn dim(&self) -> usize {
        self.vars.len()
    }

    pub fn check_paths(&self, paths: &dyn PathSource) -> Result<()> {
        for v in &self.vars {
            match v {
                StateVariable::Brownian(k) | StateVariable::TimeIntegral(k) => {
                    if *k >= paths.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: paths.dim(),
                            got: k + 1,
                        });
                    }
                }
                StateVariable::WienerIntegral(h) => paths.check_direction(h)?,
                StateVariable::Forward(spec) => {
                    if spec.component >= paths.dim() {
                        return Err(Error::DimensionMismatch {
                            expected: paths.dim(),
                            got: spec.component + 1,
                        });
                    }
                }
            }
        }
        Ok(())
    }

    pub fn evaluate(&self, paths: &dyn PathSource) -> Result<StateField> {
        self.check_paths(paths)?;
        let forwards = self
            .vars
            .iter()
            .map(|v| match v {
                StateVariable::Forward(spec) => solve_sde(spec, paths).map(Some),
                _ => Ok(None),
            })
            .collect::<Result<Vec<_>>>()?;
        let grid = paths.grid();
        let (n, d, m) = (grid.n_steps(), paths.dim(), self.vars.len());
        let n_nodes = n + 1;
        let mut data = vec![0.0; paths.n_paths() * n_nodes * m];
        exec::fill_rows(&mut data, n_nodes * m, |p, out| {
            let w = paths.values(p);
            let inc = paths.increments(p);
            for (j, v) in self.vars.iter().enumerate() {
                match v {
                    StateVariable::Brownian(k) => {
                        for i in 0..n_nodes {
                            out[i * m + j] = w[i * d + k];
                        }
                    }
                    StateVariable::WienerIntegral(h) => {
                        out[j] = 0.0;
                        for i in 0..n {
                            let s: f64 = (0..d).map(|c| h.density_at(i)[c] * inc[i * d + c]).sum();
                            out[(i + 1) * m + j] = out[i * m + j] + s;
                        }
                    }
                    StateVariable::TimeIntegral(k) => {
                        out[j] = 0.0;
                        for i in 0..n {
                            out[(i + 1) * m + j] = out[i * m + j] + w[i * d + k] * grid.dt(i);
                        }
                    }
                    StateVariable::Forward(_) => {
                        let x = forwards[j].as_ref().expect("solved above");
                        for i in 0..n_nodes {
                            out[i * m + j] = x.at(p, i);
                        }
                    }
                }
            }
        });
        Ok(StateField {
            n_paths: paths.n_paths(),
            n_nodes,
            m,
            data,
        })
    }

    /// `⟨D s_t, ḣ⟩` per path and node: the exact derivative of the discrete
    /// state along the shift `ω ↦ ω + εh` at `ε = 0`.
    pub fn tangent(&self, paths: &dyn PathSource, h: &Direction) -> Result<StateField> {
        self.check_paths(paths)?;
        paths.check_direction(h)?;
        let grid = paths.grid();
        let (n, m) = (grid.n_steps(), self.vars.len());
        let n_nodes = n + 1;
        // Deterministic tangents first, then the path-dependent SDE ones.
        let mut fixed: Vec<Option<Vec<f64>>> = Vec::with_capacity(m);
        let mut random = Vec::with_capacity(m);
        for v in &self.vars {
            match v {
                StateVariable::Brownian(k) => {
                    fixed.push(Some((0..n_nodes).map(|i| h.value_at(i)[*k]).collect()));
                    random.push(None);
                }
                StateVariable::WienerIntegral(kd) => {
                    fixed.push(Some((0..n_nodes).map(|i| kd.partial_inner(h, i)).collect()));
                    random.push(None);
                }
                StateVariable::TimeIntegral(k) => {
                    let mut acc = vec![0.0; n_nodes];
                    for i in 0..n {
                        acc[i + 1] = acc[i] + h.value_at(i)[*k] * grid.dt(i);
                    }
                    fixed.push(Some(acc));
                    random.push(None);
                }
                StateVariable::Forward(spec) => {
                    let x = solve_sde(spec, paths)?;
                    fixed.push(None);
                    random.push(Some(tangent_pairing(spec, &x, paths, h)?));
                }
            }
        }
        let mut data = vec![0.0; paths.n_paths() * n_nodes * m];
        exec::fill_rows(&mut data, n_nodes * m, |p, out| {
            for j in 0..m {
                for i in 0..n_nodes {
                    out[i * m + j] = match (&fixed[j], &random[j]) {
                        (Some(v), _) => v[i],
                        (None, Some(t)) => t.at(p, i),
                        _ => unreachable!(),
                    };
                }
            }
        });
        Ok(StateField {
            n_paths: paths.n_paths(),
            n_nodes,
            m,
            data,
        })
    }
}
