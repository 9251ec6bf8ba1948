use std::sync::Arc;

use super::{shift, Direction, PathSource, WienerEnsemble};
use crate::error::{Error, Result};
use crate::exec;

/// `W(h) = Σ_i ḣ(t_i)·ΔW_i` per path.
pub fn wiener_integral(h: &Direction, paths: &dyn PathSource) -> Result<Vec<f64>> {
    paths.check_direction(h)?;
    let row = paths.grid().n_steps() * paths.dim();
    let density = h.density();
    Ok(exec::map_paths(paths.n_paths(), |p| {
        let mut inc = vec![0.0; row];
        paths.increments_into(p, &mut inc);
        inc.iter().zip(density).map(|(w, hd)| w * hd).sum()
    }))
}

/// Cameron-Martin density `exp(W(h) - ½‖h‖²_H)` per path.
pub fn cm_weight(h: &Direction, paths: &dyn PathSource) -> Result<Vec<f64>> {
    let half_norm = 0.5 * h.norm_sq();
    Ok(wiener_integral(h, paths)?
        .into_iter()
        .map(|w| (w - half_norm).exp())
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Adaptedness {
    /// The value on step `i` reads the path only up to `t_i`.
    Adapted,
    /// The value may look ahead; not admissible as an Itô integrand.
    Anticipating,
}

type StepFn = dyn Fn(usize, &[f64], &mut [f64]) + Send + Sync;

/// A step process `Z_i` evaluated from a path's node values. The closure
/// receives the step index, the full node-value array `(n_steps+1) * dim`
/// and writes `dim` components.
#[derive(Clone)]
pub struct StepProcess {
    dim: usize,
    adaptedness: Adaptedness,
    eval: Arc<StepFn>,
}

impl std::fmt::Debug for StepProcess {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("StepProcess")
            .field("dim", &self.dim)
            .field("adaptedness", &self.adaptedness)
            .finish_non_exhaustive()
    }
}

impl StepProcess {
    pub fn new(
        dim: usize,
        adaptedness: Adaptedness,
        eval: impl Fn(usize, &[f64], &mut [f64]) + Send + Sync + 'static,
    ) -> Self {
        StepProcess {
            dim,
            adaptedness,
            eval: Arc::new(eval),
        }
    }

    pub fn constant(value: Vec<f64>) -> Self {
        let dim = value.len();
        Self::new(dim, Adaptedness::Adapted, move |_, _, out| out.copy_from_slice(&value))
    }

    /// `Z_i = W(t_i)` component-wise.
    pub fn brownian(dim: usize) -> Self {
        Self::new(dim, Adaptedness::Adapted, move |i, w, out| {
            out.copy_from_slice(&w[i * dim..(i + 1) * dim])
        })
    }

    /// Same process, set to zero on steps before `first_step`.
    pub fn supported_from(self, first_step: usize) -> Self {
        let inner = self.eval.clone();
        Self::new(self.dim, self.adaptedness, move |i, w, out| {
            if i < first_step {
                out.fill(0.0);
            } else {
                inner(i, w, out)
            }
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn adaptedness(&self) -> Adaptedness {
        self.adaptedness
    }

    pub fn eval(&self, step: usize, values: &[f64], out: &mut [f64]) {
        (self.eval)(step, values, out)
    }
}

/// Per-path terms of the shifted stochastic integral identity
/// `(∫Z·dW)∘τ_h = ∫(Z∘τ_h)·dW + ∫(Z∘τ_h)·ḣ ds`.
#[derive(Debug, Clone)]
pub struct ShiftIdentity {
    /// `(∫Z·dW)∘τ_h`.
    pub shifted_integral: Vec<f64>,
    /// `∫(Z∘τ_h)·dW`.
    pub integral_of_shifted: Vec<f64>,
    /// `∫(Z∘τ_h)·ḣ ds`.
    pub drift_correction: Vec<f64>,
    /// LHS minus both right-hand terms.
    pub residual: Vec<f64>,
}

impl ShiftIdentity {
    pub fn max_abs_residual(&self) -> f64 {
        self.residual.iter().fold(0.0, |m, r| m.max(r.abs()))
    }
}

/// Evaluates both sides of the shifted stochastic integral identity on the
/// grid with left-point (Itô) sums.
pub fn shifted_stochastic_integral_identity(
    z: &StepProcess,
    h: &Direction,
    ensemble: &WienerEnsemble,
) -> Result<ShiftIdentity> {
    if z.adaptedness() != Adaptedness::Adapted {
        return Err(Error::ContractViolation(
            "integrand must be adapted for the Itô integral".into(),
        ));
    }
    let d = ensemble.dim();
    if z.dim() != d {
        return Err(Error::DimensionMismatch {
            expected: d,
            got: z.dim(),
        });
    }
    let shifted = shift(ensemble, h, 1.0)?;
    let grid = ensemble.grid();
    let n = grid.n_steps();
    let terms = exec::map_paths(ensemble.n_paths(), |p| {
        let values = shifted.values(p);
        let base_inc = ensemble.path_increments(p);
        let shifted_inc = shifted.increments(p);
        let mut zi = vec![0.0; d];
        let (mut lhs, mut rhs, mut drift) = (0.0, 0.0, 0.0);
        for i in 0..n {
            z.eval(i, &values, &mut zi);
            let hd = h.density_at(i);
            let dt = grid.dt(i);
            for k in 0..d {
                lhs += zi[k] * shifted_inc[i * d + k];
                rhs += zi[k] * base_inc[i * d + k];
                drift += zi[k] * hd[k] * dt;
            }
        }
        (lhs, rhs, drift)
    });
    let mut out = ShiftIdentity {
        shifted_integral: Vec::with_capacity(terms.len()),
        integral_of_shifted: Vec::with_capacity(terms.len()),
        drift_correction: Vec::with_capacity(terms.len()),
        residual: Vec::with_capacity(terms.len()),
    };
    for (lhs, rhs, drift) in terms {
        out.shifted_integral.push(lhs);
        out.integral_of_shifted.push(rhs);
        out.drift_correction.push(drift);
        out.residual.push(lhs - rhs - drift);
    }
    Ok(out)
}
