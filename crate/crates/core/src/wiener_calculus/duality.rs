use std::sync::Arc;

use serde::Serialize;

use super::{eval, gradient_pairing, skorohod_product, CylindricalFunctional, Growth, PathFunctional};
use crate::error::{Error, Result};
use crate::pathspace::{cm_weight, make_grid, shift, Direction, Grid, WienerEnsemble};
use crate::stats;

/// A paired Monte Carlo comparison of two estimators of the same number.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PairedResidual {
    pub lhs: f64,
    pub rhs: f64,
    pub residual: f64,
    pub stderr: f64,
}

impl PairedResidual {
    pub fn within(&self, k: f64) -> bool {
        self.residual <= k * self.stderr
    }
}

/// `|E[F δ(Gh)] − E[G ⟨∇F, h⟩_H]|` with the standard error of the paired
/// per-path difference.
pub fn duality_residual(
    f: &CylindricalFunctional,
    g: &CylindricalFunctional,
    h: &Direction,
    ensemble: &WienerEnsemble,
) -> Result<PairedResidual> {
    if g.growth() != Growth::Bounded {
        return Err(Error::ContractViolation(format!(
            "duality test needs a bounded G, got {}",
            g.name()
        )));
    }
    let fv = eval(f, ensemble)?;
    let delta = skorohod_product(g, h, ensemble)?;
    let gv = eval(g, ensemble)?;
    let df = gradient_pairing(f, h, ensemble)?.value;
    let left: Vec<f64> = fv.iter().zip(&delta).map(|(a, b)| a * b).collect();
    let right: Vec<f64> = gv.iter().zip(&df).map(|(a, b)| a * b).collect();
    let diff: Vec<f64> = left.iter().zip(&right).map(|(a, b)| a - b).collect();
    let lhs = stats::mean(&left);
    let rhs = stats::mean(&right);
    Ok(PairedResidual {
        lhs,
        rhs,
        residual: (lhs - rhs).abs(),
        stderr: stats::std_error(&diff),
    })
}

/// `|E[F∘τ_h] − E[F·ℰ(h)]|` on one ensemble, with the combined standard error
/// of the two means.
pub fn cameron_martin_gap(
    f: &dyn PathFunctional,
    h: &Direction,
    ensemble: &WienerEnsemble,
) -> Result<PairedResidual> {
    let shifted = f.eval_paths(&shift(ensemble, h, 1.0)?)?;
    let base = f.eval_paths(ensemble)?;
    let weight = cm_weight(h, ensemble)?;
    let weighted: Vec<f64> = base.iter().zip(&weight).map(|(a, w)| a * w).collect();
    let a = stats::Estimate::of(&shifted);
    let b = stats::Estimate::of(&weighted);
    Ok(PairedResidual {
        lhs: a.mean,
        rhs: b.mean,
        residual: (a.mean - b.mean).abs(),
        stderr: (a.stderr * a.stderr + b.stderr * b.stderr).sqrt(),
    })
}

/// Five bounded functionals in two Brownian components and three shift
/// directions on `grid`, used by the Cameron-Martin, duality and convergence
/// checks.
pub fn test_matrix(grid: &Grid) -> Result<(Vec<CylindricalFunctional>, Vec<Direction>)> {
    use std::f64::consts::PI;
    let k1 = Direction::from_fn(grid, 2, |t| vec![1.0 - 0.5 * t, 0.3])?;
    let k2 = Direction::from_fn(grid, 2, |t| vec![0.2, (PI * t).cos()])?;
    let both = vec![k1.clone(), k2.clone()];
    let functionals = vec![
        CylindricalFunctional::sin(&k1),
        CylindricalFunctional::new(
            "cos(W(k1)+W(k2))",
            both.clone(),
            Arc::new(|x| (x[0] + x[1]).cos()),
            vec![Arc::new(|x| -(x[0] + x[1]).sin()), Arc::new(|x| -(x[0] + x[1]).sin())],
            Growth::Bounded,
        )?,
        CylindricalFunctional::new(
            "tanh(W(k1)-W(k2)/2)",
            both.clone(),
            Arc::new(|x| (x[0] - 0.5 * x[1]).tanh()),
            vec![
                Arc::new(|x| 1.0 - (x[0] - 0.5 * x[1]).tanh().powi(2)),
                Arc::new(|x| -0.5 * (1.0 - (x[0] - 0.5 * x[1]).tanh().powi(2))),
            ],
            Growth::Bounded,
        )?,
        CylindricalFunctional::new(
            "1/(1+W(k2)^2)",
            vec![k2.clone()],
            Arc::new(|x| 1.0 / (1.0 + x[0] * x[0])),
            vec![Arc::new(|x| -2.0 * x[0] / (1.0 + x[0] * x[0]).powi(2))],
            Growth::Bounded,
        )?,
        CylindricalFunctional::new(
            "exp(-W(k1)^2/2)sin(W(k2))",
            both,
            Arc::new(|x| (-0.5 * x[0] * x[0]).exp() * x[1].sin()),
            vec![
                Arc::new(|x| -x[0] * (-0.5 * x[0] * x[0]).exp() * x[1].sin()),
                Arc::new(|x| (-0.5 * x[0] * x[0]).exp() * x[1].cos()),
            ],
            Growth::Bounded,
        )?,
    ];
    let directions = vec![
        Direction::constant(grid, &[1.0, 0.5])?,
        Direction::from_fn(grid, 2, |t| vec![t, 1.0 - t])?,
        Direction::indicator(grid, 2, 1, 0.0, 0.5 * grid.horizon(), 1.5)?,
    ];
    Ok((functionals, directions))
}

/// The test matrix on a uniform grid.
pub fn default_test_matrix(horizon: f64, n_steps: usize) -> Result<(Vec<CylindricalFunctional>, Vec<Direction>)> {
    test_matrix(&make_grid(horizon, n_steps)?)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::sample_ensemble;

    #[test]
    fn polynomial_g_is_rejected() {
        let g = make_grid(1.0, 8).unwrap();
        let e = sample_ensemble(&g, 1, 10, 1).unwrap();
        let h = Direction::constant(&g, &[1.0]).unwrap();
        let f = CylindricalFunctional::wiener(&h);
        assert!(duality_residual(&f, &f, &h, &e).is_err());
    }

    #[test]
    fn constant_f_has_zero_right_side() {
        let g = make_grid(1.0, 8).unwrap();
        let e = sample_ensemble(&g, 1, 2000, 1).unwrap();
        let h = Direction::constant(&g, &[1.0]).unwrap();
        let f = CylindricalFunctional::constant(3.0, &h);
        let gf = CylindricalFunctional::sin(&h);
        let r = duality_residual(&f, &gf, &h, &e).unwrap();
        assert_eq!(r.rhs, 0.0);
        assert!(r.within(3.0), "{r:?}");
    }

    #[test]
    fn matrix_shape() {
        let (fs, hs) = default_test_matrix(1.0, 16).unwrap();
        assert_eq!(fs.len(), 5);
        assert_eq!(hs.len(), 3);
        assert!(fs.iter().all(|f| f.growth() == Growth::Bounded));
    }
}
