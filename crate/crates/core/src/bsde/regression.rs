use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::StateField;
use crate::error::{invalid, Error, Result};
use crate::exec;

/// Least-squares conditional expectation estimator: Hermite polynomials of
/// the standardised state up to a total degree.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RegressionBasis {
    pub degree: usize,
    /// Added to the diagonal of the normalised Gram matrix, intercept excluded.
    pub ridge: f64,
    /// Largest admissible condition number of the Gram matrix.
    pub max_condition: f64,
}

impl Default for RegressionBasis {
    fn default() -> Self {
        RegressionBasis {
            degree: 3,
            ridge: 1e-8,
            max_condition: 1e12,
        }
    }
}

impl RegressionBasis {
    pub fn with_degree(degree: usize) -> Self {
        RegressionBasis {
            degree,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.ridge >= 0.0) || !self.ridge.is_finite() {
            return Err(invalid("ridge must be non-negative"));
        }
        if !(self.max_condition > 1.0) {
            return Err(invalid("max_condition must exceed 1"));
        }
        Ok(())
    }
}

/// Feature map of one time step: which state components vary, how they are
/// standardised, and the multi-indices of the Hermite products.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureMap {
    pub kept: Vec<usize>,
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
    pub degree: usize,
    pub exponents: Vec<Vec<usize>>,
}

fn multi_indices(m: usize, degree: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![0; m]];
    for total in 1..=degree {
        let mut cur = vec![0; m];
        fill(&mut out, &mut cur, 0, total);
    }
    out
}

fn fill(out: &mut Vec<Vec<usize>>, cur: &mut Vec<usize>, pos: usize, left: usize) {
    if pos + 1 == cur.len() {
        cur[pos] = left;
        out.push(cur.clone());
        return;
    }
    for k in (0..=left).rev() {
        cur[pos] = k;
        fill(out, cur, pos + 1, left - k);
    }
    cur[pos] = 0;
}

impl FeatureMap {
    /// Standardises on the cross-section of `state` at `node`; components
    /// with (numerically) zero spread are dropped.
    pub fn fit(state: &StateField, node: usize, degree: usize) -> Self {
        let mut kept = Vec::new();
        let mut mean = Vec::new();
        let mut scale = Vec::new();
        for j in 0..state.m {
            let col = state.column(node, j);
            let m = crate::stats::mean(&col);
            let sd = crate::stats::std_dev(&col);
            if sd > 1e-10 * (1.0 + m.abs()) {
                kept.push(j);
                mean.push(m);
                scale.push(sd);
            }
        }
        let exponents = if kept.is_empty() {
            vec![vec![]]
        } else {
            multi_indices(kept.len(), degree)
        };
        FeatureMap {
            kept,
            mean,
            scale,
            degree,
            exponents,
        }
    }

    pub fn len(&self) -> usize {
        self.exponents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.exponents.is_empty()
    }

    /// Probabilists' Hermite products `Π_j He_{α_j}(x_j)`.
    pub fn eval(&self, s: &[f64], out: &mut [f64]) {
        let k = self.kept.len();
        let deg = self.degree;
        let mut he = vec![0.0; k * (deg + 1)];
        for (c, &j) in self.kept.iter().enumerate() {
            let x = (s[j] - self.mean[c]) / self.scale[c];
            let row = &mut he[c * (deg + 1)..(c + 1) * (deg + 1)];
            row[0] = 1.0;
            if deg >= 1 {
                row[1] = x;
            }
            for n in 1..deg {
                row[n + 1] = x * row[n] - n as f64 * row[n - 1];
            }
        }
        for (o, alpha) in out.iter_mut().zip(&self.exponents) {
            let mut v = 1.0;
            for (c, &a) in alpha.iter().enumerate() {
                v *= he[c * (deg + 1) + a];
            }
            *o = v;
        }
    }

    pub fn predict(&self, coef: &[f64], s: &[f64]) -> f64 {
        let mut phi = vec![0.0; self.len()];
        self.eval(s, &mut phi);
        phi.iter().zip(coef).map(|(a, b)| a * b).sum()
    }
}

/// A factorised least-squares problem on one cross-section.
pub(crate) struct Projector {
    pub map: FeatureMap,
    design: Vec<f64>,
    n: usize,
    chol: nalgebra::Cholesky<f64, nalgebra::Dyn>,
    pub condition: f64,
}

impl Projector {
    pub fn build(basis: &RegressionBasis, state: &StateField, node: usize, step: usize) -> Result<Self> {
        let map = FeatureMap::fit(state, node, basis.degree);
        let k = map.len();
        let n = state.n_paths;
        let mut design = vec![0.0; n * k];
        exec::fill_rows(&mut design, k, |p, row| map.eval(state.at(p, node), row));
        let mut gram = DMatrix::<f64>::zeros(k, k);
        for row in design.chunks_exact(k) {
            for a in 0..k {
                let ra = row[a];
                for b in a..k {
                    gram[(a, b)] += ra * row[b];
                }
            }
        }
        for a in 0..k {
            for b in a..k {
                let v = gram[(a, b)] / n as f64;
                gram[(a, b)] = v;
                gram[(b, a)] = v;
            }
        }
        for a in 1..k {
            gram[(a, a)] += basis.ridge;
        }
        let eig = gram.clone().symmetric_eigen();
        let max = eig.eigenvalues.iter().cloned().fold(0.0f64, f64::max);
        let min = eig.eigenvalues.iter().cloned().fold(f64::INFINITY, f64::min);
        let condition = if min > 0.0 { max / min } else { f64::INFINITY };
        if !(condition <= basis.max_condition) {
            return Err(Error::SingularRegression { step, condition });
        }
        let chol = gram.cholesky().ok_or(Error::SingularRegression { step, condition })?;
        Ok(Projector {
            map,
            design,
            n,
            chol,
            condition,
        })
    }

    /// Coefficients of the projection of `target` (one value per path).
    pub fn fit(&self, target: &[f64]) -> Vec<f64> {
        let k = self.map.len();
        let mut rhs = DVector::<f64>::zeros(k);
        for (row, y) in self.design.chunks_exact(k).zip(target) {
            for a in 0..k {
                rhs[a] += row[a] * y;
            }
        }
        rhs /= self.n as f64;
        self.chol.solve(&rhs).iter().copied().collect()
    }

    pub fn fitted(&self, coef: &[f64]) -> Vec<f64> {
        let k = self.map.len();
        exec::map_paths(self.n, |p| {
            self.design[p * k..(p + 1) * k]
                .iter()
                .zip(coef)
                .map(|(a, b)| a * b)
                .sum()
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn multi_index_counts() {
        assert_eq!(multi_indices(1, 3).len(), 4);
        assert_eq!(multi_indices(2, 3).len(), 10);
        assert_eq!(multi_indices(3, 2).len(), 10);
        assert_eq!(multi_indices(2, 2)[0], vec![0, 0]);
    }

    #[test]
    fn hermite_values() {
        let map = FeatureMap {
            kept: vec![0],
            mean: vec![0.0],
            scale: vec![1.0],
            degree: 4,
            exponents: multi_indices(1, 4),
        };
        let mut out = vec![0.0; 5];
        map.eval(&[2.0], &mut out);
        assert_eq!(out, vec![1.0, 2.0, 3.0, 2.0, -5.0]);
    }

    #[test]
    fn exact_polynomial_is_reproduced() {
        let n = 2000;
        let mut data = Vec::new();
        for p in 0..n {
            let x = (p as f64 / n as f64 - 0.5) * 4.0;
            data.extend([0.0, x]);
        }
        let state = StateField {
            n_paths: n,
            n_nodes: 2,
            m: 1,
            data,
        };
        let basis = RegressionBasis {
            ridge: 0.0,
            ..RegressionBasis::default()
        };
        let pr = Projector::build(&basis, &state, 1, 0).unwrap();
        let target: Vec<f64> = (0..n).map(|p| {
            let x = state.at(p, 1)[0];
            1.0 - 2.0 * x + 0.5 * x * x * x
        }).collect();
        let fit = pr.fitted(&pr.fit(&target));
        for (a, b) in fit.iter().zip(&target) {
            assert!((a - b).abs() < 1e-9);
        }
        let flat = Projector::build(&basis, &state, 0, 0).unwrap();
        assert_eq!(flat.map.len(), 1);
    }

    #[test]
    fn degenerate_design_is_reported() {
        let n = 10;
        let mut data = Vec::new();
        for p in 0..n {
            data.extend([0.0, if p < 5 { -1.0 } else { 1.0 }]);
        }
        let state = StateField {
            n_paths: n,
            n_nodes: 2,
            m: 1,
            data,
        };
        let basis = RegressionBasis {
            ridge: 0.0,
            ..RegressionBasis::default()
        };
        assert!(matches!(
            Projector::build(&basis, &state, 1, 3),
            Err(Error::SingularRegression { step: 3, .. })
        ));
    }
}
