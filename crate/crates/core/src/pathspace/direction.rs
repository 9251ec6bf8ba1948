use serde::{Deserialize, Serialize};

use super::Grid;
use crate::error::{invalid, Error, Result};

/// A Cameron-Martin direction `h`, stored through its piecewise-constant
/// density `ḣ` on the grid cells. The cumulative `h(t_i)` is the exact
/// running sum of `ḣ Δt`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Direction {
    grid: Grid,
    dim: usize,
    /// `density[i * dim + k]` is component `k` of `ḣ` on `[t_i, t_{i+1})`.
    density: Vec<f64>,
    /// `cumulative[i * dim + k]` is component `k` of `h(t_i)`.
    cumulative: Vec<f64>,
}

impl Direction {
    pub fn from_density(grid: &Grid, dim: usize, density: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("direction dimension must be positive"));
        }
        if density.len() != grid.n_steps() * dim {
            return Err(invalid(format!(
                "density has {} entries, expected {} steps x {} components",
                density.len(),
                grid.n_steps(),
                dim
            )));
        }
        if density.iter().any(|v| !v.is_finite()) {
            return Err(invalid("density must be finite"));
        }
        let n = grid.n_steps();
        let mut cumulative = vec![0.0; (n + 1) * dim];
        for i in 0..n {
            let dt = grid.dt(i);
            for k in 0..dim {
                cumulative[(i + 1) * dim + k] = cumulative[i * dim + k] + density[i * dim + k] * dt;
            }
        }
        Ok(Direction {
            grid: grid.clone(),
            dim,
            density,
            cumulative,
        })
    }

    pub fn zero(grid: &Grid, dim: usize) -> Result<Self> {
        Self::from_density(grid, dim, vec![0.0; grid.n_steps() * dim])
    }

    /// Constant density vector on the whole horizon.
    pub fn constant(grid: &Grid, value: &[f64]) -> Result<Self> {
        let dim = value.len();
        let density = (0..grid.n_steps()).flat_map(|_| value.iter().copied()).collect();
        Self::from_density(grid, dim, density)
    }

    /// Density `f(t_i)` sampled at the left end of each cell.
    pub fn from_fn(grid: &Grid, dim: usize, f: impl Fn(f64) -> Vec<f64>) -> Result<Self> {
        let mut density = Vec::with_capacity(grid.n_steps() * dim);
        for i in 0..grid.n_steps() {
            let v = f(grid.time(i));
            if v.len() != dim {
                return Err(Error::DimensionMismatch {
                    expected: dim,
                    got: v.len(),
                });
            }
            density.extend(v);
        }
        Self::from_density(grid, dim, density)
    }

    /// `ḣ^component = value` on the cells contained in `[start, end]`, zero
    /// elsewhere.
    pub fn indicator(
        grid: &Grid,
        dim: usize,
        component: usize,
        start: f64,
        end: f64,
        value: f64,
    ) -> Result<Self> {
        if component >= dim {
            return Err(invalid(format!("component {component} out of range for dimension {dim}")));
        }
        if !(end > start) {
            return Err(invalid("indicator interval must have positive length"));
        }
        let tol = 1e-9 * grid.horizon();
        let mut density = vec![0.0; grid.n_steps() * dim];
        for i in 0..grid.n_steps() {
            if grid.time(i) >= start - tol && grid.time(i + 1) <= end + tol {
                density[i * dim + component] = value;
            }
        }
        Self::from_density(grid, dim, density)
    }

    /// Mass-normalised bump on `[center - width, center]` in one component:
    /// `h(T) = 1` in that component, support ending at `center`.
    pub fn bump(grid: &Grid, dim: usize, component: usize, center: f64, width: f64) -> Result<Self> {
        let min_cell = grid.steps().iter().cloned().fold(f64::INFINITY, f64::min);
        if width < min_cell * (1.0 - 1e-9) {
            return Err(invalid(format!(
                "bump width {width} is narrower than one grid cell ({min_cell})"
            )));
        }
        let raw = Self::indicator(grid, dim, component, center - width, center, 1.0)?;
        let mass = raw.terminal()[component];
        if mass <= 0.0 {
            return Err(invalid("bump does not cover any grid cell"));
        }
        Ok(raw.scaled(1.0 / mass))
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn density(&self) -> &[f64] {
        &self.density
    }

    /// `ḣ` on step `i`.
    pub fn density_at(&self, step: usize) -> &[f64] {
        &self.density[step * self.dim..(step + 1) * self.dim]
    }

    /// `h(t_i)`.
    pub fn value_at(&self, node: usize) -> &[f64] {
        &self.cumulative[node * self.dim..(node + 1) * self.dim]
    }

    pub fn cumulative(&self) -> &[f64] {
        &self.cumulative
    }

    pub fn terminal(&self) -> &[f64] {
        self.value_at(self.grid.n_steps())
    }

    /// Time after which `ḣ` vanishes: right end of the last cell carrying
    /// a non-zero density, `0` for the zero direction.
    pub fn support_end(&self) -> f64 {
        (0..self.grid.n_steps())
            .rev()
            .find(|&i| self.density_at(i).iter().any(|&v| v != 0.0))
            .map(|i| self.grid.time(i + 1))
            .unwrap_or(0.0)
    }

    /// Node index of [`support_end`](Self::support_end).
    pub fn support_end_node(&self) -> usize {
        (0..self.grid.n_steps())
            .rev()
            .find(|&i| self.density_at(i).iter().any(|&v| v != 0.0))
            .map(|i| i + 1)
            .unwrap_or(0)
    }

    pub fn is_zero(&self) -> bool {
        self.density.iter().all(|&v| v == 0.0)
    }

    /// Density zeroed on cells starting at or after `t`.
    pub fn truncated(&self, t: f64) -> Self {
        let tol = 1e-9 * self.grid.horizon();
        let mut density = self.density.clone();
        for i in 0..self.grid.n_steps() {
            if self.grid.time(i) >= t - tol {
                density[i * self.dim..(i + 1) * self.dim].fill(0.0);
            }
        }
        Self::from_density(&self.grid, self.dim, density).expect("truncation keeps shape")
    }

    pub fn scaled(&self, factor: f64) -> Self {
        let density = self.density.iter().map(|v| v * factor).collect();
        Self::from_density(&self.grid, self.dim, density).expect("scaling keeps shape")
    }

    /// `a * self + b * other`.
    pub fn combine(&self, a: f64, other: &Direction, b: f64) -> Result<Self> {
        self.check_same_space(other)?;
        let density = self
            .density
            .iter()
            .zip(&other.density)
            .map(|(x, y)| a * x + b * y)
            .collect();
        Self::from_density(&self.grid, self.dim, density)
    }

    pub fn check_same_space(&self, other: &Direction) -> Result<()> {
        if !self.grid.is_compatible(&other.grid) {
            return Err(Error::GridMismatch("directions live on different grids".into()));
        }
        if self.dim != other.dim {
            return Err(Error::DimensionMismatch {
                expected: self.dim,
                got: other.dim,
            });
        }
        Ok(())
    }

    /// `‖h‖²_H`.
    pub fn norm_sq(&self) -> f64 {
        inner_h(self, self).expect("same space")
    }

    /// `⟨self, other⟩_H` restricted to `[0, t_node]`.
    pub fn partial_inner(&self, other: &Direction, node: usize) -> f64 {
        let mut acc = 0.0;
        for i in 0..node {
            let dt = self.grid.dt(i);
            let a = self.density_at(i);
            let b = other.density_at(i);
            acc += a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>() * dt;
        }
        acc
    }
}

/// `⟨h₁, h₂⟩_H = Σ_i ḣ₁(t_i)·ḣ₂(t_i) Δt_i`.
pub fn inner_h(h1: &Direction, h2: &Direction) -> Result<f64> {
    h1.check_same_space(h2)?;
    Ok(h1.partial_inner(h2, h1.grid.n_steps()))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::make_grid;

    #[test]
    fn unit_density_has_unit_norm() {
        let g = make_grid(1.0, 16).unwrap();
        let h = Direction::constant(&g, &[1.0]).unwrap();
        assert!((inner_h(&h, &h).unwrap() - 1.0).abs() < 1e-15);
        assert_eq!(h.value_at(0), &[0.0]);
        assert!((h.terminal()[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn disjoint_supports_are_orthogonal() {
        let g = make_grid(1.0, 16).unwrap();
        let a = Direction::indicator(&g, 1, 0, 0.0, 0.5, 1.0).unwrap();
        let b = Direction::indicator(&g, 1, 0, 0.5, 1.0, 1.0).unwrap();
        assert_eq!(inner_h(&a, &b).unwrap(), 0.0);
        assert!((a.support_end() - 0.5).abs() < 1e-15);
    }

    #[test]
    fn riemann_sum_of_t_squared() {
        // Left-point sum of ∫₀¹ t² dt = (N-1)(2N-1)/(6N²).
        let n = 1000usize;
        let g = make_grid(1.0, n).unwrap();
        let h = Direction::from_fn(&g, 1, |t| vec![t]).unwrap();
        let v = inner_h(&h, &h).unwrap();
        let nf = n as f64;
        let left_sum = (nf - 1.0) * (2.0 * nf - 1.0) / (6.0 * nf * nf);
        assert!((v - left_sum).abs() < 1e-12);
        assert!((v - 1.0 / 3.0).abs() < 1e-3);
    }

    #[test]
    fn grid_mismatch_is_rejected() {
        let a = Direction::constant(&make_grid(1.0, 4).unwrap(), &[1.0]).unwrap();
        let b = Direction::constant(&make_grid(1.0, 8).unwrap(), &[1.0]).unwrap();
        assert!(matches!(inner_h(&a, &b), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn bump_is_mass_normalised() {
        let g = make_grid(1.0, 50).unwrap();
        let b = Direction::bump(&g, 1, 0, 0.5, 4.0 / 50.0).unwrap();
        assert!((b.terminal()[0] - 1.0).abs() < 1e-12);
        assert!((b.support_end() - 0.5).abs() < 1e-12);
        assert!(Direction::bump(&g, 1, 0, 0.5, 0.5 / 50.0).is_err());
    }

    #[test]
    fn truncation_zeroes_the_tail() {
        let g = make_grid(1.0, 10).unwrap();
        let h = Direction::constant(&g, &[2.0]).unwrap().truncated(0.3);
        assert!((h.support_end() - 0.3).abs() < 1e-12);
        assert_eq!(h.support_end_node(), 3);
        assert!((h.terminal()[0] - 0.6).abs() < 1e-12);
    }
}
