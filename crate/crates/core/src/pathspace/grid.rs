use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// Time grid `0 = t_0 < t_1 < ... < t_N = T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    horizon: f64,
    times: Vec<f64>,
}

/// Uniform grid with `n_steps` intervals on `[0, horizon]`.
pub fn make_grid(horizon: f64, n_steps: usize) -> Result<Grid> {
    Grid::uniform(horizon, n_steps)
}

impl Grid {
    pub fn uniform(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(invalid(format!("horizon must be positive, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps must be at least 1"));
        }
        let dt = horizon / n_steps as f64;
        let mut times: Vec<f64> = (0..n_steps).map(|i| i as f64 * dt).collect();
        times.push(horizon);
        Ok(Grid { horizon, times })
    }

    /// Arbitrary strictly increasing node times starting at zero.
    pub fn from_times(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 {
            return Err(invalid("a grid needs at least two nodes"));
        }
        if times[0] != 0.0 {
            return Err(invalid("grid must start at t = 0"));
        }
        if times.windows(2).any(|w| !(w[1] > w[0])) {
            return Err(invalid("grid times must be strictly increasing"));
        }
        let horizon = *times.last().unwrap();
        Ok(Grid { horizon, times })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn n_nodes(&self) -> usize {
        self.times.len()
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn time(&self, node: usize) -> f64 {
        self.times[node]
    }

    /// Length of step `i`, i.e. `t_{i+1} - t_i`.
    pub fn dt(&self, step: usize) -> f64 {
        self.times[step + 1] - self.times[step]
    }

    pub fn steps(&self) -> Vec<f64> {
        self.times.windows(2).map(|w| w[1] - w[0]).collect()
    }

    /// Index of the first node with `t_i >= t` (within rounding).
    pub fn node_at_or_after(&self, t: f64) -> usize {
        let tol = 1e-9 * self.horizon;
        self.times
            .iter()
            .position(|&ti| ti >= t - tol)
            .unwrap_or(self.n_steps())
    }

    /// Index of the node nearest to `t`.
    pub fn nearest_node(&self, t: f64) -> usize {
        let mut best = 0;
        for (i, &ti) in self.times.iter().enumerate() {
            if (ti - t).abs() < (self.times[best] - t).abs() {
                best = i;
            }
        }
        best
    }

    pub fn is_compatible(&self, other: &Grid) -> bool {
        self == other
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn quarter_grid() {
        let g = make_grid(1.0, 4).unwrap();
        assert_eq!(g.times(), &[0.0, 0.25, 0.5, 0.75, 1.0]);
    }

    #[test]
    fn single_interval() {
        let g = make_grid(1.0, 1).unwrap();
        assert_eq!(g.times(), &[0.0, 1.0]);
    }

    #[test]
    fn uniform_steps() {
        let g = make_grid(2.0, 8).unwrap();
        assert!(g.steps().iter().all(|&dt| dt == 0.25));
    }

    #[test]
    fn rejects_bad_arguments() {
        assert!(make_grid(0.0, 4).is_err());
        assert!(make_grid(-1.0, 4).is_err());
        assert!(make_grid(1.0, 0).is_err());
        assert!(Grid::from_times(vec![0.0, 0.5, 0.5, 1.0]).is_err());
        assert!(Grid::from_times(vec![0.1, 0.5]).is_err());
    }

    #[test]
    fn node_lookup() {
        let g = make_grid(1.0, 10).unwrap();
        assert_eq!(g.node_at_or_after(0.3), 3);
        assert_eq!(g.node_at_or_after(0.31), 4);
        assert_eq!(g.nearest_node(0.31), 3);
    }
}
