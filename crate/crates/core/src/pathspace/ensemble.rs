use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::{Direction, Grid};
use crate::error::{invalid, Error, Result};
use crate::exec;

/// Read access to a set of discretised Brownian paths, either sampled or
/// shifted along a Cameron-Martin direction.
pub trait PathSource: Sync {
    fn grid(&self) -> &Grid;
    fn dim(&self) -> usize;
    fn n_paths(&self) -> usize;
    fn seed(&self) -> u64;

    /// Increments `ΔW_i` of one path, `n_steps * dim` values.
    fn increments_into(&self, path: usize, out: &mut [f64]);

    /// Node values `W(t_i)` of one path, `(n_steps + 1) * dim` values.
    fn values_into(&self, path: usize, out: &mut [f64]);

    fn increments(&self, path: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.grid().n_steps() * self.dim()];
        self.increments_into(path, &mut v);
        v
    }

    fn values(&self, path: usize) -> Vec<f64> {
        let mut v = vec![0.0; self.grid().n_nodes() * self.dim()];
        self.values_into(path, &mut v);
        v
    }

    fn check_direction(&self, h: &Direction) -> Result<()> {
        if !self.grid().is_compatible(h.grid()) {
            return Err(Error::GridMismatch(
                "direction and ensemble use different grids".into(),
            ));
        }
        if h.dim() != self.dim() {
            return Err(Error::DimensionMismatch {
                expected: self.dim(),
                got: h.dim(),
            });
        }
        Ok(())
    }
}

/// Seeded ensemble of `d`-dimensional Brownian increments.
///
/// Path `p` is drawn from its own ChaCha8 stream (`seed`, stream `p`), so the
/// ensemble is a pure function of `(grid, d, n_paths, seed)` regardless of
/// how the paths are scheduled.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct WienerEnsemble {
    grid: Grid,
    dim: usize,
    n_paths: usize,
    seed: u64,
    /// Row-major `[path][step][component]`.
    increments: Vec<f64>,
}

pub fn sample_ensemble(grid: &Grid, dim: usize, n_paths: usize, seed: u64) -> Result<WienerEnsemble> {
    WienerEnsemble::sample(grid, dim, n_paths, seed)
}

impl WienerEnsemble {
    pub fn sample(grid: &Grid, dim: usize, n_paths: usize, seed: u64) -> Result<Self> {
        if dim == 0 {
            return Err(invalid("Brownian dimension must be positive"));
        }
        if n_paths == 0 {
            return Err(invalid("n_paths must be at least 1"));
        }
        let n = grid.n_steps();
        let sqrt_dt: Vec<f64> = grid.steps().iter().map(|dt| dt.sqrt()).collect();
        let row = n * dim;
        let mut increments = vec![0.0; n_paths * row];
        exec::fill_rows(&mut increments, row, |p, out| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(p as u64);
            for i in 0..n {
                for k in 0..dim {
                    let z: f64 = StandardNormal.sample(&mut rng);
                    out[i * dim + k] = z * sqrt_dt[i];
                }
            }
        });
        Ok(WienerEnsemble {
            grid: grid.clone(),
            dim,
            n_paths,
            seed,
            increments,
        })
    }

    /// Wraps externally produced increments (row-major `[path][step][k]`).
    pub fn from_increments(
        grid: &Grid,
        dim: usize,
        n_paths: usize,
        seed: u64,
        increments: Vec<f64>,
    ) -> Result<Self> {
        if dim == 0 || n_paths == 0 {
            return Err(invalid("dimension and path count must be positive"));
        }
        if increments.len() != n_paths * grid.n_steps() * dim {
            return Err(invalid(format!(
                "expected {} increments, got {}",
                n_paths * grid.n_steps() * dim,
                increments.len()
            )));
        }
        Ok(WienerEnsemble {
            grid: grid.clone(),
            dim,
            n_paths,
            seed,
            increments,
        })
    }

    pub fn raw_increments(&self) -> &[f64] {
        &self.increments
    }

    pub fn path_increments(&self, path: usize) -> &[f64] {
        let row = self.grid.n_steps() * self.dim;
        &self.increments[path * row..(path + 1) * row]
    }

    /// `W_T` per path.
    pub fn terminal_values(&self, component: usize) -> Vec<f64> {
        let n = self.grid.n_steps();
        (0..self.n_paths)
            .map(|p| {
                let inc = self.path_increments(p);
                (0..n).map(|i| inc[i * self.dim + component]).sum()
            })
            .collect()
    }

    /// The first `n_paths` paths as a separate ensemble.
    pub fn subset(&self, n_paths: usize) -> Result<Self> {
        if n_paths == 0 || n_paths > self.n_paths {
            return Err(invalid("subset size out of range"));
        }
        let row = self.grid.n_steps() * self.dim;
        Self::from_increments(
            &self.grid,
            self.dim,
            n_paths,
            self.seed,
            self.increments[..n_paths * row].to_vec(),
        )
    }
}

impl PathSource for WienerEnsemble {
    fn grid(&self) -> &Grid {
        &self.grid
    }

    fn dim(&self) -> usize {
        self.dim
    }

    fn n_paths(&self) -> usize {
        self.n_paths
    }

    fn seed(&self) -> u64 {
        self.seed
    }

    fn increments_into(&self, path: usize, out: &mut [f64]) {
        out.copy_from_slice(self.path_increments(path));
    }

    fn values_into(&self, path: usize, out: &mut [f64]) {
        let d = self.dim;
        let inc = self.path_increments(path);
        out[..d].fill(0.0);
        for i in 0..self.grid.n_steps() {
            for k in 0..d {
                out[(i + 1) * d + k] = out[i * d + k] + inc[i * d + k];
            }
        }
    }
}
