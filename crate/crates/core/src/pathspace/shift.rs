use super::{Direction, Grid, PathSource, WienerEnsemble};
use crate::error::Result;

/// The ensemble seen through `τ_{εh}: ω ↦ ω + εh`.
///
/// Nothing is copied: node values are recomputed as `W(t_i) + ε h(t_i)` and
/// increments as `ΔW_i + ε ḣ_i Δt_i` on every access, so any number of shifts
/// share the base draws.
#[derive(Debug, Clone)]
pub struct ShiftedEnsemble<'a> {
    base: &'a WienerEnsemble,
    direction: Direction,
    epsilon: f64,
    /// `ε ḣ_i Δt_i`, precomputed per step and component.
    increment_offset: Vec<f64>,
}

pub fn shift<'a>(base: &'a WienerEnsemble, h: &Direction, epsilon: f64) -> Result<ShiftedEnsemble<'a>> {
    ShiftedEnsemble::new(base, h.clone(), epsilon)
}

impl<'a> ShiftedEnsemble<'a> {
    pub fn new(base: &'a WienerEnsemble, direction: Direction, epsilon: f64) -> Result<Self> {
        base.check_direction(&direction)?;
        let grid = base.grid();
        let d = direction.dim();
        let mut increment_offset = vec![0.0; grid.n_steps() * d];
        for i in 0..grid.n_steps() {
            let dt = grid.dt(i);
            for k in 0..d {
                increment_offset[i * d + k] = epsilon * direction.density_at(i)[k] * dt;
            }
        }
        Ok(ShiftedEnsemble {
            base,
            direction,
            epsilon,
            increment_offset,
        })
    }

    pub fn base(&self) -> &'a WienerEnsemble {
        self.base
    }

    pub fn direction(&self) -> &Direction {
        &self.direction
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    /// Shift again. Repeated shifts along the same direction add their
    /// amplitudes; mixed directions are merged into one.
    pub fn shift(&self, h: &Direction, epsilon: f64) -> Result<ShiftedEnsemble<'a>> {
        if *h == self.direction {
            return ShiftedEnsemble::new(self.base, self.direction.clone(), self.epsilon + epsilon);
        }
        let merged = self.direction.combine(self.epsilon, h, epsilon)?;
        ShiftedEnsemble::new(self.base, merged, 1.0)
    }
}

impl PathSource for ShiftedEnsemble<'_> {
    fn grid(&self) -> &Grid {
        self.base.grid()
    }

    fn dim(&self) -> usize {
        self.base.dim()
    }

    fn n_paths(&self) -> usize {
        self.base.n_paths()
    }

    fn seed(&self) -> u64 {
        self.base.seed()
    }

    fn increments_into(&self, path: usize, out: &mut [f64]) {
        let inc = self.base.path_increments(path);
        for ((o, w), s) in out.iter_mut().zip(inc).zip(&self.increment_offset) {
            *o = w + s;
        }
    }

    fn values_into(&self, path: usize, out: &mut [f64]) {
        self.base.values_into(path, out);
        let eps = self.epsilon;
        for (o, h) in out.iter_mut().zip(self.direction.cumulative()) {
            *o += eps * h;
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::{make_grid, sample_ensemble};

    fn setup() -> (WienerEnsemble, Direction) {
        let g = make_grid(1.0, 32).unwrap();
        let e = sample_ensemble(&g, 2, 64, 3).unwrap();
        let h = Direction::from_fn(&g, 2, |t| vec![1.0 + t, (3.0 * t).sin()]).unwrap();
        (e, h)
    }

    #[test]
    fn zero_shift_is_identity() {
        let (e, h) = setup();
        let s = shift(&e, &h, 0.0).unwrap();
        for p in 0..e.n_paths() {
            assert_eq!(s.values(p), e.values(p));
            assert_eq!(s.increments(p), e.increments(p));
        }
    }

    #[test]
    fn node_values_move_by_eps_h() {
        let (e, h) = setup();
        let eps = 0.37;
        let s = shift(&e, &h, eps).unwrap();
        for p in 0..e.n_paths() {
            let base = e.values(p);
            let shifted = s.values(p);
            for (j, (a, b)) in base.iter().zip(&shifted).enumerate() {
                assert_eq!(*b, a + eps * h.cumulative()[j]);
            }
        }
    }

    #[test]
    fn opposite_shifts_cancel() {
        let (e, h) = setup();
        let back = shift(&e, &h, 0.25).unwrap().shift(&h, -0.25).unwrap();
        assert_eq!(back.epsilon(), 0.0);
        for p in 0..e.n_paths() {
            assert_eq!(back.values(p), e.values(p));
        }
    }

    #[test]
    fn composition_adds_amplitudes() {
        let (e, h) = setup();
        let twice = shift(&e, &h, 0.125).unwrap().shift(&h, 0.5).unwrap();
        let once = shift(&e, &h, 0.625).unwrap();
        for p in 0..e.n_paths() {
            assert_eq!(twice.values(p), once.values(p));
        }
    }

    #[test]
    fn mixed_directions_merge() {
        let (e, h) = setup();
        let k = Direction::constant(e.grid(), &[0.0, 1.0]).unwrap();
        let s = shift(&e, &h, 0.5).unwrap().shift(&k, 2.0).unwrap();
        let merged = h.combine(0.5, &k, 2.0).unwrap();
        let direct = shift(&e, &merged, 1.0).unwrap();
        for p in 0..e.n_paths() {
            assert_eq!(s.values(p), direct.values(p));
        }
    }
}
