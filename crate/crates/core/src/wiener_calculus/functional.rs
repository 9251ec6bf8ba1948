use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::exec;
use crate::pathspace::{inner_h, Direction, PathSource};

/// Anything that maps a set of paths to one real value per path.
pub trait PathFunctional: Sync {
    fn eval_paths(&self, paths: &dyn PathSource) -> Result<Vec<f64>>;
}

impl<F> PathFunctional for F
where
    F: Fn(&dyn PathSource) -> Result<Vec<f64>> + Sync,
{
    fn eval_paths(&self, paths: &dyn PathSource) -> Result<Vec<f64>> {
        self(paths)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Growth {
    Bounded,
    Polynomial,
}

pub type ScalarFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;

/// `F = f(W(h₁), …, W(h_n))` with analytic partials.
#[derive(Clone)]
pub struct CylindricalFunctional {
    name: String,
    directions: Vec<Direction>,
    f: ScalarFn,
    partials: Vec<ScalarFn>,
    growth: Growth,
}

impl fmt::Debug for CylindricalFunctional {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CylindricalFunctional")
            .field("name", &self.name)
            .field("n", &self.directions.len())
            .field("growth", &self.growth)
            .finish_non_exhaustive()
    }
}

const PROBES: usize = 16;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-6;

impl CylindricalFunctional {
    /// Validates the partials against central differences at random probe
    /// points drawn from the law of `(W(h₁), …, W(h_n))` scaled by 1.5.
    pub fn new(
        name: impl Into<String>,
        directions: Vec<Direction>,
        f: ScalarFn,
        partials: Vec<ScalarFn>,
        growth: Growth,
    ) -> Result<Self> {
        let name = name.into();
        if directions.is_empty() {
            return Err(invalid("a cylindrical functional needs at least one direction"));
        }
        if partials.len() != directions.len() {
            return Err(Error::DimensionMismatch {
                expected: directions.len(),
                got: partials.len(),
            });
        }
        for h in &directions[1..] {
            directions[0].check_same_space(h)?;
        }
        let scales: Vec<f64> = directions.iter().map(|h| 1.5 * h.norm_sq().sqrt().max(0.5)).collect();
        let mut rng = ChaCha8Rng::seed_from_u64(0x5eed);
        let n = directions.len();
        for _ in 0..PROBES {
            let x: Vec<f64> = scales
                .iter()
                .map(|s| s * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng))
                .collect();
            for j in 0..n {
                let mut up = x.clone();
                let mut dn = x.clone();
                up[j] += FD_STEP;
                dn[j] -= FD_STEP;
                let fd = (f(&up) - f(&dn)) / (2.0 * FD_STEP);
                let an = partials[j](&x);
                if !fd.is_finite() || !an.is_finite() || (fd - an).abs() > FD_TOL * an.abs().max(1.0) {
                    return Err(Error::ContractViolation(format!(
                        "{name}: partial {j} disagrees with finite differences at {x:?} ({an} vs {fd})"
                    )));
                }
            }
        }
        Ok(CylindricalFunctional {
            name,
            directions,
            f,
            partials,
            growth,
        })
    }

    /// `W(h)`.
    pub fn wiener(h: &Direction) -> Self {
        Self::new(
            "W(h)",
            vec![h.clone()],
            Arc::new(|x| x[0]),
            vec![Arc::new(|_| 1.0)],
            Growth::Polynomial,
        )
        .expect("linear functional")
    }

    /// `W(h)²`.
    pub fn square(h: &Direction) -> Self {
        Self::new(
            "W(h)^2",
            vec![h.clone()],
            Arc::new(|x| x[0] * x[0]),
            vec![Arc::new(|x| 2.0 * x[0])],
            Growth::Polynomial,
        )
        .expect("quadratic functional")
    }

    pub fn sin(h: &Direction) -> Self {
        Self::new(
            "sin(W(h))",
            vec![h.clone()],
            Arc::new(|x| x[0].sin()),
            vec![Arc::new(|x| x[0].cos())],
            Growth::Bounded,
        )
        .expect("sine functional")
    }

    pub fn exp(h: &Direction) -> Self {
        Self::new(
            "exp(W(h))",
            vec![h.clone()],
            Arc::new(|x| x[0].exp()),
            vec![Arc::new(|x| x[0].exp())],
            Growth::Polynomial,
        )
        .expect("exponential functional")
    }

    /// The constant `c`, carried by a zero direction on the given space.
    pub fn constant(c: f64, like: &Direction) -> Self {
        let zero = Direction::zero(like.grid(), like.dim()).expect("valid space");
        Self::new(
            format!("{c}"),
            vec![zero],
            Arc::new(move |_| c),
            vec![Arc::new(|_| 0.0)],
            Growth::Bounded,
        )
        .expect("constant functional")
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn directions(&self) -> &[Direction] {
        &self.directions
    }

    pub fn growth(&self) -> Growth {
        self.growth
    }

    pub fn value(&self, x: &[f64]) -> f64 {
        (self.f)(x)
    }

    pub fn partial(&self, j: usize, x: &[f64]) -> f64 {
        (self.partials[j])(x)
    }

    fn check_paths(&self, paths: &dyn PathSource) -> Result<()> {
        paths.check_direction(&self.directions[0])
    }

    /// The `n` discrete Wiener integrals per path, row-major `[path][j]`.
    pub fn coordinates(&self, paths: &dyn PathSource) -> Result<Vec<f64>> {
        self.check_paths(paths)?;
        let n = self.directions.len();
        let row = paths.grid().n_steps() * paths.dim();
        let mut out = vec![0.0; paths.n_paths() * n];
        exec::fill_rows(&mut out, n, |p, xs| {
            let mut inc = vec![0.0; row];
            paths.increments_into(p, &mut inc);
            for (x, h) in xs.iter_mut().zip(&self.directions) {
                *x = inc.iter().zip(h.density()).map(|(w, d)| w * d).sum();
            }
        });
        Ok(out)
    }

    /// `⟨h_j, k⟩_H` for every direction of the functional.
    fn pairings(&self, k: &Direction) -> Result<Vec<f64>> {
        self.directions.iter().map(|h| inner_h(h, k)).collect()
    }
}

impl PathFunctional for CylindricalFunctional {
    fn eval_paths(&self, paths: &dyn PathSource) -> Result<Vec<f64>> {
        eval(self, paths)
    }
}

/// `f(W(h₁), …, W(h_n))` per path.
pub fn eval(f: &CylindricalFunctional, paths: &dyn PathSource) -> Result<Vec<f64>> {
    let n = f.directions.len();
    let x = f.coordinates(paths)?;
    Ok(x.chunks_exact(n).map(|xs| f.value(xs)).collect())
}

/// Per-path values of `⟨∇F, k⟩_H`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GradientPairing {
    pub value: Vec<f64>,
}

/// `⟨∇F, k⟩_H = Σ_j ∂_j f(W(h₁), …, W(h_n)) ⟨h_j, k⟩_H` per path.
pub fn gradient_pairing(
    f: &CylindricalFunctional,
    k: &Direction,
    paths: &dyn PathSource,
) -> Result<GradientPairing> {
    let c = f.pairings(k)?;
    let n = c.len();
    let x = f.coordinates(paths)?;
    let value = x
        .chunks_exact(n)
        .map(|xs| (0..n).map(|j| f.partial(j, xs) * c[j]).sum())
        .collect();
    Ok(GradientPairing { value })
}

/// `δ(Gh) = G·W(h) − ⟨∇G, h⟩_H` per path.
pub fn skorohod_product(g: &CylindricalFunctional, h: &Direction, paths: &dyn PathSource) -> Result<Vec<f64>> {
    let gv = eval(g, paths)?;
    let wh = crate::pathspace::wiener_integral(h, paths)?;
    let grad = gradient_pairing(g, h, paths)?;
    Ok(gv
        .iter()
        .zip(&wh)
        .zip(&grad.value)
        .map(|((g, w), d)| g * w - d)
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::{make_grid, sample_ensemble, shift, WienerEnsemble};

    fn setup() -> (WienerEnsemble, Direction, Direction) {
        let g = make_grid(1.0, 20).unwrap();
        let e = sample_ensemble(&g, 2, 200, 13).unwrap();
        let h = Direction::from_fn(&g, 2, |t| vec![1.0, t]).unwrap();
        let k = Direction::from_fn(&g, 2, |t| vec![0.0, 1.0 - t]).unwrap();
        (e, h, k)
    }

    #[test]
    fn wrong_partial_is_rejected() {
        let (_, h, _) = setup();
        let r = CylindricalFunctional::new(
            "bad",
            vec![h],
            Arc::new(|x| x[0].sin()),
            vec![Arc::new(|x| -x[0].cos())],
            Growth::Bounded,
        );
        assert!(matches!(r, Err(Error::ContractViolation(_))));
    }

    #[test]
    fn identity_with_unit_density_is_terminal_value() {
        let g = make_grid(1.0, 20).unwrap();
        let e = sample_ensemble(&g, 1, 50, 2).unwrap();
        let h = Direction::constant(&g, &[1.0]).unwrap();
        let v = eval(&CylindricalFunctional::wiener(&h), &e).unwrap();
        for (a, b) in v.iter().zip(e.terminal_values(0)) {
            assert!((a - b).abs() < 1e-14);
        }
    }

    #[test]
    fn constant_functional() {
        let (e, h, _) = setup();
        let c = CylindricalFunctional::constant(2.5, &h);
        assert!(eval(&c, &e).unwrap().iter().all(|&v| v == 2.5));
    }

    #[test]
    fn shifted_linear_functional() {
        let (e, h, _) = setup();
        let f = CylindricalFunctional::wiener(&h);
        let eps = 0.4;
        let base = eval(&f, &e).unwrap();
        let moved = eval(&f, &shift(&e, &h, eps).unwrap()).unwrap();
        let n2 = h.norm_sq();
        for (a, b) in base.iter().zip(&moved) {
            assert!((b - a - eps * n2).abs() < 1e-12);
        }
    }

    #[test]
    fn gradient_examples() {
        let (e, h, _) = setup();
        let n2 = h.norm_sq();
        let lin = gradient_pairing(&CylindricalFunctional::wiener(&h), &h, &e).unwrap();
        assert!(lin.value.iter().all(|&v| (v - n2).abs() < 1e-14));

        let wh = eval(&CylindricalFunctional::wiener(&h), &e).unwrap();
        let sq = gradient_pairing(&CylindricalFunctional::square(&h), &h, &e).unwrap();
        for (g, w) in sq.value.iter().zip(&wh) {
            assert!((g - 2.0 * w * n2).abs() < 1e-12);
        }

        let orth = Direction::from_fn(h.grid(), 2, |t| vec![t, -1.0]).unwrap();
        assert_eq!(inner_h(&h, &orth).unwrap(), 0.0);
        let s = gradient_pairing(&CylindricalFunctional::sin(&h), &orth, &e).unwrap();
        assert!(s.value.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn skorohod_examples() {
        let g = make_grid(1.0, 20).unwrap();
        let e = sample_ensemble(&g, 1, 200, 5).unwrap();
        let h = Direction::constant(&g, &[1.0]).unwrap();
        let wh = crate::pathspace::wiener_integral(&h, &e).unwrap();

        let one = skorohod_product(&CylindricalFunctional::constant(1.0, &h), &h, &e).unwrap();
        assert_eq!(one, wh);

        let d = skorohod_product(&CylindricalFunctional::wiener(&h), &h, &e).unwrap();
        for (a, w) in d.iter().zip(&wh) {
            assert!((a - (w * w - 1.0)).abs() < 1e-12);
        }
    }
}
