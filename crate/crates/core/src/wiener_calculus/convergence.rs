use serde::{Deserialize, Serialize};

use super::PathFunctional;
use crate::error::{invalid, Result};
use crate::pathspace::{shift, Direction, PathSource, WienerEnsemble};
use crate::stats::{self, Estimate};

pub const REPORT_SCHEMA_VERSION: u32 = 1;

/// Dyadic schedule `2^-3, …, 2^-10`.
pub fn default_schedule() -> Vec<f64> {
    dyadic_schedule(3, 10)
}

/// `2^-from, …, 2^-to`.
pub fn dyadic_schedule(from: i32, to: i32) -> Vec<f64> {
    (from..=to).map(|k| 2f64.powi(-k)).collect()
}

pub fn validate_schedule(eps: &[f64]) -> Result<()> {
    if eps.len() < 4 {
        return Err(invalid(format!("an epsilon schedule needs at least 4 points, got {}", eps.len())));
    }
    if eps.iter().any(|e| !(e.is_finite() && *e > 0.0)) {
        return Err(invalid("epsilon values must be positive and finite"));
    }
    if eps.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(invalid("epsilon schedule must be strictly decreasing"));
    }
    Ok(())
}

/// Verdict threshold for the error at the smallest `ε`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Tolerance {
    /// Ten Monte Carlo standard errors of the quotient mean at the smallest `ε`.
    Auto,
    Absolute(f64),
}

/// Per-ε errors of a difference quotient against its claimed limit.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub label: String,
    pub eps_schedule: Vec<f64>,
    pub q: f64,
    pub errors: Vec<f64>,
    pub stderrs: Vec<f64>,
    /// Round-off level below which an error counts as zero.
    pub floors: Vec<f64>,
    pub slope: Option<f64>,
    pub tolerance: f64,
    pub monotone: bool,
    pub passed: bool,
    pub n_paths: usize,
    pub seed: u64,
}

impl ConvergenceReport {
    #[allow(clippy::too_many_arguments)]
    pub fn assemble(
        label: impl Into<String>,
        eps_schedule: Vec<f64>,
        q: f64,
        errors: Vec<Estimate>,
        floors: Vec<f64>,
        tolerance: f64,
        n_paths: usize,
        seed: u64,
    ) -> Self {
        let stderrs = errors.iter().map(|e| e.stderr).collect();
        let errors: Vec<f64> = errors.iter().map(|e| e.mean).collect();
        let slope = stats::log_log_slope(&eps_schedule, &errors);
        let (monotone, passed) = Self::verdict(&errors, &floors, tolerance);
        ConvergenceReport {
            label: label.into(),
            eps_schedule,
            q,
            errors,
            stderrs,
            floors,
            slope,
            tolerance,
            monotone,
            passed,
            n_paths,
            seed,
        }
    }

    /// `(monotone, passed)`: errors may not grow by more than the round-off
    /// floor from one `ε` to the next, and the last error must lie below
    /// `max(tolerance, 2·floor)`.
    pub fn verdict(errors: &[f64], floors: &[f64], tolerance: f64) -> (bool, bool) {
        if errors.is_empty() || errors.iter().any(|e| !e.is_finite()) {
            return (false, false);
        }
        let monotone = errors
            .windows(2)
            .zip(&floors[1..])
            .all(|(w, fl)| w[1] <= w[0] + fl);
        let last = errors.len() - 1;
        let floor_min = floors.iter().cloned().fold(f64::INFINITY, f64::min);
        let small_enough = errors[last] <= tolerance.max(2.0 * floor_min);
        (monotone, monotone && small_enough)
    }

    pub fn smallest_error(&self) -> f64 {
        *self.errors.last().unwrap_or(&f64::NAN)
    }

    /// Whether the slope lies in `[expected - tol, expected + tol]`.
    pub fn slope_within(&self, expected: f64, tol: f64) -> bool {
        self.slope.is_some_and(|s| (s - expected).abs() <= tol)
    }

    /// Columns `eps,lq_error,stderr`.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("eps,lq_error,stderr\n");
        for ((e, r), se) in self.eps_schedule.iter().zip(&self.errors).zip(&self.stderrs) {
            s.push_str(&format!("{e:e},{r:e},{se:e}\n"));
        }
        s
    }

    pub fn summary_json(&self) -> serde_json::Value {
        serde_json::json!({
            "schema_version": REPORT_SCHEMA_VERSION,
            "label": self.label,
            "q": self.q,
            "slope": self.slope,
            "tolerance": self.tolerance,
            "smallest_error": self.smallest_error(),
            "monotone": self.monotone,
            "passed": self.passed,
            "seed": self.seed,
            "n_paths": self.n_paths,
        })
    }
}

/// `(F∘τ_{εh} − F)/ε` per path on common random numbers.
pub fn gateaux_quotient(
    f: &dyn PathFunctional,
    ensemble: &WienerEnsemble,
    h: &Direction,
    epsilon: f64,
) -> Result<Vec<f64>> {
    check_eps(epsilon)?;
    let base = f.eval_paths(ensemble)?;
    forward_from_base(f, &base, ensemble, h, epsilon)
}

/// `(F∘τ_{εh} − F∘τ_{−εh})/(2ε)` per path.
pub fn central_quotient(
    f: &dyn PathFunctional,
    ensemble: &WienerEnsemble,
    h: &Direction,
    epsilon: f64,
) -> Result<Vec<f64>> {
    check_eps(epsilon)?;
    let up = f.eval_paths(&shift(ensemble, h, epsilon)?)?;
    let dn = f.eval_paths(&shift(ensemble, h, -epsilon)?)?;
    Ok(up.iter().zip(&dn).map(|(a, b)| (a - b) / (2.0 * epsilon)).collect())
}

fn check_eps(epsilon: f64) -> Result<()> {
    if epsilon == 0.0 || !epsilon.is_finite() {
        return Err(invalid("epsilon must be non-zero and finite"));
    }
    Ok(())
}

fn forward_from_base(
    f: &dyn PathFunctional,
    base: &[f64],
    ensemble: &WienerEnsemble,
    h: &Direction,
    epsilon: f64,
) -> Result<Vec<f64>> {
    let moved = f.eval_paths(&shift(ensemble, h, epsilon)?)?;
    Ok(moved.iter().zip(base).map(|(a, b)| (a - b) / epsilon).collect())
}

#[derive(Clone, Copy)]
enum Scheme {
    Forward,
    Central,
}

/// L^q errors of the forward quotient against `target` along the schedule.
pub fn convergence_test(
    f: &dyn PathFunctional,
    target: &[f64],
    ensemble: &WienerEnsemble,
    h: &Direction,
    eps_schedule: &[f64],
    q: f64,
    tolerance: Tolerance,
) -> Result<ConvergenceReport> {
    run(f, target, ensemble, h, eps_schedule, q, tolerance, Scheme::Forward)
}

/// Same as [`convergence_test`] with the central quotient; the expected
/// slope is 2 for smooth functionals.
pub fn central_convergence_test(
    f: &dyn PathFunctional,
    target: &[f64],
    ensemble: &WienerEnsemble,
    h: &Direction,
    eps_schedule: &[f64],
    q: f64,
    tolerance: Tolerance,
) -> Result<ConvergenceReport> {
    run(f, target, ensemble, h, eps_schedule, q, tolerance, Scheme::Central)
}

#[allow(clippy::too_many_arguments)]
fn run(
    f: &dyn PathFunctional,
    target: &[f64],
    ensemble: &WienerEnsemble,
    h: &Direction,
    eps_schedule: &[f64],
    q: f64,
    tolerance: Tolerance,
    scheme: Scheme,
) -> Result<ConvergenceReport> {
    validate_schedule(eps_schedule)?;
    if !(q >= 1.0) || !q.is_finite() {
        return Err(invalid(format!("q must be at least 1, got {q}")));
    }
    if target.len() != ensemble.n_paths() {
        return Err(invalid("target must have one value per path"));
    }
    let base = f.eval_paths(ensemble)?;
    let scale = base.iter().fold(0.0f64, |m, v| m.max(v.abs())) + 1.0;
    let mut errors = Vec::with_capacity(eps_schedule.len());
    let mut floors = Vec::with_capacity(eps_schedule.len());
    let mut last_quotient = Vec::new();
    for &eps in eps_schedule {
        let quotient = match scheme {
            Scheme::Forward => forward_from_base(f, &base, ensemble, h, eps)?,
            Scheme::Central => central_quotient(f, ensemble, h, eps)?,
        };
        let diff: Vec<f64> = quotient.iter().zip(target).map(|(a, b)| a - b).collect();
        errors.push(stats::lq_norm(&diff, q));
        floors.push(roundoff_floor(scale, eps));
        last_quotient = quotient;
    }
    let tol = match tolerance {
        Tolerance::Auto => 10.0 * stats::std_error(&last_quotient),
        Tolerance::Absolute(t) => t,
    };
    let label = match scheme {
        Scheme::Forward => "gateaux-forward",
        Scheme::Central => "gateaux-central",
    };
    Ok(ConvergenceReport::assemble(
        label,
        eps_schedule.to_vec(),
        q,
        errors,
        floors,
        tol,
        ensemble.n_paths(),
        ensemble.seed(),
    ))
}

/// Size of the cancellation error in a quotient of values of magnitude
/// `scale` at step `eps`.
pub fn roundoff_floor(scale: f64, eps: f64) -> f64 {
    1e3 * f64::EPSILON * scale / eps.abs()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::pathspace::{inner_h, make_grid, sample_ensemble, wiener_integral};
    use crate::wiener_calculus::{eval, CylindricalFunctional};

    #[test]
    fn schedule_validation() {
        assert!(validate_schedule(&default_schedule()).is_ok());
        assert!(validate_schedule(&[0.5, 0.25, 0.125]).is_err());
        assert!(validate_schedule(&[0.5, 0.25, 0.25, 0.1]).is_err());
        assert!(validate_schedule(&[0.5, 0.25, 0.0, -0.1]).is_err());
    }

    #[test]
    fn zero_epsilon_is_rejected() {
        let g = make_grid(1.0, 4).unwrap();
        let e = sample_ensemble(&g, 1, 4, 1).unwrap();
        let h = Direction::constant(&g, &[1.0]).unwrap();
        let f = CylindricalFunctional::wiener(&h);
        assert!(gateaux_quotient(&f, &e, &h, 0.0).is_err());
    }

    #[test]
    fn linear_and_square_quotients() {
        let g = make_grid(1.0, 16).unwrap();
        let e = sample_ensemble(&g, 1, 100, 8).unwrap();
        let h = Direction::from_fn(&g, 1, |t| vec![1.0 + t]).unwrap();
        let k = Direction::from_fn(&g, 1, |t| vec![2.0 - t]).unwrap();
        let kh = inner_h(&k, &h).unwrap();
        let c = h.norm_sq();
        let wh = wiener_integral(&h, &e).unwrap();
        for eps in [0.5, 0.1, 0.01] {
            let q = gateaux_quotient(&CylindricalFunctional::wiener(&k), &e, &h, eps).unwrap();
            assert!(q.iter().all(|v| (v - kh).abs() < 1e-12));
            let q = gateaux_quotient(&CylindricalFunctional::square(&h), &e, &h, eps).unwrap();
            for (v, w) in q.iter().zip(&wh) {
                assert!((v - (2.0 * c * w + eps * c * c)).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn verdict_rules() {
        let fl = [1e-12; 4];
        assert_eq!(ConvergenceReport::verdict(&[0.4, 0.2, 0.1, 0.05], &fl, 0.06), (true, true));
        assert_eq!(ConvergenceReport::verdict(&[0.4, 0.2, 0.1, 0.05], &fl, 0.01), (true, false));
        assert_eq!(ConvergenceReport::verdict(&[0.4, 0.2, 0.3, 0.05], &fl, 0.1), (false, false));
        assert_eq!(ConvergenceReport::verdict(&[0.0; 4], &fl, 0.0), (true, true));
    }

    #[test]
    fn csv_layout() {
        let g = make_grid(1.0, 8).unwrap();
        let e = sample_ensemble(&g, 1, 50, 3).unwrap();
        let h = Direction::constant(&g, &[1.0]).unwrap();
        let f = CylindricalFunctional::square(&h);
        let wh = eval(&CylindricalFunctional::wiener(&h), &e).unwrap();
        let target: Vec<f64> = wh.iter().map(|w| 2.0 * w).collect();
        let r = convergence_test(&f, &target, &e, &h, &default_schedule(), 1.0, Tolerance::Auto).unwrap();
        let csv = r.to_csv();
        assert!(csv.starts_with("eps,lq_error,stderr\n"));
        assert_eq!(csv.lines().count(), 9);
        assert_eq!(r.summary_json()["schema_version"], 1);
    }
}
