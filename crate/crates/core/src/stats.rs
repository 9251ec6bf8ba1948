//! Small Monte Carlo reductions. All sums run in index order so results are
//! reproducible bit-for-bit.

use serde::{Deserialize, Serialize};

pub fn mean(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Unbiased sample variance.
pub fn variance(xs: &[f64]) -> f64 {
    let n = xs.len();
    if n < 2 {
        return 0.0;
    }
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (n - 1) as f64
}

pub fn std_dev(xs: &[f64]) -> f64 {
    variance(xs).sqrt()
}

/// Standard error of the sample mean.
pub fn std_error(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    std_dev(xs) / (xs.len() as f64).sqrt()
}

/// A Monte Carlo mean with its standard error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub stderr: f64,
}

impl Estimate {
    pub fn of(xs: &[f64]) -> Self {
        Estimate {
            mean: mean(xs),
            stderr: std_error(xs),
        }
    }

    /// Whether `value` lies within `k` standard errors.
    pub fn covers(&self, value: f64, k: f64) -> bool {
        (self.mean - value).abs() <= k * self.stderr
    }
}

/// `E[|x|^q]^{1/q}` with a delta-method standard error.
pub fn lq_norm(xs: &[f64], q: f64) -> Estimate {
    let powered: Vec<f64> = xs.iter().map(|x| x.abs().powf(q)).collect();
    let m = Estimate::of(&powered);
    if m.mean <= 0.0 {
        return Estimate {
            mean: 0.0,
            stderr: 0.0,
        };
    }
    let norm = m.mean.powf(1.0 / q);
    Estimate {
        mean: norm,
        stderr: norm / (q * m.mean) * m.stderr,
    }
}

/// Ordinary least-squares slope of `ys` against `xs`.
pub fn ols_slope(xs: &[f64], ys: &[f64]) -> Option<f64> {
    if xs.len() != ys.len() || xs.len() < 2 {
        return None;
    }
    let mx = mean(xs);
    let my = mean(ys);
    let sxx: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    if sxx <= 0.0 {
        return None;
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    Some(sxy / sxx)
}

/// Slope of `log(err)` against `log(eps)`, skipping points whose error is
/// not strictly positive.
pub fn log_log_slope(eps: &[f64], errors: &[f64]) -> Option<f64> {
    let (lx, ly): (Vec<f64>, Vec<f64>) = eps
        .iter()
        .zip(errors)
        .filter(|(e, r)| **e > 0.0 && **r > 0.0 && r.is_finite())
        .map(|(e, r)| (e.ln(), r.ln()))
        .unzip();
    ols_slope(&lx, &ly)
}

/// Linear-interpolated quantile of an unsorted sample, `q` in `[0, 1]`.
pub fn quantile(xs: &[f64], q: f64) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    let mut v = xs.to_vec();
    v.sort_by(|a, b| a.total_cmp(b));
    quantile_sorted(&v, q)
}

pub fn quantile_sorted(sorted: &[f64], q: f64) -> f64 {
    let pos = q.clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let w = pos - lo as f64;
    sorted[lo] * (1.0 - w) + sorted[hi] * w
}

/// Root mean square.
pub fn rms(xs: &[f64]) -> f64 {
    if xs.is_empty() {
        return f64::NAN;
    }
    (xs.iter().map(|x| x * x).sum::<f64>() / xs.len() as f64).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_power_law() {
        let eps = [0.5, 0.25, 0.125, 0.0625];
        let err: Vec<f64> = eps.iter().map(|e: &f64| 3.0 * e * e).collect();
        let s = log_log_slope(&eps, &err).unwrap();
        assert!((s - 2.0).abs() < 1e-12);
    }

    #[test]
    fn all_zero_errors_have_no_slope() {
        assert_eq!(log_log_slope(&[0.5, 0.25], &[0.0, 0.0]), None);
    }

    #[test]
    fn quantiles_interpolate() {
        let xs = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&xs, 0.0), 1.0);
        assert_eq!(quantile(&xs, 1.0), 4.0);
        assert!((quantile(&xs, 0.5) - 2.5).abs() < 1e-15);
    }

    #[test]
    fn lq_norm_of_constant() {
        let xs = vec![-2.0; 10];
        let e = lq_norm(&xs, 1.5);
        assert!((e.mean - 2.0).abs() < 1e-12);
        assert!(e.stderr < 1e-12);
    }
}
