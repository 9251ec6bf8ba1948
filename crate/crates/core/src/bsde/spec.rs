use std::fmt;
use std::sync::Arc;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::MarkovState;
use crate::error::{invalid, Error, Result};

pub type StateFn = Arc<dyn Fn(&[f64]) -> f64 + Send + Sync>;
pub type StateGrad = Arc<dyn Fn(&[f64], &mut [f64]) + Send + Sync>;
/// `(t, s, y, z) ↦ f`.
pub type DriverFn = Arc<dyn Fn(f64, &[f64], f64, &[f64]) -> f64 + Send + Sync>;
/// `(t, s, y, z, out)`, writing a gradient into `out`.
pub type DriverGrad = Arc<dyn Fn(f64, &[f64], f64, &[f64], &mut [f64]) + Send + Sync>;
/// `(s_T, ⟨Ds_T, ḣ⟩) ↦ ⟨Dξ, ḣ⟩`.
pub type XiPairing = Arc<dyn Fn(&[f64], &[f64]) -> f64 + Send + Sync>;
/// `(t, s, ⟨Ds_t, ḣ⟩, y, z) ↦ ⟨Df(t, ·, y, z), ḣ⟩`.
pub type DfPairing = Arc<dyn Fn(f64, &[f64], &[f64], f64, &[f64]) -> f64 + Send + Sync>;

/// Runs `f` on a zeroed buffer of length `n`, on the stack when it is short.
/// The pairings call this once per path and step.
pub(crate) fn with_scratch<R>(n: usize, f: impl FnOnce(&mut [f64]) -> R) -> R {
    const SHORT: usize = 8;
    if n <= SHORT {
        let mut buf = [0.0; SHORT];
        f(&mut buf[..n])
    } else {
        f(&mut vec![0.0; n])
    }
}

/// Closed-form scalar terminal functions `g(x)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum ScalarTerminal {
    /// `a + b x`.
    Linear { a: f64, b: f64 },
    /// `amp · sin(ω x)`.
    Sin { amp: f64, omega: f64 },
    /// `amp · cos(ω x)`.
    Cos { amp: f64, omega: f64 },
    /// `amp · exp(λ x)`.
    Exp { amp: f64, lambda: f64 },
    /// `tanh(x)`; no Gaussian closed form, used to exercise nested sampling.
    Tanh,
}

impl ScalarTerminal {
    pub fn value(&self, x: f64) -> f64 {
        match *self {
            ScalarTerminal::Linear { a, b } => a + b * x,
            ScalarTerminal::Sin { amp, omega } => amp * (omega * x).sin(),
            ScalarTerminal::Cos { amp, omega } => amp * (omega * x).cos(),
            ScalarTerminal::Exp { amp, lambda } => amp * (lambda * x).exp(),
            ScalarTerminal::Tanh => x.tanh(),
        }
    }

    pub fn derivative(&self, x: f64) -> f64 {
        match *self {
            ScalarTerminal::Linear { b, .. } => b,
            ScalarTerminal::Sin { amp, omega } => amp * omega * (omega * x).cos(),
            ScalarTerminal::Cos { amp, omega } => -amp * omega * (omega * x).sin(),
            ScalarTerminal::Exp { amp, lambda } => amp * lambda * (lambda * x).exp(),
            ScalarTerminal::Tanh => 1.0 - x.tanh().powi(2),
        }
    }

    /// `E[g(x + √τ N)]` and its `x`-derivative when a closed form exists.
    pub fn gaussian_mean(&self, x: f64, tau: f64) -> Option<(f64, f64)> {
        match *self {
            ScalarTerminal::Linear { a, b } => Some((a + b * x, b)),
            ScalarTerminal::Sin { amp, omega } => {
                let damp = (-0.5 * omega * omega * tau).exp();
                Some((amp * damp * (omega * x).sin(), amp * omega * damp * (omega * x).cos()))
            }
            ScalarTerminal::Cos { amp, omega } => {
                let damp = (-0.5 * omega * omega * tau).exp();
                Some((amp * damp * (omega * x).cos(), -amp * omega * damp * (omega * x).sin()))
            }
            ScalarTerminal::Exp { amp, lambda } => {
                let v = amp * (lambda * x + 0.5 * lambda * lambda * tau).exp();
                Some((v, lambda * v))
            }
            ScalarTerminal::Tanh => None,
        }
    }
}

/// Terminal condition `ξ = g(s_T)`.
#[derive(Clone)]
pub struct Terminal {
    name: String,
    g: StateFn,
    grad: Option<StateGrad>,
}

impl fmt::Debug for Terminal {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Terminal")
            .field("name", &self.name)
            .field("has_gradient", &self.grad.is_some())
            .finish_non_exhaustive()
    }
}

impl Terminal {
    pub fn new(name: impl Into<String>, g: StateFn, grad: Option<StateGrad>) -> Self {
        Terminal {
            name: name.into(),
            g,
            grad,
        }
    }

    pub fn constant(k: f64) -> Self {
        Self::new(format!("{k}"), Arc::new(move |_| k), Some(Arc::new(|_, out| out.fill(0.0))))
    }

    /// `g(s^j_T)` for a closed-form scalar `g`.
    pub fn scalar(g: ScalarTerminal, j: usize) -> Self {
        Self::new(
            format!("{g:?}(s{j})"),
            Arc::new(move |s| g.value(s[j])),
            Some(Arc::new(move |s, out| {
                out.fill(0.0);
                out[j] = g.derivative(s[j]);
            })),
        )
    }

    /// `(s^j_T)²`.
    pub fn square(j: usize) -> Self {
        Self::new(
            format!("s{j}^2"),
            Arc::new(move |s| s[j] * s[j]),
            Some(Arc::new(move |s, out| {
                out.fill(0.0);
                out[j] = 2.0 * s[j];
            })),
        )
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn value(&self, s: &[f64]) -> f64 {
        (self.g)(s)
    }

    pub fn gradient(&self) -> Option<&StateGrad> {
        self.grad.as_ref()
    }
}

/// Structural information the oracles use.
#[derive(Debug, Clone, PartialEq)]
pub enum DriverKind {
    Zero,
    /// `α + βy + γ·z`.
    Affine { alpha: f64, beta: f64, gamma: Vec<f64> },
    /// `(c/2)‖z‖²`.
    Quadratic { c: f64 },
    Custom,
}

/// Driver `f(t, s, y, z)` with partials.
#[derive(Clone)]
pub struct Driver {
    name: String,
    kind: DriverKind,
    f: DriverFn,
    f_y: DriverFn,
    f_z: DriverGrad,
    f_x: Option<DriverGrad>,
    /// Bound on `|f_y|` and `‖f_z‖` (Lipschitz) or the constant `C` of the
    /// quadratic growth condition.
    bound: Option<f64>,
}

impl fmt::Debug for Driver {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Driver")
            .field("name", &self.name)
            .field("kind", &self.kind)
            .field("bound", &self.bound)
            .finish_non_exhaustive()
    }
}

impl Driver {
    pub fn new(
        name: impl Into<String>,
        f: DriverFn,
        f_y: DriverFn,
        f_z: DriverGrad,
        f_x: Option<DriverGrad>,
        bound: Option<f64>,
    ) -> Self {
        Driver {
            name: name.into(),
            kind: DriverKind::Custom,
            f,
            f_y,
            f_z,
            f_x,
            bound,
        }
    }

    pub fn zero() -> Self {
        let mut d = Self::affine(0.0, 0.0, &[]);
        d.name = "zero".into();
        d.kind = DriverKind::Zero;
        d
    }

    /// `α + βy + γ·z` with constant coefficients.
    pub fn affine(alpha: f64, beta: f64, gamma: &[f64]) -> Self {
        let g = gamma.to_vec();
        let g2 = g.clone();
        let lip = beta.abs().max(g.iter().map(|v| v * v).sum::<f64>().sqrt());
        Driver {
            name: format!("affine({alpha}, {beta}, {gamma:?})"),
            kind: DriverKind::Affine {
                alpha,
                beta,
                gamma: g.clone(),
            },
            f: Arc::new(move |_, _, y, z| alpha + beta * y + g.iter().zip(z).map(|(a, b)| a * b).sum::<f64>()),
            f_y: Arc::new(move |_, _, _, _| beta),
            f_z: Arc::new(move |_, _, _, _, out| {
                out.fill(0.0);
                out[..g2.len()].copy_from_slice(&g2);
            }),
            f_x: Some(Arc::new(|_, _, _, _, out| out.fill(0.0))),
            bound: Some(lip),
        }
    }

    /// `(c/2)‖z‖²`.
    pub fn quadratic(c: f64) -> Self {
        Driver {
            name: format!("quadratic({c})"),
            kind: DriverKind::Quadratic { c },
            f: Arc::new(move |_, _, _, z| 0.5 * c * z.iter().map(|v| v * v).sum::<f64>()),
            f_y: Arc::new(|_, _, _, _| 0.0),
            f_z: Arc::new(move |_, _, _, z, out| {
                for (o, v) in out.iter_mut().zip(z) {
                    *o = c * v;
                }
            }),
            f_x: Some(Arc::new(|_, _, _, _, out| out.fill(0.0))),
            bound: Some(c.abs()),
        }
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn kind(&self) -> &DriverKind {
        &self.kind
    }

    pub fn bound(&self) -> Option<f64> {
        self.bound
    }

    pub fn f(&self, t: f64, s: &[f64], y: f64, z: &[f64]) -> f64 {
        (self.f)(t, s, y, z)
    }

    pub fn f_y(&self, t: f64, s: &[f64], y: f64, z: &[f64]) -> f64 {
        (self.f_y)(t, s, y, z)
    }

    pub fn f_z(&self, t: f64, s: &[f64], y: f64, z: &[f64], out: &mut [f64]) {
        (self.f_z)(t, s, y, z, out)
    }

    pub fn f_x(&self) -> Option<&DriverGrad> {
        self.f_x.as_ref()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Regime {
    Lipschitz,
    Quadratic,
}

/// `Y_t = ξ + ∫_t^T f(s, s_s, Y_s, Z_s) ds − ∫_t^T Z_s·dW_s` on a declared
/// Markov state.
#[derive(Clone)]
pub struct BsdeSpec {
    pub d: usize,
    pub state: MarkovState,
    pub terminal: Terminal,
    pub driver: Driver,
    pub regime: Regime,
    dxi_pairing: Option<XiPairing>,
    df_pairing: Option<DfPairing>,
}

impl fmt::Debug for BsdeSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("BsdeSpec")
            .field("d", &self.d)
            .field("state", &self.state)
            .field("terminal", &self.terminal)
            .field("driver", &self.driver)
            .field("regime", &self.regime)
            .finish_non_exhaustive()
    }
}

const PROBES: usize = 24;
const FD_STEP: f64 = 1e-5;
const FD_TOL: f64 = 1e-5;

fn fd_check(name: &str, x: &[f64], an: &[f64], f: impl Fn(&[f64]) -> f64) -> Result<()> {
    for j in 0..x.len() {
        let h = FD_STEP * x[j].abs().max(1.0);
        let mut up = x.to_vec();
        let mut dn = x.to_vec();
        up[j] += h;
        dn[j] -= h;
        let fd = (f(&up) - f(&dn)) / (2.0 * h);
        if !an[j].is_finite() || (fd - an[j]).abs() > FD_TOL * an[j].abs().max(1.0) {
            return Err(Error::ContractViolation(format!(
                "{name}[{j}] disagrees with finite differences at {x:?}: {} vs {fd}",
                an[j]
            )));
        }
    }
    Ok(())
}

impl BsdeSpec {
    /// Checks partials by central differences and the regime's growth
    /// conditions at seeded random probes `(t, s, y, z)`.
    pub fn new(d: usize, state: MarkovState, terminal: Terminal, driver: Driver, regime: Regime) -> Result<Self> {
        if d == 0 {
            return Err(invalid("Brownian dimension must be positive"));
        }
        let spec = BsdeSpec {
            d,
            state,
            terminal,
            driver,
            regime,
            dxi_pairing: None,
            df_pairing: None,
        };
        spec.validate()?;
        Ok(spec)
    }

    /// Replaces the pairing derived from the terminal gradient.
    pub fn with_dxi_pairing(mut self, p: XiPairing) -> Self {
        self.dxi_pairing = Some(p);
        self
    }

    /// Replaces the pairing derived from the driver's state gradient.
    pub fn with_df_pairing(mut self, p: DfPairing) -> Self {
        self.df_pairing = Some(p);
        self
    }

    pub fn xi_pairing(&self) -> Option<XiPairing> {
        if let Some(p) = &self.dxi_pairing {
            return Some(p.clone());
        }
        let grad = self.terminal.gradient()?.clone();
        let m = self.state.dim();
        Some(Arc::new(move |s, tan| {
            with_scratch(m, |g| {
                grad(s, g);
                g.iter().zip(tan).map(|(a, b)| a * b).sum()
            })
        }))
    }

    pub fn f_pairing(&self) -> Option<DfPairing> {
        if let Some(p) = &self.df_pairing {
            return Some(p.clone());
        }
        let fx = self.driver.f_x()?.clone();
        let m = self.state.dim();
        Some(Arc::new(move |t, s, tan, y, z| {
            with_scratch(m, |g| {
                fx(t, s, y, z, g);
                g.iter().zip(tan).map(|(a, b)| a * b).sum()
            })
        }))
    }

    fn validate(&self) -> Result<()> {
        let m = self.state.dim();
        let d = self.d;
        let mut rng = ChaCha8Rng::seed_from_u64(0xb5de);
        let mut normal = move || -> f64 { 1.5 * <StandardNormal as Distribution<f64>>::sample(&StandardNormal, &mut rng) };
        let drv = &self.driver;
        for probe in 0..PROBES {
            let t = probe as f64 / (PROBES - 1) as f64;
            let s: Vec<f64> = (0..m).map(|_| normal()).collect();
            let y = normal();
            let z: Vec<f64> = (0..d).map(|_| normal()).collect();

            let fy = drv.f_y(t, &s, y, &z);
            fd_check("f_y", &[y], &[fy], |v| drv.f(t, &s, v[0], &z))?;
            let mut fz = vec![0.0; d];
            drv.f_z(t, &s, y, &z, &mut fz);
            fd_check("f_z", &z, &fz, |v| drv.f(t, &s, y, v))?;
            if let Some(fx) = drv.f_x() {
                let mut g = vec![0.0; m];
                fx(t, &s, y, &z, &mut g);
                fd_check("f_x", &s, &g, |v| drv.f(t, v, y, &z))?;
            }
            if let Some(grad) = self.terminal.gradient() {
                let mut g = vec![0.0; m];
                grad(&s, &mut g);
                fd_check("terminal gradient", &s, &g, |v| self.terminal.value(v))?;
            }

            let znorm = fz.iter().map(|v| v * v).sum::<f64>().sqrt();
            let zlen = z.iter().map(|v| v * v).sum::<f64>().sqrt();
            let bound = drv.bound().ok_or_else(|| {
                Error::ContractViolation(format!("driver {} declares no growth bound", drv.name()))
            })?;
            let slack = 1.0 + 1e-12;
            match self.regime {
                Regime::Lipschitz => {
                    if fy.abs() > bound * slack || znorm > bound * slack {
                        return Err(Error::ContractViolation(format!(
                            "driver {} violates the Lipschitz bound {bound} at a probe",
                            drv.name()
                        )));
                    }
                }
                Regime::Quadratic => {
                    if fy.abs() > bound * slack || znorm > bound * (1.0 + zlen) * slack {
                        return Err(Error::ContractViolation(format!(
                            "driver {} violates the quadratic growth bound {bound} at a probe",
                            drv.name()
                        )));
                    }
                }
            }
        }
        Ok(())
    }
}
