//! Implicit Fourier-space time steppers with Picard iteration, their
//! linearized stability bounds and the step-size controller.
//!
//! Every scheme treats the linear symbol `sigma_k = i k - i k^3 + gamma_k`
//! implicitly and solves for the nonlinear flux `u^{p+1} / (p+1)` by
//! fixed-point sweeps starting from the current state.

use std::f64::consts::PI;

use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damping::DampingProfile;
use crate::spectral::{derivative_symbol, Grid, SpectralField, SpectralTransform};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SchemeKind {
    /// Implicit midpoint: nonlinearity evaluated at `(u^{n+1} + u^n) / 2`.
    #[default]
    SanzSerna,
    CrankNicolson,
    ImplicitEuler,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 3] = [
        SchemeKind::SanzSerna,
        SchemeKind::CrankNicolson,
        SchemeKind::ImplicitEuler,
    ];
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct PicardConfig {
    /// Absolute tolerance on the L2 norm of successive iterate differences.
    pub tolerance: f64,
    /// Added to `tolerance` after scaling by the iterate's L2 norm.
    pub relative_tolerance: f64,
    pub max_iterations: u32,
    pub under_relaxation: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        Self {
            tolerance: 1e-12,
            relative_tolerance: 1e-12,
            max_iterations: 100,
            under_relaxation: 1.0,
        }
    }
}

impl PicardConfig {
    pub fn validate(&self) -> Result<(), StepError> {
        let ok = self.tolerance > 0.0
            && self.relative_tolerance >= 0.0
            && self.max_iterations >= 1
            && self.under_relaxation > 0.0
            && self.under_relaxation <= 1.0;
        if ok {
            Ok(())
        } else {
            Err(StepError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerMode {
    Fixed,
    #[default]
    Adaptive,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct StepController {
    pub mode: ControllerMode,
    pub dt: f64,
    pub dt_min: f64,
    pub dt_max: f64,
    pub safety_factor: f64,
}

impl Default for StepController {
    fn default() -> Self {
        Self {
            mode: ControllerMode::Adaptive,
            dt: 1e-3,
            dt_min: 1e-7,
            dt_max: 1e-2,
            safety_factor: 0.8,
        }
    }
}

impl StepController {
    pub fn fixed(dt: f64) -> Self {
        Self {
            mode: ControllerMode::Fixed,
            dt,
            dt_min: dt.min(Self::default().dt_min),
            dt_max: dt,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<(), StepError> {
        let ok = self.dt_min > 0.0
            && self.dt_min <= self.dt
            && self.dt <= self.dt_max
            && self.dt_max.is_finite()
            && self.safety_factor > 0.0
            && self.safety_factor < 1.0;
        if ok {
            Ok(())
        } else {
            Err(StepError::InvalidConfig(format!("{self:?}")))
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepResult {
    pub state: SpectralField,
    pub picard_iterations: u32,
    pub picard_residual: f64,
    pub dt_used: f64,
}

#[derive(Debug, Error, Clone, PartialEq)]
pub enum StepError {
    #[error("Picard iteration diverged after {iterations} sweeps (residual {residual:e})")]
    PicardDiverged { iterations: u32, residual: f64 },
    #[error("non-finite value in the iterate")]
    NonFinite,
    #[error("required time step {required:e} is below dt_min {dt_min:e}")]
    StepUnderflow { required: f64, dt_min: f64 },
    #[error("time step must be positive and finite, got {0}")]
    InvalidTimeStep(f64),
    #[error("state and damping profile live on different grids")]
    GridMismatch,
    #[error("nonlinearity exponent must be at least 1")]
    InvalidExponent,
    #[error("invalid stepper configuration: {0}")]
    InvalidConfig(String),
}

/// One-step amplification of the linear part for symbol `sigma`.
pub fn linear_multiplier(scheme: SchemeKind, sigma: Complex64, dt: f64) -> Complex64 {
    let one = Complex64::new(1.0, 0.0);
    match scheme {
        SchemeKind::SanzSerna | SchemeKind::CrankNicolson => {
            (one - sigma * (dt / 2.0)) / (one + sigma * (dt / 2.0))
        }
        SchemeKind::ImplicitEuler => one / (one + sigma * dt),
    }
}

/// Linearized Picard-contraction bound on the step size. `+inf` when the
/// field vanishes.
pub fn stability_dt_bound(scheme: SchemeKind, linf: f64, p: u32, dx: f64) -> f64 {
    let growth = linf.powi(p as i32);
    if growth == 0.0 {
        return f64::INFINITY;
    }
    match scheme {
        SchemeKind::CrankNicolson => dx / (PI * growth),
        SchemeKind::SanzSerna => (p as f64 + 1.0) * dx / (2.0 * PI * growth),
        SchemeKind::ImplicitEuler => dx / (2.0 * PI * growth),
    }
}

/// How the previous step attempt ended.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum LastStep {
    Accepted { dt: f64 },
    Diverged { dt: f64 },
}

pub fn next_dt(
    ctrl: &StepController,
    scheme: SchemeKind,
    linf: f64,
    p: u32,
    dx: f64,
    last: Option<LastStep>,
) -> Result<f64, StepError> {
    let required = match (last, ctrl.mode) {
        (Some(LastStep::Diverged { dt }), _) => dt / 2.0,
        (_, ControllerMode::Fixed) => ctrl.dt,
        (_, ControllerMode::Adaptive) => {
            (ctrl.safety_factor * stability_dt_bound(scheme, linf, p, dx)).min(ctrl.dt_max)
        }
    };
    if required < ctrl.dt_min {
        return Err(StepError::StepUnderflow {
            required,
            dt_min: ctrl.dt_min,
        });
    }
    Ok(required)
}

/// Reusable stepper for one grid, damping profile and scheme.
pub struct Stepper {
    scheme: SchemeKind,
    p: u32,
    picard: PicardConfig,
    dealias: bool,
    nonlinear: bool,
    grid: Grid,
    // i k (Nyquist zeroed)
    ik: Vec<Complex64>,
    // i k - i k^3 + gamma_k (odd part zeroed at Nyquist)
    sigma: Vec<Complex64>,
    transform: SpectralTransform,
    linear: Vec<Complex64>,
    flux: Vec<Complex64>,
    power: Vec<Complex64>,
    iterate: Vec<Complex64>,
    work: Vec<Complex64>,
}

impl std::fmt::Debug for Stepper {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Stepper")
            .field("scheme", &self.scheme)
            .field("p", &self.p)
            .field("picard", &self.picard)
            .field("dealias", &self.dealias)
            .field("nonlinear", &self.nonlinear)
            .finish_non_exhaustive()
    }
}

impl Stepper {
    pub fn new(
        scheme: SchemeKind,
        damping: &DampingProfile,
        p: u32,
        picard: PicardConfig,
        dealias: bool,
    ) -> Result<Self, StepError> {
        if p == 0 {
            return Err(StepError::InvalidExponent);
        }
        picard.validate()?;
        let grid = *damping.grid();
        let n = grid.n_points();
        let ik: Vec<Complex64> = (0..n).map(|m| derivative_symbol(&grid, m, 1)).collect();
        let sigma = (0..n)
            .map(|m| {
                derivative_symbol(&grid, m, 1) + derivative_symbol(&grid, m, 3)
                    + damping.gamma_at_slot(m)
            })
            .collect();
        let zero = Complex64::new(0.0, 0.0);
        Ok(Self {
            scheme,
            p,
            picard,
            dealias,
            nonlinear: true,
            grid,
            ik,
            sigma,
            transform: SpectralTransform::new(grid),
            linear: vec![zero; n],
            flux: vec![zero; n],
            power: vec![zero; n],
            iterate: vec![zero; n],
            work: vec![zero; n],
        })
    }

    /// Drop the nonlinear flux, leaving the damped Airy equation.
    pub fn with_nonlinearity(mut self, enabled: bool) -> Self {
        self.nonlinear = enabled;
        self
    }

    pub fn scheme(&self) -> SchemeKind {
        self.scheme
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn sigma(&self) -> &[Complex64] {
        &self.sigma
    }

    pub fn step(&mut self, state: &SpectralField, dt: f64) -> Result<StepResult, StepError> {
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(StepError::InvalidTimeStep(dt));
        }
        if *state.grid() != self.grid {
            return Err(StepError::GridMismatch);
        }
        let q = self.p + 1;
        let pf = self.p as f64 + 1.0;
        let un = state.coeffs();
        let one = Complex64::new(1.0, 0.0);

        // linear part and flux prefactor of the fixed-point map
        // v -> linear + flux * F[g(v)]
        for m in 0..un.len() {
            let s = self.sigma[m];
            let (linear, flux) = match self.scheme {
                SchemeKind::SanzSerna => {
                    let denom = one + s * (dt / 2.0);
                    let scale = dt / (pf * 2f64.powi(q as i32));
                    ((one - s * (dt / 2.0)) / denom * un[m], -self.ik[m] * scale / denom)
                }
                SchemeKind::CrankNicolson => {
                    let denom = one + s * (dt / 2.0);
                    ((one - s * (dt / 2.0)) / denom * un[m], -self.ik[m] * (dt / (2.0 * pf)) / denom)
                }
                SchemeKind::ImplicitEuler => {
                    let denom = one + s * dt;
                    (un[m] / denom, -self.ik[m] * (dt / pf) / denom)
                }
            };
            self.linear[m] = linear;
            self.flux[m] = if self.nonlinear { flux } else { Complex64::new(0.0, 0.0) };
        }

        if self.nonlinear && self.scheme == SchemeKind::CrankNicolson {
            // explicit half of the trapezoidal flux
            if !self.transform.power_into(un, q, self.dealias, &mut self.power) {
                return Err(StepError::NonFinite);
            }
            for m in 0..un.len() {
                self.linear[m] += self.flux[m] * self.power[m];
            }
        }

        if !self.nonlinear {
            let out = SpectralField::new(self.grid, self.linear.clone())
                .expect("buffer length matches grid");
            if !out.is_finite() {
                return Err(StepError::NonFinite);
            }
            return Ok(StepResult {
                state: out,
                picard_iterations: 1,
                picard_residual: 0.0,
                dt_used: dt,
            });
        }

        self.iterate.copy_from_slice(un);
        let weight = self.grid.spectral_weight();
        let omega = self.picard.under_relaxation;
        let mut previous = f64::INFINITY;
        for sweep in 1..=self.picard.max_iterations {
            match self.scheme {
                SchemeKind::SanzSerna => {
                    for m in 0..un.len() {
                        self.work[m] = self.iterate[m] + un[m];
                    }
                }
                _ => self.work.copy_from_slice(&self.iterate),
            }
            if !self
                .transform
                .power_into(&self.work, q, self.dealias, &mut self.power)
            {
                return Err(StepError::NonFinite);
            }
            let mut diff2 = 0.0;
            let mut norm2 = 0.0;
            for m in 0..un.len() {
                let mapped = self.linear[m] + self.flux[m] * self.power[m];
                let next = self.iterate[m] + (mapped - self.iterate[m]) * omega;
                diff2 += (next - self.iterate[m]).norm_sqr();
                norm2 += next.norm_sqr();
                self.iterate[m] = next;
            }
            let residual = (weight * diff2).sqrt();
            if !residual.is_finite() || !norm2.is_finite() {
                return Err(StepError::NonFinite);
            }
            let threshold =
                self.picard.tolerance + self.picard.relative_tolerance * (weight * norm2).sqrt();
            if residual <= threshold {
                return Ok(StepResult {
                    state: SpectralField::new(self.grid, self.iterate.clone())
                        .expect("buffer length matches grid"),
                    picard_iterations: sweep,
                    picard_residual: residual,
                    dt_used: dt,
                });
            }
            if sweep > 1 && residual > previous {
                return Err(StepError::PicardDiverged {
                    iterations: sweep,
                    residual,
                });
            }
            previous = residual;
        }
        Err(StepError::PicardDiverged {
            iterations: self.picard.max_iterations,
            residual: previous,
        })
    }
}

/// Single step from scratch; builds a fresh [`Stepper`].
pub fn step(
    scheme: SchemeKind,
    state: &SpectralField,
    damping: &DampingProfile,
    p: u32,
    dt: f64,
    picard: PicardConfig,
) -> Result<StepResult, StepError> {
    if state.grid() != damping.grid() {
        return Err(StepError::GridMismatch);
    }
    Stepper::new(scheme, damping, p, picard, false)?.step(state, dt)
}
