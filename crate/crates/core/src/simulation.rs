//! Time-marching driver, blow-up classification and the mass/energy
//! diagnostics recorded along a run.

use log::{debug, warn};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damping::{omega_threshold, DampingError, DampingProfile, DampingSpec, OmegaInputs};
use crate::spectral::{
    norms_of, soliton, to_spectral, Grid, RealField, SolitonParams, SolitonWidth, SpectralError,
    SpectralField, SpectralTransform,
};
use crate::timestepping::{
    next_dt, LastStep, PicardConfig, SchemeKind, StepController, StepError, Stepper,
};

/// Halving retries allowed after a diverged Picard solve.
pub const PICARD_RETRIES: u32 = 3;

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("t_end must be positive and finite, got {0}")]
    InvalidEndTime(f64),
    #[error("blow-up ratio must exceed 1, got {0}")]
    InvalidBlowupRatio(f64),
    #[error("record_every must be at least 1")]
    InvalidRecordEvery,
    #[error("nonlinearity exponent must be at least 1")]
    InvalidExponent,
    #[error("snapshot time {0} is outside [0, t_end]")]
    InvalidSnapshot(f64),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Damping(#[from] DampingError),
    #[error(transparent)]
    Step(#[from] StepError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum InitialData {
    /// Soliton of the configured exponent `p`, scaled by `amplitude_factor`.
    Soliton {
        speed: f64,
        offset: f64,
        #[serde(default = "one")]
        amplitude_factor: f64,
        #[serde(default = "one_i8")]
        sign: i8,
        #[serde(default)]
        width: SolitonWidth,
    },
    /// `amplitude * cos(k_j x)`.
    Cosine { mode: i64, amplitude: f64 },
    Samples { values: Vec<f64> },
}

fn one() -> f64 {
    1.0
}

fn one_i8() -> i8 {
    1
}

impl InitialData {
    pub fn soliton_params(&self, p: u32) -> Option<SolitonParams> {
        match *self {
            InitialData::Soliton {
                speed,
                offset,
                amplitude_factor,
                sign,
                width,
            } => Some(SolitonParams {
                p,
                speed,
                offset,
                amplitude_factor,
                sign,
                width,
            }),
            _ => None,
        }
    }

    pub fn build(&self, grid: &Grid, p: u32) -> Result<RealField, SpectralError> {
        match self {
            InitialData::Soliton { .. } => {
                soliton(grid, &self.soliton_params(p).expect("soliton variant"))
            }
            InitialData::Cosine { mode, amplitude } => {
                let k = grid.wavenumber(*mode);
                Ok(RealField::from_fn(*grid, |x| amplitude * (k * x).cos()))
            }
            InitialData::Samples { values } => RealField::new(*grid, values.clone()),
        }
    }
}

/// The finest grids in use cap `h1` at a few hundred times its initial
/// value, so the ratio must sit well below that.
pub const DEFAULT_BLOWUP_RATIO: f64 = 10.0;

fn default_ratio() -> f64 {
    DEFAULT_BLOWUP_RATIO
}

fn default_record_every() -> usize {
    1
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationConfig {
    pub grid: Grid,
    pub p: u32,
    pub initial: InitialData,
    pub damping: DampingSpec,
    #[serde(default)]
    pub scheme: SchemeKind,
    #[serde(default)]
    pub picard: PicardConfig,
    #[serde(default)]
    pub controller: StepController,
    pub t_end: f64,
    /// Blow-up is declared once `h1(t) >= blowup_ratio * h1(0)`.
    #[serde(default = "default_ratio")]
    pub blowup_ratio: f64,
    #[serde(default)]
    pub snapshot_times: Vec<f64>,
    #[serde(default = "default_record_every")]
    pub record_every: usize,
    #[serde(default)]
    pub dealias: bool,
    /// Drop the nonlinear term.
    #[serde(default)]
    pub linear: bool,
}

impl SimulationConfig {
    /// Perturbed `p = 5` soliton on `[-50, 50)` with 2048 points, `c = 1.5`,
    /// centered at `x = 10`, amplitude scaled by 1.01; undamped, `t_end = 20`.
    pub fn perturbed_soliton() -> Self {
        Self {
            grid: Grid::new(50.0, 2048).expect("valid grid"),
            p: 5,
            initial: InitialData::Soliton {
                speed: 1.5,
                offset: 10.0,
                amplitude_factor: 1.01,
                sign: 1,
                width: SolitonWidth::Exact,
            },
            damping: DampingSpec::Constant { gamma: 0.0 },
            scheme: SchemeKind::SanzSerna,
            picard: PicardConfig::default(),
            controller: StepController::default(),
            t_end: 20.0,
            blowup_ratio: default_ratio(),
            snapshot_times: Vec::new(),
            record_every: 10,
            dealias: false,
            linear: false,
        }
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if !(self.t_end.is_finite() && self.t_end > 0.0) {
            return Err(ConfigError::InvalidEndTime(self.t_end));
        }
        if !(self.blowup_ratio > 1.0) {
            return Err(ConfigError::InvalidBlowupRatio(self.blowup_ratio));
        }
        if self.record_every == 0 {
            return Err(ConfigError::InvalidRecordEvery);
        }
        if self.p == 0 {
            return Err(ConfigError::InvalidExponent);
        }
        if let Some(bad) = self
            .snapshot_times
            .iter()
            .find(|t| !(**t >= 0.0 && **t <= self.t_end))
        {
            return Err(ConfigError::InvalidSnapshot(*bad));
        }
        self.picard.validate()?;
        self.controller.validate()?;
        if let Some(params) = self.initial.soliton_params(self.p) {
            params.validate()?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormRow {
    pub t: f64,
    /// Step that produced this row (0 for the initial row).
    pub dt: f64,
    pub l2: f64,
    pub h1: f64,
    pub hgamma: f64,
    pub linf: f64,
    /// `D(t) = 2 int_0^t |u|_gamma^2`, trapezoid rule over the steps taken.
    pub dissipation: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct NormSeries {
    pub rows: Vec<NormRow>,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EnergyRow {
    pub t: f64,
    /// `1/2 ||u_x||^2 - int u^{p+2} / ((p+1)(p+2))`
    pub energy: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BlowUpTrigger {
    H1Ratio,
    StepUnderflow,
    PicardDiverged,
    NonFinite,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "outcome", rename_all = "snake_case")]
pub enum Outcome {
    Completed { t_end: f64 },
    BlowUp { t_detect: f64, trigger: BlowUpTrigger },
    Failure { description: String },
}

impl Outcome {
    pub fn is_blow_up(&self) -> bool {
        matches!(self, Outcome::BlowUp { .. })
    }

    pub fn is_completed(&self) -> bool {
        matches!(self, Outcome::Completed { .. })
    }

    pub fn t_detect(&self) -> Option<f64> {
        match self {
            Outcome::BlowUp { t_detect, .. } => Some(*t_detect),
            _ => None,
        }
    }
}

/// How the marching loop stopped.
#[derive(Debug, Clone, PartialEq)]
pub enum RunStatus {
    /// Reached `t_end`, or stopped on an H1 crossing already in the series.
    Finished,
    StepUnderflow { t: f64 },
    PicardDiverged { t: f64 },
    NonFinite { t: f64 },
    Failed { t: f64, description: String },
}

/// Turns a norm series and the loop's final status into an [`Outcome`].
pub fn classify(series: &NormSeries, blowup_ratio: f64, status: &RunStatus) -> Outcome {
    let Some(first) = series.rows.first() else {
        return Outcome::Failure {
            description: "empty norm series".into(),
        };
    };
    let threshold = blowup_ratio * first.h1;
    for row in &series.rows {
        if !(row.h1.is_finite() && row.l2.is_finite() && row.linf.is_finite()) {
            return Outcome::BlowUp {
                t_detect: row.t,
                trigger: BlowUpTrigger::NonFinite,
            };
        }
        if first.h1 > 0.0 && row.h1 >= threshold {
            return Outcome::BlowUp {
                t_detect: row.t,
                trigger: BlowUpTrigger::H1Ratio,
            };
        }
    }
    match status {
        RunStatus::Finished => Outcome::Completed {
            t_end: series.rows.last().expect("nonempty").t,
        },
        RunStatus::StepUnderflow { t } => Outcome::BlowUp {
            t_detect: *t,
            trigger: BlowUpTrigger::StepUnderflow,
        },
        RunStatus::PicardDiverged { t } => Outcome::BlowUp {
            t_detect: *t,
            trigger: BlowUpTrigger::PicardDiverged,
        },
        RunStatus::NonFinite { t } => Outcome::BlowUp {
            t_detect: *t,
            trigger: BlowUpTrigger::NonFinite,
        },
        RunStatus::Failed { description, .. } => Outcome::Failure {
            description: description.clone(),
        },
    }
}

/// `max_t |N(u(t)) + D(t) - N(u_0)| / N(u_0)` with `N = ||u||_2^2`; the
/// absolute defect when `N(u_0) = 0`.
pub fn dissipation_residual(series: &NormSeries) -> f64 {
    let Some(first) = series.rows.first() else {
        return 0.0;
    };
    let n0 = first.l2 * first.l2;
    let scale = if n0 > 0.0 { n0 } else { 1.0 };
    series
        .rows
        .iter()
        .map(|r| (r.l2 * r.l2 + r.dissipation - n0).abs() / scale)
        .fold(0.0, f64::max)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub t: f64,
    pub field: RealField,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimulationReport {
    pub config: SimulationConfig,
    pub norms: NormSeries,
    pub energy: Vec<EnergyRow>,
    pub snapshots: Vec<Snapshot>,
    pub outcome: Outcome,
    pub theta: f64,
    pub dissipation_residual: f64,
    pub steps: usize,
    pub picard_sweeps: u64,
    pub final_state: SpectralField,
}

fn energy(physical: &RealField, h1_seminorm: f64, p: u32) -> f64 {
    let dx = physical.grid().dx();
    let pf = p as f64;
    let potential: f64 = physical
        .values()
        .iter()
        .map(|v| v.powi(p as i32 + 2))
        .sum::<f64>()
        * dx;
    0.5 * h1_seminorm * h1_seminorm - potential / ((pf + 1.0) * (pf + 2.0))
}

fn second_derivative_norm(state: &SpectralField) -> f64 {
    let grid = state.grid();
    let s: f64 = state
        .coeffs()
        .iter()
        .enumerate()
        .map(|(m, c)| grid.wavenumber_at(m).powi(4) * c.norm_sqr())
        .sum();
    (grid.spectral_weight() * s).sqrt()
}

pub fn run_simulation(cfg: &SimulationConfig) -> Result<SimulationReport, ConfigError> {
    cfg.validate()?;
    let profile = cfg.damping.build(&cfg.grid)?;
    run_with_profile(cfg, &profile)
}

/// Runs `cfg` with `profile` in place of `cfg.damping`.
pub fn run_with_profile(
    cfg: &SimulationConfig,
    profile: &DampingProfile,
) -> Result<SimulationReport, ConfigError> {
    cfg.validate()?;
    let grid = cfg.grid;
    if *profile.grid() != grid {
        return Err(SpectralError::GridMismatch.into());
    }
    let mut config = cfg.clone();
    config.damping = profile.spec().clone();

    let u0 = cfg.initial.build(&grid, cfg.p)?;
    let mut state = to_spectral(&u0);
    let mut physical = u0.clone();
    let mut transform = SpectralTransform::new(grid);
    let mut stepper = Stepper::new(cfg.scheme, profile, cfg.p, cfg.picard, cfg.dealias)?
        .with_nonlinearity(!cfg.linear);

    let theta = omega_threshold(OmegaInputs {
        a: u0.values().iter().map(|v| v * v).sum::<f64>().sqrt() * grid.dx().sqrt(),
        b: second_derivative_norm(&state),
        p: cfg.p,
    })?;

    let mut snapshot_times = cfg.snapshot_times.clone();
    snapshot_times.sort_by(f64::total_cmp);
    snapshot_times.dedup();
    let mut pending = snapshot_times.into_iter().peekable();
    let mut snapshots = Vec::new();

    let n0 = norms_of(&u0, &state, Some(profile))?;
    let mut series = NormSeries::default();
    let mut energy_rows = Vec::new();
    series.rows.push(NormRow {
        t: 0.0,
        dt: 0.0,
        l2: n0.l2,
        h1: n0.h1,
        hgamma: n0.hgamma.unwrap_or(0.0),
        linf: n0.linf,
        dissipation: 0.0,
    });
    energy_rows.push(EnergyRow {
        t: 0.0,
        energy: energy(&u0, n0.h1_seminorm, cfg.p),
    });
    while pending.peek().is_some_and(|s| *s <= 0.0) {
        pending.next();
        snapshots.push(Snapshot {
            t: 0.0,
            field: u0.clone(),
        });
    }

    let h1_limit = cfg.blowup_ratio * n0.h1;
    let dx = grid.dx();
    let mut t = 0.0;
    let mut linf = n0.linf;
    let mut rate = profile.dissipation_rate(&state);
    let mut dissipation = 0.0;
    let mut steps = 0usize;
    let mut sweeps = 0u64;
    let mut last: Option<LastStep> = None;
    let mut retries = 0;
    let mut status = RunStatus::Finished;

    while t < cfg.t_end {
        let mut dt = match next_dt(&cfg.controller, cfg.scheme, linf, cfg.p, dx, last) {
            Ok(dt) => dt,
            Err(StepError::StepUnderflow { required, .. }) => {
                debug!("step underflow at t = {t}: required dt = {required:e}");
                status = RunStatus::StepUnderflow { t };
                break;
            }
            Err(e) => {
                status = RunStatus::Failed {
                    t,
                    description: e.to_string(),
                };
                break;
            }
        };
        let target = pending.peek().copied().unwrap_or(cfg.t_end).min(cfg.t_end);
        let mut hits_target = false;
        if t + dt >= target * (1.0 - 1e-14) {
            dt = target - t;
            hits_target = true;
        }
        let result = match stepper.step(&state, dt) {
            Ok(r) => r,
            Err(StepError::PicardDiverged { iterations, residual }) => {
                retries += 1;
                debug!(
                    "Picard diverged at t = {t}, dt = {dt:e} ({iterations} sweeps, residual {residual:e})"
                );
                if retries > PICARD_RETRIES {
                    status = RunStatus::PicardDiverged { t };
                    break;
                }
                last = Some(LastStep::Diverged { dt });
                continue;
            }
            Err(StepError::NonFinite) => {
                status = RunStatus::NonFinite { t };
                break;
            }
            Err(e) => {
                status = RunStatus::Failed {
                    t,
                    description: e.to_string(),
                };
                break;
            }
        };
        retries = 0;
        last = Some(LastStep::Accepted { dt });
        sweeps += u64::from(result.picard_iterations);
        steps += 1;
        state = result.state;
        t = if hits_target { target } else { t + dt };

        transform.inverse_into(state.coeffs(), physical.values_mut());
        let n = match norms_of(&physical, &state, Some(profile)) {
            Ok(n) => n,
            Err(_) => {
                status = RunStatus::NonFinite { t };
                break;
            }
        };
        let new_rate = profile.dissipation_rate(&state);
        dissipation += dt * (rate + new_rate);
        rate = new_rate;
        linf = n.linf;

        let crossed = n.h1 >= h1_limit && n0.h1 > 0.0;
        let snapshot_due = hits_target && pending.peek().is_some_and(|s| *s <= t);
        let done = t >= cfg.t_end;
        if steps.is_multiple_of(cfg.record_every) || crossed || snapshot_due || done {
            series.rows.push(NormRow {
                t,
                dt,
                l2: n.l2,
                h1: n.h1,
                hgamma: n.hgamma.unwrap_or(0.0),
                linf: n.linf,
                dissipation,
            });
            energy_rows.push(EnergyRow {
                t,
                energy: energy(&physical, n.h1_seminorm, cfg.p),
            });
        }
        if snapshot_due {
            while pending.peek().is_some_and(|s| *s <= t) {
                pending.next();
            }
            snapshots.push(Snapshot {
                t,
                field: physical.clone(),
            });
        }
        if crossed {
            break;
        }
    }

    let outcome = classify(&series, cfg.blowup_ratio, &status);
    if let Outcome::Failure { description } = &outcome {
        warn!("simulation failed: {description}");
    }
    let dissipation_residual = dissipation_residual(&series);
    Ok(SimulationReport {
        config,
        norms: series,
        energy: energy_rows,
        snapshots,
        outcome,
        theta,
        dissipation_residual,
        steps,
        picard_sweeps: sweeps,
        final_state: state,
    })
}
