//! Damping symbols `gamma_j`, the operator `L_gamma`, the `H_gamma` norm and
//! the finite checks that go with them.

use log::warn;
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{Grid, SpectralError, SpectralField};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DampingError {
    #[error("damping values must be finite and nonnegative, got {0}")]
    Negative(f64),
    #[error("band cutoffs must be strictly increasing and positive")]
    CutoffsNotIncreasing,
    #[error("gaussian width must be positive, got {0}")]
    InvalidWidth(f64),
    #[error("explicit profile needs {expected} values (|j| = 0..=N/2), got {got}")]
    ExplicitLength { expected: usize, got: usize },
    #[error("embedding constant undefined: gamma vanishes at mode {0}")]
    EmbeddingUndefined(i64),
    #[error("smoothing exponent must lie in (0, 2) and time must be positive (r = {r}, t = {t})")]
    SmoothingArguments { r: f64, t: f64 },
    #[error("omega inputs must be nonnegative (a = {a}, b = {b})")]
    NegativeOmegaInput { a: f64, b: f64 },
    #[error(transparent)]
    Spectral(#[from] SpectralError),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BandLevel {
    /// Outer mode cutoff `N_i` of the band `N_{i-1} < |j| <= N_i`.
    pub cutoff: i64,
    pub gamma: f64,
}

/// Serializable description of a damping profile.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum DampingSpec {
    Constant {
        gamma: f64,
    },
    Bands {
        levels: Vec<BandLevel>,
        #[serde(default)]
        trailing_zero: bool,
    },
    Gaussian {
        amplitude: f64,
        width: f64,
    },
    /// One value per `|j|`, from 0 to `N/2`.
    Explicit {
        gamma: Vec<f64>,
    },
}

impl DampingSpec {
    pub fn build(&self, grid: &Grid) -> Result<DampingProfile, DampingError> {
        match self {
            DampingSpec::Constant { gamma } => constant_profile(grid, *gamma),
            DampingSpec::Bands {
                levels,
                trailing_zero,
            } => band_profile(grid, levels, *trailing_zero),
            DampingSpec::Gaussian { amplitude, width } => gaussian_profile(grid, *amplitude, *width),
            DampingSpec::Explicit { gamma } => explicit_profile(grid, gamma.clone()),
        }
    }
}

/// Nonnegative, even Fourier multiplier on a grid.
#[derive(Debug, Clone, PartialEq)]
pub struct DampingProfile {
    grid: Grid,
    // indexed by |j|, 0..=N/2
    by_abs_mode: Vec<f64>,
    spec: DampingSpec,
}

fn check_value(v: f64) -> Result<f64, DampingError> {
    if v.is_finite() && v >= 0.0 {
        Ok(v)
    } else {
        Err(DampingError::Negative(v))
    }
}

pub fn constant_profile(grid: &Grid, gamma: f64) -> Result<DampingProfile, DampingError> {
    check_value(gamma)?;
    Ok(DampingProfile {
        grid: *grid,
        by_abs_mode: vec![gamma; grid.n_points() / 2 + 1],
        spec: DampingSpec::Constant { gamma },
    })
}

/// Piecewise-constant profile. Mode 0 belongs to the first band; modes beyond
/// the last cutoff take the last value, or 0 with `trailing_zero`.
pub fn band_profile(
    grid: &Grid,
    levels: &[BandLevel],
    trailing_zero: bool,
) -> Result<DampingProfile, DampingError> {
    let mut prev = 0;
    for level in levels {
        if level.cutoff <= prev {
            return Err(DampingError::CutoffsNotIncreasing);
        }
        check_value(level.gamma)?;
        prev = level.cutoff;
    }
    let half = grid.max_mode();
    let tail = match (levels.last(), trailing_zero) {
        (Some(last), false) => last.gamma,
        _ => 0.0,
    };
    let by_abs_mode = (0..=half)
        .map(|a| {
            levels
                .iter()
                .find(|l| a <= l.cutoff)
                .map_or(tail, |l| l.gamma)
        })
        .collect();
    Ok(DampingProfile {
        grid: *grid,
        by_abs_mode,
        spec: DampingSpec::Bands {
            levels: levels.to_vec(),
            trailing_zero,
        },
    })
}

/// `gamma_j = amplitude * exp(-k_j^2 / (2 width^2))`, width in wavenumber units.
pub fn gaussian_profile(
    grid: &Grid,
    amplitude: f64,
    width: f64,
) -> Result<DampingProfile, DampingError> {
    check_value(amplitude)?;
    if !(width.is_finite() && width > 0.0) {
        return Err(DampingError::InvalidWidth(width));
    }
    let by_abs_mode = (0..=grid.max_mode())
        .map(|a| amplitude * gaussian_shape(grid.wavenumber(a), width))
        .collect();
    Ok(DampingProfile {
        grid: *grid,
        by_abs_mode,
        spec: DampingSpec::Gaussian { amplitude, width },
    })
}

pub(crate) fn gaussian_shape(k: f64, width: f64) -> f64 {
    (-k * k / (2.0 * width * width)).exp()
}

pub fn explicit_profile(grid: &Grid, by_abs_mode: Vec<f64>) -> Result<DampingProfile, DampingError> {
    let expected = grid.n_points() / 2 + 1;
    if by_abs_mode.len() != expected {
        return Err(DampingError::ExplicitLength {
            expected,
            got: by_abs_mode.len(),
        });
    }
    for v in &by_abs_mode {
        check_value(*v)?;
    }
    Ok(DampingProfile {
        grid: *grid,
        spec: DampingSpec::Explicit {
            gamma: by_abs_mode.clone(),
        },
        by_abs_mode,
    })
}

impl DampingProfile {
    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn spec(&self) -> &DampingSpec {
        &self.spec
    }

    /// `gamma_j` for mode `j`.
    pub fn gamma(&self, j: i64) -> f64 {
        self.by_abs_mode[j.unsigned_abs() as usize]
    }

    pub fn gamma_at_slot(&self, slot: usize) -> f64 {
        self.gamma(self.grid.mode_index(slot))
    }

    /// Values for `|j| = 0..=N/2`.
    pub fn by_abs_mode(&self) -> &[f64] {
        &self.by_abs_mode
    }

    pub fn is_strictly_positive(&self) -> bool {
        self.by_abs_mode.iter().all(|g| *g > 0.0)
    }

    pub fn is_zero(&self) -> bool {
        self.by_abs_mode.iter().all(|g| *g == 0.0)
    }

    /// `sum_j gamma_j |u_hat_j|^2` weighted by `2L`, i.e. `|u|_gamma^2`.
    pub fn dissipation_rate(&self, field: &SpectralField) -> f64 {
        let s: f64 = field
            .coeffs()
            .iter()
            .enumerate()
            .map(|(m, c)| self.gamma_at_slot(m) * c.norm_sqr())
            .sum();
        self.grid.spectral_weight() * s
    }

    pub fn hgamma_norm(&self, field: &SpectralField) -> f64 {
        self.dissipation_rate(field).sqrt()
    }
}

/// `L_gamma(u)` in Fourier space.
pub fn apply_damping(
    field: &SpectralField,
    profile: &DampingProfile,
) -> Result<SpectralField, DampingError> {
    if field.grid() != profile.grid() {
        return Err(SpectralError::GridMismatch.into());
    }
    let coeffs: Vec<Complex64> = field
        .coeffs()
        .iter()
        .enumerate()
        .map(|(m, c)| c * profile.gamma_at_slot(m))
        .collect();
    Ok(SpectralField::new(*field.grid(), coeffs)?)
}

/// Constant `C` with `||u||_inf <= C |u|_gamma` on the grid:
/// `C = sqrt(sum_j 1 / (w gamma_j))`, `w = 2L`.
pub fn embedding_constant(profile: &DampingProfile) -> Result<f64, DampingError> {
    let grid = profile.grid();
    let w = grid.spectral_weight();
    let mut s = 0.0;
    for m in 0..grid.n_points() {
        let g = profile.gamma_at_slot(m);
        if g <= 0.0 {
            return Err(DampingError::EmbeddingUndefined(grid.mode_index(m)));
        }
        s += 1.0 / (w * g);
    }
    Ok(s.sqrt())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SmoothingReport {
    pub sup_observed: f64,
    pub bound: f64,
    pub holds: bool,
}

/// Compares `max_j gamma_j^r exp(-2 gamma_j t)` with `(r/2)^r e^{-r} / t^r`.
pub fn check_smoothing_bound(
    profile: &DampingProfile,
    r: f64,
    t: f64,
) -> Result<SmoothingReport, DampingError> {
    if !(r > 0.0 && r < 2.0 && t > 0.0 && t.is_finite()) {
        return Err(DampingError::SmoothingArguments { r, t });
    }
    let sup_observed = profile
        .by_abs_mode
        .iter()
        .map(|g| g.powf(r) * (-2.0 * g * t).exp())
        .fold(0.0, f64::max);
    let bound = (r / 2.0).powf(r) * (-r).exp() / t.powf(r);
    Ok(SmoothingReport {
        sup_observed,
        bound,
        holds: sup_observed <= bound * (1.0 + 1e-12),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OmegaInputs {
    /// `||u_0||_2`
    pub a: f64,
    /// `||u_0xx||_2`
    pub b: f64,
    pub p: u32,
}

/// Damping level above which the second-derivative seminorm cannot grow,
/// evaluated term by term as
/// `5p/2 (2 a^{3/2} b^{1/2})^{(p-1)/2} a^{1/4} b^{3/4}
///  + p(p-1) (2 a^{3/2} b^{1/2})^{(p-2)/2} a b`.
pub fn omega_threshold(inp: OmegaInputs) -> Result<f64, DampingError> {
    let OmegaInputs { a, b, p } = inp;
    if !(a >= 0.0 && b >= 0.0) {
        return Err(DampingError::NegativeOmegaInput { a, b });
    }
    if p < 4 {
        warn!("omega threshold evaluated for p = {p} < 4; solutions are global for any damping");
    }
    let p = p as f64;
    let base = 2.0 * a.powf(1.5) * b.sqrt();
    let first = 2.5 * p * base.powf((p - 1.0) / 2.0) * a.powf(0.25) * b.powf(0.75);
    let second = p * (p - 1.0) * base.powf((p - 2.0) / 2.0) * a * b;
    Ok(first + second)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::spectral::{make_grid, to_physical, to_spectral, RealField};
    use std::f64::consts::PI;

    #[test]
    fn constant_profiles() {
        let g = make_grid(50.0, 64).unwrap();
        assert!(constant_profile(&g, 0.0).unwrap().is_zero());
        for gamma in [0.0027, 0.0025] {
            let p = constant_profile(&g, gamma).unwrap();
            assert!((-32..32).all(|j| p.gamma(j) == gamma));
        }
        assert_eq!(
            constant_profile(&g, -1e-3),
            Err(DampingError::Negative(-1e-3))
        );
    }

    #[test]
    fn single_band_equals_constant() {
        let g = make_grid(50.0, 64).unwrap();
        let level = BandLevel {
            cutoff: 32,
            gamma: 0.003,
        };
        let b = band_profile(&g, &[level], false).unwrap();
        let c = constant_profile(&g, 0.003).unwrap();
        assert_eq!(b.by_abs_mode(), c.by_abs_mode());
    }

    #[test]
    fn staircase_with_trailing_zero() {
        let g = make_grid(50.0, 1024).unwrap();
        let levels = [
            BandLevel {
                cutoff: 64,
                gamma: 0.004,
            },
            BandLevel {
                cutoff: 256,
                gamma: 0.001,
            },
        ];
        let p = band_profile(&g, &levels, true).unwrap();
        for j in -512..512_i64 {
            let expected = match j.abs() {
                0..=64 => 0.004,
                65..=256 => 0.001,
                _ => 0.0,
            };
            assert_eq!(p.gamma(j), expected);
        }
        let reversed = [levels[1], levels[0]];
        assert_eq!(
            band_profile(&g, &reversed, true),
            Err(DampingError::CutoffsNotIncreasing)
        );
    }

    #[test]
    fn gaussian_profile_values() {
        let g = make_grid(PI, 16).unwrap();
        assert!(gaussian_profile(&g, 0.0, 1.0).unwrap().is_zero());
        let p = gaussian_profile(&g, 0.004, 3.0).unwrap();
        assert_eq!(p.gamma(0), 0.004);
        assert!((p.gamma(3) - 0.004 * (-0.5f64).exp()).abs() < 1e-18);
        assert_eq!(
            gaussian_profile(&g, 1.0, 0.0),
            Err(DampingError::InvalidWidth(0.0))
        );
    }

    #[test]
    fn apply_damping_cases() {
        let g = make_grid(2.0, 32).unwrap();
        let u = RealField::from_fn(g, |x| (PI * x / 2.0).sin() + 0.3 * (3.0 * PI * x / 2.0).cos());
        let s = to_spectral(&u);
        let zero = apply_damping(&s, &constant_profile(&g, 0.0).unwrap()).unwrap();
        assert!(zero.coeffs().iter().all(|c| c.norm() == 0.0));
        let scaled = apply_damping(&s, &constant_profile(&g, 0.7).unwrap()).unwrap();
        for (a, b) in scaled.coeffs().iter().zip(s.coeffs()) {
            assert!((a - b * 0.7).norm() < 1e-16);
        }
        let gauss = gaussian_profile(&g, 1.0, 2.0).unwrap();
        let out = apply_damping(&s, &gauss).unwrap();
        assert!(out.hermitian_defect() < 1e-12);
        let other = make_grid(3.0, 32).unwrap();
        assert!(apply_damping(&s, &constant_profile(&other, 1.0).unwrap()).is_err());
        let back = to_physical(&out);
        assert!(back.is_finite());
    }

    #[test]
    fn hgamma_constant_factor() {
        let g = make_grid(5.0, 64).unwrap();
        let u = RealField::from_fn(g, |x| (-x * x).exp());
        let n = crate::spectral::norms(&u, Some(&constant_profile(&g, 0.09).unwrap())).unwrap();
        assert!((n.hgamma.unwrap() - 0.3 * n.l2).abs() < 1e-12 * n.l2);
    }

    #[test]
    fn embedding_constant_cases() {
        // w = 2L = 1
        let g = make_grid(0.5, 8).unwrap();
        let c = embedding_constant(&constant_profile(&g, 4.0).unwrap()).unwrap();
        assert!((c - 2f64.sqrt()).abs() < 1e-15);
        let c4 = embedding_constant(&constant_profile(&g, 16.0).unwrap()).unwrap();
        assert!((c4 - c / 2.0).abs() < 1e-15);
        let mut vals = vec![1.0; 5];
        vals[3] = 0.0;
        let p = explicit_profile(&g, vals).unwrap();
        assert_eq!(embedding_constant(&p), Err(DampingError::EmbeddingUndefined(3)));
    }

    #[test]
    fn smoothing_bound_cases() {
        let g = make_grid(1.0, 8).unwrap();
        let zero = check_smoothing_bound(&constant_profile(&g, 0.0).unwrap(), 0.5, 1.0).unwrap();
        assert_eq!(zero.sup_observed, 0.0);
        assert!(zero.holds);
        let tight = check_smoothing_bound(&constant_profile(&g, 0.5).unwrap(), 1.0, 1.0).unwrap();
        let expected = 0.5 * (-1.0f64).exp();
        assert!((tight.sup_observed - expected).abs() < 1e-16);
        assert!((tight.bound - expected).abs() < 1e-16);
        assert!(tight.holds);
        assert!(check_smoothing_bound(&constant_profile(&g, 0.5).unwrap(), 2.0, 1.0).is_err());
        assert!(check_smoothing_bound(&constant_profile(&g, 0.5).unwrap(), 1.0, 0.0).is_err());
    }

    #[test]
    fn omega_cases() {
        assert_eq!(omega_threshold(OmegaInputs { a: 0.0, b: 3.0, p: 5 }).unwrap(), 0.0);
        let v = omega_threshold(OmegaInputs { a: 1.0, b: 1.0, p: 4 }).unwrap();
        assert!((v - (10.0 * 2f64.powf(1.5) + 24.0)).abs() < 1e-12);
        assert!((v - 52.2843).abs() < 1e-4);
        assert!(omega_threshold(OmegaInputs { a: -1.0, b: 1.0, p: 4 }).is_err());
    }

    #[test]
    fn spec_round_trips_through_json() {
        let spec = DampingSpec::Bands {
            levels: vec![BandLevel {
                cutoff: 4,
                gamma: 0.5,
            }],
            trailing_zero: true,
        };
        let text = serde_json::to_string(&spec).unwrap();
        assert!(text.contains("\"type\":\"bands\""));
        let back: DampingSpec = serde_json::from_str(&text).unwrap();
        assert_eq!(back, spec);
        let g = make_grid(1.0, 16).unwrap();
        assert_eq!(back.build(&g).unwrap().gamma(5), 0.0);
    }
}
