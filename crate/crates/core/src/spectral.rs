//! Periodic grid, Fourier transforms, spectral differentiation, norms and
//! initial data for real fields on `[-L, L)`.
//!
//! Coefficients are stored in FFT order: slot `m` holds mode `j = m` for
//! `m < N/2` and `j = m - N` otherwise, so slot `N/2` is the Nyquist mode
//! `j = -N/2`. The normalization is
//!
//! ```text
//! u(x) = sum_j u_hat_j exp(i k_j x),   k_j = pi j / L
//! ```
//!
//! which gives the discrete Parseval identity
//! `sum_i u_i^2 dx = 2L sum_j |u_hat_j|^2`.

use std::f64::consts::PI;
use std::fmt;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::damping::DampingProfile;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SpectralError {
    #[error("number of grid points must be a power of two and at least 8, got {0}")]
    InvalidPointCount(usize),
    #[error("half length must be positive and finite, got {0}")]
    InvalidHalfLength(f64),
    #[error("fields live on different grids")]
    GridMismatch,
    #[error("derivative order {0} is not supported (expected 1..=4)")]
    UnsupportedOrder(u32),
    #[error("power exponent must be at least 1")]
    InvalidExponent,
    #[error("expected {expected} samples, got {got}")]
    SampleCount { expected: usize, got: usize },
    #[error("non-finite value encountered")]
    NonFinite,
    #[error("soliton speed must exceed 1, got {0}")]
    InvalidSpeed(f64),
    #[error("soliton exponent must be at least 1")]
    InvalidSolitonExponent,
}

/// Uniform periodic grid on `[-L, L)` with `N` points.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "GridParams", into = "GridParams")]
pub struct Grid {
    half_length: f64,
    n_points: usize,
}

#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
struct GridParams {
    half_length: f64,
    n_points: usize,
}

impl TryFrom<GridParams> for Grid {
    type Error = SpectralError;

    fn try_from(p: GridParams) -> Result<Self, Self::Error> {
        Grid::new(p.half_length, p.n_points)
    }
}

impl From<Grid> for GridParams {
    fn from(g: Grid) -> Self {
        GridParams {
            half_length: g.half_length,
            n_points: g.n_points,
        }
    }
}

impl Grid {
    pub fn new(half_length: f64, n_points: usize) -> Result<Self, SpectralError> {
        if !(half_length.is_finite() && half_length > 0.0) {
            return Err(SpectralError::InvalidHalfLength(half_length));
        }
        if n_points < 8 || !n_points.is_power_of_two() {
            return Err(SpectralError::InvalidPointCount(n_points));
        }
        Ok(Self {
            half_length,
            n_points,
        })
    }

    pub fn half_length(&self) -> f64 {
        self.half_length
    }

    pub fn n_points(&self) -> usize {
        self.n_points
    }

    /// Total period `2L`.
    pub fn length(&self) -> f64 {
        2.0 * self.half_length
    }

    pub fn dx(&self) -> f64 {
        self.length() / self.n_points as f64
    }

    pub fn x(&self, i: usize) -> f64 {
        -self.half_length + i as f64 * self.dx()
    }

    pub fn points(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_points).map(|i| self.x(i))
    }

    /// Largest mode magnitude, `N/2`.
    pub fn max_mode(&self) -> i64 {
        (self.n_points / 2) as i64
    }

    /// Mode index `j` stored at `slot`.
    pub fn mode_index(&self, slot: usize) -> i64 {
        let n = self.n_points as i64;
        let m = slot as i64;
        if m < n / 2 {
            m
        } else {
            m - n
        }
    }

    /// Storage slot of mode `j`, for `j` in `[-N/2, N/2)`.
    pub fn slot(&self, j: i64) -> usize {
        let n = self.n_points as i64;
        debug_assert!(j >= -n / 2 && j < n / 2);
        j.rem_euclid(n) as usize
    }

    pub fn nyquist_slot(&self) -> usize {
        self.n_points / 2
    }

    pub fn wavenumber(&self, j: i64) -> f64 {
        PI * j as f64 / self.half_length
    }

    pub fn wavenumber_at(&self, slot: usize) -> f64 {
        self.wavenumber(self.mode_index(slot))
    }

    /// Wavenumbers in storage order.
    pub fn wavenumbers(&self) -> Vec<f64> {
        (0..self.n_points).map(|m| self.wavenumber_at(m)).collect()
    }

    /// Weight `w` in `||u||^2 = w * sum_j |u_hat_j|^2`.
    pub fn spectral_weight(&self) -> f64 {
        self.length()
    }
}

pub fn make_grid(half_length: f64, n_points: usize) -> Result<Grid, SpectralError> {
    Grid::new(half_length, n_points)
}

/// Samples `u(x_i)` at `x_i = -L + i dx`.
#[derive(Debug, Clone, PartialEq)]
pub struct RealField {
    grid: Grid,
    values: Vec<f64>,
}

impl RealField {
    pub fn new(grid: Grid, values: Vec<f64>) -> Result<Self, SpectralError> {
        if values.len() != grid.n_points() {
            return Err(SpectralError::SampleCount {
                expected: grid.n_points(),
                got: values.len(),
            });
        }
        Ok(Self { grid, values })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            values: vec![0.0; grid.n_points()],
        }
    }

    pub fn from_fn(grid: Grid, f: impl Fn(f64) -> f64) -> Self {
        let values = grid.points().map(f).collect();
        Self { grid, values }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn values_mut(&mut self) -> &mut [f64] {
        &mut self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn is_finite(&self) -> bool {
        self.values.iter().all(|v| v.is_finite())
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0, |m, v| m.max(v.abs()))
    }
}

/// Fourier coefficients in storage (FFT) order.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralField {
    grid: Grid,
    coeffs: Vec<Complex64>,
}

impl SpectralField {
    pub fn new(grid: Grid, coeffs: Vec<Complex64>) -> Result<Self, SpectralError> {
        if coeffs.len() != grid.n_points() {
            return Err(SpectralError::SampleCount {
                expected: grid.n_points(),
                got: coeffs.len(),
            });
        }
        Ok(Self { grid, coeffs })
    }

    pub fn zeros(grid: Grid) -> Self {
        Self {
            grid,
            coeffs: vec![Complex64::new(0.0, 0.0); grid.n_points()],
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn coeffs(&self) -> &[Complex64] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [Complex64] {
        &mut self.coeffs
    }

    pub fn into_coeffs(self) -> Vec<Complex64> {
        self.coeffs
    }

    /// Coefficient of mode `j`.
    pub fn mode(&self, j: i64) -> Complex64 {
        self.coeffs[self.grid.slot(j)]
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(|c| c.re.is_finite() && c.im.is_finite())
    }

    /// `sqrt(w * sum |c_j|^2)`, the L2 norm of the represented function.
    pub fn l2_norm(&self) -> f64 {
        let s: f64 = self.coeffs.iter().map(|c| c.norm_sqr()).sum();
        (self.grid.spectral_weight() * s).sqrt()
    }

    /// Largest violation of `c_{-j} = conj(c_j)`, relative to the largest
    /// coefficient magnitude.
    pub fn hermitian_defect(&self) -> f64 {
        let n = self.grid.n_points();
        let scale = self.coeffs.iter().fold(0.0_f64, |m, c| m.max(c.norm()));
        if scale == 0.0 {
            return 0.0;
        }
        let mut worst = 0.0_f64;
        for m in 1..n / 2 {
            let d = (self.coeffs[m] - self.coeffs[n - m].conj()).norm();
            worst = worst.max(d);
        }
        worst = worst.max(self.coeffs[0].im.abs());
        worst = worst.max(self.coeffs[n / 2].im.abs());
        worst / scale
    }

    fn check_grid(&self, other: &SpectralField) -> Result<(), SpectralError> {
        if self.grid != other.grid {
            return Err(SpectralError::GridMismatch);
        }
        Ok(())
    }

    pub fn add(&self, other: &SpectralField) -> Result<SpectralField, SpectralError> {
        self.check_grid(other)?;
        let coeffs = self
            .coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(a, b)| a + b)
            .collect();
        Ok(SpectralField {
            grid: self.grid,
            coeffs,
        })
    }

    pub fn scale(&self, s: f64) -> SpectralField {
        SpectralField {
            grid: self.grid,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }
}

/// Cached FFT plans and scratch buffers for one grid. Owned by one thread.
pub struct SpectralTransform {
    grid: Grid,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
    padded: Option<PaddedPlan>,
}

struct PaddedPlan {
    size: usize,
    forward: Arc<dyn Fft<f64>>,
    inverse: Arc<dyn Fft<f64>>,
    buffer: Vec<Complex64>,
    scratch: Vec<Complex64>,
}

impl fmt::Debug for SpectralTransform {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SpectralTransform")
            .field("grid", &self.grid)
            .finish_non_exhaustive()
    }
}

// (-1)^m: the phase from the grid starting at x = -L.
fn phase(m: usize) -> f64 {
    if m.is_multiple_of(2) {
        1.0
    } else {
        -1.0
    }
}

impl SpectralTransform {
    pub fn new(grid: Grid) -> Self {
        let n = grid.n_points();
        let mut planner = FftPlanner::new();
        let forward = planner.plan_fft_forward(n);
        let inverse = planner.plan_fft_inverse(n);
        let scratch_len = forward
            .get_inplace_scratch_len()
            .max(inverse.get_inplace_scratch_len());
        Self {
            grid,
            forward,
            inverse,
            buffer: vec![Complex64::new(0.0, 0.0); n],
            scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            padded: None,
        }
    }

    pub fn grid(&self) -> &Grid {
        &self.grid
    }

    pub fn forward_into(&mut self, values: &[f64], out: &mut [Complex64]) {
        let n = self.grid.n_points();
        debug_assert_eq!(values.len(), n);
        debug_assert_eq!(out.len(), n);
        for (b, v) in self.buffer.iter_mut().zip(values) {
            *b = Complex64::new(*v, 0.0);
        }
        self.forward
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let inv_n = 1.0 / n as f64;
        for (m, (o, b)) in out.iter_mut().zip(&self.buffer).enumerate() {
            *o = b * (phase(m) * inv_n);
        }
    }

    pub fn inverse_into(&mut self, coeffs: &[Complex64], out: &mut [f64]) {
        for (m, (b, c)) in self.buffer.iter_mut().zip(coeffs).enumerate() {
            *b = c * phase(m);
        }
        self.inverse
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        for (o, b) in out.iter_mut().zip(&self.buffer) {
            *o = b.re;
        }
    }

    pub fn forward(&mut self, field: &RealField) -> Result<SpectralField, SpectralError> {
        if field.grid != self.grid {
            return Err(SpectralError::GridMismatch);
        }
        let mut out = SpectralField::zeros(self.grid);
        self.forward_into(&field.values, &mut out.coeffs);
        Ok(out)
    }

    pub fn inverse(&mut self, field: &SpectralField) -> Result<RealField, SpectralError> {
        if field.grid != self.grid {
            return Err(SpectralError::GridMismatch);
        }
        let mut out = RealField::zeros(self.grid);
        self.inverse_into(&field.coeffs, &mut out.values);
        Ok(out)
    }

    /// Spectrum of the pointwise `q`-th power of the field whose spectrum is
    /// `coeffs`, written to `out`. With `dealias`, the product is formed on a
    /// grid of `ceil((q+1)/2) * N` points and truncated back, which removes
    /// all aliasing for a degree-`q` product. Returns `false` on overflow.
    pub fn power_into(
        &mut self,
        coeffs: &[Complex64],
        q: u32,
        dealias: bool,
        out: &mut [Complex64],
    ) -> bool {
        if dealias {
            return self.padded_power_into(coeffs, q, out);
        }
        let n = self.grid.n_points();
        for (m, (b, c)) in self.buffer.iter_mut().zip(coeffs).enumerate() {
            *b = c * phase(m);
        }
        self.inverse
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let mut finite = true;
        for b in self.buffer.iter_mut() {
            let v = b.re.powi(q as i32);
            finite &= v.is_finite();
            *b = Complex64::new(v, 0.0);
        }
        if !finite {
            return false;
        }
        self.forward
            .process_with_scratch(&mut self.buffer, &mut self.scratch);
        let inv_n = 1.0 / n as f64;
        for (m, (o, b)) in out.iter_mut().zip(&self.buffer).enumerate() {
            *o = b * (phase(m) * inv_n);
        }
        true
    }

    fn padded_power_into(&mut self, coeffs: &[Complex64], q: u32, out: &mut [Complex64]) -> bool {
        let n = self.grid.n_points();
        let size = (q as usize + 2) / 2 * n;
        if self.padded.as_ref().map(|p| p.size) != Some(size) {
            let mut planner = FftPlanner::new();
            let forward = planner.plan_fft_forward(size);
            let inverse = planner.plan_fft_inverse(size);
            let scratch_len = forward
                .get_inplace_scratch_len()
                .max(inverse.get_inplace_scratch_len());
            self.padded = Some(PaddedPlan {
                size,
                forward,
                inverse,
                buffer: vec![Complex64::new(0.0, 0.0); size],
                scratch: vec![Complex64::new(0.0, 0.0); scratch_len],
            });
        }
        let pad = self.padded.as_mut().expect("padded plan initialised above");
        let zero = Complex64::new(0.0, 0.0);
        pad.buffer.iter_mut().for_each(|b| *b = zero);
        let half = n / 2;
        // Nyquist mode is dropped: it has no real-valued counterpart at +N/2.
        for m in 1..half {
            pad.buffer[m] = coeffs[m] * phase(m);
            pad.buffer[size - m] = coeffs[n - m] * phase(m);
        }
        pad.buffer[0] = coeffs[0];
        pad.inverse.process_with_scratch(&mut pad.buffer, &mut pad.scratch);
        let mut finite = true;
        for b in pad.buffer.iter_mut() {
            let v = b.re.powi(q as i32);
            finite &= v.is_finite();
            *b = Complex64::new(v, 0.0);
        }
        if !finite {
            return false;
        }
        pad.forward.process_with_scratch(&mut pad.buffer, &mut pad.scratch);
        let inv = 1.0 / size as f64;
        out[0] = pad.buffer[0] * inv;
        for m in 1..half {
            out[m] = pad.buffer[m] * (phase(m) * inv);
            out[n - m] = pad.buffer[size - m] * (phase(m) * inv);
        }
        out[half] = zero;
        true
    }

    pub fn nonlinear_power(
        &mut self,
        field: &SpectralField,
        q: u32,
        dealias: bool,
    ) -> Result<SpectralField, SpectralError> {
        if q == 0 {
            return Err(SpectralError::InvalidExponent);
        }
        if field.grid != self.grid {
            return Err(SpectralError::GridMismatch);
        }
        let mut out = SpectralField::zeros(self.grid);
        if !self.power_into(&field.coeffs, q, dealias, &mut out.coeffs) {
            return Err(SpectralError::NonFinite);
        }
        Ok(out)
    }
}

pub fn to_spectral(field: &RealField) -> SpectralField {
    let mut t = SpectralTransform::new(field.grid);
    let mut out = SpectralField::zeros(field.grid);
    t.forward_into(&field.values, &mut out.coeffs);
    out
}

pub fn to_physical(field: &SpectralField) -> RealField {
    let mut t = SpectralTransform::new(field.grid);
    let mut out = RealField::zeros(field.grid);
    t.inverse_into(&field.coeffs, &mut out.values);
    out
}

/// Transform of `f^q`, optionally dealiased by zero padding.
pub fn nonlinear_power(
    field: &RealField,
    q: u32,
    dealias: bool,
) -> Result<SpectralField, SpectralError> {
    let spectrum = to_spectral(field);
    SpectralTransform::new(field.grid).nonlinear_power(&spectrum, q, dealias)
}

/// Symbol `(i k)^order`, with the Nyquist mode zeroed for odd orders.
pub fn derivative_symbol(grid: &Grid, slot: usize, order: u32) -> Complex64 {
    if order % 2 == 1 && slot == grid.nyquist_slot() {
        return Complex64::new(0.0, 0.0);
    }
    Complex64::new(0.0, grid.wavenumber_at(slot)).powu(order)
}

pub fn derivative(field: &SpectralField, order: u32) -> Result<SpectralField, SpectralError> {
    if !(1..=4).contains(&order) {
        return Err(SpectralError::UnsupportedOrder(order));
    }
    let grid = field.grid;
    let coeffs = field
        .coeffs
        .iter()
        .enumerate()
        .map(|(m, c)| c * derivative_symbol(&grid, m, order))
        .collect();
    Ok(SpectralField { grid, coeffs })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct NormBundle {
    pub l2: f64,
    pub h1_seminorm: f64,
    pub h1: f64,
    pub linf: f64,
    pub hgamma: Option<f64>,
}

/// Norms of a field given both representations.
///
/// `l2` and `linf` come from the samples, `h1_seminorm` from
/// `2L * sum k_j^2 |u_hat_j|^2` (Nyquist excluded, matching the first
/// derivative) and `hgamma` from `2L * sum gamma_j |u_hat_j|^2`.
pub fn norms_of(
    physical: &RealField,
    spectral: &SpectralField,
    damping: Option<&DampingProfile>,
) -> Result<NormBundle, SpectralError> {
    if !physical.is_finite() || !spectral.is_finite() {
        return Err(SpectralError::NonFinite);
    }
    let grid = physical.grid;
    let l2 = (physical.values.iter().map(|v| v * v).sum::<f64>() * grid.dx()).sqrt();
    let nyq = grid.nyquist_slot();
    let semi2: f64 = spectral
        .coeffs
        .iter()
        .enumerate()
        .filter(|(m, _)| *m != nyq)
        .map(|(m, c)| grid.wavenumber_at(m).powi(2) * c.norm_sqr())
        .sum();
    let h1_seminorm = (grid.spectral_weight() * semi2).sqrt();
    let hgamma = match damping {
        Some(p) => {
            if *p.grid() != grid {
                return Err(SpectralError::GridMismatch);
            }
            Some(p.hgamma_norm(spectral))
        }
        None => None,
    };
    let bundle = NormBundle {
        l2,
        h1_seminorm,
        h1: (l2 * l2 + h1_seminorm * h1_seminorm).sqrt(),
        linf: physical.max_abs(),
        hgamma,
    };
    if !(bundle.h1.is_finite() && bundle.linf.is_finite()) {
        return Err(SpectralError::NonFinite);
    }
    Ok(bundle)
}

pub fn norms(
    field: &RealField,
    damping: Option<&DampingProfile>,
) -> Result<NormBundle, SpectralError> {
    if !field.is_finite() {
        return Err(SpectralError::NonFinite);
    }
    let spectral = to_spectral(field);
    norms_of(field, &spectral, damping)
}

/// Which width to use in the soliton profile.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolitonWidth {
    /// `kappa = (p/2) sqrt(c - 1)`: the exact traveling wave of
    /// `u_t + u_x + u_xxx + u^p u_x = 0`.
    #[default]
    Exact,
    /// `kappa = sqrt(p (c - 1) / 4)`. Coincides with `Exact` only for `p = 1`.
    Printed,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SolitonParams {
    pub p: u32,
    pub speed: f64,
    pub offset: f64,
    #[serde(default = "one")]
    pub amplitude_factor: f64,
    #[serde(default = "one_i8")]
    pub sign: i8,
    #[serde(default)]
    pub width: SolitonWidth,
}

fn one() -> f64 {
    1.0
}

fn one_i8() -> i8 {
    1
}

impl SolitonParams {
    pub fn validate(&self) -> Result<(), SpectralError> {
        if self.p == 0 {
            return Err(SpectralError::InvalidSolitonExponent);
        }
        if !(self.speed.is_finite() && self.speed > 1.0) {
            return Err(SpectralError::InvalidSpeed(self.speed));
        }
        Ok(())
    }

    /// Peak height `factor * ((p+1)(p+2)(c-1)/2)^(1/p)`.
    pub fn peak(&self) -> f64 {
        let p = self.p as f64;
        self.amplitude_factor * ((p + 1.0) * (p + 2.0) * (self.speed - 1.0) / 2.0).powf(1.0 / p)
    }

    pub fn kappa(&self) -> f64 {
        let p = self.p as f64;
        let s = self.speed - 1.0;
        match self.width {
            SolitonWidth::Exact => 0.5 * p * s.sqrt(),
            SolitonWidth::Printed => (p * s / 4.0).sqrt(),
        }
    }
}

fn ln_cosh(y: f64) -> f64 {
    let a = y.abs();
    a + (-2.0 * a).exp().ln_1p() - std::f64::consts::LN_2
}

/// Soliton profile translated to time `t`, centered at `offset + speed * t`
/// on the torus.
pub fn soliton_at(
    grid: &Grid,
    params: &SolitonParams,
    t: f64,
) -> Result<RealField, SpectralError> {
    params.validate()?;
    let peak = params.peak();
    let kappa = params.kappa() * f64::from(params.sign.signum());
    let period = grid.length();
    let exponent = -2.0 / params.p as f64;
    let center = params.offset + params.speed * t;
    Ok(RealField::from_fn(*grid, |x| {
        let mut y = x - center;
        y -= period * (y / period).round();
        peak * (exponent * ln_cosh(kappa * y)).exp()
    }))
}

pub fn soliton(grid: &Grid, params: &SolitonParams) -> Result<RealField, SpectralError> {
    soliton_at(grid, params, 0.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn grid_spacing_matches_reference_setup() {
        let g = make_grid(50.0, 2048).unwrap();
        assert_eq!(g.dx(), 0.048828125);
        assert_eq!(g.dx() * g.n_points() as f64, 100.0);
    }

    #[test]
    fn unit_wavenumber_grid() {
        let g = make_grid(PI, 8).unwrap();
        for j in -4..4 {
            assert!((g.wavenumber(j) - j as f64).abs() < 1e-15);
            assert_eq!(g.mode_index(g.slot(j)), j);
        }
    }

    #[test]
    fn rejects_bad_grids() {
        assert_eq!(make_grid(1.0, 7), Err(SpectralError::InvalidPointCount(7)));
        assert_eq!(make_grid(1.0, 4), Err(SpectralError::InvalidPointCount(4)));
        assert!(matches!(
            make_grid(0.0, 8),
            Err(SpectralError::InvalidHalfLength(_))
        ));
        assert!(make_grid(f64::NAN, 8).is_err());
    }

    #[test]
    fn zero_field_transforms_to_zero() {
        let g = make_grid(50.0, 64).unwrap();
        let s = to_spectral(&RealField::zeros(g));
        assert!(s.coeffs().iter().all(|c| c.norm() == 0.0));
    }

    #[test]
    fn single_cosine_mode() {
        let g = make_grid(50.0, 256).unwrap();
        let f = RealField::from_fn(g, |x| (PI * x / 50.0).cos());
        let s = to_spectral(&f);
        for m in 0..g.n_points() {
            let j = g.mode_index(m);
            let expected = if j.abs() == 1 { 0.5 } else { 0.0 };
            assert!((s.coeffs()[m] - Complex64::new(expected, 0.0)).norm() < 1e-12);
        }
    }

    #[test]
    fn derivative_of_sine() {
        let g = make_grid(50.0, 256).unwrap();
        let f = RealField::from_fn(g, |x| (PI * x / 50.0).sin());
        let d = to_physical(&derivative(&to_spectral(&f), 1).unwrap());
        let peak = d.max_abs();
        assert!((peak - PI / 50.0).abs() < 1e-12);
        assert!((peak - 0.0628319).abs() < 1e-7);
        for (i, v) in d.values().iter().enumerate() {
            let x = g.x(i);
            assert!((v - PI / 50.0 * (PI * x / 50.0).cos()).abs() < 1e-13);
        }
    }

    #[test]
    fn derivative_of_constant_vanishes() {
        let g = make_grid(3.0, 32).unwrap();
        let s = to_spectral(&RealField::from_fn(g, |_| 2.5));
        for order in 1..=4 {
            let d = derivative(&s, order).unwrap();
            assert!(d.coeffs().iter().all(|c| c.norm() < 1e-15));
        }
    }

    #[test]
    fn third_derivative_of_unit_exponential() {
        let g = make_grid(PI, 8).unwrap();
        let mut s = SpectralField::zeros(g);
        s.coeffs_mut()[g.slot(1)] = Complex64::new(1.0, 0.0);
        let d = derivative(&s, 3).unwrap();
        assert!((d.mode(1) - Complex64::new(0.0, -1.0)).norm() < 1e-15);
    }

    #[test]
    fn unsupported_derivative_order() {
        let g = make_grid(PI, 8).unwrap();
        let s = SpectralField::zeros(g);
        assert_eq!(derivative(&s, 0), Err(SpectralError::UnsupportedOrder(0)));
        assert_eq!(derivative(&s, 5), Err(SpectralError::UnsupportedOrder(5)));
    }

    #[test]
    fn norms_of_zero_and_cosine() {
        let g = make_grid(50.0, 256).unwrap();
        let z = norms(&RealField::zeros(g), None).unwrap();
        assert_eq!((z.l2, z.h1, z.linf, z.h1_seminorm), (0.0, 0.0, 0.0, 0.0));
        let f = RealField::from_fn(g, |x| (PI * x / 50.0).cos());
        let n = norms(&f, None).unwrap();
        assert!((n.l2 - 50f64.sqrt()).abs() < 1e-12);
        assert!((n.l2 - 7.07107).abs() < 1e-5);
        assert!((n.h1_seminorm - PI / 50.0 * 50f64.sqrt()).abs() < 1e-12);
        assert!((n.linf - 1.0).abs() < 1e-15);
    }

    #[test]
    fn norms_reject_non_finite() {
        let g = make_grid(1.0, 8).unwrap();
        let mut f = RealField::zeros(g);
        f.values_mut()[3] = f64::NAN;
        assert_eq!(norms(&f, None), Err(SpectralError::NonFinite));
    }

    #[test]
    fn soliton_peak_for_reference_setup() {
        let g = make_grid(50.0, 2048).unwrap();
        let params = SolitonParams {
            p: 5,
            speed: 1.5,
            offset: 10.0,
            amplitude_factor: 1.01,
            sign: 1,
            width: SolitonWidth::Exact,
        };
        let u = soliton(&g, &params).unwrap();
        let expected = 1.01 * 10.5f64.powf(0.2);
        assert!((expected - 1.616439).abs() < 1e-6);
        assert!((params.peak() - expected).abs() < 1e-15);
        // x = 10 falls between grid points; the sampled maximum sits next to it
        let (i_max, v_max) = u
            .values()
            .iter()
            .enumerate()
            .fold((0, 0.0), |(im, vm), (i, v)| if *v > vm { (i, *v) } else { (im, vm) });
        assert!((g.x(i_max) - 10.0).abs() <= g.dx() / 2.0);
        assert!(v_max <= expected && expected - v_max < 1e-2);
    }

    #[test]
    fn soliton_zero_factor_and_speed_check() {
        let g = make_grid(50.0, 64).unwrap();
        let mut params = SolitonParams {
            p: 5,
            speed: 1.5,
            offset: 10.0,
            amplitude_factor: 0.0,
            sign: -1,
            width: SolitonWidth::Printed,
        };
        assert_eq!(soliton(&g, &params).unwrap().max_abs(), 0.0);
        params.speed = 1.0;
        assert_eq!(soliton(&g, &params), Err(SpectralError::InvalidSpeed(1.0)));
    }

    #[test]
    fn soliton_widths_agree_for_kdv() {
        let exact = SolitonParams {
            p: 1,
            speed: 2.0,
            offset: 0.0,
            amplitude_factor: 1.0,
            sign: 1,
            width: SolitonWidth::Exact,
        };
        let printed = SolitonParams {
            width: SolitonWidth::Printed,
            ..exact
        };
        assert!((exact.kappa() - printed.kappa()).abs() < 1e-15);
    }

    #[test]
    fn cosine_squared_spectrum() {
        let g = make_grid(PI, 16).unwrap();
        let f = RealField::from_fn(g, f64::cos);
        let s = nonlinear_power(&f, 2, false).unwrap();
        for m in 0..g.n_points() {
            let j = g.mode_index(m);
            let expected = match j.abs() {
                0 => 0.5,
                2 => 0.25,
                _ => 0.0,
            };
            assert!((s.coeffs()[m] - Complex64::new(expected, 0.0)).norm() < 1e-14);
        }
    }

    #[test]
    fn constant_power_spectrum() {
        let g = make_grid(2.0, 32).unwrap();
        let f = RealField::from_fn(g, |_| 1.0);
        for dealias in [false, true] {
            let s = nonlinear_power(&f, 6, dealias).unwrap();
            assert!((s.mode(0) - Complex64::new(1.0, 0.0)).norm() < 1e-14);
            let rest: f64 = s.coeffs()[1..].iter().map(|c| c.norm()).sum();
            assert!(rest < 1e-13);
        }
    }

    #[test]
    fn dealias_is_identity_without_aliasing() {
        let g = make_grid(PI, 64).unwrap();
        // modes up to 4, sixth power reaches 24 < 32
        let f = RealField::from_fn(g, |x| 0.3 * x.cos() + 0.2 * (4.0 * x).sin() - 0.1);
        let a = nonlinear_power(&f, 6, false).unwrap();
        let b = nonlinear_power(&f, 6, true).unwrap();
        for (x, y) in a.coeffs().iter().zip(b.coeffs()) {
            assert!((x - y).norm() < 1e-12);
        }
    }

    #[test]
    fn dealias_removes_aliased_modes() {
        let g = make_grid(PI, 16).unwrap();
        // cos(6x)^2 = 1/2 + cos(12x)/2; mode 12 aliases onto -4 on 16 points
        let f = RealField::from_fn(g, |x| (6.0 * x).cos());
        let aliased = nonlinear_power(&f, 2, false).unwrap();
        let clean = nonlinear_power(&f, 2, true).unwrap();
        assert!(aliased.mode(4).norm() > 0.1);
        assert!(clean.mode(4).norm() < 1e-14);
        assert!((clean.mode(0).re - 0.5).abs() < 1e-14);
    }

    #[test]
    fn zero_power_rejected() {
        let g = make_grid(PI, 8).unwrap();
        assert_eq!(
            nonlinear_power(&RealField::zeros(g), 0, false),
            Err(SpectralError::InvalidExponent)
        );
    }
}
