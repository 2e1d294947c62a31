//! Pseudospectral solver for the damped generalized Korteweg-de Vries
//! equation
//!
//! ```text
//! u_t + u_x + u_xxx + u^p u_x + L_gamma(u) = 0,   x in [-L, L) periodic,
//! ```
//!
//! where `L_gamma` multiplies each Fourier mode by a nonnegative damping
//! symbol `gamma_k`. The crate marches the equation with implicit
//! Fourier-space schemes, flags blow-up of the H1 norm, and searches by
//! bisection for the weakest damping profiles that prevent it.

pub mod damping;
pub mod dichotomy;
pub mod output;
pub mod simulation;
pub mod spectral;
pub mod timestepping;

pub use damping::{DampingProfile, DampingSpec};
pub use spectral::{Grid, RealField, SpectralField};
pub use timestepping::{PicardConfig, SchemeKind, StepController};

pub use rustfft::num_complex::Complex64;
