//! Stroboscopic averaging for highly-oscillatory nonlinear Schrödinger
//! equations.
//!
//! The crate integrates `i psi_t = A psi + eps g(psi)` where `e^{-itA}` is
//! periodic. Besides plain time-splitting spectral solvers it provides the
//! stroboscopic averaging method (SAM): a macro Runge-Kutta integrator for
//! the averaged equation whose vector field is reconstructed on the fly
//! from short micro-integrations over whole periods.
//!
//! Modules:
//! - [`spectral`]: Fourier and Hermite bases and transforms
//! - [`problem`]: the four model equations, free flow and filtered field
//! - [`splitting`]: Strang and fourth-order splitting micro-integrators
//! - [`sam`]: finite-difference averaged field, macro integrators, driver
//! - [`fam`]: first-order averaged model by period quadrature
//! - [`observables`]: mass, energy, mode magnitudes, drift statistics
//! - [`harness`]: experiment sweeps, reference cache and CSV output

pub mod error;
pub mod fam;
pub mod harness;
pub mod observables;
pub mod problem;
pub mod sam;
pub mod spectral;
pub mod splitting;

pub use error::{Error, Result};
pub use fam::{FamConfig, FamField};
pub use problem::{Model, ModelParams, ProblemSpec, StateVector};
pub use sam::{ButcherTableau, MacroScheme, SamConfig, SamSolver, Stencil, Trajectory};
pub use spectral::{BasisKey, BasisKind, SpectralBasis};
pub use splitting::{SplittingOrder, SplittingScheme};

pub use num_complex::Complex64;
