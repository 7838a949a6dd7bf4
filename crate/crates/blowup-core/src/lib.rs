//! Numerical phase-space toolkit for self-similar blow-up profiles of the
//! weighted reaction-diffusion equation
//!
//! ```text
//! u_t = (u^m)_xx + |x|^sigma * u^p,    m > 1,  0 < p < 1.
//! ```
//!
//! Solutions blowing up at time `T` are sought in self-similar form
//! `u(x,t) = (T-t)^{-alpha} f(xi)`, `xi = |x| (T-t)^{beta}`, which turns the
//! PDE into a second-order profile equation for `f`. That equation is studied
//! here through a family of autonomous three-dimensional dynamical systems:
//! profiles become orbits, origin behaviors and interfaces (free boundaries
//! where `f` vanishes) become critical points, and existence questions become
//! connection problems between those points.
//!
//! The crate provides:
//!
//! * the exponent algebra and regime gates ([`params`]),
//! * the phase-space vector fields, analytic Jacobians and variable
//!   transforms ([`phase`]),
//! * critical-point enumeration, linearization and local profile expansions
//!   ([`critical`]),
//! * the invariant-theoretic sign classifier for planar homogeneous quadratic
//!   fields, applied to the origin's center-manifold flow ([`quadratic`]),
//! * an adaptive embedded Runge-Kutta 5(4) integrator with dense output and
//!   event localization ([`ode`]),
//! * profile reconstruction, interface-exponent fitting and free-boundary
//!   equation verification ([`profile`]),
//! * barrier constants used by the qualitative arguments ([`barriers`]),
//! * backward shooting, orbit-endpoint classification, sigma sweeps and the
//!   subcritical non-existence probe ([`shooting`]),
//! * reproducible JSON/CSV/SVG emission ([`report`]).

pub mod barriers;
pub mod critical;
pub mod eigen;
pub mod error;
pub mod ode;
pub mod params;
pub mod phase;
pub mod profile;
pub mod quadratic;
pub mod report;
pub mod shooting;

pub use error::Error;
pub use params::{Exponents, Parameters, Regime};
pub use phase::{PhaseState, ProfilePoint, SystemId};

/// Crate-wide result alias.
pub type Result<T> = std::result::Result<T, Error>;
