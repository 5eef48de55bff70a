//! Pseudo-spectral simulation of incompressible flow in a box-section
//! cylinder `D = (0,L1) x (0,L2) x (-a,a)` with Navier (free-slip) walls,
//! together with the constant chains and energy-method inequalities that
//! bound the two-dimensional base flow and the stability of its
//! three-dimensional perturbations.
//!
//! Module map:
//!
//! * [`domain`]: geometry, trigonometric bases, sine/cosine transforms, dealiasing.
//! * [`fields`]: coefficient containers, differential operators, norms.
//! * [`forcing`]: finite-mode, time-profiled body forces.
//! * [`elliptic`]: the 2D div-curl solve and the named constants.
//! * [`ns2d`] / [`ns3d`]: the base-flow and perturbation time steppers.
//! * [`ledger`]: constant chains and inequality monitors.
//! * [`harness`]: experiment configuration, orchestration and artifacts.

pub mod domain;
pub mod elliptic;
pub mod error;
pub mod fields;
pub mod forcing;
pub mod harness;
mod integrator;
pub mod ledger;
pub mod ns2d;
pub mod ns3d;

pub use domain::{Domain, DomainSpec, Parity};
pub use error::{Error, Result};
