//! Toolkit for microgrids under generalized droop control.
//!
//! The pipeline runs case data through four stages:
//!
//! 1. [`netgraph`] builds the bus admittance matrix and the incidence and
//!    orientation matrices of the electrical graph.
//! 2. [`equilibrium`] calibrates droop references and solves for the
//!    operating point with a Newton iteration.
//! 3. [`dynamics`] and [`smallsignal`] assemble the structure-preserving
//!    nonlinear model and its analytic Jacobian, including the decoupled
//!    angle and voltage blocks produced by the rotation-angle design.
//! 4. [`stability`] and [`simulate`] evaluate spectral certificates and run
//!    transient studies, settling-time metrics, and parameter sweeps.
//!
//! The [`cli`] module exposes the same pipeline as a command-line tool.
//!
//! Angles are radians and power/voltage quantities are per unit throughout
//! the library; case and equilibrium files on disk store angles in degrees.

pub mod case_io;
pub mod cli;
pub mod dynamics;
pub mod equilibrium;
pub mod error;
pub mod netgraph;
pub mod simulate;
pub mod smallsignal;
pub mod stability;

pub use error::{Error, Result};
