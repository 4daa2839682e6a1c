//! Numerical laboratory for a negative-group-delay bandpass amplifier.
//!
//! The crate simulates the retarded response of a damped-resonance amplifier
//! to smooth compact-support pulses, measures the (negative) group delay of
//! the output, and solves the threshold-triggered feedback loop in which the
//! amplifier output switches off its own input.
//!
//! - [`signal`]: grids, traces, the input pulse, peak/crossing detection.
//! - [`amplifier`]: Green's function, transfer function, gain calibration,
//!   open-loop convolution.
//! - [`feedback`]: the self-consistent feedback solution and its checks.
//! - [`analysis`]: group delay, detector sweeps, front extrapolation and the
//!   Kramers-Kronig check.
//! - [`cli`]: configuration files, scenarios, CSV/JSON outputs.

pub mod amplifier;
pub mod analysis;
pub mod cli;
pub mod error;
pub mod feedback;
pub mod signal;

pub use error::{Error, Result};
