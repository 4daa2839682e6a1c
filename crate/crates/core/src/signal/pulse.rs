use std::f64::consts::PI;

use serde::Serialize;

use super::grid::{SampledSignal, TimeGrid};
use crate::error::{Error, Result};

/// Compact-support input pulse
/// `V(t) = v0 * cos(omega_c t) * cos^2(pi t / 2 tf)` for `|t| < tf`, zero elsewhere.
///
/// The envelope and its first derivative vanish at `t = -tf`, which is the
/// signal front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct InputPulseSpec {
    pub v0: f64,
    pub tf: f64,
    pub omega_c: f64,
}

impl InputPulseSpec {
    pub fn new(v0: f64, tf: f64, omega_c: f64) -> Result<Self> {
        let spec = Self { v0, tf, omega_c };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.v0 > 0.0 && self.v0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "v0 must be positive, got {}",
                self.v0
            )));
        }
        if !(self.tf > 0.0 && self.tf.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "tf must be positive, got {}",
                self.tf
            )));
        }
        if !(self.omega_c >= 0.0 && self.omega_c.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega_c must be non-negative, got {}",
                self.omega_c
            )));
        }
        Ok(())
    }

    /// Front of the pulse, `-tf`.
    pub fn front(&self) -> f64 {
        -self.tf
    }

    pub fn value(&self, t: f64) -> f64 {
        if t.abs() >= self.tf {
            return 0.0;
        }
        let env = (PI * t / (2.0 * self.tf)).cos();
        self.v0 * (self.omega_c * t).cos() * env * env
    }

    /// Default simulation grid: `[-3 tf, 12 tf]` with the given step.
    pub fn default_grid(&self, dt: f64) -> Result<TimeGrid> {
        TimeGrid::spanning(-3.0 * self.tf, 12.0 * self.tf, dt)
    }
}

pub fn sample_input(spec: &InputPulseSpec, grid: &TimeGrid) -> SampledSignal {
    let values = grid.times().map(|t| spec.value(t)).collect();
    // values are finite for any valid spec
    SampledSignal::new(*grid, values).expect("pulse samples are finite")
}
