//! Damped-resonance bandpass amplifier with a retarded impulse response.
//!
//! The full response is `G(t) = delta(t) + G'(t)` with
//!
//! ```text
//! G'(t) = g0 * gamma * theta(t) * exp(-gamma t) * [cos(omega_r t) + (gamma / omega_r) sin(omega_r t)]
//! ```
//!
//! and `theta(0) = 1`. The delta term is carried algebraically as an identity
//! pass-through and never discretized.
//!
//! Fourier convention used throughout the crate:
//! `H(omega) = integral G(t) exp(-i omega t) dt`, so a pure delay `tau` has
//! phase `-omega tau` and the group delay is `-d(arg H)/d(omega)`.

use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::signal::{SampledSignal, TimeGrid};

/// Upper end of the gain bracket searched by [`calibrate_g0`].
pub const DEFAULT_G_MAX: f64 = 1e4;

/// How a configured resonance number is turned into rad/s.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum OmegaUnits {
    /// The number is already in rad/s.
    Angular,
    /// The number is in Hz and is multiplied by `2 pi`.
    Cyclic,
}

impl OmegaUnits {
    pub fn to_rad_per_s(self, value: f64) -> f64 {
        match self {
            OmegaUnits::Angular => value,
            OmegaUnits::Cyclic => 2.0 * PI * value,
        }
    }
}

impl fmt::Display for OmegaUnits {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OmegaUnits::Angular => "angular",
            OmegaUnits::Cyclic => "cyclic",
        })
    }
}

impl std::str::FromStr for OmegaUnits {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "angular" | "rad/s" => Ok(OmegaUnits::Angular),
            "cyclic" | "hz" => Ok(OmegaUnits::Cyclic),
            other => Err(Error::InvalidParameter(format!(
                "omega_r_units must be `angular` or `cyclic`, got `{other}`"
            ))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AmplifierParams {
    pub g0: f64,
    /// Damping rate, 1/s.
    pub gamma: f64,
    /// Resonance, always stored in rad/s.
    pub omega_r: f64,
    /// Nominal group advance at `omega = 0` the gain was calibrated from.
    pub t0: Option<f64>,
    pub omega_r_units: OmegaUnits,
}

impl AmplifierParams {
    /// Parameters with an explicit gain; `omega_r` is in rad/s.
    pub fn new(g0: f64, gamma: f64, omega_r: f64) -> Result<Self> {
        let p = Self {
            g0,
            gamma,
            omega_r,
            t0: None,
            omega_r_units: OmegaUnits::Angular,
        };
        p.validate()?;
        Ok(p)
    }

    /// Parameters whose resonance is given as a number in `units`.
    pub fn with_units(g0: f64, gamma: f64, omega_r: f64, units: OmegaUnits) -> Result<Self> {
        let mut p = Self::new(g0, gamma, units.to_rad_per_s(omega_r))?;
        p.omega_r_units = units;
        Ok(p)
    }

    /// Parameters whose gain is calibrated so the group delay at `omega = 0`
    /// equals `-t0`.
    pub fn calibrated(gamma: f64, omega_r: f64, units: OmegaUnits, t0: f64) -> Result<Self> {
        let omega = units.to_rad_per_s(omega_r);
        let g0 = calibrate_g0(gamma, omega, t0)?;
        let mut p = Self::with_units(g0, gamma, omega_r, units)?;
        p.t0 = Some(t0);
        Ok(p)
    }

    /// The reference amplifier: `gamma = 15 /s`, resonance 51 read as Hz,
    /// gain calibrated to a 2.94 ms advance at `omega = 0`.
    pub fn reference() -> Self {
        Self::calibrated(15.0, 51.0, OmegaUnits::Cyclic, 2.94e-3)
            .expect("reference amplifier calibrates")
    }

    pub fn with_g0(mut self, g0: f64) -> Self {
        self.g0 = g0;
        self.t0 = None;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "gamma must be positive, got {}",
                self.gamma
            )));
        }
        if !(self.omega_r > 0.0 && self.omega_r.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "omega_r must be positive, got {}",
                self.omega_r
            )));
        }
        if !(self.g0 >= 0.0 && self.g0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "g0 must be non-negative, got {}",
                self.g0
            )));
        }
        Ok(())
    }
}

/// The non-singular part `G'(t)` of the impulse response, in 1/s.
#[inline]
pub fn green_prime(t: f64, p: &AmplifierParams) -> f64 {
    if t < 0.0 {
        return 0.0;
    }
    let wt = p.omega_r * t;
    p.g0 * p.gamma * (-p.gamma * t).exp() * (wt.cos() + p.gamma / p.omega_r * wt.sin())
}

/// `H(omega)` at one frequency.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ComplexResponse {
    pub omega: f64,
    pub h: Complex64,
}

/// Closed form `H(omega) = 1 + g0 gamma (s + gamma) / (s^2 + omega_r^2)` with
/// `s = gamma + i omega`.
pub fn transfer_function(omega: f64, p: &AmplifierParams) -> ComplexResponse {
    let s = Complex64::new(p.gamma, omega);
    let h = 1.0 + p.g0 * p.gamma * (s + p.gamma) / (s * s + p.omega_r * p.omega_r);
    ComplexResponse { omega, h }
}

fn phase_slope(omega: f64, h: f64, p: &AmplifierParams) -> Result<f64> {
    let hi = transfer_function(omega + h, p).h;
    let lo = transfer_function(omega - h, p).h;
    if hi.norm() < 1e-300 || lo.norm() < 1e-300 {
        return Err(Error::ZeroResponse { omega });
    }
    // arg of the ratio is the wrapped phase difference
    Ok(-(hi / lo).arg() / (2.0 * h))
}

/// Group delay `-d(arg H)/d(omega)` in seconds, by central differences with
/// the step halved until successive estimates agree to 1e-7 relative.
pub fn group_delay_at(omega: f64, p: &AmplifierParams) -> Result<f64> {
    let h0 = transfer_function(omega, p).h;
    if h0.norm() <= 1e-12 {
        return Err(Error::ZeroResponse { omega });
    }
    let mut step = 1e-2 * p.gamma.min(p.omega_r);
    let mut prev = phase_slope(omega, step, p)?;
    for _ in 0..40 {
        step *= 0.5;
        let next = phase_slope(omega, step, p)?;
        if (next - prev).abs() <= 1e-7 * next.abs() + 1e-15 {
            return Ok(next);
        }
        prev = next;
    }
    Ok(prev)
}

/// Smallest `g0 >= 0` giving a group delay of `-t0` at `omega = 0`.
pub fn calibrate_g0(gamma: f64, omega_r: f64, t0: f64) -> Result<f64> {
    calibrate_g0_within(gamma, omega_r, t0, DEFAULT_G_MAX)
}

pub fn calibrate_g0_within(gamma: f64, omega_r: f64, t0: f64, g_max: f64) -> Result<f64> {
    if !(t0 >= 0.0 && t0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "t0 must be non-negative, got {t0}"
        )));
    }
    AmplifierParams::new(0.0, gamma, omega_r)?;
    if t0 == 0.0 {
        return Ok(0.0);
    }
    let defect = |g0: f64| -> Result<f64> {
        let p = AmplifierParams {
            g0,
            gamma,
            omega_r,
            t0: None,
            omega_r_units: OmegaUnits::Angular,
        };
        Ok(group_delay_at(0.0, &p)? + t0)
    };

    // geometric scan for the first sign change, then bisection
    let mut lo = 0.0;
    let mut g = 1e-6;
    let hi = loop {
        if g > g_max {
            return Err(Error::Unreachable { t0, g_max });
        }
        if defect(g)? <= 0.0 {
            break g;
        }
        lo = g;
        g = if g * 1.05 > g_max && g < g_max {
            g_max
        } else {
            g * 1.05
        };
    };
    let mut hi = hi;
    while hi - lo > 1e-10 * hi {
        let mid = 0.5 * (lo + hi);
        if defect(mid)? <= 0.0 {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// Largest admissible step for the convolution: `min(1/gamma, 1/omega_r, tf) / 20`.
pub fn max_step(p: &AmplifierParams, tf: Option<f64>) -> f64 {
    let mut scale = (1.0 / p.gamma).min(1.0 / p.omega_r);
    if let Some(tf) = tf {
        scale = scale.min(tf);
    }
    scale / 20.0
}

pub fn check_grid(grid: &TimeGrid, p: &AmplifierParams, tf: Option<f64>) -> Result<()> {
    let limit = max_step(p, tf);
    if grid.dt() > limit {
        return Err(Error::GridTooCoarse {
            dt: grid.dt(),
            limit,
        });
    }
    Ok(())
}

/// `G'` tabulated at the lags `m * dt` of a grid.
#[derive(Debug, Clone)]
pub struct RetardedKernel {
    dt: f64,
    taps: Vec<f64>,
}

impl RetardedKernel {
    pub fn new(p: &AmplifierParams, grid: &TimeGrid) -> Self {
        let dt = grid.dt();
        let taps = (0..grid.len())
            .map(|m| green_prime(m as f64 * dt, p))
            .collect();
        Self { dt, taps }
    }

    #[inline]
    pub fn dt(&self) -> f64 {
        self.dt
    }

    #[inline]
    pub fn tap(&self, lag: usize) -> f64 {
        self.taps[lag]
    }

    /// Trapezoid rule for `integral_{t_0}^{t_i} G'(t_i - tau) v(tau) dtau`.
    ///
    /// `support` is the inclusive index range outside which `v` is zero; those
    /// samples contribute exact zeros and are skipped.
    pub fn integral_at(&self, v: &[f64], support: (usize, usize), i: usize) -> f64 {
        let (lo, hi) = support;
        if i == 0 || i < lo {
            return 0.0;
        }
        let top = i.min(hi);
        let mut acc = 0.0;
        for j in lo..=top {
            acc += self.taps[i - j] * v[j];
        }
        if lo == 0 {
            acc -= 0.5 * self.taps[i] * v[0];
        }
        if i <= hi {
            acc -= 0.5 * self.taps[0] * v[i];
        }
        self.dt * acc
    }

    /// `v(t_i) + integral_at(v, i)` for every sample.
    pub fn apply(&self, v: &SampledSignal) -> SampledSignal {
        let values = v.values();
        let out = match v.support() {
            None => vec![0.0; values.len()],
            Some(support) => (0..values.len())
                .into_par_iter()
                .map(|i| values[i] + self.integral_at(values, support, i))
                .collect(),
        };
        SampledSignal::new(*v.grid(), out).expect("convolution of finite samples is finite")
    }
}

/// Output without feedback: the input plus its retarded convolution with `G'`.
///
/// The lower limit is the first grid sample; the input must vanish before it.
pub fn open_loop_output(v_in: &SampledSignal, p: &AmplifierParams) -> Result<SampledSignal> {
    p.validate()?;
    let tf = v_in
        .support()
        .map(|(lo, hi)| 0.5 * (hi - lo).max(1) as f64 * v_in.grid().dt());
    check_grid(v_in.grid(), p, tf)?;
    Ok(RetardedKernel::new(p, v_in.grid()).apply(v_in))
}
