//! Measurements on simulated traces.
//!
//! The circuit has no spatial extent, so the detector-sequence picture of a
//! front velocity is expressed here as detection times relative to a known
//! front instead of as velocities `d / t_n`.

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::amplifier::{transfer_function, AmplifierParams};
use crate::error::{Error, Result};
use crate::signal::{first_crossing, peak_time, SampledSignal};

/// Peak times of an input/output pair and their difference.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DelayReport {
    pub t_in: f64,
    pub t_out: f64,
    /// `t_out - t_in`; negative when the output peak leads.
    pub t_g: f64,
}

pub fn measure_group_delay(v_in: &SampledSignal, v_out: &SampledSignal) -> Result<DelayReport> {
    let t_in = peak_time(v_in)?;
    let t_out = peak_time(v_out)?;
    Ok(DelayReport {
        t_in,
        t_out,
        t_g: t_out - t_in,
    })
}

/// First-detection times of one trace by a bank of detectors with strictly
/// decreasing thresholds.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DetectionSeries {
    pub thresholds: Vec<f64>,
    pub detection_times: Vec<f64>,
    pub front_time: f64,
    /// Thresholds the trace never reached.
    pub missed: Vec<f64>,
}

impl DetectionSeries {
    pub fn len(&self) -> usize {
        self.thresholds.len()
    }

    pub fn is_empty(&self) -> bool {
        self.thresholds.is_empty()
    }

    /// Detection delays `t_n - front_time`.
    pub fn delays(&self) -> Vec<f64> {
        self.detection_times
            .iter()
            .map(|t| t - self.front_time)
            .collect()
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "s_n,t_n")?;
        for (s, t) in self.thresholds.iter().zip(&self.detection_times) {
            writeln!(w, "{s:.12e},{t:.12e}")?;
        }
        Ok(())
    }
}

pub fn detection_sweep(
    signal: &SampledSignal,
    thresholds: &[f64],
    front_time: f64,
) -> Result<DetectionSeries> {
    if let Some(s) = thresholds.iter().find(|s| !(**s > 0.0 && s.is_finite())) {
        return Err(Error::InvalidParameter(format!(
            "threshold {s} is not positive"
        )));
    }
    if thresholds.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::InvalidParameter(
            "thresholds must be strictly decreasing".into(),
        ));
    }
    let mut series = DetectionSeries {
        thresholds: Vec::with_capacity(thresholds.len()),
        detection_times: Vec::with_capacity(thresholds.len()),
        front_time,
        missed: Vec::new(),
    };
    for &s in thresholds {
        match first_crossing(signal, s) {
            Some(t) => {
                series.thresholds.push(s);
                series.detection_times.push(t);
            }
            None => series.missed.push(s),
        }
    }
    Ok(series)
}

/// Extrapolation model for [`front_estimate_with`]: fit
/// `t_n = t_front + b * S_n^exponent` by least squares over the `fit_points`
/// smallest thresholds.
///
/// The default exponent 1/2 matches an envelope that rises quadratically from
/// its front.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FrontModel {
    pub exponent: f64,
    pub fit_points: usize,
}

impl Default for FrontModel {
    fn default() -> Self {
        Self {
            exponent: 0.5,
            fit_points: 4,
        }
    }
}

pub const MIN_FRONT_POINTS: usize = 3;

pub fn front_estimate(series: &DetectionSeries) -> Result<f64> {
    front_estimate_with(series, FrontModel::default())
}

pub fn front_estimate_with(series: &DetectionSeries, model: FrontModel) -> Result<f64> {
    let n = series.len();
    if n < MIN_FRONT_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_FRONT_POINTS,
            got: n,
        });
    }
    let mut pairs: Vec<(f64, f64)> = series
        .thresholds
        .iter()
        .zip(&series.detection_times)
        .map(|(s, t)| (s.powf(model.exponent), *t))
        .collect();
    pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
    pairs.truncate(model.fit_points.max(MIN_FRONT_POINTS));

    let m = pairs.len() as f64;
    let mx = pairs.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pairs.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pairs.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pairs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    if sxx == 0.0 {
        return Err(Error::InsufficientData {
            needed: MIN_FRONT_POINTS,
            got: 1,
        });
    }
    Ok(my - sxy / sxx * mx)
}

/// Exponential decay rate of the `|V|` envelope after `after`, from a
/// log-linear fit through the local maxima of `|V|`.
pub fn envelope_decay_rate(signal: &SampledSignal, after: f64) -> Result<f64> {
    let v = signal.values();
    let grid = signal.grid();
    let mut pts = Vec::new();
    for i in 1..v.len() - 1 {
        let t = grid.time(i);
        let a = v[i].abs();
        if t > after && a > 0.0 && a >= v[i - 1].abs() && a > v[i + 1].abs() {
            pts.push((t, a.ln()));
        }
    }
    // discard the transient right after the cut
    if pts.len() > 4 {
        pts.remove(0);
    }
    if pts.len() < MIN_FRONT_POINTS {
        return Err(Error::InsufficientData {
            needed: MIN_FRONT_POINTS,
            got: pts.len(),
        });
    }
    let m = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    Ok(-sxy / sxx)
}

/// Kramers-Kronig consistency of `H`.
///
/// Reconstructs `Re(H - 1)` from `Im(H - 1)` sampled on `n_omega` uniform
/// points in `[-omega_max, omega_max]`, using
///
/// ```text
/// Re chi(w) = -(1/pi) PV integral Im chi(w') / (w' - w) dw'
/// ```
///
/// (sign fixed by the `exp(-i omega t)` transform kernel). The principal value is
/// taken by subtracting the singular part analytically and integrating the
/// smooth remainder with the trapezoid rule. Returns the max-norm defect over
/// interior nodes relative to `max |Re(H - 1)|`.
pub fn kk_residual(p: &AmplifierParams, omega_max: f64, n_omega: usize) -> Result<f64> {
    if n_omega < 128 {
        return Err(Error::InvalidParameter(format!(
            "n_omega must be >= 128, got {n_omega}"
        )));
    }
    if !(omega_max > 0.0 && omega_max.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "omega_max must be positive, got {omega_max}"
        )));
    }
    let d_omega = 2.0 * omega_max / (n_omega - 1) as f64;
    let omega: Vec<f64> = (0..n_omega)
        .map(|j| -omega_max + j as f64 * d_omega)
        .collect();
    let chi: Vec<Complex64> = omega
        .iter()
        .map(|&w| transfer_function(w, p).h - 1.0)
        .collect();
    let im: Vec<f64> = chi.iter().map(|c| c.im).collect();
    let scale = chi.iter().fold(0.0_f64, |m, c| m.max(c.re.abs()));
    if scale == 0.0 && im.iter().all(|&x| x == 0.0) {
        return Ok(0.0);
    }

    let slope = |k: usize| -> f64 {
        if k == 0 {
            (im[1] - im[0]) / d_omega
        } else if k == n_omega - 1 {
            (im[k] - im[k - 1]) / d_omega
        } else {
            (im[k + 1] - im[k - 1]) / (2.0 * d_omega)
        }
    };

    let defect = (1..n_omega - 1)
        .into_par_iter()
        .map(|k| {
            let w = omega[k];
            let fk = im[k];
            let mut acc = 0.0;
            for j in 0..n_omega {
                let q = if j == k {
                    slope(k)
                } else {
                    (im[j] - fk) / (omega[j] - w)
                };
                let weight = if j == 0 || j == n_omega - 1 { 0.5 } else { 1.0 };
                acc += weight * q;
            }
            let pv = acc * d_omega + fk * ((omega_max - w) / (omega_max + w)).ln();
            let re = -pv / std::f64::consts::PI;
            (re - chi[k].re).abs()
        })
        .reduce(|| 0.0, f64::max);
    Ok(defect / scale)
}
