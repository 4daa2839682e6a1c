//! Peak and threshold-crossing location on sampled traces.
//!
//! Everything here works on `|V(t)|`. Peaks are refined with a three-point
//! parabola; crossings are placed by linear interpolation between the
//! bracketing samples, which keeps both at O(dt^2).

use serde::Serialize;

use super::grid::SampledSignal;
use crate::error::{Error, Result};

/// First two times at which `|V(t)|` equals the threshold, `t1 < t2`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CrossingPair {
    pub t1: f64,
    pub t2: f64,
}

/// Abscissa of the maximum of `|V|`, refined by quadratic interpolation.
pub fn peak_time(signal: &SampledSignal) -> Result<f64> {
    let v = signal.values();
    let (idx, max) =
        v.iter()
            .map(|x| x.abs())
            .enumerate()
            .fold((0, f64::NEG_INFINITY), |(bi, bm), (i, a)| {
                if a > bm {
                    (i, a)
                } else {
                    (bi, bm)
                }
            });
    if max == 0.0 {
        return Err(Error::AllZero);
    }
    if idx == 0 || idx + 1 == v.len() {
        return Err(Error::PeakAtBoundary { index: idx });
    }
    let (y0, y1, y2) = (v[idx - 1].abs(), v[idx].abs(), v[idx + 1].abs());
    let curvature = y0 - 2.0 * y1 + y2;
    let offset = if curvature == 0.0 {
        0.0
    } else {
        (0.5 * (y0 - y2) / curvature).clamp(-0.5, 0.5)
    };
    let grid = signal.grid();
    Ok(grid.time(idx) + offset * grid.dt())
}

/// Index of the first sample with `|V| >= level` and the interpolated time at
/// which `|V|` rises through `level`.
fn first_rise(signal: &SampledSignal, level: f64) -> Option<(usize, f64)> {
    let v = signal.values();
    let grid = signal.grid();
    let j = v.iter().position(|x| x.abs() >= level)?;
    if j == 0 {
        return Some((0, grid.time(0)));
    }
    let (a0, a1) = (v[j - 1].abs(), v[j].abs());
    let t = grid.time(j - 1) + (level - a0) / (a1 - a0) * grid.dt();
    Some((j, t))
}

/// First time `|V|` reaches `level`, or `None` if it never does.
pub fn first_crossing(signal: &SampledSignal, level: f64) -> Option<f64> {
    first_rise(signal, level).map(|(_, t)| t)
}

/// First two times at which `|V(t)| = s0`.
///
/// A tangential touch (one sample exactly at `s0`, both neighbours below) is
/// reported as [`Error::Grazing`] rather than a degenerate pair.
pub fn threshold_crossings(signal: &SampledSignal, s0: f64) -> Result<CrossingPair> {
    if !(s0 > 0.0 && s0.is_finite()) {
        return Err(Error::InvalidParameter(format!(
            "threshold must be positive, got {s0}"
        )));
    }
    let v = signal.values();
    let grid = signal.grid();
    let (j, t1) = first_rise(signal, s0).ok_or(Error::NoCrossing { threshold: s0 })?;
    let k = (j + 1..v.len())
        .find(|&k| v[k].abs() < s0)
        .ok_or(Error::SingleCrossing { threshold: s0, t1 })?;
    let (a0, a1) = (v[k - 1].abs(), v[k].abs());
    let t2 = grid.time(k - 1) + (a0 - s0) / (a0 - a1) * grid.dt();
    if (k == j + 1 && v[j].abs() == s0) || t2 <= t1 {
        return Err(Error::Grazing {
            threshold: s0,
            t: t1,
        });
    }
    Ok(CrossingPair { t1, t2 })
}
