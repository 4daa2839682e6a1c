//! Threshold-triggered feedback loop around the amplifier.
//!
//! A detector watches `|V(t)|`; at the second time it equals `s0` the
//! modulator switches the input off for good, `M(t) = theta(t2 - t)`. The loop
//! signal satisfies
//!
//! ```text
//! V(t) = M(t) V_in(t) + integral_{-inf}^{t} G'(t - tau) M(tau) V_in(tau) dtau
//! ```
//!
//! Before `t2` the modulation is unity, so `V` coincides with the open-loop
//! output and `t2` can be read off that output directly. After `t2` only the
//! retarded tail of the truncated input remains. [`solve_feedback`] builds the
//! solution that way; [`verify_self_consistency`] and [`picard_solve`] check it
//! against the integral equation without using that shortcut.

use rayon::prelude::*;
use serde::Serialize;

use crate::amplifier::{check_grid, green_prime, AmplifierParams, RetardedKernel};
use crate::error::{Error, Result};
use crate::signal::{
    peak_time, sample_input, threshold_crossings, CrossingPair, InputPulseSpec, SampledSignal,
    TimeGrid,
};

/// Detector threshold used for the reference feedback run, in units of `v0`.
pub const REFERENCE_THRESHOLD: f64 = 1.12;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FeedbackConfig {
    pub pulse: InputPulseSpec,
    pub amp: AmplifierParams,
    /// Detector threshold, same units as `pulse.v0`.
    pub s0: f64,
    #[serde(skip)]
    pub grid: TimeGrid,
}

impl FeedbackConfig {
    pub fn new(
        pulse: InputPulseSpec,
        amp: AmplifierParams,
        s0: f64,
        grid: TimeGrid,
    ) -> Result<Self> {
        let cfg = Self {
            pulse,
            amp,
            s0,
            grid,
        };
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reference loop: 41 ms pulse without carrier, the reference amplifier,
    /// `s0 = 1.12 v0`, default grid with step `dt`.
    pub fn reference(dt: f64) -> Result<Self> {
        let pulse = InputPulseSpec::new(1.0, 0.041, 0.0)?;
        let grid = pulse.default_grid(dt)?;
        Self::new(
            pulse,
            AmplifierParams::reference(),
            REFERENCE_THRESHOLD,
            grid,
        )
    }

    pub fn with_threshold(mut self, s0: f64) -> Result<Self> {
        self.s0 = s0;
        self.validate()?;
        Ok(self)
    }

    pub fn validate(&self) -> Result<()> {
        self.pulse.validate()?;
        self.amp.validate()?;
        if !(self.s0 > 0.0 && self.s0.is_finite()) {
            return Err(Error::InvalidParameter(format!(
                "s0 must be positive, got {}",
                self.s0
            )));
        }
        check_grid(&self.grid, &self.amp, Some(self.pulse.tf))
    }

    pub fn input(&self) -> SampledSignal {
        sample_input(&self.pulse, &self.grid)
    }
}

/// `theta(t2 - t)` with `theta(0) = 1`.
#[inline]
pub fn modulation(t: f64, t2: f64) -> f64 {
    if t <= t2 {
        1.0
    } else {
        0.0
    }
}

/// Detector outcome of a feedback run.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "state", rename_all = "snake_case")]
pub enum Trigger {
    Fired(CrossingPair),
    /// The threshold is never reached. `grazing` holds the touch point when
    /// `|V_out|` meets `s0` only tangentially.
    NoTrigger {
        grazing: Option<f64>,
    },
}

impl Trigger {
    pub fn crossings(&self) -> Option<CrossingPair> {
        match self {
            Trigger::Fired(c) => Some(*c),
            Trigger::NoTrigger { .. } => None,
        }
    }

    pub fn cutoff(&self) -> Option<f64> {
        self.crossings().map(|c| c.t2)
    }
}

#[derive(Debug, Clone)]
pub struct FeedbackSolution {
    /// Self-consistent loop signal.
    pub v: SampledSignal,
    pub v_in: SampledSignal,
    /// Output without feedback, from which the trigger is read.
    pub v_open: SampledSignal,
    pub trigger: Trigger,
    /// Max-norm defect of the integral equation under substitution of `v`.
    pub residual: f64,
}

fn detect(v: &SampledSignal, s0: f64) -> Result<Trigger> {
    match threshold_crossings(v, s0) {
        Ok(c) => Ok(Trigger::Fired(c)),
        Err(Error::NoCrossing { .. }) => Ok(Trigger::NoTrigger { grazing: None }),
        Err(Error::Grazing { t, .. }) => Ok(Trigger::NoTrigger { grazing: Some(t) }),
        Err(e) => Err(e),
    }
}

/// Linear interpolation of sampled values at `t` inside cell `k`.
#[inline]
fn interp_in_cell(values: &[f64], grid: &TimeGrid, k: usize, t: f64) -> f64 {
    if k + 1 >= values.len() {
        return values[k];
    }
    let frac = (t - grid.time(k)) / grid.dt();
    values[k] + frac * (values[k + 1] - values[k])
}

/// Right-hand side of the loop equation at every grid point for the
/// modulation `theta(cutoff - t)` (no modulation for `None`).
///
/// The integral runs over the grid nodes up to `min(t_i, cutoff)`, with the
/// partial cell ending at the cutoff closed by the linearly interpolated input.
pub fn loop_rhs(
    v_in: &SampledSignal,
    kernel: &RetardedKernel,
    amp: &AmplifierParams,
    cutoff: Option<f64>,
) -> Vec<f64> {
    let grid = *v_in.grid();
    let values = v_in.values();
    let Some(support) = v_in.support() else {
        return vec![0.0; values.len()];
    };
    (0..values.len())
        .into_par_iter()
        .map(|i| rhs_at(values, &grid, support, kernel, amp, cutoff, i))
        .collect()
}

fn rhs_at(
    values: &[f64],
    grid: &TimeGrid,
    support: (usize, usize),
    kernel: &RetardedKernel,
    amp: &AmplifierParams,
    cutoff: Option<f64>,
    i: usize,
) -> f64 {
    let t = grid.time(i);
    let gate = cutoff.map_or(1.0, |c| modulation(t, c));
    let direct = gate * values[i];
    let (last, upper) = match cutoff {
        Some(c) if c < t => match grid.floor_index(c) {
            Some(k) => (k, c),
            None => return direct,
        },
        _ => (i, t),
    };
    let (lo, hi) = support;
    let mut acc = 0.0;
    if last > 0 && last >= lo {
        for j in lo..=last.min(hi) {
            let w = if j == 0 || j == last { 0.5 } else { 1.0 };
            acc += w * kernel.tap(i - j) * values[j];
        }
    }
    let mut integral = kernel.dt() * acc;
    let tail = upper - grid.time(last);
    if tail > 0.0 {
        let v_cut = interp_in_cell(values, grid, last, upper);
        integral += 0.5
            * tail
            * (kernel.tap(i - last) * values[last] + green_prime(t - upper, amp) * v_cut);
    }
    direct + integral
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .fold(0.0_f64, |m, (x, y)| m.max((x - y).abs()))
}

/// Self-consistent solution of the feedback loop.
///
/// A threshold above `max |V_out|` is a successful outcome with
/// [`Trigger::NoTrigger`] and `v == v_open`.
pub fn solve_feedback(cfg: &FeedbackConfig) -> Result<FeedbackSolution> {
    cfg.validate()?;
    let grid = cfg.grid;
    let v_in = cfg.input();
    let kernel = RetardedKernel::new(&cfg.amp, &grid);
    let v_open = kernel.apply(&v_in);
    let trigger = detect(&v_open, cfg.s0)?;

    let v = match trigger {
        Trigger::NoTrigger { .. } => v_open.clone(),
        Trigger::Fired(c) => {
            let k = grid.floor_index(c.t2).expect("trigger lies on the grid");
            let vin = v_in.values();
            let support = v_in.support().expect("trigger implies nonzero input");
            let (lo, hi) = support;
            let v_cut = interp_in_cell(vin, &grid, k, c.t2);
            let tail = c.t2 - grid.time(k);
            let mut values = v_open.values().to_vec();
            values[k + 1..]
                .par_iter_mut()
                .enumerate()
                .for_each(|(off, out)| {
                    let i = k + 1 + off;
                    let mut acc = 0.0;
                    for j in lo..=k.min(hi) {
                        acc += kernel.tap(i - j) * vin[j];
                    }
                    if lo == 0 {
                        acc -= 0.5 * kernel.tap(i) * vin[0];
                    }
                    acc -= 0.5 * kernel.tap(i - k) * vin[k];
                    let partial = 0.5
                        * tail
                        * (kernel.tap(i - k) * vin[k]
                            + green_prime(grid.time(i) - c.t2, &cfg.amp) * v_cut);
                    *out = kernel.dt() * acc + partial;
                });
            SampledSignal::new(grid, values)?
        }
    };

    let rhs = loop_rhs(&v_in, &kernel, &cfg.amp, trigger.cutoff());
    let residual = max_abs_diff(v.values(), &rhs);
    Ok(FeedbackSolution {
        v,
        v_in,
        v_open,
        trigger,
        residual,
    })
}

/// Re-evaluates the loop equation with the stored cutoff and returns the
/// max-norm defect of `sol.v`. Also re-runs the detector on `sol.v` and
/// requires it to reproduce the stored trigger times to within one grid cell.
pub fn verify_self_consistency(sol: &FeedbackSolution, cfg: &FeedbackConfig) -> Result<f64> {
    let grid = cfg.grid;
    let v_in = cfg.input();
    let kernel = RetardedKernel::new(&cfg.amp, &grid);
    let rhs = loop_rhs(&v_in, &kernel, &cfg.amp, sol.trigger.cutoff());
    let defect = max_abs_diff(sol.v.values(), &rhs);

    let redetected = detect(&sol.v, cfg.s0);
    match (sol.trigger, redetected) {
        (Trigger::Fired(stored), Ok(Trigger::Fired(found))) => {
            let cell = grid.dt();
            if (stored.t1 - found.t1).abs() > cell || (stored.t2 - found.t2).abs() > cell {
                return Err(Error::InconsistentTrigger {
                    t1: stored.t1,
                    t2: stored.t2,
                    r1: found.t1,
                    r2: found.t2,
                });
            }
        }
        (Trigger::NoTrigger { .. }, Ok(Trigger::NoTrigger { .. })) => {}
        (stored, found) => {
            let (t1, t2) = stored
                .crossings()
                .map_or((f64::NAN, f64::NAN), |c| (c.t1, c.t2));
            let (r1, r2) = match found {
                Ok(Trigger::Fired(c)) => (c.t1, c.t2),
                _ => (f64::NAN, f64::NAN),
            };
            return Err(Error::InconsistentTrigger { t1, t2, r1, r2 });
        }
    }
    Ok(defect)
}

/// Result of the fixed-point iteration on the loop equation.
#[derive(Debug, Clone)]
pub struct PicardReport {
    pub v: SampledSignal,
    pub trigger: Trigger,
    pub iterations: usize,
    /// Max-norm change of the last iteration.
    pub last_update: f64,
    pub converged: bool,
}

/// Iterate on the loop signal, the jump left by a cut at `cutoff` in cell
/// `cell` is tracked through the value the signal would have had at the next
/// sample without the cut.
struct Iterate {
    samples: Vec<f64>,
    jump: Option<(usize, f64, f64)>,
}

/// Detector run on an iterate. Inside the cell holding a cut the signal is
/// interpolated on its pre-cut branch up to the cut and on the post-cut branch
/// after it.
fn detect_iterate(it: &Iterate, grid: &TimeGrid, s0: f64) -> Result<Trigger> {
    let signal = SampledSignal::new(*grid, it.samples.clone())?;
    let Some((cell, cut, left_next)) = it.jump else {
        return detect(&signal, s0);
    };
    let first = match threshold_crossings(&signal, s0) {
        Ok(c) => c,
        Err(Error::NoCrossing { .. }) => return Ok(Trigger::NoTrigger { grazing: None }),
        Err(Error::Grazing { t, .. }) => return Ok(Trigger::NoTrigger { grazing: Some(t) }),
        Err(Error::SingleCrossing { t1, .. }) => CrossingPair {
            t1,
            t2: f64::INFINITY,
        },
        Err(e) => return Err(e),
    };
    let down_cell = grid.floor_index(first.t2).unwrap_or(grid.len() - 1);
    if down_cell != cell || first.t2 < grid.time(cell) {
        return if first.t2.is_finite() {
            Ok(Trigger::Fired(first))
        } else {
            Err(Error::SingleCrossing {
                threshold: s0,
                t1: first.t1,
            })
        };
    }
    let a0 = it.samples[cell].abs();
    let a1 = left_next.abs();
    let on_left = if a1 < s0 {
        grid.time(cell) + (a0 - s0) / (a0 - a1) * grid.dt()
    } else {
        f64::INFINITY
    };
    let t2 = on_left.min(cut);
    if t2 <= first.t1 {
        return Ok(Trigger::NoTrigger {
            grazing: Some(first.t1),
        });
    }
    Ok(Trigger::Fired(CrossingPair { t1: first.t1, t2 }))
}

/// Fixed-point iteration `V <- F[V]`, where `F` re-derives the modulation from
/// the detector run on the current iterate. Starts from `V = 0`.
pub fn picard_solve(cfg: &FeedbackConfig, max_iter: usize, tol: f64) -> Result<PicardReport> {
    cfg.validate()?;
    let grid = cfg.grid;
    let v_in = cfg.input();
    let kernel = RetardedKernel::new(&cfg.amp, &grid);
    let support = v_in.support();

    let mut it = Iterate {
        samples: vec![0.0; grid.len()],
        jump: None,
    };
    let mut trigger = Trigger::NoTrigger { grazing: None };
    let mut last_update = f64::INFINITY;
    for n in 1..=max_iter {
        trigger = detect_iterate(&it, &grid, cfg.s0)?;
        let cutoff = trigger.cutoff();
        let next = loop_rhs(&v_in, &kernel, &cfg.amp, cutoff);
        let jump = match (cutoff, support) {
            (Some(c), Some(sup)) => grid
                .floor_index(c)
                .filter(|&k| k + 1 < grid.len())
                .map(|k| {
                    let left = rhs_at(v_in.values(), &grid, sup, &kernel, &cfg.amp, None, k + 1);
                    (k, c, left)
                }),
            _ => None,
        };
        last_update = max_abs_diff(&next, &it.samples);
        it = Iterate {
            samples: next,
            jump,
        };
        if last_update <= tol {
            return Ok(PicardReport {
                v: SampledSignal::new(grid, it.samples)?,
                trigger,
                iterations: n,
                last_update,
                converged: true,
            });
        }
    }
    Ok(PicardReport {
        v: SampledSignal::new(grid, it.samples)?,
        trigger,
        iterations: max_iter,
        last_update,
        converged: false,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ProbeReport {
    pub cut_time: f64,
    pub output_peak_survives: bool,
    pub t_out: Option<f64>,
    pub max_output: f64,
}

/// Open-loop run with the input switched off after `cut_time`; reports whether
/// the output still rises above the detector threshold.
pub fn peak_causality_probe(cfg: &FeedbackConfig, cut_time: f64) -> Result<ProbeReport> {
    cfg.validate()?;
    let grid = cfg.grid;
    if !(cut_time >= grid.t_start() && cut_time <= grid.t_end()) {
        return Err(Error::InvalidParameter(format!(
            "cut time {cut_time} outside grid [{}, {}]",
            grid.t_start(),
            grid.t_end()
        )));
    }
    let v_in = cfg.input().map(|t, v| modulation(t, cut_time) * v);
    let out = RetardedKernel::new(&cfg.amp, &grid).apply(&v_in);
    let max_output = out.max_abs();
    let survives = max_output > cfg.s0;
    let t_out = if survives { peak_time(&out).ok() } else { None };
    Ok(ProbeReport {
        cut_time,
        output_peak_survives: survives,
        t_out,
        max_output,
    })
}
