//! Scenario runner behind the `ngdlab` binary.
//!
//! Each scenario writes a CSV trace (or table) and a single `summary.json`
//! into the output directory. Summaries hold only deterministic quantities, so
//! re-running a configuration reproduces them byte for byte.

pub mod config;

use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::amplifier::{
    calibrate_g0, group_delay_at, open_loop_output, transfer_function, OmegaUnits,
};
use crate::analysis::{
    detection_sweep, envelope_decay_rate, front_estimate, kk_residual, measure_group_delay,
    DelayReport, DetectionSeries,
};
use crate::error::Error;
use crate::feedback::{
    peak_causality_probe, solve_feedback, verify_self_consistency, FeedbackConfig, ProbeReport,
    Trigger,
};
use crate::signal::{peak_time, rms_bandwidth, sample_input, write_columns_csv, CrossingPair};

pub use config::{ConfigError, RawConfig, ResolvedConfig, SweepTarget};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum ScenarioKind {
    OpenLoop,
    Feedback,
    ThresholdSweep,
    Calibrate,
    KkCheck,
}

#[derive(Debug, Clone)]
pub struct Scenario {
    pub kind: ScenarioKind,
    pub config: ResolvedConfig,
    pub output_dir: PathBuf,
}

#[derive(Debug, thiserror::Error)]
pub enum RunError {
    #[error("configuration error: {0}")]
    Config(ConfigError),
    #[error("numerical failure: {0}")]
    Numerical(Error),
    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),
}

impl From<Error> for RunError {
    fn from(e: Error) -> Self {
        match e {
            Error::InvalidParameter(msg) => RunError::Config(ConfigError {
                key: None,
                origin: None,
                message: msg,
                cause: None,
            }),
            other => RunError::Numerical(other),
        }
    }
}

impl From<ConfigError> for RunError {
    fn from(e: ConfigError) -> Self {
        match e.cause {
            Some(cause) => RunError::Numerical(cause),
            None => RunError::Config(e),
        }
    }
}

impl RunError {
    /// 1 for configuration and I/O problems, 2 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            RunError::Config(_) | RunError::Io(_) => 1,
            RunError::Numerical(_) => 2,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct OpenLoopMeasured {
    pub delay: DelayReport,
    /// `-d(arg H)/d(omega)` at the carrier.
    pub group_delay_at_carrier: f64,
    pub input_rms_bandwidth: f64,
    pub max_output: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct FeedbackMeasured {
    pub trigger: Trigger,
    pub t1: Option<f64>,
    pub t2: Option<f64>,
    pub input_peak_time: f64,
    pub open_loop_peak_time: f64,
    pub t_g: f64,
    pub max_open_loop_output: f64,
    pub residual: f64,
    pub verified_defect: f64,
    pub decay_rate: Option<f64>,
    pub probe_at_cutoff: Option<ProbeReport>,
    pub probe_at_front: ProbeReport,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct SweepMeasured {
    pub target: SweepTarget,
    pub series: DetectionSeries,
    pub front_estimate: Option<f64>,
    pub front_estimate_error: Option<String>,
    /// Detection times on the undistorted input for the same thresholds.
    pub input_detection_times: Vec<Option<f64>>,
}

#[derive(Debug, Clone, Serialize)]
pub struct CalibrateMeasured {
    pub g0: f64,
    pub omega_r_units: OmegaUnits,
    pub group_delay_at_zero: f64,
    pub dc_gain: f64,
    /// Gain the same advance would need under the other reading of `omega_r`.
    pub g0_other_units: Option<f64>,
}

#[derive(Debug, Clone, Serialize)]
pub struct KkMeasured {
    pub omega_max: f64,
    pub n_omega: usize,
    pub residual: f64,
    pub residual_half_range: f64,
}

#[derive(Debug, Clone, Serialize)]
#[serde(untagged)]
pub enum Measured {
    OpenLoop(OpenLoopMeasured),
    Feedback(Box<FeedbackMeasured>),
    ThresholdSweep(SweepMeasured),
    Calibrate(CalibrateMeasured),
    KkCheck(KkMeasured),
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub scenario: ScenarioKind,
    pub tool_version: &'static str,
    pub parameters: ResolvedConfig,
    pub measured: Measured,
}

impl RunSummary {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("summary serializes")
    }
}

fn csv_writer(dir: &Path, name: &str) -> std::io::Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(dir.join(name))?))
}

impl Scenario {
    pub fn new(kind: ScenarioKind, config: ResolvedConfig, output_dir: impl Into<PathBuf>) -> Self {
        Self {
            kind,
            config,
            output_dir: output_dir.into(),
        }
    }

    fn feedback_config(&self) -> Result<FeedbackConfig, RunError> {
        let c = &self.config;
        Ok(FeedbackConfig::new(c.pulse, c.amp, c.s0, c.grid.grid())?)
    }

    /// Runs the scenario, writes its CSV and `summary.json`, returns the summary.
    pub fn run(&self) -> Result<RunSummary, RunError> {
        fs::create_dir_all(&self.output_dir)?;
        let measured = match self.kind {
            ScenarioKind::OpenLoop => Measured::OpenLoop(self.run_open_loop()?),
            ScenarioKind::Feedback => Measured::Feedback(Box::new(self.run_feedback()?)),
            ScenarioKind::ThresholdSweep => Measured::ThresholdSweep(self.run_threshold_sweep()?),
            ScenarioKind::Calibrate => Measured::Calibrate(self.run_calibrate()?),
            ScenarioKind::KkCheck => Measured::KkCheck(self.run_kk_check()?),
        };
        let summary = RunSummary {
            scenario: self.kind,
            tool_version: TOOL_VERSION,
            parameters: self.config.clone(),
            measured,
        };
        let mut f = File::create(self.output_dir.join("summary.json"))?;
        f.write_all(summary.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        Ok(summary)
    }

    fn run_open_loop(&self) -> Result<OpenLoopMeasured, RunError> {
        let c = &self.config;
        let grid = c.grid.grid();
        let v_in = sample_input(&c.pulse, &grid);
        let v_out = open_loop_output(&v_in, &c.amp)?;
        let delay = measure_group_delay(&v_in, &v_out)?;
        let mut w = csv_writer(&self.output_dir, "trace.csv")?;
        write_columns_csv(&mut w, &["v_in", "v_out"], &[&v_in, &v_out])?;
        w.flush()?;
        Ok(OpenLoopMeasured {
            delay,
            group_delay_at_carrier: group_delay_at(c.pulse.omega_c, &c.amp)?,
            input_rms_bandwidth: rms_bandwidth(&v_in)?,
            max_output: v_out.max_abs(),
        })
    }

    fn run_feedback(&self) -> Result<FeedbackMeasured, RunError> {
        let cfg = self.feedback_config()?;
        let sol = solve_feedback(&cfg)?;
        let verified_defect = verify_self_consistency(&sol, &cfg)?;
        let input_peak_time = peak_time(&sol.v_in)?;
        let open_loop_peak_time = peak_time(&sol.v_open)?;
        let crossings: Option<CrossingPair> = sol.trigger.crossings();
        let decay_rate = match crossings {
            Some(c) => envelope_decay_rate(&sol.v, c.t2).ok(),
            None => None,
        };
        let probe_at_cutoff = match crossings {
            Some(c) => Some(peak_causality_probe(&cfg, c.t2)?),
            None => None,
        };
        let probe_at_front = peak_causality_probe(&cfg, cfg.pulse.front())?;
        let note = match sol.trigger {
            Trigger::NoTrigger { grazing: Some(t) } => Some(format!(
                "|V_out| touches s0 tangentially at t = {t:e} s; detector not fired"
            )),
            Trigger::NoTrigger { grazing: None } => {
                Some("s0 exceeds max |V_out|; detector never fires".into())
            }
            Trigger::Fired(_) => None,
        };
        let mut w = csv_writer(&self.output_dir, "trace.csv")?;
        write_columns_csv(&mut w, &["v_in", "v"], &[&sol.v_in, &sol.v])?;
        w.flush()?;
        Ok(FeedbackMeasured {
            trigger: sol.trigger,
            t1: crossings.map(|c| c.t1),
            t2: crossings.map(|c| c.t2),
            input_peak_time,
            open_loop_peak_time,
            t_g: open_loop_peak_time - input_peak_time,
            max_open_loop_output: sol.v_open.max_abs(),
            residual: sol.residual,
            verified_defect,
            decay_rate,
            probe_at_cutoff,
            probe_at_front,
            note,
        })
    }

    fn run_threshold_sweep(&self) -> Result<SweepMeasured, RunError> {
        let c = &self.config;
        let grid = c.grid.grid();
        let v_in = sample_input(&c.pulse, &grid);
        let trace = match c.sweep_target {
            SweepTarget::Input => v_in.clone(),
            SweepTarget::Output => open_loop_output(&v_in, &c.amp)?,
        };
        let series = detection_sweep(&trace, &c.thresholds, c.pulse.front())?;
        let (front_estimate, front_estimate_error) = match front_estimate(&series) {
            Ok(t) => (Some(t), None),
            Err(e) => (None, Some(e.to_string())),
        };
        let input_detection_times = series
            .thresholds
            .iter()
            .map(|&s| crate::signal::first_crossing(&v_in, s))
            .collect();
        let mut w = csv_writer(&self.output_dir, "sweep.csv")?;
        series.write_csv(&mut w)?;
        w.flush()?;
        Ok(SweepMeasured {
            target: c.sweep_target,
            series,
            front_estimate,
            front_estimate_error,
            input_detection_times,
        })
    }

    fn run_calibrate(&self) -> Result<CalibrateMeasured, RunError> {
        let amp = self.config.amp;
        let raw_omega = match amp.omega_r_units {
            OmegaUnits::Angular => amp.omega_r,
            OmegaUnits::Cyclic => amp.omega_r / (2.0 * std::f64::consts::PI),
        };
        let other = match amp.omega_r_units {
            OmegaUnits::Angular => OmegaUnits::Cyclic,
            OmegaUnits::Cyclic => OmegaUnits::Angular,
        };
        let g0_other_units = amp
            .t0
            .and_then(|t0| calibrate_g0(amp.gamma, other.to_rad_per_s(raw_omega), t0).ok());
        Ok(CalibrateMeasured {
            g0: amp.g0,
            omega_r_units: amp.omega_r_units,
            group_delay_at_zero: group_delay_at(0.0, &amp)?,
            dc_gain: transfer_function(0.0, &amp).h.re,
            g0_other_units,
        })
    }

    fn run_kk_check(&self) -> Result<KkMeasured, RunError> {
        let c = &self.config;
        let residual = kk_residual(&c.amp, c.omega_max, c.n_omega)?;
        let half_n = (c.n_omega / 2).max(128);
        let residual_half_range = kk_residual(&c.amp, 0.5 * c.omega_max, half_n)?;
        Ok(KkMeasured {
            omega_max: c.omega_max,
            n_omega: c.n_omega,
            residual,
            residual_half_range,
        })
    }
}

/// Human-readable lines for the console.
pub fn describe(summary: &RunSummary) -> Vec<String> {
    let p = &summary.parameters;
    let mut out = vec![
        format!("scenario        {:?}", summary.scenario),
        format!(
            "amplifier       g0 = {:.9} gamma = {} 1/s omega_r = {:.9} rad/s ({}){}",
            p.amp.g0,
            p.amp.gamma,
            p.amp.omega_r,
            p.amp.omega_r_units,
            p.amp
                .t0
                .map(|t| format!(", calibrated to t0 = {t} s"))
                .unwrap_or_default()
        ),
        format!(
            "pulse           v0 = {} tf = {} s omega_c = {} rad/s",
            p.pulse.v0, p.pulse.tf, p.pulse.omega_c
        ),
        format!(
            "grid            [{:.6}, {:.6}] s, dt = {:e} s, n = {}",
            p.grid.t_start, p.grid.t_end, p.grid.dt, p.grid.n
        ),
    ];
    match &summary.measured {
        Measured::OpenLoop(m) => {
            out.push(format!("t_in            {:.6e} s", m.delay.t_in));
            out.push(format!("t_out           {:.6e} s", m.delay.t_out));
            out.push(format!("t_g             {:.6e} s", m.delay.t_g));
            out.push(format!(
                "tau(omega_c)    {:.6e} s",
                m.group_delay_at_carrier
            ));
        }
        Measured::Feedback(m) => {
            out.push(format!("s0              {}", p.s0));
            match m.trigger {
                Trigger::Fired(c) => {
                    out.push(format!("t1              {:.6e} s", c.t1));
                    out.push(format!("t2              {:.6e} s", c.t2));
                }
                Trigger::NoTrigger { .. } => out.push("trigger         none".into()),
            }
            out.push(format!("input peak      {:.6e} s", m.input_peak_time));
            out.push(format!("open-loop peak  {:.6e} s", m.open_loop_peak_time));
            out.push(format!("t_g             {:.6e} s", m.t_g));
            out.push(format!("residual        {:.3e} V0", m.residual));
            if let Some(r) = m.decay_rate {
                out.push(format!("decay rate      {r:.4} 1/s"));
            }
            if let Some(note) = &m.note {
                out.push(format!("note            {note}"));
            }
        }
        Measured::ThresholdSweep(m) => {
            for (s, t) in m.series.thresholds.iter().zip(&m.series.detection_times) {
                out.push(format!("S = {s:.4e}  t = {t:.6e} s"));
            }
            for s in &m.series.missed {
                out.push(format!("S = {s:.4e}  not detected"));
            }
            match (m.front_estimate, &m.front_estimate_error) {
                (Some(t), _) => out.push(format!("front estimate  {t:.6e} s")),
                (None, Some(e)) => out.push(format!("front estimate  unavailable ({e})")),
                _ => {}
            }
        }
        Measured::Calibrate(m) => {
            out.push(format!("g0              {:.9}", m.g0));
            out.push(format!("tau(0)          {:.6e} s", m.group_delay_at_zero));
            out.push(format!("H(0)            {:.9}", m.dc_gain));
        }
        Measured::KkCheck(m) => {
            out.push(format!(
                "omega_max       {:.3} rad/s ({} points)",
                m.omega_max, m.n_omega
            ));
            out.push(format!("KK residual     {:.4e}", m.residual));
            out.push(format!("at omega_max/2  {:.4e}", m.residual_half_range));
        }
    }
    out
}
