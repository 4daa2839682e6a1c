//! Run configuration: a flat TOML table of the keys in [`KNOWN_KEYS`].
//!
//! Command-line overrides are applied on top of the file and win over it.

use std::collections::BTreeMap;
use std::fmt;
use std::path::Path;

use serde::Serialize;
use toml::{Spanned, Value};

use crate::amplifier::{AmplifierParams, OmegaUnits};
use crate::error::Error;
use crate::signal::{InputPulseSpec, TimeGrid};

pub const KNOWN_KEYS: &[&str] = &[
    "g0",
    "t0",
    "gamma",
    "omega_r",
    "omega_r_units",
    "v0",
    "tf",
    "omega_c",
    "s0",
    "dt",
    "span",
    "thresholds",
    "sweep_target",
    "omega_max",
    "n_omega",
];

/// Where a configuration value came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Origin {
    File { line: usize },
    Override,
}

impl fmt::Display for Origin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Origin::File { line } => write!(f, "line {line}"),
            Origin::Override => f.write_str("command line"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConfigError {
    pub key: Option<String>,
    pub origin: Option<Origin>,
    pub message: String,
    /// Numerical failure raised while resolving the value, if any.
    pub cause: Option<Error>,
}

impl ConfigError {
    fn new(key: &str, origin: Option<Origin>, message: impl Into<String>) -> Self {
        Self {
            key: Some(key.to_string()),
            origin,
            message: message.into(),
            cause: None,
        }
    }
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match (&self.key, &self.origin) {
            (Some(k), Some(o)) => write!(f, "`{k}` ({o}): {}", self.message),
            (Some(k), None) => write!(f, "`{k}`: {}", self.message),
            (None, Some(o)) => write!(f, "{o}: {}", self.message),
            (None, None) => f.write_str(&self.message),
        }
    }
}

impl std::error::Error for ConfigError {}

/// Unresolved assignments, keyed by name.
#[derive(Debug, Clone, Default)]
pub struct RawConfig {
    entries: BTreeMap<String, (Value, Origin)>,
}

impl RawConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        let table: BTreeMap<String, Spanned<Value>> =
            toml::from_str(text).map_err(|e| ConfigError {
                key: None,
                origin: e.span().map(|s| Origin::File {
                    line: line_of(text, s.start),
                }),
                message: e.message().to_string(),
                cause: None,
            })?;
        let mut cfg = Self::default();
        for (key, value) in table {
            let origin = Origin::File {
                line: line_of(text, value.span().start),
            };
            check_key(&key, origin)?;
            cfg.entries.insert(key, (value.into_inner(), origin));
        }
        if cfg.entries.contains_key("g0") && cfg.entries.contains_key("t0") {
            let origin = cfg.entries["t0"].1;
            return Err(ConfigError::new(
                "t0",
                Some(origin),
                "give exactly one of `g0` and `t0`",
            ));
        }
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError {
            key: None,
            origin: None,
            message: format!("cannot read {}: {e}", path.display()),
            cause: None,
        })?;
        Self::parse(&text)
    }

    /// Applies a `key=value` override. The value is read as a TOML value, a
    /// bare comma-separated list, or else a plain string. Setting one of
    /// `g0`/`t0` clears the other.
    pub fn set(&mut self, assignment: &str) -> Result<(), ConfigError> {
        let Some((key, value)) = assignment.split_once('=') else {
            return Err(ConfigError {
                key: None,
                origin: Some(Origin::Override),
                message: format!("expected `key=value`, got `{assignment}`"),
                cause: None,
            });
        };
        let key = key.trim();
        check_key(key, Origin::Override)?;
        match key {
            "g0" => {
                self.entries.remove("t0");
            }
            "t0" => {
                self.entries.remove("g0");
            }
            _ => {}
        }
        self.entries.insert(
            key.to_string(),
            (override_value(value.trim()), Origin::Override),
        );
        Ok(())
    }

    fn raw(&self, key: &str) -> Option<&(Value, Origin)> {
        self.entries.get(key)
    }

    fn number(&self, key: &str) -> Result<Option<f64>, ConfigError> {
        let Some((value, origin)) = self.raw(key) else {
            return Ok(None);
        };
        as_number(key, value, *origin).map(Some)
    }

    fn list(&self, key: &str) -> Result<Option<Vec<f64>>, ConfigError> {
        let Some((value, origin)) = self.raw(key) else {
            return Ok(None);
        };
        match value {
            Value::Array(items) => items
                .iter()
                .map(|item| as_number(key, item, *origin))
                .collect::<Result<Vec<_>, _>>()
                .map(Some),
            single => as_number(key, single, *origin).map(|x| Some(vec![x])),
        }
    }

    fn text(&self, key: &str) -> Result<Option<(&str, Origin)>, ConfigError> {
        match self.raw(key) {
            None => Ok(None),
            Some((Value::String(s), o)) => Ok(Some((s.as_str(), *o))),
            Some((other, o)) => Err(ConfigError::new(
                key,
                Some(*o),
                format!("expected a string, got `{other}`"),
            )),
        }
    }

    fn origin(&self, key: &str) -> Option<Origin> {
        self.raw(key).map(|(_, o)| *o)
    }

    pub fn resolve(&self) -> Result<ResolvedConfig, ConfigError> {
        let err = |key: &str, e: Error| ConfigError::new(key, self.origin(key), e.to_string());

        let gamma = self.number("gamma")?.unwrap_or(defaults::GAMMA);
        let omega_r = self.number("omega_r")?.unwrap_or(defaults::OMEGA_R);
        let units = match self.text("omega_r_units")? {
            Some((v, o)) => v
                .parse::<OmegaUnits>()
                .map_err(|e| ConfigError::new("omega_r_units", Some(o), e.to_string()))?,
            None => defaults::OMEGA_R_UNITS,
        };
        let amp = match (self.number("g0")?, self.number("t0")?) {
            (Some(g0), None) => AmplifierParams::with_units(g0, gamma, omega_r, units)
                .map_err(|e| err(param_key(&e, "g0"), e))?,
            (None, t0) => {
                let t0 = t0.unwrap_or(defaults::T0);
                AmplifierParams::calibrated(gamma, omega_r, units, t0).map_err(|e| match e {
                    Error::InvalidParameter(_) => err(param_key(&e, "t0"), e),
                    other => ConfigError {
                        cause: Some(other.clone()),
                        ..ConfigError::new("t0", self.origin("t0"), other.to_string())
                    },
                })?
            }
            (Some(_), Some(_)) => {
                return Err(ConfigError::new(
                    "t0",
                    self.origin("t0"),
                    "give exactly one of `g0` and `t0`",
                ))
            }
        };

        let pulse = InputPulseSpec::new(
            self.number("v0")?.unwrap_or(1.0),
            self.number("tf")?.unwrap_or(defaults::TF),
            self.number("omega_c")?.unwrap_or(0.0),
        )
        .map_err(|e| err(param_key(&e, "tf"), e))?;

        let s0 = self.number("s0")?.unwrap_or(defaults::S0 * pulse.v0);
        if !(s0 > 0.0) {
            return Err(ConfigError::new(
                "s0",
                self.origin("s0"),
                "must be positive",
            ));
        }

        let dt = self.number("dt")?.unwrap_or(defaults::DT);
        let (t_start, t_end) = match self.list("span")? {
            Some(v) if v.len() == 2 => (v[0], v[1]),
            Some(_) => {
                return Err(ConfigError::new(
                    "span",
                    self.origin("span"),
                    "expected `start, end` in seconds",
                ))
            }
            None => (-3.0 * pulse.tf, 12.0 * pulse.tf),
        };
        let grid = TimeGrid::spanning(t_start, t_end, dt).map_err(|e| {
            let key = if dt > 0.0 { "span" } else { "dt" };
            err(key, e)
        })?;
        if t_start > -pulse.tf {
            return Err(ConfigError::new(
                "span",
                self.origin("span"),
                format!("grid must start at or before the pulse front {}", -pulse.tf),
            ));
        }

        let thresholds = self.list("thresholds")?.unwrap_or_else(|| {
            defaults::thresholds()
                .iter()
                .map(|s| s * pulse.v0)
                .collect()
        });
        let sweep_target = match self.text("sweep_target")? {
            Some((v, o)) => match v {
                "input" => SweepTarget::Input,
                "output" => SweepTarget::Output,
                other => {
                    return Err(ConfigError::new(
                        "sweep_target",
                        Some(o),
                        format!("expected `input` or `output`, got `{other}`"),
                    ))
                }
            },
            None => SweepTarget::Output,
        };

        let omega_max = self.number("omega_max")?.unwrap_or(100.0 * amp.omega_r);
        let n_omega = match self.number("n_omega")? {
            Some(n) if n >= 128.0 && n.fract() == 0.0 => n as usize,
            Some(_) => {
                return Err(ConfigError::new(
                    "n_omega",
                    self.origin("n_omega"),
                    "must be an integer >= 128",
                ))
            }
            None => ((2.0 * omega_max / (amp.gamma / 4.0)).round() as usize + 1).max(128),
        };

        Ok(ResolvedConfig {
            amp,
            pulse,
            s0,
            grid: GridDescription::from(grid),
            thresholds,
            sweep_target,
            omega_max,
            n_omega,
        })
    }
}

fn param_key<'a>(e: &Error, fallback: &'a str) -> &'a str {
    if let Error::InvalidParameter(msg) = e {
        for key in KNOWN_KEYS {
            if msg.starts_with(key) {
                return key;
            }
        }
    }
    fallback
}

fn check_key(key: &str, origin: Origin) -> Result<(), ConfigError> {
    if KNOWN_KEYS.contains(&key) {
        Ok(())
    } else {
        Err(ConfigError::new(key, Some(origin), "unknown key"))
    }
}

fn as_number(key: &str, value: &Value, origin: Origin) -> Result<f64, ConfigError> {
    let x = match value {
        Value::Float(x) => Some(*x),
        Value::Integer(i) => Some(*i as f64),
        _ => None,
    };
    x.filter(|v| v.is_finite()).ok_or_else(|| {
        ConfigError::new(
            key,
            Some(origin),
            format!("`{value}` is not a finite number"),
        )
    })
}

fn override_value(text: &str) -> Value {
    for candidate in [text.to_string(), format!("[{text}]")] {
        if let Ok(mut t) = toml::from_str::<toml::Table>(&format!("v = {candidate}")) {
            if let Some(v) = t.remove("v") {
                return v;
            }
        }
    }
    Value::String(text.to_string())
}

fn line_of(text: &str, offset: usize) -> usize {
    text[..offset.min(text.len())].matches('\n').count() + 1
}

pub mod defaults {
    use crate::amplifier::OmegaUnits;

    pub const GAMMA: f64 = 15.0;
    pub const OMEGA_R: f64 = 51.0;
    pub const OMEGA_R_UNITS: OmegaUnits = OmegaUnits::Cyclic;
    pub const T0: f64 = 2.94e-3;
    pub const TF: f64 = 0.041;
    pub const S0: f64 = 1.12;
    pub const DT: f64 = 1e-5;

    /// `2^-1 .. 2^-14`, reaching below `1e-4`.
    pub fn thresholds() -> Vec<f64> {
        (1..=14).map(|n| 0.5_f64.powi(n)).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "lowercase")]
pub enum SweepTarget {
    Input,
    Output,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GridDescription {
    pub t_start: f64,
    pub t_end: f64,
    pub dt: f64,
    pub n: usize,
}

impl From<TimeGrid> for GridDescription {
    fn from(g: TimeGrid) -> Self {
        Self {
            t_start: g.t_start(),
            t_end: g.t_end(),
            dt: g.dt(),
            n: g.len(),
        }
    }
}

impl GridDescription {
    pub fn grid(&self) -> TimeGrid {
        TimeGrid::new(self.t_start, self.dt, self.n).expect("resolved grid is valid")
    }
}

/// Fully resolved parameter set, echoed into every run summary.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResolvedConfig {
    pub amp: AmplifierParams,
    pub pulse: InputPulseSpec,
    pub s0: f64,
    pub grid: GridDescription,
    pub thresholds: Vec<f64>,
    pub sweep_target: SweepTarget,
    pub omega_max: f64,
    pub n_omega: usize,
}
