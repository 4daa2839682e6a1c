use thiserror::Error;

/// Errors produced by the simulation and measurement routines.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    #[error("invalid parameter: {0}")]
    InvalidParameter(String),

    #[error("signal is identically zero")]
    AllZero,

    #[error("maximum of |V| sits on the grid boundary (sample {index})")]
    PeakAtBoundary { index: usize },

    #[error("|V| never reaches threshold {threshold}")]
    NoCrossing { threshold: f64 },

    #[error("|V| reaches threshold {threshold} at t = {t1} s but never returns below it")]
    SingleCrossing { threshold: f64, t1: f64 },

    #[error("|V| touches threshold {threshold} tangentially at t = {t} s")]
    Grazing { threshold: f64, t: f64 },

    #[error("time step {dt} s exceeds the admissible limit {limit} s")]
    GridTooCoarse { dt: f64, limit: f64 },

    #[error("transfer function vanishes at omega = {omega} rad/s")]
    ZeroResponse { omega: f64 },

    #[error("no gain in [0, {g_max}] yields a group advance of {t0} s")]
    Unreachable { t0: f64, g_max: f64 },

    #[error("trigger times ({t1}, {t2}) are not reproduced by the returned signal ({r1}, {r2})")]
    InconsistentTrigger { t1: f64, t2: f64, r1: f64, r2: f64 },

    #[error("need at least {needed} detections, got {got}")]
    InsufficientData { needed: usize, got: usize },
}

pub type Result<T> = std::result::Result<T, Error>;
