//! Time grids, sampled traces, the compact-support input pulse and the
//! detectors that read peak and threshold times off a trace.

mod detect;
mod grid;
mod pulse;
mod spectrum;

pub use detect::{first_crossing, peak_time, threshold_crossings, CrossingPair};
pub use grid::{write_columns_csv, SampledSignal, TimeGrid};
pub use pulse::{sample_input, InputPulseSpec};
pub use spectrum::rms_bandwidth;
