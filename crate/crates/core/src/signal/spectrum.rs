use std::f64::consts::PI;

use num_complex::Complex64;
use rustfft::FftPlanner;

use super::grid::SampledSignal;
use crate::error::{Error, Result};

/// RMS frequency spread `sqrt(<w^2> - <w>^2)` of the one-sided power spectrum,
/// in rad/s.
///
/// Moments are trapezoid sums over the DFT bins `w_k = 2 pi k / (n dt)`,
/// `0 <= k <= n/2`, with half weight on the DC and Nyquist bins. The first
/// moment carries the leading endpoint correction at `w = 0`.
pub fn rms_bandwidth(signal: &SampledSignal) -> Result<f64> {
    if signal.is_all_zero() {
        return Err(Error::AllZero);
    }
    let n = signal.len();
    let mut buf: Vec<Complex64> = signal
        .values()
        .iter()
        .map(|&v| Complex64::new(v, 0.0))
        .collect();
    FftPlanner::new().plan_fft_forward(n).process(&mut buf);

    let d_omega = 2.0 * PI / (n as f64 * signal.grid().dt());
    let half = n / 2;
    let (mut m0, mut m1, mut m2) = (0.0, 0.0, 0.0);
    for (k, x) in buf.iter().take(half + 1).enumerate() {
        let w = if k == 0 || (n.is_multiple_of(2) && k == half) {
            0.5
        } else {
            1.0
        };
        let p = w * x.norm_sqr();
        let omega = k as f64 * d_omega;
        m0 += p;
        m1 += p * omega;
        m2 += p * omega * omega;
    }
    // w P(w) has a nonzero slope P(0) at the DC end; Euler-Maclaurin endpoint term
    m1 += d_omega / 12.0 * buf[0].norm_sqr();
    let mean = m1 / m0;
    Ok((m2 / m0 - mean * mean).max(0.0).sqrt())
}
