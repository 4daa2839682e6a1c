#![allow(dead_code)]

use std::f64::consts::PI;

use ngdlab::amplifier::{transfer_function, AmplifierParams};
use ngdlab::signal::SampledSignal;
use num_complex::Complex64;
use rustfft::FftPlanner;

/// Output of the amplifier computed in the frequency domain: zero-pad the
/// samples by `pad` seconds, multiply each bin by `H`, transform back.
///
/// rustfft's forward kernel `exp(-i w t)` is the one used for `H`, so bin `k`
/// is scaled by `H(w_k)` at its signed frequency.
pub fn spectral_output(v_in: &SampledSignal, p: &AmplifierParams, pad: f64) -> Vec<f64> {
    let n = v_in.len();
    let dt = v_in.grid().dt();
    let total = (n + (pad / dt).ceil() as usize).next_power_of_two();
    let mut buf = vec![Complex64::new(0.0, 0.0); total];
    for (b, &v) in buf.iter_mut().zip(v_in.values()) {
        b.re = v;
    }
    let mut planner = FftPlanner::new();
    planner.plan_fft_forward(total).process(&mut buf);
    let d_omega = 2.0 * PI / (total as f64 * dt);
    for (k, b) in buf.iter_mut().enumerate() {
        let signed = if k <= total / 2 {
            k as f64
        } else {
            k as f64 - total as f64
        };
        *b *= transfer_function(signed * d_omega, p).h;
    }
    planner.plan_fft_inverse(total).process(&mut buf);
    buf.iter().take(n).map(|c| c.re / total as f64).collect()
}

pub fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Adaptive Simpson quadrature.
pub fn integrate(f: &dyn Fn(f64) -> f64, a: f64, b: f64, tol: f64) -> f64 {
    fn simpson(f: &dyn Fn(f64) -> f64, a: f64, fa: f64, b: f64, fb: f64) -> (f64, f64, f64) {
        let m = 0.5 * (a + b);
        let fm = f(m);
        (m, fm, (b - a) / 6.0 * (fa + 4.0 * fm + fb))
    }
    #[allow(clippy::too_many_arguments)]
    fn rec(
        f: &dyn Fn(f64) -> f64,
        a: f64,
        fa: f64,
        b: f64,
        fb: f64,
        m: f64,
        fm: f64,
        whole: f64,
        tol: f64,
        depth: u32,
    ) -> f64 {
        let (lm, flm, left) = simpson(f, a, fa, m, fm);
        let (rm, frm, right) = simpson(f, m, fm, b, fb);
        let delta = left + right - whole;
        if depth == 0 || delta.abs() <= 15.0 * tol {
            return left + right + delta / 15.0;
        }
        rec(f, a, fa, m, fm, lm, flm, left, 0.5 * tol, depth - 1)
            + rec(f, m, fm, b, fb, rm, frm, right, 0.5 * tol, depth - 1)
    }
    let (fa, fb) = (f(a), f(b));
    let (m, fm, whole) = simpson(f, a, fa, b, fb);
    rec(f, a, fa, b, fb, m, fm, whole, tol, 30)
}

/// Fourier transform of `cos^2(pi t / 2 tf)` on `|t| < tf`:
/// `a^2 sin(w tf) / (w (a^2 - w^2))` with `a = pi / tf`.
pub fn pulse_spectrum(omega: f64, tf: f64) -> f64 {
    let a = PI / tf;
    if omega.abs() < 1e-9 * a {
        return tf;
    }
    if (omega.abs() - a).abs() < 1e-6 * a {
        return 0.5 * tf;
    }
    a * a * (omega * tf).sin() / (omega * (a * a - omega * omega))
}

/// RMS spread of the one-sided power spectrum `|V(w)|^2` of the `cos^2` pulse,
/// by quadrature of the analytic spectrum lobe by lobe. `<w^2>` is closed form.
pub fn pulse_rms_bandwidth(tf: f64) -> f64 {
    let a = PI / tf;
    let lobes = 4000;
    let mut m1 = 0.0;
    for k in 0..lobes {
        let (lo, hi) = (k as f64 * a, (k + 1) as f64 * a);
        let f = |w: f64| w * pulse_spectrum(w, tf).powi(2);
        m1 += integrate(&f, lo, hi, 1e-13);
    }
    // mean of sin^2 over the tail: a^4 / (2 w^5)
    let w_end = lobes as f64 * a;
    m1 += a.powi(4) / (8.0 * w_end.powi(4));
    // Parseval: integral_0^inf |V|^2 = pi * integral V^2 dt = 3 pi tf / 4
    let m0 = 0.75 * PI * tf;
    let mean = m1 / m0;
    let mean_sq = a * a / 3.0;
    (mean_sq - mean * mean).sqrt()
}

/// First rising crossing of level `s` (relative to `v0`) of the `cos^2` pulse.
pub fn pulse_crossing(s: f64, tf: f64) -> f64 {
    -tf + 2.0 * tf / PI * s.sqrt().asin()
}

/// `-d arg H / d omega` from the closed-form derivative of `H`.
pub fn analytic_group_delay(omega: f64, p: &AmplifierParams) -> f64 {
    let s = Complex64::new(p.gamma, omega);
    let d = s * s + p.omega_r * p.omega_r;
    let i = Complex64::i();
    let dh = p.g0 * p.gamma * i * (d - (s + p.gamma) * 2.0 * s) / (d * d);
    let h = transfer_function(omega, p).h;
    -(dh / h).im
}
