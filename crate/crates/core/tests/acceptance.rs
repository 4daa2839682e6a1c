//! Acceptance suite. Every criterion prints one `PASS` or `FAIL` line; the
//! process exits non-zero if any criterion fails.

mod common;

use std::f64::consts::PI;
use std::process::ExitCode;
use std::time::{Duration, Instant};

use ngdlab::amplifier::{green_prime, open_loop_output, AmplifierParams, OmegaUnits};
use ngdlab::analysis::{
    detection_sweep, envelope_decay_rate, front_estimate, kk_residual, measure_group_delay,
};
use ngdlab::feedback::{
    peak_causality_probe, picard_solve, solve_feedback, verify_self_consistency, FeedbackConfig,
    FeedbackSolution,
};
use ngdlab::signal::{peak_time, sample_input, InputPulseSpec, SampledSignal, TimeGrid};

use common::{max_abs_diff, spectral_output};

const T0: f64 = 2.94e-3;
const GAMMA: f64 = 15.0;
const OMEGA_R: f64 = 51.0;
const TF: f64 = 0.041;
const DT: f64 = 1e-5;

const TG_TARGET: f64 = -3.7e-3;
const TG_REL_TOL: f64 = 0.10;
const TG_DEGRADED: (f64, f64) = (1e-3, 10e-3);
const RUNTIME_LIMIT: Duration = Duration::from_secs(5);
const T2_TARGET: f64 = -1.5e-3;
const T2_TOL: f64 = 0.3e-3;
const DECAY_REL_TOL: f64 = 0.20;
const RESIDUAL_TOL: f64 = 1e-6;
const PICARD_TOL: f64 = 1e-5;
const CAUSAL_TOL: f64 = 1e-9;
const ORACLE_TOL: f64 = 1e-4;
const CONVERGENCE_REL: f64 = 0.02;
const FRONT_REL: f64 = 0.02;
const FRONT_MIN_THRESHOLD: f64 = 1e-4;
const KK_TOL: f64 = 0.05;

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
}

fn pulse() -> InputPulseSpec {
    InputPulseSpec::new(1.0, TF, 0.0).unwrap()
}

fn amp(units: OmegaUnits) -> AmplifierParams {
    AmplifierParams::calibrated(GAMMA, OMEGA_R, units, T0).unwrap()
}

fn open_loop_tg(units: OmegaUnits, dt: f64) -> f64 {
    let spec = pulse();
    let v_in = sample_input(&spec, &spec.default_grid(dt).unwrap());
    let v_out = open_loop_output(&v_in, &amp(units)).unwrap();
    measure_group_delay(&v_in, &v_out).unwrap().t_g
}

fn reference_solution(dt: f64) -> (FeedbackConfig, FeedbackSolution) {
    let cfg = FeedbackConfig::reference(dt).unwrap();
    let sol = solve_feedback(&cfg).unwrap();
    (cfg, sol)
}

fn max_before(signal: &SampledSignal, t: f64) -> f64 {
    let grid = signal.grid();
    signal
        .values()
        .iter()
        .enumerate()
        .filter(|(i, _)| grid.time(*i) < t)
        .fold(0.0, |m, (_, v)| m.max(v.abs()))
}

fn within_tg(tg: f64) -> bool {
    ((tg - TG_TARGET) / TG_TARGET).abs() <= TG_REL_TOL
}

fn criterion_1() -> Verdict {
    let shipped = AmplifierParams::reference().omega_r_units;
    let start = Instant::now();
    let spec = pulse();
    let grid = spec.default_grid(DT).unwrap();
    let v_in = sample_input(&spec, &grid);
    let v_out = open_loop_output(&v_in, &amp(shipped)).unwrap();
    let tg = measure_group_delay(&v_in, &v_out).unwrap().t_g;
    let elapsed = start.elapsed();

    let other = match shipped {
        OmegaUnits::Angular => OmegaUnits::Cyclic,
        OmegaUnits::Cyclic => OmegaUnits::Angular,
    };
    let tg_other = open_loop_tg(other, DT);
    let strict = within_tg(tg);
    let degraded =
        !within_tg(tg_other) && tg < 0.0 && (TG_DEGRADED.0..=TG_DEGRADED.1).contains(&-tg);
    let fast = elapsed < RUNTIME_LIMIT;
    let clause = if strict { "strict" } else { "degraded" };
    verdict(
        (strict || degraded) && fast,
        format!(
            "t_g = {:.4} ms ({shipped}), {:.4} ms ({other}); target {:.1} ms +/-{:.0}%; {clause} clause; \
             span {:.3} s, {} samples in {:.2} s",
            tg * 1e3,
            tg_other * 1e3,
            TG_TARGET * 1e3,
            TG_REL_TOL * 100.0,
            grid.t_end() - grid.t_start(),
            grid.len(),
            elapsed.as_secs_f64()
        ),
    )
}

fn criterion_2(sol: &FeedbackSolution) -> Verdict {
    let Some(c) = sol.trigger.crossings() else {
        return verdict(false, "detector never fired".into());
    };
    let t2_ok = (c.t2 - T2_TARGET).abs() <= T2_TOL;
    let cut_before_peak = c.t2 < 0.0;
    let rate = envelope_decay_rate(&sol.v, c.t2).unwrap_or(f64::NAN);
    let rate_ok = ((rate - GAMMA) / GAMMA).abs() <= DECAY_REL_TOL;
    verdict(
        t2_ok && cut_before_peak && rate_ok,
        format!(
            "t2 = {:.4} ms (target {:.1} +/- {:.1} ms, off by {:.4} ms); decay rate {:.3} 1/s \
             (target {GAMMA} +/-{:.0}%)",
            c.t2 * 1e3,
            T2_TARGET * 1e3,
            T2_TOL * 1e3,
            ((c.t2 - T2_TARGET).abs() - T2_TOL).max(0.0) * 1e3,
            rate,
            DECAY_REL_TOL * 100.0
        ),
    )
}

fn criterion_3(cfg: &FeedbackConfig, sol: &FeedbackSolution) -> Verdict {
    let mut worst: f64 = 0.0;
    for s0 in [1.02, 1.05, 1.12, 1.2, 50.0] {
        let c = cfg.with_threshold(s0).unwrap();
        let s = solve_feedback(&c).unwrap();
        let defect = verify_self_consistency(&s, &c).unwrap();
        worst = worst.max(s.residual).max(defect);
    }
    let picard = picard_solve(cfg, 50, 1e-13).unwrap();
    let gap = max_abs_diff(picard.v.values(), sol.v.values());
    let same_trigger = match (picard.trigger.crossings(), sol.trigger.crossings()) {
        (Some(a), Some(b)) => (a.t2 - b.t2).abs() <= cfg.grid.dt(),
        (None, None) => true,
        _ => false,
    };
    verdict(
        worst < RESIDUAL_TOL && picard.converged && gap < PICARD_TOL && same_trigger,
        format!(
            "max residual {worst:.3e} (< {RESIDUAL_TOL:e}); Picard {} iterations, gap {gap:.3e} (< {PICARD_TOL:e})",
            picard.iterations
        ),
    )
}

fn criterion_4(cfg: &FeedbackConfig) -> Verdict {
    let front = cfg.pulse.front();
    let mut worst: f64 = 0.0;
    let mut peaks_after_front = true;
    for s0 in [1.05, 1.12, 50.0] {
        let sol = solve_feedback(&cfg.with_threshold(s0).unwrap()).unwrap();
        worst = worst
            .max(max_before(&sol.v, front))
            .max(max_before(&sol.v_open, front));
        peaks_after_front &= peak_time(&sol.v_open).unwrap() > front;
    }
    for units in [OmegaUnits::Angular, OmegaUnits::Cyclic] {
        for (tf, omega_c) in [(TF, 0.0), (0.02, 0.0), (TF, 2.0 * PI * 30.0)] {
            let spec = InputPulseSpec::new(1.0, tf, omega_c).unwrap();
            let v_in = sample_input(&spec, &spec.default_grid(DT).unwrap());
            let out = open_loop_output(&v_in, &amp(units)).unwrap();
            worst = worst.max(max_before(&out, -tf));
            peaks_after_front &= peak_time(&out).unwrap() > -tf;
        }
    }
    let p = AmplifierParams::reference();
    let retarded = [-f64::MIN_POSITIVE, -1e-12, -DT, -1e-3, -TF, -1.0, -1e6]
        .iter()
        .all(|&t| green_prime(t, &p).to_bits() == 0.0_f64.to_bits());
    verdict(
        worst <= CAUSAL_TOL && peaks_after_front && retarded,
        format!(
            "max |V| before front {worst:.3e} (<= {CAUSAL_TOL:e}); output peaks after front: {peaks_after_front}; \
             G'(t<0) == 0: {retarded}"
        ),
    )
}

fn criterion_5() -> Verdict {
    let p = AmplifierParams::reference();
    let grid = TimeGrid::spanning(-0.1, 0.5, DT).unwrap();
    let mut errors = Vec::new();
    for (tf, omega_c) in [(TF, 0.0), (0.02, 0.0), (TF, 2.0 * PI * 30.0)] {
        let v_in = sample_input(&InputPulseSpec::new(1.0, tf, omega_c).unwrap(), &grid);
        let direct = open_loop_output(&v_in, &p).unwrap();
        errors.push(max_abs_diff(
            direct.values(),
            &spectral_output(&v_in, &p, 2.0),
        ));
    }
    let worst = errors.iter().cloned().fold(0.0, f64::max);
    verdict(
        worst < ORACLE_TOL,
        format!(
            "max-norm gaps {:.3e} / {:.3e} / {:.3e} (< {ORACLE_TOL:e})",
            errors[0], errors[1], errors[2]
        ),
    )
}

fn criterion_6(sol: &FeedbackSolution) -> Verdict {
    let shipped = AmplifierParams::reference().omega_r_units;
    let tg = open_loop_tg(shipped, DT);
    let tg_half = open_loop_tg(shipped, DT / 2.0);
    let (_, fine) = reference_solution(DT / 2.0);
    let (Some(a), Some(b)) = (sol.trigger.cutoff(), fine.trigger.cutoff()) else {
        return verdict(false, "detector did not fire on both grids".into());
    };
    let d_tg = ((tg_half - tg) / tg).abs();
    let d_t2 = ((b - a) / a).abs();
    verdict(
        d_tg < CONVERGENCE_REL && d_t2 < CONVERGENCE_REL,
        format!(
            "t_g change {:.3e}, t2 change {:.3e} (< {CONVERGENCE_REL})",
            d_tg, d_t2
        ),
    )
}

fn criterion_7(cfg: &FeedbackConfig, sol: &FeedbackSolution) -> Verdict {
    let Some(t2) = sol.trigger.cutoff() else {
        return verdict(false, "detector never fired".into());
    };
    let at_t2 = peak_causality_probe(cfg, t2).unwrap();
    let at_front = peak_causality_probe(cfg, cfg.pulse.front()).unwrap();
    let pass = t2 < 0.0
        && at_t2.output_peak_survives
        && !at_front.output_peak_survives
        && at_front.max_output == 0.0;
    verdict(
        pass,
        format!(
            "cut at t2 = {:.4} ms: max output {:.4} vs s0 {}; cut at -T_f: max output {:e}",
            t2 * 1e3,
            at_t2.max_output,
            cfg.s0,
            at_front.max_output
        ),
    )
}

fn criterion_8() -> Verdict {
    let spec = pulse();
    let v = sample_input(&spec, &spec.default_grid(DT).unwrap());
    let thresholds: Vec<f64> = (1..)
        .map(|n| 0.5_f64.powi(n))
        .take_while(|s| *s >= 0.5 * FRONT_MIN_THRESHOLD)
        .collect();
    let series = detection_sweep(&v, &thresholds, spec.front()).unwrap();
    let est = front_estimate(&series).unwrap();
    let rel = ((est - spec.front()) / spec.front()).abs();
    verdict(
        rel <= FRONT_REL && *thresholds.last().unwrap() <= FRONT_MIN_THRESHOLD,
        format!(
            "front estimate {:.5} ms vs {:.1} ms, error {:.3e} (<= {FRONT_REL}); smallest threshold {:.2e}",
            est * 1e3,
            spec.front() * 1e3,
            rel,
            thresholds.last().unwrap()
        ),
    )
}

fn criterion_9() -> Verdict {
    let p = AmplifierParams::reference();
    let spacing = p.gamma / 4.0;
    let factors = [12.5, 25.0, 50.0, 100.0];
    let residuals: Vec<f64> = factors
        .iter()
        .map(|k| {
            let w = k * p.omega_r;
            kk_residual(&p, w, (2.0 * w / spacing) as usize + 1).unwrap()
        })
        .collect();
    let last = *residuals.last().unwrap();
    let monotone = residuals.windows(2).all(|r| r[1] <= r[0]);
    let listing: Vec<String> = factors
        .iter()
        .zip(&residuals)
        .map(|(k, r)| format!("{k}w_r: {r:.3e}"))
        .collect();
    verdict(
        last < KK_TOL && monotone,
        format!(
            "{} (< {KK_TOL} at 100 w_r, non-increasing: {monotone})",
            listing.join(", ")
        ),
    )
}

fn main() -> ExitCode {
    let (cfg, sol) = reference_solution(DT);
    let verdicts: Vec<(&str, Verdict)> = vec![
        ("1 open-loop group delay", criterion_1()),
        ("2 feedback trigger and ringing", criterion_2(&sol)),
        ("3 self-consistency", criterion_3(&cfg, &sol)),
        ("4 causality", criterion_4(&cfg)),
        ("5 spectral oracle", criterion_5()),
        ("6 grid convergence", criterion_6(&sol)),
        ("7 peak causality probe", criterion_7(&cfg, &sol)),
        ("8 front extrapolation", criterion_8()),
        ("9 Kramers-Kronig", criterion_9()),
    ];
    let mut failed = 0;
    for (name, v) in &verdicts {
        println!(
            "{} criterion {name}: {}",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail
        );
        failed += usize::from(!v.pass);
    }
    println!(
        "acceptance: {} passed, {failed} failed",
        verdicts.len() - failed
    );
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
