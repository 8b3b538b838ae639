//! Derives every hidden model parameter from published observables and
//! records the derivation, so that downstream targets trace to measured
//! numbers.
//!
//! Stages are deterministic: closed forms where they exist, otherwise
//! bracketed grid-plus-bisection solves on monotone forward models.

use crate::cavity::{enhanced_rates, BranchingModel, CavityParams};
use crate::coherence::{
    dd_scan, filter_chi, NoiseModel, SequenceSpec, Sinusoid,
};
use crate::coherence::{auto_grids, decay_time_grid, fit_decay_time};
use crate::error::{Error, Result};
use crate::fitting::fit_stretched_exp;
use crate::levels::{build_level_scheme, LevelCoefficients, LevelScheme, SpinProjection};
use crate::pumping::{red_sequence, run, PopulationVector, PumpContext};
use crate::readout::{analytic_distributions, optimize, ReadoutConfig};
use serde::Serialize;
use std::collections::BTreeMap;

/// One derived parameter with its provenance.
#[derive(Debug, Clone, Serialize)]
pub struct Derived {
    pub value: f64,
    pub note: String,
    pub inputs: Vec<String>,
}

/// One verified target.
#[derive(Debug, Clone, Serialize)]
pub struct TargetCheck {
    pub name: String,
    pub target: f64,
    pub achieved: f64,
    pub tolerance: f64,
    pub pass: bool,
}

impl TargetCheck {
    fn new(name: &str, target: f64, achieved: f64, tolerance: f64) -> Self {
        TargetCheck {
            name: name.to_string(),
            target,
            achieved,
            tolerance,
            pass: (achieved - target).abs() <= tolerance,
        }
    }
}

/// Serializable calibration record: derived parameters plus target checks.
#[derive(Debug, Clone, Default, Serialize)]
pub struct CalibrationReport {
    pub derived: BTreeMap<String, Derived>,
    pub targets_met: Vec<TargetCheck>,
}

impl CalibrationReport {
    pub fn insert(&mut self, name: &str, value: f64, note: &str, inputs: &[&str]) {
        self.derived.insert(
            name.to_string(),
            Derived {
                value,
                note: note.to_string(),
                inputs: inputs.iter().map(|s| s.to_string()).collect(),
            },
        );
    }

    pub fn all_passed(&self) -> bool {
        self.targets_met.iter().all(|t| t.pass)
    }
}

fn bisect<F: FnMut(f64) -> Result<f64>>(
    mut f: F,
    target: f64,
    grid: &[f64],
    iters: usize,
) -> Result<f64> {
    // Grid points where the forward model fails are skipped; a usable
    // bracket only needs two adjacent valid values straddling the target.
    let vals: Vec<Option<f64>> = grid.iter().map(|&g| f(g).ok()).collect();
    let mut bracket = None;
    for i in 0..grid.len() - 1 {
        if let (Some(a), Some(b)) = (vals[i], vals[i + 1]) {
            if (a - target) * (b - target) <= 0.0 {
                bracket = Some((grid[i], grid[i + 1], a));
                break;
            }
        }
    }
    let Some((mut lo, mut hi, flo)) = bracket else {
        // No crossing: return the valid grid point nearest the target.
        let best = grid
            .iter()
            .zip(&vals)
            .filter_map(|(g, v)| v.map(|v| (g, v)))
            .min_by(|a, b| (a.1 - target).abs().total_cmp(&(b.1 - target).abs()))
            .ok_or_else(|| {
                Error::Infeasible("forward model failed on the entire grid".into())
            })?;
        return Ok(*best.0);
    };
    let rising = flo < target;
    for _ in 0..iters {
        let mid = 0.5 * (lo + hi);
        let Ok(fm) = f(mid) else { break };
        if (fm < target) == rising {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

fn geomspace(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| lo * (hi / lo).powf(i as f64 / (n - 1) as f64))
        .collect()
}

// ---------------------------------------------------------------------------
// Readout calibration

/// Published observables the readout calibration consumes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ReadoutObservables {
    pub bright_mean: f64,
    pub dark_mean: f64,
    pub detection_efficiency: f64,
    pub dark_rate_hz: f64,
    pub n_pulses: usize,
}

impl Default for ReadoutObservables {
    fn default() -> Self {
        ReadoutObservables {
            bright_mean: 10.69,
            dark_mean: 2.356,
            detection_efficiency: 0.11,
            dark_rate_hz: 43.9,
            n_pulses: 110,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct ReadoutCalibration {
    pub detection_window_us: f64,
    pub excitation_prob: f64,
    /// Largest flip probability keeping the bright mean within its quoted
    /// uncertainty at fixed excitation probability.
    pub flip_prob_bound: f64,
    pub config: ReadoutConfig,
    pub report: CalibrationReport,
}

/// Derive the detection window from the dark-state mean, then solve the
/// excitation probability from the bright mean at the given flip
/// probability, and bound the flip probability by the bright-mean
/// uncertainty.
pub fn calibrate_readout(
    obs: &ReadoutObservables,
    flip_prob: f64,
) -> Result<ReadoutCalibration> {
    if obs.dark_rate_hz <= 0.0 || obs.dark_mean <= 0.0 {
        return Err(Error::Infeasible(
            "dark rate and dark mean must be positive to fix the detection window".into(),
        ));
    }
    if obs.bright_mean <= obs.dark_mean {
        return Err(Error::Infeasible(
            "bright mean must exceed the dark-count contribution".into(),
        ));
    }
    let window_us = obs.dark_mean / (obs.n_pulses as f64 * obs.dark_rate_hz) * 1e6;
    let base = ReadoutConfig {
        n_pulses: obs.n_pulses,
        detection_window_us: window_us,
        dark_rate_hz: obs.dark_rate_hz,
        detection_prob: obs.detection_efficiency,
        flip_prob,
        leakage_prob: 0.0,
        ..ReadoutConfig::default()
    };

    let mean_at = |p_exc: f64| -> Result<f64> {
        let cfg = ReadoutConfig {
            excitation_prob: p_exc,
            ..base
        };
        Ok(analytic_distributions(&cfg)?.0.mean())
    };
    if mean_at(1.0)? < obs.bright_mean {
        return Err(Error::Infeasible(format!(
            "bright mean {} unreachable even at unit excitation probability",
            obs.bright_mean
        )));
    }
    let excitation_prob = bisect(mean_at, obs.bright_mean, &geomspace(1e-3, 1.0, 12), 50)?;

    // Flip bound: largest ε that keeps the bright mean within ±0.05 at the
    // solved excitation probability.
    let mean_at_eps = |eps: f64| -> Result<f64> {
        let cfg = ReadoutConfig {
            excitation_prob,
            flip_prob: eps,
            ..base
        };
        Ok(analytic_distributions(&cfg)?.0.mean())
    };
    let m0 = mean_at_eps(0.0)?;
    let flip_prob_bound = bisect(
        |eps| Ok(m0 - mean_at_eps(eps)?),
        0.05,
        &geomspace(1e-6, 0.05, 12),
        50,
    )?;

    let config = ReadoutConfig {
        excitation_prob,
        ..base
    };
    let (bright, dark) = analytic_distributions(&config)?;
    let mut report = CalibrationReport::default();
    report.insert(
        "detection_window_us",
        window_us,
        "dark mean / (pulses x dark rate)",
        &["dark_mean", "dark_rate_hz", "n_pulses"],
    );
    report.insert(
        "excitation_prob",
        excitation_prob,
        "root of analytic bright mean",
        &["bright_mean", "detection_efficiency", "flip_prob"],
    );
    report.insert(
        "flip_prob_bound",
        flip_prob_bound,
        "largest flip probability keeping bright mean within 0.05",
        &["bright_mean uncertainty"],
    );
    report.targets_met.push(TargetCheck::new(
        "bright_mean",
        obs.bright_mean,
        bright.mean(),
        0.05,
    ));
    report.targets_met.push(TargetCheck::new(
        "dark_mean",
        obs.dark_mean,
        dark.mean(),
        0.024,
    ));
    Ok(ReadoutCalibration {
        detection_window_us: window_us,
        excitation_prob,
        flip_prob_bound,
        config,
        report,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SurfaceCalibration {
    /// Effective per-cycle bright-state loss reproducing the measured
    /// optimum location of the fidelity surface.
    pub flip_prob_effective: f64,
    pub excitation_prob: f64,
    pub argmax_pulses: usize,
    pub argmax_threshold: u32,
    pub config: ReadoutConfig,
    pub report: CalibrationReport,
}

/// Calibrate the effective bright-state attrition so the analytic
/// (pulse count, threshold) optimum lands at the measured location. The
/// excitation probability is re-solved at every candidate attrition to
/// hold the bright mean fixed.
pub fn calibrate_readout_surface(
    obs: &ReadoutObservables,
    target_pulses: usize,
    target_threshold: u32,
) -> Result<SurfaceCalibration> {
    let argmax_at = |eps: f64| -> Result<(usize, u32, ReadoutConfig)> {
        let cal = calibrate_readout(obs, eps)?;
        let (_, best) = optimize(&cal.config, 10..=200, 1..=10)?;
        Ok((best.n_pulses, best.threshold, cal.config))
    };
    let grid = geomspace(1.5e-3, 6e-3, 16);
    let mut best: Option<(f64, usize, u32, ReadoutConfig)> = None;
    for eps in grid {
        // Attrition values that push the bright mean out of reach are
        // simply outside the candidate set.
        let Ok((n, thr, cfg)) = argmax_at(eps) else {
            continue;
        };
        if thr != target_threshold {
            continue;
        }
        let dist = (n as i64 - target_pulses as i64).abs();
        let keep = match &best {
            None => true,
            Some((e, bn, _, _)) => {
                let bd = (*bn as i64 - target_pulses as i64).abs();
                dist < bd || (dist == bd && eps < *e)
            }
        };
        if keep {
            best = Some((eps, n, thr, cfg));
        }
    }
    let (eps, n, thr, config) = best.ok_or_else(|| {
        Error::Infeasible(format!(
            "no attrition in scan places the optimum at threshold {target_threshold}"
        ))
    })?;
    let mut report = CalibrationReport::default();
    report.insert(
        "flip_prob_effective",
        eps,
        "effective bright-state attrition placing the fidelity optimum",
        &["optimum location (pulses, threshold)"],
    );
    report.insert(
        "excitation_prob_surface",
        config.excitation_prob,
        "re-solved to hold the bright mean at the published value",
        &["bright_mean"],
    );
    report
        .targets_met
        .push(TargetCheck::new("argmax_pulses", target_pulses as f64, n as f64, 10.0));
    report.targets_met.push(TargetCheck::new(
        "argmax_threshold",
        target_threshold as f64,
        thr as f64,
        0.0,
    ));
    Ok(SurfaceCalibration {
        flip_prob_effective: eps,
        excitation_prob: config.excitation_prob,
        argmax_pulses: n,
        argmax_threshold: thr,
        config,
        report,
    })
}

// ---------------------------------------------------------------------------
// Branching / pumping calibration

#[derive(Debug, Clone, Serialize)]
pub struct BranchingCalibration {
    pub branching: BranchingModel,
    pub pump_excitation_prob: f64,
    pub achieved_fidelity: f64,
    /// Spin-flip probability per enhanced readout decay.
    pub readout_flip_prob: f64,
    pub report: CalibrationReport,
}

/// Fix the bulk branching from the enhanced-lifetime ratio, then search the
/// per-pulse pump excitation probability until the all-red sequence reaches
/// the target initialization fidelity at the stated repetition count.
pub fn calibrate_branching(
    target_fidelity: f64,
    repetitions: usize,
    cavity: &CavityParams,
    scheme: &LevelScheme,
    bulk_lifetime_ms: f64,
    enhanced_lifetime_ms: f64,
) -> Result<BranchingCalibration> {
    if !(0.0 < target_fidelity && target_fidelity < 1.0) {
        return Err(Error::Infeasible(format!(
            "initialization fidelity target {target_fidelity} not in (0,1); \
             unity is an asymptote of the pumping chain"
        )));
    }
    let ratio = bulk_lifetime_ms / enhanced_lifetime_ms;
    let branching = BranchingModel::from_lifetime_ratio(cavity, scheme, bulk_lifetime_ms, ratio)?;
    let table = crate::levels::list_transitions(scheme);
    let ctx = PumpContext::new(&table, cavity, &branching);

    let fidelity_at = |p_exc: f64| -> Result<f64> {
        let mut seq = red_sequence(&table, p_exc)?;
        seq.repetitions = repetitions;
        Ok(run(&PopulationVector::uniform(), &seq, &ctx).final_fidelity)
    };
    let max_f = fidelity_at(1.0)?;
    if max_f < target_fidelity {
        return Err(Error::Infeasible(format!(
            "target {target_fidelity} above achievable maximum {max_f} at {repetitions} repetitions"
        )));
    }
    let pump_excitation_prob = bisect(
        fidelity_at,
        target_fidelity,
        &geomspace(1e-4, 1.0, 14),
        60,
    )?;
    let achieved = fidelity_at(pump_excitation_prob)?;

    let readout_decay = enhanced_rates(SpinProjection::lowest(), &table, cavity, &branching);
    let mut report = CalibrationReport::default();
    report.insert(
        "branching_preserving",
        branching.preserving,
        "bulk preserving fraction from the enhanced-lifetime ratio",
        &["bulk_lifetime 11.4 ms", "enhanced_lifetime 0.12 ms", "peak Purcell"],
    );
    report.insert(
        "pump_excitation_prob",
        pump_excitation_prob,
        "root of the pumping chain fidelity at the stated repetitions",
        &["initialization fidelity", "repetitions"],
    );
    report.insert(
        "readout_flip_prob",
        readout_decay.flip_probability,
        "per-decay flip probability of the enhanced readout transition",
        &["branching", "cavity linewidth", "level offsets"],
    );
    report.targets_met.push(TargetCheck::new(
        "initialization_fidelity",
        target_fidelity,
        achieved,
        0.009,
    ));
    report.targets_met.push(TargetCheck::new(
        "enhanced_lifetime_ms",
        enhanced_lifetime_ms,
        readout_decay.lifetime_ms,
        5e-4,
    ));
    Ok(BranchingCalibration {
        branching,
        pump_excitation_prob,
        achieved_fidelity: achieved,
        readout_flip_prob: readout_decay.flip_probability,
        report,
    })
}

// ---------------------------------------------------------------------------
// Noise calibration

/// Coherence observables the noise calibration consumes.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct NoiseTargets {
    pub t2_star_s: f64,
    /// Stage target for the Hahn decay time (caption value).
    pub t_hahn_s: f64,
    /// Acceptance window for the Hahn time (text/caption discrepancy).
    pub t_hahn_window_s: (f64, f64),
    pub revival_s: f64,
    pub t_dd64_s: f64,
    pub dd_exponent: f64,
}

impl Default for NoiseTargets {
    fn default() -> Self {
        NoiseTargets {
            t2_star_s: 0.62e-3,
            t_hahn_s: 14.8e-3,
            t_hahn_window_s: (13.9e-3, 17.6e-3),
            revival_s: 30e-3,
            t_dd64_s: 0.28,
            dd_exponent: 0.82,
        }
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct NoiseCalibration {
    pub noise: NoiseModel,
    pub report: CalibrationReport,
}

pub(crate) fn hahn_coherence(noise: &NoiseModel, t: f64) -> Result<f64> {
    Ok(filter_chi(&SequenceSpec::hahn(t), noise)?.coherence())
}

/// Fitted Hahn decay time on an auto-bracketed grid.
fn hahn_decay_time(noise: &NoiseModel) -> Result<f64> {
    let forward = |t: f64| hahn_coherence(noise, t);
    let grid = decay_time_grid(&forward, 0.01, 48)?;
    let coh: Vec<f64> = grid
        .iter()
        .map(|&t| hahn_coherence(noise, t))
        .collect::<Result<_>>()?;
    let fit = fit_decay_time(&grid, &coh)?;
    if !fit.converged {
        return Err(Error::FitFailure("Hahn decay fit did not converge".into()));
    }
    Ok(fit.param("decay_time"))
}

/// Position and height of the Hahn-coherence revival: the local maximum
/// that follows the collapse dip near the tone's rephasing time.
pub fn hahn_revival(noise: &NoiseModel, kernel_zero_s: f64) -> Result<Option<(f64, f64)>> {
    let n = 301;
    let lo = 0.40 * kernel_zero_s;
    let hi = 1.45 * kernel_zero_s;
    let mut curve = Vec::with_capacity(n);
    for i in 0..n {
        let t = lo + (hi - lo) * i as f64 / (n - 1) as f64;
        curve.push((t, hahn_coherence(noise, t)?));
    }
    // First local minimum = the collapse dip.
    let mut i_dip = None;
    for i in 1..n - 1 {
        if curve[i].1 <= curve[i - 1].1 && curve[i].1 <= curve[i + 1].1 {
            i_dip = Some(i);
            break;
        }
    }
    let Some(i_dip) = i_dip else { return Ok(None) };
    let (mut best_i, mut best_c) = (i_dip, curve[i_dip].1);
    for (i, &(_, c)) in curve.iter().enumerate().skip(i_dip) {
        if c > best_c {
            best_c = c;
            best_i = i;
        }
    }
    // A revival must rebound measurably and peak inside the window.
    if best_i == i_dip || best_i == n - 1 || best_c < curve[i_dip].1 + 0.01 {
        return Ok(None);
    }
    Ok(Some(curve[best_i]))
}

/// Fitted Ramsey dephasing time with the full noise model.
fn ramsey_t2(noise: &NoiseModel) -> Result<f64> {
    let forward = |t: f64| Ok(filter_chi(&SequenceSpec::ramsey(t), noise)?.coherence());
    let grid = decay_time_grid(&forward, 5e-4, 48)?;
    let coh: Vec<f64> = grid
        .iter()
        .map(|&t| forward(t))
        .collect::<Result<_>>()?;
    let fit = fit_stretched_exp(&grid, &coh, None, None)?;
    if !fit.converged {
        return Err(Error::FitFailure("Ramsey fit did not converge".into()));
    }
    Ok(fit.param("decay_time"))
}

fn dd_summary(noise: &NoiseModel) -> Result<(f64, f64)> {
    let ns = [1usize, 2, 4, 8, 16, 32, 64];
    let grids = auto_grids(noise, &ns, 0.01, 40)?;
    let scan = dd_scan(noise, &ns, &grids)?;
    let t64 = scan
        .t_dd(64)
        .ok_or_else(|| Error::FitFailure("T_DD(64) fit failed".into()))?;
    let b = scan
        .exponent()
        .ok_or_else(|| Error::FitFailure("exponent fit failed".into()))?;
    Ok((b, t64))
}

/// Fractional linewidth of the calibrated bias-field tone.
pub const SINUSOID_JITTER: f64 = 0.05;

/// Staged noise calibration.
///
/// 1. OU magnitude from the quasi-static Ramsey relation σ = √2/T₂*.
/// 2. Tone frequency seeded from the echo-rephasing condition f₀ = 2/t_rev.
/// 3. Three rounds of bracketed 1-D solves: tone amplitude from the fitted
///    Hahn time, correlation time from the revival visibility, white floor
///    from T_DD(64); each round ends by re-centering f₀ so the observed
///    revival peak sits at its aim point.
/// 4. Verification of every target, recorded in the report.
pub fn calibrate_noise(targets: &NoiseTargets) -> Result<NoiseCalibration> {
    for v in [
        targets.t2_star_s,
        targets.t_hahn_s,
        targets.revival_s,
        targets.t_dd64_s,
        targets.dd_exponent,
    ] {
        if !(v > 0.0) {
            return Err(Error::Infeasible("all noise targets must be positive".into()));
        }
    }
    let sigma = std::f64::consts::SQRT_2 / targets.t2_star_s;

    // The bias-field line is modeled as a narrowband tone; a few-percent
    // linewidth matches a fluctuating field and keeps the decoupling
    // response free of pure-tone sidelobe ringing.
    let make = |a: f64, f0: f64, tau: f64, s0: f64| NoiseModel {
        ou_sigma_rad_s: sigma,
        ou_tau_s: tau,
        sinusoids: vec![Sinusoid {
            amplitude_rad_s: a,
            frequency_hz: f0,
            phase: None,
            frequency_jitter: SINUSOID_JITTER,
        }],
        white_floor: s0,
    };

    // Kernel-zero seed: the echo rephases where the tone's antisymmetric
    // kernel first vanishes, at 2/f₀. The decaying envelope pulls the
    // observed peak earlier, so f₀ is then refined until the detected
    // local maximum sits at the published revival time.
    let mut f0 = 2.0 / targets.revival_s;
    let mut amp;
    let mut tau = 12.0;
    let mut s0 = 4.0;
    // Aim the observed peak slightly past the nominal revival time: this
    // keeps the collapse maximum late enough that the fitted Hahn time
    // stays on the collapse-dominated branch.
    let peak_aim = 1.10 * targets.revival_s;
    for _round in 0..3 {
        // Sinusoid amplitude from the fitted Hahn decay time. Fits past
        // the collapse fold (shallow dips that never cross 1/e) come out
        // far too long and are rejected so the bracket stays on the
        // collapse-dominated branch; if the target exceeds the branch cap,
        // the solve settles at the cap, which still lies in the window.
        let deep_branch_fit = |noise: &NoiseModel| -> Result<f64> {
            let t = hahn_decay_time(noise)?;
            if t > 0.024 {
                return Err(Error::FitFailure("shallow-collapse branch".into()));
            }
            Ok(t)
        };
        amp = bisect(
            |a| deep_branch_fit(&make(a, f0, tau, s0)),
            targets.t_hahn_s,
            &geomspace(120.0, 400.0, 8),
            14,
        )?;
        // Correlation time from the revival visibility.
        tau = bisect(
            |tc| {
                hahn_revival(&make(amp, f0, tc, s0), 2.0 / f0)?
                    .map(|(_, height)| height)
                    .ok_or_else(|| Error::Infeasible("no revival visible in window".into()))
            },
            0.40,
            &geomspace(4.0, 45.0, 8),
            12,
        )?;
        s0 = bisect(
            |floor| Ok(dd_summary(&make(amp, f0, tau, floor))?.1),
            targets.t_dd64_s,
            &geomspace(0.4, 16.0, 7),
            12,
        )?;
        // Re-center the tone so the observed peak sits at the aim point
        // with the freshly solved envelope.
        for _ in 0..3 {
            let kernel_zero = 2.0 / f0;
            let Some((pos, _)) = hahn_revival(&make(amp, f0, tau, s0), kernel_zero)? else {
                break;
            };
            if (pos - peak_aim).abs() < 2e-4 {
                break;
            }
            f0 *= pos / peak_aim;
        }
    }
    // Final amplitude touch-up after the last environment change.
    amp = bisect(
        |a| {
            let t = hahn_decay_time(&make(a, f0, tau, s0))?;
            if t > 0.024 {
                return Err(Error::FitFailure("shallow-collapse branch".into()));
            }
            Ok(t)
        },
        targets.t_hahn_s,
        &geomspace(120.0, 400.0, 8),
        14,
    )?;
    let noise = make(amp, f0, tau, s0);

    // Verification pass.
    let t2 = ramsey_t2(&noise)?;
    let t_hahn = hahn_decay_time(&noise)?;
    let revival = hahn_revival(&noise, targets.revival_s)?;
    let (exponent, t64) = dd_summary(&noise)?;

    let mut report = CalibrationReport::default();
    report.insert(
        "ou_sigma_rad_s",
        sigma,
        "quasi-static Gaussian Ramsey decay: sigma = sqrt(2)/T2*",
        &["T2*"],
    );
    report.insert(
        "sinusoid_frequency_hz",
        f0,
        "echo rephasing: refined so the detected revival peak sits at the published time",
        &["revival time"],
    );
    report.insert(
        "sinusoid_amplitude_rad_s",
        amp,
        "1-D solve of the fitted Hahn time",
        &["T_Hahn"],
    );
    report.insert(
        "ou_tau_s",
        tau,
        "1-D solve of the revival visibility",
        &["revival height"],
    );
    report.insert(
        "white_floor",
        s0,
        "1-D solve of T_DD(64)",
        &["T_DD(64)"],
    );
    report
        .targets_met
        .push(TargetCheck::new("t2_star_s", targets.t2_star_s, t2, 0.06e-3));
    let hahn_mid = 0.5 * (targets.t_hahn_window_s.0 + targets.t_hahn_window_s.1);
    let hahn_half = 0.5 * (targets.t_hahn_window_s.1 - targets.t_hahn_window_s.0);
    report
        .targets_met
        .push(TargetCheck::new("t_hahn_s", hahn_mid, t_hahn, hahn_half));
    if let Some((pos, height)) = revival {
        report.targets_met.push(TargetCheck::new(
            "revival_position_s",
            targets.revival_s,
            pos,
            0.2 * targets.revival_s,
        ));
        report.insert(
            "revival_height",
            height,
            "Hahn coherence at the detected revival peak",
            &["calibrated noise"],
        );
    } else {
        report.targets_met.push(TargetCheck {
            name: "revival_position_s".into(),
            target: targets.revival_s,
            achieved: f64::NAN,
            tolerance: 0.2 * targets.revival_s,
            pass: false,
        });
    }
    report
        .targets_met
        .push(TargetCheck::new("t_dd64_s", targets.t_dd64_s, t64, 0.08));
    report.targets_met.push(TargetCheck::new(
        "dd_exponent",
        targets.dd_exponent,
        exponent,
        0.05,
    ));
    Ok(NoiseCalibration { noise, report })
}

// ---------------------------------------------------------------------------
// Bundled calibration

/// Everything the simulator needs, derived from published observables.
#[derive(Debug, Clone, Serialize)]
pub struct Calibrated {
    pub readout: ReadoutCalibration,
    pub surface: SurfaceCalibration,
    pub branching: BranchingCalibration,
    pub noise: NoiseCalibration,
    pub report: CalibrationReport,
}

/// Run every calibration stage with the default observables. The readout
/// flip probability is the cavity-derived per-decay value, so the fast
/// stages chain: branching → readout → surface.
pub fn calibrate_all(scheme: &LevelScheme, cavity: &CavityParams) -> Result<Calibrated> {
    let branching = calibrate_branching(0.973, 500, cavity, scheme, 11.4, 0.12)?;
    let readout = calibrate_readout(&ReadoutObservables::default(), branching.readout_flip_prob)?;
    let surface = calibrate_readout_surface(&ReadoutObservables::default(), 110, 5)?;
    let noise = calibrate_noise(&NoiseTargets::default())?;

    let mut report = CalibrationReport::default();
    for (prefix, sub) in [
        ("branching", &branching.report),
        ("readout", &readout.report),
        ("surface", &surface.report),
        ("noise", &noise.report),
    ] {
        for (k, v) in &sub.derived {
            report.derived.insert(format!("{prefix}.{k}"), v.clone());
        }
        for t in &sub.targets_met {
            let mut t = t.clone();
            t.name = format!("{prefix}.{}", t.name);
            report.targets_met.push(t);
        }
    }
    Ok(Calibrated {
        readout,
        surface,
        branching,
        noise,
        report,
    })
}

/// Fast calibration bundle without the noise stage (used by subcommands
/// that only need readout and pumping parameters).
pub fn calibrate_fast(scheme: &LevelScheme, cavity: &CavityParams) -> Result<(BranchingCalibration, ReadoutCalibration)> {
    let branching = calibrate_branching(0.973, 500, cavity, scheme, 11.4, 0.12)?;
    let readout = calibrate_readout(&ReadoutObservables::default(), branching.readout_flip_prob)?;
    Ok((branching, readout))
}

/// Default level scheme and cavity for calibration entry points.
pub fn default_system() -> Result<(LevelScheme, CavityParams)> {
    let scheme = build_level_scheme(&LevelCoefficients::default())?;
    Ok((scheme, CavityParams::default()))
}
