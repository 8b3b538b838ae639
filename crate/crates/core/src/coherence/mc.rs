//! Trajectory Monte Carlo of the dephasing sequences.
//!
//! The OU process is sampled exactly per toggling segment: the pair
//! (X_end, ∫X dt) conditioned on the segment's initial value is jointly
//! Gaussian with moments known in closed form, so no fine time grid is
//! needed and the estimate carries no discretization bias. Trajectories run
//! on index-derived streams and are reduced in index order, which keeps the
//! result independent of the thread count.

use super::filter::y_real_part;
use super::{NoiseModel, PulseAxis, SequenceKind, SequenceSpec};
use crate::error::Result;
use crate::rng::StreamRng;
use rayon::prelude::*;
use serde::Serialize;

/// Optional per-pulse area-error model for the π pulses.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PulseError {
    /// Relative standard deviation of the pulse area.
    pub area_sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct McEstimate {
    pub coherence: f64,
    pub std_error: f64,
    pub n_trajectories: usize,
}

/// Exact OU segment update: returns (X_end, ∫X dt) given X at the segment
/// start.
fn ou_segment(
    x0: f64,
    h: f64,
    sigma: f64,
    tau: f64,
    rng: &mut StreamRng,
) -> (f64, f64) {
    let theta = 1.0 / tau;
    let x = theta * h;
    let em1 = (-x).exp_m1(); // e^{-x} - 1
    let e2m1 = (-2.0 * x).exp_m1();
    let s2 = sigma * sigma;

    let mu_x = x0 * (1.0 + em1);
    let mu_i = -x0 * em1 / theta;
    let vxx = -s2 * e2m1;
    let vxi = s2 / theta * em1 * em1;
    // 2x − 3 + 4e^{−x} − e^{−2x}: series below x = 0.02 to dodge
    // catastrophic cancellation.
    let core = if x < 0.02 {
        (2.0 / 3.0) * x.powi(3) - 0.5 * x.powi(4) + (7.0 / 30.0) * x.powi(5)
    } else {
        2.0 * x - 3.0 + 4.0 * (1.0 + em1) - (1.0 + e2m1)
    };
    let vii = s2 / (theta * theta) * core;

    let z1 = rng.normal();
    let z2 = rng.normal();
    let x_end = mu_x + vxx.max(0.0).sqrt() * z1;
    let integral = if vxx > 0.0 {
        let cond_var = (vii - vxi * vxi / vxx).max(0.0);
        mu_i + vxi / vxx * (x_end - mu_x) + cond_var.sqrt() * z2
    } else {
        mu_i
    };
    (x_end, integral)
}

fn trajectory_phase_toggled(
    seq: &SequenceSpec,
    noise: &NoiseModel,
    rng: &mut StreamRng,
) -> f64 {
    let mut phase = 0.0;
    if noise.ou_sigma_rad_s > 0.0 {
        let mut x = noise.ou_sigma_rad_s * rng.normal();
        for &(a, b, y) in &seq.segments() {
            let (x_end, integral) =
                ou_segment(x, b - a, noise.ou_sigma_rad_s, noise.ou_tau_s, rng);
            phase += y * integral;
            x = x_end;
        }
    }
    if noise.white_floor > 0.0 {
        phase += (noise.white_floor * seq.total_time_s).sqrt() * rng.normal();
    }
    for s in &noise.sinusoids {
        if s.amplitude_rad_s == 0.0 {
            continue;
        }
        let omega0 = sample_sinusoid_frequency(s, rng);
        let phi0 = match s.phase {
            Some(p) => p,
            None => std::f64::consts::TAU * rng.uniform(),
        };
        phase += s.amplitude_rad_s * y_real_part(&seq.segments(), omega0, phi0);
    }
    phase
}

/// Tone frequency of one shot: uniform over ω₀·(1 ± jitter).
fn sample_sinusoid_frequency(s: &super::Sinusoid, rng: &mut StreamRng) -> f64 {
    let omega0 = 2.0 * std::f64::consts::PI * s.frequency_hz;
    if s.frequency_jitter > 0.0 {
        omega0 * (1.0 + s.frequency_jitter * (2.0 * rng.uniform() - 1.0))
    } else {
        omega0
    }
}

fn rotate_z(v: &mut [f64; 3], angle: f64) {
    let (s, c) = angle.sin_cos();
    let (x, y) = (v[0], v[1]);
    v[0] = c * x - s * y;
    v[1] = s * x + c * y;
}

fn rotate_axis(v: &mut [f64; 3], axis: PulseAxis, angle: f64) {
    let (s, c) = angle.sin_cos();
    match axis {
        PulseAxis::X => {
            let (y, z) = (v[1], v[2]);
            v[1] = c * y - s * z;
            v[2] = s * y + c * z;
        }
        PulseAxis::Y => {
            let (x, z) = (v[0], v[2]);
            v[0] = c * x + s * z;
            v[2] = -s * x + c * z;
        }
    }
}

/// Bloch-vector trajectory with explicit (possibly imperfect) π pulses.
fn trajectory_bloch(
    seq: &SequenceSpec,
    noise: &NoiseModel,
    error: &PulseError,
    rng: &mut StreamRng,
    reference: &[f64; 3],
) -> f64 {
    let segments = seq.segments();
    let axes = seq.pulse_axes();
    // Per-segment untoggled phase integrals.
    let mut seg_phases = vec![0.0; segments.len()];
    if noise.ou_sigma_rad_s > 0.0 {
        let mut x = noise.ou_sigma_rad_s * rng.normal();
        for (k, &(a, b, _)) in segments.iter().enumerate() {
            let (x_end, integral) =
                ou_segment(x, b - a, noise.ou_sigma_rad_s, noise.ou_tau_s, rng);
            seg_phases[k] += integral;
            x = x_end;
        }
    }
    if noise.white_floor > 0.0 {
        for (k, &(a, b, _)) in segments.iter().enumerate() {
            seg_phases[k] += (noise.white_floor * (b - a)).sqrt() * rng.normal();
        }
    }
    for s in &noise.sinusoids {
        if s.amplitude_rad_s == 0.0 {
            continue;
        }
        let omega0 = sample_sinusoid_frequency(s, rng);
        let phi0 = match s.phase {
            Some(p) => p,
            None => std::f64::consts::TAU * rng.uniform(),
        };
        for (k, &(a, b, _)) in segments.iter().enumerate() {
            let single = [(a, b, 1.0)];
            seg_phases[k] += s.amplitude_rad_s * y_real_part(&single, omega0, phi0);
        }
    }

    let mut v = [1.0, 0.0, 0.0];
    for (k, phase) in seg_phases.iter().enumerate() {
        rotate_z(&mut v, *phase);
        if k < axes.len() {
            let area = std::f64::consts::PI * (1.0 + error.area_sigma * rng.normal());
            rotate_axis(&mut v, axes[k], area);
        }
    }
    v[0] * reference[0] + v[1] * reference[1] + v[2] * reference[2]
}

/// Noiseless perfect-pulse reference axis of the sequence.
fn reference_axis(seq: &SequenceSpec) -> [f64; 3] {
    let mut v = [1.0, 0.0, 0.0];
    for axis in seq.pulse_axes() {
        rotate_axis(&mut v, axis, std::f64::consts::PI);
    }
    v
}

/// Monte Carlo coherence estimate: the mean of cos(toggled phase) over
/// `n_traj` noise realizations, or the Bloch-vector overlap when a pulse
/// error model is supplied.
pub fn coherence_mc(
    seq: &SequenceSpec,
    noise: &NoiseModel,
    n_traj: usize,
    seed: u64,
    pulse_error: Option<PulseError>,
) -> Result<McEstimate> {
    seq.validate()?;
    noise.validate()?;
    let tag = match seq.kind {
        SequenceKind::Ramsey => "mc-ramsey",
        SequenceKind::Hahn => "mc-hahn",
        SequenceKind::XyN => "mc-xy",
    };
    // Fold the time point into the stream key so scans decorrelate.
    let time_key = (seq.total_time_s.to_bits() >> 1).wrapping_mul(0x9e3779b97f4a7c15);
    let reference = reference_axis(seq);

    let values: Vec<f64> = (0..n_traj)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamRng::new(seed ^ time_key, tag, i as u64);
            match &pulse_error {
                None => trajectory_phase_toggled(seq, noise, &mut rng).cos(),
                Some(err) => trajectory_bloch(seq, noise, err, &mut rng, &reference),
            }
        })
        .collect();

    let mut sum = 0.0;
    let mut sum2 = 0.0;
    for v in &values {
        sum += v;
        sum2 += v * v;
    }
    let mean = sum / n_traj as f64;
    let var = (sum2 / n_traj as f64 - mean * mean).max(0.0);
    Ok(McEstimate {
        coherence: mean,
        std_error: (var / n_traj as f64).sqrt(),
        n_trajectories: n_traj,
    })
}
