//! Raman two-photon control and qubit dephasing under classical noise.
//!
//! Dephasing is evaluated along two independent routes: an analytic
//! filter-function integral over the noise spectrum ([`filter_chi`]) and a
//! trajectory Monte Carlo ([`coherence_mc`]); the two must agree for
//! Gaussian noise and are cross-checked in the tests.

mod dd;
mod filter;
mod mc;

pub use dd::{auto_grids, dd_scan, decay_time_grid, fit_decay_time, DdEntry, DdScan};
pub use filter::{bessel_j0, filter_chi, ChiResult};
pub use mc::{coherence_mc, McEstimate, PulseError};

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use serde::{Deserialize, Serialize};

const MHZ_TO_RAD_S: f64 = 2.0 * std::f64::consts::PI * 1e6;

/// Two-field Raman drive configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RamanConfig {
    /// Rabi frequency of field 1, rad/s.
    pub rabi_1_rad_s: f64,
    /// Rabi frequency of field 2, rad/s.
    pub rabi_2_rad_s: f64,
    /// One-photon detuning Δ from the readout transition, MHz.
    pub one_photon_detuning_mhz: f64,
    /// Two-photon detuning δ, kHz.
    pub two_photon_detuning_khz: f64,
    /// Cavity detuning while control pulses run, MHz.
    pub cavity_detuning_control_mhz: f64,
    /// Relative pulse-area noise (one standard deviation).
    pub pulse_area_noise_sigma: f64,
    /// Drive power, mW; informational.
    pub drive_power_mw: f64,
}

impl Default for RamanConfig {
    fn default() -> Self {
        RamanConfig {
            rabi_1_rad_s: MHZ_TO_RAD_S,
            rabi_2_rad_s: MHZ_TO_RAD_S,
            one_photon_detuning_mhz: -90.0,
            two_photon_detuning_khz: 0.0,
            cavity_detuning_control_mhz: -400.0,
            pulse_area_noise_sigma: 0.05,
            drive_power_mw: 10.0,
        }
    }
}

impl RamanConfig {
    pub fn validate(&self) -> Result<()> {
        if self.one_photon_detuning_mhz == 0.0 {
            return Err(Error::InvalidParam("one-photon detuning must be nonzero".into()));
        }
        if self.pulse_area_noise_sigma < 0.0 {
            return Err(Error::InvalidParam("pulse-area noise sigma must be >= 0".into()));
        }
        Ok(())
    }

    fn detuning_rad_s(&self) -> f64 {
        self.one_photon_detuning_mhz * MHZ_TO_RAD_S
    }
}

/// Two-photon Rabi frequency Ω_eff = Ω₁Ω₂ / (2|Δ|), rad/s.
pub fn effective_rabi(cfg: &RamanConfig) -> f64 {
    cfg.rabi_1_rad_s * cfg.rabi_2_rad_s / (2.0 * cfg.detuning_rad_s().abs())
}

/// Differential AC Stark shift (Ω₁² − Ω₂²)/(4Δ), rad/s, signed with Δ.
pub fn ac_stark_shift(cfg: &RamanConfig) -> f64 {
    (cfg.rabi_1_rad_s.powi(2) - cfg.rabi_2_rad_s.powi(2)) / (4.0 * cfg.detuning_rad_s())
}

/// Probability of an incoherent scattering event during a pulse: the
/// off-resonant excited-state population (Ω₁² + Ω₂²)/(4Δ²) times the decay
/// rate (2π × linewidth) times the pulse duration, capped at 1.
pub fn scattering_probability(
    cfg: &RamanConfig,
    pulse_duration_s: f64,
    excited_linewidth_hz: f64,
) -> f64 {
    let delta = cfg.detuning_rad_s();
    let pop = (cfg.rabi_1_rad_s.powi(2) + cfg.rabi_2_rad_s.powi(2)) / (4.0 * delta * delta);
    let rate = 2.0 * std::f64::consts::PI * excited_linewidth_hz;
    (pop * rate * pulse_duration_s).min(1.0)
}

/// One point of a Rabi fringe.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct RabiPoint {
    pub duration_s: f64,
    pub population: f64,
    pub std_error: f64,
}

/// Rabi oscillations with pulse-area noise: population
/// ½(1 + cos(Ω_eff(1+g)·t)) averaged over Gaussian area errors g, which
/// damps the fringe with a stretched-exponential envelope.
pub fn simulate_rabi(
    cfg: &RamanConfig,
    durations_s: &[f64],
    n_traj: usize,
    seed: u64,
) -> Result<Vec<RabiPoint>> {
    cfg.validate()?;
    if durations_s.iter().any(|&t| t < 0.0) {
        return Err(Error::InvalidParam("durations must be >= 0".into()));
    }
    let omega = effective_rabi(cfg);
    let out = durations_s
        .iter()
        .enumerate()
        .map(|(i, &t)| {
            if cfg.pulse_area_noise_sigma == 0.0 {
                return RabiPoint {
                    duration_s: t,
                    population: 0.5 * (1.0 + (omega * t).cos()),
                    std_error: 0.0,
                };
            }
            let mut sum = 0.0;
            let mut sum2 = 0.0;
            let mut rng = StreamRng::new(seed, "rabi", i as u64);
            for _ in 0..n_traj {
                let g = 1.0 + cfg.pulse_area_noise_sigma * rng.normal();
                let p = 0.5 * (1.0 + (omega * g * t).cos());
                sum += p;
                sum2 += p * p;
            }
            let mean = sum / n_traj as f64;
            let var = (sum2 / n_traj as f64 - mean * mean).max(0.0);
            RabiPoint {
                duration_s: t,
                population: mean,
                std_error: (var / n_traj as f64).sqrt(),
            }
        })
        .collect();
    Ok(out)
}

/// One narrowband sinusoidal component of the qubit-frequency noise.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Sinusoid {
    /// Peak qubit-frequency excursion, rad/s.
    pub amplitude_rad_s: f64,
    pub frequency_hz: f64,
    /// Fixed phase in rad; None averages over a uniformly random phase.
    pub phase: Option<f64>,
    /// Fractional half-width of the line: the tone frequency varies
    /// uniformly over f₀·(1 ± jitter) from shot to shot. Zero means a pure
    /// tone.
    pub frequency_jitter: f64,
}

impl Sinusoid {
    pub fn pure(amplitude_rad_s: f64, frequency_hz: f64, phase: Option<f64>) -> Self {
        Sinusoid {
            amplitude_rad_s,
            frequency_hz,
            phase,
            frequency_jitter: 0.0,
        }
    }
}

/// Classical qubit-frequency noise: an Ornstein-Uhlenbeck component plus
/// deterministic sinusoids plus a white floor.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NoiseModel {
    /// OU standard deviation, rad/s.
    pub ou_sigma_rad_s: f64,
    /// OU correlation time, s.
    pub ou_tau_s: f64,
    pub sinusoids: Vec<Sinusoid>,
    /// Two-sided white PSD level, rad²/s.
    pub white_floor: f64,
}

impl Default for NoiseModel {
    /// The calibrated operating point; `calibration::calibrate_noise`
    /// re-derives these from the coherence targets.
    fn default() -> Self {
        NoiseModel {
            ou_sigma_rad_s: 2280.965,
            ou_tau_s: 23.59,
            sinusoids: vec![Sinusoid {
                amplitude_rad_s: 140.2,
                frequency_hz: 44.82,
                phase: None,
                frequency_jitter: 0.05,
            }],
            white_floor: 8.29,
        }
    }
}

impl NoiseModel {
    pub fn validate(&self) -> Result<()> {
        if !(self.ou_tau_s > 0.0) {
            return Err(Error::InvalidParam("ou_tau must be > 0".into()));
        }
        if self.ou_sigma_rad_s < 0.0 || self.white_floor < 0.0 {
            return Err(Error::InvalidParam("noise magnitudes must be >= 0".into()));
        }
        if self.sinusoids.iter().any(|s| s.amplitude_rad_s < 0.0) {
            return Err(Error::InvalidParam("sinusoid amplitudes must be >= 0".into()));
        }
        if self
            .sinusoids
            .iter()
            .any(|s| !(0.0..1.0).contains(&s.frequency_jitter))
        {
            return Err(Error::InvalidParam(
                "sinusoid frequency jitter must be in [0, 1)".into(),
            ));
        }
        Ok(())
    }

    /// Pure OU model, no sinusoids or white floor.
    pub fn pure_ou(sigma_rad_s: f64, tau_s: f64) -> Self {
        NoiseModel {
            ou_sigma_rad_s: sigma_rad_s,
            ou_tau_s: tau_s,
            sinusoids: Vec::new(),
            white_floor: 0.0,
        }
    }

    /// Two-sided OU power spectral density at angular frequency ω.
    pub fn ou_psd(&self, omega: f64) -> f64 {
        let s2 = self.ou_sigma_rad_s * self.ou_sigma_rad_s;
        2.0 * s2 * self.ou_tau_s / (1.0 + (omega * self.ou_tau_s).powi(2))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SequenceKind {
    Ramsey,
    Hahn,
    XyN,
}

/// Pulse-phase axis of one π pulse.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PulseAxis {
    X,
    Y,
}

/// A free-evolution or refocusing sequence of total length `total_time_s`
/// with equidistant π pulses at t_k = (k − ½)·t/N.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SequenceSpec {
    pub kind: SequenceKind,
    pub n_pi_pulses: usize,
    pub total_time_s: f64,
}

impl SequenceSpec {
    pub fn ramsey(total_time_s: f64) -> Self {
        SequenceSpec {
            kind: SequenceKind::Ramsey,
            n_pi_pulses: 0,
            total_time_s,
        }
    }

    pub fn hahn(total_time_s: f64) -> Self {
        SequenceSpec {
            kind: SequenceKind::Hahn,
            n_pi_pulses: 1,
            total_time_s,
        }
    }

    pub fn xy(n_pi_pulses: usize, total_time_s: f64) -> Self {
        SequenceSpec {
            kind: SequenceKind::XyN,
            n_pi_pulses,
            total_time_s,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.total_time_s > 0.0) {
            return Err(Error::InvalidParam("total_time must be > 0".into()));
        }
        match self.kind {
            SequenceKind::Ramsey if self.n_pi_pulses != 0 => {
                Err(Error::InvalidParam("Ramsey carries no π pulses".into()))
            }
            SequenceKind::Hahn if self.n_pi_pulses != 1 => {
                Err(Error::InvalidParam("Hahn carries exactly one π pulse".into()))
            }
            SequenceKind::XyN if self.n_pi_pulses == 0 => {
                Err(Error::InvalidParam("XY-N needs at least one π pulse".into()))
            }
            _ => Ok(()),
        }
    }

    /// Equidistant pulse times.
    pub fn pulse_times(&self) -> Vec<f64> {
        (1..=self.n_pi_pulses)
            .map(|k| (k as f64 - 0.5) * self.total_time_s / self.n_pi_pulses as f64)
            .collect()
    }

    /// X/Y alternation for XY-N; Hahn refocuses about X.
    pub fn pulse_axes(&self) -> Vec<PulseAxis> {
        match self.kind {
            SequenceKind::Ramsey => Vec::new(),
            SequenceKind::Hahn => vec![PulseAxis::X],
            SequenceKind::XyN => (0..self.n_pi_pulses)
                .map(|k| if k % 2 == 0 { PulseAxis::X } else { PulseAxis::Y })
                .collect(),
        }
    }

    /// Toggling-frame segments (start, end, sign).
    pub fn segments(&self) -> Vec<(f64, f64, f64)> {
        let mut edges = vec![0.0];
        edges.extend(self.pulse_times());
        edges.push(self.total_time_s);
        let mut sign = 1.0;
        edges
            .windows(2)
            .map(|w| {
                let seg = (w[0], w[1], sign);
                sign = -sign;
                seg
            })
            .collect()
    }
}
