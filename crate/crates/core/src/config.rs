//! Run configuration: a line-oriented `key = value` file under `[section]`
//! headers.
//!
//! Grammar, one entry per line:
//!
//! ```text
//! file     := line*
//! line     := blank | comment | section | entry
//! comment  := '#' .*
//! section  := '[' name ']'
//! entry    := key '=' value        # value: number, or quoted text
//! ```
//!
//! Unknown sections or keys are rejected with their line number. Loading a
//! config and re-emitting it preserves every value exactly (numbers are
//! written with shortest round-trip formatting).

use crate::cavity::CavityParams;
use crate::coherence::{NoiseModel, RamanConfig, Sinusoid};
use crate::error::{Error, Result};
use crate::levels::LevelCoefficients;
use crate::readout::ReadoutConfig;
use serde::Serialize;

/// Full run configuration with every model section.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct RunConfig {
    pub seed: u64,
    pub out_dir: String,
    pub levels: LevelCoefficients,
    pub cavity: CavityParams,
    pub min_reflection: f64,
    pub pump: PumpSection,
    pub readout: ReadoutConfig,
    pub raman: RamanConfig,
    pub noise: NoiseModel,
    pub calibrated: CalibratedSection,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PumpSection {
    pub excitation_prob: f64,
    pub repetitions: usize,
    pub bulk_lifetime_ms: f64,
    pub enhanced_lifetime_ms: f64,
    pub target_fidelity: f64,
}

impl Default for PumpSection {
    fn default() -> Self {
        PumpSection {
            excitation_prob: 0.0201,
            repetitions: 500,
            bulk_lifetime_ms: 11.4,
            enhanced_lifetime_ms: 0.12,
            target_fidelity: 0.973,
        }
    }
}

/// Values written back by `calibrate --write-config`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct CalibratedSection {
    pub pump_excitation_prob: Option<f64>,
    pub readout_excitation_prob: Option<f64>,
    pub readout_flip_prob: Option<f64>,
    pub surface_flip_prob: Option<f64>,
    pub surface_excitation_prob: Option<f64>,
    pub ou_sigma_rad_s: Option<f64>,
    pub ou_tau_s: Option<f64>,
    pub sin_amplitude_rad_s: Option<f64>,
    pub sin_frequency_hz: Option<f64>,
    pub white_floor: Option<f64>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: 1,
            out_dir: "out".to_string(),
            levels: LevelCoefficients::default(),
            cavity: CavityParams::default(),
            min_reflection: 0.0,
            pump: PumpSection::default(),
            readout: ReadoutConfig::default(),
            raman: RamanConfig::default(),
            noise: NoiseModel::default(),
            calibrated: CalibratedSection::default(),
        }
    }
}

impl RunConfig {
    /// Effective noise model: calibrated values override the `[noise]`
    /// section when present.
    pub fn effective_noise(&self) -> NoiseModel {
        let mut noise = self.noise.clone();
        if let Some(v) = self.calibrated.ou_sigma_rad_s {
            noise.ou_sigma_rad_s = v;
        }
        if let Some(v) = self.calibrated.ou_tau_s {
            noise.ou_tau_s = v;
        }
        if let (Some(a), Some(f)) = (
            self.calibrated.sin_amplitude_rad_s,
            self.calibrated.sin_frequency_hz,
        ) {
            let jitter = self
                .noise
                .sinusoids
                .first()
                .map(|s| s.frequency_jitter)
                .unwrap_or(crate::calibration::SINUSOID_JITTER);
            noise.sinusoids = vec![Sinusoid {
                amplitude_rad_s: a,
                frequency_hz: f,
                phase: None,
                frequency_jitter: jitter,
            }];
        }
        if let Some(v) = self.calibrated.white_floor {
            noise.white_floor = v;
        }
        noise
    }

    /// Effective readout config with calibrated overrides.
    pub fn effective_readout(&self) -> ReadoutConfig {
        let mut cfg = self.readout;
        if let Some(v) = self.calibrated.readout_excitation_prob {
            cfg.excitation_prob = v;
        }
        if let Some(v) = self.calibrated.readout_flip_prob {
            cfg.flip_prob = v;
        }
        cfg
    }

    pub fn effective_pump_excitation(&self) -> f64 {
        self.calibrated
            .pump_excitation_prob
            .unwrap_or(self.pump.excitation_prob)
    }

    pub fn validate(&self) -> Result<()> {
        self.cavity.validate()?;
        self.readout.validate()?;
        self.raman.validate()?;
        self.noise.validate()?;
        if !(0.0..=1.0).contains(&self.min_reflection) {
            return Err(Error::InvalidParam("min_reflection must be in [0,1]".into()));
        }
        if !(0.0..=1.0).contains(&self.pump.excitation_prob) {
            return Err(Error::InvalidParam(
                "pump excitation_prob must be in [0,1]".into(),
            ));
        }
        crate::levels::build_level_scheme(&self.levels)?;
        Ok(())
    }

    pub fn parse(text: &str) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        let mut section = String::new();
        for (idx, raw) in text.lines().enumerate() {
            let line_no = idx + 1;
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            if let Some(name) = line.strip_prefix('[') {
                let name = name.strip_suffix(']').ok_or_else(|| Error::Config {
                    line: line_no,
                    message: format!("malformed section header `{line}`"),
                })?;
                section = name.trim().to_string();
                const KNOWN: &[&str] = &[
                    "levels", "cavity", "pump", "readout", "raman", "noise", "calibrated",
                ];
                if !KNOWN.contains(&section.as_str()) {
                    return Err(Error::Config {
                        line: line_no,
                        message: format!("unknown section `[{section}]`"),
                    });
                }
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Config {
                line: line_no,
                message: format!("expected `key = value`, got `{line}`"),
            })?;
            let key = key.trim();
            let value = value.trim();
            apply_entry(&mut cfg, &section, key, value).map_err(|msg| Error::Config {
                line: line_no,
                message: msg,
            })?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    /// Emit the config in the same grammar `parse` reads.
    pub fn emit(&self) -> String {
        let mut s = String::new();
        use std::fmt::Write;
        let _ = writeln!(s, "seed = {}", self.seed);
        let _ = writeln!(s, "out_dir = \"{}\"", self.out_dir);
        let _ = writeln!(s, "\n[levels]");
        let _ = writeln!(s, "a_g = {}", self.levels.a_g);
        let _ = writeln!(s, "a_e = {}", self.levels.a_e);
        let _ = writeln!(s, "q_g = {}", self.levels.q_g);
        let _ = writeln!(s, "q_e = {}", self.levels.q_e);
        let _ = writeln!(s, "\n[cavity]");
        let _ = writeln!(s, "kappa_mhz = {}", self.cavity.linewidth_mhz);
        let _ = writeln!(s, "peak_purcell = {}", self.cavity.peak_purcell);
        let _ = writeln!(s, "detuning_mhz = {}", self.cavity.detuning_mhz);
        let _ = writeln!(s, "eta_det = {}", self.cavity.detection_efficiency);
        let _ = writeln!(s, "eta_out = {}", self.cavity.outcoupling_efficiency);
        let _ = writeln!(s, "quality_factor = {}", self.cavity.quality_factor);
        let _ = writeln!(s, "min_reflection = {}", self.min_reflection);
        let _ = writeln!(s, "\n[pump]");
        let _ = writeln!(s, "excitation_prob = {}", self.pump.excitation_prob);
        let _ = writeln!(s, "repetitions = {}", self.pump.repetitions);
        let _ = writeln!(s, "bulk_lifetime_ms = {}", self.pump.bulk_lifetime_ms);
        let _ = writeln!(s, "enhanced_lifetime_ms = {}", self.pump.enhanced_lifetime_ms);
        let _ = writeln!(s, "target_fidelity = {}", self.pump.target_fidelity);
        let _ = writeln!(s, "\n[readout]");
        let _ = writeln!(s, "n_pulses = {}", self.readout.n_pulses);
        let _ = writeln!(s, "pulse_duration_us = {}", self.readout.pulse_duration_us);
        let _ = writeln!(s, "chirp_span_mhz = {}", self.readout.chirp_span_mhz);
        let _ = writeln!(s, "detection_window_us = {}", self.readout.detection_window_us);
        let _ = writeln!(s, "dark_rate_hz = {}", self.readout.dark_rate_hz);
        let _ = writeln!(s, "excitation_prob = {}", self.readout.excitation_prob);
        let _ = writeln!(s, "detection_prob = {}", self.readout.detection_prob);
        let _ = writeln!(s, "flip_prob = {}", self.readout.flip_prob);
        let _ = writeln!(s, "leakage_prob = {}", self.readout.leakage_prob);
        let _ = writeln!(s, "threshold = {}", self.readout.threshold);
        let _ = writeln!(s, "\n[raman]");
        let _ = writeln!(s, "rabi_1_rad_s = {}", self.raman.rabi_1_rad_s);
        let _ = writeln!(s, "rabi_2_rad_s = {}", self.raman.rabi_2_rad_s);
        let _ = writeln!(s, "one_photon_detuning_mhz = {}", self.raman.one_photon_detuning_mhz);
        let _ = writeln!(s, "two_photon_detuning_khz = {}", self.raman.two_photon_detuning_khz);
        let _ = writeln!(s, "cavity_detuning_mhz = {}", self.raman.cavity_detuning_control_mhz);
        let _ = writeln!(s, "pulse_area_noise_sigma = {}", self.raman.pulse_area_noise_sigma);
        let _ = writeln!(s, "drive_power_mw = {}", self.raman.drive_power_mw);
        let _ = writeln!(s, "\n[noise]");
        let _ = writeln!(s, "ou_sigma_rad_s = {}", self.noise.ou_sigma_rad_s);
        let _ = writeln!(s, "ou_tau_s = {}", self.noise.ou_tau_s);
        if let Some(sin) = self.noise.sinusoids.first() {
            let _ = writeln!(s, "sin_amplitude_rad_s = {}", sin.amplitude_rad_s);
            let _ = writeln!(s, "sin_frequency_hz = {}", sin.frequency_hz);
            if let Some(phase) = sin.phase {
                let _ = writeln!(s, "sin_phase_rad = {}", phase);
            }
            let _ = writeln!(s, "sin_frequency_jitter = {}", sin.frequency_jitter);
        }
        let _ = writeln!(s, "white_floor = {}", self.noise.white_floor);
        let cal = &self.calibrated;
        let entries: [(&str, Option<f64>); 10] = [
            ("pump_excitation_prob", cal.pump_excitation_prob),
            ("readout_excitation_prob", cal.readout_excitation_prob),
            ("readout_flip_prob", cal.readout_flip_prob),
            ("surface_flip_prob", cal.surface_flip_prob),
            ("surface_excitation_prob", cal.surface_excitation_prob),
            ("ou_sigma_rad_s", cal.ou_sigma_rad_s),
            ("ou_tau_s", cal.ou_tau_s),
            ("sin_amplitude_rad_s", cal.sin_amplitude_rad_s),
            ("sin_frequency_hz", cal.sin_frequency_hz),
            ("white_floor", cal.white_floor),
        ];
        if entries.iter().any(|(_, v)| v.is_some()) {
            let _ = writeln!(s, "\n[calibrated]");
            for (k, v) in entries {
                if let Some(v) = v {
                    let _ = writeln!(s, "{k} = {v}");
                }
            }
        }
        s
    }
}

fn parse_f64(value: &str) -> std::result::Result<f64, String> {
    value
        .parse::<f64>()
        .map_err(|_| format!("expected a number, got `{value}`"))
}

fn parse_usize(value: &str) -> std::result::Result<usize, String> {
    value
        .parse::<usize>()
        .map_err(|_| format!("expected a non-negative integer, got `{value}`"))
}

fn apply_entry(
    cfg: &mut RunConfig,
    section: &str,
    key: &str,
    value: &str,
) -> std::result::Result<(), String> {
    match (section, key) {
        ("", "seed") => {
            cfg.seed = value
                .parse::<u64>()
                .map_err(|_| format!("expected a 64-bit unsigned seed, got `{value}`"))?;
        }
        ("", "out_dir") => {
            cfg.out_dir = value.trim_matches('"').to_string();
        }
        ("", other) => return Err(format!("unknown top-level key `{other}`")),

        ("levels", "a_g") => cfg.levels.a_g = parse_f64(value)?,
        ("levels", "a_e") => cfg.levels.a_e = parse_f64(value)?,
        ("levels", "q_g") => cfg.levels.q_g = parse_f64(value)?,
        ("levels", "q_e") => cfg.levels.q_e = parse_f64(value)?,

        ("cavity", "kappa_mhz") => cfg.cavity.linewidth_mhz = parse_f64(value)?,
        ("cavity", "peak_purcell") => cfg.cavity.peak_purcell = parse_f64(value)?,
        ("cavity", "detuning_mhz") => cfg.cavity.detuning_mhz = parse_f64(value)?,
        ("cavity", "eta_det") => cfg.cavity.detection_efficiency = parse_f64(value)?,
        ("cavity", "eta_out") => cfg.cavity.outcoupling_efficiency = parse_f64(value)?,
        ("cavity", "quality_factor") => cfg.cavity.quality_factor = parse_f64(value)?,
        ("cavity", "min_reflection") => cfg.min_reflection = parse_f64(value)?,

        ("pump", "excitation_prob") => cfg.pump.excitation_prob = parse_f64(value)?,
        ("pump", "repetitions") => cfg.pump.repetitions = parse_usize(value)?,
        ("pump", "bulk_lifetime_ms") => cfg.pump.bulk_lifetime_ms = parse_f64(value)?,
        ("pump", "enhanced_lifetime_ms") => cfg.pump.enhanced_lifetime_ms = parse_f64(value)?,
        ("pump", "target_fidelity") => cfg.pump.target_fidelity = parse_f64(value)?,

        ("readout", "n_pulses") => cfg.readout.n_pulses = parse_usize(value)?,
        ("readout", "pulse_duration_us") => cfg.readout.pulse_duration_us = parse_f64(value)?,
        ("readout", "chirp_span_mhz") => cfg.readout.chirp_span_mhz = parse_f64(value)?,
        ("readout", "detection_window_us") => cfg.readout.detection_window_us = parse_f64(value)?,
        ("readout", "dark_rate_hz") => cfg.readout.dark_rate_hz = parse_f64(value)?,
        ("readout", "excitation_prob") => cfg.readout.excitation_prob = parse_f64(value)?,
        ("readout", "detection_prob") => cfg.readout.detection_prob = parse_f64(value)?,
        ("readout", "flip_prob") => cfg.readout.flip_prob = parse_f64(value)?,
        ("readout", "leakage_prob") => cfg.readout.leakage_prob = parse_f64(value)?,
        ("readout", "threshold") => {
            cfg.readout.threshold = value
                .parse::<u32>()
                .map_err(|_| format!("expected a photon count, got `{value}`"))?;
        }

        ("raman", "rabi_1_rad_s") => cfg.raman.rabi_1_rad_s = parse_f64(value)?,
        ("raman", "rabi_2_rad_s") => cfg.raman.rabi_2_rad_s = parse_f64(value)?,
        ("raman", "one_photon_detuning_mhz") => {
            cfg.raman.one_photon_detuning_mhz = parse_f64(value)?
        }
        ("raman", "two_photon_detuning_khz") => {
            cfg.raman.two_photon_detuning_khz = parse_f64(value)?
        }
        ("raman", "cavity_detuning_mhz") => {
            cfg.raman.cavity_detuning_control_mhz = parse_f64(value)?
        }
        ("raman", "pulse_area_noise_sigma") => {
            cfg.raman.pulse_area_noise_sigma = parse_f64(value)?
        }
        ("raman", "drive_power_mw") => cfg.raman.drive_power_mw = parse_f64(value)?,

        ("noise", "ou_sigma_rad_s") => cfg.noise.ou_sigma_rad_s = parse_f64(value)?,
        ("noise", "ou_tau_s") => cfg.noise.ou_tau_s = parse_f64(value)?,
        ("noise", "sin_amplitude_rad_s") => {
            ensure_sinusoid(&mut cfg.noise).amplitude_rad_s = parse_f64(value)?
        }
        ("noise", "sin_frequency_hz") => {
            ensure_sinusoid(&mut cfg.noise).frequency_hz = parse_f64(value)?
        }
        ("noise", "sin_phase_rad") => {
            ensure_sinusoid(&mut cfg.noise).phase = Some(parse_f64(value)?)
        }
        ("noise", "sin_frequency_jitter") => {
            ensure_sinusoid(&mut cfg.noise).frequency_jitter = parse_f64(value)?
        }
        ("noise", "white_floor") => cfg.noise.white_floor = parse_f64(value)?,

        ("calibrated", "pump_excitation_prob") => {
            cfg.calibrated.pump_excitation_prob = Some(parse_f64(value)?)
        }
        ("calibrated", "readout_excitation_prob") => {
            cfg.calibrated.readout_excitation_prob = Some(parse_f64(value)?)
        }
        ("calibrated", "readout_flip_prob") => {
            cfg.calibrated.readout_flip_prob = Some(parse_f64(value)?)
        }
        ("calibrated", "surface_flip_prob") => {
            cfg.calibrated.surface_flip_prob = Some(parse_f64(value)?)
        }
        ("calibrated", "surface_excitation_prob") => {
            cfg.calibrated.surface_excitation_prob = Some(parse_f64(value)?)
        }
        ("calibrated", "ou_sigma_rad_s") => {
            cfg.calibrated.ou_sigma_rad_s = Some(parse_f64(value)?)
        }
        ("calibrated", "ou_tau_s") => cfg.calibrated.ou_tau_s = Some(parse_f64(value)?),
        ("calibrated", "sin_amplitude_rad_s") => {
            cfg.calibrated.sin_amplitude_rad_s = Some(parse_f64(value)?)
        }
        ("calibrated", "sin_frequency_hz") => {
            cfg.calibrated.sin_frequency_hz = Some(parse_f64(value)?)
        }
        ("calibrated", "white_floor") => cfg.calibrated.white_floor = Some(parse_f64(value)?),

        (sec, key) => return Err(format!("unknown key `{key}` in section `[{sec}]`")),
    }
    Ok(())
}

fn ensure_sinusoid(noise: &mut NoiseModel) -> &mut Sinusoid {
    if noise.sinusoids.is_empty() {
        noise.sinusoids.push(Sinusoid::pure(0.0, 0.0, None));
    }
    &mut noise.sinusoids[0]
}
