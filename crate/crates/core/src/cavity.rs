//! Frequency-selective Purcell enhancement.
//!
//! A single Lorentzian resonance sets both the decay-rate enhancement and
//! the reflection dip. Spin-flip channels pass through the same formula at
//! their own detuning, which leaves them essentially unenhanced.

use crate::error::{Error, Result};
use crate::levels::{LevelScheme, SpinProjection, TransitionTable};
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CavityParams {
    /// FWHM linewidth κ, MHz.
    pub linewidth_mhz: f64,
    /// Peak Purcell factor on resonance.
    pub peak_purcell: f64,
    /// Cavity detuning from the readout line, MHz.
    pub detuning_mhz: f64,
    /// End-to-end photon detection probability per emission.
    pub detection_efficiency: f64,
    /// Cavity outcoupling efficiency (informational for rate budgets).
    pub outcoupling_efficiency: f64,
    /// Quality factor, informational.
    pub quality_factor: f64,
}

impl Default for CavityParams {
    fn default() -> Self {
        CavityParams {
            linewidth_mhz: 65.0,
            peak_purcell: 95.0,
            detuning_mhz: 0.0,
            detection_efficiency: 0.11,
            outcoupling_efficiency: 0.76,
            quality_factor: 3e6,
        }
    }
}

impl CavityParams {
    pub fn validate(&self) -> Result<()> {
        if !(self.linewidth_mhz > 0.0) {
            return Err(Error::InvalidParam("cavity linewidth must be > 0".into()));
        }
        if self.peak_purcell < 0.0 {
            return Err(Error::InvalidParam("peak Purcell must be >= 0".into()));
        }
        for (name, v) in [
            ("detection_efficiency", self.detection_efficiency),
            ("outcoupling_efficiency", self.outcoupling_efficiency),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!("{name} must be in [0,1]")));
            }
        }
        Ok(())
    }
}

/// Lorentzian Purcell factor at detuning Δ from the cavity resonance:
/// P(Δ) = P_max / (1 + (2Δ/κ)²).
pub fn purcell_factor(detuning_mhz: f64, params: &CavityParams) -> f64 {
    let x = 2.0 * detuning_mhz / params.linewidth_mhz;
    params.peak_purcell / (1.0 + x * x)
}

/// Reflection off the cavity: dips to `min_reflection` on resonance and
/// recovers to 1 far off resonance with the same Lorentzian profile.
pub fn reflection(detuning_mhz: f64, params: &CavityParams, min_reflection: f64) -> f64 {
    let x = 2.0 * detuning_mhz / params.linewidth_mhz;
    1.0 - (1.0 - min_reflection) / (1.0 + x * x)
}

/// T1-limited coherence bound: 2·T1.
pub fn lifetime_limit(spin_t1_s: f64) -> f64 {
    2.0 * spin_t1_s
}

/// Bulk branching fractions of one optical decay, before cavity
/// enhancement. Edge excited levels lose the impossible flip channel and
/// the remaining fractions renormalize.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BranchingModel {
    /// Fraction of decays preserving m_I.
    pub preserving: f64,
    /// Fraction increasing m_I by one quantum.
    pub flip_up: f64,
    /// Fraction decreasing m_I by one quantum.
    pub flip_down: f64,
    /// Bulk excited-state lifetime, ms.
    pub bulk_lifetime_ms: f64,
}

impl BranchingModel {
    pub fn new(preserving: f64, flip_up: f64, flip_down: f64, bulk_lifetime_ms: f64) -> Result<Self> {
        let model = BranchingModel {
            preserving,
            flip_up,
            flip_down,
            bulk_lifetime_ms,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn validate(&self) -> Result<()> {
        if self.preserving < 0.0 || self.flip_up < 0.0 || self.flip_down < 0.0 {
            return Err(Error::InvalidParam("branching fractions must be >= 0".into()));
        }
        let sum = self.preserving + self.flip_up + self.flip_down;
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::InvalidParam(format!(
                "branching fractions must sum to 1, got {sum}"
            )));
        }
        if !(self.bulk_lifetime_ms > 0.0) {
            return Err(Error::InvalidParam("bulk lifetime must be > 0".into()));
        }
        Ok(())
    }

    /// Derive the preserving fraction from the observed bulk-to-enhanced
    /// lifetime ratio of the readout transition, splitting the flip weight
    /// evenly between the up and down channels.
    ///
    /// With the cavity on the (−7/2 → −7/2) line, the e(−7/2) state decays
    /// through two channels; requiring the total rate ratio ρ fixes the
    /// edge-renormalized preserving fraction
    /// b₀' = (ρ − 1 − P₊)/(P₀ − P₊), hence b₀ = b₀'/(2 − b₀').
    pub fn from_lifetime_ratio(
        cavity: &CavityParams,
        scheme: &LevelScheme,
        bulk_lifetime_ms: f64,
        lifetime_ratio: f64,
    ) -> Result<Self> {
        let e_low = SpinProjection::lowest();
        let g_up = e_low.shifted(1).expect("level above -7/2 exists");
        let p0 = purcell_factor(
            scheme.transition_offset(e_low, e_low) - cavity.detuning_mhz,
            cavity,
        );
        let p_up = purcell_factor(
            scheme.transition_offset(g_up, e_low) - cavity.detuning_mhz,
            cavity,
        );
        let b0_edge = (lifetime_ratio - 1.0 - p_up) / (p0 - p_up);
        if !(0.0..=1.0).contains(&b0_edge) {
            return Err(Error::Infeasible(format!(
                "lifetime ratio {lifetime_ratio} needs preserving fraction {b0_edge} outside [0,1]"
            )));
        }
        let b0 = b0_edge / (2.0 - b0_edge);
        let flip = (1.0 - b0) / 2.0;
        BranchingModel::new(b0, flip, flip, bulk_lifetime_ms)
    }
}

impl Default for BranchingModel {
    /// Calibrated so the default cavity on the readout line reduces the
    /// 11.4 ms bulk lifetime to 0.12 ms.
    fn default() -> Self {
        let scheme = crate::levels::build_level_scheme(&crate::levels::LevelCoefficients::default())
            .expect("default scheme is valid");
        BranchingModel::from_lifetime_ratio(&CavityParams::default(), &scheme, 11.4, 11.4 / 0.12)
            .expect("default lifetime ratio is feasible")
    }
}

/// One decay channel of an excited level under cavity enhancement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DecayChannel {
    pub target: SpinProjection,
    pub delta_m: i8,
    /// Enhanced rate, 1/ms.
    pub rate_per_ms: f64,
    /// Branching probability of this channel per decay.
    pub probability: f64,
}

/// Enhanced decay budget of one excited level.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EnhancedDecay {
    pub excited_m: SpinProjection,
    pub channels: Vec<DecayChannel>,
    /// Total enhanced lifetime, ms.
    pub lifetime_ms: f64,
    /// Probability that a decay preserves m_I.
    pub cyclicity: f64,
    /// Spin-flip probability per decay, 1 − cyclicity.
    pub flip_probability: f64,
}

/// Per-channel enhanced decay rates of `excited_m`:
/// Γ_ch = (b_ch/τ_bulk)·(1 + P(Δ_ch)), with the branching fractions
/// renormalized over the channels that exist for this level.
pub fn enhanced_rates(
    excited_m: SpinProjection,
    table: &TransitionTable,
    params: &CavityParams,
    branching: &BranchingModel,
) -> EnhancedDecay {
    // Decay to ground level m' changes m_I by (m' − m_excited); delta here
    // is the ground-level shift relative to the excited level.
    let fractions = [
        (-1i8, branching.flip_down),
        (0, branching.preserving),
        (1, branching.flip_up),
    ];
    let available: Vec<(SpinProjection, i8, f64)> = fractions
        .iter()
        .filter_map(|&(delta, frac)| excited_m.shifted(delta).map(|g| (g, delta, frac)))
        .collect();
    let total_fraction: f64 = available.iter().map(|(_, _, f)| f).sum();

    let mut channels = Vec::with_capacity(available.len());
    let mut total_rate = 0.0;
    for (target, delta, frac) in available {
        let t = table
            .find(target, excited_m)
            .expect("transition table covers all |delta| <= 1 pairs");
        let detuning = t.frequency_offset - params.detuning_mhz;
        let rate = (frac / total_fraction) / branching.bulk_lifetime_ms
            * (1.0 + purcell_factor(detuning, params));
        total_rate += rate;
        channels.push(DecayChannel {
            target,
            delta_m: -delta,
            rate_per_ms: rate,
            probability: 0.0,
        });
    }
    for ch in &mut channels {
        ch.probability = ch.rate_per_ms / total_rate;
    }
    let cyclicity = channels
        .iter()
        .filter(|c| c.delta_m == 0)
        .map(|c| c.probability)
        .sum::<f64>();
    EnhancedDecay {
        excited_m,
        channels,
        lifetime_ms: 1.0 / total_rate,
        cyclicity,
        flip_probability: 1.0 - cyclicity,
    }
}
