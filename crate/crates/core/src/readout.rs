//! Single-shot readout statistics: analytic photon-count distributions,
//! Monte Carlo shot simulation, state assignment and the
//! (pulse count, threshold) optimization.
//!
//! Bright-state model per pulse: the qubit is excited with probability
//! `excitation_prob`; an excitation yields a detector click with
//! probability `detection_prob` and flips the spin out of the bright
//! manifold with probability `flip_prob`. A flip is permanent for the rest
//! of the shot. Detector dark counts add a Poisson background accumulated
//! over the per-pulse detection windows.

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use rayon::prelude::*;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ReadoutConfig {
    pub n_pulses: usize,
    pub pulse_duration_us: f64,
    pub chirp_span_mhz: f64,
    /// Detection window per pulse, µs.
    pub detection_window_us: f64,
    /// Detector dark-count rate, Hz.
    pub dark_rate_hz: f64,
    /// Probability that one pulse excites the bright state.
    pub excitation_prob: f64,
    /// Photon detection probability per emission (detection chain η).
    pub detection_prob: f64,
    /// Spin-flip probability per excitation-decay cycle (ε).
    pub flip_prob: f64,
    /// Off-resonant excitation probability per pulse for the dark state.
    pub leakage_prob: f64,
    /// Assignment threshold: bright if count >= threshold.
    pub threshold: u32,
}

impl Default for ReadoutConfig {
    fn default() -> Self {
        ReadoutConfig {
            n_pulses: 110,
            pulse_duration_us: 8.0,
            chirp_span_mhz: 2.0,
            detection_window_us: 487.885_690_619_175_8,
            dark_rate_hz: 43.9,
            excitation_prob: 0.69,
            detection_prob: 0.11,
            flip_prob: 1.42e-4,
            leakage_prob: 0.0,
            threshold: 5,
        }
    }
}

impl ReadoutConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_pulses == 0 {
            return Err(Error::InvalidParam("n_pulses must be >= 1".into()));
        }
        if self.dark_rate_hz < 0.0 {
            return Err(Error::InvalidParam("dark_rate_hz must be >= 0".into()));
        }
        for (name, v) in [
            ("excitation_prob", self.excitation_prob),
            ("detection_prob", self.detection_prob),
            ("flip_prob", self.flip_prob),
            ("leakage_prob", self.leakage_prob),
        ] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::InvalidParam(format!("{name} must be in [0,1]")));
            }
        }
        Ok(())
    }

    /// Mean dark counts accumulated over the whole shot.
    pub fn dark_mean(&self) -> f64 {
        self.n_pulses as f64 * self.dark_rate_hz * self.detection_window_us * 1e-6
    }
}

/// Which state a simulated shot starts in.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum QubitState {
    Bright,
    Dark,
}

/// Normalized probability vector over photon number.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PhotonDistribution {
    p: Vec<f64>,
}

impl PhotonDistribution {
    pub fn from_probabilities(p: Vec<f64>) -> Self {
        PhotonDistribution { p }
    }

    pub fn probabilities(&self) -> &[f64] {
        &self.p
    }

    pub fn mean(&self) -> f64 {
        self.p.iter().enumerate().map(|(k, &v)| k as f64 * v).sum()
    }

    pub fn variance(&self) -> f64 {
        let m = self.mean();
        self.p
            .iter()
            .enumerate()
            .map(|(k, &v)| (k as f64 - m).powi(2) * v)
            .sum()
    }

    /// P(count < threshold).
    pub fn below(&self, threshold: u32) -> f64 {
        self.p.iter().take(threshold as usize).sum()
    }

    /// P(count >= threshold).
    pub fn at_least(&self, threshold: u32) -> f64 {
        1.0 - self.below(threshold)
    }

    pub fn total(&self) -> f64 {
        self.p.iter().sum()
    }

    /// Total-variation distance to another distribution.
    pub fn total_variation(&self, other: &PhotonDistribution) -> f64 {
        let n = self.p.len().max(other.p.len());
        let mut tv = 0.0;
        for k in 0..n {
            let a = self.p.get(k).copied().unwrap_or(0.0);
            let b = other.p.get(k).copied().unwrap_or(0.0);
            tv += (a - b).abs();
        }
        tv / 2.0
    }
}

fn poisson_pmf(lambda: f64, len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    if lambda == 0.0 {
        out[0] = 1.0;
        return out;
    }
    out[0] = (-lambda).exp();
    for k in 1..len {
        out[k] = out[k - 1] * lambda / k as f64;
    }
    out
}

fn convolve(a: &[f64], b: &[f64], len: usize) -> Vec<f64> {
    let mut out = vec![0.0; len];
    for (i, &x) in a.iter().enumerate() {
        if x == 0.0 {
            continue;
        }
        for (j, &y) in b.iter().enumerate() {
            if i + j >= len {
                break;
            }
            out[i + j] += x * y;
        }
    }
    out
}

/// Advance a binomial PMF by one Bernoulli(p) trial, in place.
fn binomial_step(pmf: &mut [f64], p: f64) {
    let q = 1.0 - p;
    for k in (1..pmf.len()).rev() {
        pmf[k] = pmf[k] * q + pmf[k - 1] * p;
    }
    pmf[0] *= q;
}

fn count_capacity(cfg: &ReadoutConfig) -> usize {
    let mean = cfg.n_pulses as f64 * cfg.excitation_prob * cfg.detection_prob
        + cfg.dark_mean()
        + cfg.n_pulses as f64 * cfg.leakage_prob * cfg.detection_prob;
    (mean + 12.0 * mean.sqrt() + 30.0).ceil() as usize
}

/// Exact analytic photon-count distributions of the bright and dark states.
///
/// The bright distribution is the mixture over the first-flip pulse of
/// binomial signal counts convolved with the Poisson dark background; the
/// dark distribution is leakage counts (binomial) convolved with the same
/// background.
pub fn analytic_distributions(
    cfg: &ReadoutConfig,
) -> Result<(PhotonDistribution, PhotonDistribution)> {
    cfg.validate()?;
    if cfg.dark_rate_hz > 0.0 && cfg.detection_window_us <= 0.0 {
        return Err(Error::InvalidParam(
            "detection window must be > 0 with nonzero dark rate".into(),
        ));
    }
    let len = count_capacity(cfg);
    let p_sig = cfg.excitation_prob * cfg.detection_prob;
    let q_flip = cfg.excitation_prob * cfg.flip_prob;

    // Signal mixture over the flip time: flip at pulse j leaves
    // Binomial(j−1, p_sig) clicks; no flip leaves Binomial(n, p_sig).
    let mut signal = vec![0.0; len];
    let mut binom = vec![0.0; len];
    binom[0] = 1.0;
    let mut survival = 1.0;
    for _pulse in 1..=cfg.n_pulses {
        if q_flip > 0.0 {
            let w = survival * q_flip;
            for (s, b) in signal.iter_mut().zip(&binom) {
                *s += w * b;
            }
            survival *= 1.0 - q_flip;
        }
        binomial_step(&mut binom, p_sig);
    }
    for (s, b) in signal.iter_mut().zip(&binom) {
        *s += survival * b;
    }

    let dark_counts = poisson_pmf(cfg.dark_mean(), len);
    let mut bright = convolve(&signal, &dark_counts, len);

    let mut leak = vec![0.0; len];
    leak[0] = 1.0;
    if cfg.leakage_prob > 0.0 {
        let p_leak = cfg.leakage_prob * cfg.detection_prob;
        for _ in 0..cfg.n_pulses {
            binomial_step(&mut leak, p_leak);
        }
    }
    let mut dark = convolve(&leak, &dark_counts, len);

    for dist in [&mut bright, &mut dark] {
        let total: f64 = dist.iter().sum();
        debug_assert!(total > 1.0 - 1e-9);
        for x in dist.iter_mut() {
            *x /= total;
        }
    }
    Ok((
        PhotonDistribution::from_probabilities(bright),
        PhotonDistribution::from_probabilities(dark),
    ))
}

/// Photon-count distribution with no excitation pulses at all: detector
/// dark counts only.
pub fn no_excitation_distribution(cfg: &ReadoutConfig) -> PhotonDistribution {
    let len = count_capacity(cfg);
    PhotonDistribution::from_probabilities(poisson_pmf(cfg.dark_mean(), len))
}

/// Simulate one shot and return the photon count.
pub fn simulate_shot(state: QubitState, cfg: &ReadoutConfig, rng: &mut StreamRng) -> u32 {
    let mut photons = 0u32;
    match state {
        QubitState::Bright => {
            let mut bright = true;
            for _ in 0..cfg.n_pulses {
                if bright && rng.bernoulli(cfg.excitation_prob) {
                    if rng.bernoulli(cfg.detection_prob) {
                        photons += 1;
                    }
                    if rng.bernoulli(cfg.flip_prob) {
                        bright = false;
                    }
                }
            }
        }
        QubitState::Dark => {
            if cfg.leakage_prob > 0.0 {
                for _ in 0..cfg.n_pulses {
                    if rng.bernoulli(cfg.leakage_prob) && rng.bernoulli(cfg.detection_prob) {
                        photons += 1;
                    }
                }
            }
        }
    }
    photons + rng.poisson(cfg.dark_mean())
}

/// Photon-count histogram over repeated shots.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Histogram {
    pub counts: BTreeMap<u32, u64>,
    pub n_shots: u64,
}

impl Histogram {
    pub fn to_distribution(&self) -> PhotonDistribution {
        let max = self.counts.keys().max().copied().unwrap_or(0) as usize;
        let mut p = vec![0.0; max + 1];
        for (&k, &c) in &self.counts {
            p[k as usize] = c as f64 / self.n_shots as f64;
        }
        PhotonDistribution::from_probabilities(p)
    }

    pub fn mean(&self) -> f64 {
        self.counts
            .iter()
            .map(|(&k, &c)| k as f64 * c as f64)
            .sum::<f64>()
            / self.n_shots as f64
    }
}

/// Simulate `shots` independent shots on parallel index-derived streams.
/// The merge is associative and order-fixed, so thread count never changes
/// the result.
pub fn simulate_histogram(
    state: QubitState,
    cfg: &ReadoutConfig,
    shots: u64,
    seed: u64,
    tag: &str,
) -> Histogram {
    let counts_per_shot: Vec<u32> = (0..shots)
        .into_par_iter()
        .map(|i| {
            let mut rng = StreamRng::new(seed, tag, i);
            simulate_shot(state, cfg, &mut rng)
        })
        .collect();
    let mut counts = BTreeMap::new();
    for c in counts_per_shot {
        *counts.entry(c).or_insert(0u64) += 1;
    }
    Histogram {
        counts,
        n_shots: shots,
    }
}

/// Assignment fidelities at a threshold: bright is assigned when
/// count >= threshold. Returns (min, average) over the two states.
pub fn fidelity(
    bright: &PhotonDistribution,
    dark: &PhotonDistribution,
    threshold: u32,
) -> (f64, f64) {
    let correct_bright = bright.at_least(threshold);
    let correct_dark = dark.below(threshold);
    (
        correct_bright.min(correct_dark),
        0.5 * (correct_bright + correct_dark),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FidelityPoint {
    pub n_pulses: usize,
    pub threshold: u32,
    pub min_fidelity: f64,
    pub avg_fidelity: f64,
}

/// Fidelity surface over a (pulse count, threshold) grid.
#[derive(Debug, Clone, Serialize)]
pub struct FidelityMap {
    pub points: Vec<FidelityPoint>,
}

impl FidelityMap {
    pub fn get(&self, n_pulses: usize, threshold: u32) -> Option<&FidelityPoint> {
        self.points
            .iter()
            .find(|p| p.n_pulses == n_pulses && p.threshold == threshold)
    }
}

/// Evaluate the analytic min-fidelity over the grid and return the map and
/// its argmax; ties break toward fewer pulses, then lower threshold.
pub fn optimize(
    cfg: &ReadoutConfig,
    pulse_range: std::ops::RangeInclusive<usize>,
    threshold_range: std::ops::RangeInclusive<u32>,
) -> Result<(FidelityMap, FidelityPoint)> {
    if pulse_range.is_empty() || threshold_range.is_empty() {
        return Err(Error::InvalidParam("optimize ranges must be non-empty".into()));
    }
    let mut points = Vec::new();
    let mut best: Option<FidelityPoint> = None;
    for n in pulse_range {
        let scan_cfg = ReadoutConfig { n_pulses: n, ..*cfg };
        let (bright, dark) = analytic_distributions(&scan_cfg)?;
        for thr in threshold_range.clone() {
            let (min_f, avg_f) = fidelity(&bright, &dark, thr);
            let point = FidelityPoint {
                n_pulses: n,
                threshold: thr,
                min_fidelity: min_f,
                avg_fidelity: avg_f,
            };
            points.push(point);
            if best.map_or(true, |b| min_f > b.min_fidelity) {
                best = Some(point);
            }
        }
    }
    Ok((FidelityMap { points }, best.expect("non-empty grid")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn calibrated_cfg() -> ReadoutConfig {
        // Window from the dark mean, excitation probability from the bright
        // mean; the full derivation lives in the calibration module, the
        // frozen values here are checked against it there.
        ReadoutConfig {
            excitation_prob: 0.692_483,
            flip_prob: 1.42e-4,
            ..ReadoutConfig::default()
        }
    }

    #[test]
    fn zero_signal_zero_dark_gives_delta_at_zero() {
        let cfg = ReadoutConfig {
            excitation_prob: 0.0,
            dark_rate_hz: 0.0,
            ..ReadoutConfig::default()
        };
        let (bright, dark) = analytic_distributions(&cfg).unwrap();
        assert_eq!(bright.probabilities()[0], 1.0);
        assert_eq!(dark.probabilities()[0], 1.0);
    }

    #[test]
    fn rejects_zero_window_with_dark_counts() {
        let cfg = ReadoutConfig {
            detection_window_us: 0.0,
            ..ReadoutConfig::default()
        };
        assert!(analytic_distributions(&cfg).is_err());
    }

    #[test]
    fn distributions_are_normalized() {
        let (bright, dark) = analytic_distributions(&calibrated_cfg()).unwrap();
        assert!((bright.total() - 1.0).abs() < 1e-9);
        assert!((dark.total() - 1.0).abs() < 1e-9);
    }

    #[test]
    fn zero_flip_reduces_to_plain_binomial_convolution() {
        // Oracle: direct convolution of Binomial(n, p_sig) with the Poisson
        // dark background, built independently of the mixture code path.
        let cfg = ReadoutConfig {
            flip_prob: 0.0,
            excitation_prob: 0.7,
            ..ReadoutConfig::default()
        };
        let (bright, _) = analytic_distributions(&cfg).unwrap();

        let len = bright.probabilities().len();
        let p_sig = cfg.excitation_prob * cfg.detection_prob;
        let mut binom = vec![0.0; len];
        // Binomial PMF via multiplicative recurrence.
        let n = cfg.n_pulses as f64;
        binom[0] = (1.0 - p_sig).powi(cfg.n_pulses as i32);
        for k in 1..len.min(cfg.n_pulses + 1) {
            binom[k] = binom[k - 1] * (n - (k as f64 - 1.0)) / k as f64 * p_sig / (1.0 - p_sig);
        }
        let oracle = convolve(&binom, &poisson_pmf(cfg.dark_mean(), len), len);
        for (a, b) in bright.probabilities().iter().zip(&oracle) {
            assert!((a - b).abs() < 1e-9);
        }
    }

    #[test]
    fn poisson_fidelity_oracle() {
        // Poisson(10.69) vs Poisson(2.356) at threshold 5: exact CDF sums.
        let bright = PhotonDistribution::from_probabilities(poisson_pmf(10.69, 80));
        let dark = PhotonDistribution::from_probabilities(poisson_pmf(2.356, 80));
        let (min_f, _) = fidelity(&bright, &dark, 5);
        let correct_dark: f64 = poisson_pmf(2.356, 5).iter().sum();
        assert!((correct_dark - 0.910).abs() < 5e-4, "dark side {correct_dark}");
        assert!((min_f - 0.910).abs() < 5e-4, "min {min_f}");
        assert!(bright.at_least(5) > dark.below(5));
    }

    #[test]
    fn identical_distributions_cap_fidelity_at_half() {
        let d = PhotonDistribution::from_probabilities(poisson_pmf(4.0, 60));
        for thr in 0..20 {
            let (min_f, _) = fidelity(&d, &d, thr);
            assert!(min_f <= 0.5 + 1e-12);
        }
    }

    #[test]
    fn fidelity_invariant_under_histogram_rescaling() {
        let mut h1 = Histogram {
            counts: BTreeMap::new(),
            n_shots: 0,
        };
        let mut h2 = Histogram {
            counts: BTreeMap::new(),
            n_shots: 0,
        };
        for (k, c) in [(0u32, 5u64), (2, 11), (7, 3)] {
            h1.counts.insert(k, c);
            h2.counts.insert(k, c * 17);
        }
        h1.n_shots = 19;
        h2.n_shots = 19 * 17;
        let d = PhotonDistribution::from_probabilities(poisson_pmf(1.0, 30));
        let f1 = fidelity(&h1.to_distribution(), &d, 3);
        let f2 = fidelity(&h2.to_distribution(), &d, 3);
        assert!((f1.0 - f2.0).abs() < 1e-12);
        assert!((f1.1 - f2.1).abs() < 1e-12);
    }

    #[test]
    fn dark_shots_without_noise_never_click() {
        let cfg = ReadoutConfig {
            dark_rate_hz: 0.0,
            leakage_prob: 0.0,
            ..ReadoutConfig::default()
        };
        let mut rng = StreamRng::new(5, "test", 0);
        for _ in 0..200 {
            assert_eq!(simulate_shot(QubitState::Dark, &cfg, &mut rng), 0);
        }
    }

    #[test]
    fn monte_carlo_matches_analytic_distribution() {
        // Oracle: the analytic distribution; 1e5 shots must agree within
        // total-variation consistent with multinomial noise.
        let cfg = calibrated_cfg();
        let shots = 100_000;
        let hist = simulate_histogram(QubitState::Bright, &cfg, shots, 4242, "readout-test");
        let (bright, _) = analytic_distributions(&cfg).unwrap();
        let tv = hist.to_distribution().total_variation(&bright);
        assert!(tv < 0.012, "total variation {tv}");
        let se = (bright.mean() / shots as f64).sqrt() * 3.0;
        assert!((hist.mean() - bright.mean()).abs() < se + 0.03);
    }

    #[test]
    fn bright_mean_strictly_decreasing_in_flip_prob() {
        let mut last = f64::INFINITY;
        for eps in [0.0, 1e-4, 1e-3, 5e-3, 2e-2] {
            let cfg = ReadoutConfig {
                flip_prob: eps,
                ..calibrated_cfg()
            };
            let (bright, _) = analytic_distributions(&cfg).unwrap();
            assert!(bright.mean() < last);
            last = bright.mean();
        }
    }

    #[test]
    fn fidelity_monotone_in_pulses_without_noise() {
        // threshold 1, no dark counts, no flips: more pulses never hurt.
        let cfg = ReadoutConfig {
            dark_rate_hz: 0.0,
            flip_prob: 0.0,
            ..calibrated_cfg()
        };
        let (_, argmax) = optimize(&cfg, 10..=60, 1..=1).unwrap();
        assert_eq!(argmax.n_pulses, 60);
        let (map, _) = optimize(&cfg, 10..=60, 1..=1).unwrap();
        let mut last = 0.0;
        for p in &map.points {
            assert!(p.min_fidelity >= last - 1e-12);
            last = p.min_fidelity;
        }
    }

    #[test]
    fn perfect_separation_fidelity_approaches_one() {
        let cfg = ReadoutConfig {
            dark_rate_hz: 0.0,
            flip_prob: 0.0,
            excitation_prob: 0.7,
            n_pulses: 200,
            ..ReadoutConfig::default()
        };
        let (bright, dark) = analytic_distributions(&cfg).unwrap();
        let (min_f, _) = fidelity(&bright, &dark, 1);
        assert!(min_f > 0.999_99);
    }

    #[test]
    fn no_excitation_matches_dark_minus_leakage() {
        let cfg = ReadoutConfig {
            leakage_prob: 0.02,
            ..calibrated_cfg()
        };
        let (_, dark) = analytic_distributions(&cfg).unwrap();
        let no_exc = no_excitation_distribution(&cfg);
        let leak_mean = cfg.n_pulses as f64 * cfg.leakage_prob * cfg.detection_prob;
        assert!((no_exc.mean() - (dark.mean() - leak_mean)).abs() < 0.02 * dark.mean());
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(24))]
        #[test]
        fn distributions_normalized_for_any_config(
            p_exc in 0.0..1.0f64,
            eps in 0.0..0.05f64,
            dark in 0.0..200.0f64,
            n in 1usize..200,
        ) {
            let cfg = ReadoutConfig {
                n_pulses: n,
                excitation_prob: p_exc,
                flip_prob: eps,
                dark_rate_hz: dark,
                ..ReadoutConfig::default()
            };
            let (bright, dark_d) = analytic_distributions(&cfg).unwrap();
            prop_assert!((bright.total() - 1.0).abs() < 1e-9);
            prop_assert!((dark_d.total() - 1.0).abs() < 1e-9);
            prop_assert!(bright.probabilities().iter().all(|&x| x >= 0.0));
        }
    }
}
