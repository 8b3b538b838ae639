//! Hyperfine level structure of the optical ground and excited manifolds.
//!
//! Both manifolds hold eight nuclear-spin levels (I = 7/2). Level energies
//! follow an effective linear-plus-quadratic model per manifold,
//! `E(m) = a·m + q·(m² − I(I+1)/3)`, in MHz. All transition frequencies are
//! stored as offsets relative to the (−7/2 → −7/2) spin-preserving line; the
//! absolute optical carrier is a label only.

use crate::error::{Error, Result};
use serde::{Deserialize, Serialize};

/// Nuclear spin projection m_I for I = 7/2, stored as 2·m_I.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct SpinProjection {
    twice_m_i: i8,
}

impl SpinProjection {
    pub fn from_twice(twice_m_i: i8) -> Result<Self> {
        if twice_m_i % 2 == 0 || twice_m_i.abs() > 7 {
            return Err(Error::InvalidParam(format!(
                "2·m_I must be odd with |2·m_I| <= 7, got {twice_m_i}"
            )));
        }
        Ok(SpinProjection { twice_m_i })
    }

    /// All eight projections, from −7/2 to +7/2.
    pub fn all() -> [SpinProjection; 8] {
        let mut out = [SpinProjection { twice_m_i: -7 }; 8];
        for (i, slot) in out.iter_mut().enumerate() {
            slot.twice_m_i = -7 + 2 * i as i8;
        }
        out
    }

    pub fn lowest() -> SpinProjection {
        SpinProjection { twice_m_i: -7 }
    }

    pub fn highest() -> SpinProjection {
        SpinProjection { twice_m_i: 7 }
    }

    pub fn twice(self) -> i8 {
        self.twice_m_i
    }

    /// m_I as a float (half-integer).
    pub fn value(self) -> f64 {
        self.twice_m_i as f64 / 2.0
    }

    /// Index 0..8 from −7/2 upward.
    pub fn index(self) -> usize {
        ((self.twice_m_i + 7) / 2) as usize
    }

    /// Neighboring projection shifted by `delta` quanta, if it exists.
    pub fn shifted(self, delta: i8) -> Option<SpinProjection> {
        SpinProjection::from_twice(self.twice_m_i + 2 * delta).ok()
    }
}

impl std::fmt::Display for SpinProjection {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/2", self.twice_m_i)
    }
}

/// Effective energy coefficients per manifold, MHz.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelCoefficients {
    pub a_g: f64,
    pub q_g: f64,
    pub a_e: f64,
    pub q_e: f64,
}

impl Default for LevelCoefficients {
    /// Defaults chosen so the largest neighboring ground-level gap is
    /// 900 MHz (a_g + 6·q_g) and spin-preserving lines increase strictly
    /// with m_I.
    fn default() -> Self {
        LevelCoefficients {
            a_g: 750.0,
            q_g: 25.0,
            a_e: 850.0,
            q_e: 30.0,
        }
    }
}

const I_TERM: f64 = 5.25; // I(I+1)/3 for I = 7/2

fn manifold_energy(m: f64, a: f64, q: f64) -> f64 {
    a * m + q * (m * m - I_TERM)
}

/// Level energies of both manifolds, MHz offsets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelScheme {
    ground: [f64; 8],
    excited: [f64; 8],
    pub carrier_frequency_label: String,
}

pub fn build_level_scheme(coeffs: &LevelCoefficients) -> Result<LevelScheme> {
    for (name, v) in [
        ("a_g", coeffs.a_g),
        ("q_g", coeffs.q_g),
        ("a_e", coeffs.a_e),
        ("q_e", coeffs.q_e),
    ] {
        if !v.is_finite() {
            return Err(Error::InvalidParam(format!("{name} is not finite")));
        }
    }
    let mut ground = [0.0; 8];
    let mut excited = [0.0; 8];
    for m in SpinProjection::all() {
        ground[m.index()] = manifold_energy(m.value(), coeffs.a_g, coeffs.q_g);
        excited[m.index()] = manifold_energy(m.value(), coeffs.a_e, coeffs.q_e);
    }
    let scheme = LevelScheme {
        ground,
        excited,
        carrier_frequency_label: "1536.4 nm".to_string(),
    };
    // Reject coefficient sets whose spin-preserving lines are not strictly
    // increasing with m_I, unless fully degenerate (all-zero coupling).
    let offsets: Vec<f64> = SpinProjection::all()
        .iter()
        .map(|&m| scheme.preserving_offset(m))
        .collect();
    let degenerate = offsets.iter().all(|&o| o == 0.0);
    if !degenerate {
        for w in offsets.windows(2) {
            if w[1] <= w[0] {
                return Err(Error::NonMonotonicScheme(format!(
                    "spin-preserving offsets not strictly increasing ({} then {})",
                    w[0], w[1]
                )));
            }
        }
    }
    Ok(scheme)
}

impl LevelScheme {
    pub fn ground_energy(&self, m: SpinProjection) -> f64 {
        self.ground[m.index()]
    }

    pub fn excited_energy(&self, m: SpinProjection) -> f64 {
        self.excited[m.index()]
    }

    /// Frequency of the (−7/2 → −7/2) readout line; all offsets are
    /// measured from it.
    fn reference(&self) -> f64 {
        self.excited[0] - self.ground[0]
    }

    /// Offset of the transition g_m → e_m' relative to the readout line.
    pub fn transition_offset(&self, ground_m: SpinProjection, excited_m: SpinProjection) -> f64 {
        self.excited_energy(excited_m) - self.ground_energy(ground_m) - self.reference()
    }

    /// Offset of the spin-preserving line of level m.
    pub fn preserving_offset(&self, m: SpinProjection) -> f64 {
        self.transition_offset(m, m)
    }

    /// Largest gap between neighboring ground levels, MHz.
    pub fn max_ground_gap(&self) -> f64 {
        self.ground
            .windows(2)
            .map(|w| (w[1] - w[0]).abs())
            .fold(0.0, f64::max)
    }
}

/// One optical transition between the manifolds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Transition {
    pub ground_m: SpinProjection,
    pub excited_m: SpinProjection,
    /// excited − ground, in units of one quantum: −1, 0 or +1.
    pub delta_m: i8,
    /// MHz relative to the (−7/2 → −7/2) line.
    pub frequency_offset: f64,
}

/// All 22 allowed transitions: 8 spin-preserving, 7 per sideband.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransitionTable {
    transitions: Vec<Transition>,
}

pub fn list_transitions(scheme: &LevelScheme) -> TransitionTable {
    let mut transitions = Vec::with_capacity(22);
    for g in SpinProjection::all() {
        for delta in [-1i8, 0, 1] {
            if let Some(e) = g.shifted(delta) {
                transitions.push(Transition {
                    ground_m: g,
                    excited_m: e,
                    delta_m: delta,
                    frequency_offset: scheme.transition_offset(g, e),
                });
            }
        }
    }
    TransitionTable { transitions }
}

impl TransitionTable {
    pub fn len(&self) -> usize {
        self.transitions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.transitions.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &Transition> {
        self.transitions.iter()
    }

    pub fn find(&self, ground_m: SpinProjection, excited_m: SpinProjection) -> Option<&Transition> {
        self.transitions
            .iter()
            .find(|t| t.ground_m == ground_m && t.excited_m == excited_m)
    }

    /// The eight Δm = 0 lines, ordered by m_I.
    pub fn preserving(&self) -> Vec<&Transition> {
        self.transitions.iter().filter(|t| t.delta_m == 0).collect()
    }

    pub fn count_by_delta(&self, delta: i8) -> usize {
        self.transitions.iter().filter(|t| t.delta_m == delta).count()
    }
}

/// One sample of a synthetic fluorescence-scan spectrum.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct SpectrumPoint {
    pub frequency_mhz: f64,
    pub intensity: f64,
    pub is_assigned_line: bool,
}

/// Sampling grid for [`synth_spectrum`].
#[derive(Debug, Clone, Copy)]
pub struct SpectrumGrid {
    pub step_mhz: f64,
    pub line_width_mhz: f64,
    pub margin_mhz: f64,
}

impl Default for SpectrumGrid {
    fn default() -> Self {
        SpectrumGrid {
            step_mhz: 1.0,
            line_width_mhz: 2.0,
            margin_mhz: 100.0,
        }
    }
}

/// Synthetic single-emitter fluorescence scan: one Lorentzian peak per
/// transition weighted by `weights` (same order as the table), on a flat
/// background floor. Grid points nearest to a spin-preserving line carry
/// the assigned-line marker.
pub fn synth_spectrum(
    table: &TransitionTable,
    weights: &[f64],
    background: f64,
    grid: &SpectrumGrid,
) -> Vec<SpectrumPoint> {
    assert_eq!(
        weights.len(),
        table.len(),
        "one weight per transition expected"
    );
    let lo = table
        .iter()
        .map(|t| t.frequency_offset)
        .fold(f64::INFINITY, f64::min)
        - grid.margin_mhz;
    let hi = table
        .iter()
        .map(|t| t.frequency_offset)
        .fold(f64::NEG_INFINITY, f64::max)
        + grid.margin_mhz;
    let n = ((hi - lo) / grid.step_mhz).ceil() as usize + 1;
    let gamma = grid.line_width_mhz / 2.0;

    let assigned: Vec<usize> = table
        .preserving()
        .iter()
        .map(|t| (((t.frequency_offset - lo) / grid.step_mhz).round() as usize).min(n - 1))
        .collect();

    (0..n)
        .map(|i| {
            let f = lo + i as f64 * grid.step_mhz;
            let mut intensity = background;
            for (t, &w) in table.iter().zip(weights) {
                let d = f - t.frequency_offset;
                intensity += w / (1.0 + (d / gamma) * (d / gamma));
            }
            SpectrumPoint {
                frequency_mhz: f,
                intensity,
                is_assigned_line: assigned.contains(&i),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn default_scheme() -> LevelScheme {
        build_level_scheme(&LevelCoefficients::default()).unwrap()
    }

    #[test]
    fn projections_enumerate_eight_half_integers() {
        let all = SpinProjection::all();
        assert_eq!(all.len(), 8);
        assert_eq!(all[0].value(), -3.5);
        assert_eq!(all[7].value(), 3.5);
        assert!(SpinProjection::from_twice(4).is_err());
        assert!(SpinProjection::from_twice(9).is_err());
    }

    #[test]
    fn zero_coupling_degenerates_all_transitions() {
        let scheme = build_level_scheme(&LevelCoefficients {
            a_g: 0.0,
            q_g: 0.0,
            a_e: 0.0,
            q_e: 0.0,
        })
        .unwrap();
        let table = list_transitions(&scheme);
        assert_eq!(table.len(), 22);
        for t in table.iter() {
            assert_eq!(t.frequency_offset, 0.0);
        }
    }

    #[test]
    fn default_max_ground_gap_is_900_mhz() {
        let scheme = default_scheme();
        assert!((scheme.max_ground_gap() - 900.0).abs() < 1e-9);
    }

    #[test]
    fn default_preserving_offsets_strictly_increase() {
        let scheme = default_scheme();
        let offsets: Vec<f64> = SpinProjection::all()
            .iter()
            .map(|&m| scheme.preserving_offset(m))
            .collect();
        assert_eq!(offsets[0], 0.0);
        for w in offsets.windows(2) {
            assert!(w[1] > w[0]);
        }
    }

    #[test]
    fn non_monotonic_coefficients_are_rejected() {
        // Excited slope below ground slope flips the line ordering.
        let r = build_level_scheme(&LevelCoefficients {
            a_g: 750.0,
            q_g: 25.0,
            a_e: 700.0,
            q_e: 0.0,
        });
        assert!(matches!(r, Err(Error::NonMonotonicScheme(_))));
    }

    #[test]
    fn table_has_22_transitions_split_8_7_7() {
        let table = list_transitions(&default_scheme());
        assert_eq!(table.len(), 22);
        assert_eq!(table.count_by_delta(0), 8);
        assert_eq!(table.count_by_delta(1), 7);
        assert_eq!(table.count_by_delta(-1), 7);
    }

    #[test]
    fn red_sideband_from_minus_5_2_sits_below_readout_line() {
        // Sign check: exciting g(−5/2) → e(−7/2) must lie below the 0-offset
        // line by exactly the lowest ground gap.
        let scheme = default_scheme();
        let table = list_transitions(&scheme);
        let g = SpinProjection::from_twice(-5).unwrap();
        let e = SpinProjection::from_twice(-7).unwrap();
        let t = table.find(g, e).unwrap();
        let expected = -(scheme.ground_energy(g) - scheme.ground_energy(e));
        assert!(t.frequency_offset < 0.0);
        assert!((t.frequency_offset - expected).abs() < 1e-9);
        assert!((t.frequency_offset - (-600.0)).abs() < 1e-9);
    }

    #[test]
    fn no_transition_exceeds_one_quantum() {
        let table = list_transitions(&default_scheme());
        for t in table.iter() {
            assert!((t.excited_m.twice() - t.ground_m.twice()).abs() <= 2);
            assert_eq!(
                t.delta_m as i16,
                ((t.excited_m.twice() - t.ground_m.twice()) / 2) as i16
            );
        }
    }

    #[test]
    fn spectrum_flat_background_for_zero_weights() {
        let table = list_transitions(&default_scheme());
        let weights = vec![0.0; table.len()];
        let pts = synth_spectrum(&table, &weights, 0.36, &SpectrumGrid::default());
        for p in &pts {
            assert_eq!(p.intensity, 0.36);
        }
        assert_eq!(pts.iter().filter(|p| p.is_assigned_line).count(), 8);
    }

    #[test]
    fn cavity_tuned_line_dominates_spectrum() {
        // Weights from the Lorentzian Purcell profile at each offset: the
        // readout line at offset 0 must carry the strongest peak.
        let scheme = default_scheme();
        let table = list_transitions(&scheme);
        let params = crate::cavity::CavityParams::default();
        let weights: Vec<f64> = table
            .iter()
            .map(|t| {
                crate::cavity::purcell_factor(t.frequency_offset - params.detuning_mhz, &params)
                    / params.peak_purcell
            })
            .collect();
        let pts = synth_spectrum(&table, &weights, 0.0, &SpectrumGrid::default());
        let peak = pts
            .iter()
            .max_by(|a, b| a.intensity.total_cmp(&b.intensity))
            .unwrap();
        assert!(peak.frequency_mhz.abs() < 1.5, "peak at {}", peak.frequency_mhz);

        // Relative Purcell weights fall off with line offset, matching the
        // frequency-selective enhancement ordering.
        let preserving = table.preserving();
        let w_of = |m: usize| {
            let t = preserving[m];
            crate::cavity::purcell_factor(t.frequency_offset, &params) / params.peak_purcell
        };
        for i in 0..7 {
            assert!(w_of(i) > w_of(i + 1));
        }
    }

    proptest! {
        /// Negating every coefficient negates every transition offset.
        #[test]
        fn offsets_antisymmetric_under_sign_flip(
            a_g in 300.0..900.0f64,
            q_g in -30.0..30.0f64,
            da in 50.0..200.0f64,
            q_e in -30.0..30.0f64,
        ) {
            prop_assume!(da > 6.0 * (q_e - q_g).abs() + 1e-6);
            let coeffs = LevelCoefficients { a_g, q_g, a_e: a_g + da, q_e };
            let flipped = LevelCoefficients {
                a_g: -coeffs.a_g,
                q_g: -coeffs.q_g,
                a_e: -coeffs.a_e,
                q_e: -coeffs.q_e,
            };
            let t1 = list_transitions(&build_level_scheme(&coeffs).unwrap());
            // The flipped scheme reverses the line ordering, so build the
            // energies directly and compare offsets as multisets.
            let mut o1: Vec<f64> = t1.iter().map(|t| t.frequency_offset).collect();
            let mut ground = [0.0; 8];
            let mut excited = [0.0; 8];
            for m in SpinProjection::all() {
                ground[m.index()] = manifold_energy(m.value(), flipped.a_g, flipped.q_g);
                excited[m.index()] = manifold_energy(m.value(), flipped.a_e, flipped.q_e);
            }
            let reference = excited[0] - ground[0];
            let mut o2: Vec<f64> = t1.iter().map(|t| {
                -(excited[t.excited_m.index()] - ground[t.ground_m.index()] - reference)
            }).collect();
            o1.sort_by(f64::total_cmp);
            o2.sort_by(f64::total_cmp);
            for (x, y) in o1.iter().zip(&o2) {
                prop_assert!((x - y).abs() < 1e-6 * (1.0 + x.abs()));
            }
        }

        #[test]
        fn table_cardinality_invariant(
            a_g in 300.0..900.0f64,
            q_g in -30.0..30.0f64,
            da in 50.0..200.0f64,
            q_e in -30.0..30.0f64,
        ) {
            prop_assume!(da > 6.0 * (q_e - q_g).abs() + 1e-6);
            let coeffs = LevelCoefficients { a_g, q_g, a_e: a_g + da, q_e };
            let table = list_transitions(&build_level_scheme(&coeffs).unwrap());
            prop_assert_eq!(table.len(), 22);
            prop_assert_eq!(table.count_by_delta(0), 8);
            prop_assert_eq!(table.count_by_delta(1), 7);
            prop_assert_eq!(table.count_by_delta(-1), 7);
        }
    }
}
