//! Optical-pumping initialization as a Markov chain over the eight ground
//! levels.
//!
//! Each pulse addresses one sideband transition; an excited atom completes
//! its optical decay before the next pulse acts, redistributing population
//! over the Δm_I ∈ {0, ±1} ground levels with the cavity-enhanced branching
//! probabilities. The all-red sequence makes |−7/2⟩ the unique absorbing
//! state.

use crate::cavity::{enhanced_rates, BranchingModel, CavityParams, EnhancedDecay};
use crate::error::{Error, Result};
use crate::levels::{SpinProjection, Transition, TransitionTable};
use serde::Serialize;

/// Probability distribution over the eight ground levels.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PopulationVector {
    p: [f64; 8],
}

impl PopulationVector {
    pub fn uniform() -> Self {
        PopulationVector { p: [1.0 / 8.0; 8] }
    }

    pub fn delta(m: SpinProjection) -> Self {
        let mut p = [0.0; 8];
        p[m.index()] = 1.0;
        PopulationVector { p }
    }

    pub fn from_probabilities(p: [f64; 8]) -> Result<Self> {
        let pop = PopulationVector { p };
        pop.validate()?;
        Ok(pop)
    }

    pub fn probability(&self, m: SpinProjection) -> f64 {
        self.p[m.index()]
    }

    pub fn probabilities(&self) -> &[f64; 8] {
        &self.p
    }

    pub fn sum(&self) -> f64 {
        self.p.iter().sum()
    }

    pub fn validate(&self) -> Result<()> {
        if self.p.iter().any(|&x| x < 0.0) {
            return Err(Error::InvalidParam("population entries must be >= 0".into()));
        }
        if (self.sum() - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidParam(format!(
                "population must sum to 1 within 1e-12, got {}",
                self.sum()
            )));
        }
        Ok(())
    }
}

/// One chirped pump pulse addressing a single sideband transition.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PumpPulse {
    pub target: Transition,
    pub duration_us: f64,
    pub chirp_span_mhz: f64,
    /// Probability that one application excites the addressed level.
    pub excitation_prob: f64,
}

impl PumpPulse {
    pub fn new(target: Transition, excitation_prob: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&excitation_prob) {
            return Err(Error::InvalidParam("excitation_prob must be in [0,1]".into()));
        }
        Ok(PumpPulse {
            target,
            duration_us: 20.0,
            chirp_span_mhz: 10.0,
            excitation_prob,
        })
    }
}

/// Ordered pulse train plus repetition count.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PumpSequence {
    pub pulses: Vec<PumpPulse>,
    pub repetitions: usize,
    /// The absorbing state this sequence prepares.
    pub target_state: SpinProjection,
}

/// The default all-red sequence: seven Δm_I = −1 excitations running from
/// (+7/2 → +5/2) down to (−5/2 → −7/2), absorbing into |−7/2⟩.
pub fn red_sequence(table: &TransitionTable, excitation_prob: f64) -> Result<PumpSequence> {
    init_other_state(SpinProjection::lowest(), table, excitation_prob)
}

/// Sequence whose unique absorbing state is `target`: red-sideband pulses
/// walk population down from above, blue-sideband pulses walk it up from
/// below.
pub fn init_other_state(
    target: SpinProjection,
    table: &TransitionTable,
    excitation_prob: f64,
) -> Result<PumpSequence> {
    let mut pulses = Vec::with_capacity(7);
    // From +7/2 down to just above the target: excite (g_m -> e_{m-1}).
    let mut tm = SpinProjection::highest();
    while tm != target {
        let e = tm.shifted(-1).expect("red sideband exists above target");
        let t = table
            .find(tm, e)
            .ok_or_else(|| Error::InvalidParam("transition missing from table".into()))?;
        pulses.push(PumpPulse::new(*t, excitation_prob)?);
        tm = e;
    }
    // From -7/2 up to just below the target: excite (g_m -> e_{m+1}).
    let mut bm = SpinProjection::lowest();
    while bm != target {
        let e = bm.shifted(1).expect("blue sideband exists below target");
        let t = table
            .find(bm, e)
            .ok_or_else(|| Error::InvalidParam("transition missing from table".into()))?;
        pulses.push(PumpPulse::new(*t, excitation_prob)?);
        bm = e;
    }
    Ok(PumpSequence {
        pulses,
        repetitions: 500,
        target_state: target,
    })
}

/// Precomputed per-excited-level decay channels at the pumping cavity
/// setting.
#[derive(Debug, Clone)]
pub struct PumpContext {
    decay: [EnhancedDecay; 8],
}

impl PumpContext {
    pub fn new(table: &TransitionTable, cavity: &CavityParams, branching: &BranchingModel) -> Self {
        let all = SpinProjection::all();
        let decay = std::array::from_fn(|i| enhanced_rates(all[i], table, cavity, branching));
        PumpContext { decay }
    }

    pub fn decay_of(&self, excited: SpinProjection) -> &EnhancedDecay {
        &self.decay[excited.index()]
    }
}

/// Apply one pulse: the excited fraction of the addressed ground level
/// decays back over the available channels; all other levels are untouched.
pub fn step(pop: &PopulationVector, pulse: &PumpPulse, decay: &EnhancedDecay) -> PopulationVector {
    debug_assert_eq!(decay.excited_m, pulse.target.excited_m);
    let mut p = *pop.probabilities();
    let moved = p[pulse.target.ground_m.index()] * pulse.excitation_prob;
    p[pulse.target.ground_m.index()] -= moved;
    for ch in &decay.channels {
        p[ch.target.index()] += moved * ch.probability;
    }
    PopulationVector { p }
}

/// Result of running a pump sequence.
#[derive(Debug, Clone, Serialize)]
pub struct PumpRun {
    /// Population of the target state after each repetition.
    pub trajectory: Vec<f64>,
    pub final_population: PopulationVector,
    pub final_fidelity: f64,
}

/// Apply `repetitions × pulses` in order and record the target-state
/// population after each repetition.
pub fn run(pop0: &PopulationVector, seq: &PumpSequence, ctx: &PumpContext) -> PumpRun {
    let mut pop = pop0.clone();
    let mut trajectory = Vec::with_capacity(seq.repetitions);
    for _ in 0..seq.repetitions {
        for pulse in &seq.pulses {
            pop = step(&pop, pulse, ctx.decay_of(pulse.target.excited_m));
        }
        trajectory.push(pop.probability(seq.target_state));
    }
    let final_fidelity = pop.probability(seq.target_state);
    PumpRun {
        trajectory,
        final_population: pop,
        final_fidelity,
    }
}
