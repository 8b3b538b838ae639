//! Dynamical-decoupling scan: T_DD(N) from coherence-curve fits and the
//! power-law exponent across pulse numbers.

use super::{filter_chi, NoiseModel, SequenceSpec};
use crate::error::{Error, Result};
use crate::fitting::{fit_power_law, fit_stretched_exp_in, FitResult, StretchedDomain};
use serde::Serialize;

/// Coherence of the N-pulse sequence at time t (Hahn for N = 1).
pub(crate) fn sequence_coherence(n_pulses: usize, t: f64, noise: &NoiseModel) -> Result<f64> {
    let seq = if n_pulses == 1 {
        SequenceSpec::hahn(t)
    } else {
        SequenceSpec::xy(n_pulses, t)
    };
    Ok(filter_chi(&seq, noise)?.coherence())
}

/// Build a deterministic time grid covering the decay of `forward`:
/// expands from `t_seed` until the curve falls below 0.15, then lays out
/// `points` linear samples up to that time. Stopping well above zero keeps
/// the grid clear of any echo-revival structure beyond the decay.
pub fn decay_time_grid<F: Fn(f64) -> Result<f64>>(
    forward: &F,
    t_seed: f64,
    points: usize,
) -> Result<Vec<f64>> {
    const STOP: f64 = 0.15;
    let mut hi = t_seed.max(1e-9);
    let mut steps = 0;
    while forward(hi)? > STOP {
        hi *= 1.5;
        steps += 1;
        if steps > 150 {
            return Err(Error::FitFailure(
                "decay grid: curve never falls below the stop level".into(),
            ));
        }
    }
    while forward(hi / 1.5)? < STOP && hi > 1e-12 {
        hi /= 1.5;
        steps += 1;
        if steps > 300 {
            return Err(Error::FitFailure(
                "decay grid: curve below the stop level everywhere".into(),
            ));
        }
    }
    Ok((1..=points)
        .map(|k| hi * k as f64 / points as f64)
        .collect())
}

/// Fit a stretched exponential to a coherence curve and return the decay
/// time. The fit window ends where the curve first drops below 0.02, and
/// also at the first clear upturn once the curve has decayed below 0.35,
/// so revival or resonance structure past the decay cannot drag the fit.
pub fn fit_decay_time(times: &[f64], coherence: &[f64]) -> Result<FitResult> {
    let mut cut = coherence
        .iter()
        .position(|&c| c < 0.02)
        .unwrap_or(coherence.len());
    let mut fallen = false;
    for i in 1..cut {
        if coherence[i] < 0.35 {
            fallen = true;
        }
        if fallen && coherence[i] > coherence[i - 1] * 1.02 + 1e-4 {
            cut = i;
            break;
        }
    }
    let n = cut.max(8).min(times.len());
    fit_stretched_exp_in(
        &times[..n],
        &coherence[..n],
        None,
        None,
        Some(StretchedDomain::normalized_decay()),
    )
}

#[derive(Debug, Clone, Serialize)]
pub struct DdEntry {
    pub n_pulses: usize,
    pub times_s: Vec<f64>,
    pub coherence: Vec<f64>,
    /// Fitted decay time, s; None when the per-N fit failed.
    pub t_dd_s: Option<f64>,
    /// Linearized standard error of the decay time, when available.
    pub t_dd_se_s: Option<f64>,
    pub fit_error: Option<String>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DdScan {
    pub entries: Vec<DdEntry>,
    /// Power-law fit of T_DD(N) = a·N^b over the successful entries.
    pub exponent_fit: Option<FitResult>,
}

impl DdScan {
    pub fn exponent(&self) -> Option<f64> {
        self.exponent_fit.as_ref().map(|f| f.param("exponent"))
    }

    pub fn t_dd(&self, n_pulses: usize) -> Option<f64> {
        self.entries
            .iter()
            .find(|e| e.n_pulses == n_pulses)
            .and_then(|e| e.t_dd_s)
    }
}

/// Evaluate the coherence curve for every pulse count on its time grid,
/// fit T_DD(N), then fit the power law over N. Per-N fit failures are
/// recorded without aborting the scan; the exponent fit needs at least
/// three surviving points.
pub fn dd_scan(
    noise: &NoiseModel,
    pulse_counts: &[usize],
    grids: &[Vec<f64>],
) -> Result<DdScan> {
    if pulse_counts.is_empty() || pulse_counts.len() != grids.len() {
        return Err(Error::InvalidParam(
            "dd_scan needs one time grid per pulse count".into(),
        ));
    }
    let mut entries = Vec::with_capacity(pulse_counts.len());
    for (&n, grid) in pulse_counts.iter().zip(grids) {
        let mut coherence = Vec::with_capacity(grid.len());
        let mut failure = None;
        for &t in grid {
            match sequence_coherence(n, t, noise) {
                Ok(c) => coherence.push(c),
                Err(e) => {
                    failure = Some(e.to_string());
                    break;
                }
            }
        }
        let (t_dd_s, t_dd_se_s, fit_error) = if failure.is_some() {
            (None, None, failure)
        } else {
            match fit_decay_time(grid, &coherence) {
                Ok(fit) if fit.converged && fit.param("decay_time") > 0.0 => {
                    let se = fit
                        .standard_errors
                        .as_ref()
                        .and_then(|m| m.get("decay_time").copied());
                    (Some(fit.param("decay_time")), se, None)
                }
                Ok(_) => (None, None, Some("fit did not converge".into())),
                Err(e) => (None, None, Some(e.to_string())),
            }
        };
        entries.push(DdEntry {
            n_pulses: n,
            times_s: grid.clone(),
            coherence,
            t_dd_s,
            t_dd_se_s,
            fit_error,
        });
    }

    let good: Vec<(f64, f64)> = entries
        .iter()
        .filter_map(|e| e.t_dd_s.map(|t| (e.n_pulses as f64, t)))
        .collect();
    let exponent_fit = if good.len() >= 3 {
        let ns: Vec<f64> = good.iter().map(|g| g.0).collect();
        let ts: Vec<f64> = good.iter().map(|g| g.1).collect();
        fit_power_law(&ns, &ts).ok()
    } else {
        None
    };
    Ok(DdScan {
        entries,
        exponent_fit,
    })
}

/// Standard grid builder for a DD scan: for each N, seed from the previous
/// decay time scaled by the slow-bath N^(2/3) expectation.
pub fn auto_grids(
    noise: &NoiseModel,
    pulse_counts: &[usize],
    t_seed_first: f64,
    points: usize,
) -> Result<Vec<Vec<f64>>> {
    let mut grids = Vec::with_capacity(pulse_counts.len());
    let mut seed = t_seed_first;
    let mut last_n = None;
    for &n in pulse_counts {
        if let Some(last) = last_n {
            seed *= (n as f64 / last as f64).powf(2.0 / 3.0);
        }
        let forward = |t: f64| sequence_coherence(n, t, noise);
        let grid = decay_time_grid(&forward, seed, points)?;
        seed = grid[grid.len() / 2];
        last_n = Some(n);
        grids.push(grid);
    }
    Ok(grids)
}
