//! Filter-function evaluation of the dephasing exponent.
//!
//! χ(T) = (1/π)·∫₀^∞ S(ω)·|F(ω)|²/ω² dω with |F(ω)|² = ω²·|Y(ω)|²/2,
//! where Y(ω) = ∫₀^T y(t)·e^{iωt} dt is the transform of the ±1 toggling
//! function and S is the two-sided noise PSD. The white-floor part
//! integrates in closed form to S₀·T/2; the Ornstein-Uhlenbeck part is
//! integrated numerically over log-spaced panels sized to both the
//! Lorentzian knee and the filter oscillation period. Deterministic
//! sinusoids contribute an exactly-evaluated phase factor: cos(φ) for a
//! fixed phase, J₀(A·|Y(ω₀)|) when phase-averaged.

use super::{NoiseModel, SequenceSpec};
use crate::error::{Error, Result};
use serde::Serialize;

/// Complex value of Y(ω) for piecewise-constant toggling segments.
/// Stable at small ω·h through half-angle forms.
fn y_complex(segments: &[(f64, f64, f64)], omega: f64) -> (f64, f64) {
    if omega == 0.0 {
        let area: f64 = segments.iter().map(|&(a, b, y)| y * (b - a)).sum();
        return (area, 0.0);
    }
    let mut re = 0.0;
    let mut im = 0.0;
    for &(a, b, y) in segments {
        let h = b - a;
        // ∫_a^b e^{iωs} ds = e^{iωa}·(sin(ωh) + i·2sin²(ωh/2))/ω
        let sr = (omega * h).sin() / omega;
        let half = (0.5 * omega * h).sin();
        let si = 2.0 * half * half / omega;
        let (ca, sa) = ((omega * a).cos(), (omega * a).sin());
        re += y * (ca * sr - sa * si);
        im += y * (sa * sr + ca * si);
    }
    (re, im)
}

pub(super) fn y_abs(segments: &[(f64, f64, f64)], omega: f64) -> f64 {
    let (re, im) = y_complex(segments, omega);
    re.hypot(im)
}

pub(super) fn y_real_part(segments: &[(f64, f64, f64)], omega: f64, phase: f64) -> f64 {
    // ∫ y(s)·cos(ωs + φ) ds = Re[e^{iφ}·Y(ω)]
    let (re, im) = y_complex(segments, omega);
    phase.cos() * re - phase.sin() * im
}

/// Bessel function of the first kind, order zero (Abramowitz & Stegun
/// 9.4.1 / 9.4.3 rational approximations, |error| < 1.6e-8).
pub fn bessel_j0(x: f64) -> f64 {
    let ax = x.abs();
    if ax < 1e-2 {
        // Series keeps J₀(0) = 1 exact.
        let y = x * x;
        return 1.0 - y / 4.0 + y * y / 64.0 - y * y * y / 2304.0;
    }
    if ax < 8.0 {
        let y = x * x;
        let p1 = 57568490574.0 + y * (-13362590354.0 + y * (651619640.7
            + y * (-11214424.18 + y * (77392.33017 + y * (-184.9052456)))));
        let p2 = 57568490411.0 + y * (1029532985.0 + y * (9494680.718
            + y * (59272.64853 + y * (267.8532712 + y))));
        p1 / p2
    } else {
        let z = 8.0 / ax;
        let y = z * z;
        let xx = ax - 0.785398164;
        let p1 = 1.0 + y * (-0.1098628627e-2 + y * (0.2734510407e-4
            + y * (-0.2073370639e-5 + y * 0.2093887211e-6)));
        let p2 = -0.1562499995e-1 + y * (0.1430488765e-3 + y * (-0.6911147651e-5
            + y * (0.7621095161e-6 + y * (-0.934935152e-7))));
        (2.0 / (std::f64::consts::PI * ax)).sqrt() * (xx.cos() * p1 - z * xx.sin() * p2)
    }
}

struct PanelBudget {
    evals: usize,
    failed: bool,
}

/// Adaptive Simpson on [a, b] with absolute tolerance.
fn adaptive_simpson<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    tol: f64,
    depth: usize,
    budget: &mut PanelBudget,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    budget.evals += 2;
    let h = b - a;
    let whole = h / 6.0 * (fa + 4.0 * fm + fb);
    let left = h / 12.0 * (fa + 4.0 * flm + fm);
    let right = h / 12.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || budget.evals > 4_000_000 {
        budget.failed = true;
        return left + right + delta / 15.0;
    }
    if delta.abs() <= 15.0 * tol {
        return left + right + delta / 15.0;
    }
    adaptive_simpson(f, a, m, fa, flm, fm, 0.5 * tol, depth - 1, budget)
        + adaptive_simpson(f, m, b, fm, frm, fb, 0.5 * tol, depth - 1, budget)
}

fn integrate_panel<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    tol: f64,
    budget: &mut PanelBudget,
) -> f64 {
    let m = 0.5 * (a + b);
    let (fa, fm, fb) = (f(a), f(m), f(b));
    budget.evals += 3;
    adaptive_simpson(f, a, b, fa, fm, fb, tol, 48, budget)
}

/// Result of a filter-function evaluation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct ChiResult {
    /// Gaussian dephasing exponent (OU + white floor).
    pub chi: f64,
    /// Multiplicative factor from deterministic sinusoids, in [−1, 1].
    pub deterministic_factor: f64,
}

impl ChiResult {
    /// Signed coherence exp(−χ)·(deterministic factor).
    pub fn coherence(&self) -> f64 {
        (-self.chi).exp() * self.deterministic_factor
    }
}

/// Evaluate the dephasing exponent and the deterministic phase factor for
/// `seq` under `noise`.
pub fn filter_chi(seq: &SequenceSpec, noise: &NoiseModel) -> Result<ChiResult> {
    seq.validate()?;
    noise.validate()?;
    let segments = seq.segments();
    let t = seq.total_time_s;

    // White floor: closed form, any sequence.
    let mut chi = 0.5 * noise.white_floor * t;

    if noise.ou_sigma_rad_s > 0.0 {
        chi += ou_chi_quadrature(&segments, t, noise)?;
    }

    let mut det = 1.0;
    for s in &noise.sinusoids {
        if s.amplitude_rad_s == 0.0 {
            continue;
        }
        let omega0 = 2.0 * std::f64::consts::PI * s.frequency_hz;
        let factor_at = |w: f64| match s.phase {
            Some(phi) => (s.amplitude_rad_s * y_real_part(&segments, w, phi)).cos(),
            None => bessel_j0(s.amplitude_rad_s * y_abs(&segments, w)),
        };
        det *= if s.frequency_jitter > 0.0 {
            // Uniform band average over ω₀·(1 ± jitter), composite Simpson.
            let lo = omega0 * (1.0 - s.frequency_jitter);
            let hi = omega0 * (1.0 + s.frequency_jitter);
            let n = 32;
            let h = (hi - lo) / n as f64;
            let mut acc = factor_at(lo) + factor_at(hi);
            for k in 1..n {
                let w = lo + h * k as f64;
                acc += factor_at(w) * if k % 2 == 1 { 4.0 } else { 2.0 };
            }
            acc * h / 3.0 / (hi - lo)
        } else {
            factor_at(omega0)
        };
    }
    Ok(ChiResult {
        chi,
        deterministic_factor: det,
    })
}

/// χ_OU = (1/2π)·∫₀^∞ S_OU(ω)·|Y(ω)|² dω over log-spaced panels.
fn ou_chi_quadrature(
    segments: &[(f64, f64, f64)],
    t: f64,
    noise: &NoiseModel,
) -> Result<f64> {
    let n_seg = segments.len();
    let integrand = |omega: f64| noise.ou_psd(omega) * {
        let y = y_abs(segments, omega);
        y * y
    };

    // Scale estimate for the absolute tolerance: the quasi-static bound.
    let sigma2 = noise.ou_sigma_rad_s * noise.ou_sigma_rad_s;
    let chi_scale = (0.5 * sigma2 * t * t).min(0.5 * sigma2 * noise.ou_tau_s * t) + 1e-30;
    let tol_total = 1e-7 * chi_scale;

    // Panel edges: resolve the Lorentzian knee at 1/τ and the filter
    // structure around N/t; geometric growth in between, subdivided so no
    // panel spans more than ~6 oscillation periods of Y(ω).
    let omega_lo = (1.0 / noise.ou_tau_s).min(1.0 / t) * 1e-3;
    let omega_max = (300.0 * n_seg as f64 / t).max(30.0 / noise.ou_tau_s);
    let mut edges = vec![0.0, omega_lo];
    let mut w = omega_lo;
    while w < omega_max {
        let next = (w * 1.9).min(omega_max);
        let osc = 2.0 * std::f64::consts::PI / t;
        let n_sub = (((next - w) / (6.0 * osc)).ceil() as usize).clamp(1, 512);
        for k in 1..=n_sub {
            edges.push(w + (next - w) * k as f64 / n_sub as f64);
        }
        w = next;
    }

    let mut budget = PanelBudget {
        evals: 0,
        failed: false,
    };
    let tol_per_panel = tol_total / edges.len() as f64;
    let mut total = 0.0;
    for pair in edges.windows(2) {
        total += integrate_panel(&integrand, pair[0], pair[1], tol_per_panel, &mut budget);
    }
    if budget.failed {
        return Err(Error::QuadratureFailure {
            evals: budget.evals,
            residual: tol_total,
        });
    }

    // Truncation-tail estimate: beyond ω_max the integrand envelope falls
    // as ω⁻⁴, so ∫ tail ≈ g(ω)·ω/3. Sample several points to dodge the
    // oscillation nodes of |Y|².
    let tail = (0..8)
        .map(|k| {
            let w = omega_max * (1.0 + k as f64 / 7.0);
            integrand(w) * w / 3.0
        })
        .fold(0.0, f64::max)
        / (2.0 * std::f64::consts::PI);
    let chi = total / (2.0 * std::f64::consts::PI);
    if tail > 1e-3 * (chi.abs() + 1e-2 * chi_scale) {
        return Err(Error::QuadratureFailure {
            evals: budget.evals,
            residual: tail,
        });
    }
    Ok(chi)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::coherence::Sinusoid;

    /// Time-domain closed form of the OU dephasing exponent: the double
    /// integral of σ²·e^{−|t−t'|/τ} over the toggling segments. Fully
    /// independent of the frequency-domain quadrature above. The cross
    /// terms are regrouped into products of expm1 factors so the deep
    /// slow-noise limit does not cancel catastrophically.
    fn ou_chi_closed_form(seq: &SequenceSpec, sigma: f64, tau: f64) -> f64 {
        let segs = seq.segments();
        let mut acc = 0.0;
        for (i, &(a, b, ya)) in segs.iter().enumerate() {
            let h = b - a;
            let x = h / tau;
            // ∫∫ over one segment: 2τ²·(x + e^{−x} − 1)
            let same = if x < 1e-3 {
                x * x / 2.0 - x * x * x / 6.0 + x * x * x * x / 24.0
            } else {
                x + (-x).exp_m1()
            };
            acc += ya * ya * 2.0 * tau * tau * same;
            for &(c, d, yc) in segs.iter().skip(i + 1) {
                // ∫∫ over a disjoint pair with gap c−b:
                // τ²·expm1(−h₁/τ)·expm1(−h₂/τ)·e^{−gap/τ}
                let v = (-(b - a) / tau).exp_m1() * (-(d - c) / tau).exp_m1()
                    * (-(c - b) / tau).exp();
                acc += 2.0 * ya * yc * tau * tau * v;
            }
        }
        0.5 * sigma * sigma * acc
    }

    #[test]
    fn bessel_j0_reference_values() {
        assert!((bessel_j0(0.0) - 1.0).abs() < 1e-12);
        assert!((bessel_j0(1.0) - 0.7651976865579666).abs() < 2e-8);
        assert!(bessel_j0(2.404825557695773).abs() < 2e-8);
        assert!((bessel_j0(5.0) - (-0.17759677131433830)).abs() < 2e-8);
        assert!((bessel_j0(10.0) - (-0.2459357644513483)).abs() < 2e-8);
    }

    #[test]
    fn white_noise_free_evolution_is_exponential() {
        let noise = NoiseModel {
            ou_sigma_rad_s: 0.0,
            ou_tau_s: 1.0,
            sinusoids: vec![],
            white_floor: 100.0,
        };
        for &t in &[1e-4, 1e-3, 1e-2] {
            let r = filter_chi(&SequenceSpec::ramsey(t), &noise).unwrap();
            assert!((r.chi - 0.5 * 100.0 * t).abs() < 1e-12);
        }
    }

    #[test]
    fn quasi_static_ramsey_is_gaussian() {
        // τ much longer than t: χ → σ²t²/2.
        let noise = NoiseModel::pure_ou(2281.0, 1e4);
        for &t in &[1e-4, 3e-4, 6e-4] {
            let r = filter_chi(&SequenceSpec::ramsey(t), &noise).unwrap();
            let expected = 0.5 * (2281.0f64 * t).powi(2);
            assert!(
                (r.chi - expected).abs() / expected < 2e-3,
                "t = {t}: chi {} vs {expected}",
                r.chi
            );
        }
    }

    #[test]
    fn quadrature_matches_time_domain_closed_form() {
        // Dual-route check across sequences, times and correlation regimes.
        for &(sigma, tau) in &[(2281.0, 10.0), (2281.0, 0.01), (500.0, 1e4), (5e4, 1e-4)] {
            let noise = NoiseModel::pure_ou(sigma, tau);
            for seq in [
                SequenceSpec::ramsey(6e-4),
                SequenceSpec::hahn(15e-3),
                SequenceSpec::xy(8, 60e-3),
                SequenceSpec::xy(64, 0.28),
            ] {
                let quad = filter_chi(&seq, &noise).unwrap().chi;
                let exact = ou_chi_closed_form(&seq, sigma, tau);
                let tol = 2e-4 * (1.0 + exact);
                assert!(
                    (quad - exact).abs() < tol,
                    "{:?} N={} t={}: quad {quad} vs exact {exact} (sigma {sigma}, tau {tau})",
                    seq.kind,
                    seq.n_pi_pulses,
                    seq.total_time_s,
                );
            }
        }
    }

    #[test]
    fn hahn_cancels_static_offset_exactly() {
        // Constant detuning = zero-frequency sinusoid with fixed phase.
        let noise = NoiseModel {
            ou_sigma_rad_s: 0.0,
            ou_tau_s: 1.0,
            sinusoids: vec![Sinusoid::pure(5000.0, 0.0, Some(0.0))],
            white_floor: 0.0,
        };
        for &t in &[1e-3, 17e-3, 0.1] {
            let r = filter_chi(&SequenceSpec::hahn(t), &noise).unwrap();
            assert!((r.coherence() - 1.0).abs() < 1e-12, "t = {t}: {}", r.coherence());
        }
        // Ramsey does dephase under the same offset.
        let r = filter_chi(&SequenceSpec::ramsey(1e-3), &noise).unwrap();
        assert!(r.coherence() < 0.9);
    }

    #[test]
    fn hahn_sinusoid_revives_at_kernel_zero() {
        let f0 = 2.0 / 0.030;
        let noise = NoiseModel {
            ou_sigma_rad_s: 0.0,
            ou_tau_s: 1.0,
            sinusoids: vec![Sinusoid::pure(230.0, f0, None)],
            white_floor: 0.0,
        };
        let at = |t: f64| filter_chi(&SequenceSpec::hahn(t), &noise).unwrap().coherence();
        // Full rephasing when the echo's antisymmetric kernel crosses zero.
        assert!((at(0.030) - 1.0).abs() < 1e-9);
        // Deep collapse near the kernel maximum at half the revival time.
        assert!(at(0.015) < 0.3);
    }

    #[test]
    fn xy_filter_is_dc_insensitive() {
        // The filter |F(ω)|² = ω²|Y(ω)|²/2 must vanish at least as ω² at
        // DC. Hahn has |Y| → c·ω (filter ∝ ω⁴); the time-symmetric even-N
        // XY train has a vanishing first moment too, so |Y| → c·ω².
        let hahn = SequenceSpec::hahn(1e-2).segments();
        let ratio_h = y_abs(&hahn, 2e-3) / y_abs(&hahn, 1e-3);
        assert!((ratio_h - 2.0).abs() < 0.01, "Hahn |Y| ratio {ratio_h}");

        let xy = SequenceSpec::xy(8, 1e-2).segments();
        let ratio_xy = y_abs(&xy, 2e-3) / y_abs(&xy, 1e-3);
        assert!((ratio_xy - 4.0).abs() < 0.02, "XY-8 |Y| ratio {ratio_xy}");

        // Filter suppression at DC in absolute terms.
        for segs in [&hahn, &xy] {
            let omega = 1e-3;
            let f2 = omega * omega * y_abs(segs, omega).powi(2) / 2.0;
            assert!(f2 < 1e-9);
        }
    }

    #[test]
    fn chi_nonnegative_and_coherence_bounded() {
        let noise = NoiseModel::default();
        for seq in [
            SequenceSpec::ramsey(5e-4),
            SequenceSpec::hahn(2e-2),
            SequenceSpec::xy(16, 0.1),
        ] {
            let r = filter_chi(&seq, &noise).unwrap();
            assert!(r.chi >= 0.0);
            assert!(r.coherence().abs() <= 1.0);
        }
    }
}
