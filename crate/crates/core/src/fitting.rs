//! Nonlinear least-squares fits for the model curves: stretched
//! exponential, damped cosine, and power law.
//!
//! The solver is a damped Gauss-Newton iteration with central-difference
//! Jacobians and a deterministic multi-start grid, so every fit result is
//! reproducible bit-for-bit. Uncertainties come from the linearized
//! covariance at the optimum; a seeded bootstrap is available as a
//! cross-check.

use crate::error::{Error, Result};
use crate::rng::StreamRng;
use serde::Serialize;
use std::collections::BTreeMap;

#[derive(Debug, Clone, Serialize)]
pub struct FitResult {
    pub parameters: BTreeMap<String, f64>,
    /// Present only when converged.
    pub standard_errors: Option<BTreeMap<String, f64>>,
    /// sqrt of the (weighted) residual sum of squares.
    pub residual_norm: f64,
    pub converged: bool,
    pub iterations: usize,
}

impl FitResult {
    pub fn param(&self, name: &str) -> f64 {
        self.parameters[name]
    }
}

// ---------------------------------------------------------------------------
// Gauss-Newton engine

struct GnOutcome {
    params: Vec<f64>,
    rss: f64,
    iterations: usize,
    converged: bool,
    rss_history: Vec<f64>,
}

fn rss_of(res: &[f64]) -> f64 {
    res.iter().map(|r| r * r).sum()
}

/// Solve (JᵀJ + λ·diag(JᵀJ))·x = Jᵀr by Gaussian elimination with partial
/// pivoting. Returns None on a singular system.
fn solve_normal(jtj: &[Vec<f64>], jtr: &[f64], lambda: f64) -> Option<Vec<f64>> {
    let n = jtr.len();
    let mut a: Vec<Vec<f64>> = (0..n)
        .map(|i| {
            let mut row = jtj[i].clone();
            row[i] += lambda * jtj[i][i].max(1e-300);
            row.push(jtr[i]);
            row
        })
        .collect();
    for col in 0..n {
        let pivot = (col..n).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        if a[pivot][col].abs() < 1e-300 {
            return None;
        }
        a.swap(col, pivot);
        for row in col + 1..n {
            let f = a[row][col] / a[col][col];
            for k in col..=n {
                a[row][k] -= f * a[col][k];
            }
        }
    }
    let mut x = vec![0.0; n];
    for i in (0..n).rev() {
        let mut s = a[i][n];
        for k in i + 1..n {
            s -= a[i][k] * x[k];
        }
        x[i] = s / a[i][i];
    }
    Some(x)
}

/// Damped Gauss-Newton on a residual closure. `residuals` returns None for
/// parameter values outside the model domain; such steps are rejected.
fn gauss_newton<F>(residuals: &F, start: &[f64], max_iter: usize) -> Option<GnOutcome>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n_params = start.len();
    let mut params = start.to_vec();
    let mut res = residuals(&params)?;
    let mut rss = rss_of(&res);
    let mut lambda = 1e-3;
    let mut history = vec![rss];
    let mut converged = false;
    let mut iterations = 0;

    for _ in 0..max_iter {
        iterations += 1;
        // Central-difference Jacobian, relative step 1e-6.
        let mut jac: Vec<Vec<f64>> = Vec::with_capacity(n_params);
        for i in 0..n_params {
            let h = 1e-6 * params[i].abs().max(1e-8);
            let mut up = params.clone();
            up[i] += h;
            let mut dn = params.clone();
            dn[i] -= h;
            // One-sided fallback at a domain edge.
            let (ru, rd, denom) = match (residuals(&up), residuals(&dn)) {
                (Some(a), Some(b)) => (a, b, 2.0 * h),
                (Some(a), None) => (a, res.clone(), h),
                (None, Some(b)) => (res.clone(), b, h),
                (None, None) => return None,
            };
            jac.push(
                ru.iter()
                    .zip(&rd)
                    .map(|(a, b)| (a - b) / denom)
                    .collect(),
            );
        }
        let mut jtj = vec![vec![0.0; n_params]; n_params];
        let mut jtr = vec![0.0; n_params];
        for i in 0..n_params {
            for j in i..n_params {
                let v: f64 = jac[i].iter().zip(&jac[j]).map(|(a, b)| a * b).sum();
                jtj[i][j] = v;
                jtj[j][i] = v;
            }
            jtr[i] = jac[i].iter().zip(&res).map(|(a, r)| a * r).sum();
        }

        let mut accepted = false;
        let mut any_evaluated = false;
        for _ in 0..12 {
            let Some(step) = solve_normal(&jtj, &jtr, lambda) else {
                lambda *= 10.0;
                continue;
            };
            let trial: Vec<f64> = params.iter().zip(&step).map(|(p, s)| p - s).collect();
            if let Some(trial_res) = residuals(&trial) {
                any_evaluated = true;
                let trial_rss = rss_of(&trial_res);
                if trial_rss <= rss {
                    let rel_drop = (rss - trial_rss) / rss.max(1e-300);
                    let rel_step = step
                        .iter()
                        .zip(&params)
                        .map(|(s, p)| (s / p.abs().max(1e-8)).abs())
                        .fold(0.0, f64::max);
                    params = trial;
                    res = trial_res;
                    rss = trial_rss;
                    history.push(rss);
                    lambda = (lambda / 3.0).max(1e-12);
                    accepted = true;
                    if rel_drop < 1e-10 || rel_step < 1e-8 {
                        converged = true;
                    }
                    break;
                }
            }
            lambda *= 10.0;
        }
        if !accepted {
            // No damping level improves the residual: the iterate sits at a
            // local minimum to working precision. Only an all-invalid trial
            // set (domain boundary) counts as a failure.
            converged = any_evaluated;
            break;
        }
        if converged {
            break;
        }
    }
    Some(GnOutcome {
        params,
        rss,
        iterations,
        converged,
        rss_history: history,
    })
}

/// Linearized parameter covariance at the optimum.
fn standard_errors<F>(
    residuals: &F,
    params: &[f64],
    rss: f64,
    n_points: usize,
) -> Option<Vec<f64>>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    let n_params = params.len();
    if n_points <= n_params {
        return None;
    }
    let mut jac: Vec<Vec<f64>> = Vec::with_capacity(n_params);
    for i in 0..n_params {
        let h = 1e-6 * params[i].abs().max(1e-8);
        let mut up = params.to_vec();
        up[i] += h;
        let mut dn = params.to_vec();
        dn[i] -= h;
        let ru = residuals(&up)?;
        let rd = residuals(&dn)?;
        jac.push(
            ru.iter()
                .zip(&rd)
                .map(|(a, b)| (a - b) / (2.0 * h))
                .collect(),
        );
    }
    let mut jtj = vec![vec![0.0; n_params]; n_params];
    for i in 0..n_params {
        for j in i..n_params {
            let v: f64 = jac[i].iter().zip(&jac[j]).map(|(a, b)| a * b).sum();
            jtj[i][j] = v;
            jtj[j][i] = v;
        }
    }
    let s2 = rss / (n_points - n_params) as f64;
    // Invert via n solves against unit vectors.
    let mut ses = Vec::with_capacity(n_params);
    for i in 0..n_params {
        let mut e = vec![0.0; n_params];
        e[i] = 1.0;
        let col = solve_normal(&jtj, &e, 0.0)?;
        let var = s2 * col[i];
        ses.push(if var >= 0.0 { var.sqrt() } else { f64::NAN });
    }
    Some(ses)
}

fn weighted<F>(y: &[f64], weights: Option<&[f64]>, model: F) -> impl Fn(&[f64]) -> Option<Vec<f64>>
where
    F: Fn(&[f64], usize) -> Option<f64>,
{
    let y = y.to_vec();
    let w: Vec<f64> = match weights {
        Some(w) => w.to_vec(),
        None => vec![1.0; y.len()],
    };
    move |params: &[f64]| {
        let mut out = Vec::with_capacity(y.len());
        for i in 0..y.len() {
            let m = model(params, i)?;
            if !m.is_finite() {
                return None;
            }
            out.push(w[i] * (m - y[i]));
        }
        Some(out)
    }
}

// ---------------------------------------------------------------------------
// Stretched exponential: A·exp(−(t/T)^x) + c

/// Domain restriction for stretched-exponential fits of normalized decay
/// curves: amplitude and offset stay near their physical values.
#[derive(Debug, Clone, Copy)]
pub struct StretchedDomain {
    pub amplitude: (f64, f64),
    pub offset: (f64, f64),
}

impl StretchedDomain {
    /// A coherence curve starts at 1 and decays toward 0.
    pub fn normalized_decay() -> Self {
        StretchedDomain {
            amplitude: (0.2, 1.5),
            offset: (-0.3, 0.3),
        }
    }
}

/// Fit `A·exp(−(t/T)^x) + c`. `fix_x` pins the stretch exponent. T is the
/// 1/e time of the amplitude term by construction.
pub fn fit_stretched_exp(
    t: &[f64],
    y: &[f64],
    weights: Option<&[f64]>,
    fix_x: Option<f64>,
) -> Result<FitResult> {
    fit_stretched_exp_in(t, y, weights, fix_x, None)
}

/// [`fit_stretched_exp`] with an explicit amplitude/offset domain.
pub fn fit_stretched_exp_in(
    t: &[f64],
    y: &[f64],
    weights: Option<&[f64]>,
    fix_x: Option<f64>,
    domain: Option<StretchedDomain>,
) -> Result<FitResult> {
    if t.len() != y.len() || t.len() < 4 {
        return Err(Error::FitFailure("need at least 4 points".into()));
    }
    if t.iter().any(|&x| !(x >= 0.0) || !x.is_finite()) || y.iter().any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("inputs must be finite with t >= 0".into()));
    }
    let y_span = y.iter().fold(f64::NEG_INFINITY, |a, &b| a.max(b))
        - y.iter().fold(f64::INFINITY, |a, &b| a.min(b));
    if y_span < 1e-12 {
        return Err(Error::FitFailure(
            "constant data: decay time unidentifiable".into(),
        ));
    }

    let a0 = y[0] - y[y.len() - 1];
    let c0 = y[y.len() - 1];
    // Seed T from the 1/e-crossing of the normalized data.
    let target = c0 + a0 / std::f64::consts::E;
    let t_seed = t
        .iter()
        .zip(y)
        .min_by(|(_, ya), (_, yb)| (*ya - target).abs().total_cmp(&(*yb - target).abs()))
        .map(|(&tt, _)| tt)
        .filter(|&tt| tt > 0.0)
        .unwrap_or_else(|| t[t.len() / 2].max(t[1]));

    // Amplitude and offset live on the data scale; bounding them keeps the
    // iteration out of the degenerate large-A/large-negative-c corridor.
    let y_abs_max = y.iter().fold(0.0f64, |a, &b| a.max(b.abs()));
    let scale_cap = 10.0 * (y_span + y_abs_max);
    let (a_dom, c_dom) = match domain {
        Some(d) => (d.amplitude, d.offset),
        None => ((-scale_cap, scale_cap), (-scale_cap, scale_cap)),
    };
    let t_ref = t.to_vec();
    let make_res = |fixed_x: Option<f64>| {
        let t_ref = t_ref.clone();
        weighted(y, weights, move |p: &[f64], i: usize| {
            let (a, tt, x, c) = match fixed_x {
                Some(fx) => (p[0], p[1], fx, p[2]),
                None => (p[0], p[1], p[2], p[3]),
            };
            if tt <= 0.0 || x <= 0.05 || x > 8.0 {
                return None;
            }
            if !(a_dom.0..=a_dom.1).contains(&a) || !(c_dom.0..=c_dom.1).contains(&c) {
                return None;
            }
            let arg = (t_ref[i] / tt).powf(x);
            Some(a * (-arg).exp() + c)
        })
    };

    let res_fn = make_res(fix_x);
    let x_starts: &[f64] = if fix_x.is_some() {
        &[0.0] // placeholder, unused
    } else {
        &[0.8, 1.5, 2.5, 3.5]
    };
    let a_start = a0.max(0.1).clamp(a_dom.0.max(-scale_cap), a_dom.1);
    let c_start = c0.clamp(c_dom.0, c_dom.1);
    let mut best: Option<GnOutcome> = None;
    for &mult in &[0.1, 0.316, 1.0, 3.16, 10.0] {
        for &x0 in x_starts {
            let start = match fix_x {
                Some(_) => vec![a_start, t_seed * mult, c_start],
                None => vec![a_start, t_seed * mult, x0, c_start],
            };
            if let Some(out) = gauss_newton(&res_fn, &start, 200) {
                if best.as_ref().map_or(true, |b| out.rss < b.rss) {
                    best = Some(out);
                }
            }
        }
    }
    let out = best.ok_or_else(|| Error::FitFailure("all starts failed".into()))?;
    finish_stretched(out, fix_x, &res_fn, t.len())
}

fn finish_stretched<F>(
    out: GnOutcome,
    fix_x: Option<f64>,
    res_fn: &F,
    n_points: usize,
) -> Result<FitResult>
where
    F: Fn(&[f64]) -> Option<Vec<f64>>,
{
    debug_assert!(out.rss_history.windows(2).all(|w| w[1] <= w[0] + 1e-15));
    let names: Vec<&str> = match fix_x {
        Some(_) => vec!["amplitude", "decay_time", "offset"],
        None => vec!["amplitude", "decay_time", "stretch", "offset"],
    };
    let mut parameters: BTreeMap<String, f64> = names
        .iter()
        .zip(&out.params)
        .map(|(n, &v)| (n.to_string(), v))
        .collect();
    if let Some(fx) = fix_x {
        parameters.insert("stretch".into(), fx);
    }
    let ses = if out.converged {
        standard_errors(res_fn, &out.params, out.rss, n_points).map(|v| {
            names
                .iter()
                .zip(v)
                .map(|(n, s)| (n.to_string(), s))
                .collect::<BTreeMap<_, _>>()
        })
    } else {
        None
    };
    Ok(FitResult {
        parameters,
        standard_errors: ses,
        residual_norm: out.rss.sqrt(),
        converged: out.converged,
        iterations: out.iterations,
    })
}

// ---------------------------------------------------------------------------
// Damped cosine: ½(1 + cos(Ω t)·exp(−(t/T_d)^x))

/// Fit `½(1 + cos(Ω·t)·exp(−(t/T_d)^x))`, seeding Ω from a discrete
/// spectral-peak estimate.
pub fn fit_damped_cosine(t: &[f64], y: &[f64]) -> Result<FitResult> {
    if t.len() != y.len() || t.len() < 8 {
        return Err(Error::FitFailure("need at least 8 points".into()));
    }
    if t.iter().chain(y.iter()).any(|v| !v.is_finite()) {
        return Err(Error::FitFailure("inputs must be finite".into()));
    }
    let span = t[t.len() - 1] - t[0];
    if span <= 0.0 {
        return Err(Error::FitFailure("time values must increase".into()));
    }
    // Periodogram of (2y − 1) over a deterministic frequency grid.
    let z: Vec<f64> = y.iter().map(|&v| 2.0 * v - 1.0).collect();
    let mut dts: Vec<f64> = t.windows(2).map(|w| w[1] - w[0]).collect();
    dts.sort_by(f64::total_cmp);
    let median_dt = dts[dts.len() / 2];
    let omega_max = std::f64::consts::PI / median_dt;
    let omega_min = std::f64::consts::TAU / (4.0 * span);
    let grid = 600;
    let mut best_omega = omega_min;
    let mut best_power = -1.0;
    for k in 0..grid {
        let omega = omega_min + (omega_max - omega_min) * k as f64 / (grid - 1) as f64;
        let (mut re, mut im) = (0.0, 0.0);
        for (&ti, &zi) in t.iter().zip(&z) {
            re += zi * (omega * ti).cos();
            im += zi * (omega * ti).sin();
        }
        let p = re * re + im * im;
        if p > best_power {
            best_power = p;
            best_omega = omega;
        }
    }
    let mean_sq: f64 = z.iter().map(|v| v * v).sum::<f64>();
    if best_power < 0.05 * mean_sq * t.len() as f64 / 2.0 {
        return Err(Error::FitFailure("no spectral peak found".into()));
    }

    let t_ref = t.to_vec();
    let res_fn = weighted(y, None, move |p: &[f64], i: usize| {
        let (omega, tt, x) = (p[0], p[1], p[2]);
        if omega <= 0.0 || tt <= 0.0 || x <= 0.05 || x > 8.0 {
            return None;
        }
        let env = (-(t_ref[i] / tt).powf(x)).exp();
        Some(0.5 * (1.0 + (omega * t_ref[i]).cos() * env))
    });

    let mut best: Option<GnOutcome> = None;
    for &tm in &[0.5, 2.0, 8.0] {
        for &x0 in &[1.0, 2.0] {
            let start = vec![best_omega, span * tm, x0];
            if let Some(out) = gauss_newton(&res_fn, &start, 300) {
                if best.as_ref().map_or(true, |b| out.rss < b.rss) {
                    best = Some(out);
                }
            }
        }
    }
    let out = best.ok_or_else(|| Error::FitFailure("all starts failed".into()))?;

    // Nyquist guard: a fitted frequency at the edge of the resolvable band
    // cannot be told apart from an alias of a faster oscillation.
    if out.params[0] > 0.92 * std::f64::consts::PI / median_dt {
        return Err(Error::FitFailure("sampling aliases the fitted frequency".into()));
    }
    if span * out.params[0] < std::f64::consts::TAU {
        return Err(Error::FitFailure("data spans less than one oscillation".into()));
    }

    let names = ["angular_frequency", "damping_time", "stretch"];
    let parameters: BTreeMap<String, f64> = names
        .iter()
        .zip(&out.params)
        .map(|(n, &v)| (n.to_string(), v))
        .collect();
    let ses = if out.converged {
        standard_errors(&res_fn, &out.params, out.rss, t.len()).map(|v| {
            names
                .iter()
                .zip(v)
                .map(|(n, s)| (n.to_string(), s))
                .collect::<BTreeMap<_, _>>()
        })
    } else {
        None
    };
    Ok(FitResult {
        parameters,
        standard_errors: ses,
        residual_norm: out.rss.sqrt(),
        converged: out.converged,
        iterations: out.iterations,
    })
}

// ---------------------------------------------------------------------------
// Power law: T = a·N^b via linear least squares on logs

pub fn fit_power_law(n: &[f64], t: &[f64]) -> Result<FitResult> {
    if n.len() != t.len() || n.len() < 3 {
        return Err(Error::FitFailure("need at least 3 points".into()));
    }
    if n.iter().chain(t.iter()).any(|&v| !(v > 0.0) || !v.is_finite()) {
        return Err(Error::FitFailure("power-law inputs must be positive and finite".into()));
    }
    let x: Vec<f64> = n.iter().map(|v| v.ln()).collect();
    let y: Vec<f64> = t.iter().map(|v| v.ln()).collect();
    let m = x.len() as f64;
    let xb = x.iter().sum::<f64>() / m;
    let yb = y.iter().sum::<f64>() / m;
    let sxx: f64 = x.iter().map(|v| (v - xb) * (v - xb)).sum();
    if sxx < 1e-12 {
        return Err(Error::FitFailure("all N equal: exponent unidentifiable".into()));
    }
    let sxy: f64 = x.iter().zip(&y).map(|(a, b)| (a - xb) * (b - yb)).sum();
    let b = sxy / sxx;
    let log_a = yb - b * xb;
    let rss: f64 = x
        .iter()
        .zip(&y)
        .map(|(xi, yi)| {
            let r = yi - (log_a + b * xi);
            r * r
        })
        .sum();
    let dof = (x.len() - 2).max(1) as f64;
    let s2 = rss / dof;
    let se_b = (s2 / sxx).sqrt();
    let se_log_a = (s2 * (1.0 / m + xb * xb / sxx)).sqrt();
    let a = log_a.exp();

    let mut parameters = BTreeMap::new();
    parameters.insert("prefactor".to_string(), a);
    parameters.insert("exponent".to_string(), b);
    let mut ses = BTreeMap::new();
    ses.insert("prefactor".to_string(), a * se_log_a);
    ses.insert("exponent".to_string(), se_b);
    Ok(FitResult {
        parameters,
        standard_errors: Some(ses),
        residual_norm: rss.sqrt(),
        converged: true,
        iterations: 1,
    })
}

// ---------------------------------------------------------------------------
// Bootstrap cross-check

/// Seeded pair-resampling bootstrap of any fit; returns the standard
/// deviation of each parameter across the resamples that converged.
pub fn bootstrap_standard_errors<F>(
    t: &[f64],
    y: &[f64],
    n_resamples: usize,
    seed: u64,
    fit: F,
) -> Result<BTreeMap<String, f64>>
where
    F: Fn(&[f64], &[f64]) -> Result<FitResult>,
{
    let n = t.len();
    let mut samples: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    let mut ok = 0usize;
    for r in 0..n_resamples {
        let mut rng = StreamRng::new(seed, "bootstrap", r as u64);
        let mut ti = Vec::with_capacity(n);
        let mut yi = Vec::with_capacity(n);
        let mut idx: Vec<usize> = (0..n).map(|_| (rng.uniform() * n as f64) as usize).collect();
        idx.sort_unstable();
        for &i in &idx {
            ti.push(t[i.min(n - 1)]);
            yi.push(y[i.min(n - 1)]);
        }
        if let Ok(fitres) = fit(&ti, &yi) {
            if fitres.converged {
                ok += 1;
                for (k, v) in fitres.parameters {
                    samples.entry(k).or_default().push(v);
                }
            }
        }
    }
    if ok < n_resamples / 4 {
        return Err(Error::FitFailure(format!(
            "bootstrap: only {ok}/{n_resamples} resamples converged"
        )));
    }
    Ok(samples
        .into_iter()
        .map(|(k, vs)| {
            let m = vs.iter().sum::<f64>() / vs.len() as f64;
            let var = vs.iter().map(|v| (v - m) * (v - m)).sum::<f64>() / (vs.len() - 1) as f64;
            (k, var.sqrt())
        })
        .collect())
}
