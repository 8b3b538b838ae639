//! Command-line entry point: every experiment as a subcommand with a
//! shared config file, a global seed, and figure-equivalent CSV/JSON
//! outputs. Exit codes: 0 success, 2 config error, 3 numerical failure,
//! 4 infeasible calibration.

mod output;

use clap::{Args, Parser, Subcommand};
use nsqsim_core::calibration::{
    self, calibrate_branching, calibrate_noise, calibrate_readout, calibrate_readout_surface,
    NoiseTargets, ReadoutObservables,
};
use nsqsim_core::cavity::{purcell_factor, reflection, BranchingModel};
use nsqsim_core::coherence::{
    auto_grids, coherence_mc, dd_scan, effective_rabi, filter_chi, simulate_rabi, SequenceSpec,
};
use nsqsim_core::config::RunConfig;
use nsqsim_core::error::Error;
use nsqsim_core::fitting::{fit_damped_cosine, fit_power_law, fit_stretched_exp};
use nsqsim_core::levels::{
    build_level_scheme, list_transitions, synth_spectrum, SpectrumGrid, SpinProjection,
};
use nsqsim_core::pumping::{init_other_state, run as pump_run, PopulationVector, PumpContext};
use nsqsim_core::readout::{
    analytic_distributions, fidelity, no_excitation_distribution, optimize, simulate_histogram,
    QubitState,
};
use output::{b, f, u, OutDir, PlotSpec, Series, PALETTE};
use std::path::PathBuf;
use std::process::ExitCode;

#[derive(Parser)]
#[command(name = "nsqsim", version, about = "Cavity-enhanced nuclear-spin qubit simulator")]
struct Cli {
    /// Config file path; NSQSIM_CONFIG overrides the default location.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Global seed, overrides the config value.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Output directory, overrides the config value.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Worker-thread cap.
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Also render SVG figures next to the CSV outputs.
    #[arg(long, global = true)]
    svg: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Synthetic single-emitter fluorescence scan over all 22 transitions.
    Spectrum {
        /// Background floor level.
        #[arg(long, default_value_t = 0.36)]
        background: f64,
    },
    /// Purcell factor versus detuning, plus the reflection profile.
    Purcell {
        #[arg(long, default_value_t = -1000.0)]
        min_mhz: f64,
        #[arg(long, default_value_t = 1000.0)]
        max_mhz: f64,
        #[arg(long, default_value_t = 1.0)]
        step_mhz: f64,
    },
    /// Optical-pumping initialization trajectory.
    Pump {
        #[arg(long)]
        reps: Option<usize>,
        /// Target level as 2·m_I (odd, -7..=7).
        #[arg(long, default_value_t = -7)]
        target: i8,
    },
    /// Single-shot readout histograms and fidelity.
    Readout(ReadoutArgs),
    /// Fidelity map over (pulse count, threshold).
    ReadoutMap {
        #[arg(long, default_value_t = 10)]
        min_pulses: usize,
        #[arg(long, default_value_t = 200)]
        max_pulses: usize,
        #[arg(long, default_value_t = 10)]
        max_threshold: u32,
    },
    /// Raman Rabi fringe.
    Rabi {
        #[arg(long, default_value_t = 60)]
        points: usize,
        #[arg(long, default_value_t = 4000)]
        traj: usize,
    },
    /// Ramsey dephasing curve and T2* fit.
    Ramsey(SequenceArgs),
    /// Hahn-echo coherence curve, decay fit, and revival location.
    Echo(SequenceArgs),
    /// Dynamical-decoupling scan: T_DD(N) and the power-law exponent.
    Dd {
        /// Pulse counts, comma separated.
        #[arg(long, default_value = "1,2,4,8,16,32,64")]
        pulses: String,
        #[arg(long, default_value_t = 40)]
        points: usize,
    },
    /// Fit a named model to a CSV file with columns x,y[,sigma].
    Fit {
        #[arg(long)]
        model: String,
        #[arg(long)]
        data: PathBuf,
    },
    /// Derive every calibrated parameter from the published observables.
    Calibrate {
        /// Patch the config file with the derived values.
        #[arg(long)]
        write_config: bool,
        /// Skip the slow noise-spectrum stage.
        #[arg(long)]
        fast: bool,
    },
}

#[derive(Args)]
struct ReadoutArgs {
    #[arg(long, default_value_t = 100_000)]
    shots: u64,
    #[arg(long)]
    pulses: Option<usize>,
    #[arg(long)]
    threshold: Option<u32>,
    /// Analytic distributions only (no Monte Carlo sampling).
    #[arg(long, conflicts_with = "mc")]
    analytic: bool,
    /// Monte Carlo histograms (default when --analytic is absent).
    #[arg(long)]
    mc: bool,
}

#[derive(Args)]
struct SequenceArgs {
    #[arg(long, default_value_t = 48)]
    points: usize,
    /// Monte Carlo trajectories; 0 uses the analytic filter route.
    #[arg(long, default_value_t = 0)]
    traj: usize,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    if let Some(n) = cli.threads {
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
    match run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err}");
            let code = match err.downcast_ref::<Error>() {
                Some(Error::Config { .. }) | Some(Error::InvalidParam(_)) => 2,
                Some(Error::QuadratureFailure { .. }) | Some(Error::FitFailure(_)) => 3,
                Some(Error::Infeasible(_)) => 4,
                _ => 1,
            };
            ExitCode::from(code)
        }
    }
}

type AnyErr = Box<dyn std::error::Error>;

fn load_config(cli: &Cli, allow_missing: bool) -> Result<(RunConfig, String), AnyErr> {
    let path = cli
        .config
        .clone()
        .or_else(|| std::env::var("NSQSIM_CONFIG").ok().map(PathBuf::from));
    let (config, text) = match path {
        Some(p) if p.exists() || !allow_missing => {
            let text = std::fs::read_to_string(&p)
                .map_err(|e| format!("cannot read config {}: {e}", p.display()))?;
            (RunConfig::parse(&text)?, text)
        }
        _ => {
            let cfg = RunConfig::default();
            let text = cfg.emit();
            (cfg, text)
        }
    };
    let mut config = config;
    if let Some(seed) = cli.seed {
        config.seed = seed;
    }
    if let Some(out) = &cli.out {
        config.out_dir = out.display().to_string();
    }
    Ok((config, text))
}

fn run(cli: &Cli) -> Result<(), AnyErr> {
    // `calibrate --write-config` may target a config file that does not
    // exist yet; every other command requires the named file.
    let creating_config = matches!(
        cli.command,
        Command::Calibrate {
            write_config: true,
            ..
        }
    );
    let (config, config_text) = load_config(cli, creating_config)?;
    let out = OutDir::create(std::path::Path::new(&config.out_dir))?;
    let name = match &cli.command {
        Command::Spectrum { background } => cmd_spectrum(&config, &out, *background, cli.svg)?,
        Command::Purcell {
            min_mhz,
            max_mhz,
            step_mhz,
        } => cmd_purcell(&config, &out, *min_mhz, *max_mhz, *step_mhz, cli.svg)?,
        Command::Pump { reps, target } => cmd_pump(&config, &out, *reps, *target, cli.svg)?,
        Command::Readout(args) => cmd_readout(&config, &out, args, cli.svg)?,
        Command::ReadoutMap {
            min_pulses,
            max_pulses,
            max_threshold,
        } => cmd_readout_map(&config, &out, *min_pulses, *max_pulses, *max_threshold, cli.svg)?,
        Command::Rabi { points, traj } => cmd_rabi(&config, &out, *points, *traj, cli.svg)?,
        Command::Ramsey(args) => cmd_sequence(&config, &out, args, false, cli.svg)?,
        Command::Echo(args) => cmd_sequence(&config, &out, args, true, cli.svg)?,
        Command::Dd { pulses, points } => cmd_dd(&config, &out, pulses, *points, cli.svg)?,
        Command::Fit { model, data } => cmd_fit(&out, model, data)?,
        Command::Calibrate { write_config, fast } => {
            cmd_calibrate(cli, &config, &out, *write_config, *fast)?
        }
    };
    out.write_manifest(name, &config_text, config.seed)?;
    Ok(())
}

fn cmd_spectrum(
    config: &RunConfig,
    out: &OutDir,
    background: f64,
    svg: bool,
) -> Result<&'static str, AnyErr> {
    let scheme = build_level_scheme(&config.levels)?;
    let table = list_transitions(&scheme);
    let branching = BranchingModel::from_lifetime_ratio(
        &config.cavity,
        &scheme,
        config.pump.bulk_lifetime_ms,
        config.pump.bulk_lifetime_ms / config.pump.enhanced_lifetime_ms,
    )?;
    // Line weight: relative Purcell factor at the line offset, scaled by
    // the branching fraction of the emitting channel. Detuned flip lines
    // end up far below the background, as in the measured scan.
    let weights: Vec<f64> = table
        .iter()
        .map(|t| {
            let rel = purcell_factor(t.frequency_offset - config.cavity.detuning_mhz, &config.cavity)
                / config.cavity.peak_purcell;
            let frac = match t.delta_m {
                0 => branching.preserving,
                1 => branching.flip_up,
                _ => branching.flip_down,
            };
            rel * frac / branching.preserving
        })
        .collect();
    let points = synth_spectrum(&table, &weights, background, &SpectrumGrid::default());
    let rows: Vec<Vec<output::CsvValue>> = points
        .iter()
        .map(|p| vec![f(p.frequency_mhz), f(p.intensity), b(p.is_assigned_line)])
        .collect();
    out.write_csv(
        "spectrum.csv",
        &["frequency_mhz", "intensity", "is_assigned_line"],
        &rows,
    )?;
    if svg {
        let series = vec![Series {
            label: "fluorescence",
            points: points.iter().map(|p| (p.frequency_mhz, p.intensity)).collect(),
            color: PALETTE[0],
        }];
        let spec = PlotSpec {
            title: "Synthetic fluorescence scan",
            x_label: "frequency offset (MHz)",
            y_label: "intensity (arb. u.)",
            log_x: false,
            log_y: false,
        };
        out.write_bytes("spectrum.svg", output::render_plot(&spec, &series).as_bytes())?;
    }
    Ok("spectrum")
}

fn cmd_purcell(
    config: &RunConfig,
    out: &OutDir,
    min_mhz: f64,
    max_mhz: f64,
    step_mhz: f64,
    svg: bool,
) -> Result<&'static str, AnyErr> {
    if step_mhz <= 0.0 || max_mhz <= min_mhz {
        return Err(Box::new(Error::InvalidParam("bad purcell grid".into())));
    }
    let n = ((max_mhz - min_mhz) / step_mhz).round() as usize + 1;
    let mut rows = Vec::with_capacity(n);
    let mut pts = Vec::with_capacity(n);
    for i in 0..n {
        let d = min_mhz + step_mhz * i as f64;
        let p = purcell_factor(d, &config.cavity);
        rows.push(vec![
            f(d),
            f(p),
            f(p / config.cavity.peak_purcell),
            f(reflection(d, &config.cavity, config.min_reflection)),
        ]);
        pts.push((d, p / config.cavity.peak_purcell));
    }
    out.write_csv(
        "purcell.csv",
        &["detuning_mhz", "purcell", "relative_purcell", "reflection"],
        &rows,
    )?;
    if svg {
        let spec = PlotSpec {
            title: "Relative Purcell factor",
            x_label: "detuning (MHz)",
            y_label: "P / P_max",
            log_x: false,
            log_y: true,
        };
        let series = vec![Series {
            label: "P/P_max",
            points: pts,
            color: PALETTE[1],
        }];
        out.write_bytes("purcell.svg", output::render_plot(&spec, &series).as_bytes())?;
    }
    Ok("purcell")
}

fn cmd_pump(
    config: &RunConfig,
    out: &OutDir,
    reps: Option<usize>,
    target: i8,
    svg: bool,
) -> Result<&'static str, AnyErr> {
    let scheme = build_level_scheme(&config.levels)?;
    let table = list_transitions(&scheme);
    let target = SpinProjection::from_twice(target)?;
    let branching = BranchingModel::from_lifetime_ratio(
        &config.cavity,
        &scheme,
        config.pump.bulk_lifetime_ms,
        config.pump.bulk_lifetime_ms / config.pump.enhanced_lifetime_ms,
    )?;
    let ctx = PumpContext::new(&table, &config.cavity, &branching);
    let mut seq = init_other_state(target, &table, config.effective_pump_excitation())?;
    seq.repetitions = reps.unwrap_or(config.pump.repetitions);
    let result = pump_run(&PopulationVector::uniform(), &seq, &ctx);

    let rows: Vec<Vec<output::CsvValue>> = result
        .trajectory
        .iter()
        .enumerate()
        .map(|(i, &p)| vec![u(i as u64 + 1), f(p)])
        .collect();
    out.write_csv("pump.csv", &["repetition", "p_target"], &rows)?;
    out.write_json(
        "pump.json",
        &serde_json::json!({
            "target_twice_m_i": target.twice(),
            "repetitions": seq.repetitions,
            "excitation_prob": config.effective_pump_excitation(),
            "final_fidelity": result.final_fidelity,
        }),
    )?;
    println!(
        "{}",
        serde_json::json!({"final_fidelity": result.final_fidelity})
    );
    if svg {
        let spec = PlotSpec {
            title: "Optical pumping",
            x_label: "repetition",
            y_label: "target population",
            log_x: false,
            log_y: false,
        };
        let series = vec![Series {
            label: "p(target)",
            points: result
                .trajectory
                .iter()
                .enumerate()
                .map(|(i, &p)| (i as f64 + 1.0, p))
                .collect(),
            color: PALETTE[2],
        }];
        out.write_bytes("pump.svg", output::render_plot(&spec, &series).as_bytes())?;
    }
    Ok("pump")
}

fn cmd_readout(
    config: &RunConfig,
    out: &OutDir,
    args: &ReadoutArgs,
    svg: bool,
) -> Result<&'static str, AnyErr> {
    let mut cfg = config.effective_readout();
    if let Some(p) = args.pulses {
        cfg.n_pulses = p;
    }
    if let Some(t) = args.threshold {
        cfg.threshold = t;
    }
    let (bright, dark) = analytic_distributions(&cfg)?;
    let no_exc = no_excitation_distribution(&cfg);

    let use_mc = args.mc || !args.analytic;
    let (bright_d, dark_d, mode) = if use_mc {
        let hb = simulate_histogram(QubitState::Bright, &cfg, args.shots, config.seed, "readout-bright");
        let hd = simulate_histogram(QubitState::Dark, &cfg, args.shots, config.seed, "readout-dark");
        (hb.to_distribution(), hd.to_distribution(), "monte-carlo")
    } else {
        (bright.clone(), dark.clone(), "analytic")
    };

    let kmax = bright_d
        .probabilities()
        .len()
        .max(dark_d.probabilities().len())
        .max(no_exc.probabilities().len());
    let rows: Vec<Vec<output::CsvValue>> = (0..kmax)
        .map(|k| {
            vec![
                u(k as u64),
                f(bright_d.probabilities().get(k).copied().unwrap_or(0.0)),
                f(dark_d.probabilities().get(k).copied().unwrap_or(0.0)),
                f(no_exc.probabilities().get(k).copied().unwrap_or(0.0)),
            ]
        })
        .collect();
    out.write_csv(
        "readout_histogram.csv",
        &[
            "photons",
            "probability_bright",
            "probability_dark",
            "probability_no_excitation",
        ],
        &rows,
    )?;

    let (min_f, avg_f) = fidelity(&bright_d, &dark_d, cfg.threshold);
    let summary = serde_json::json!({
        "mode": mode,
        "n_pulses": cfg.n_pulses,
        "threshold": cfg.threshold,
        "mean_bright": bright_d.mean(),
        "mean_dark": dark_d.mean(),
        "min_fidelity": min_f,
        "avg_fidelity": avg_f,
        "analytic_min_fidelity": fidelity(&bright, &dark, cfg.threshold).0,
    });
    out.write_json("readout.json", &summary)?;
    println!("{summary}");
    if svg {
        let spec = PlotSpec {
            title: "Readout photon statistics",
            x_label: "photon count",
            y_label: "probability",
            log_x: false,
            log_y: false,
        };
        let to_pts = |d: &nsqsim_core::readout::PhotonDistribution| {
            d.probabilities()
                .iter()
                .enumerate()
                .map(|(k, &p)| (k as f64, p))
                .collect()
        };
        let series = vec![
            Series {
                label: "bright",
                points: to_pts(&bright_d),
                color: PALETTE[4],
            },
            Series {
                label: "dark",
                points: to_pts(&dark_d),
                color: PALETTE[0],
            },
            Series {
                label: "no excitation",
                points: to_pts(&no_exc),
                color: PALETTE[5],
            },
        ];
        out.write_bytes("readout.svg", output::render_plot(&spec, &series).as_bytes())?;
    }
    Ok("readout")
}

fn cmd_readout_map(
    config: &RunConfig,
    out: &OutDir,
    min_pulses: usize,
    max_pulses: usize,
    max_threshold: u32,
    svg: bool,
) -> Result<&'static str, AnyErr> {
    // The surface needs the effective attrition that reproduces the
    // measured optimum; calibrate on the fly unless the config pins it.
    // The scan needs the effective-attrition pair (flip probability plus
    // its mean-preserving excitation probability); a config supplies both
    // or the pair is calibrated on the fly.
    let mut cfg = config.effective_readout();
    let mut calibrated_on_the_fly = false;
    match (
        config.calibrated.surface_flip_prob,
        config.calibrated.surface_excitation_prob,
    ) {
        (Some(eps), Some(p_exc)) => {
            cfg.flip_prob = eps;
            cfg.excitation_prob = p_exc;
        }
        _ => {
            let surface = calibrate_readout_surface(&ReadoutObservables::default(), 110, 5)?;
            cfg = surface.config;
            calibrated_on_the_fly = true;
        }
    }
    let (map, best) = optimize(&cfg, min_pulses..=max_pulses, 1..=max_threshold)?;
    let rows: Vec<Vec<output::CsvValue>> = map
        .points
        .iter()
        .map(|p| {
            vec![
                u(p.n_pulses as u64),
                u(p.threshold as u64),
                f(p.min_fidelity),
                f(p.avg_fidelity),
            ]
        })
        .collect();
    out.write_csv(
        "readout_map.csv",
        &["pulses", "threshold", "min_fidelity", "avg_fidelity"],
        &rows,
    )?;
    let summary = serde_json::json!({
        "argmax_pulses": best.n_pulses,
        "argmax_threshold": best.threshold,
        "max_min_fidelity": best.min_fidelity,
        "flip_prob_effective": cfg.flip_prob,
        "calibrated_on_the_fly": calibrated_on_the_fly,
    });
    out.write_json("readout_map.json", &summary)?;
    println!("{summary}");
    if svg {
        let mut series = Vec::new();
        for (i, thr) in [4u32, 5, 6].iter().enumerate() {
            series.push(Series {
                label: ["threshold 4", "threshold 5", "threshold 6"][i],
                points: map
                    .points
                    .iter()
                    .filter(|p| p.threshold == *thr)
                    .map(|p| (p.n_pulses as f64, p.min_fidelity))
                    .collect(),
                color: PALETTE[i],
            });
        }
        let spec = PlotSpec {
            title: "Assignment fidelity vs pulse number",
            x_label: "readout pulses",
            y_label: "min fidelity",
            log_x: false,
            log_y: false,
        };
        out.write_bytes("readout_map.svg", output::render_plot(&spec, &series).as_bytes())?;
    }
    Ok("readout-map")
}

fn cmd_rabi(
    config: &RunConfig,
    out: &OutDir,
    points: usize,
    traj: usize,
    svg: bool,
) -> Result<&'static str, AnyErr> {
    let omega = effective_rabi(&config.raman);
    let t_max = 3.0 * std::f64::consts::TAU / omega;
    let durations: Vec<f64> = (0..points)
        .map(|i| t_max * i as f64 / (points - 1).max(1) as f64)
        .collect();
    let fringe = simulate_rabi(&config.raman, &durations, traj, config.seed)?;
    let rows: Vec<Vec<output::CsvValue>> = fringe
        .iter()
        .map(|p| vec![f(p.duration_s), f(p.population), f(p.std_error)])
        .collect();
    out.write_csv("rabi.csv", &["duration_s", "population", "uncertainty"], &rows)?;

    let ts: Vec<f64> = fringe.iter().map(|p| p.duration_s).collect();
    let ys: Vec<f64> = fringe.iter().map(|p| p.population).collect();
    let fit = fit_damped_cosine(&ts, &ys)?;
    let summary = serde_json::json!({
        "effective_rabi_rad_s": omega,
        "fit": fit,
    });
    out.write_json("rabi.json", &summary)?;
    println!(
        "{}",
        serde_json::json!({
            "effective_rabi_rad_s": omega,
            "fitted_rabi_rad_s": fit.param("angular_frequency"),
            "damping_time_s": fit.param("damping_time"),
        })
    );
    if svg {
        let spec = PlotSpec {
            title: "Raman Rabi fringe",
            x_label: "pulse duration (s)",
            y_label: "population",
            log_x: false,
            log_y: false,
        };
        let series = vec![Series {
            label: "fringe",
            points: fringe.iter().map(|p| (p.duration_s, p.population)).collect(),
            color: PALETTE[0],
        }];
        out.write_bytes("rabi.svg", output::render_plot(&spec, &series).as_bytes())?;
    }
    Ok("rabi")
}

fn cmd_sequence(
    config: &RunConfig,
    out: &OutDir,
    args: &SequenceArgs,
    echo: bool,
    svg: bool,
) -> Result<&'static str, AnyErr> {
    let noise = config.effective_noise();
    let make = |t: f64| {
        if echo {
            SequenceSpec::hahn(t)
        } else {
            SequenceSpec::ramsey(t)
        }
    };
    let forward = |t: f64| -> nsqsim_core::Result<f64> { Ok(filter_chi(&make(t), &noise)?.coherence()) };
    let seed_t = if echo { 10e-3 } else { 0.5e-3 };
    let grid = nsqsim_core::coherence::decay_time_grid(&forward, seed_t, args.points)?;
    // The echo curve continues past the fitted decay to show the revival.
    let times: Vec<f64> = if echo {
        let t_end = grid.last().copied().unwrap_or(seed_t) * 3.0;
        (1..=args.points * 2)
            .map(|k| t_end * k as f64 / (args.points * 2) as f64)
            .collect()
    } else {
        grid.clone()
    };

    let mut rows = Vec::with_capacity(times.len());
    let mut curve = Vec::with_capacity(times.len());
    for &t in &times {
        let (value, sem) = if args.traj > 0 {
            let est = coherence_mc(&make(t), &noise, args.traj, config.seed, None)?;
            (est.coherence, est.std_error)
        } else {
            (forward(t)?, 0.0)
        };
        rows.push(vec![f(t), f(value), f(sem)]);
        curve.push((t, value));
    }
    let name = if echo { "echo" } else { "ramsey" };
    out.write_csv(
        &format!("{name}.csv"),
        &["time_s", "coherence", "uncertainty"],
        &rows,
    )?;

    let fit_coh: Vec<f64> = grid.iter().map(|&t| forward(t)).collect::<nsqsim_core::Result<_>>()?;
    let fit = nsqsim_core::coherence::fit_decay_time(&grid, &fit_coh)?;
    let mut summary = serde_json::json!({
        "sequence": name,
        "decay_time_s": fit.param("decay_time"),
        "stretch": fit.param("stretch"),
        "fit": fit,
    });
    if echo {
        let kernel_zero = noise
            .sinusoids
            .first()
            .map(|s| 2.0 / s.frequency_hz)
            .unwrap_or(0.03);
        if let Some((pos, height)) = calibration::hahn_revival(&noise, kernel_zero)? {
            summary["revival_time_s"] = serde_json::json!(pos);
            summary["revival_height"] = serde_json::json!(height);
        }
    }
    out.write_json(&format!("{name}.json"), &summary)?;
    println!(
        "{}",
        serde_json::json!({"sequence": name, "decay_time_s": fit.param("decay_time")})
    );
    if svg {
        let spec = PlotSpec {
            title: if echo { "Hahn echo" } else { "Ramsey" },
            x_label: "time (s)",
            y_label: "coherence",
            log_x: false,
            log_y: false,
        };
        let series = vec![Series {
            label: "coherence",
            points: curve,
            color: PALETTE[3],
        }];
        out.write_bytes(
            &format!("{name}.svg"),
            output::render_plot(&spec, &series).as_bytes(),
        )?;
    }
    Ok(if echo { "echo" } else { "ramsey" })
}

fn cmd_dd(
    config: &RunConfig,
    out: &OutDir,
    pulses: &str,
    points: usize,
    svg: bool,
) -> Result<&'static str, AnyErr> {
    let ns: Vec<usize> = pulses
        .split(',')
        .map(|s| s.trim().parse::<usize>())
        .collect::<Result<_, _>>()
        .map_err(|e| Error::InvalidParam(format!("bad --pulses list: {e}")))?;
    let noise = config.effective_noise();
    let grids = auto_grids(&noise, &ns, 10e-3, points)?;
    let scan = dd_scan(&noise, &ns, &grids)?;

    let rows: Vec<Vec<output::CsvValue>> = scan
        .entries
        .iter()
        .map(|e| {
            vec![
                u(e.n_pulses as u64),
                f(e.t_dd_s.unwrap_or(f64::NAN)),
                f(e.t_dd_se_s.unwrap_or(0.0)),
            ]
        })
        .collect();
    out.write_csv("dd.csv", &["n_pulses", "t_dd_s", "uncertainty"], &rows)?;

    let summary = serde_json::json!({
        "exponent": scan.exponent(),
        "exponent_fit": scan.exponent_fit,
        "t_dd": scan
            .entries
            .iter()
            .map(|e| serde_json::json!({"n": e.n_pulses, "t_dd_s": e.t_dd_s, "error": e.fit_error}))
            .collect::<Vec<_>>(),
    });
    out.write_json("dd.json", &summary)?;
    println!(
        "{}",
        serde_json::json!({"exponent": scan.exponent(), "t_dd_64": scan.t_dd(64)})
    );
    if svg {
        let series = vec![Series {
            label: "T_DD(N)",
            points: scan
                .entries
                .iter()
                .filter_map(|e| e.t_dd_s.map(|t| (e.n_pulses as f64, t)))
                .collect(),
            color: PALETTE[3],
        }];
        let spec = PlotSpec {
            title: "Decoupling scaling",
            x_label: "pulse number N",
            y_label: "T_DD (s)",
            log_x: true,
            log_y: true,
        };
        out.write_bytes("dd.svg", output::render_plot(&spec, &series).as_bytes())?;
    }
    Ok("dd")
}

fn cmd_fit(out: &OutDir, model: &str, data: &PathBuf) -> Result<&'static str, AnyErr> {
    let text = std::fs::read_to_string(data)
        .map_err(|e| format!("cannot read {}: {e}", data.display()))?;
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    let mut sigmas: Vec<f64> = Vec::new();
    for (i, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let cells: Vec<&str> = line.split(',').map(str::trim).collect();
        if i == 0 && cells[0].parse::<f64>().is_err() {
            continue; // header row
        }
        if cells.len() < 2 {
            return Err(Box::new(Error::Config {
                line: i + 1,
                message: "expected x,y[,sigma]".into(),
            }));
        }
        let parse = |s: &str| -> Result<f64, AnyErr> {
            s.parse::<f64>()
                .map_err(|_| format!("line {}: bad number `{s}`", i + 1).into())
        };
        xs.push(parse(cells[0])?);
        ys.push(parse(cells[1])?);
        if cells.len() > 2 {
            sigmas.push(parse(cells[2])?);
        }
    }
    let weights: Option<Vec<f64>> = if sigmas.len() == ys.len() {
        Some(sigmas.iter().map(|s| 1.0 / s.max(1e-300)).collect())
    } else {
        None
    };
    let fit = match model {
        "stretched-exp" => fit_stretched_exp(&xs, &ys, weights.as_deref(), None)?,
        "damped-cosine" => fit_damped_cosine(&xs, &ys)?,
        "power-law" => fit_power_law(&xs, &ys)?,
        other => {
            return Err(Box::new(Error::InvalidParam(format!(
                "unknown model `{other}`; expected stretched-exp, damped-cosine or power-law"
            ))))
        }
    };
    let value = serde_json::to_value(&fit)?;
    out.write_json("fit.json", &value)?;
    println!("{value}");
    Ok("fit")
}

fn cmd_calibrate(
    cli: &Cli,
    config: &RunConfig,
    out: &OutDir,
    write_config: bool,
    fast: bool,
) -> Result<&'static str, AnyErr> {
    let scheme = build_level_scheme(&config.levels)?;
    let branching = calibrate_branching(
        config.pump.target_fidelity,
        config.pump.repetitions,
        &config.cavity,
        &scheme,
        config.pump.bulk_lifetime_ms,
        config.pump.enhanced_lifetime_ms,
    )?;
    let readout = calibrate_readout(&ReadoutObservables::default(), branching.readout_flip_prob)?;
    let surface = calibrate_readout_surface(&ReadoutObservables::default(), 110, 5)?;
    let noise = if fast {
        None
    } else {
        Some(calibrate_noise(&NoiseTargets::default())?)
    };

    let mut summary = serde_json::json!({
        "branching": branching,
        "readout": readout,
        "surface": {
            "flip_prob_effective": surface.flip_prob_effective,
            "excitation_prob": surface.excitation_prob,
            "argmax_pulses": surface.argmax_pulses,
            "argmax_threshold": surface.argmax_threshold,
            "report": surface.report,
        },
    });
    if let Some(n) = &noise {
        summary["noise"] = serde_json::to_value(n)?;
    }
    out.write_json("calibration.json", &summary)?;

    // Human-readable digest.
    let mut text = String::new();
    use std::fmt::Write as _;
    let _ = writeln!(text, "calibration summary");
    let _ = writeln!(
        text,
        "  detection window     {:.3} us",
        readout.detection_window_us
    );
    let _ = writeln!(
        text,
        "  readout excitation   {:.6}",
        readout.excitation_prob
    );
    let _ = writeln!(
        text,
        "  readout flip (cavity){:.4e}",
        branching.readout_flip_prob
    );
    let _ = writeln!(
        text,
        "  surface flip (eff.)  {:.4e} -> optimum ({}, {})",
        surface.flip_prob_effective, surface.argmax_pulses, surface.argmax_threshold
    );
    let _ = writeln!(
        text,
        "  pump excitation      {:.6} -> fidelity {:.4}",
        branching.pump_excitation_prob, branching.achieved_fidelity
    );
    if let Some(n) = &noise {
        let s = n.noise.sinusoids.first();
        let _ = writeln!(
            text,
            "  noise                sigma {:.1} rad/s, tau {:.2} s, white {:.3}",
            n.noise.ou_sigma_rad_s, n.noise.ou_tau_s, n.noise.white_floor
        );
        if let Some(s) = s {
            let _ = writeln!(
                text,
                "  bias-field tone      {:.1} rad/s at {:.2} Hz ({}% linewidth)",
                s.amplitude_rad_s,
                s.frequency_hz,
                s.frequency_jitter * 100.0
            );
        }
        for t in &n.report.targets_met {
            let _ = writeln!(
                text,
                "  target {:<22} {:>12.5} (want {:.5} +- {:.5}) {}",
                t.name,
                t.achieved,
                t.target,
                t.tolerance,
                if t.pass { "ok" } else { "MISSED" }
            );
        }
    }
    out.write_bytes("calibration.txt", text.as_bytes())?;
    print!("{text}");

    if write_config {
        let mut patched = config.clone();
        patched.calibrated.pump_excitation_prob = Some(branching.pump_excitation_prob);
        patched.calibrated.readout_excitation_prob = Some(readout.excitation_prob);
        patched.calibrated.readout_flip_prob = Some(branching.readout_flip_prob);
        patched.calibrated.surface_flip_prob = Some(surface.flip_prob_effective);
        patched.calibrated.surface_excitation_prob = Some(surface.excitation_prob);
        if let Some(n) = &noise {
            patched.calibrated.ou_sigma_rad_s = Some(n.noise.ou_sigma_rad_s);
            patched.calibrated.ou_tau_s = Some(n.noise.ou_tau_s);
            if let Some(s) = n.noise.sinusoids.first() {
                patched.calibrated.sin_amplitude_rad_s = Some(s.amplitude_rad_s);
                patched.calibrated.sin_frequency_hz = Some(s.frequency_hz);
            }
            patched.calibrated.white_floor = Some(n.noise.white_floor);
        }
        let target = cli
            .config
            .clone()
            .or_else(|| std::env::var("NSQSIM_CONFIG").ok().map(PathBuf::from))
            .unwrap_or_else(|| out.path("nsqsim.conf"));
        std::fs::write(&target, patched.emit())?;
        println!("wrote calibrated config to {}", target.display());
    }
    Ok("calibrate")
}
