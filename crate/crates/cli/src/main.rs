use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};

use raca_core::channel::generate_channels;
use raca_core::harness::{
    default_threads, run_convergence_study, run_experiment, trial_seed, ConvergenceSettings, Experiment, ExperimentSpec,
    SolverSettings,
};
use raca_core::metrics::SystemKind;
use raca_core::protocol::{overhead, OverheadReport};
use raca_core::svdwf::{solve_svdwf, SvdwfSettings};
use raca_core::sysmodel::{achievable_rate, validate_solution, watt_to_dbm, SystemConfig};
use raca_core::wmmse::{solve_wmmse, WmmseSettings};

#[derive(Parser)]
#[command(name = "raca", version, about = "Relay-assisted carrier aggregation uplink experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Monte Carlo sweep; writes one CSV row per (sweep value, system).
    Run {
        /// rate_vs_noise, streams_vs_noise, energy, freq_sweep, ratio_ue_relay or ratio_fl_fh
        experiment: String,
        #[command(flatten)]
        common: Common,
        /// Comma list of systems, e.g. raca-wmmse,ca-svd-wf
        #[arg(long, value_delimiter = ',')]
        systems: Option<Vec<String>>,
        /// Comma list of sweep values replacing the default grid
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        values: Option<Vec<f64>>,
    },
    /// WMMSE rate per iteration from random, SVD and SVD-WF starting points.
    Convergence {
        #[command(flatten)]
        common: Common,
    },
    /// Signaling overhead of centralized and distributed designs.
    Overhead {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Checks a configuration and solves one realization with both RACA designs.
    Validate {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long, default_value_t = 1)]
        seed: u64,
    },
}

#[derive(Args)]
struct Common {
    /// JSON configuration (powers and noise in dBm, carriers in GHz)
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, default_value_t = 200)]
    trials: usize,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV destination; stdout when absent
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    threads: Option<usize>,
    /// Iteration cap of the iterative solvers
    #[arg(long, default_value_t = 3000)]
    t_max: usize,
}

fn load_config(path: Option<&Path>) -> Result<SystemConfig> {
    match path {
        Some(p) => SystemConfig::load(p).with_context(|| format!("reading config {}", p.display())),
        None => Ok(SystemConfig::default()),
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write>> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p).with_context(|| format!("creating {}", p.display()))?)),
        None => Box::new(io::stdout().lock()),
    })
}

fn run(experiment: &str, common: &Common, systems: Option<&[String]>, values: Option<&[f64]>) -> Result<()> {
    let experiment: Experiment = experiment.parse()?;
    if experiment == Experiment::Convergence {
        bail!("use the `convergence` subcommand for the convergence study");
    }
    let mut spec = ExperimentSpec::new(experiment, load_config(common.config.as_deref())?);
    spec.n_trials = common.trials;
    spec.seed = common.seed;
    spec.threads = common.threads.unwrap_or_else(default_threads);
    spec.solver = SolverSettings { t_max: common.t_max, ..Default::default() };
    spec.output_path = common.out.clone();
    if let Some(names) = systems {
        spec.systems = names.iter().map(|s| s.parse::<SystemKind>()).collect::<raca_core::Result<_>>()?;
    }
    if let Some(v) = values {
        spec.sweep_values = v.to_vec();
    }
    let result = run_experiment(&spec)?;
    let failures: usize = result.rows.iter().map(|r| r.failures).sum();
    if failures > 0 {
        eprintln!("warning: {failures} solver failures; see the failures column");
    }
    result.write_csv(output(spec.output_path.as_deref())?)?;
    Ok(())
}

fn convergence(common: &Common) -> Result<()> {
    let config = load_config(common.config.as_deref())?;
    let settings = ConvergenceSettings {
        t_max: common.t_max,
        threads: common.threads.unwrap_or_else(default_threads),
        ..Default::default()
    };
    let study = run_convergence_study(&config, common.trials, common.seed, &settings)?;
    eprint!("{}", study.summary());
    study.write_csv(output(common.out.as_deref())?)?;
    Ok(())
}

fn print_overhead(config: Option<&Path>, out: Option<&Path>) -> Result<()> {
    let report = overhead(&load_config(config)?)?;
    match out {
        Some(p) => {
            let mut w = output(Some(p))?;
            writeln!(w, "{}", OverheadReport::CSV_HEADER)?;
            writeln!(w, "{}", report.csv_row())?;
        }
        None => print!("{}", report.table()),
    }
    Ok(())
}

fn validate(config: Option<&Path>, seed: u64) -> Result<()> {
    let cfg = load_config(config)?;
    println!(
        "config ok: N_u={} N_r={} N_a={} N_s={}, f_L={} GHz, f_H={} GHz",
        cfg.n_u, cfg.n_r, cfg.n_a, cfg.n_s, cfg.f_l, cfg.f_h
    );
    println!(
        "budgets: P_ua={:.2} dBm P_ur={:.2} dBm P_r={:.2} dBm, noise {:.2} dBm",
        watt_to_dbm(cfg.p_ua_fl),
        watt_to_dbm(cfg.p_ur_fh),
        watt_to_dbm(cfg.p_r),
        watt_to_dbm(cfg.sigma_a2)
    );
    let ch = generate_channels(&cfg, trial_seed(seed, 0))?;
    let (svdwf, _) = solve_svdwf(&ch, &cfg, &SvdwfSettings::default())?;
    let (wmmse, trace) = solve_wmmse(&ch, &cfg, &WmmseSettings::default())?;
    let mut ok = true;
    for (name, sol) in [("RACA-SVD-WF", &svdwf), ("RACA-WMMSE", &wmmse)] {
        let rep = validate_solution(&ch, sol, &cfg);
        ok &= rep.feasible;
        println!(
            "{name:<12} rate {:.4} bit/s/Hz, power used/budget {:.3e}/{:.3e} {:.3e}/{:.3e} {:.3e}/{:.3e} feasible={}",
            achievable_rate(&ch, sol, &cfg)?,
            rep.used[0],
            rep.budgets[0],
            rep.used[1],
            rep.budgets[1],
            rep.used[2],
            rep.budgets[2],
            rep.feasible
        );
    }
    println!("WMMSE stopped after {} iterations ({:?})", trace.iterations(), trace.stop);
    if !ok {
        bail!("infeasible solution");
    }
    Ok(())
}

fn main() -> Result<()> {
    match Cli::parse().command {
        Command::Run { experiment, common, systems, values } => run(&experiment, &common, systems.as_deref(), values.as_deref()),
        Command::Convergence { common } => convergence(&common),
        Command::Overhead { config, out } => print_overhead(config.as_deref(), out.as_deref()),
        Command::Validate { config, seed } => validate(config.as_deref(), seed),
    }
}
