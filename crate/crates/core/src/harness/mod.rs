//! Monte Carlo sweeps over noise, carrier and power split, with CSV output.

mod convergence;

pub use convergence::{run_convergence_study, ConvergenceCurve, ConvergenceSettings, ConvergenceStudy};

use std::fmt;
use std::io::Write;
use std::path::PathBuf;
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::Serialize;

use crate::baselines::{ra_powers, solve_ca, solve_mimo, solve_ra, RaSettings};
use crate::channel::{generate_channels, ChannelSet};
use crate::error::{Error, Result};
use crate::matops::{hermitian_eig, hermitian_part, hermitian_solve, CMat};
use crate::metrics::{actual_powers, energy_report, PowerModel, SystemKind};
use crate::svdwf::{solve_svd_equal, solve_svdwf, SvdwfSettings};
use crate::sysmodel::{
    achievable_rate, dbm_to_watt, effective_channel, noise_covariance, relay_noise_covariance, BeamformerSolution,
    SystemConfig,
};
use crate::trace::fmt_sig;
use crate::wmmse::{solve_wmmse, WmmseSettings};

/// Per-stream contribution (bits) above which a stream counts as carried.
pub const STREAM_THRESHOLD_BITS: f64 = 0.05;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize)]
pub enum Experiment {
    Convergence,
    RateVsNoise,
    StreamsVsNoise,
    Energy,
    FreqSweep,
    RatioUeRelay,
    RatioFlFh,
}

impl Experiment {
    pub const ALL: [Experiment; 7] = [
        Self::Convergence,
        Self::RateVsNoise,
        Self::StreamsVsNoise,
        Self::Energy,
        Self::FreqSweep,
        Self::RatioUeRelay,
        Self::RatioFlFh,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::Convergence => "convergence",
            Self::RateVsNoise => "rate_vs_noise",
            Self::StreamsVsNoise => "streams_vs_noise",
            Self::Energy => "energy",
            Self::FreqSweep => "freq_sweep",
            Self::RatioUeRelay => "ratio_ue_relay",
            Self::RatioFlFh => "ratio_fl_fh",
        }
    }

    /// Noise in dBm, f_H in GHz, or a power ratio in [0, 1].
    pub fn default_grid(self) -> Vec<f64> {
        match self {
            Self::Convergence => vec![-90.0],
            Self::RateVsNoise | Self::StreamsVsNoise | Self::Energy => (0..=8).map(|i| -110.0 + 5.0 * i as f64).collect(),
            Self::FreqSweep => vec![10.0, 20.0, 28.0, 40.0, 60.0, 80.0, 100.0],
            Self::RatioUeRelay | Self::RatioFlFh => ratio_grid(),
        }
    }

    pub fn default_systems(self) -> Vec<SystemKind> {
        use SystemKind::*;
        match self {
            Self::RateVsNoise | Self::StreamsVsNoise => vec![RacaWmmse, RacaSvdWf, CaSvdWf, RaWmmse, MimoSvdWf],
            Self::Energy => vec![RacaWmmse, CaSvdWf, RaWmmse, MimoSvdWf],
            Self::FreqSweep => vec![RacaWmmse, RacaSvdWf, CaSvdWf],
            Self::RatioUeRelay | Self::RatioFlFh => vec![RacaWmmse],
            Self::Convergence => vec![RacaWmmse],
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Experiment {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_lowercase().replace('-', "_");
        Self::ALL
            .into_iter()
            .find(|e| e.name() == key)
            .ok_or_else(|| Error::Unknown { kind: "experiment", name: s.to_string() })
    }
}

/// 0 to 1 in steps of 0.05.
pub fn ratio_grid() -> Vec<f64> {
    (0..=20).map(|i| i as f64 / 20.0).collect()
}

/// Configuration at one sweep point.
pub fn configure(experiment: Experiment, base: &SystemConfig, value: f64) -> Result<SystemConfig> {
    let mut cfg = base.clone();
    let check_ratio = |r: f64| {
        if (0.0..=1.0).contains(&r) {
            Ok(())
        } else {
            Err(Error::Config(format!("power ratio {r} outside [0, 1]")))
        }
    };
    match experiment {
        Experiment::Convergence => {}
        Experiment::RateVsNoise | Experiment::StreamsVsNoise | Experiment::Energy => {
            cfg.sigma_r2 = dbm_to_watt(value);
            cfg.sigma_a2 = cfg.sigma_r2;
        }
        Experiment::FreqSweep => cfg.f_h = value,
        Experiment::RatioUeRelay => {
            check_ratio(value)?;
            let total = base.p_ur_fh + base.p_r;
            cfg.p_ur_fh = value * total;
            cfg.p_r = total - cfg.p_ur_fh;
        }
        Experiment::RatioFlFh => {
            check_ratio(value)?;
            let total = base.p_ua_fl + base.p_ur_fh;
            cfg.p_ua_fl = value * total;
            cfg.p_ur_fh = total - cfg.p_ua_fl;
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Channel seed of one trial; independent of the sweep point, so every point
/// sees the same small-scale fading.
pub fn trial_seed(base: u64, trial: usize) -> u64 {
    let mut z = base.wrapping_add((trial as u64 + 1).wrapping_mul(0x9E37_79B9_7F4A_7C15));
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Number of whitened singular values of `h` carrying more than
/// [`STREAM_THRESHOLD_BITS`].
pub fn count_effective_streams(h: &CMat, j: &CMat) -> Result<usize> {
    let g = hermitian_part(&(h.adjoint() * hermitian_solve(j, h)?));
    Ok(hermitian_eig(&g)?.values.iter().filter(|s2| (1.0 + **s2).log2() > STREAM_THRESHOLD_BITS).count())
}

pub fn count_streams(ch: &ChannelSet, sol: &BeamformerSolution, config: &SystemConfig) -> Result<usize> {
    count_effective_streams(&effective_channel(ch, sol)?, &noise_covariance(ch, sol, config))
}

/// Solver limits used inside the harness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SolverSettings {
    pub eps_min: f64,
    pub t_max: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { eps_min: 1e-7, t_max: 3000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentSpec {
    pub experiment: Experiment,
    pub base_config: SystemConfig,
    pub sweep_values: Vec<f64>,
    pub n_trials: usize,
    pub seed: u64,
    pub systems: Vec<SystemKind>,
    pub output_path: Option<PathBuf>,
    pub threads: usize,
    pub solver: SolverSettings,
    pub power_model: PowerModel,
}

pub fn default_threads() -> usize {
    std::thread::available_parallelism().map_or(1, |n| n.get())
}

impl ExperimentSpec {
    pub fn new(experiment: Experiment, base_config: SystemConfig) -> Self {
        Self {
            experiment,
            base_config,
            sweep_values: experiment.default_grid(),
            n_trials: 200,
            seed: 1,
            systems: experiment.default_systems(),
            output_path: None,
            threads: default_threads(),
            solver: SolverSettings::default(),
            power_model: PowerModel::default(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_trials == 0 {
            return Err(Error::Config("n_trials must be at least 1".into()));
        }
        if self.sweep_values.is_empty() {
            return Err(Error::Config("sweep_values is empty".into()));
        }
        if self.sweep_values.windows(2).any(|w| !(w[0] <= w[1])) {
            return Err(Error::Config("sweep_values must be sorted ascending".into()));
        }
        if self.systems.is_empty() {
            return Err(Error::Config("no systems requested".into()));
        }
        if self.threads == 0 {
            return Err(Error::Config("threads must be at least 1".into()));
        }
        self.power_model.validate()?;
        for &v in &self.sweep_values {
            configure(self.experiment, &self.base_config, v)?;
        }
        Ok(())
    }
}

/// Outcome of one system on one channel realization.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TrialOutcome {
    pub rate: f64,
    pub streams: usize,
    pub ee_sys: f64,
    pub ee_u: f64,
    /// `(UE band 1, UE band 2, relay)` radiated powers.
    pub powers: [f64; 3],
}

/// Solves `kind` on one realization.
pub fn evaluate_system(
    kind: SystemKind,
    ch: &ChannelSet,
    config: &SystemConfig,
    solver: &SolverSettings,
    model: &PowerModel,
) -> Result<TrialOutcome> {
    let wmmse = WmmseSettings { eps_min: solver.eps_min, t_max: solver.t_max, ..Default::default() };
    let raca = |sol: BeamformerSolution| -> Result<(f64, usize, [f64; 3])> {
        Ok((achievable_rate(ch, &sol, config)?, count_streams(ch, &sol, config)?, actual_powers(ch, &sol, config)))
    };
    let modes = |rates: &mut dyn Iterator<Item = f64>| rates.filter(|r| *r > STREAM_THRESHOLD_BITS).count();
    let (rate, streams, powers) = match kind {
        SystemKind::RacaWmmse => raca(solve_wmmse(ch, config, &wmmse)?.0)?,
        SystemKind::RacaSvdWf => raca(solve_svdwf(ch, config, &SvdwfSettings::default())?.0)?,
        SystemKind::RacaSvd => raca(solve_svd_equal(ch, config)?.0)?,
        SystemKind::CaSvdWf => {
            let (rate, sol) = solve_ca(ch, config)?;
            let per_mode = |a: &crate::svdwf::SubchannelAllocation| -> Vec<f64> {
                a.cnr.iter().zip(&a.power).map(|(g, p)| (1.0 + g * p).log2()).collect()
            };
            let mut all = per_mode(&sol.low.allocation).into_iter().chain(per_mode(&sol.high.allocation));
            let powers = [sol.low.allocation.power.iter().sum(), sol.high.allocation.power.iter().sum(), 0.0];
            (rate, modes(&mut all), powers)
        }
        SystemKind::RaWmmse => {
            let settings = RaSettings { eps_min: solver.eps_min, t_max: solver.t_max, ..Default::default() };
            let (rate, sol, _) = solve_ra(ch, config, &settings)?;
            let h = crate::baselines::ra_composite_channel(ch, &sol.psi) * &*sol.w_u;
            let j = relay_noise_covariance(&ch.h_ra_fl, &sol.psi, config.sigma_r2, config.sigma_a2);
            let used = ra_powers(ch, config, &sol.w_u, &sol.psi);
            (rate, count_effective_streams(&h, &j)?, [used[0], 0.0, used[1]])
        }
        SystemKind::MimoSvdWf => {
            let (rate, link) = solve_mimo(ch, config)?;
            let a = &link.allocation;
            let mut it = a.cnr.iter().zip(&a.power).map(|(g, p)| (1.0 + g * p).log2());
            (rate, modes(&mut it), [a.power.iter().sum(), 0.0, 0.0])
        }
    };
    let ee = energy_report(kind, rate, powers, model)?;
    Ok(TrialOutcome { rate, streams, ee_sys: ee.ee_sys, ee_u: ee.ee_u, powers })
}

/// One system at one sweep point on one trial.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TrialRecord {
    pub sweep_index: usize,
    pub trial: usize,
    pub system: SystemKind,
    /// `None` when the solver failed.
    pub outcome: Option<TrialOutcome>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ResultRow {
    pub sweep_value: f64,
    pub system: SystemKind,
    pub mean_rate: f64,
    pub stderr: f64,
    pub mean_streams: f64,
    pub mean_ee_sys: f64,
    pub mean_ee_u: f64,
    pub mean_powers: [f64; 3],
    pub failures: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ExperimentResult {
    pub experiment: Experiment,
    pub rows: Vec<ResultRow>,
    /// Ordered by sweep point, trial, then requested system order.
    pub trials: Vec<TrialRecord>,
}

pub const CSV_HEADER: [&str; 9] = [
    "sweep_value",
    "system",
    "mean_rate",
    "stderr",
    "mean_streams",
    "mean_EE_sys",
    "mean_EE_u",
    "mean_powers",
    "failures",
];

impl ExperimentResult {
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(CSV_HEADER)?;
        for r in &self.rows {
            let powers = r.mean_powers.iter().map(|p| fmt_sig(*p)).collect::<Vec<_>>().join(";");
            w.write_record([
                fmt_sig(r.sweep_value),
                r.system.name().to_string(),
                fmt_sig(r.mean_rate),
                fmt_sig(r.stderr),
                fmt_sig(r.mean_streams),
                fmt_sig(r.mean_ee_sys),
                fmt_sig(r.mean_ee_u),
                powers,
                r.failures.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn to_csv_string(&self) -> Result<String> {
        let mut buf = Vec::new();
        self.write_csv(&mut buf)?;
        Ok(String::from_utf8(buf).expect("csv output is utf-8"))
    }

    pub fn row(&self, sweep_value: f64, system: SystemKind) -> Option<&ResultRow> {
        self.rows.iter().find(|r| r.sweep_value == sweep_value && r.system == system)
    }

    /// Rows of one system in sweep order.
    pub fn series(&self, system: SystemKind) -> Vec<&ResultRow> {
        self.rows.iter().filter(|r| r.system == system).collect()
    }
}

/// Mean and standard error of the mean (zero for fewer than two samples).
pub fn mean_stderr(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

/// Runs `work(i)` for `i < n` on up to `threads` workers; results in index order.
pub fn parallel_map<T: Send>(n: usize, threads: usize, work: impl Fn(usize) -> T + Sync) -> Vec<T> {
    let workers = threads.clamp(1, n.max(1));
    if workers == 1 {
        // also the only option on targets without threads
        return (0..n).map(work).collect();
    }
    let next = AtomicUsize::new(0);
    let slots: Vec<Mutex<Option<T>>> = (0..n).map(|_| Mutex::new(None)).collect();
    std::thread::scope(|s| {
        for _ in 0..workers {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::Relaxed);
                if i >= n {
                    break;
                }
                let value = work(i);
                *slots[i].lock().expect("result slot poisoned") = Some(value);
            });
        }
    });
    slots
        .into_iter()
        .map(|m| m.into_inner().expect("result slot poisoned").expect("every index is processed"))
        .collect()
}

pub fn aggregate(spec: &ExperimentSpec, trials: &[TrialRecord]) -> Vec<ResultRow> {
    let mut rows = Vec::new();
    for (si, &value) in spec.sweep_values.iter().enumerate() {
        for &system in &spec.systems {
            let ok: Vec<TrialOutcome> = trials
                .iter()
                .filter(|t| t.sweep_index == si && t.system == system)
                .filter_map(|t| t.outcome)
                .collect();
            let failures = trials.iter().filter(|t| t.sweep_index == si && t.system == system && t.outcome.is_none()).count();
            let col = |f: &dyn Fn(&TrialOutcome) -> f64| -> Vec<f64> { ok.iter().map(f).collect() };
            let (mean_rate, stderr) = mean_stderr(&col(&|o| o.rate));
            let mean = |xs: Vec<f64>| mean_stderr(&xs).0;
            rows.push(ResultRow {
                sweep_value: value,
                system,
                mean_rate,
                stderr,
                mean_streams: mean(col(&|o| o.streams as f64)),
                mean_ee_sys: mean(col(&|o| o.ee_sys)),
                mean_ee_u: mean(col(&|o| o.ee_u)),
                mean_powers: [mean(col(&|o| o.powers[0])), mean(col(&|o| o.powers[1])), mean(col(&|o| o.powers[2]))],
                failures,
            });
        }
    }
    rows
}

/// Runs every (sweep point, trial) pair; solver failures are counted per
/// row and never abort the sweep.
pub fn run_experiment(spec: &ExperimentSpec) -> Result<ExperimentResult> {
    spec.validate()?;
    if spec.experiment == Experiment::Convergence {
        return Err(Error::Config("use run_convergence_study for the convergence experiment".into()));
    }
    let configs: Vec<SystemConfig> = spec
        .sweep_values
        .iter()
        .map(|&v| configure(spec.experiment, &spec.base_config, v))
        .collect::<Result<_>>()?;
    let n_items = configs.len() * spec.n_trials;
    let per_item = parallel_map(n_items, spec.threads, |item| {
        let (si, trial) = (item / spec.n_trials, item % spec.n_trials);
        let cfg = &configs[si];
        let channels = generate_channels(cfg, trial_seed(spec.seed, trial));
        spec.systems
            .iter()
            .map(|&system| {
                let res = channels
                    .as_ref()
                    .map_err(|e| e.to_string())
                    .and_then(|ch| evaluate_system(system, ch, cfg, &spec.solver, &spec.power_model).map_err(|e| e.to_string()));
                TrialRecord {
                    sweep_index: si,
                    trial,
                    system,
                    outcome: res.as_ref().ok().copied(),
                    error: res.err(),
                }
            })
            .collect::<Vec<_>>()
    });
    let trials: Vec<TrialRecord> = per_item.into_iter().flatten().collect();
    Ok(ExperimentResult { experiment: spec.experiment, rows: aggregate(spec, &trials), trials })
}
