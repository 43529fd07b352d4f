//! Joint WMMSE design of the RACA uplink.
//!
//! Each iteration updates the MMSE receiver `W_a`, the weight `Z = E^{-1}`,
//! then the direct precoder `W_ua`, the relay-link precoder `W_ur` and the
//! relay matrix `Ψ`, every block by its exact KKT solution. Refreshing
//! `W_a` and `Z` first makes the objective equal `2N_s − ln2 · R` at the
//! start of each iteration, so the reported rate is nondecreasing.

pub mod subproblem;

use serde::Serialize;

use crate::channel::{rayleigh, ChannelSet};
use crate::error::{Error, Result};
use crate::matops::{fro_norm_sq, hermitian_part, hermitian_solve, logdet_hermitian, trace_re, CMat, ComplexMatrix, LogBase};
use crate::svdwf::{solve_svd_equal, solve_svdwf, SvdwfSettings};
use crate::sysmodel::{
    achievable_rate_unchecked, effective_channel, noise_covariance, relay_power, validate_solution,
    BeamformerSolution, SystemConfig, FEASIBILITY_TOL,
};
use crate::trace::{OptimizerTrace, StopReason, Substep, SubstepRecord, TraceRow};

pub use subproblem::{BisectionSettings, DualQuadraticSolution, QuadraticSolution};

/// Starting point of the alternating optimization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum InitMode {
    /// CN(0, 1) entries scaled so every power constraint is tight.
    Random { seed: u64 },
    /// Joint SVD structure with equal powers.
    Svd,
    /// The SVD water-filling design.
    SvdWf,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct WmmseSettings {
    pub eps_min: f64,
    pub t_max: usize,
    pub bisect: BisectionSettings,
    pub init: InitMode,
    /// Keep the objective after every block update.
    pub record_substeps: bool,
}

impl Default for WmmseSettings {
    fn default() -> Self {
        Self {
            eps_min: 1e-7,
            t_max: 10_000,
            bisect: BisectionSettings::default(),
            init: InitMode::SvdWf,
            record_substeps: false,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WmmseState {
    /// Current iterate; `w_a` is always present.
    pub sol: BeamformerSolution,
    pub z: CMat,
    pub e: CMat,
    pub iteration: usize,
    pub rate_history: Vec<f64>,
}

fn receiver(sol: &BeamformerSolution) -> Result<&CMat> {
    sol.w_a.as_deref().ok_or(Error::MissingReceiver)
}

/// `E = (W_a H − I)(W_a H − I)^H + W_a J W_a^H`.
pub fn mse_matrix(ch: &ChannelSet, sol: &BeamformerSolution, config: &SystemConfig) -> Result<CMat> {
    let w_a = receiver(sol)?;
    let h = effective_channel(ch, sol)?;
    let j = noise_covariance(ch, sol, config);
    Ok(mse_from_parts(w_a, &h, &j))
}

pub(crate) fn mse_from_parts(w_a: &CMat, h: &CMat, j: &CMat) -> CMat {
    let k = w_a.nrows();
    let d = w_a * h - CMat::identity(k, k);
    hermitian_part(&(&d * d.adjoint() + w_a * j * w_a.adjoint()))
}

/// `W_a = H^H (H H^H + J)^{-1}`.
pub fn mmse_receiver(h: &CMat, j: &CMat) -> Result<CMat> {
    let s = hermitian_part(&(h * h.adjoint() + j));
    Ok(hermitian_solve(&s, h)?.adjoint())
}

pub fn update_receiver(ch: &ChannelSet, state: &WmmseState, config: &SystemConfig) -> Result<CMat> {
    let h = effective_channel(ch, &state.sol)?;
    mmse_receiver(&h, &noise_covariance(ch, &state.sol, config))
}

/// `Z = E^{-1}`, with one jittered retry if `E` is numerically singular.
pub fn update_weight(e: &CMat) -> Result<CMat> {
    let k = e.nrows();
    let eye = CMat::identity(k, k);
    match hermitian_solve(e, &eye) {
        Ok(z) => Ok(hermitian_part(&z)),
        Err(_) => {
            let jitter = 1e-12 * trace_re(e) / k as f64;
            let z = hermitian_solve(&(e + eye.scale(jitter)), &eye)?;
            Ok(hermitian_part(&z))
        }
    }
}

/// `tr(Z E) − ln|Z|`.
pub fn objective(z: &CMat, e: &CMat) -> Result<f64> {
    Ok(trace_re(&(z * e)) - logdet_hermitian(z, LogBase::Natural)?)
}

fn z_cols(z: &CMat, upper: bool) -> CMat {
    let n = z.ncols() / 2;
    z.columns(if upper { 0 } else { n }, n).into_owned()
}

/// Direct-link precoder: `B = A^H Z A`, `C^H = A^H Z_u^H` with `A = W_a H_ua`.
pub fn update_precoder_direct(
    ch: &ChannelSet,
    state: &WmmseState,
    config: &SystemConfig,
    bisect: &BisectionSettings,
) -> Result<QuadraticSolution> {
    let a = receiver(&state.sol)? * &*ch.h_ua_fl;
    let b = hermitian_part(&(a.adjoint() * &state.z * &a));
    let rhs = a.adjoint() * z_cols(&state.z, true);
    subproblem::solve_power_constrained(&b, &rhs, None, config.p_ua_fl, bisect)
}

/// Relay-link precoder under the UE f_H budget and the residual relay budget.
pub fn update_precoder_relaylink(
    ch: &ChannelSet,
    state: &WmmseState,
    config: &SystemConfig,
    bisect: &BisectionSettings,
) -> Result<DualQuadraticSolution> {
    let psi = &*state.sol.psi;
    let a = receiver(&state.sol)? * &*ch.h_ra_fl * psi * &*ch.h_ur_fh;
    let b = hermitian_part(&(a.adjoint() * &state.z * &a));
    let rhs = a.adjoint() * z_cols(&state.z, false);
    let g = psi * &*ch.h_ur_fh;
    let b_tilde = hermitian_part(&(g.adjoint() * g));
    let mut residual = config.p_r - config.sigma_r2 * fro_norm_sq(psi);
    if residual < 0.0 && residual >= -FEASIBILITY_TOL * config.p_r {
        residual = 0.0;
    }
    subproblem::solve_dual_constrained(&b, &rhs, &b_tilde, config.p_ur_fh, residual, bisect)
}

/// Relay matrix: `B_Ψ = A^H Z A`, `C_Ψ^H = A^H Z_l^H D^H`, right weight
/// `M = D D^H + σ_r² I` with `A = W_a H_ra`, `D = H_ur W_ur`.
pub fn update_relay_matrix(
    ch: &ChannelSet,
    state: &WmmseState,
    config: &SystemConfig,
    bisect: &BisectionSettings,
) -> Result<QuadraticSolution> {
    let a = receiver(&state.sol)? * &*ch.h_ra_fl;
    let d = &*ch.h_ur_fh * &*state.sol.w_ur;
    relay_matrix_subproblem(&a, &state.z, &z_cols(&state.z, false), &d, config.sigma_r2, config.p_r, bisect)
}

pub(crate) fn relay_matrix_subproblem(
    a: &CMat,
    z: &CMat,
    z_target: &CMat,
    d: &CMat,
    sigma_r2: f64,
    budget: f64,
    bisect: &BisectionSettings,
) -> Result<QuadraticSolution> {
    let n = d.nrows();
    let b = hermitian_part(&(a.adjoint() * z * a));
    let rhs = a.adjoint() * z_target * d.adjoint();
    let m = hermitian_part(&(d * d.adjoint() + CMat::identity(n, n).scale(sigma_r2)));
    subproblem::solve_power_constrained(&b, &rhs, Some(&m), budget, bisect)
}

/// Largest relative violation over the three budgets (≤ 0 when feasible).
pub(crate) fn max_violation(used: &[f64; 3], budgets: &[f64; 3]) -> f64 {
    used.iter()
        .zip(budgets)
        .map(|(u, b)| if *b > 0.0 { (u - b) / b } else if *u > 0.0 { f64::INFINITY } else { 0.0 })
        .fold(f64::NEG_INFINITY, f64::max)
}

impl WmmseState {
    /// State at `sol` with the MMSE receiver, its MSE matrix and `Z = I`.
    pub fn new(ch: &ChannelSet, config: &SystemConfig, sol: BeamformerSolution) -> Result<Self> {
        let mut state = Self {
            sol: BeamformerSolution { w_a: None, ..sol },
            z: CMat::identity(2 * config.n_s, 2 * config.n_s),
            e: CMat::zeros(0, 0),
            iteration: 0,
            rate_history: Vec::new(),
        };
        let w_a = update_receiver(ch, &state, config)?;
        state.sol.w_a = Some(ComplexMatrix::new(w_a)?);
        state.e = mse_matrix(ch, &state.sol, config)?;
        state.rate_history.push(achievable_rate_unchecked(ch, &state.sol, config)?);
        Ok(state)
    }

    pub fn objective(&self) -> Result<f64> {
        objective(&self.z, &self.e)
    }

    fn record(
        &mut self,
        ch: &ChannelSet,
        config: &SystemConfig,
        step: Substep,
        out: &mut Option<&mut Vec<SubstepRecord>>,
    ) -> Result<()> {
        if let Some(records) = out.as_deref_mut() {
            self.e = mse_matrix(ch, &self.sol, config)?;
            let report = validate_solution(ch, &self.sol, config);
            records.push(SubstepRecord {
                iteration: self.iteration,
                step,
                objective: self.objective()?,
                max_violation: max_violation(&report.used, &report.budgets),
            });
        }
        Ok(())
    }

    /// One full block-coordinate pass; returns the rate of the new iterate.
    pub fn step(
        &mut self,
        ch: &ChannelSet,
        config: &SystemConfig,
        bisect: &BisectionSettings,
        mut substeps: Option<&mut Vec<SubstepRecord>>,
    ) -> Result<f64> {
        self.iteration += 1;
        let w_a = update_receiver(ch, self, config)?;
        self.sol.w_a = Some(ComplexMatrix::new(w_a)?);
        self.record(ch, config, Substep::Receiver, &mut substeps)?;

        self.e = mse_matrix(ch, &self.sol, config)?;
        self.z = update_weight(&self.e)?;
        self.record(ch, config, Substep::Weight, &mut substeps)?;

        self.sol.w_ua = ComplexMatrix::new(update_precoder_direct(ch, self, config, bisect)?.w)?;
        self.record(ch, config, Substep::PrecoderDirect, &mut substeps)?;

        self.sol.w_ur = ComplexMatrix::new(update_precoder_relaylink(ch, self, config, bisect)?.w)?;
        self.record(ch, config, Substep::PrecoderRelay, &mut substeps)?;

        self.sol.psi = ComplexMatrix::new(update_relay_matrix(ch, self, config, bisect)?.w)?;
        self.record(ch, config, Substep::RelayMatrix, &mut substeps)?;

        self.e = mse_matrix(ch, &self.sol, config)?;
        let rate = achievable_rate_unchecked(ch, &self.sol, config)?;
        self.rate_history.push(rate);
        Ok(rate)
    }
}

/// Random starting point meeting every budget with equality.
pub fn random_init(ch: &ChannelSet, config: &SystemConfig, seed: u64) -> Result<BeamformerSolution> {
    use rand::SeedableRng;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let normalize = |m: CMat, target: f64, used: f64| if used > 0.0 { m.scale((target / used).sqrt()) } else { m };
    let w_ua = rayleigh(config.n_u, config.n_s, &mut rng);
    let w_ur = rayleigh(config.n_u, config.n_s, &mut rng);
    let psi = rayleigh(config.n_r, config.n_r, &mut rng);
    let (n_ua, n_ur) = (fro_norm_sq(&w_ua), fro_norm_sq(&w_ur));
    let w_ua = normalize(w_ua, config.p_ua_fl, n_ua);
    let w_ur = normalize(w_ur, config.p_ur_fh, n_ur);
    let used = relay_power(&psi, &ch.h_ur_fh, &w_ur, config.sigma_r2);
    let psi = normalize(psi, config.p_r, used);
    BeamformerSolution::from_parts(w_ua, w_ur, psi)
}

pub fn initial_solution(ch: &ChannelSet, config: &SystemConfig, init: InitMode) -> Result<BeamformerSolution> {
    match init {
        InitMode::Random { seed } => random_init(ch, config, seed),
        InitMode::Svd => Ok(solve_svd_equal(ch, config)?.0),
        InitMode::SvdWf => Ok(solve_svdwf(ch, config, &SvdwfSettings::default())?.0),
    }
}

/// Algorithm entry point: initializes per `settings.init` and iterates.
pub fn solve_wmmse(ch: &ChannelSet, config: &SystemConfig, settings: &WmmseSettings) -> Result<(BeamformerSolution, OptimizerTrace)> {
    config.validate()?;
    ch.check_dims(config)?;
    let init = initial_solution(ch, config, settings.init)?;
    solve_wmmse_from(ch, config, settings, init)
}

/// Iterates from a given feasible starting point.
pub fn solve_wmmse_from(
    ch: &ChannelSet,
    config: &SystemConfig,
    settings: &WmmseSettings,
    init: BeamformerSolution,
) -> Result<(BeamformerSolution, OptimizerTrace)> {
    let report = validate_solution(ch, &init, config);
    if !report.feasible {
        return Err(Error::Infeasible(format!("starting point violates budgets: used {:?}", report.used)));
    }
    let mut state = WmmseState::new(ch, config, init)?;
    let mut trace = OptimizerTrace { stop: StopReason::IterationCap, ..OptimizerTrace::new() };
    let push = |trace: &mut OptimizerTrace, state: &WmmseState, rate: f64| -> Result<()> {
        let slack = validate_solution(ch, &state.sol, config).slack;
        trace.rows.push(TraceRow { iteration: state.iteration, rate_bits: rate, objective: state.objective()?, slack });
        Ok(())
    };
    let mut prev = state.rate_history[0];
    push(&mut trace, &state, prev)?;
    let mut substeps = Vec::new();
    while state.iteration < settings.t_max {
        let rec = settings.record_substeps.then_some(&mut substeps);
        let rate = state.step(ch, config, &settings.bisect, rec)?;
        push(&mut trace, &state, rate)?;
        if rate < prev - 1e-9 * prev.max(1.0) {
            return Err(Error::NonMonotone { iteration: state.iteration, drop: prev - rate });
        }
        if rate <= 0.0 || (rate - prev) / rate < settings.eps_min {
            trace.stop = StopReason::Converged;
            break;
        }
        prev = rate;
    }
    trace.substeps = substeps;
    let w_a = update_receiver(ch, &state, config)?;
    state.sol.w_a = Some(ComplexMatrix::new(w_a)?);
    Ok((state.sol, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;
    use crate::matops::c64;
    use crate::sysmodel::rate_bits;

    fn cfg() -> SystemConfig {
        SystemConfig::default()
    }

    #[test]
    fn zero_receiver_gives_identity_mse() {
        let cfg = cfg();
        let ch = generate_channels(&cfg, 1).unwrap();
        let mut sol = random_init(&ch, &cfg, 2).unwrap();
        sol.w_a = Some(ComplexMatrix::zeros(4, 4));
        let e = mse_matrix(&ch, &sol, &cfg).unwrap();
        assert_eq!(e, CMat::identity(4, 4));
        sol.w_a = None;
        assert!(matches!(mse_matrix(&ch, &sol, &cfg), Err(Error::MissingReceiver)));
    }

    #[test]
    fn mmse_error_matches_closed_form() {
        let cfg = cfg();
        for seed in 0..10 {
            let ch = generate_channels(&cfg, seed).unwrap();
            let sol = random_init(&ch, &cfg, seed + 50).unwrap();
            let state = WmmseState::new(&ch, &cfg, sol).unwrap();
            let h = effective_channel(&ch, &state.sol).unwrap();
            let j = noise_covariance(&ch, &state.sol, &cfg);
            let jinv_h = hermitian_solve(&j, &h).unwrap();
            let closed = hermitian_solve(&(CMat::identity(4, 4) + h.adjoint() * jinv_h), &CMat::identity(4, 4)).unwrap();
            let diff = fro_norm_sq(&(&state.e - &closed)).sqrt();
            assert!(diff <= 1e-10 * fro_norm_sq(&closed).sqrt(), "{diff}");
        }
    }

    #[test]
    fn scalar_receiver() {
        let h = CMat::from_element(1, 1, c64::new(1.0, 0.0));
        let w = mmse_receiver(&h, &h).unwrap();
        assert!((w[(0, 0)] - c64::new(0.5, 0.0)).norm() < 1e-15);
        let w = mmse_receiver(&CMat::zeros(2, 2), &CMat::identity(2, 2)).unwrap();
        assert_eq!(fro_norm_sq(&w), 0.0);
    }

    #[test]
    fn mse_vanishes_for_clean_identity_channel() {
        let h = CMat::identity(2, 2);
        let mut last = f64::INFINITY;
        for eps in [1e-2, 1e-4, 1e-6] {
            let j = CMat::identity(2, 2).scale(eps);
            let w = mmse_receiver(&h, &j).unwrap();
            let e = mse_from_parts(&w, &h, &j);
            let t = trace_re(&e);
            assert!(t < last);
            last = t;
        }
        assert!(last < 1e-5);
    }

    #[test]
    fn weight_cases() {
        assert_eq!(update_weight(&CMat::identity(3, 3)).unwrap(), CMat::identity(3, 3));
        let z = update_weight(&CMat::identity(4, 4).scale(0.5)).unwrap();
        assert!(fro_norm_sq(&(z - CMat::identity(4, 4).scale(2.0))) < 1e-28);
    }

    #[test]
    fn weight_inverts_random_pd() {
        use rand::SeedableRng;
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        for _ in 0..50 {
            let g = rayleigh(4, 4, &mut rng);
            let e = hermitian_part(&(&g * g.adjoint() + CMat::identity(4, 4).scale(0.1)));
            let z = update_weight(&e).unwrap();
            let err = fro_norm_sq(&(&z * &e - CMat::identity(4, 4))).sqrt();
            assert!(err <= 1e-10, "{err}");
            assert!((trace_re(&(&z * &e)) - 4.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn receiver_is_stationary() {
        // finite-difference gradient of tr(Z E) in W_a vanishes at the MMSE receiver
        use rand::SeedableRng;
        let cfg = cfg();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(4);
        let ch = generate_channels(&cfg, 4).unwrap();
        let sol = random_init(&ch, &cfg, 5).unwrap();
        let state = WmmseState::new(&ch, &cfg, sol).unwrap();
        let h = effective_channel(&ch, &state.sol).unwrap();
        let j = noise_covariance(&ch, &state.sol, &cfg);
        let g = rayleigh(4, 4, &mut rng);
        let z = hermitian_part(&(&g * g.adjoint() + CMat::identity(4, 4)));
        let w = state.sol.w_a.clone().unwrap().into_inner();
        let f = |w: &CMat| trace_re(&(&z * mse_from_parts(w, &h, &j)));
        let scale = fro_norm_sq(&w).sqrt();
        let step = 1e-6 * scale;
        let mut worst: f64 = 0.0;
        for r in 0..4 {
            for c in 0..4 {
                for dir in [c64::new(1.0, 0.0), c64::new(0.0, 1.0)] {
                    let mut wp = w.clone();
                    wp[(r, c)] += dir * step;
                    let mut wm = w.clone();
                    wm[(r, c)] -= dir * step;
                    worst = worst.max(((f(&wp) - f(&wm)) / (2.0 * step)).abs());
                }
            }
        }
        assert!(worst * scale <= 1e-8 * f(&w).max(1.0), "{worst}");
    }

    #[test]
    fn rate_equals_minus_logdet_of_mse() {
        let cfg = cfg();
        let ch = generate_channels(&cfg, 6).unwrap();
        let sol = random_init(&ch, &cfg, 7).unwrap();
        let mut state = WmmseState::new(&ch, &cfg, sol).unwrap();
        state.z = update_weight(&state.e).unwrap();
        let rate = rate_bits(&effective_channel(&ch, &state.sol).unwrap(), &noise_covariance(&ch, &state.sol, &cfg)).unwrap();
        let log_e = logdet_hermitian(&state.e, LogBase::Two).unwrap();
        assert!((rate + log_e).abs() <= 1e-8);
        let obj = state.objective().unwrap();
        assert!((obj - (4.0 - std::f64::consts::LN_2 * rate)).abs() <= 1e-8);
    }

    #[test]
    fn zero_psi_decouples_relay_precoder() {
        let cfg = cfg();
        let ch = generate_channels(&cfg, 8).unwrap();
        let mut sol = random_init(&ch, &cfg, 9).unwrap();
        sol.psi = ComplexMatrix::zeros(4, 4);
        let state = WmmseState::new(&ch, &cfg, sol).unwrap();
        let s = update_precoder_relaylink(&ch, &state, &cfg, &Default::default()).unwrap();
        assert_eq!(fro_norm_sq(&s.w), 0.0);
        assert_eq!((s.nu, s.nu_tilde), (0.0, 0.0));
    }

    #[test]
    fn short_run_is_monotone_and_feasible() {
        let cfg = cfg();
        let ch = generate_channels(&cfg, 10).unwrap();
        let settings = WmmseSettings { t_max: 40, record_substeps: true, ..Default::default() };
        let (sol, trace) = solve_wmmse(&ch, &cfg, &settings).unwrap();
        assert!(validate_solution(&ch, &sol, &cfg).feasible);
        for w in trace.substeps.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-9, "{:?}", w);
        }
        assert!(trace.substeps.iter().all(|s| s.max_violation <= 1e-9));
        for w in trace.rows.windows(2) {
            assert!(w[1].rate_bits >= w[0].rate_bits - 1e-9);
        }
    }

    #[test]
    fn noise_dominated_limit() {
        let cfg = cfg().with_noise_dbm(30.0);
        let ch = generate_channels(&cfg, 11).unwrap();
        let settings = WmmseSettings { t_max: 50, ..Default::default() };
        let (_, trace) = solve_wmmse(&ch, &cfg, &settings).unwrap();
        assert!(trace.final_rate() < 1e-6);
    }
}
