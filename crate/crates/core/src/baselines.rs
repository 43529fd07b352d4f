//! Comparison systems sharing the RACA total transmit power:
//! two-band carrier aggregation without a relay (CA), a same-band
//! amplify-and-forward relay (RA), and a single-band MIMO link.

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::matops::{fro_norm_sq, leading_columns, svd, CMat, ComplexMatrix};
use crate::svdwf::{svd_link, AllocationStatus, LinkSolution, SvdwfSettings};
use crate::sysmodel::{rate_bits, relay_noise_covariance, relay_power, SystemConfig, FEASIBILITY_TOL};
use crate::trace::{OptimizerTrace, StopReason, Substep, SubstepRecord, TraceRow};
use crate::wmmse::subproblem::{solve_dual_constrained, BisectionSettings};
use crate::wmmse::{max_violation, mmse_receiver, mse_from_parts, objective, relay_matrix_subproblem, update_weight};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum BaselineKind {
    CaSvdWf,
    RaWmmse,
    MimoSvdWf,
}

impl BaselineKind {
    /// Transmit budgets of each node for the shared total power.
    pub fn budgets(self, config: &SystemConfig) -> Vec<f64> {
        match self {
            Self::CaSvdWf => vec![config.p_ua_fl, config.p_ur_fh + config.p_r],
            Self::RaWmmse => vec![config.p_ua_fl + config.p_ur_fh, config.p_r],
            Self::MimoSvdWf => vec![config.total_power()],
        }
    }
}

fn wf_tol() -> f64 {
    SvdwfSettings::default().wf_tol
}

/// The two point-to-point links of the CA system.
#[derive(Debug, Clone)]
pub struct CaSolution {
    pub low: LinkSolution,
    pub high: LinkSolution,
}

/// SVD-WF on each band; the f_H link carries the relay's share of the power.
pub fn solve_ca(ch: &ChannelSet, config: &SystemConfig) -> Result<(f64, CaSolution)> {
    config.validate()?;
    ch.check_dims(config)?;
    let low = svd_link(&ch.h_ua_fl, config.p_ua_fl, config.sigma_a2, config.n_s, true, wf_tol())?;
    let high = svd_link(&ch.h_ua_fh, config.p_ur_fh + config.p_r, config.sigma_a2, config.n_s, true, wf_tol())?;
    Ok((low.rate_bits + high.rate_bits, CaSolution { low, high }))
}

/// SVD-WF on the f_L direct channel with the pooled budget.
pub fn solve_mimo(ch: &ChannelSet, config: &SystemConfig) -> Result<(f64, LinkSolution)> {
    config.validate()?;
    ch.check_dims(config)?;
    let link = svd_link(&ch.h_ua_fl, config.total_power(), config.sigma_a2, config.n_s, true, wf_tol())?;
    Ok((link.rate_bits, link))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RaSettings {
    pub eps_min: f64,
    pub t_max: usize,
    pub bisect: BisectionSettings,
    /// Keep `Ψ = 0`, i.e. switch the relay off.
    pub force_zero_relay: bool,
    pub record_substeps: bool,
}

impl Default for RaSettings {
    fn default() -> Self {
        Self {
            eps_min: 1e-7,
            t_max: 10_000,
            bisect: BisectionSettings::default(),
            force_zero_relay: false,
            record_substeps: false,
        }
    }
}

/// RA design: UE precoder, relay matrix and MMSE receiver.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RaSolution {
    /// N_u×N_s.
    pub w_u: ComplexMatrix,
    /// N_r×N_r.
    pub psi: ComplexMatrix,
    /// N_s×N_a.
    pub w_a: ComplexMatrix,
}

/// `H_ra Ψ H_ur + H_ua`, all at f_L.
pub fn ra_composite_channel(ch: &ChannelSet, psi: &CMat) -> CMat {
    &*ch.h_ra_fl * psi * &*ch.h_ur_fl + &*ch.h_ua_fl
}

/// Rate of the RA system for a given precoder and relay matrix.
pub fn ra_rate(ch: &ChannelSet, config: &SystemConfig, w_u: &CMat, psi: &CMat) -> Result<f64> {
    let h = ra_composite_channel(ch, psi) * w_u;
    rate_bits(&h, &relay_noise_covariance(&ch.h_ra_fl, psi, config.sigma_r2, config.sigma_a2))
}

/// `[‖W_u‖², ‖Ψ H_ur W_u‖² + σ_r²‖Ψ‖²]`.
pub fn ra_powers(ch: &ChannelSet, config: &SystemConfig, w_u: &CMat, psi: &CMat) -> [f64; 2] {
    [fro_norm_sq(w_u), relay_power(psi, &ch.h_ur_fl, w_u, config.sigma_r2)]
}

struct RaState<'a> {
    ch: &'a ChannelSet,
    config: &'a SystemConfig,
    w_u: CMat,
    psi: CMat,
    w_a: CMat,
    z: CMat,
}

impl RaState<'_> {
    fn parts(&self) -> (CMat, CMat) {
        let h = ra_composite_channel(self.ch, &self.psi) * &self.w_u;
        let j = relay_noise_covariance(&self.ch.h_ra_fl, &self.psi, self.config.sigma_r2, self.config.sigma_a2);
        (h, j)
    }

    fn mse(&self) -> CMat {
        let (h, j) = self.parts();
        mse_from_parts(&self.w_a, &h, &j)
    }

    fn objective(&self) -> Result<f64> {
        objective(&self.z, &self.mse())
    }

    fn violation(&self) -> f64 {
        let budgets = BaselineKind::RaWmmse.budgets(self.config);
        let used = ra_powers(self.ch, self.config, &self.w_u, &self.psi);
        max_violation(&[used[0], 0.0, used[1]], &[budgets[0], 0.0, budgets[1]])
    }

    fn slack(&self) -> [f64; 3] {
        let budgets = BaselineKind::RaWmmse.budgets(self.config);
        let used = ra_powers(self.ch, self.config, &self.w_u, &self.psi);
        [budgets[0] - used[0], 0.0, budgets[1] - used[1]]
    }

    fn rate(&self) -> Result<f64> {
        let (h, j) = self.parts();
        rate_bits(&h, &j)
    }

    fn step(&mut self, settings: &RaSettings, iteration: usize, records: Option<&mut Vec<SubstepRecord>>) -> Result<()> {
        let log = |state: &Self, step: Substep, records: &mut Option<&mut Vec<SubstepRecord>>| -> Result<()> {
            if let Some(r) = records.as_deref_mut() {
                r.push(SubstepRecord { iteration, step, objective: state.objective()?, max_violation: state.violation() });
            }
            Ok(())
        };
        let mut records = records;
        let budgets = BaselineKind::RaWmmse.budgets(self.config);

        let (h, j) = self.parts();
        self.w_a = mmse_receiver(&h, &j)?;
        log(self, Substep::Receiver, &mut records)?;
        self.z = update_weight(&self.mse())?;
        log(self, Substep::Weight, &mut records)?;

        // precoder: B = G^H W_a^H Z W_a G, C^H = G^H W_a^H Z
        let a = &self.w_a * ra_composite_channel(self.ch, &self.psi);
        let b = crate::matops::hermitian_part(&(a.adjoint() * &self.z * &a));
        let rhs = a.adjoint() * &self.z;
        let g = &self.psi * &*self.ch.h_ur_fl;
        let b_tilde = crate::matops::hermitian_part(&(g.adjoint() * g));
        let mut residual = budgets[1] - self.config.sigma_r2 * fro_norm_sq(&self.psi);
        if residual < 0.0 && residual >= -FEASIBILITY_TOL * budgets[1] {
            residual = 0.0;
        }
        self.w_u = solve_dual_constrained(&b, &rhs, &b_tilde, budgets[0], residual, &settings.bisect)?.w;
        log(self, Substep::Precoder, &mut records)?;

        if !settings.force_zero_relay {
            // relay: A = W_a H_ra, D = H_ur W_u, target −Z (W_a H_ua W_u − I)
            let a = &self.w_a * &*self.ch.h_ra_fl;
            let d = &*self.ch.h_ur_fl * &self.w_u;
            let n = self.config.n_s;
            let f = &self.w_a * &*self.ch.h_ua_fl * &self.w_u - CMat::identity(n, n);
            let target = -(&self.z * f);
            self.psi = relay_matrix_subproblem(&a, &self.z, &target, &d, self.config.sigma_r2, budgets[1], &settings.bisect)?.w;
            log(self, Substep::RelayMatrix, &mut records)?;
        }
        Ok(())
    }
}

/// Starting point: SVD-WF precoder on the direct channel, relay matrix
/// aligned with the leading modes of both hops and scaled to its budget.
pub fn ra_initial_point(ch: &ChannelSet, config: &SystemConfig, zero_relay: bool) -> Result<(CMat, CMat)> {
    let budgets = BaselineKind::RaWmmse.budgets(config);
    let direct = svd_link(&ch.h_ua_fl, budgets[0], config.sigma_a2, config.n_s, true, wf_tol())?;
    // a dead direct link would leave the UE silent, which WMMSE never leaves
    let w_u = if direct.allocation.status == AllocationStatus::AllZeroCnr {
        svd_link(&ch.h_ur_fl, budgets[0], config.sigma_r2, config.n_s, true, wf_tol())?.precoder
    } else {
        direct.precoder
    };
    let n_r = config.n_r;
    if zero_relay {
        return Ok((w_u, CMat::zeros(n_r, n_r)));
    }
    let ur = svd(&ch.h_ur_fl)?;
    let ra = svd(&ch.h_ra_fl)?;
    let shape = leading_columns(&ra.v, config.n_s) * leading_columns(&ur.u, config.n_s).adjoint();
    let used = relay_power(&shape, &ch.h_ur_fl, &w_u, config.sigma_r2);
    let psi = if used > 0.0 { shape.scale((budgets[1] / used).sqrt()) } else { shape };
    Ok((w_u, psi))
}

/// WMMSE design of the RA system.
pub fn solve_ra(ch: &ChannelSet, config: &SystemConfig, settings: &RaSettings) -> Result<(f64, RaSolution, OptimizerTrace)> {
    config.validate()?;
    ch.check_dims(config)?;
    let (w_u, psi) = ra_initial_point(ch, config, settings.force_zero_relay)?;
    let n = config.n_s;
    let mut state = RaState {
        ch,
        config,
        w_u,
        psi,
        w_a: CMat::zeros(n, config.n_a),
        z: CMat::identity(n, n),
    };
    let (h, j) = state.parts();
    state.w_a = mmse_receiver(&h, &j)?;

    let mut trace = OptimizerTrace { stop: StopReason::IterationCap, ..OptimizerTrace::new() };
    let mut substeps = Vec::new();
    let mut prev = state.rate()?;
    trace.rows.push(TraceRow { iteration: 0, rate_bits: prev, objective: state.objective()?, slack: state.slack() });
    for t in 1..=settings.t_max {
        let rec = settings.record_substeps.then_some(&mut substeps);
        state.step(settings, t, rec)?;
        let rate = state.rate()?;
        trace.rows.push(TraceRow { iteration: t, rate_bits: rate, objective: state.objective()?, slack: state.slack() });
        if rate < prev - 1e-9 * prev.max(1.0) {
            return Err(Error::NonMonotone { iteration: t, drop: prev - rate });
        }
        if rate <= 0.0 || (rate - prev) / rate < settings.eps_min {
            trace.stop = StopReason::Converged;
            break;
        }
        prev = rate;
    }
    trace.substeps = substeps;
    let (h, j) = state.parts();
    let w_a = mmse_receiver(&h, &j)?;
    let rate = rate_bits(&h, &j)?;
    let sol = RaSolution {
        w_u: ComplexMatrix::new(state.w_u)?,
        psi: ComplexMatrix::new(state.psi)?,
        w_a: ComplexMatrix::new(w_a)?,
    };
    Ok((rate, sol, trace))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::channel::generate_channels;

    #[test]
    fn budgets_share_the_total() {
        let cfg = SystemConfig { p_ua_fl: 0.003, p_ur_fh: 0.02, p_r: 0.0071, ..Default::default() };
        for kind in [BaselineKind::CaSvdWf, BaselineKind::RaWmmse, BaselineKind::MimoSvdWf] {
            let sum: f64 = kind.budgets(&cfg).iter().sum();
            // equal up to floating-point reassociation
            assert!((sum - cfg.total_power()).abs() <= 2.0 * f64::EPSILON * cfg.total_power(), "{kind:?}");
        }
    }

    #[test]
    fn ca_without_high_band_power_is_mimo_on_low_band() {
        let cfg = SystemConfig { p_ur_fh: 0.0, p_r: 0.0, ..Default::default() };
        let ch = generate_channels(&cfg, 3).unwrap();
        let (ca, _) = solve_ca(&ch, &cfg).unwrap();
        let (mimo, _) = solve_mimo(&ch, &cfg).unwrap();
        assert!((ca - mimo).abs() <= 1e-12 * mimo);
    }

    #[test]
    fn mimo_zero_budget() {
        let cfg = SystemConfig { p_ua_fl: 0.0, p_ur_fh: 0.0, p_r: 0.0, ..Default::default() };
        let ch = generate_channels(&cfg, 4).unwrap();
        assert_eq!(solve_mimo(&ch, &cfg).unwrap().0, 0.0);
    }

    #[test]
    fn ra_short_run_monotone() {
        let cfg = SystemConfig::default();
        let ch = generate_channels(&cfg, 5).unwrap();
        let settings = RaSettings { t_max: 60, record_substeps: true, ..Default::default() };
        let (rate, sol, trace) = solve_ra(&ch, &cfg, &settings).unwrap();
        for w in trace.substeps.windows(2) {
            assert!(w[1].objective <= w[0].objective + 1e-9, "{w:?}");
        }
        assert!(trace.substeps.iter().all(|s| s.max_violation <= 1e-9));
        let used = ra_powers(&ch, &cfg, &sol.w_u, &sol.psi);
        let budgets = BaselineKind::RaWmmse.budgets(&cfg);
        assert!(used[0] <= budgets[0] * (1.0 + 1e-9) && used[1] <= budgets[1] * (1.0 + 1e-9));
        assert!((rate - trace.final_rate()).abs() <= 1e-12 * rate);
    }
}
