//! Separate SVD with water-filling: the direct link is diagonalized and
//! water-filled; the two-hop relay link is jointly diagonalized and its
//! per-mode powers are allocated by alternating KKT updates.

use serde::Serialize;

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::matops::{leading_columns, scale_columns, svd, CMat};
use crate::sysmodel::{achievable_rate_unchecked, validate_solution, BeamformerSolution, SystemConfig};
use crate::trace::{OptimizerTrace, StopReason, TraceRow};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SvdwfSettings {
    pub eps_min: f64,
    pub t_max: usize,
    pub wf_tol: f64,
}

impl Default for SvdwfSettings {
    fn default() -> Self {
        Self { eps_min: 1e-7, t_max: 100, wf_tol: 1e-10 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum AllocationStatus {
    Ok,
    /// Every sub-channel had zero gain; nothing was allocated.
    AllZeroCnr,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SubchannelAllocation {
    pub cnr: Vec<f64>,
    pub power: Vec<f64>,
    pub budget: f64,
    /// `1/ν`; zero when nothing is allocated.
    pub water_level: f64,
    pub status: AllocationStatus,
}

impl SubchannelAllocation {
    /// `Σ log2(1 + γ_i p_i)`.
    pub fn rate_bits(&self) -> f64 {
        self.cnr.iter().zip(&self.power).map(|(g, p)| (1.0 + g * p).log2()).sum()
    }
}

fn check_nonneg(name: &str, v: &[f64]) -> Result<()> {
    if v.iter().any(|x| !(*x >= 0.0) || !x.is_finite()) {
        return Err(Error::Domain(format!("{name} entries must be finite and nonnegative")));
    }
    Ok(())
}

/// Water-filling `p_i = (μ − 1/γ_i)_+` with `Σ p_i = budget`, solved exactly
/// by scanning active-set sizes over the sorted gains.
pub fn waterfill(cnr: &[f64], budget: f64, tol: f64) -> Result<SubchannelAllocation> {
    check_nonneg("cnr", cnr)?;
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::Domain(format!("budget {budget} must be nonnegative")));
    }
    let mut power = vec![0.0; cnr.len()];
    let mut order: Vec<usize> = (0..cnr.len()).filter(|&i| cnr[i] > 0.0).collect();
    if order.is_empty() || budget == 0.0 {
        let status = if order.is_empty() { AllocationStatus::AllZeroCnr } else { AllocationStatus::Ok };
        return Ok(SubchannelAllocation { cnr: cnr.to_vec(), power, budget, water_level: 0.0, status });
    }
    order.sort_by(|&i, &j| cnr[j].total_cmp(&cnr[i]));
    // Active-set test and powers use differences of inverse gains so that
    // weak channels (1/γ ≫ budget) do not cancel the budget out.
    let inv = |i: usize| 1.0 / cnr[i];
    let mut active = 1;
    for k in 1..order.len() {
        let spare: f64 = budget + order[..k].iter().map(|&j| inv(j) - inv(order[k])).sum::<f64>();
        if spare > 0.0 {
            active = k + 1;
        } else {
            break;
        }
    }
    let set = &order[..active];
    for &i in set {
        let p = budget + set.iter().map(|&j| inv(j) - inv(i)).sum::<f64>();
        power[i] = (p / active as f64).max(0.0);
    }
    let level = power[set[0]] + inv(set[0]);
    let total: f64 = power.iter().sum();
    if (total - budget).abs() > tol * budget {
        return Err(Error::NoConvergence { what: "water-filling budget" });
    }
    Ok(SubchannelAllocation { cnr: cnr.to_vec(), power, budget, water_level: level, status: AllocationStatus::Ok })
}

/// A diagonalized point-to-point link.
#[derive(Debug, Clone)]
pub struct LinkSolution {
    /// N_u×N_s precoder `Ṽ diag(√p)`.
    pub precoder: CMat,
    pub allocation: SubchannelAllocation,
    pub singular_values: Vec<f64>,
    pub rate_bits: f64,
}

/// SVD precoding of `h` over its `n_s` strongest modes; powers are
/// water-filled or split equally.
pub fn svd_link(h: &CMat, budget: f64, noise: f64, n_s: usize, water_fill: bool, tol: f64) -> Result<LinkSolution> {
    let dec = svd(h)?;
    let lambda: Vec<f64> = (0..n_s).map(|i| dec.singular_values.get(i).copied().unwrap_or(0.0)).collect();
    let cnr: Vec<f64> = lambda.iter().map(|l| l * l / noise).collect();
    let allocation = if water_fill {
        waterfill(&cnr, budget, tol)?
    } else {
        let power = vec![budget / n_s as f64; n_s];
        SubchannelAllocation { cnr: cnr.clone(), power, budget, water_level: 0.0, status: AllocationStatus::Ok }
    };
    let amp: Vec<f64> = allocation.power.iter().map(|p| p.sqrt()).collect();
    let precoder = scale_columns(&leading_columns(&dec.v, n_s), &amp);
    let rate_bits = allocation.rate_bits();
    Ok(LinkSolution { precoder, allocation, singular_values: dec.singular_values, rate_bits })
}

/// SVD-WF of the UE→AP link at f_L.
pub fn optimize_direct(ch: &ChannelSet, config: &SystemConfig) -> Result<LinkSolution> {
    svd_link(&ch.h_ua_fl, config.p_ua_fl, config.sigma_a2, config.n_s, true, SvdwfSettings::default().wf_tol)
}

/// `Σ ln(1 + a_i b_i p_i / (1 + a_i + b_i p_i))`.
pub fn subproblem_objective(a: &[f64], b: &[f64], p: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .zip(p)
        .map(|((a, b), p)| (1.0 + a * b * p / (1.0 + a + b * p)).ln())
        .sum()
}

/// KKT solution of one sub-problem for a given multiplier.
fn kkt_power(a: f64, b: f64, nu: f64) -> f64 {
    if a <= 0.0 || b <= 0.0 {
        return 0.0;
    }
    let t = 4.0 * b / (a * nu);
    // (a/2)(sqrt(1+t) − 1) without cancellation
    let x = 0.5 * a * t / ((1.0 + t).sqrt() + 1.0);
    ((x - 1.0) / b).max(0.0)
}

/// Maximizes `Σ ln(1 + a_i b_i p_i / (1 + a_i + b_i p_i))` over `Σ p_i ≤ budget`.
pub fn allocate_subproblem(a: &[f64], b: &[f64], budget: f64) -> Result<Vec<f64>> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            name: "allocation gains",
            expected: format!("{}", a.len()),
            found: format!("{}", b.len()),
        });
    }
    check_nonneg("a", a)?;
    check_nonneg("b", b)?;
    if !(budget >= 0.0) || !budget.is_finite() {
        return Err(Error::Domain(format!("budget {budget} must be nonnegative")));
    }
    // p_i(ν) vanishes for ν ≥ a_i b_i / (1 + a_i)
    let nu_max = a.iter().zip(b).map(|(a, b)| a * b / (1.0 + a)).fold(0.0, f64::max);
    if nu_max == 0.0 || budget == 0.0 {
        return Ok(vec![0.0; a.len()]);
    }
    let total = |nu: f64| -> f64 { a.iter().zip(b).map(|(a, b)| kkt_power(*a, *b, nu)).sum() };
    let mut hi = nu_max;
    let mut lo = nu_max;
    while total(lo) < budget {
        lo *= 0.5;
        if lo < f64::MIN_POSITIVE {
            return Err(Error::NoConvergence { what: "allocation multiplier bracket" });
        }
    }
    for _ in 0..300 {
        let mid = (lo * hi).sqrt();
        if !(mid > lo && mid < hi) {
            break;
        }
        if total(mid) > budget {
            lo = mid;
        } else {
            hi = mid;
        }
        if (budget - total(hi)).abs() <= 1e-14 * budget {
            break;
        }
    }
    Ok(a.iter().zip(b).map(|(a, b)| kkt_power(*a, *b, hi)).collect())
}

/// Converged relay-link design.
#[derive(Debug, Clone)]
pub struct RelayLinkSolution {
    pub w_ur: CMat,
    pub psi: CMat,
    /// Scalar two-hop rate in bits.
    pub rate_bits: f64,
    /// UE powers per mode (`p̃_u = p_u`).
    pub p_u: Vec<f64>,
    /// Relay gains per mode.
    pub p_psi: Vec<f64>,
    /// Relay output powers per mode.
    pub p_psi_tilde: Vec<f64>,
    pub gamma_ur: Vec<f64>,
    pub gamma_ra: Vec<f64>,
    pub lambda_ur: Vec<f64>,
    pub lambda_ra: Vec<f64>,
    /// Objective (nats) after every half-step of the alternating allocation.
    pub half_steps: Vec<f64>,
    pub trace: OptimizerTrace,
    /// Per-iteration `(p̃_u, p̃_Ψ)` iterates, starting with the initial point.
    pub iterates: Vec<(Vec<f64>, Vec<f64>)>,
    u_ra: CMat,
    v_ur: CMat,
    v_ra: CMat,
    u_ur: CMat,
}

impl RelayLinkSolution {
    /// Rebuilds `(W_ur, Ψ)` for given `(p̃_u, p̃_Ψ)`.
    pub fn matrices(&self, p_u: &[f64], p_psi_tilde: &[f64], sigma_r2: f64) -> (CMat, CMat) {
        let n_s = p_u.len();
        let p_psi: Vec<f64> = (0..n_s)
            .map(|i| p_psi_tilde[i] / (self.lambda_ur[i] * self.lambda_ur[i] * p_u[i] + sigma_r2))
            .collect();
        build_relay(&self.v_ur, &self.v_ra, &self.u_ur, p_u, &p_psi)
    }

    /// Leading N_s left singular vectors of `H_ra`.
    pub fn u_ra_leading(&self) -> CMat {
        leading_columns(&self.u_ra, self.p_u.len())
    }
}

fn build_relay(v_ur: &CMat, v_ra: &CMat, u_ur: &CMat, p_u: &[f64], p_psi: &[f64]) -> (CMat, CMat) {
    let n_s = p_u.len();
    let su: Vec<f64> = p_u.iter().map(|p| p.sqrt()).collect();
    let sp: Vec<f64> = p_psi.iter().map(|p| p.sqrt()).collect();
    let w_ur = scale_columns(&leading_columns(v_ur, n_s), &su);
    let psi = scale_columns(&leading_columns(v_ra, n_s), &sp) * leading_columns(u_ur, n_s).adjoint();
    (w_ur, psi)
}

/// Scalar two-hop rate in bits.
pub fn relay_rate_bits(gamma_ur: &[f64], gamma_ra: &[f64], p_u: &[f64], p_psi_tilde: &[f64]) -> f64 {
    subproblem_objective(
        &gamma_ra.iter().zip(p_psi_tilde).map(|(g, p)| g * p).collect::<Vec<_>>(),
        gamma_ur,
        p_u,
    ) / std::f64::consts::LN_2
}

/// Problem data of a two-hop link.
#[derive(Debug, Clone, Copy)]
pub struct TwoHop<'a> {
    pub h_ur: &'a CMat,
    pub h_ra: &'a CMat,
    pub ue_budget: f64,
    pub relay_budget: f64,
    pub sigma_r2: f64,
    pub sigma_a2: f64,
    pub n_s: usize,
}

/// Jointly diagonalizing relay design. With `water_fill = false` both hops
/// split their budgets equally and no iterations are run.
pub fn relay_link(link: TwoHop<'_>, settings: &SvdwfSettings, water_fill: bool) -> Result<RelayLinkSolution> {
    let n_s = link.n_s;
    let ur = svd(link.h_ur)?;
    let ra = svd(link.h_ra)?;
    let pick = |s: &[f64]| -> Vec<f64> { (0..n_s).map(|i| s.get(i).copied().unwrap_or(0.0)).collect() };
    let lambda_ur = pick(&ur.singular_values);
    let lambda_ra = pick(&ra.singular_values);
    let gamma_ur: Vec<f64> = lambda_ur.iter().map(|l| l * l / link.sigma_r2).collect();
    let gamma_ra: Vec<f64> = lambda_ra.iter().map(|l| l * l / link.sigma_a2).collect();

    let mut p_psi_t = vec![link.relay_budget / n_s as f64; n_s];
    let mut p_u = if water_fill { vec![0.0; n_s] } else { vec![link.ue_budget / n_s as f64; n_s] };
    let mut half_steps = Vec::new();
    let mut iterates = vec![(p_u.clone(), p_psi_t.clone())];
    let mut trace = OptimizerTrace::new();
    let objective = |pu: &[f64], pp: &[f64]| relay_rate_bits(&gamma_ur, &gamma_ra, pu, pp) * std::f64::consts::LN_2;
    let push_row = |trace: &mut OptimizerTrace, t: usize, pu: &[f64], pp: &[f64]| {
        let obj = objective(pu, pp);
        trace.rows.push(TraceRow {
            iteration: t,
            rate_bits: obj / std::f64::consts::LN_2,
            objective: obj,
            slack: [0.0, link.ue_budget - pu.iter().sum::<f64>(), link.relay_budget - pp.iter().sum::<f64>()],
        });
    };
    push_row(&mut trace, 0, &p_u, &p_psi_t);

    if water_fill {
        trace.stop = StopReason::IterationCap;
        for t in 1..=settings.t_max {
            let a_u: Vec<f64> = gamma_ra.iter().zip(&p_psi_t).map(|(g, p)| g * p).collect();
            let new_u = allocate_subproblem(&a_u, &gamma_ur, link.ue_budget)?;
            half_steps.push(objective(&new_u, &p_psi_t));
            let a_r: Vec<f64> = gamma_ur.iter().zip(&new_u).map(|(g, p)| g * p).collect();
            let new_r = allocate_subproblem(&a_r, &gamma_ra, link.relay_budget)?;
            half_steps.push(objective(&new_u, &new_r));
            let eps1: f64 = new_u.iter().zip(&p_u).map(|(a, b)| (a - b).abs()).sum();
            let eps2: f64 = new_r.iter().zip(&p_psi_t).map(|(a, b)| (a - b).abs()).sum();
            p_u = new_u;
            p_psi_t = new_r;
            iterates.push((p_u.clone(), p_psi_t.clone()));
            push_row(&mut trace, t, &p_u, &p_psi_t);
            if eps1 < settings.eps_min && eps2 < settings.eps_min {
                trace.stop = StopReason::Converged;
                break;
            }
        }
    }

    let p_psi: Vec<f64> = (0..n_s)
        .map(|i| p_psi_t[i] / (lambda_ur[i] * lambda_ur[i] * p_u[i] + link.sigma_r2))
        .collect();
    let (w_ur, psi) = build_relay(&ur.v, &ra.v, &ur.u, &p_u, &p_psi);
    Ok(RelayLinkSolution {
        w_ur,
        psi,
        rate_bits: relay_rate_bits(&gamma_ur, &gamma_ra, &p_u, &p_psi_t),
        p_u,
        p_psi,
        p_psi_tilde: p_psi_t,
        gamma_ur,
        gamma_ra,
        lambda_ur,
        lambda_ra,
        half_steps,
        trace,
        iterates,
        u_ra: ra.u,
        v_ur: ur.v,
        v_ra: ra.v,
        u_ur: ur.u,
    })
}

fn raca_two_hop<'a>(ch: &'a ChannelSet, config: &SystemConfig) -> TwoHop<'a> {
    TwoHop {
        h_ur: &ch.h_ur_fh,
        h_ra: &ch.h_ra_fl,
        ue_budget: config.p_ur_fh,
        relay_budget: config.p_r,
        sigma_r2: config.sigma_r2,
        sigma_a2: config.sigma_a2,
        n_s: config.n_s,
    }
}

/// Relay-link AO of the RACA system (UE→relay at f_H, relay→AP at f_L).
pub fn optimize_relaylink(ch: &ChannelSet, config: &SystemConfig, settings: &SvdwfSettings) -> Result<RelayLinkSolution> {
    relay_link(raca_two_hop(ch, config), settings, true)
}

fn combine(
    ch: &ChannelSet,
    config: &SystemConfig,
    w_ua: CMat,
    relay: &RelayLinkSolution,
) -> Result<(BeamformerSolution, OptimizerTrace)> {
    let sol = BeamformerSolution::from_parts(w_ua, relay.w_ur.clone(), relay.psi.clone())?;
    let mut trace = OptimizerTrace { stop: relay.trace.stop, ..OptimizerTrace::new() };
    for (row, (pu, pp)) in relay.trace.rows.iter().zip(&relay.iterates) {
        let (w_ur, psi) = relay.matrices(pu, pp, config.sigma_r2);
        let iterate = BeamformerSolution::from_parts(sol.w_ua.clone().into_inner(), w_ur, psi)?;
        let report = validate_solution(ch, &iterate, config);
        trace.rows.push(TraceRow {
            iteration: row.iteration,
            rate_bits: achievable_rate_unchecked(ch, &iterate, config)?,
            objective: row.objective,
            slack: report.slack,
        });
    }
    Ok((sol, trace))
}

/// RACA-SVD-WF: both links designed separately, rate evaluated jointly.
pub fn solve_svdwf(ch: &ChannelSet, config: &SystemConfig, settings: &SvdwfSettings) -> Result<(BeamformerSolution, OptimizerTrace)> {
    config.validate()?;
    ch.check_dims(config)?;
    let direct = optimize_direct(ch, config)?;
    let relay = optimize_relaylink(ch, config, settings)?;
    combine(ch, config, direct.precoder, &relay)
}

/// RACA-SVD: same structure with equal power on every mode of every hop.
pub fn solve_svd_equal(ch: &ChannelSet, config: &SystemConfig) -> Result<(BeamformerSolution, OptimizerTrace)> {
    config.validate()?;
    ch.check_dims(config)?;
    let tol = SvdwfSettings::default().wf_tol;
    let direct = svd_link(&ch.h_ua_fl, config.p_ua_fl, config.sigma_a2, config.n_s, false, tol)?;
    let relay = relay_link(raca_two_hop(ch, config), &SvdwfSettings::default(), false)?;
    combine(ch, config, direct.precoder, &relay)
}
