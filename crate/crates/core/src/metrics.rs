//! Energy efficiency from optimized transmit powers and a circuit-power model.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::channel::ChannelSet;
use crate::error::{Error, Result};
use crate::matops::fro_norm_sq;
use crate::sysmodel::{dbm_to_watt, relay_power, BeamformerSolution, SystemConfig};

/// Every system the harness can evaluate.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum SystemKind {
    RacaWmmse,
    RacaSvdWf,
    RacaSvd,
    CaSvdWf,
    RaWmmse,
    MimoSvdWf,
}

impl SystemKind {
    pub const ALL: [SystemKind; 6] = [
        Self::RacaWmmse,
        Self::RacaSvdWf,
        Self::RacaSvd,
        Self::CaSvdWf,
        Self::RaWmmse,
        Self::MimoSvdWf,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Self::RacaWmmse => "RACA-WMMSE",
            Self::RacaSvdWf => "RACA-SVD-WF",
            Self::RacaSvd => "RACA-SVD",
            Self::CaSvdWf => "CA-SVD-WF",
            Self::RaWmmse => "RA-WMMSE",
            Self::MimoSvdWf => "MIMO-SVD-WF",
        }
    }
}

impl fmt::Display for SystemKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SystemKind {
    type Err = Error;

    /// Case-insensitive; `_` and `-` are interchangeable.
    fn from_str(s: &str) -> Result<Self> {
        let key = s.trim().to_ascii_uppercase().replace('_', "-");
        Self::ALL
            .into_iter()
            .find(|k| k.name() == key)
            .ok_or_else(|| Error::Unknown { kind: "system", name: s.to_string() })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PowerModel {
    /// Power-amplifier efficiency.
    pub eta: f64,
    pub pc_u: f64,
    pub pc_r: f64,
    pub pc_a: f64,
}

impl Default for PowerModel {
    fn default() -> Self {
        Self { eta: 1.2, pc_u: dbm_to_watt(13.0), pc_r: dbm_to_watt(16.0), pc_a: dbm_to_watt(16.0) }
    }
}

impl PowerModel {
    pub fn validate(&self) -> Result<()> {
        let all = [self.eta, self.pc_u, self.pc_r, self.pc_a];
        if all.iter().any(|x| !(*x > 0.0) || !x.is_finite()) {
            return Err(Error::Config("power model entries must be positive".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct EnergyReport {
    pub system: SystemKind,
    pub p_sys_tot: f64,
    pub p_u_tot: f64,
    pub ee_sys: f64,
    pub ee_u: f64,
}

/// `(P̄_ua, P̄_ur, P̄_r)` actually radiated by a RACA solution.
pub fn actual_powers(ch: &ChannelSet, sol: &BeamformerSolution, config: &SystemConfig) -> [f64; 3] {
    [
        fro_norm_sq(&sol.w_ua),
        fro_norm_sq(&sol.w_ur),
        relay_power(&sol.psi, &ch.h_ur_fh, &sol.w_ur, config.sigma_r2),
    ]
}

/// Total system and UE power for `kind`.
///
/// `powers` holds the radiated powers as `(UE band 1, UE band 2, relay)`:
/// RACA `(P̄_ua, P̄_ur, P̄_r)`, CA `(P̄_ua^fL, P̄_ua^fH, 0)`, RA `(P̄_u, 0, P̄_r)`,
/// MIMO `(P̄_ua, 0, 0)`.
pub fn energy_report(kind: SystemKind, rate: f64, powers: [f64; 3], model: &PowerModel) -> Result<EnergyReport> {
    model.validate()?;
    if !(rate >= 0.0) || !rate.is_finite() {
        return Err(Error::Domain(format!("rate {rate} must be finite and nonnegative")));
    }
    if powers.iter().any(|p| !(*p >= 0.0) || !p.is_finite()) {
        return Err(Error::Domain("radiated powers must be finite and nonnegative".into()));
    }
    let [p1, p2, pr] = powers;
    let m = model;
    let (p_sys_tot, p_u_tot) = match kind {
        SystemKind::RacaWmmse | SystemKind::RacaSvdWf | SystemKind::RacaSvd => {
            ((p1 + p2 + pr) / m.eta + m.pc_u + m.pc_r + m.pc_a, (p1 + p2) / m.eta + m.pc_u)
        }
        SystemKind::CaSvdWf => ((p1 + p2) / m.eta + m.pc_u + m.pc_a, (p1 + p2) / m.eta + m.pc_u),
        SystemKind::RaWmmse => ((p1 + pr) / m.eta + m.pc_u + m.pc_r + m.pc_a, p1 / m.eta + m.pc_u),
        SystemKind::MimoSvdWf => (p1 / m.eta + m.pc_u + m.pc_a, p1 / m.eta + m.pc_u),
    };
    Ok(EnergyReport { system: kind, p_sys_tot, p_u_tot, ee_sys: rate / p_sys_tot, ee_u: rate / p_u_tot })
}
