//! Control-link overhead of the centralized and distributed designs,
//! counted in exchanged complex entries.

use serde::Serialize;

use crate::error::Result;
use crate::sysmodel::SystemConfig;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct OverheadReport {
    /// `N_r N_u + N_r² + 2 N_u N_s` per fast update.
    pub centralized_entries: u64,
    /// `2 N_r N_u + N_a N_u + 2 N_a N_r` per fast update.
    pub distributed_entries: u64,
    /// Relay–AP feedback skipped by an asynchronous update, `2 N_a N_r`.
    pub async_savings_per_update: u64,
    /// Fast updates per relay–AP coherence window at which the distributed
    /// protocol stops costing more; infinite when it never does.
    pub breakeven_coherence_ratio: f64,
}

pub fn centralized_entries(n_u: u64, n_r: u64, n_s: u64) -> u64 {
    n_r * n_u + n_r * n_r + 2 * n_u * n_s
}

pub fn distributed_entries(n_u: u64, n_r: u64, n_a: u64) -> u64 {
    2 * n_r * n_u + n_a * n_u + 2 * n_a * n_r
}

/// Smallest `k ≥ 1` with `k·d − (k−1)·s ≤ k·c`.
pub fn breakeven(centralized: u64, distributed: u64, saving: u64) -> f64 {
    if distributed <= centralized {
        return 1.0;
    }
    let (c, d, s) = (centralized as i128, distributed as i128, saving as i128);
    let margin = s + c - d;
    if margin <= 0 {
        return f64::INFINITY;
    }
    ((s + margin - 1) / margin).max(1) as f64
}

pub fn overhead(config: &SystemConfig) -> Result<OverheadReport> {
    config.validate()?;
    let (n_u, n_r, n_a, n_s) = (config.n_u as u64, config.n_r as u64, config.n_a as u64, config.n_s as u64);
    let c = centralized_entries(n_u, n_r, n_s);
    let d = distributed_entries(n_u, n_r, n_a);
    let s = 2 * n_a * n_r;
    Ok(OverheadReport {
        centralized_entries: c,
        distributed_entries: d,
        async_savings_per_update: s,
        breakeven_coherence_ratio: breakeven(c, d, s),
    })
}

impl OverheadReport {
    pub const CSV_HEADER: &'static str =
        "centralized_entries,distributed_entries,async_savings_per_update,breakeven_coherence_ratio";

    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{}",
            self.centralized_entries, self.distributed_entries, self.async_savings_per_update, self.breakeven_coherence_ratio
        )
    }

    pub fn table(&self) -> String {
        let rows = [
            ("centralized entries / update", self.centralized_entries.to_string()),
            ("distributed entries / update", self.distributed_entries.to_string()),
            ("async saving / update", self.async_savings_per_update.to_string()),
            ("breakeven coherence ratio", self.breakeven_coherence_ratio.to_string()),
        ];
        let width = rows.iter().map(|(k, _)| k.len()).max().unwrap_or(0);
        rows.iter().map(|(k, v)| format!("{k:<width$}  {v:>6}\n")).collect()
    }
}
