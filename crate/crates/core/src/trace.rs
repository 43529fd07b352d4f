//! Per-iteration optimizer diagnostics shared by the iterative solvers.

use std::io::Write;

use serde::Serialize;

use crate::error::Result;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TraceRow {
    pub iteration: usize,
    pub rate_bits: f64,
    pub objective: f64,
    /// Slack of the UE f_L, UE f_H and relay power constraints.
    pub slack: [f64; 3],
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum StopReason {
    Converged,
    IterationCap,
    /// Non-iterative solvers.
    Closed,
}

/// One block update inside an alternating-optimization iteration.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Substep {
    Receiver,
    Weight,
    PrecoderDirect,
    PrecoderRelay,
    RelayMatrix,
    /// Single precoder of the relay-assisted baseline.
    Precoder,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SubstepRecord {
    pub iteration: usize,
    pub step: Substep,
    pub objective: f64,
    /// Largest relative constraint violation after the step (≤ 0 when feasible).
    pub max_violation: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizerTrace {
    pub rows: Vec<TraceRow>,
    pub stop: StopReason,
    pub substeps: Vec<SubstepRecord>,
}

impl OptimizerTrace {
    pub fn new() -> Self {
        Self { rows: Vec::new(), stop: StopReason::Closed, substeps: Vec::new() }
    }

    pub fn iterations(&self) -> usize {
        self.rows.last().map_or(0, |r| r.iteration)
    }

    pub fn final_rate(&self) -> f64 {
        self.rows.last().map_or(0.0, |r| r.rate_bits)
    }

    pub fn rates(&self) -> Vec<f64> {
        self.rows.iter().map(|r| r.rate_bits).collect()
    }

    /// CSV with header `iteration,rate_bits,objective,slack_ua,slack_ur,slack_r`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["iteration", "rate_bits", "objective", "slack_ua", "slack_ur", "slack_r"])?;
        for r in &self.rows {
            w.write_record([
                r.iteration.to_string(),
                fmt_sig(r.rate_bits),
                fmt_sig(r.objective),
                fmt_sig(r.slack[0]),
                fmt_sig(r.slack[1]),
                fmt_sig(r.slack[2]),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

impl Default for OptimizerTrace {
    fn default() -> Self {
        Self::new()
    }
}

/// Ten significant digits in scientific notation.
pub fn fmt_sig(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.9e}")
    } else {
        format!("{x}")
    }
}
