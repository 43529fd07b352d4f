//! Browser bindings for the demo page in `www/`. Every export returns a JSON
//! string; the `*_json` functions behind them also run natively for tests.

use serde::Serialize;
use wasm_bindgen::prelude::*;

use raca_core::harness::{ratio_grid, run_experiment, Experiment, ExperimentSpec, SolverSettings};
use raca_core::metrics::SystemKind;
use raca_core::protocol::overhead;
use raca_core::sysmodel::SystemConfig;

/// Keeps a click responsive: WMMSE is the slow part.
const DEMO_T_MAX: usize = 300;
const MAX_TRIALS: usize = 50;

#[derive(Serialize)]
struct Series {
    system: String,
    rate: Vec<f64>,
    stderr: Vec<f64>,
}

#[derive(Serialize)]
struct Sweep {
    x: Vec<f64>,
    series: Vec<Series>,
}

fn check_trials(trials: usize) -> Result<(), String> {
    if trials == 0 || trials > MAX_TRIALS {
        return Err(format!("trials must be between 1 and {MAX_TRIALS}"));
    }
    Ok(())
}

fn sweep(spec: &mut ExperimentSpec, trials: usize, seed: u64) -> Result<String, String> {
    check_trials(trials)?;
    spec.n_trials = trials;
    spec.seed = seed;
    spec.threads = 1;
    spec.solver = SolverSettings { t_max: DEMO_T_MAX, ..Default::default() };
    let result = run_experiment(spec).map_err(|e| e.to_string())?;
    let series = spec
        .systems
        .iter()
        .map(|&kind| {
            let rows = result.series(kind);
            Series {
                system: kind.name().to_string(),
                rate: rows.iter().map(|r| r.mean_rate).collect(),
                stderr: rows.iter().map(|r| r.stderr).collect(),
            }
        })
        .collect();
    serde_json::to_string(&Sweep { x: spec.sweep_values.clone(), series }).map_err(|e| e.to_string())
}

/// Mean sum rate against noise power in dBm, from `from` to `to` inclusive.
pub fn rate_vs_noise_json(from: f64, to: f64, step: f64, trials: usize, seed: u64) -> Result<String, String> {
    if !(step > 0.0) || !(to >= from) || (to - from) / step > 40.0 {
        return Err("need from ≤ to and at most 40 steps".into());
    }
    let n = ((to - from) / step + 1e-9).floor() as usize;
    let mut spec = ExperimentSpec::new(Experiment::RateVsNoise, SystemConfig::default());
    spec.sweep_values = (0..=n).map(|i| from + step * i as f64).collect();
    spec.systems = vec![SystemKind::RacaWmmse, SystemKind::RacaSvdWf, SystemKind::CaSvdWf, SystemKind::MimoSvdWf];
    sweep(&mut spec, trials, seed)
}

/// RACA rate across a power-split sweep. `split` is `ue_relay` or `fl_fh`;
/// `offset_db` scales the total being split.
pub fn power_split_json(split: &str, offset_db: f64, trials: usize, seed: u64) -> Result<String, String> {
    let experiment = match split {
        "ue_relay" => Experiment::RatioUeRelay,
        "fl_fh" => Experiment::RatioFlFh,
        other => return Err(format!("unknown split {other:?}")),
    };
    if !(-20.0..=20.0).contains(&offset_db) {
        return Err("offset must lie within ±20 dB".into());
    }
    let s = 10f64.powf(offset_db / 10.0);
    let mut base = SystemConfig::default();
    match experiment {
        Experiment::RatioUeRelay => {
            base.p_ur_fh *= s;
            base.p_r *= s;
        }
        _ => {
            base.p_ua_fl *= s;
            base.p_ur_fh *= s;
        }
    }
    let mut spec = ExperimentSpec::new(experiment, base);
    spec.sweep_values = ratio_grid();
    spec.systems = vec![SystemKind::RacaWmmse, SystemKind::RacaSvdWf];
    sweep(&mut spec, trials, seed)
}

/// Feedback entries per update for the given antenna and stream counts.
pub fn overhead_json(n_u: usize, n_r: usize, n_a: usize, n_s: usize) -> Result<String, String> {
    let cfg = SystemConfig { n_u, n_r, n_a, n_s, ..SystemConfig::default() };
    let report = overhead(&cfg).map_err(|e| e.to_string())?;
    serde_json::to_string(&report).map_err(|e| e.to_string())
}

#[wasm_bindgen]
pub fn rate_vs_noise(from: f64, to: f64, step: f64, trials: usize, seed: u32) -> Result<String, JsError> {
    rate_vs_noise_json(from, to, step, trials, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn power_split(split: &str, offset_db: f64, trials: usize, seed: u32) -> Result<String, JsError> {
    power_split_json(split, offset_db, trials, seed.into()).map_err(|e| JsError::new(&e))
}

#[wasm_bindgen]
pub fn signaling_overhead(n_u: usize, n_r: usize, n_a: usize, n_s: usize) -> Result<String, JsError> {
    overhead_json(n_u, n_r, n_a, n_s).map_err(|e| JsError::new(&e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn noise_sweep_shape() {
        let v: serde_json::Value = serde_json::from_str(&rate_vs_noise_json(-100.0, -80.0, 10.0, 2, 3).unwrap()).unwrap();
        assert_eq!(v["x"].as_array().unwrap().len(), 3);
        assert_eq!(v["series"].as_array().unwrap().len(), 4);
        assert_eq!(v["series"][0]["system"], "RACA-WMMSE");
        // rate falls as noise rises
        let r = v["series"][1]["rate"].as_array().unwrap();
        assert!(r[0].as_f64().unwrap() > r[2].as_f64().unwrap());
    }

    #[test]
    fn split_sweep_shape() {
        let v: serde_json::Value = serde_json::from_str(&power_split_json("fl_fh", 0.0, 1, 1).unwrap()).unwrap();
        assert_eq!(v["x"].as_array().unwrap().len(), 21);
        assert!(power_split_json("both", 0.0, 1, 1).is_err());
        assert!(power_split_json("ue_relay", 0.0, 0, 1).is_err());
    }

    #[test]
    fn overhead_defaults() {
        let v: serde_json::Value = serde_json::from_str(&overhead_json(2, 4, 4, 2).unwrap()).unwrap();
        assert_eq!(v["centralized_entries"], 32);
        assert_eq!(v["distributed_entries"], 56);
        assert_eq!(v["breakeven_coherence_ratio"], 4.0);
        assert!(overhead_json(2, 4, 4, 3).is_err());
    }
}
