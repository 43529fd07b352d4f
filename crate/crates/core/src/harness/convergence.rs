//! WMMSE convergence from random, SVD and SVD-WF starting points.

use std::io::Write;

use serde::Serialize;

use super::{default_threads, parallel_map, trial_seed};
use crate::channel::generate_channels;
use crate::error::Result;
use crate::sysmodel::SystemConfig;
use crate::trace::fmt_sig;
use crate::wmmse::{solve_wmmse, InitMode, WmmseSettings};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConvergenceSettings {
    pub t_max: usize,
    pub eps_min: f64,
    pub threads: usize,
}

impl Default for ConvergenceSettings {
    fn default() -> Self {
        Self { t_max: 3000, eps_min: 1e-7, threads: default_threads() }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceCurve {
    /// `random`, `svd` or `svdwf`.
    pub init: &'static str,
    /// Trial-averaged rate per iteration; finished runs hold their last value.
    pub mean_rates: Vec<f64>,
    pub final_rate: f64,
    pub iters_to_99: usize,
    pub iters_to_98: usize,
    /// Per-trial rate at iteration 0.
    pub initial_rates: Vec<f64>,
    pub final_rates: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ConvergenceStudy {
    pub curves: Vec<ConvergenceCurve>,
    /// Share of trials with starting rates ordered SVD-WF ≥ SVD ≥ random.
    pub ordered_start_fraction: f64,
}

/// First iteration at which `curve` reaches `frac` of its last value.
pub fn iterations_to(curve: &[f64], frac: f64) -> usize {
    let target = frac * curve.last().copied().unwrap_or(0.0);
    curve.iter().position(|&r| r >= target).unwrap_or(curve.len().saturating_sub(1))
}

const LABELS: [&str; 3] = ["random", "svd", "svdwf"];

pub fn run_convergence_study(
    config: &SystemConfig,
    n_trials: usize,
    seed: u64,
    settings: &ConvergenceSettings,
) -> Result<ConvergenceStudy> {
    config.validate()?;
    let runs = parallel_map(n_trials, settings.threads, |trial| -> Result<Vec<Vec<f64>>> {
        let s = trial_seed(seed, trial);
        let ch = generate_channels(config, s)?;
        let inits = [InitMode::Random { seed: s ^ 0x5EED }, InitMode::Svd, InitMode::SvdWf];
        inits
            .iter()
            .map(|&init| {
                let w = WmmseSettings { eps_min: settings.eps_min, t_max: settings.t_max, init, ..Default::default() };
                Ok(solve_wmmse(&ch, config, &w)?.1.rates())
            })
            .collect()
    });
    let runs: Vec<Vec<Vec<f64>>> = runs.into_iter().collect::<Result<_>>()?;
    let curves = (0..3)
        .map(|k| {
            let len = runs.iter().map(|r| r[k].len()).max().unwrap_or(0);
            let mut mean = vec![0.0; len];
            for r in &runs {
                let c = &r[k];
                for (i, m) in mean.iter_mut().enumerate() {
                    *m += c.get(i).or(c.last()).copied().unwrap_or(0.0);
                }
            }
            mean.iter_mut().for_each(|m| *m /= runs.len() as f64);
            ConvergenceCurve {
                init: LABELS[k],
                final_rate: mean.last().copied().unwrap_or(0.0),
                iters_to_99: iterations_to(&mean, 0.99),
                iters_to_98: iterations_to(&mean, 0.98),
                initial_rates: runs.iter().map(|r| r[k][0]).collect(),
                final_rates: runs.iter().map(|r| *r[k].last().unwrap()).collect(),
                mean_rates: mean,
            }
        })
        .collect::<Vec<_>>();
    let ordered = runs.iter().filter(|r| r[2][0] >= r[1][0] && r[1][0] >= r[0][0]).count();
    Ok(ConvergenceStudy { curves, ordered_start_fraction: ordered as f64 / runs.len().max(1) as f64 })
}

impl ConvergenceStudy {
    pub fn curve(&self, init: &str) -> Option<&ConvergenceCurve> {
        self.curves.iter().find(|c| c.init == init)
    }

    /// `iteration,random,svd,svdwf` rows of the mean curves.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["iteration".to_string()];
        header.extend(self.curves.iter().map(|c| c.init.to_string()));
        w.write_record(&header)?;
        let len = self.curves.iter().map(|c| c.mean_rates.len()).max().unwrap_or(0);
        for i in 0..len {
            let mut rec = vec![i.to_string()];
            for c in &self.curves {
                let v = c.mean_rates.get(i).or(c.mean_rates.last()).copied().unwrap_or(f64::NAN);
                rec.push(fmt_sig(v));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }

    pub fn summary(&self) -> String {
        let mut s = String::from("init    final_rate  iters_to_99  iters_to_98\n");
        for c in &self.curves {
            s += &format!("{:<7} {:>10.4} {:>12} {:>12}\n", c.init, c.final_rate, c.iters_to_99, c.iters_to_98);
        }
        s += &format!("ordered starting rates: {:.1}% of trials\n", 100.0 * self.ordered_start_fraction);
        s
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn iterations_to_threshold() {
        let c = [1.0, 5.0, 9.0, 9.85, 9.95, 10.0];
        assert_eq!(iterations_to(&c, 0.99), 4);
        assert_eq!(iterations_to(&c, 0.98), 3);
        assert_eq!(iterations_to(&[], 0.99), 0);
    }
}
