//! Paired multi-trial comparison of the BFGS (first-order) and Newton
//! (second-order) paths from identical initial guesses.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{OptimizerKind, RunConfig, SystemFile};
use super::run::solve;
use super::stats::quantile;
use super::synth::initial_theta;
use crate::control::ControlModel;
use crate::dynamics::QuantumSystem;
use crate::error::{Error, Result};
use crate::optimizer::{OptimizationReport, TerminationReason};
use rayon::prelude::*;

pub const TRIALS_FILE: &str = "trials.csv";
/// Environment variable overriding the number of parallel study workers.
pub const WORKERS_ENV: &str = "QOC_WORKERS";

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunSummary {
    pub iterations: usize,
    pub wall_s: f64,
    pub final_cost: f64,
    pub grad_norm: f64,
    pub target_viol: f64,
    pub termination_reason: TerminationReason,
    pub final_hessian_min_eig: Option<f64>,
}

impl From<&OptimizationReport> for RunSummary {
    fn from(r: &OptimizationReport) -> Self {
        Self {
            iterations: r.iterations,
            wall_s: r.wall_time,
            final_cost: r.final_cost,
            grad_norm: r.final_grad_norm,
            target_viol: r.final_target_violation.unwrap_or(f64::NAN),
            termination_reason: r.termination_reason,
            final_hessian_min_eig: r.final_hessian_min_eig,
        }
    }
}

/// First-order over second-order values of one trial.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Ratios {
    pub iterations: f64,
    pub wall_s: f64,
    pub final_cost: f64,
    pub grad_norm: f64,
    pub target_viol: f64,
}

impl Ratios {
    pub const NAMES: [&'static str; 5] = ["iterations", "wall_s", "final_cost", "grad_norm", "target_viol"];

    fn of(first: &RunSummary, second: &RunSummary) -> Self {
        Self {
            iterations: first.iterations as f64 / second.iterations as f64,
            wall_s: first.wall_s / second.wall_s,
            final_cost: first.final_cost / second.final_cost,
            grad_norm: first.grad_norm / second.grad_norm,
            target_viol: first.target_viol / second.target_viol,
        }
    }

    pub fn values(&self) -> [f64; 5] {
        [self.iterations, self.wall_s, self.final_cost, self.grad_norm, self.target_viol]
    }

    fn from_values(v: [f64; 5]) -> Self {
        Self {
            iterations: v[0],
            wall_s: v[1],
            final_cost: v[2],
            grad_norm: v[3],
            target_viol: v[4],
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrialRecord {
    pub trial: usize,
    pub theta_seed: u64,
    pub newton: RunSummary,
    pub bfgs: RunSummary,
    pub ratios: Ratios,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct StudySummary {
    pub system_name: String,
    pub num_trials: usize,
    pub mean: Ratios,
    pub q05: Ratios,
    pub q95: Ratios,
    pub trials: Vec<TrialRecord>,
}

/// Runs both optimizers from the same `theta0`; ratios are BFGS over Newton.
pub fn paired_trial(
    system: &QuantumSystem,
    model: &dyn ControlModel,
    config: &RunConfig,
    trial: usize,
    theta_seed: u64,
) -> Result<TrialRecord> {
    let theta0 = initial_theta(model.num_params(), theta_seed);
    let newton = RunSummary::from(&solve(system, model, config, OptimizerKind::Newton, &theta0)?);
    let bfgs = RunSummary::from(&solve(system, model, config, OptimizerKind::Bfgs, &theta0)?);
    let ratios = Ratios::of(&bfgs, &newton);
    Ok(TrialRecord {
        trial,
        theta_seed,
        newton,
        bfgs,
        ratios,
    })
}

/// Worker count from [`WORKERS_ENV`], if set to a positive integer.
pub fn workers_from_env() -> Option<usize> {
    std::env::var(WORKERS_ENV)
        .ok()
        .and_then(|v| v.trim().parse().ok())
        .filter(|&w: &usize| w > 0)
}

/// Aggregates per-trial ratios: ratios first, then means and 5%/95% quantiles.
pub fn summarize(system_name: &str, trials: Vec<TrialRecord>) -> Result<StudySummary> {
    if trials.is_empty() {
        return Err(Error::Invalid("study needs at least one trial".into()));
    }
    let columns: Vec<Vec<f64>> = (0..5)
        .map(|c| trials.iter().map(|t| t.ratios.values()[c]).collect())
        .collect();
    let agg = |f: &dyn Fn(&[f64]) -> f64| {
        let mut v = [0.0; 5];
        for (c, col) in columns.iter().enumerate() {
            v[c] = f(col);
        }
        Ratios::from_values(v)
    };
    Ok(StudySummary {
        system_name: system_name.to_string(),
        num_trials: trials.len(),
        mean: agg(&|c| c.iter().sum::<f64>() / c.len() as f64),
        q05: agg(&|c| quantile(c, 0.05)),
        q95: agg(&|c| quantile(c, 0.95)),
        trials,
    })
}

/// `num_trials` paired runs on one system; trial `t` draws `theta0` from
/// seed `seed + t`. Trials run on a worker pool sized by [`WORKERS_ENV`].
pub fn study(file: &SystemFile, config: &RunConfig, num_trials: usize, seed: u64) -> Result<StudySummary> {
    if num_trials == 0 {
        return Err(Error::Invalid("study needs at least one trial".into()));
    }
    let system = file.to_system(config)?;
    let model = config.build_model(system.num_channels())?;
    let mut builder = rayon::ThreadPoolBuilder::new();
    if let Some(w) = workers_from_env() {
        builder = builder.num_threads(w);
    }
    let pool = builder
        .build()
        .map_err(|e| Error::Invalid(format!("cannot start worker pool: {e}")))?;
    let trials: Result<Vec<TrialRecord>> = pool.install(|| {
        (0..num_trials)
            .into_par_iter()
            .map(|t| paired_trial(&system, model.as_ref(), config, t, seed.wrapping_add(t as u64)))
            .collect()
    });
    summarize(&file.name, trials?)
}

/// Raw per-trial rows: trial, algorithm, iterations, wall_s, final_cost,
/// grad_norm, target_viol.
pub fn write_trials_csv(summary: &StudySummary, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path)?;
    w.write_record(["trial", "algorithm", "iterations", "wall_s", "final_cost", "grad_norm", "target_viol"])?;
    for t in &summary.trials {
        for (alg, r) in [("second_order", &t.newton), ("first_order", &t.bfgs)] {
            w.write_record([
                t.trial.to_string(),
                alg.to_string(),
                r.iterations.to_string(),
                r.wall_s.to_string(),
                r.final_cost.to_string(),
                r.grad_norm.to_string(),
                r.target_viol.to_string(),
            ])?;
        }
    }
    w.flush()?;
    Ok(())
}
