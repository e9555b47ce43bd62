//! Single optimization runs and their emitted artifacts.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::io::{save_json, OptimizerKind, RunConfig, SystemFile};
use super::problem::ControlProblem;
use super::checks::compare_hessian;
use super::synth::initial_theta;
use crate::adjoint::{AdjointEngine, Order};
use crate::control::ControlModel;
use crate::dynamics::{self, QuantumSystem};
use crate::error::{Error, Result};
use crate::optimizer::{bfgs_baseline, newton_trust_region, OptimizationReport};

pub const RESULTS_FILE: &str = "results.json";
pub const CONTROLS_FILE: &str = "controls.csv";
pub const STATES_FILE: &str = "states.csv";

pub fn engine_for(config: &RunConfig) -> AdjointEngine {
    AdjointEngine::new(config.batch_width, config.memory_budget)
}

/// Runs one optimizer from `theta0`.
pub fn solve(
    system: &QuantumSystem,
    model: &dyn ControlModel,
    config: &RunConfig,
    kind: OptimizerKind,
    theta0: &[f64],
) -> Result<OptimizationReport> {
    let engine = engine_for(config);
    if kind == OptimizerKind::Newton {
        engine.check_budget(system, model.num_params())?;
        if cfg!(debug_assertions) {
            check_hessian_at(system, model, &engine, theta0)?;
        }
    }
    let problem = ControlProblem::new(system, model, engine);
    match kind {
        OptimizerKind::Newton => {
            newton_trust_region(&problem, theta0, &config.criteria, &config.trust_region)
        }
        OptimizerKind::Bfgs => {
            bfgs_baseline(&problem, theta0, &config.criteria, &config.trust_region)
        }
    }
}

/// Precondition of the Newton path in debug builds: the adjoint Hessian at
/// `theta0` agrees with finite differences.
fn check_hessian_at(
    system: &QuantumSystem,
    model: &dyn ControlModel,
    engine: &AdjointEngine,
    theta0: &[f64],
) -> Result<()> {
    let eval = engine.evaluate(system, model, theta0, Order::Second)?;
    let h = eval.hessian.expect("second-order evaluation returns a Hessian");
    let report = compare_hessian(system, model, theta0, h.hess.as_slice(), Some(h.asymmetry))?;
    if !report.passed {
        return Err(Error::Invalid(format!(
            "Hessian evaluator disagrees with finite differences at theta0 (relative error {:.3e})",
            report.max_rel_error
        )));
    }
    Ok(())
}

/// Everything written to `results.json` by `run`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RunRecord {
    pub system_name: String,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub num_params: usize,
    pub initial_cost: f64,
    #[serde(flatten)]
    pub report: OptimizationReport,
}

/// Loads the problem, draws `theta0` from `config.seed`, optimizes with
/// `config.optimizer`, and, if `out` is given, writes `results.json`,
/// `controls.csv` and `states.csv` there.
pub fn run_optimization(file: &SystemFile, config: &RunConfig, out: Option<&Path>) -> Result<RunRecord> {
    let system = file.to_system(config)?;
    let model = config.build_model(system.num_channels())?;
    let theta0 = initial_theta(model.num_params(), config.seed);
    let initial_cost = dynamics::evaluate_cost(&system, model.as_ref(), &theta0)?;
    let report = solve(&system, model.as_ref(), config, config.optimizer, &theta0)?;
    let record = RunRecord {
        system_name: file.name.clone(),
        optimizer: config.optimizer,
        seed: config.seed,
        num_params: model.num_params(),
        initial_cost,
        report,
    };
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        save_json(&dir.join(RESULTS_FILE), &record)?;
        write_trajectory(&system, model.as_ref(), &record.report.final_theta, dir)?;
    }
    Ok(record)
}

/// Writes `controls.csv` (J rows: step, t, f_1..f_K) and `states.csv`
/// (J+1 rows: step, t, |a_1|..|a_N|).
pub fn write_trajectory(
    system: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
    dir: &Path,
) -> Result<()> {
    let (controls, states) = dynamics::propagate_states(system, model, theta)?;
    let k = system.num_channels();
    let dt = system.dt();

    let mut w = csv::Writer::from_path(dir.join(CONTROLS_FILE))?;
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend((1..=k).map(|c| format!("f_{c}")));
    w.write_record(&header)?;
    for j in 0..system.num_steps() {
        let mut row = vec![j.to_string(), (j as f64 * dt).to_string()];
        row.extend(controls[j * k..(j + 1) * k].iter().map(f64::to_string));
        w.write_record(&row)?;
    }
    w.flush()?;

    let mut w = csv::Writer::from_path(dir.join(STATES_FILE))?;
    let mut header = vec!["step".to_string(), "t".to_string()];
    header.extend((1..=system.dim()).map(|p| format!("abs_a_{p}")));
    w.write_record(&header)?;
    for (j, a) in states.iter().enumerate() {
        let mut row = vec![j.to_string(), (j as f64 * dt).to_string()];
        row.extend(a.iter().map(|z| z.norm().to_string()));
        w.write_record(&row)?;
    }
    w.flush()?;
    Ok(())
}
