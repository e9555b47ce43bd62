//! Adjoint-versus-finite-difference checks.

use serde::{Deserialize, Serialize};

use super::io::{RunConfig, SystemFile};
use super::run::engine_for;
use super::synth::initial_theta;
use crate::adjoint::fd::{fd_gradient, fd_hessian, GRADIENT_STEP, HESSIAN_STEP};
use crate::adjoint::{relative_inf_error, Order};
use crate::control::ControlModel;
use crate::dynamics::QuantumSystem;
use crate::error::Result;

pub const GRADIENT_TOL: f64 = 1e-6;
pub const HESSIAN_TOL: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Gradient,
    Hessian,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckReport {
    pub kind: CheckKind,
    pub num_params: usize,
    /// `||adjoint - fd||_inf / ||fd||_inf`.
    pub max_rel_error: f64,
    pub tolerance: f64,
    pub passed: bool,
    /// Relative asymmetry of the raw adjoint Hessian (Hessian checks only).
    pub asymmetry: Option<f64>,
}

impl CheckReport {
    fn new(kind: CheckKind, num_params: usize, err: f64, tolerance: f64, asymmetry: Option<f64>) -> Self {
        Self {
            kind,
            num_params,
            max_rel_error: err,
            tolerance,
            passed: err < tolerance,
            asymmetry,
        }
    }
}

/// Compares a supplied gradient with the finite-difference oracle.
pub fn compare_gradient(
    system: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
    grad: &[f64],
) -> Result<CheckReport> {
    let fd = fd_gradient(system, model, theta, GRADIENT_STEP)?;
    let err = relative_inf_error(grad, &fd.grad);
    Ok(CheckReport::new(CheckKind::Gradient, theta.len(), err, GRADIENT_TOL, None))
}

/// Compares a supplied column-major Hessian with the finite-difference oracle.
pub fn compare_hessian(
    system: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
    hess: &[f64],
    asymmetry: Option<f64>,
) -> Result<CheckReport> {
    let fd = fd_hessian(system, model, theta, HESSIAN_STEP)?;
    let err = relative_inf_error(hess, fd.hess.as_slice());
    Ok(CheckReport::new(CheckKind::Hessian, theta.len(), err, HESSIAN_TOL, asymmetry))
}

fn setup(file: &SystemFile, config: &RunConfig) -> Result<(QuantumSystem, Box<dyn ControlModel>)> {
    let system = file.to_system(config)?;
    let model = config.build_model(system.num_channels())?;
    Ok((system, model))
}

/// Adjoint gradient at a seeded standard-normal `theta` versus central
/// differences of the cost.
pub fn grad_check(file: &SystemFile, config: &RunConfig, seed: u64) -> Result<CheckReport> {
    let (system, model) = setup(file, config)?;
    let theta = initial_theta(model.num_params(), seed);
    let eval = engine_for(config).evaluate(&system, model.as_ref(), &theta, Order::First)?;
    compare_gradient(&system, model.as_ref(), &theta, &eval.gradient.grad)
}

/// Adjoint Hessian at a seeded standard-normal `theta` versus central
/// differences of the adjoint gradient.
pub fn hess_check(file: &SystemFile, config: &RunConfig, seed: u64) -> Result<CheckReport> {
    let (system, model) = setup(file, config)?;
    let theta = initial_theta(model.num_params(), seed);
    let eval = engine_for(config).evaluate(&system, model.as_ref(), &theta, Order::Second)?;
    let h = eval.hessian.expect("second-order evaluation returns a Hessian");
    compare_hessian(&system, model.as_ref(), &theta, h.hess.as_slice(), Some(h.asymmetry))
}
