//! Adapter exposing a control problem to the optimizers.

use std::cell::RefCell;

use nalgebra::DMatrix;

use crate::adjoint::{AdjointEngine, Evaluation, Order};
use crate::control::ControlModel;
use crate::dynamics::{self, QuantumSystem, TrajectoryCache};
use crate::error::Result;
use crate::optimizer::{Objective, SecondOrderObjective};

/// The optimizer evaluates the cost at a trial point and, if the step is
/// accepted, derivatives at the same point; the last trajectory is kept so
/// the second request does not propagate again.
pub struct ControlProblem<'a> {
    pub system: &'a QuantumSystem,
    pub model: &'a dyn ControlModel,
    pub engine: AdjointEngine,
    last: RefCell<Option<(Vec<f64>, TrajectoryCache)>>,
}

impl<'a> ControlProblem<'a> {
    pub fn new(system: &'a QuantumSystem, model: &'a dyn ControlModel, engine: AdjointEngine) -> Self {
        Self {
            system,
            model,
            engine,
            last: RefCell::new(None),
        }
    }

    fn evaluate(&self, x: &[f64], order: Order) -> Result<Evaluation> {
        if let Some((theta, cache)) = self.last.borrow().as_ref() {
            if theta.as_slice() == x {
                return self
                    .engine
                    .evaluate_cached(self.system, self.model, x, cache, order);
            }
        }
        self.engine.evaluate(self.system, self.model, x, order)
    }
}

impl Objective for ControlProblem<'_> {
    fn cost(&self, x: &[f64]) -> Result<f64> {
        let cache = dynamics::propagate(self.system, self.model, x)?;
        let cost = dynamics::cost(self.system, &cache);
        *self.last.borrow_mut() = Some((x.to_vec(), cache));
        Ok(cost)
    }

    fn cost_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
        let e = self.evaluate(x, Order::First)?;
        Ok((e.cost, e.gradient.grad))
    }

    fn target_violation(&self, x: &[f64]) -> Result<Option<f64>> {
        let (_, states) = dynamics::propagate_states(self.system, self.model, x)?;
        Ok(Some((states.last().unwrap() - self.system.beta()).norm()))
    }
}

impl SecondOrderObjective for ControlProblem<'_> {
    fn cost_gradient_hessian(&self, x: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
        let e = self.evaluate(x, Order::Second)?;
        let h = e.hessian.expect("second-order evaluation returns a Hessian");
        Ok((e.cost, e.gradient.grad, h.hess))
    }
}
