//! Central finite-difference oracles for the adjoint gradient and Hessian.

use nalgebra::DMatrix;

use super::{symmetrize, AdjointEngine, GradientResult, HessianResult, Order};
use crate::control::ControlModel;
use crate::dynamics::{self, QuantumSystem};
use crate::error::{Error, Result};

/// Relative step for the gradient oracle.
pub const GRADIENT_STEP: f64 = 1e-5;
/// Relative step for the Hessian oracle.
pub const HESSIAN_STEP: f64 = 1e-4;

fn check_step(h: f64) -> Result<()> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(Error::Invalid(format!("finite-difference step must be positive, got {h}")));
    }
    Ok(())
}

/// `C(up) - C(down)` from the two trajectories, with each squared norm
/// differenced as `(u - d)(u + d)` so that unchanged terms cancel exactly.
fn cost_difference(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    up: &[f64],
    down: &[f64],
) -> Result<f64> {
    let (fu, su) = dynamics::propagate_states(sys, model, up)?;
    let (fd, sd) = dynamics::propagate_states(sys, model, down)?;
    let reg: f64 = fu.iter().zip(&fd).map(|(u, d)| (u - d) * (u + d)).sum();
    let eu = su.last().unwrap() - sys.beta();
    let ed = sd.last().unwrap() - sys.beta();
    let target: f64 = eu.iter().zip(ed.iter()).map(|(u, d)| ((u - d).conj() * (u + d)).re).sum();
    Ok(0.5 * reg + 0.5 * sys.rho() * target)
}

/// Central differences of the cost, coordinate step `h (1 + |theta_l|)`.
/// Quotients use the step actually represented in floating point.
pub fn fd_gradient(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
    h: f64,
) -> Result<GradientResult> {
    check_step(h)?;
    let mut up = theta.to_vec();
    let mut down = theta.to_vec();
    let mut grad = Vec::with_capacity(theta.len());
    for l in 0..theta.len() {
        let step = h * (1.0 + theta[l].abs());
        up[l] = theta[l] + step;
        down[l] = theta[l] - step;
        let diff = cost_difference(sys, model, &up, &down)?;
        grad.push(diff / (up[l] - down[l]));
        up[l] = theta[l];
        down[l] = theta[l];
    }
    Ok(GradientResult { grad })
}

/// Central differences of the adjoint gradient, coordinate step
/// `h (1 + |theta_l|)`, symmetrized; `asymmetry` reports the defect of the raw
/// difference matrix.
pub fn fd_hessian(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
    h: f64,
) -> Result<HessianResult> {
    check_step(h)?;
    let engine = AdjointEngine::default();
    let np = theta.len();
    let mut raw = DMatrix::<f64>::zeros(np, np);
    let mut x = theta.to_vec();
    for l in 0..np {
        let step = h * (1.0 + theta[l].abs());
        let (hi, lo) = (theta[l] + step, theta[l] - step);
        x[l] = hi;
        let up = engine.evaluate(sys, model, &x, Order::First)?.gradient.grad;
        x[l] = lo;
        let down = engine.evaluate(sys, model, &x, Order::First)?.gradient.grad;
        x[l] = theta[l];
        for m in 0..np {
            raw[(m, l)] = (up[m] - down[m]) / (hi - lo);
        }
    }
    Ok(symmetrize(raw))
}
