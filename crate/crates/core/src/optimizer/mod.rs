//! Trust-region minimization with either exact Hessians (Newton) or a
//! damped-BFGS approximation built from gradients.
//!
//! Both paths run through one shell: the same subproblem solver, acceptance
//! test, radius schedule and termination checks. Only the curvature matrix of
//! the quadratic model differs, so iteration counts are directly comparable.

pub mod subproblem;

use std::time::Instant;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
pub use subproblem::{trust_region_subproblem, SubproblemMethod};

/// Stop when the accepted step or the trust radius drops below `step_tol`,
/// when the gradient norm drops below `grad_tol`, or after `max_iters`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TerminationCriteria {
    pub step_tol: f64,
    pub grad_tol: f64,
    pub max_iters: usize,
}

impl Default for TerminationCriteria {
    fn default() -> Self {
        Self {
            step_tol: 1e-10,
            grad_tol: 1e-10,
            max_iters: 10_000,
        }
    }
}

impl TerminationCriteria {
    pub fn validate(&self) -> Result<()> {
        if !(self.step_tol > 0.0) || !(self.grad_tol > 0.0) || self.max_iters == 0 {
            return Err(Error::Invalid(format!(
                "termination criteria need positive tolerances and max_iters >= 1, got {self:?}"
            )));
        }
        Ok(())
    }
}

/// Radius schedule and subproblem settings.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrustRegionConfig {
    pub initial_radius: f64,
    pub max_radius: f64,
    /// Accept a step when actual/predicted reduction exceeds this.
    pub accept_ratio: f64,
    pub shrink_below: f64,
    pub shrink_factor: f64,
    pub expand_above: f64,
    pub expand_factor: f64,
    /// Powell damping threshold for the BFGS update.
    pub bfgs_damping: f64,
    /// Rescale the identity to `(y'y / s'y) I` before the first BFGS update.
    pub bfgs_initial_scaling: bool,
    pub subproblem: SubproblemMethod,
}

impl Default for TrustRegionConfig {
    fn default() -> Self {
        Self {
            initial_radius: 1.0,
            max_radius: 1e10,
            accept_ratio: 1e-4,
            shrink_below: 0.25,
            shrink_factor: 0.25,
            expand_above: 0.75,
            expand_factor: 2.0,
            bfgs_damping: 0.2,
            bfgs_initial_scaling: true,
            subproblem: SubproblemMethod::default(),
        }
    }
}

impl TrustRegionConfig {
    pub fn validate(&self) -> Result<()> {
        let ok = self.initial_radius > 0.0
            && self.max_radius >= self.initial_radius
            && self.accept_ratio >= 0.0
            && self.accept_ratio < self.shrink_below
            && self.shrink_below <= self.expand_above
            && self.shrink_factor > 0.0
            && self.shrink_factor < 1.0
            && self.expand_factor > 1.0
            && self.bfgs_damping > 0.0
            && self.bfgs_damping < 1.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Invalid(format!("inconsistent trust-region settings: {self:?}")))
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TerminationReason {
    StepTol,
    GradTol,
    MaxIters,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    /// Cost at the current iterate after this iteration.
    pub cost: f64,
    pub grad_norm: f64,
    /// Norm of the accepted step, zero if the trial step was rejected.
    pub step_norm: f64,
    /// Radius after the update.
    pub trust_radius: f64,
    pub accepted: bool,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct OptimizationReport {
    pub iterations: usize,
    pub wall_time: f64,
    pub trace: Vec<IterationRecord>,
    pub final_theta: Vec<f64>,
    pub final_cost: f64,
    pub final_grad_norm: f64,
    pub termination_reason: TerminationReason,
    pub final_target_violation: Option<f64>,
    /// Smallest eigenvalue of the exact Hessian at the final iterate (Newton
    /// path only).
    pub final_hessian_min_eig: Option<f64>,
}

/// Cost and gradient evaluators.
pub trait Objective {
    fn cost(&self, x: &[f64]) -> Result<f64>;
    fn cost_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)>;

    /// Problem-specific distance to target, reported at the final iterate.
    fn target_violation(&self, _x: &[f64]) -> Result<Option<f64>> {
        Ok(None)
    }
}

/// Adds the exact Hessian.
pub trait SecondOrderObjective: Objective {
    fn cost_gradient_hessian(&self, x: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)>;
}

enum Curvature<'a> {
    Exact(&'a dyn SecondOrderObjective),
    Bfgs,
}

fn at_iter<T>(iteration: usize, r: Result<T>) -> Result<T> {
    r.map_err(|e| Error::Evaluation {
        iteration,
        source: Box::new(e),
    })
}

/// Powell-damped BFGS update of a Hessian approximation.
pub fn damped_bfgs_update(b: &mut DMatrix<f64>, s: &DVector<f64>, y: &DVector<f64>, damping: f64) {
    let bs = &*b * s;
    let sbs = s.dot(&bs);
    if !(sbs > 0.0) {
        return;
    }
    let sy = s.dot(y);
    let r = if sy >= damping * sbs {
        y.clone()
    } else {
        let phi = (1.0 - damping) * sbs / (sbs - sy);
        y * phi + &bs * (1.0 - phi)
    };
    let sr = s.dot(&r);
    if !(sr > 0.0) {
        return;
    }
    b.ger(-1.0 / sbs, &bs, &bs, 1.0);
    b.ger(1.0 / sr, &r, &r, 1.0);
}

fn run_shell(
    obj: &dyn Objective,
    curvature: Curvature<'_>,
    theta0: &[f64],
    criteria: &TerminationCriteria,
    cfg: &TrustRegionConfig,
) -> Result<OptimizationReport> {
    criteria.validate()?;
    cfg.validate()?;
    let n = theta0.len();

    // Warm-up evaluations, excluded from the timing.
    at_iter(0, obj.cost(theta0))?;
    match &curvature {
        Curvature::Exact(h) => {
            at_iter(0, h.cost_gradient_hessian(theta0))?;
        }
        Curvature::Bfgs => {
            at_iter(0, obj.cost_gradient(theta0))?;
        }
    }

    let start = Instant::now();
    let mut x = DVector::from_column_slice(theta0);
    let (mut f, g0, mut b) = match &curvature {
        Curvature::Exact(h) => at_iter(0, h.cost_gradient_hessian(theta0))?,
        Curvature::Bfgs => {
            let (f, g) = at_iter(0, obj.cost_gradient(theta0))?;
            (f, g, DMatrix::identity(n, n))
        }
    };
    if !f.is_finite() {
        return Err(Error::NonFiniteCost { iteration: 0 });
    }
    let mut g = DVector::from_vec(g0);
    let mut radius = cfg.initial_radius;
    let mut trace = Vec::new();
    let mut bfgs_updates = 0usize;
    let mut reason = TerminationReason::MaxIters;

    if g.norm() < criteria.grad_tol {
        reason = TerminationReason::GradTol;
    } else {
        for iter in 1..=criteria.max_iters {
            let s = trust_region_subproblem(&b, &g, radius, cfg.subproblem);
            let predicted = -subproblem::model_value(&b, &g, &s);
            let trial = &x + &s;
            let f_trial = at_iter(iter, obj.cost(trial.as_slice()))?;
            if !f_trial.is_finite() {
                return Err(Error::NonFiniteCost { iteration: iter });
            }
            let ratio = if predicted > 0.0 {
                (f - f_trial) / predicted
            } else {
                f64::NEG_INFINITY
            };
            let step_norm = s.norm();
            let accepted = ratio > cfg.accept_ratio;

            if ratio < cfg.shrink_below {
                radius *= cfg.shrink_factor;
            } else if ratio > cfg.expand_above && step_norm >= 0.99 * radius {
                radius = (radius * cfg.expand_factor).min(cfg.max_radius);
            }

            if accepted {
                match &curvature {
                    Curvature::Exact(h) => {
                        let (fv, gv, hv) = at_iter(iter, h.cost_gradient_hessian(trial.as_slice()))?;
                        f = fv;
                        g = DVector::from_vec(gv);
                        b = hv;
                    }
                    Curvature::Bfgs => {
                        let (fv, gv) = at_iter(iter, obj.cost_gradient(trial.as_slice()))?;
                        let gv = DVector::from_vec(gv);
                        let y = &gv - &g;
                        let sy = s.dot(&y);
                        if bfgs_updates == 0 && cfg.bfgs_initial_scaling && sy > 0.0 {
                            b = DMatrix::identity(n, n) * (y.norm_squared() / sy);
                        }
                        bfgs_updates += 1;
                        damped_bfgs_update(&mut b, &s, &y, cfg.bfgs_damping);
                        f = fv;
                        g = gv;
                    }
                }
                x = trial;
            }

            let grad_norm = g.norm();
            trace.push(IterationRecord {
                cost: f,
                grad_norm,
                step_norm: if accepted { step_norm } else { 0.0 },
                trust_radius: radius,
                accepted,
            });

            if accepted && step_norm < criteria.step_tol {
                reason = TerminationReason::StepTol;
                break;
            }
            if grad_norm < criteria.grad_tol {
                reason = TerminationReason::GradTol;
                break;
            }
            if radius < criteria.step_tol {
                reason = TerminationReason::StepTol;
                break;
            }
        }
    }
    let wall_time = start.elapsed().as_secs_f64();

    let final_hessian_min_eig = match &curvature {
        Curvature::Exact(_) => Some(subproblem::min_eigenvalue(&b)),
        Curvature::Bfgs => None,
    };
    let final_theta: Vec<f64> = x.iter().copied().collect();
    let final_target_violation = obj.target_violation(&final_theta)?;

    Ok(OptimizationReport {
        iterations: trace.len(),
        wall_time,
        trace,
        final_cost: f,
        final_grad_norm: g.norm(),
        final_theta,
        termination_reason: reason,
        final_target_violation,
        final_hessian_min_eig,
    })
}

/// Trust-region Newton method on exact gradients and Hessians.
pub fn newton_trust_region(
    obj: &dyn SecondOrderObjective,
    theta0: &[f64],
    criteria: &TerminationCriteria,
    cfg: &TrustRegionConfig,
) -> Result<OptimizationReport> {
    let as_first: &dyn Objective = upcast(obj);
    run_shell(as_first, Curvature::Exact(obj), theta0, criteria, cfg)
}

/// Same trust-region shell with a damped-BFGS model started from the identity.
pub fn bfgs_baseline(
    obj: &dyn Objective,
    theta0: &[f64],
    criteria: &TerminationCriteria,
    cfg: &TrustRegionConfig,
) -> Result<OptimizationReport> {
    run_shell(obj, Curvature::Bfgs, theta0, criteria, cfg)
}

fn upcast(obj: &dyn SecondOrderObjective) -> &dyn Objective {
    obj
}

#[cfg(test)]
mod tests {
    use super::*;

    struct Quadratic {
        center: Vec<f64>,
        scale: Vec<f64>,
    }

    impl Objective for Quadratic {
        fn cost(&self, x: &[f64]) -> Result<f64> {
            Ok(x.iter()
                .zip(&self.center)
                .zip(&self.scale)
                .map(|((x, c), s)| 0.5 * s * (x - c).powi(2))
                .sum())
        }
        fn cost_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let g = x
                .iter()
                .zip(&self.center)
                .zip(&self.scale)
                .map(|((x, c), s)| s * (x - c))
                .collect();
            Ok((self.cost(x)?, g))
        }
    }

    impl SecondOrderObjective for Quadratic {
        fn cost_gradient_hessian(&self, x: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
            let (f, g) = self.cost_gradient(x)?;
            Ok((f, g, DMatrix::from_diagonal(&DVector::from_vec(self.scale.clone()))))
        }
    }

    struct Rosenbrock;

    impl Objective for Rosenbrock {
        fn cost(&self, x: &[f64]) -> Result<f64> {
            Ok((1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2))
        }
        fn cost_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            let t = x[1] - x[0] * x[0];
            Ok((
                self.cost(x)?,
                vec![-2.0 * (1.0 - x[0]) - 400.0 * x[0] * t, 200.0 * t],
            ))
        }
    }

    impl SecondOrderObjective for Rosenbrock {
        fn cost_gradient_hessian(&self, x: &[f64]) -> Result<(f64, Vec<f64>, DMatrix<f64>)> {
            let (f, g) = self.cost_gradient(x)?;
            let h = DMatrix::from_row_slice(
                2,
                2,
                &[
                    2.0 - 400.0 * (x[1] - 3.0 * x[0] * x[0]),
                    -400.0 * x[0],
                    -400.0 * x[0],
                    200.0,
                ],
            );
            Ok((f, g, h))
        }
    }

    struct Blowup;

    impl Objective for Blowup {
        fn cost(&self, x: &[f64]) -> Result<f64> {
            Ok(if x[0] < -0.5 { f64::NAN } else { x[0] })
        }
        fn cost_gradient(&self, x: &[f64]) -> Result<(f64, Vec<f64>)> {
            Ok((self.cost(x)?, vec![1.0]))
        }
    }

    fn monotone(report: &OptimizationReport) -> bool {
        report.trace.windows(2).all(|w| w[1].cost <= w[0].cost)
    }

    #[test]
    fn newton_is_exact_on_quadratics() {
        let q = Quadratic {
            center: vec![0.3, -0.2],
            scale: vec![1.0, 1.0],
        };
        let r = newton_trust_region(
            &q,
            &[0.0, 0.0],
            &TerminationCriteria::default(),
            &TrustRegionConfig::default(),
        )
        .unwrap();
        assert_eq!(r.trace.iter().filter(|t| t.accepted).count(), 1);
        assert_eq!(r.iterations, 1);
        assert_eq!(r.termination_reason, TerminationReason::GradTol);
        assert!((r.final_theta[0] - 0.3).abs() < 1e-15);
        assert_eq!(r.final_hessian_min_eig, Some(1.0));
    }

    #[test]
    fn bfgs_needs_more_iterations_on_quadratics() {
        let q = Quadratic {
            center: vec![0.3, -0.2],
            scale: vec![3.0, 0.5],
        };
        let cfg = TrustRegionConfig::default();
        let crit = TerminationCriteria::default();
        let newton = newton_trust_region(&q, &[0.0, 0.0], &crit, &cfg).unwrap();
        let bfgs = bfgs_baseline(&q, &[0.0, 0.0], &crit, &cfg).unwrap();
        assert_eq!(newton.iterations, 1);
        assert!(bfgs.iterations >= 2);
        assert!(bfgs.iterations > newton.iterations);
        assert!((bfgs.final_theta[0] - 0.3).abs() < 1e-8);
        assert!((bfgs.final_theta[1] + 0.2).abs() < 1e-8);
        assert!(monotone(&bfgs));
        assert!(bfgs.final_hessian_min_eig.is_none());
    }

    #[test]
    fn rosenbrock_newton() {
        let r = newton_trust_region(
            &Rosenbrock,
            &[-1.2, 1.0],
            &TerminationCriteria::default(),
            &TrustRegionConfig::default(),
        )
        .unwrap();
        assert!((r.final_theta[0] - 1.0).abs() < 1e-8);
        assert!((r.final_theta[1] - 1.0).abs() < 1e-8);
        assert!(r.final_grad_norm < 1e-8);
        assert!(monotone(&r));
        assert_ne!(r.termination_reason, TerminationReason::MaxIters);
    }

    #[test]
    fn rosenbrock_bfgs() {
        let r = bfgs_baseline(
            &Rosenbrock,
            &[-1.2, 1.0],
            &TerminationCriteria::default(),
            &TrustRegionConfig::default(),
        )
        .unwrap();
        assert!((r.final_theta[0] - 1.0).abs() < 1e-6, "{:?}", r.final_theta);
        assert!((r.final_theta[1] - 1.0).abs() < 1e-6);
        assert!(monotone(&r));
        assert_ne!(r.termination_reason, TerminationReason::MaxIters);
    }

    #[test]
    fn every_subproblem_method_solves_rosenbrock() {
        for m in [SubproblemMethod::Eigen, SubproblemMethod::MoreSorensen, SubproblemMethod::Steihaug] {
            let cfg = TrustRegionConfig {
                subproblem: m,
                ..Default::default()
            };
            let r = newton_trust_region(&Rosenbrock, &[-1.2, 1.0], &TerminationCriteria::default(), &cfg)
                .unwrap();
            assert!((r.final_theta[0] - 1.0).abs() < 1e-6, "{m:?}");
        }
    }

    #[test]
    fn max_iters_is_reported() {
        let crit = TerminationCriteria {
            max_iters: 3,
            ..Default::default()
        };
        let r = bfgs_baseline(&Rosenbrock, &[-1.2, 1.0], &crit, &TrustRegionConfig::default()).unwrap();
        assert_eq!(r.iterations, 3);
        assert_eq!(r.trace.len(), 3);
        assert_eq!(r.termination_reason, TerminationReason::MaxIters);
    }

    #[test]
    fn non_finite_cost_aborts() {
        let err = bfgs_baseline(
            &Blowup,
            &[0.0],
            &TerminationCriteria::default(),
            &TrustRegionConfig::default(),
        )
        .unwrap_err();
        assert!(matches!(err, Error::NonFiniteCost { iteration: 1 }));
    }

    #[test]
    fn invalid_settings_rejected() {
        let q = Quadratic {
            center: vec![0.0],
            scale: vec![1.0],
        };
        let bad = TerminationCriteria {
            step_tol: 0.0,
            ..Default::default()
        };
        assert!(bfgs_baseline(&q, &[1.0], &bad, &TrustRegionConfig::default()).is_err());
        let bad_cfg = TrustRegionConfig {
            shrink_factor: 2.0,
            ..Default::default()
        };
        assert!(bfgs_baseline(&q, &[1.0], &TerminationCriteria::default(), &bad_cfg).is_err());
    }

    #[test]
    fn damped_update_keeps_positive_definite() {
        let mut b = DMatrix::<f64>::identity(2, 2);
        let s = DVector::from_vec(vec![1.0, 0.0]);
        // Negative curvature pair would break plain BFGS.
        let y = DVector::from_vec(vec![-1.0, 0.3]);
        damped_bfgs_update(&mut b, &s, &y, 0.2);
        assert!(b.clone().symmetric_eigenvalues().min() > 0.0);
    }
}
