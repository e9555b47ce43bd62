//! First- and second-order adjoint sweeps for the discrete problem.
//!
//! With `U_j = exp(Z_j)`, `L_jk = d exp(Z)/dZ |_{Z_j} . M_k` and
//! `dZ_j/dtheta_l = -i dt sum_k M_k df^k_j/dtheta_l`:
//!
//! * costates: `lambda_J = rho (a_J - beta)`, `lambda_j = U_j^H lambda_{j+1}`;
//! * gradient: `g_l = sum_{j,k} w_jk df^k_j/dtheta_l` with
//!   `w_jk = f^k_j + dt Im(lambda_{j+1}^H L_jk a_j)`;
//! * state sensitivities: `da_0 = 0`,
//!   `da_{j+1} = U_j da_j - i dt sum_k L_jk a_j df^k_j/dtheta_l`;
//! * second-order costates: `mu_J = rho da_J`,
//!   `mu_j = U_j^H mu_{j+1} + i dt sum_k L_jk^H lambda_{j+1} df^k_j/dtheta_l`;
//! * Hessian: model curvature, the `mu` coupling, the second Fréchet term with
//!   prefactor `(-i dt)^2 = -dt^2`, the first Fréchet term against the model
//!   Hessian, and the first Fréchet term against `da_j`.
//!
//! Sensitivity and `mu` sweeps are batched over contiguous parameter ranges;
//! each batch owns a disjoint set of Hessian columns.

pub mod fd;

use std::ops::Range;

use nalgebra::DMatrix;
use num_complex::Complex64;
use rayon::prelude::*;

use crate::control::{ControlModel, SparseGradient, SparseHessian};
use crate::dynamics::{self, QuantumSystem, TrajectoryCache};
use crate::error::{Error, Result};
use crate::{CMatrix, CVector};

/// Default ceiling on the memory an evaluation may allocate: 4 GiB.
pub const DEFAULT_MEMORY_BUDGET: u64 = 4 << 30;

/// Costates `lambda_1 .. lambda_J`.
#[derive(Debug, Clone)]
pub struct CostateTrajectory {
    lambdas: Vec<CVector>,
}

impl CostateTrajectory {
    /// `lambda_j` for `1 <= j <= J`.
    pub fn get(&self, j: usize) -> &CVector {
        assert!(j >= 1 && j <= self.lambdas.len(), "costate index {j} out of range");
        &self.lambdas[j - 1]
    }

    pub fn num_steps(&self) -> usize {
        self.lambdas.len()
    }
}

/// Backward costate recursion from `lambda_J = rho (a_J - beta)`.
pub fn costate_sweep(sys: &QuantumSystem, cache: &TrajectoryCache) -> CostateTrajectory {
    let steps = cache.num_steps();
    let mut lambdas = vec![CVector::zeros(sys.dim()); steps];
    lambdas[steps - 1] = (cache.final_state() - sys.beta()) * Complex64::new(sys.rho(), 0.0);
    for j in (1..steps).rev() {
        lambdas[j - 1] = cache.propagator(j).ad_mul(&lambdas[j]);
    }
    CostateTrajectory { lambdas }
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradientResult {
    pub grad: Vec<f64>,
}

impl GradientResult {
    pub fn norm(&self) -> f64 {
        self.grad.iter().map(|g| g * g).sum::<f64>().sqrt()
    }
}

#[derive(Debug, Clone)]
pub struct HessianResult {
    /// Symmetrized Hessian `(H + H^T) / 2`.
    pub hess: DMatrix<f64>,
    /// `max|H - H^T| / max|H|` of the assembled matrix before symmetrization.
    pub asymmetry: f64,
}

/// State sensitivities `da_j/dtheta_l` and second-order costates `mu_{j,l}`
/// for a contiguous range of parameters.
#[derive(Debug, Clone)]
pub struct SensitivityBlock {
    params: Range<usize>,
    da: Vec<CMatrix>,
    mu: Vec<CMatrix>,
}

impl SensitivityBlock {
    pub fn params(&self) -> Range<usize> {
        self.params.clone()
    }

    /// `da_j/dtheta_l` for `0 <= j <= J`, one column per parameter in the block.
    pub fn da(&self, j: usize) -> &CMatrix {
        &self.da[j]
    }

    /// `mu_{j,l}` for `1 <= j <= J`; empty if the block has not been through
    /// [`mu_sweep`].
    pub fn mu(&self, j: usize) -> &CMatrix {
        assert!(j >= 1, "mu is defined for j >= 1");
        &self.mu[j - 1]
    }

    pub fn has_mu(&self) -> bool {
        !self.mu.is_empty()
    }
}

/// Per-step quantities shared by the gradient, the sweeps and the Hessian.
struct StepTerms {
    channels: usize,
    jac: Vec<SparseGradient>,
    /// `L_jk a_j`
    b: Vec<CVector>,
    /// `L_jk^H lambda_{j+1}`
    rbar: Vec<CVector>,
    /// `f^k_j + dt Im(lambda_{j+1}^H L_jk a_j)`
    weight: Vec<f64>,
}

impl StepTerms {
    fn new(
        sys: &QuantumSystem,
        model: &dyn ControlModel,
        theta: &[f64],
        cache: &TrajectoryCache,
        costates: &CostateTrajectory,
    ) -> Result<Self> {
        let (steps, channels) = (cache.num_steps(), cache.num_channels());
        let dt = sys.dt();
        let mut jac = Vec::with_capacity(steps * channels);
        let mut b = Vec::with_capacity(steps * channels);
        let mut rbar = Vec::with_capacity(steps * channels);
        let mut weight = Vec::with_capacity(steps * channels);
        for j in 0..steps {
            let a = &cache.states()[j];
            let lam = costates.get(j + 1);
            for k in 0..channels {
                let l = cache.frechet_m(j, k);
                let bjk = l * a;
                let q = lam.dotc(&bjk);
                jac.push(model.jacobian(theta, j, k)?);
                rbar.push(l.ad_mul(lam));
                b.push(bjk);
                weight.push(cache.control(j, k) + dt * q.im);
            }
        }
        Ok(Self {
            channels,
            jac,
            b,
            rbar,
            weight,
        })
    }

    fn idx(&self, j: usize, k: usize) -> usize {
        j * self.channels + k
    }

    fn gradient(&self, num_params: usize) -> Vec<f64> {
        let mut g = vec![0.0; num_params];
        for (jac, w) in self.jac.iter().zip(&self.weight) {
            for &(l, v) in &jac.entries {
                g[l] += v * w;
            }
        }
        g
    }
}

fn check_theta(model: &dyn ControlModel, theta: &[f64]) -> Result<()> {
    if theta.len() != model.num_params() {
        return Err(Error::Dimension(format!(
            "theta has length {}, model '{}' expects {}",
            theta.len(),
            model.name(),
            model.num_params()
        )));
    }
    Ok(())
}

/// Adjoint gradient of the cost.
pub fn gradient(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
    cache: &TrajectoryCache,
    costates: &CostateTrajectory,
) -> Result<GradientResult> {
    check_theta(model, theta)?;
    let terms = StepTerms::new(sys, model, theta, cache, costates)?;
    Ok(GradientResult {
        grad: terms.gradient(model.num_params()),
    })
}

/// `p x`, leaving columns with `skip(c)` zero (they are known to vanish).
fn mul_columns(p: &CMatrix, x: &CMatrix, skip: impl Fn(usize) -> bool) -> CMatrix {
    let n = p.nrows();
    let mut out = CMatrix::zeros(n, x.ncols());
    let ps = p.as_slice();
    for (c, (xc, oc)) in x
        .as_slice()
        .chunks_exact(n)
        .zip(out.as_mut_slice().chunks_exact_mut(n))
        .enumerate()
    {
        if skip(c) {
            continue;
        }
        for (k, &xk) in xc.iter().enumerate() {
            for (o, &pik) in oc.iter_mut().zip(&ps[k * n..(k + 1) * n]) {
                *o += pik * xk;
            }
        }
    }
    out
}

/// `p^H x`.
fn ad_mul_columns(p: &CMatrix, x: &CMatrix) -> CMatrix {
    let n = p.nrows();
    let mut out = CMatrix::zeros(n, x.ncols());
    let ps = p.as_slice();
    for (xc, oc) in x.as_slice().chunks_exact(n).zip(out.as_mut_slice().chunks_exact_mut(n)) {
        for (i, o) in oc.iter_mut().enumerate() {
            *o = dotc(&ps[i * n..(i + 1) * n], xc);
        }
    }
    out
}

/// `sum conj(a_i) b_i`.
fn dotc(a: &[Complex64], b: &[Complex64]) -> Complex64 {
    a.iter().zip(b).fold(Complex64::new(0.0, 0.0), |acc, (x, y)| acc + x.conj() * y)
}

/// For each parameter in `params`, the first step whose controls depend on it
/// (`J` if none); column `c` of `da_j` vanishes while `j <= first[c]`.
fn first_steps(terms: &StepTerms, steps: usize, params: &Range<usize>) -> Vec<usize> {
    let mut first = vec![steps; params.len()];
    for (i, jac) in terms.jac.iter().enumerate() {
        let j = i / terms.channels;
        for &(l, _) in &jac.entries {
            if params.contains(&l) {
                let f = &mut first[l - params.start];
                *f = (*f).min(j);
            }
        }
    }
    first
}

fn sweep_da(
    sys: &QuantumSystem,
    cache: &TrajectoryCache,
    terms: &StepTerms,
    params: &Range<usize>,
) -> Vec<CMatrix> {
    let (n, w) = (sys.dim(), params.len());
    let step = Complex64::new(0.0, -sys.dt());
    let first = first_steps(terms, cache.num_steps(), params);
    let mut da = Vec::with_capacity(cache.num_steps() + 1);
    da.push(CMatrix::zeros(n, w));
    for j in 0..cache.num_steps() {
        let mut next = mul_columns(cache.propagator(j), &da[j], |c| first[c] >= j);
        for k in 0..terms.channels {
            let i = terms.idx(j, k);
            for &(l, v) in &terms.jac[i].entries {
                if params.contains(&l) {
                    next.column_mut(l - params.start)
                        .axpy(step * v, &terms.b[i], Complex64::new(1.0, 0.0));
                }
            }
        }
        da.push(next);
    }
    da
}

fn sweep_mu(
    sys: &QuantumSystem,
    cache: &TrajectoryCache,
    terms: &StepTerms,
    params: &Range<usize>,
    da_final: &CMatrix,
) -> Vec<CMatrix> {
    let steps = cache.num_steps();
    let step = Complex64::new(0.0, sys.dt());
    let mut mu = vec![CMatrix::zeros(0, 0); steps];
    mu[steps - 1] = da_final * Complex64::new(sys.rho(), 0.0);
    for j in (1..steps).rev() {
        let mut cur = ad_mul_columns(cache.propagator(j), &mu[j]);
        for k in 0..terms.channels {
            let i = terms.idx(j, k);
            for &(l, v) in &terms.jac[i].entries {
                if params.contains(&l) {
                    cur.column_mut(l - params.start)
                        .axpy(step * v, &terms.rbar[i], Complex64::new(1.0, 0.0));
                }
            }
        }
        mu[j - 1] = cur;
    }
    mu
}

/// State sensitivities for the parameters in `params`.
pub fn sensitivity_sweep(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
    cache: &TrajectoryCache,
    costates: &CostateTrajectory,
    params: Range<usize>,
) -> Result<SensitivityBlock> {
    check_theta(model, theta)?;
    check_range(model, &params)?;
    let terms = StepTerms::new(sys, model, theta, cache, costates)?;
    let da = sweep_da(sys, cache, &terms, &params);
    Ok(SensitivityBlock {
        params,
        da,
        mu: Vec::new(),
    })
}

/// Second-order costates for the parameters of `block`; fills `block.mu`.
pub fn mu_sweep(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
    cache: &TrajectoryCache,
    costates: &CostateTrajectory,
    block: SensitivityBlock,
) -> Result<SensitivityBlock> {
    check_theta(model, theta)?;
    let terms = StepTerms::new(sys, model, theta, cache, costates)?;
    let mu = sweep_mu(sys, cache, &terms, &block.params, &block.da[cache.num_steps()]);
    Ok(SensitivityBlock { mu, ..block })
}

fn check_range(model: &dyn ControlModel, params: &Range<usize>) -> Result<()> {
    if params.start >= params.end || params.end > model.num_params() {
        return Err(Error::Index(format!(
            "parameter range {params:?} invalid for {} parameters",
            model.num_params()
        )));
    }
    Ok(())
}

/// Coefficients shared by every Hessian column block: the `df df` curvature
/// merged with the second Fréchet term, and the model-Hessian weights.
struct CurvatureTerms {
    /// `delta_kn - dt^2 Re(lambda_{j+1}^H D2_j(M_k, M_n) a_j)`, `[j][k * K + n]`
    pair: Vec<Vec<f64>>,
    model_hess: Vec<SparseHessian>,
}

impl CurvatureTerms {
    fn new(
        sys: &QuantumSystem,
        model: &dyn ControlModel,
        theta: &[f64],
        cache: &TrajectoryCache,
        costates: &CostateTrajectory,
    ) -> Result<Self> {
        let k_count = cache.num_channels();
        let dt2 = sys.dt() * sys.dt();
        let pair = (0..cache.num_steps())
            .into_par_iter()
            .with_min_len(16)
            .map(|j| {
                let sf = cache.factor(j);
                let lt = sf.eigenvectors().ad_mul(costates.get(j + 1));
                let at = sf.eigenvectors().ad_mul(&cache.states()[j]);
                let mt: Vec<CMatrix> = sys
                    .dipoles()
                    .iter()
                    .map(|m| sf.to_eigenbasis(m.as_matrix()))
                    .collect();
                let mut out = vec![0.0; k_count * k_count];
                for k in 0..k_count {
                    for n in k..k_count {
                        let s = sf.second_form(&lt, &mt[k], &mt[n], &at);
                        let delta = if k == n { 1.0 } else { 0.0 };
                        out[k * k_count + n] = delta - dt2 * s.re;
                        out[n * k_count + k] = delta - dt2 * s.re;
                    }
                }
                out
            })
            .collect();

        let mut model_hess = Vec::new();
        if !model.is_linear() {
            for j in 0..cache.num_steps() {
                for k in 0..k_count {
                    model_hess.push(model.hessian(theta, j, k)?);
                }
            }
        }
        Ok(Self { pair, model_hess })
    }
}

/// Hessian columns for the parameters of `block` (`N_p x width`), as
/// assembled, before symmetrization.
fn assemble_columns(
    sys: &QuantumSystem,
    cache: &TrajectoryCache,
    terms: &StepTerms,
    curv: &CurvatureTerms,
    num_params: usize,
    params: &Range<usize>,
    da: &[CMatrix],
    mu: &[CMatrix],
) -> DMatrix<f64> {
    let w = params.len();
    let dt = sys.dt();
    let kc = terms.channels;
    let n = sys.dim();
    let first = first_steps(terms, cache.num_steps(), params);
    let mut h = DMatrix::<f64>::zeros(num_params, w);
    let mut coef = vec![0.0; w];

    for j in 0..cache.num_steps() {
        let mu_next = mu[j].as_slice();
        let da_j = da[j].as_slice();
        for k in 0..kc {
            let i = terms.idx(j, k);
            if terms.jac[i].entries.is_empty() {
                continue;
            }
            // mu_{j+1,m}^H L_jk a_j + lambda_{j+1}^H L_jk da_{j,m}
            let (b, rbar) = (terms.b[i].as_slice(), terms.rbar[i].as_slice());
            for (m, c) in coef.iter_mut().enumerate() {
                let col = m * n..(m + 1) * n;
                let mut v = dotc(&mu_next[col.clone()], b);
                if first[m] < j {
                    v += dotc(rbar, &da_j[col]);
                }
                *c = dt * v.im;
            }
            for &(l, v) in &terms.jac[i].entries {
                let mut row = h.row_mut(l);
                for (m, c) in coef.iter().enumerate() {
                    row[m] += v * c;
                }
            }
        }

        // df^k/dtheta_l df^n/dtheta_m (delta_kn - dt^2 Re s_jkn)
        let pair = &curv.pair[j];
        for k in 0..kc {
            for n in 0..kc {
                let c = pair[k * kc + n];
                if c == 0.0 {
                    continue;
                }
                for &(m, u) in &terms.jac[terms.idx(j, n)].entries {
                    if !params.contains(&m) {
                        continue;
                    }
                    for &(l, v) in &terms.jac[terms.idx(j, k)].entries {
                        h[(l, m - params.start)] += v * u * c;
                    }
                }
            }
        }
    }

    // (f + dt Im(lambda^H L a)) d2f/dtheta_l dtheta_m
    for (hs, wgt) in curv.model_hess.iter().zip(&terms.weight) {
        for &(l, m, v) in &hs.entries {
            if params.contains(&m) {
                h[(l, m - params.start)] += v * wgt;
            }
        }
    }
    h
}

fn symmetrize(raw: DMatrix<f64>) -> HessianResult {
    let scale = raw.iter().fold(0.0f64, |a, x| a.max(x.abs()));
    let n = raw.nrows();
    let mut defect = 0.0f64;
    for i in 0..n {
        for j in (i + 1)..n {
            defect = defect.max((raw[(i, j)] - raw[(j, i)]).abs());
        }
    }
    let asymmetry = if scale > 0.0 { defect / scale } else { 0.0 };
    let hess = (&raw + raw.transpose()) * 0.5;
    HessianResult { hess, asymmetry }
}

/// Hessian from a sensitivity block that spans every parameter and has been
/// through [`mu_sweep`].
pub fn hessian(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
    cache: &TrajectoryCache,
    costates: &CostateTrajectory,
    block: &SensitivityBlock,
) -> Result<HessianResult> {
    check_theta(model, theta)?;
    let np = model.num_params();
    if block.params != (0..np) || !block.has_mu() {
        return Err(Error::Invalid(
            "hessian needs a sensitivity block over all parameters with mu filled in".into(),
        ));
    }
    let terms = StepTerms::new(sys, model, theta, cache, costates)?;
    let curv = CurvatureTerms::new(sys, model, theta, cache, costates)?;
    let raw = assemble_columns(sys, cache, &terms, &curv, np, &block.params, &block.da, &block.mu);
    Ok(symmetrize(raw))
}

/// What to compute in one [`AdjointEngine::evaluate`] call.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    /// Cost and gradient (forward pass, costate sweep).
    First,
    /// Cost, gradient and Hessian (adds sensitivity and `mu` sweeps).
    Second,
}

/// Result of one adjoint evaluation at a fixed `theta`.
#[derive(Debug, Clone)]
pub struct Evaluation {
    pub cost: f64,
    pub target_violation: f64,
    pub gradient: GradientResult,
    pub hessian: Option<HessianResult>,
}

/// Runs the full first- or second-order adjoint pass with parameter batching.
#[derive(Debug, Clone)]
pub struct AdjointEngine {
    /// Parameters per sensitivity batch; `None` processes all at once.
    pub batch_width: Option<usize>,
    pub memory_budget: u64,
}

impl Default for AdjointEngine {
    fn default() -> Self {
        Self {
            batch_width: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

impl AdjointEngine {
    pub fn new(batch_width: Option<usize>, memory_budget: u64) -> Self {
        Self {
            batch_width,
            memory_budget,
        }
    }

    fn batches(&self, np: usize) -> Vec<Range<usize>> {
        let w = self.batch_width.unwrap_or(np).clamp(1, np.max(1));
        (0..np).step_by(w).map(|s| s..(s + w).min(np)).collect()
    }

    /// Bytes a second-order evaluation will need at peak.
    pub fn estimate_bytes(&self, sys: &QuantumSystem, num_params: usize) -> u64 {
        let batches = self.batches(num_params);
        let width = batches.first().map_or(0, |r| r.len()) as u64;
        let live = (batches.len().min(rayon::current_num_threads().max(1))) as u64;
        let (n, j) = (sys.dim() as u64, sys.num_steps() as u64);
        let per_batch = 16 * n * width * (2 * j + 1) + 8 * num_params as u64 * width;
        dynamics::estimate_cache_bytes(sys.dim(), sys.num_steps(), sys.num_channels())
            + live * per_batch
            + 16 * (num_params as u64).pow(2)
    }

    /// Refuse configurations whose second-order footprint exceeds the budget.
    pub fn check_budget(&self, sys: &QuantumSystem, num_params: usize) -> Result<()> {
        let needed = self.estimate_bytes(sys, num_params);
        if needed > self.memory_budget {
            return Err(Error::MemoryBudget {
                needed,
                budget: self.memory_budget,
            });
        }
        Ok(())
    }

    pub fn evaluate(
        &self,
        sys: &QuantumSystem,
        model: &dyn ControlModel,
        theta: &[f64],
        order: Order,
    ) -> Result<Evaluation> {
        check_theta(model, theta)?;
        if order == Order::Second {
            self.check_budget(sys, model.num_params())?;
        }
        let cache = dynamics::propagate(sys, model, theta)?;
        self.evaluate_cached(sys, model, theta, &cache, order)
    }

    /// As [`AdjointEngine::evaluate`], reusing a trajectory already propagated
    /// at `theta`.
    pub fn evaluate_cached(
        &self,
        sys: &QuantumSystem,
        model: &dyn ControlModel,
        theta: &[f64],
        cache: &TrajectoryCache,
        order: Order,
    ) -> Result<Evaluation> {
        check_theta(model, theta)?;
        let np = model.num_params();
        if order == Order::Second {
            self.check_budget(sys, np)?;
        }
        if cache.num_steps() != sys.num_steps() || cache.num_channels() != sys.num_channels() {
            return Err(Error::Dimension("trajectory does not match the system".into()));
        }
        let costates = costate_sweep(sys, cache);
        let terms = StepTerms::new(sys, model, theta, cache, &costates)?;
        let gradient = GradientResult {
            grad: terms.gradient(np),
        };
        let cost = dynamics::cost(sys, cache);
        let target_violation = dynamics::target_violation(cache, sys.beta());

        let hessian = match order {
            Order::First => None,
            Order::Second => {
                let curv = CurvatureTerms::new(sys, model, theta, cache, &costates)?;
                let blocks: Vec<(Range<usize>, DMatrix<f64>)> = self
                    .batches(np)
                    .into_par_iter()
                    .map(|params| {
                        let da = sweep_da(sys, cache, &terms, &params);
                        let mu = sweep_mu(sys, cache, &terms, &params, &da[cache.num_steps()]);
                        let cols =
                            assemble_columns(sys, cache, &terms, &curv, np, &params, &da, &mu);
                        (params, cols)
                    })
                    .collect();
                let mut raw = DMatrix::<f64>::zeros(np, np);
                for (params, cols) in blocks {
                    raw.columns_mut(params.start, params.len()).copy_from(&cols);
                }
                Some(symmetrize(raw))
            }
        };

        Ok(Evaluation {
            cost,
            target_violation,
            gradient,
            hessian,
        })
    }
}

/// `||a - b||_inf / ||b||_inf`, falling back to the absolute error when `b`
/// vanishes.
pub fn relative_inf_error(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len());
    let num = a.iter().zip(b).fold(0.0f64, |m, (x, y)| m.max((x - y).abs()));
    let den = b.iter().fold(0.0f64, |m, y| m.max(y.abs()));
    if den > 0.0 {
        num / den
    } else {
        num
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::control::MaximalModel;
    use crate::spectral::HermitianMatrix;

    fn basis(n: usize, i: usize) -> CVector {
        let mut v = CVector::zeros(n);
        v[i] = Complex64::new(1.0, 0.0);
        v
    }

    fn coupled_system(rho: f64, steps: usize) -> QuantumSystem {
        let c = |re, im| Complex64::new(re, im);
        let m = CMatrix::from_row_slice(
            3,
            3,
            &[
                c(0.2, 0.0),
                c(0.5, 0.1),
                c(0.0, -0.3),
                c(0.5, -0.1),
                c(-0.4, 0.0),
                c(0.7, 0.0),
                c(0.0, 0.3),
                c(0.7, 0.0),
                c(0.1, 0.0),
            ],
        );
        QuantumSystem::new(
            HermitianMatrix::from_real_diagonal(&[-0.5, 0.3, 1.1]),
            vec![HermitianMatrix::new(m).unwrap()],
            basis(3, 0),
            basis(3, 2),
            rho,
            steps,
            0.1,
        )
        .unwrap()
    }

    #[test]
    fn zero_rho_gives_zero_costates_and_pure_regularization() {
        let sys = coupled_system(0.0, 5);
        let model = MaximalModel::new(1, 5).unwrap();
        let theta = [0.3, -1.0, 0.2, 0.8, -0.1];
        let cache = dynamics::propagate(&sys, &model, &theta).unwrap();
        let lam = costate_sweep(&sys, &cache);
        for j in 1..=5 {
            assert_eq!(lam.get(j).norm(), 0.0);
        }
        let g = gradient(&sys, &model, &theta, &cache, &lam).unwrap();
        assert_eq!(g.grad, theta.to_vec());

        let eval = AdjointEngine::default()
            .evaluate(&sys, &model, &theta, Order::Second)
            .unwrap();
        let h = eval.hessian.unwrap().hess;
        assert!((h - DMatrix::<f64>::identity(5, 5)).abs().max() == 0.0);
    }

    #[test]
    fn costate_norm_is_constant() {
        let sys = coupled_system(2.0, 12);
        let model = MaximalModel::new(1, 12).unwrap();
        let theta: Vec<f64> = (0..12).map(|i| (i as f64 * 0.7).sin()).collect();
        let cache = dynamics::propagate(&sys, &model, &theta).unwrap();
        let lam = costate_sweep(&sys, &cache);
        let n_final = lam.get(12).norm();
        assert!(n_final > 0.0);
        for j in 1..=12 {
            assert!((lam.get(j).norm() - n_final).abs() < 1e-10);
        }
    }

    #[test]
    fn last_step_sensitivity_is_single_step() {
        let sys = coupled_system(1.0, 6);
        let model = MaximalModel::new(1, 6).unwrap();
        let theta = [0.1, 0.2, -0.3, 0.4, 0.0, 0.9];
        let cache = dynamics::propagate(&sys, &model, &theta).unwrap();
        let lam = costate_sweep(&sys, &cache);
        let block = sensitivity_sweep(&sys, &model, &theta, &cache, &lam, 5..6).unwrap();
        for j in 0..6 {
            assert_eq!(block.da(j).norm(), 0.0);
        }
        let expected = cache.frechet_m(5, 0) * &cache.states()[5] * Complex64::new(0.0, -0.1);
        assert!((block.da(6).column(0) - expected).norm() < 1e-15);
    }

    #[test]
    fn batching_does_not_change_hessian() {
        let sys = coupled_system(3.0, 7);
        let model = MaximalModel::new(1, 7).unwrap();
        let theta: Vec<f64> = (0..7).map(|i| (i as f64 * 1.3).cos()).collect();
        let full = AdjointEngine::default()
            .evaluate(&sys, &model, &theta, Order::Second)
            .unwrap();
        let batched = AdjointEngine::new(Some(3), DEFAULT_MEMORY_BUDGET)
            .evaluate(&sys, &model, &theta, Order::Second)
            .unwrap();
        let a = full.hessian.unwrap().hess;
        let b = batched.hessian.unwrap().hess;
        assert!((a - b).abs().max() < 1e-14);
    }

    #[test]
    fn memory_budget_is_enforced() {
        let sys = coupled_system(1.0, 50);
        let model = MaximalModel::new(1, 50).unwrap();
        let engine = AdjointEngine::new(None, 1024);
        let err = engine
            .evaluate(&sys, &model, &[0.0; 50], Order::Second)
            .unwrap_err();
        assert!(matches!(err, Error::MemoryBudget { .. }));
        // First-order passes do not allocate sensitivities.
        assert!(engine.evaluate(&sys, &model, &[0.0; 50], Order::First).is_ok());
    }

    #[test]
    fn block_range_validation() {
        let sys = coupled_system(1.0, 4);
        let model = MaximalModel::new(1, 4).unwrap();
        let theta = [0.0; 4];
        let cache = dynamics::propagate(&sys, &model, &theta).unwrap();
        let lam = costate_sweep(&sys, &cache);
        assert!(sensitivity_sweep(&sys, &model, &theta, &cache, &lam, 2..5).is_err());
        assert!(sensitivity_sweep(&sys, &model, &theta, &cache, &lam, 2..2).is_err());
        let partial = sensitivity_sweep(&sys, &model, &theta, &cache, &lam, 0..2).unwrap();
        let partial = mu_sweep(&sys, &model, &theta, &cache, &lam, partial).unwrap();
        assert!(hessian(&sys, &model, &theta, &cache, &lam, &partial).is_err());
    }

    #[test]
    fn relative_error_helper() {
        assert_eq!(relative_inf_error(&[1.0, 2.0], &[1.0, 2.0]), 0.0);
        assert_eq!(relative_inf_error(&[1.0, 2.5], &[1.0, 2.0]), 0.25);
        assert_eq!(relative_inf_error(&[1e-3], &[0.0]), 1e-3);
    }
}
