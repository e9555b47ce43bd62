//! Forward propagation of the discrete Schrödinger system
//! `a_{j+1} = exp(-i dt H_j) a_j`, `H_j = H0 + sum_k f^k_j M_k`, and evaluation
//! of the discrete cost.

use rayon::prelude::*;

use crate::control::{validate_theta, ControlModel};
use crate::error::{Error, Result};
use crate::spectral::{self, HermitianMatrix, SpectralFactor};
use crate::{CMatrix, CVector};

/// Tolerance on `| ||alpha|| - 1 |` and `| ||beta|| - 1 |`.
pub const NORM_TOL: f64 = 1e-10;

/// One problem instance: Hamiltonian terms, boundary states, cost weight and
/// time grid.
#[derive(Debug, Clone)]
pub struct QuantumSystem {
    h0: HermitianMatrix,
    dipoles: Vec<HermitianMatrix>,
    alpha: CVector,
    beta: CVector,
    rho: f64,
    num_steps: usize,
    dt: f64,
}

impl QuantumSystem {
    pub fn new(
        h0: HermitianMatrix,
        dipoles: Vec<HermitianMatrix>,
        alpha: CVector,
        beta: CVector,
        rho: f64,
        num_steps: usize,
        dt: f64,
    ) -> Result<Self> {
        let n = h0.dim();
        if n == 0 {
            return Err(Error::Invalid("system dimension must be positive".into()));
        }
        if dipoles.is_empty() || dipoles.len() > 3 {
            return Err(Error::Invalid(format!(
                "expected 1 to 3 dipole matrices, got {}",
                dipoles.len()
            )));
        }
        for (k, m) in dipoles.iter().enumerate() {
            if m.dim() != n {
                return Err(Error::Dimension(format!(
                    "dipole {k} is {0}x{0}, core Hamiltonian is {n}x{n}",
                    m.dim()
                )));
            }
        }
        for (name, v) in [("alpha", &alpha), ("beta", &beta)] {
            if v.len() != n {
                return Err(Error::Dimension(format!(
                    "{name} has length {}, expected {n}",
                    v.len()
                )));
            }
            let norm = v.norm();
            if !((norm - 1.0).abs() <= NORM_TOL) {
                return Err(Error::Invalid(format!(
                    "{name} must have unit norm, got {norm}"
                )));
            }
        }
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::Invalid(format!("rho must be nonnegative, got {rho}")));
        }
        if num_steps == 0 {
            return Err(Error::Invalid("number of time steps must be positive".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Invalid(format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            h0,
            dipoles,
            alpha,
            beta,
            rho,
            num_steps,
            dt,
        })
    }

    pub fn dim(&self) -> usize {
        self.h0.dim()
    }

    pub fn num_channels(&self) -> usize {
        self.dipoles.len()
    }

    pub fn num_steps(&self) -> usize {
        self.num_steps
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn rho(&self) -> f64 {
        self.rho
    }

    pub fn h0(&self) -> &HermitianMatrix {
        &self.h0
    }

    pub fn dipoles(&self) -> &[HermitianMatrix] {
        &self.dipoles
    }

    pub fn alpha(&self) -> &CVector {
        &self.alpha
    }

    pub fn beta(&self) -> &CVector {
        &self.beta
    }

    pub fn with_rho(&self, rho: f64) -> Result<Self> {
        let mut s = self.clone();
        if !(rho >= 0.0 && rho.is_finite()) {
            return Err(Error::Invalid(format!("rho must be nonnegative, got {rho}")));
        }
        s.rho = rho;
        Ok(s)
    }

    pub fn with_horizon(&self, num_steps: usize, dt: f64) -> Result<Self> {
        Self::new(
            self.h0.clone(),
            self.dipoles.clone(),
            self.alpha.clone(),
            self.beta.clone(),
            self.rho,
            num_steps,
            dt,
        )
    }

    pub fn with_states(&self, alpha: CVector, beta: CVector) -> Result<Self> {
        Self::new(
            self.h0.clone(),
            self.dipoles.clone(),
            alpha,
            beta,
            self.rho,
            self.num_steps,
            self.dt,
        )
    }

    fn check_model(&self, model: &dyn ControlModel) -> Result<()> {
        if model.num_steps() != self.num_steps || model.num_channels() != self.num_channels() {
            return Err(Error::Dimension(format!(
                "model '{}' has {} steps x {} channels, system has {} x {}",
                model.name(),
                model.num_steps(),
                model.num_channels(),
                self.num_steps,
                self.num_channels()
            )));
        }
        Ok(())
    }
}

/// Control values `f^k_j` for all steps, laid out `[j * K + k]`.
pub fn control_values(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
) -> Result<Vec<f64>> {
    sys.check_model(model)?;
    validate_theta(theta)?;
    let k = sys.num_channels();
    let mut out = Vec::with_capacity(sys.num_steps * k);
    for j in 0..sys.num_steps {
        for c in 0..k {
            out.push(model.value(theta, j, c)?);
        }
    }
    Ok(out)
}

/// `H_j = H0 + sum_k f^k_j M_k`.
pub fn build_generator(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
    step: usize,
) -> Result<HermitianMatrix> {
    sys.check_model(model)?;
    let f = (0..sys.num_channels())
        .map(|k| model.value(theta, step, k))
        .collect::<Result<Vec<_>>>()?;
    Ok(sys.h0.add_scaled(&f, &sys.dipoles))
}

/// Everything the adjoint sweeps reuse from one forward pass.
#[derive(Debug, Clone)]
pub struct TrajectoryCache {
    channels: usize,
    controls: Vec<f64>,
    states: Vec<CVector>,
    factors: Vec<SpectralFactor>,
    propagators: Vec<CMatrix>,
    frechet_m: Vec<CMatrix>,
}

impl TrajectoryCache {
    pub fn num_steps(&self) -> usize {
        self.factors.len()
    }

    pub fn num_channels(&self) -> usize {
        self.channels
    }

    /// `f^k_j`.
    pub fn control(&self, step: usize, channel: usize) -> f64 {
        self.controls[step * self.channels + channel]
    }

    pub fn controls(&self) -> &[f64] {
        &self.controls
    }

    /// `a_0 .. a_J`.
    pub fn states(&self) -> &[CVector] {
        &self.states
    }

    pub fn final_state(&self) -> &CVector {
        &self.states[self.states.len() - 1]
    }

    pub fn factor(&self, step: usize) -> &SpectralFactor {
        &self.factors[step]
    }

    /// `exp(Z_j)`.
    pub fn propagator(&self, step: usize) -> &CMatrix {
        &self.propagators[step]
    }

    /// `d exp(Z)/dZ |_{Z_j} . M_k`.
    pub fn frechet_m(&self, step: usize, channel: usize) -> &CMatrix {
        &self.frechet_m[step * self.channels + channel]
    }

    /// Approximate heap footprint in bytes.
    pub fn footprint_bytes(&self) -> u64 {
        estimate_cache_bytes(self.states[0].len(), self.num_steps(), self.channels)
    }
}

/// Bytes held by a [`TrajectoryCache`] of the given shape.
pub fn estimate_cache_bytes(n: usize, steps: usize, channels: usize) -> u64 {
    let c = 16u64;
    let (n, j, k) = (n as u64, steps as u64, channels as u64);
    // states + eigenvectors, propagators, divided differences, Fréchet applications
    c * (j + 1) * n + c * j * n * n * (3 + k) + 8 * j * n
}

struct StepData {
    factor: SpectralFactor,
    propagator: CMatrix,
    frechet: Vec<CMatrix>,
}

/// Run the forward pass and cache spectral factors, propagators and the
/// Fréchet applications `d exp(Z_j)/dZ . M_k`.
///
/// The per-step factorizations depend only on `theta`, so they are computed in
/// parallel before the sequential state recursion.
pub fn propagate(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
) -> Result<TrajectoryCache> {
    let controls = control_values(sys, model, theta)?;
    let k = sys.num_channels();

    let steps: Vec<StepData> = (0..sys.num_steps)
        .into_par_iter()
        .with_min_len(32)
        .map(|j| {
            let h = sys.h0.add_scaled(&controls[j * k..(j + 1) * k], &sys.dipoles);
            let factor = spectral::decompose(&h, sys.dt).map_err(|e| e.at_step(j))?;
            let propagator = spectral::step_propagator(&factor);
            let frechet = sys
                .dipoles
                .iter()
                .map(|m| spectral::frechet_first(&factor, m.as_matrix()))
                .collect();
            Ok(StepData {
                factor,
                propagator,
                frechet,
            })
        })
        .collect::<Result<_>>()?;

    let mut states = Vec::with_capacity(sys.num_steps + 1);
    states.push(sys.alpha.clone());
    for s in &steps {
        let next = &s.propagator * states.last().unwrap();
        states.push(next);
    }

    let mut factors = Vec::with_capacity(steps.len());
    let mut propagators = Vec::with_capacity(steps.len());
    let mut frechet_m = Vec::with_capacity(steps.len() * k);
    for s in steps {
        factors.push(s.factor);
        propagators.push(s.propagator);
        frechet_m.extend(s.frechet);
    }

    Ok(TrajectoryCache {
        channels: k,
        controls,
        states,
        factors,
        propagators,
        frechet_m,
    })
}

/// Forward pass that keeps only the states; used where no derivatives are
/// needed (trial points, finite differences).
pub fn propagate_states(
    sys: &QuantumSystem,
    model: &dyn ControlModel,
    theta: &[f64],
) -> Result<(Vec<f64>, Vec<CVector>)> {
    let controls = control_values(sys, model, theta)?;
    let k = sys.num_channels();
    let mut states = Vec::with_capacity(sys.num_steps + 1);
    states.push(sys.alpha.clone());
    for j in 0..sys.num_steps {
        let h = sys.h0.add_scaled(&controls[j * k..(j + 1) * k], &sys.dipoles);
        let factor = spectral::decompose(&h, sys.dt).map_err(|e| e.at_step(j))?;
        let v = factor.eigenvectors();
        let mut coeffs = v.ad_mul(states.last().unwrap());
        for (c, e) in coeffs.iter_mut().zip(factor.exp_points()) {
            *c *= e;
        }
        states.push(v * coeffs);
    }
    Ok((controls, states))
}

fn cost_from_parts(sys: &QuantumSystem, controls: &[f64], final_state: &CVector) -> f64 {
    let reg = 0.5 * controls.iter().map(|f| f * f).sum::<f64>();
    reg + 0.5 * sys.rho * (final_state - &sys.beta).norm_squared()
}

/// `1/2 sum_{k,j} (f^k_j)^2 + rho/2 ||a_J - beta||^2`.
pub fn cost(sys: &QuantumSystem, cache: &TrajectoryCache) -> f64 {
    cost_from_parts(sys, &cache.controls, cache.final_state())
}

/// Cost at `theta` without building a derivative cache.
pub fn evaluate_cost(sys: &QuantumSystem, model: &dyn ControlModel, theta: &[f64]) -> Result<f64> {
    let (controls, states) = propagate_states(sys, model, theta)?;
    Ok(cost_from_parts(sys, &controls, states.last().unwrap()))
}

/// `||a_J - beta||_2`.
pub fn target_violation(cache: &TrajectoryCache, beta: &CVector) -> f64 {
    (cache.final_state() - beta).norm()
}
