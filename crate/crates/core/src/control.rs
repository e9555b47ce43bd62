//! Parameterizations `f^k(j dt; theta)` of the control field.
//!
//! A model exposes the field value at each step and channel together with its
//! first and second derivatives in `theta`. Derivatives are returned in a
//! sparse index form so that the piecewise-constant [`MaximalModel`] costs
//! `O(1)` per entry, while general models list every parameter.
//!
//! Steps are indexed `0..num_steps` and channels `0..num_channels`.

use std::f64::consts::PI;

use crate::error::{Error, Result};

/// Gradient of one control value with respect to `theta`, as `(index, value)`
/// pairs. Indices not listed are zero.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseGradient {
    pub entries: Vec<(usize, f64)>,
}

impl SparseGradient {
    pub fn to_dense(&self, n: usize) -> Vec<f64> {
        let mut out = vec![0.0; n];
        for &(i, v) in &self.entries {
            out[i] += v;
        }
        out
    }
}

/// Hessian of one control value with respect to `theta`. Every stored entry
/// `(l, m, v)` is an element of the full symmetric matrix, so both `(l, m)` and
/// `(m, l)` appear for off-diagonal entries.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct SparseHessian {
    pub entries: Vec<(usize, usize, f64)>,
}

impl SparseHessian {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self, n: usize) -> Vec<Vec<f64>> {
        let mut out = vec![vec![0.0; n]; n];
        for &(l, m, v) in &self.entries {
            out[l][m] += v;
        }
        out
    }
}

/// Evaluators for a smooth control parameterization.
///
/// Implementations must be pure in `(theta, step, channel)`; they are called
/// concurrently from worker threads.
pub trait ControlModel: Send + Sync {
    fn name(&self) -> &str;
    fn num_params(&self) -> usize;
    fn num_channels(&self) -> usize;
    fn num_steps(&self) -> usize;

    fn value(&self, theta: &[f64], step: usize, channel: usize) -> Result<f64>;
    fn jacobian(&self, theta: &[f64], step: usize, channel: usize) -> Result<SparseGradient>;
    fn hessian(&self, theta: &[f64], step: usize, channel: usize) -> Result<SparseHessian>;

    /// Whether every `hessian` is identically zero; lets the adjoint engine
    /// skip that term.
    fn is_linear(&self) -> bool {
        false
    }

    /// Validate `theta` and the `(step, channel)` index against the model
    /// shape.
    fn check_args(&self, theta: &[f64], step: usize, channel: usize) -> Result<()> {
        if theta.len() != self.num_params() {
            return Err(Error::Dimension(format!(
                "model '{}' expects {} parameters, got {}",
                self.name(),
                self.num_params(),
                theta.len()
            )));
        }
        if step >= self.num_steps() {
            return Err(Error::Index(format!(
                "step {step} out of range 0..{}",
                self.num_steps()
            )));
        }
        if channel >= self.num_channels() {
            return Err(Error::Index(format!(
                "channel {channel} out of range 0..{}",
                self.num_channels()
            )));
        }
        Ok(())
    }
}

/// Check that a parameter vector has only finite entries.
pub fn validate_theta(theta: &[f64]) -> Result<()> {
    match theta.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(Error::Invalid(format!("theta[{i}] is not finite"))),
        None => Ok(()),
    }
}

/// Every per-step, per-channel field value is its own parameter:
/// `f^k(j dt; theta) = theta[k * num_steps + j]`.
#[derive(Debug, Clone)]
pub struct MaximalModel {
    channels: usize,
    steps: usize,
}

impl MaximalModel {
    pub fn new(channels: usize, steps: usize) -> Result<Self> {
        check_shape(channels, steps)?;
        Ok(Self { channels, steps })
    }

    /// Flattened parameter index of `(channel, step)`.
    pub fn index(&self, channel: usize, step: usize) -> usize {
        channel * self.steps + step
    }
}

fn check_shape(channels: usize, steps: usize) -> Result<()> {
    if !(1..=3).contains(&channels) {
        return Err(Error::Invalid(format!(
            "number of control channels must be 1, 2 or 3, got {channels}"
        )));
    }
    if steps == 0 {
        return Err(Error::Invalid("number of time steps must be positive".into()));
    }
    Ok(())
}

impl ControlModel for MaximalModel {
    fn name(&self) -> &str {
        "maximal"
    }

    fn num_params(&self) -> usize {
        self.channels * self.steps
    }

    fn num_channels(&self) -> usize {
        self.channels
    }

    fn num_steps(&self) -> usize {
        self.steps
    }

    fn value(&self, theta: &[f64], step: usize, channel: usize) -> Result<f64> {
        self.check_args(theta, step, channel)?;
        Ok(theta[self.index(channel, step)])
    }

    fn jacobian(&self, theta: &[f64], step: usize, channel: usize) -> Result<SparseGradient> {
        self.check_args(theta, step, channel)?;
        Ok(SparseGradient {
            entries: vec![(self.index(channel, step), 1.0)],
        })
    }

    fn hessian(&self, theta: &[f64], step: usize, channel: usize) -> Result<SparseHessian> {
        self.check_args(theta, step, channel)?;
        Ok(SparseHessian::default())
    }

    fn is_linear(&self) -> bool {
        true
    }
}

/// Sum of sinusoids per channel with free amplitude, angular frequency and
/// phase:
/// `f^k(t) = sum_n A_kn sin(w_kn t + phi_kn)`, `t = j dt`.
///
/// Parameters are laid out channel-major, three per term: `(A, w, phi)`.
/// Nonlinear in `(w, phi)`, so it exercises the model-curvature terms of the
/// Hessian. Uses `N_p = 3 * K * terms`, typically far fewer than `K * J`.
#[derive(Debug, Clone)]
pub struct SinusoidModel {
    channels: usize,
    steps: usize,
    terms: usize,
    dt: f64,
}

impl SinusoidModel {
    pub fn new(channels: usize, steps: usize, terms: usize, dt: f64) -> Result<Self> {
        check_shape(channels, steps)?;
        if terms == 0 {
            return Err(Error::Invalid("sinusoid model needs at least one term".into()));
        }
        if !(dt > 0.0 && dt.is_finite()) {
            return Err(Error::Invalid(format!("time step must be positive, got {dt}")));
        }
        Ok(Self {
            channels,
            steps,
            terms,
            dt,
        })
    }

    fn base(&self, channel: usize, term: usize) -> usize {
        3 * (channel * self.terms + term)
    }

    /// A deterministic starting point with frequencies spread over `(0, pi/dt)`.
    pub fn default_theta(&self) -> Vec<f64> {
        let mut theta = vec![0.0; self.num_params()];
        for k in 0..self.channels {
            for n in 0..self.terms {
                let b = self.base(k, n);
                theta[b] = 0.1;
                theta[b + 1] = PI * (n + 1) as f64 / ((self.terms + 1) as f64 * self.dt * 4.0);
                theta[b + 2] = 0.0;
            }
        }
        theta
    }
}

impl ControlModel for SinusoidModel {
    fn name(&self) -> &str {
        "sinusoid"
    }

    fn num_params(&self) -> usize {
        3 * self.channels * self.terms
    }

    fn num_channels(&self) -> usize {
        self.channels
    }

    fn num_steps(&self) -> usize {
        self.steps
    }

    fn value(&self, theta: &[f64], step: usize, channel: usize) -> Result<f64> {
        self.check_args(theta, step, channel)?;
        let t = step as f64 * self.dt;
        Ok((0..self.terms)
            .map(|n| {
                let b = self.base(channel, n);
                theta[b] * (theta[b + 1] * t + theta[b + 2]).sin()
            })
            .sum())
    }

    fn jacobian(&self, theta: &[f64], step: usize, channel: usize) -> Result<SparseGradient> {
        self.check_args(theta, step, channel)?;
        let t = step as f64 * self.dt;
        let mut entries = Vec::with_capacity(3 * self.terms);
        for n in 0..self.terms {
            let b = self.base(channel, n);
            let (a, arg) = (theta[b], theta[b + 1] * t + theta[b + 2]);
            let (s, c) = arg.sin_cos();
            entries.push((b, s));
            entries.push((b + 1, a * t * c));
            entries.push((b + 2, a * c));
        }
        Ok(SparseGradient { entries })
    }

    fn hessian(&self, theta: &[f64], step: usize, channel: usize) -> Result<SparseHessian> {
        self.check_args(theta, step, channel)?;
        let t = step as f64 * self.dt;
        let mut entries = Vec::with_capacity(9 * self.terms);
        for n in 0..self.terms {
            let b = self.base(channel, n);
            let (a, arg) = (theta[b], theta[b + 1] * t + theta[b + 2]);
            let (s, c) = arg.sin_cos();
            let (ia, iw, ip) = (b, b + 1, b + 2);
            // d2/dA dw, d2/dA dphi
            entries.push((ia, iw, t * c));
            entries.push((iw, ia, t * c));
            entries.push((ia, ip, c));
            entries.push((ip, ia, c));
            // d2/dw2, d2/dw dphi, d2/dphi2
            entries.push((iw, iw, -a * t * t * s));
            entries.push((iw, ip, -a * t * s));
            entries.push((ip, iw, -a * t * s));
            entries.push((ip, ip, -a * s));
        }
        Ok(SparseHessian { entries })
    }
}

/// Options consulted when building a model by name.
#[derive(Debug, Clone, Copy)]
pub struct ModelSpec<'a> {
    pub name: &'a str,
    pub channels: usize,
    pub steps: usize,
    pub dt: f64,
    pub terms: usize,
}

/// Build a registered model. Known names: `maximal`, `sinusoid`.
pub fn build_model(spec: ModelSpec<'_>) -> Result<Box<dyn ControlModel>> {
    match spec.name {
        "maximal" => Ok(Box::new(MaximalModel::new(spec.channels, spec.steps)?)),
        "sinusoid" => Ok(Box::new(SinusoidModel::new(
            spec.channels,
            spec.steps,
            spec.terms,
            spec.dt,
        )?)),
        other => Err(Error::UnknownModel(other.to_string())),
    }
}

/// Names accepted by [`build_model`].
pub const MODEL_NAMES: &[&str] = &["maximal", "sinusoid"];
