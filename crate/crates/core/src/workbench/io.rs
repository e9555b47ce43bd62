//! JSON document formats for systems and run configurations.
//!
//! Complex numbers are `[re, im]` pairs and matrices are dense lists of rows.
//! Floats are written in shortest round-trip form, so `load(save(x)) == x`
//! bit for bit.

use std::fs;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use serde::{de::DeserializeOwned, Deserialize, Serialize};

use crate::adjoint::DEFAULT_MEMORY_BUDGET;
use crate::control::{build_model, ControlModel, ModelSpec};
use crate::dynamics::QuantumSystem;
use crate::error::{Error, Result};
use crate::optimizer::{TerminationCriteria, TrustRegionConfig};
use crate::spectral::HermitianMatrix;
use crate::{CMatrix, CVector};

pub const FORMAT_VERSION: u32 = 1;

pub type ComplexPair = [f64; 2];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SystemFile {
    pub format_version: u32,
    pub name: String,
    pub dim: usize,
    pub num_channels: usize,
    pub h0: Vec<Vec<ComplexPair>>,
    pub dipoles: Vec<Vec<Vec<ComplexPair>>>,
    pub alpha: Vec<ComplexPair>,
    pub beta: Vec<ComplexPair>,
}

fn matrix_from_rows(rows: &[Vec<ComplexPair>], n: usize, what: &str) -> Result<CMatrix> {
    if rows.len() != n || rows.iter().any(|r| r.len() != n) {
        return Err(Error::Dimension(format!("{what} must be {n}x{n}")));
    }
    Ok(DMatrix::from_fn(n, n, |i, j| {
        Complex64::new(rows[i][j][0], rows[i][j][1])
    }))
}

fn vector_from_pairs(v: &[ComplexPair], n: usize, what: &str) -> Result<CVector> {
    if v.len() != n {
        return Err(Error::Dimension(format!("{what} has length {}, expected {n}", v.len())));
    }
    Ok(DVector::from_iterator(n, v.iter().map(|p| Complex64::new(p[0], p[1]))))
}

pub fn matrix_to_rows(m: &CMatrix) -> Vec<Vec<ComplexPair>> {
    (0..m.nrows())
        .map(|i| (0..m.ncols()).map(|j| [m[(i, j)].re, m[(i, j)].im]).collect())
        .collect()
}

pub fn vector_to_pairs(v: &CVector) -> Vec<ComplexPair> {
    v.iter().map(|z| [z.re, z.im]).collect()
}

impl SystemFile {
    pub fn from_parts(
        name: impl Into<String>,
        h0: &HermitianMatrix,
        dipoles: &[HermitianMatrix],
        alpha: &CVector,
        beta: &CVector,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            name: name.into(),
            dim: h0.dim(),
            num_channels: dipoles.len(),
            h0: matrix_to_rows(h0.as_matrix()),
            dipoles: dipoles.iter().map(|m| matrix_to_rows(m.as_matrix())).collect(),
            alpha: vector_to_pairs(alpha),
            beta: vector_to_pairs(beta),
        }
    }

    /// Checks the version and shapes, then builds the Hermitian operators and
    /// state vectors. Dipoles that are identically zero are dropped (at least
    /// one channel is always kept).
    pub fn parts(&self) -> Result<(HermitianMatrix, Vec<HermitianMatrix>, CVector, CVector)> {
        if self.format_version != FORMAT_VERSION {
            return Err(Error::Invalid(format!(
                "unsupported system format_version {} (expected {FORMAT_VERSION})",
                self.format_version
            )));
        }
        let n = self.dim;
        if n == 0 {
            return Err(Error::Invalid("system dim must be positive".into()));
        }
        if self.num_channels != self.dipoles.len() {
            return Err(Error::Dimension(format!(
                "num_channels is {} but {} dipole matrices are given",
                self.num_channels,
                self.dipoles.len()
            )));
        }
        let h0 = HermitianMatrix::new(matrix_from_rows(&self.h0, n, "h0")?)?;
        let mut dipoles = Vec::with_capacity(self.dipoles.len());
        for (k, rows) in self.dipoles.iter().enumerate() {
            dipoles.push(HermitianMatrix::new(matrix_from_rows(rows, n, &format!("dipole {k}"))?)?);
        }
        if dipoles.len() > 1 && dipoles.iter().any(HermitianMatrix::is_zero) {
            let first = dipoles[0].clone();
            dipoles.retain(|m| !m.is_zero());
            if dipoles.is_empty() {
                dipoles.push(first);
            }
        }
        let alpha = vector_from_pairs(&self.alpha, n, "alpha")?;
        let beta = vector_from_pairs(&self.beta, n, "beta")?;
        Ok((h0, dipoles, alpha, beta))
    }

    /// The problem instance with `rho`, `J` and `dt` taken from `config`.
    pub fn to_system(&self, config: &RunConfig) -> Result<QuantumSystem> {
        config.validate()?;
        let (h0, dipoles, alpha, beta) = self.parts()?;
        QuantumSystem::new(h0, dipoles, alpha, beta, config.rho, config.num_steps, config.dt)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file: Self = load_json(path)?;
        file.parts()?;
        Ok(file)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptimizerKind {
    Newton,
    Bfgs,
}

impl OptimizerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::Newton => "newton",
            Self::Bfgs => "bfgs",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub rho: f64,
    pub dt: f64,
    #[serde(rename = "J", alias = "num_steps")]
    pub num_steps: usize,
    pub model: String,
    /// Sinusoid terms per channel; ignored by `maximal`.
    pub model_terms: usize,
    pub optimizer: OptimizerKind,
    pub seed: u64,
    pub criteria: TerminationCriteria,
    pub trust_region: TrustRegionConfig,
    /// Parameters per sensitivity batch; `null` means all at once.
    pub batch_width: Option<usize>,
    pub memory_budget: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            rho: 1e6,
            dt: 0.1,
            num_steps: 200,
            model: "maximal".into(),
            model_terms: 4,
            optimizer: OptimizerKind::Newton,
            seed: 0,
            criteria: TerminationCriteria::default(),
            trust_region: TrustRegionConfig::default(),
            batch_width: None,
            memory_budget: DEFAULT_MEMORY_BUDGET,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho > 0.0 && self.rho.is_finite()) {
            return Err(Error::Invalid(format!("rho must be positive, got {}", self.rho)));
        }
        if !(self.dt > 0.0 && self.dt.is_finite()) {
            return Err(Error::Invalid(format!("dt must be positive, got {}", self.dt)));
        }
        if self.num_steps == 0 {
            return Err(Error::Invalid("J must be positive".into()));
        }
        if self.batch_width == Some(0) {
            return Err(Error::Invalid("batch_width must be positive".into()));
        }
        self.criteria.validate()?;
        self.trust_region.validate()?;
        // Resolve the model name now so unknown names fail at load time.
        self.build_model(1)?;
        Ok(())
    }

    pub fn build_model(&self, channels: usize) -> Result<Box<dyn ControlModel>> {
        build_model(ModelSpec {
            name: &self.model,
            channels,
            steps: self.num_steps,
            dt: self.dt,
            terms: self.model_terms,
        })
    }

    pub fn load(path: &Path) -> Result<Self> {
        let cfg: Self = load_json(path)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        save_json(path, self)
    }
}

pub fn load_json<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path)?;
    Ok(serde_json::from_str(&text)?)
}

pub fn save_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir)?;
    }
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}
