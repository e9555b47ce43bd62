//! Wall-time scaling of full first- and second-order passes in the horizon J.

use std::path::Path;
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::io::{RunConfig, SystemFile};
use super::run::engine_for;
use super::stats::{mean_std, ols_slope};
use super::synth::{generate_synthetic, initial_theta};
use crate::adjoint::Order;
use crate::error::{Error, Result};

pub const BENCH_FILE: &str = "bench.csv";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenchAlgorithm {
    FirstOrder,
    SecondOrder,
}

impl BenchAlgorithm {
    pub fn as_str(self) -> &'static str {
        match self {
            Self::FirstOrder => "first_order",
            Self::SecondOrder => "second_order",
        }
    }

    fn order(self) -> Order {
        match self {
            Self::FirstOrder => Order::First,
            Self::SecondOrder => Order::Second,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchRecord {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "J")]
    pub j: usize,
    pub algorithm: BenchAlgorithm,
    pub trials: usize,
    pub mean_seconds: f64,
    pub std_seconds: f64,
}

/// OLS slope of `log2(mean time)` against `log2(J)` for one `(N, algorithm)`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ScalingFit {
    #[serde(rename = "N")]
    pub n: usize,
    pub algorithm: BenchAlgorithm,
    pub slope: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct BenchTable {
    pub records: Vec<BenchRecord>,
    pub fits: Vec<ScalingFit>,
}

impl BenchTable {
    pub fn slope(&self, n: usize, algorithm: BenchAlgorithm) -> Option<f64> {
        self.fits
            .iter()
            .find(|f| f.n == n && f.algorithm == algorithm)
            .map(|f| f.slope)
    }

    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        w.write_record(["N", "J", "algorithm", "trials", "mean_seconds", "std_seconds"])?;
        for r in &self.records {
            w.write_record([
                r.n.to_string(),
                r.j.to_string(),
                r.algorithm.as_str().to_string(),
                r.trials.to_string(),
                r.mean_seconds.to_string(),
                r.std_seconds.to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

fn check_protocol(trials: usize, horizons: &[usize], algorithms: &[BenchAlgorithm]) -> Result<()> {
    if trials < 3 {
        return Err(Error::Invalid(format!("bench needs at least 3 trials, got {trials}")));
    }
    if horizons.is_empty() || algorithms.is_empty() {
        return Err(Error::Invalid("bench needs at least one J and algorithm".into()));
    }
    Ok(())
}

/// Times `trials` full passes per `(N, J, algorithm)` after one untimed
/// warm-up, strictly sequentially. Each `N` uses a synthetic system with
/// `channels` dipoles drawn from `seed`; `rho`, `dt`, the model and the
/// batching come from `config`.
pub fn bench_scaling(
    dims: &[usize],
    horizons: &[usize],
    algorithms: &[BenchAlgorithm],
    trials: usize,
    channels: usize,
    seed: u64,
    config: &RunConfig,
) -> Result<BenchTable> {
    check_protocol(trials, horizons, algorithms)?;
    if dims.is_empty() {
        return Err(Error::Invalid("bench needs at least one N".into()));
    }
    let mut table = BenchTable {
        records: Vec::new(),
        fits: Vec::new(),
    };
    for &n in dims {
        let file = generate_synthetic(n, channels, seed)?;
        let part = bench_system(&file, horizons, algorithms, trials, seed, config)?;
        table.records.extend(part.records);
        table.fits.extend(part.fits);
    }
    Ok(table)
}

/// As [`bench_scaling`] for one given system.
pub fn bench_system(
    file: &SystemFile,
    horizons: &[usize],
    algorithms: &[BenchAlgorithm],
    trials: usize,
    seed: u64,
    config: &RunConfig,
) -> Result<BenchTable> {
    check_protocol(trials, horizons, algorithms)?;
    let engine = engine_for(config);
    let n = file.dim;
    let mut records = Vec::new();
    let mut fits = Vec::new();
    for &alg in algorithms {
        let mut xs = Vec::new();
        let mut ys = Vec::new();
        for &j in horizons {
            let cfg = RunConfig {
                num_steps: j,
                ..config.clone()
            };
            let system = file.to_system(&cfg)?;
            let model = cfg.build_model(system.num_channels())?;
            let theta = initial_theta(model.num_params(), seed);
            if alg == BenchAlgorithm::SecondOrder {
                engine.check_budget(&system, model.num_params())?;
            }
            engine.evaluate(&system, model.as_ref(), &theta, alg.order())?;
            let mut times = Vec::with_capacity(trials);
            for _ in 0..trials {
                let start = Instant::now();
                let eval = engine.evaluate(&system, model.as_ref(), &theta, alg.order())?;
                times.push(start.elapsed().as_secs_f64());
                std::hint::black_box(eval);
            }
            let (mean_seconds, std_seconds) = mean_std(&times);
            xs.push((j as f64).log2());
            ys.push(mean_seconds.log2());
            records.push(BenchRecord {
                n,
                j,
                algorithm: alg,
                trials,
                mean_seconds,
                std_seconds,
            });
        }
        if xs.len() >= 2 {
            fits.push(ScalingFit {
                n,
                algorithm: alg,
                slope: ols_slope(&xs, &ys),
            });
        }
    }
    Ok(BenchTable { records, fits })
}
