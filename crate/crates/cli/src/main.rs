//! `qoc`: command-line front end for the adjoint-based optimal control
//! workbench.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use qoc_core::dynamics;
use qoc_core::workbench::bench::BENCH_FILE;
use qoc_core::workbench::io::{load_json, save_json};
use qoc_core::workbench::run::{write_trajectory, RESULTS_FILE};
use qoc_core::workbench::study::TRIALS_FILE;
use qoc_core::workbench::{
    bench_scaling, bench_system, generate_synthetic, grad_check, hess_check, initial_theta,
    run_optimization, study, write_trials_csv, BenchAlgorithm, CheckReport, OptimizerKind, RunConfig,
    RunRecord, SystemFile,
};

const SYSTEM_FILE: &str = "system.json";

#[derive(Parser)]
#[command(name = "qoc", version, about = "Exact adjoint gradients and Hessians for discrete-time quantum optimal control")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

/// Options shared by every subcommand.
#[derive(Args, Clone)]
struct Common {
    /// System file (JSON).
    #[arg(long)]
    system: Option<PathBuf>,
    /// Run-config file (JSON); defaults apply when omitted.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Seed; overrides the config's seed.
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Subcommand)]
enum Command {
    /// Generate a random synthetic system.
    GenSystem {
        #[command(flatten)]
        common: Common,
        /// Hilbert-space dimension N.
        #[arg(long, default_value_t = 4)]
        dim: usize,
        /// Number of control channels K (1-3).
        #[arg(long, default_value_t = 1)]
        channels: usize,
    },
    /// Propagate controls and write the control and state series.
    Propagate {
        #[command(flatten)]
        common: Common,
        /// Take theta from a results.json written by `run` instead of
        /// drawing it from the seed.
        #[arg(long)]
        theta_from: Option<PathBuf>,
    },
    /// Compare the adjoint gradient with central finite differences.
    GradCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Compare the adjoint Hessian with finite differences of the gradient.
    HessCheck {
        #[command(flatten)]
        common: Common,
    },
    /// Optimize from a seeded random initial guess.
    Run {
        #[command(flatten)]
        common: Common,
        /// Overrides the config's optimizer.
        #[arg(long, value_enum)]
        optimizer: Option<Optimizer>,
    },
    /// Paired Newton/BFGS trials with ratio statistics.
    Study {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 20)]
        trials: usize,
    },
    /// Time full first- and second-order passes against the horizon J.
    BenchScaling {
        #[command(flatten)]
        common: Common,
        /// Dimensions of the synthetic systems (ignored with --system).
        #[arg(long, value_delimiter = ',', default_values_t = [4, 16])]
        dims: Vec<usize>,
        #[arg(long, value_delimiter = ',', default_values_t = [4, 8, 16, 32, 64, 128, 256, 512, 1024])]
        horizons: Vec<usize>,
        #[arg(long, value_enum, value_delimiter = ',', default_values_t = [Algorithm::FirstOrder, Algorithm::SecondOrder])]
        algorithms: Vec<Algorithm>,
        #[arg(long, default_value_t = 3)]
        trials: usize,
        /// Channels of the synthetic systems.
        #[arg(long, default_value_t = 1)]
        channels: usize,
    },
}

#[derive(Clone, Copy, ValueEnum)]
enum Optimizer {
    Newton,
    Bfgs,
}

#[derive(Clone, Copy, ValueEnum)]
enum Algorithm {
    FirstOrder,
    SecondOrder,
}

impl From<Optimizer> for OptimizerKind {
    fn from(o: Optimizer) -> Self {
        match o {
            Optimizer::Newton => Self::Newton,
            Optimizer::Bfgs => Self::Bfgs,
        }
    }
}

impl From<Algorithm> for BenchAlgorithm {
    fn from(a: Algorithm) -> Self {
        match a {
            Algorithm::FirstOrder => Self::FirstOrder,
            Algorithm::SecondOrder => Self::SecondOrder,
        }
    }
}

impl Common {
    fn config(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(p) => RunConfig::load(p).with_context(|| format!("loading config {}", p.display()))?,
            None => RunConfig::default(),
        };
        if let Some(seed) = self.seed {
            cfg.seed = seed;
        }
        Ok(cfg)
    }

    fn system(&self) -> Result<SystemFile> {
        let Some(p) = &self.system else {
            bail!("--system <file> is required");
        };
        SystemFile::load(p).with_context(|| format!("loading system {}", p.display()))
    }

    fn out_dir(&self) -> Result<Option<&Path>> {
        if let Some(dir) = &self.out {
            fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
        }
        Ok(self.out.as_deref())
    }
}

fn print_json<T: Serialize>(value: &T) -> Result<()> {
    println!("{}", serde_json::to_string_pretty(value)?);
    Ok(())
}

#[derive(Serialize)]
struct PropagateSummary {
    system_name: String,
    num_params: usize,
    cost: f64,
    target_violation: f64,
}

fn check(common: &Common, hessian: bool) -> Result<bool> {
    let cfg = common.config()?;
    let file = common.system()?;
    let report: CheckReport = if hessian {
        hess_check(&file, &cfg, cfg.seed)?
    } else {
        grad_check(&file, &cfg, cfg.seed)?
    };
    print_json(&report)?;
    if let Some(dir) = common.out_dir()? {
        let name = if hessian { "hess_check.json" } else { "grad_check.json" };
        save_json(&dir.join(name), &report)?;
    }
    eprintln!(
        "{}: max relative error {:.3e} (tolerance {:.0e})",
        if report.passed { "PASS" } else { "FAIL" },
        report.max_rel_error,
        report.tolerance
    );
    Ok(report.passed)
}

fn execute(command: Command) -> Result<bool> {
    match command {
        Command::GenSystem { common, dim, channels } => {
            let seed = common.seed.unwrap_or(common.config()?.seed);
            let file = generate_synthetic(dim, channels, seed)?;
            let target = match (&common.system, common.out_dir()?) {
                (Some(p), _) => Some(p.clone()),
                (None, Some(dir)) => Some(dir.join(SYSTEM_FILE)),
                (None, None) => None,
            };
            match target {
                Some(p) => {
                    file.save(&p)?;
                    eprintln!("wrote {}", p.display());
                }
                None => print_json(&file)?,
            }
        }
        Command::Propagate { common, theta_from } => {
            let cfg = common.config()?;
            let file = common.system()?;
            let system = file.to_system(&cfg)?;
            let model = cfg.build_model(system.num_channels())?;
            let theta = match theta_from {
                Some(p) => {
                    let record: RunRecord = load_json(&p).with_context(|| format!("loading {}", p.display()))?;
                    record.report.final_theta
                }
                None => initial_theta(model.num_params(), cfg.seed),
            };
            let cache = dynamics::propagate(&system, model.as_ref(), &theta)?;
            let summary = PropagateSummary {
                system_name: file.name.clone(),
                num_params: theta.len(),
                cost: dynamics::cost(&system, &cache),
                target_violation: dynamics::target_violation(&cache, system.beta()),
            };
            print_json(&summary)?;
            if let Some(dir) = common.out_dir()? {
                write_trajectory(&system, model.as_ref(), &theta, dir)?;
            }
        }
        Command::GradCheck { common } => return check(&common, false),
        Command::HessCheck { common } => return check(&common, true),
        Command::Run { common, optimizer } => {
            let mut cfg = common.config()?;
            if let Some(o) = optimizer {
                cfg.optimizer = o.into();
            }
            let file = common.system()?;
            let record = run_optimization(&file, &cfg, common.out_dir()?)?;
            let r = &record.report;
            println!(
                "{} on {}: {} iterations, {:.3}s, cost {:.6e} -> {:.6e}, |grad| {:.3e}, target violation {:.3e}, {:?}",
                record.optimizer.as_str(),
                record.system_name,
                r.iterations,
                r.wall_time,
                record.initial_cost,
                r.final_cost,
                r.final_grad_norm,
                r.final_target_violation.unwrap_or(f64::NAN),
                r.termination_reason,
            );
            if let Some(e) = r.final_hessian_min_eig {
                println!("smallest Hessian eigenvalue {e:.6e}");
            }
        }
        Command::Study { common, trials } => {
            let cfg = common.config()?;
            let file = common.system()?;
            let summary = study(&file, &cfg, trials, cfg.seed)?;
            println!("{:<12} {:>12} {:>12} {:>12}", "ratio", "mean", "q05", "q95");
            for (i, name) in qoc_core::workbench::study::Ratios::NAMES.iter().enumerate() {
                println!(
                    "{:<12} {:>12.4} {:>12.4} {:>12.4}",
                    name,
                    summary.mean.values()[i],
                    summary.q05.values()[i],
                    summary.q95.values()[i]
                );
            }
            if let Some(dir) = common.out_dir()? {
                save_json(&dir.join(RESULTS_FILE), &summary)?;
                write_trials_csv(&summary, &dir.join(TRIALS_FILE))?;
            }
        }
        Command::BenchScaling {
            common,
            dims,
            horizons,
            algorithms,
            trials,
            channels,
        } => {
            let cfg = common.config()?;
            let algorithms: Vec<BenchAlgorithm> = algorithms.into_iter().map(Into::into).collect();
            let table = match &common.system {
                Some(_) => bench_system(&common.system()?, &horizons, &algorithms, trials, cfg.seed, &cfg)?,
                None => bench_scaling(&dims, &horizons, &algorithms, trials, channels, cfg.seed, &cfg)?,
            };
            println!("{:>4} {:>6} {:<13} {:>12} {:>12}", "N", "J", "algorithm", "mean_s", "std_s");
            for r in &table.records {
                println!(
                    "{:>4} {:>6} {:<13} {:>12.4e} {:>12.4e}",
                    r.n,
                    r.j,
                    r.algorithm.as_str(),
                    r.mean_seconds,
                    r.std_seconds
                );
            }
            for f in &table.fits {
                println!("slope N={} {}: {:.4}", f.n, f.algorithm.as_str(), f.slope);
            }
            if let Some(dir) = common.out_dir()? {
                table.write_csv(&dir.join(BENCH_FILE))?;
                save_json(&dir.join(RESULTS_FILE), &table)?;
            }
        }
    }
    Ok(true)
}

fn main() -> ExitCode {
    match execute(Cli::parse().command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(2)
        }
    }
}
