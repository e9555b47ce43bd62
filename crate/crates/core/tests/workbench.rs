use std::fs;

use qoc_core::adjoint::{AdjointEngine, Order};
use qoc_core::control::MaximalModel;
use qoc_core::workbench::bench::BENCH_FILE;
use qoc_core::workbench::checks::{compare_gradient, compare_hessian};
use qoc_core::workbench::run::{CONTROLS_FILE, RESULTS_FILE, STATES_FILE};
use qoc_core::workbench::study::{summarize, write_trials_csv};
use qoc_core::workbench::{
    bench_scaling, generate_synthetic, grad_check, hess_check, run_optimization, study, BenchAlgorithm,
    OptimizerKind, RunConfig, RunRecord, SystemFile,
};
use qoc_core::spectral::hermitian_residual;

fn small_config() -> RunConfig {
    RunConfig {
        rho: 100.0,
        num_steps: 20,
        ..Default::default()
    }
}

#[test]
fn system_file_round_trips_bit_exactly() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("sys.json");
    let file = generate_synthetic(5, 3, 17).unwrap();
    file.save(&path).unwrap();
    let back = SystemFile::load(&path).unwrap();
    assert_eq!(back, file);
    let bits = |f: &SystemFile| f.h0.iter().flatten().flat_map(|p| p.map(f64::to_bits)).collect::<Vec<_>>();
    assert_eq!(bits(&back), bits(&file));
}

#[test]
fn run_config_round_trips_and_uses_j_key() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    let cfg = RunConfig {
        rho: 0.1 + 0.2,
        dt: 1.0 / 3.0,
        num_steps: 17,
        optimizer: OptimizerKind::Bfgs,
        seed: u64::MAX,
        batch_width: Some(3),
        ..Default::default()
    };
    cfg.save(&path).unwrap();
    assert!(fs::read_to_string(&path).unwrap().contains("\"J\""));
    let back = RunConfig::load(&path).unwrap();
    assert_eq!(back, cfg);
    assert_eq!(back.rho.to_bits(), cfg.rho.to_bits());
    assert_eq!(back.dt.to_bits(), cfg.dt.to_bits());
}

#[test]
fn config_validation() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("cfg.json");
    for bad in [
        r#"{"J": 0}"#,
        r#"{"rho": 0}"#,
        r#"{"dt": -0.1}"#,
        r#"{"model": "neural"}"#,
        r#"{"bogus": 1}"#,
        r#"{"criteria": {"max_iters": 0}}"#,
    ] {
        fs::write(&path, bad).unwrap();
        assert!(RunConfig::load(&path).is_err(), "{bad}");
    }
    fs::write(&path, r#"{"num_steps": 8, "criteria": {"grad_tol": 1e-6}}"#).unwrap();
    let cfg = RunConfig::load(&path).unwrap();
    assert_eq!(cfg.num_steps, 8);
    assert_eq!(cfg.criteria.grad_tol, 1e-6);
    assert_eq!(cfg.criteria.step_tol, 1e-10);
}

#[test]
fn system_file_validation() {
    let good = generate_synthetic(3, 2, 1).unwrap();
    let mut f = good.clone();
    f.h0[0][1] = [5.0, 0.0];
    assert!(f.parts().is_err(), "non-Hermitian h0");
    let mut f = good.clone();
    f.alpha[0] = [2.0, 0.0];
    assert!(f.to_system(&small_config()).is_err(), "non-unit alpha");
    let mut f = good.clone();
    f.format_version = 99;
    assert!(f.parts().is_err());
    let mut f = good.clone();
    f.num_channels = 3;
    assert!(f.parts().is_err());
    // A zero dipole is dropped from the channel count.
    let mut f = good;
    f.dipoles[1] = vec![vec![[0.0, 0.0]; 3]; 3];
    assert_eq!(f.to_system(&small_config()).unwrap().num_channels(), 1);
}

#[test]
fn synthetic_systems_are_deterministic_and_well_formed() {
    let a = generate_synthetic(6, 3, 42).unwrap();
    assert_eq!(a, generate_synthetic(6, 3, 42).unwrap());
    assert_ne!(a, generate_synthetic(6, 3, 43).unwrap());
    let (h0, dipoles, alpha, beta) = a.parts().unwrap();
    let d: Vec<f64> = (0..6).map(|i| h0.as_matrix()[(i, i)].re).collect();
    assert!(d.windows(2).all(|w| w[0] <= w[1]));
    for i in 0..6 {
        for j in 0..6 {
            if i != j {
                assert_eq!(h0.as_matrix()[(i, j)].norm(), 0.0);
            }
        }
    }
    assert_eq!(dipoles.len(), 3);
    for m in &dipoles {
        assert_eq!(hermitian_residual(m.as_matrix()), 0.0);
    }
    assert_eq!(alpha[0].re, 1.0);
    assert_eq!(beta[5].re, 1.0);
    assert!(generate_synthetic(1, 1, 0).is_err());
    assert!(generate_synthetic(3, 4, 0).is_err());
}

#[test]
fn derivative_checks_pass_on_random_system() {
    let file = generate_synthetic(4, 1, 3).unwrap();
    let cfg = RunConfig {
        rho: 1e6,
        num_steps: 16,
        ..Default::default()
    };
    let g = grad_check(&file, &cfg, 5).unwrap();
    assert!(g.passed, "{g:?}");
    assert!(g.max_rel_error < 1e-6);
    let h = hess_check(&file, &cfg, 5).unwrap();
    assert!(h.passed, "{h:?}");
    assert!(h.asymmetry.unwrap() < 1e-8);
}

#[test]
fn derivative_checks_are_exact_without_target_term() {
    let file = generate_synthetic(4, 1, 3).unwrap();
    let system = file.to_system(&small_config()).unwrap().with_rho(0.0).unwrap();
    let model = MaximalModel::new(1, 20).unwrap();
    let theta: Vec<f64> = (0..20).map(|i| (i as f64 * 0.37).sin()).collect();
    let e = AdjointEngine::default()
        .evaluate(&system, &model, &theta, Order::Second)
        .unwrap();
    assert_eq!(e.gradient.grad, theta);
    let g = compare_gradient(&system, &model, &theta, &e.gradient.grad).unwrap();
    assert!(g.passed && g.max_rel_error < 1e-12, "{g:?}");
    let h = e.hessian.unwrap();
    let r = compare_hessian(&system, &model, &theta, h.hess.as_slice(), Some(h.asymmetry)).unwrap();
    assert!(r.passed && r.max_rel_error < 1e-12, "{r:?}");
}

#[test]
fn derivative_checks_catch_a_corrupted_sign() {
    let file = generate_synthetic(4, 1, 3).unwrap();
    let cfg = RunConfig {
        num_steps: 8,
        ..small_config()
    };
    let system = file.to_system(&cfg).unwrap();
    let model = MaximalModel::new(1, 8).unwrap();
    let theta: Vec<f64> = (0..8).map(|i| 0.3 * i as f64 - 1.0).collect();
    let e = AdjointEngine::default()
        .evaluate(&system, &model, &theta, Order::Second)
        .unwrap();

    // Flipping the sign of the costate contribution leaves only the
    // regularization part correct.
    let flipped: Vec<f64> = e.gradient.grad.iter().zip(&theta).map(|(g, t)| 2.0 * t - g).collect();
    let bad = compare_gradient(&system, &model, &theta, &flipped).unwrap();
    assert!(!bad.passed, "{bad:?}");

    let mut hess = e.hessian.unwrap().hess;
    hess[(0, 1)] = -hess[(0, 1)];
    hess[(1, 0)] = -hess[(1, 0)];
    let bad = compare_hessian(&system, &model, &theta, hess.as_slice(), None).unwrap();
    assert!(!bad.passed, "{bad:?}");
}

#[test]
fn run_writes_results_and_series() {
    let dir = tempfile::tempdir().unwrap();
    let file = generate_synthetic(3, 2, 8).unwrap();
    for kind in [OptimizerKind::Newton, OptimizerKind::Bfgs] {
        let cfg = RunConfig {
            optimizer: kind,
            seed: 8,
            ..small_config()
        };
        let out = dir.path().join(kind.as_str());
        let record = run_optimization(&file, &cfg, Some(&out)).unwrap();
        let saved: RunRecord =
            serde_json::from_str(&fs::read_to_string(out.join(RESULTS_FILE)).unwrap()).unwrap();
        assert_eq!(saved.report.final_theta, record.report.final_theta);
        assert_eq!(saved.optimizer, kind);
        assert!(record.report.final_cost <= record.initial_cost);
        assert!(record.report.final_target_violation.unwrap().is_finite());

        let controls = fs::read_to_string(out.join(CONTROLS_FILE)).unwrap();
        let mut lines = controls.lines();
        assert_eq!(lines.next().unwrap(), "step,t,f_1,f_2");
        assert_eq!(lines.count(), 20);
        let states = fs::read_to_string(out.join(STATES_FILE)).unwrap();
        let mut lines = states.lines();
        assert_eq!(lines.next().unwrap(), "step,t,abs_a_1,abs_a_2,abs_a_3");
        assert_eq!(lines.count(), 21);
    }
}

#[test]
fn run_respects_memory_budget() {
    let file = generate_synthetic(3, 1, 0).unwrap();
    let cfg = RunConfig {
        memory_budget: 1024,
        ..small_config()
    };
    assert!(run_optimization(&file, &cfg, None).is_err());
    let cfg = RunConfig {
        optimizer: OptimizerKind::Bfgs,
        ..cfg
    };
    assert!(run_optimization(&file, &cfg, None).is_ok());
}

#[test]
fn study_is_reproducible_and_pairs_initial_guesses() {
    let file = generate_synthetic(3, 1, 9).unwrap();
    let cfg = small_config();
    let a = study(&file, &cfg, 3, 100).unwrap();
    let b = study(&file, &cfg, 3, 100).unwrap();
    assert_eq!(a.num_trials, 3);
    for (x, y) in a.trials.iter().zip(&b.trials) {
        assert_eq!(x.theta_seed, y.theta_seed);
        assert_eq!(x.ratios.iterations, y.ratios.iterations);
        assert_eq!(x.ratios.final_cost, y.ratios.final_cost);
        assert_eq!(x.ratios.grad_norm, y.ratios.grad_norm);
        assert_eq!(x.ratios.target_viol, y.ratios.target_viol);
        assert_eq!(x.newton.final_cost, y.newton.final_cost);
    }
    assert_eq!(a.trials.iter().map(|t| t.theta_seed).collect::<Vec<_>>(), vec![100, 101, 102]);

    // Ratios come first; means are of per-trial ratios.
    let mean = a.trials.iter().map(|t| t.ratios.iterations).sum::<f64>() / 3.0;
    assert!((a.mean.iterations - mean).abs() < 1e-15);
    let t = &a.trials[0];
    assert_eq!(t.ratios.iterations, t.bfgs.iterations as f64 / t.newton.iterations as f64);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trials.csv");
    write_trials_csv(&a, &path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    let mut lines = text.lines();
    assert_eq!(
        lines.next().unwrap(),
        "trial,algorithm,iterations,wall_s,final_cost,grad_norm,target_viol"
    );
    assert_eq!(lines.count(), 6);
}

#[test]
fn single_trial_quantiles_equal_the_ratio() {
    let file = generate_synthetic(3, 1, 9).unwrap();
    let s = study(&file, &small_config(), 1, 7).unwrap();
    let r = s.trials[0].ratios.values();
    assert_eq!(s.mean.values(), r);
    assert_eq!(s.q05.values(), r);
    assert_eq!(s.q95.values(), r);
    assert!(study(&file, &small_config(), 0, 7).is_err());
    assert!(summarize("x", vec![]).is_err());
}

#[test]
fn bench_protocol_and_csv() {
    let cfg = RunConfig::default();
    let table = bench_scaling(
        &[2, 3],
        &[4, 8, 16],
        &[BenchAlgorithm::FirstOrder, BenchAlgorithm::SecondOrder],
        3,
        1,
        0,
        &cfg,
    )
    .unwrap();
    assert_eq!(table.records.len(), 12);
    assert!(table.records.iter().all(|r| r.trials == 3 && r.mean_seconds > 0.0 && r.std_seconds >= 0.0));
    assert_eq!(table.fits.len(), 4);
    assert!(table.slope(3, BenchAlgorithm::SecondOrder).unwrap().is_finite());
    assert!(bench_scaling(&[2], &[4], &[BenchAlgorithm::FirstOrder], 2, 1, 0, &cfg).is_err());

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join(BENCH_FILE);
    table.write_csv(&path).unwrap();
    let text = fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("N,J,algorithm,trials,mean_seconds,std_seconds\n2,4,first_order,3,"));
    assert_eq!(text.lines().count(), 13);
}
