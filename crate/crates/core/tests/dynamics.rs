mod common;

use common::*;
use num_complex::Complex64;
use qoc_core::control::{ControlModel, MaximalModel};
use qoc_core::dynamics::{self, build_generator, QuantumSystem};
use qoc_core::spectral::{hermitian_residual, HermitianMatrix};
use qoc_core::CVector;

#[test]
fn norm_is_preserved_over_long_horizon() {
    let sys = random_system(20, 4, 2, 1000, 0.1, 1.0);
    let model = MaximalModel::new(2, 1000).unwrap();
    let theta = random_theta(&mut rng(21), model.num_params());
    let (_, states) = dynamics::propagate_states(&sys, &model, &theta).unwrap();
    assert_eq!(states.len(), 1001);
    let worst = states.iter().map(|a| (a.norm() - 1.0).abs()).fold(0.0, f64::max);
    assert!(worst < 1e-10, "{worst:e}");
}

#[test]
fn inverse_propagators_recover_alpha() {
    let sys = random_system(22, 4, 1, 200, 0.1, 1.0);
    let model = MaximalModel::new(1, 200).unwrap();
    let theta = random_theta(&mut rng(23), 200);
    let cache = dynamics::propagate(&sys, &model, &theta).unwrap();
    let mut a = cache.final_state().clone();
    for j in (0..200).rev() {
        a = cache.propagator(j).ad_mul(&a);
    }
    assert!((a - sys.alpha()).norm() < 1e-9);
}

#[test]
fn matches_series_oracle_propagation() {
    let sys = random_system(24, 4, 2, 16, 0.1, 1.0);
    let model = MaximalModel::new(2, 16).unwrap();
    let theta = random_theta(&mut rng(25), model.num_params());
    let cache = dynamics::propagate(&sys, &model, &theta).unwrap();
    let oracle = final_state_oracle(&sys, &model, &theta);
    assert!((cache.final_state() - &oracle).norm() < 1e-10);
    let (_, states) = dynamics::propagate_states(&sys, &model, &theta).unwrap();
    for (a, b) in states.iter().zip(cache.states()) {
        assert!((a - b).norm() < 1e-12);
    }
}

#[test]
fn cost_equals_unwound_cost() {
    for seed in 0..5 {
        let sys = random_system(30 + seed, 3, 2, 10, 0.1, 1e3);
        let model = MaximalModel::new(2, 10).unwrap();
        let theta = random_theta(&mut rng(40 + seed), model.num_params());
        let c = dynamics::evaluate_cost(&sys, &model, &theta).unwrap();
        let u = unwound_cost(&sys, &model, &theta);
        assert!((c - u).abs() < 1e-10 * u.abs());
    }
}

#[test]
fn cost_without_target_term_is_half_norm_squared() {
    let sys = random_system(50, 4, 1, 32, 0.1, 0.0);
    let model = MaximalModel::new(1, 32).unwrap();
    let theta = random_theta(&mut rng(51), 32);
    let half = 0.5 * theta.iter().map(|x| x * x).sum::<f64>();
    assert!((dynamics::evaluate_cost(&sys, &model, &theta).unwrap() - half).abs() < 1e-12);
}

#[test]
fn generator_is_hermitian() {
    let sys = random_system(52, 5, 3, 8, 0.1, 1.0);
    let model = MaximalModel::new(3, 8).unwrap();
    let theta = random_theta(&mut rng(53), model.num_params());
    for j in 0..8 {
        let h = build_generator(&sys, &model, &theta, j).unwrap();
        assert!(hermitian_residual(h.as_matrix()) < 1e-13);
    }
}

#[test]
fn target_violation_cases() {
    let e = |i: usize| {
        let mut v = CVector::zeros(2);
        v[i] = Complex64::new(1.0, 0.0);
        v
    };
    let sys = QuantumSystem::new(
        HermitianMatrix::zeros(2),
        vec![HermitianMatrix::from_real_diagonal(&[1.0, -1.0])],
        e(0),
        e(1),
        1.0,
        3,
        0.1,
    )
    .unwrap();
    // Zero field and zero H0: the state never moves.
    let model = MaximalModel::new(1, 3).unwrap();
    let cache = dynamics::propagate(&sys, &model, &[0.0; 3]).unwrap();
    assert!((dynamics::target_violation(&cache, sys.beta()) - 2f64.sqrt()).abs() < 1e-15);
    assert_eq!(dynamics::target_violation(&cache, &e(0)), 0.0);

    let sys = random_system(54, 4, 1, 5, 0.1, 1.0);
    let model = MaximalModel::new(1, 5).unwrap();
    let theta = random_theta(&mut rng(55), 5);
    let cache = dynamics::propagate(&sys, &model, &theta).unwrap();
    let direct = (final_state_oracle(&sys, &model, &theta) - sys.beta()).norm();
    assert!((dynamics::target_violation(&cache, sys.beta()) - direct).abs() < 1e-10);
    assert_eq!(model.num_params(), 5);
}

#[test]
fn cache_footprint_is_reported() {
    let sys = random_system(56, 4, 2, 10, 0.1, 1.0);
    let model = MaximalModel::new(2, 10).unwrap();
    let cache = dynamics::propagate(&sys, &model, &[0.1; 20]).unwrap();
    // 11 states, 10 steps of 5 N×N matrices (eigenvectors, propagator,
    // divided differences, two Fréchet applications) and 10 eigenvalue vectors.
    assert_eq!(cache.footprint_bytes(), 16 * 11 * 4 + 16 * 10 * 16 * 5 + 8 * 10 * 4);
    assert_eq!(cache.footprint_bytes(), dynamics::estimate_cache_bytes(4, 10, 2));
}
