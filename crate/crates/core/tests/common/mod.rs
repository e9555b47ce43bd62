#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use qoc_core::control::ControlModel;
use qoc_core::dynamics::{self, QuantumSystem};
use qoc_core::spectral::HermitianMatrix;
use qoc_core::{CMatrix, CVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn normal(rng: &mut impl Rng) -> f64 {
    rng.sample(StandardNormal)
}

pub fn random_complex(rng: &mut impl Rng, n: usize, m: usize) -> CMatrix {
    DMatrix::from_fn(n, m, |_, _| Complex64::new(normal(rng), normal(rng)))
}

pub fn random_hermitian(rng: &mut impl Rng, n: usize) -> CMatrix {
    let a = random_complex(rng, n, n);
    (&a + a.adjoint()) * Complex64::new(0.5, 0.0)
}

pub fn random_unit(rng: &mut impl Rng, n: usize) -> CVector {
    let v = DVector::from_fn(n, |_, _| Complex64::new(normal(rng), normal(rng)));
    let norm = v.norm();
    v.unscale(norm)
}

pub fn random_theta(rng: &mut impl Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| normal(rng)).collect()
}

/// Random dense system with random unit initial and target states.
pub fn random_system(seed: u64, n: usize, k: usize, steps: usize, dt: f64, rho: f64) -> QuantumSystem {
    let mut r = rng(seed);
    let h0 = HermitianMatrix::new(random_hermitian(&mut r, n)).unwrap();
    let dipoles = (0..k)
        .map(|_| HermitianMatrix::new(random_hermitian(&mut r, n)).unwrap())
        .collect();
    let alpha = random_unit(&mut r, n);
    let beta = random_unit(&mut r, n);
    QuantumSystem::new(h0, dipoles, alpha, beta, rho, steps, dt).unwrap()
}

/// `exp(A)` by scaling, a 30-term Taylor series, and squaring.
pub fn expm_taylor(a: &CMatrix) -> CMatrix {
    let n = a.nrows();
    let norm = a.iter().map(|z| z.norm()).sum::<f64>().max(1e-300);
    let s = norm.log2().ceil().max(0.0) as i32 + 1;
    let scaled = a.unscale(2f64.powi(s));
    let mut term = CMatrix::identity(n, n);
    let mut sum = term.clone();
    for k in 1..30 {
        term = &term * &scaled / Complex64::new(k as f64, 0.0);
        sum += &term;
    }
    for _ in 0..s {
        sum = &sum * &sum;
    }
    sum
}

/// `exp(-i dt H)` via the Taylor oracle.
pub fn step_oracle(h: &CMatrix, dt: f64) -> CMatrix {
    expm_taylor(&(h * Complex64::new(0.0, -dt)))
}

/// Final state by chaining oracle exponentials.
pub fn final_state_oracle(sys: &QuantumSystem, model: &dyn ControlModel, theta: &[f64]) -> CVector {
    let f = dynamics::control_values(sys, model, theta).unwrap();
    let k = sys.num_channels();
    let mut a = sys.alpha().clone();
    for j in 0..sys.num_steps() {
        let h = sys.h0().add_scaled(&f[j * k..(j + 1) * k], sys.dipoles());
        a = step_oracle(h.as_matrix(), sys.dt()) * a;
    }
    a
}

/// The cost with the dynamics substituted in, evaluated through oracle
/// exponentials.
pub fn unwound_cost(sys: &QuantumSystem, model: &dyn ControlModel, theta: &[f64]) -> f64 {
    let f = dynamics::control_values(sys, model, theta).unwrap();
    let reg: f64 = 0.5 * f.iter().map(|x| x * x).sum::<f64>();
    let a = final_state_oracle(sys, model, theta);
    reg + 0.5 * sys.rho() * (a - sys.beta()).norm_squared()
}

pub fn rel_frobenius(a: &CMatrix, b: &CMatrix) -> f64 {
    (a - b).norm() / b.norm().max(1e-300)
}

/// Random unitary from the QR factor of a complex Gaussian matrix.
pub fn random_unitary(rng: &mut impl Rng, n: usize) -> CMatrix {
    random_complex(rng, n, n).qr().q()
}

/// Hermitian matrix with standard-normal spectrum in a random basis, where
/// eigenvalue 1 is placed exactly `gap` above eigenvalue 0.
pub fn clustered_hermitian(rng: &mut impl Rng, n: usize, gap: f64) -> CMatrix {
    let v = random_unitary(rng, n);
    let mut lambda: Vec<f64> = (0..n).map(|_| normal(rng)).collect();
    lambda[1] = lambda[0] + gap;
    let d = CMatrix::from_diagonal(&DVector::from_iterator(
        n,
        lambda.iter().map(|&l| Complex64::new(l, 0.0)),
    ));
    let h = &v * d * v.adjoint();
    (&h + h.adjoint()) * Complex64::new(0.5, 0.0)
}

/// `(exp(Z + hW) - exp(Z - hW)) / 2h`.
pub fn fd_frechet_first(z: &CMatrix, w: &CMatrix, h: f64) -> CMatrix {
    let hw = w * Complex64::new(h, 0.0);
    (expm_taylor(&(z + &hw)) - expm_taylor(&(z - &hw))) / Complex64::new(2.0 * h, 0.0)
}

/// Nested central difference of `exp` along `(W1, W2)`.
pub fn fd_frechet_second(z: &CMatrix, w1: &CMatrix, w2: &CMatrix, h: f64) -> CMatrix {
    let a = w1 * Complex64::new(h, 0.0);
    let b = w2 * Complex64::new(h, 0.0);
    let pp = expm_taylor(&(z + &a + &b));
    let pm = expm_taylor(&(z + &a - &b));
    let mp = expm_taylor(&(z - &a + &b));
    let mm = expm_taylor(&(z - &a - &b));
    (pp - pm - mp + mm) / Complex64::new(4.0 * h * h, 0.0)
}

/// `Z = -i dt H`.
pub fn generator(h: &CMatrix, dt: f64) -> CMatrix {
    h * Complex64::new(0.0, -dt)
}
