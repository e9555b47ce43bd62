//! Random test systems: diagonal core Hamiltonian, dense Hermitian dipoles,
//! ground-to-top-state transfer.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::io::SystemFile;
use crate::error::{Error, Result};
use crate::spectral::HermitianMatrix;

/// `N(0,1)` diagonal `h0` sorted ascending; each dipole is `(A + A^H)/2` with
/// standard-normal complex `A`; `alpha = e_1`, `beta = e_N`.
pub fn generate_synthetic(n: usize, channels: usize, seed: u64) -> Result<SystemFile> {
    if n < 2 {
        return Err(Error::Invalid(format!("synthetic systems need N >= 2, got {n}")));
    }
    if !(1..=3).contains(&channels) {
        return Err(Error::Invalid(format!("channel count must be 1, 2 or 3, got {channels}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut diag: Vec<f64> = (0..n).map(|_| rng.sample(StandardNormal)).collect();
    diag.sort_by(f64::total_cmp);
    let h0 = HermitianMatrix::from_real_diagonal(&diag);

    let dipoles: Vec<HermitianMatrix> = (0..channels)
        .map(|_| {
            let a = DMatrix::from_fn(n, n, |_, _| {
                Complex64::new(rng.sample(StandardNormal), rng.sample(StandardNormal))
            });
            let m = (&a + a.adjoint()) * Complex64::new(0.5, 0.0);
            HermitianMatrix::new(m).expect("symmetrized matrix is Hermitian")
        })
        .collect();

    let mut alpha = DVector::zeros(n);
    alpha[0] = Complex64::new(1.0, 0.0);
    let mut beta = DVector::zeros(n);
    beta[n - 1] = Complex64::new(1.0, 0.0);

    Ok(SystemFile::from_parts(
        format!("synthetic-n{n}-k{channels}-s{seed}"),
        &h0,
        &dipoles,
        &alpha,
        &beta,
    ))
}

/// Standard-normal initial parameters.
pub fn initial_theta(num_params: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..num_params).map(|_| rng.sample(StandardNormal)).collect()
}
