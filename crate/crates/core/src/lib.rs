//! Exact gradients and Hessians for discrete-time quantum optimal control.
//!
//! The controlled system is `a_{j+1} = exp(Z_j) a_j` with
//! `Z_j = -i dt (H0 + sum_k f^k(j dt; theta) M_k)`, and the cost is
//! `1/2 sum f^2 + rho/2 ||a_J - beta||^2`. Gradients come from a first-order
//! adjoint (costate) sweep; Hessians from a second-order adjoint that adds
//! forward state sensitivities and backward second-order costates. Both are
//! consumed by a trust-region optimizer ([`optimizer`]) that runs either an
//! exact Newton model or a damped-BFGS model in the same shell.
//!
//! Modules, bottom up:
//! - [`spectral`]: eigendecomposition, step propagators, Fréchet derivatives
//!   of `exp`;
//! - [`control`]: control-field parameterizations;
//! - [`dynamics`]: forward propagation and cost;
//! - [`adjoint`]: gradient and Hessian sweeps plus finite-difference oracles;
//! - [`optimizer`]: trust-region Newton and BFGS;
//! - [`workbench`]: file formats, synthetic systems, checks, benchmarks and
//!   multi-trial studies.

pub mod adjoint;
pub mod control;
pub mod dynamics;
pub mod error;
pub mod optimizer;
pub mod spectral;
pub mod workbench;

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;

pub use error::{Error, Result};

pub type CMatrix = DMatrix<Complex64>;
pub type CVector = DVector<Complex64>;
