//! Solvers for the trust-region subproblem
//! `min_s g^T s + 1/2 s^T H s` subject to `||s|| <= radius`.

use faer::linalg::solvers::Solve;
use faer::Side;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// How the subproblem is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum SubproblemMethod {
    /// Exact boundary solve in the eigenbasis of `H`, including the hard case.
    Eigen,
    /// Exact solve by Cholesky-based Newton iteration on the secular equation;
    /// falls back to [`SubproblemMethod::Eigen`] when `H` is not positive
    /// definite.
    #[default]
    MoreSorensen,
    /// Truncated conjugate gradients (approximate).
    Steihaug,
}

const SECULAR_RTOL: f64 = 1e-10;
const MAX_SECULAR_ITERS: usize = 100;

/// Value of the quadratic model at `s`.
pub fn model_value(h: &DMatrix<f64>, g: &DVector<f64>, s: &DVector<f64>) -> f64 {
    g.dot(s) + 0.5 * s.dot(&(h * s))
}

/// Minimizer of the model along `-g` within the region.
pub fn cauchy_point(h: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let gnorm = g.norm();
    if gnorm == 0.0 {
        return DVector::zeros(g.len());
    }
    let ghg = g.dot(&(h * g));
    let tau = if ghg <= 0.0 {
        1.0
    } else {
        (gnorm.powi(3) / (radius * ghg)).min(1.0)
    };
    g * (-tau * radius / gnorm)
}

/// Solve the subproblem with the given method. The returned step satisfies
/// `||s|| <= radius (1 + 1e-10)` and decreases the model at least as much as
/// the Cauchy point.
pub fn trust_region_subproblem(
    h: &DMatrix<f64>,
    g: &DVector<f64>,
    radius: f64,
    method: SubproblemMethod,
) -> DVector<f64> {
    assert!(radius > 0.0, "trust radius must be positive");
    assert_eq!(h.nrows(), g.len());
    if g.norm() == 0.0 && method != SubproblemMethod::Eigen {
        // Only negative curvature can make progress from a stationary point.
        return solve_eigen(h, g, radius);
    }
    let mut s = match method {
        SubproblemMethod::Eigen => solve_eigen(h, g, radius),
        SubproblemMethod::MoreSorensen => {
            solve_cholesky(h, g, radius).unwrap_or_else(|| solve_eigen(h, g, radius))
        }
        SubproblemMethod::Steihaug => solve_steihaug(h, g, radius),
    };
    let norm = s.norm();
    if norm > radius {
        s *= radius / norm;
    }
    let cauchy = cauchy_point(h, g, radius);
    if model_value(h, g, &cauchy) < model_value(h, g, &s) {
        cauchy
    } else {
        s
    }
}

/// Exact solution via `H = Q diag(lambda) Q^T`.
pub fn solve_eigen(h: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = g.len();
    let Some((lam, q)) = symmetric_eigen(h) else {
        // Non-finite model: fall back to steepest descent to the boundary.
        return g * (-radius / g.norm().max(f64::MIN_POSITIVE));
    };
    let q = &q;
    let lam = &lam;
    let gt = q.transpose() * g;
    let gnorm = g.norm();

    let imin = (0..n).min_by(|&a, &b| lam[a].total_cmp(&lam[b])).unwrap();
    let lmin = lam[imin];
    let scale = lam.iter().fold(1.0f64, |m, l| m.max(l.abs()));

    let step_at = |sigma: f64, skip: &dyn Fn(usize) -> bool| -> DVector<f64> {
        let mut coeffs = DVector::zeros(n);
        for i in 0..n {
            if !skip(i) {
                coeffs[i] = -gt[i] / (lam[i] + sigma);
            }
        }
        q * coeffs
    };
    let norm_at = |sigma: f64| -> f64 {
        (0..n)
            .map(|i| (gt[i] / (lam[i] + sigma)).powi(2))
            .sum::<f64>()
            .sqrt()
    };

    if lmin > 0.0 {
        let s = step_at(0.0, &|_| false);
        if s.norm() <= radius {
            return s;
        }
    }

    let lo = (-lmin).max(0.0);
    let degenerate = |i: usize| lam[i] - lmin <= 1e-12 * scale;
    let hard = (0..n).filter(|&i| degenerate(i)).all(|i| gt[i].abs() <= 1e-14 * gnorm.max(f64::MIN_POSITIVE));

    if hard && lmin <= 0.0 {
        let partial = step_at(lo, &degenerate);
        let pn = partial.norm();
        if pn <= radius {
            let tau = (radius * radius - pn * pn).max(0.0).sqrt();
            let dir = q.column(imin).into_owned();
            let sign = if g.dot(&dir) > 0.0 { -1.0 } else { 1.0 };
            return partial + dir * (sign * tau);
        }
    }

    // Bracket the root of ||s(sigma)|| = radius on (lo, hi].
    let mut lo_b = lo;
    let mut hi_b = (gnorm / radius - lmin).max(lo) + f64::EPSILON * scale;
    let mut sigma = if lo > 0.0 { lo + 1e-8 * scale.max(lo) } else { 0.0 };
    sigma = sigma.min(hi_b);
    for _ in 0..MAX_SECULAR_ITERS {
        let phi = norm_at(sigma);
        if (phi - radius).abs() <= SECULAR_RTOL * radius {
            break;
        }
        if phi > radius {
            lo_b = lo_b.max(sigma);
        } else {
            hi_b = hi_b.min(sigma);
        }
        let dphi: f64 = (0..n)
            .map(|i| gt[i] * gt[i] / (lam[i] + sigma).powi(3))
            .sum();
        // Newton on 1/phi - 1/radius.
        let mut next = sigma - (1.0 / phi - 1.0 / radius) * phi.powi(3) / dphi;
        if !(next > lo_b && next < hi_b) || !next.is_finite() {
            next = 0.5 * (lo_b + hi_b);
        }
        if next == sigma {
            break;
        }
        sigma = next;
    }
    step_at(sigma, &|_| false)
}

/// Cholesky-based exact solve; `None` when `H + sigma I` cannot be factored
/// along the way (indefinite `H`).
pub fn solve_cholesky(h: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> Option<DVector<f64>> {
    let n = g.len();
    let mut sigma = 0.0;
    let mut shifted = to_faer(h);
    let rhs = faer::Col::<f64>::from_fn(n, |i| -g[i]);
    for _ in 0..MAX_SECULAR_ITERS {
        let chol = shifted.llt(Side::Lower).ok()?;
        let s = chol.solve(&rhs);
        let snorm = s.norm_l2();
        if sigma == 0.0 && snorm <= radius {
            return Some(from_faer_col(&s));
        }
        if (snorm - radius).abs() <= SECULAR_RTOL * radius {
            return Some(from_faer_col(&s));
        }
        // ||L^{-1} s||^2 = s^T (H + sigma I)^{-1} s; Newton step on
        // 1/||s(sigma)|| - 1/radius.
        let wn2: f64 = s.transpose() * chol.solve(&s);
        if !(wn2 > 0.0) {
            return None;
        }
        let next = sigma + (snorm * snorm / wn2) * (snorm - radius) / radius;
        if !(next >= 0.0) || !next.is_finite() {
            return None;
        }
        for i in 0..n {
            shifted[(i, i)] += next - sigma;
        }
        sigma = next;
    }
    None
}

fn to_faer(h: &DMatrix<f64>) -> faer::Mat<f64> {
    faer::Mat::from_fn(h.nrows(), h.ncols(), |i, j| h[(i, j)])
}

fn from_faer_col(c: &faer::Col<f64>) -> DVector<f64> {
    DVector::from_fn(c.nrows(), |i, _| c[i])
}

/// Eigenvalues (ascending) and orthonormal eigenvectors of symmetric `h`.
pub(crate) fn symmetric_eigen(h: &DMatrix<f64>) -> Option<(DVector<f64>, DMatrix<f64>)> {
    let n = h.nrows();
    let eig = to_faer(h).self_adjoint_eigen(Side::Lower).ok()?;
    let u = eig.U();
    let d = eig.S().column_vector();
    let lam = DVector::from_fn(n, |i, _| d[i]);
    let q = DMatrix::from_fn(n, n, |i, j| u[(i, j)]);
    lam.iter().all(|x| x.is_finite()).then_some((lam, q))
}

/// Smallest eigenvalue of symmetric `h`.
pub fn min_eigenvalue(h: &DMatrix<f64>) -> f64 {
    to_faer(h)
        .self_adjoint_eigenvalues(Side::Lower)
        .ok()
        .and_then(|v| v.into_iter().reduce(f64::min))
        .unwrap_or(f64::NAN)
}

/// Steihaug–Toint truncated CG.
pub fn solve_steihaug(h: &DMatrix<f64>, g: &DVector<f64>, radius: f64) -> DVector<f64> {
    let n = g.len();
    let mut z = DVector::zeros(n);
    let mut r = g.clone();
    let mut d = -&r;
    let tol = g.norm() * g.norm().sqrt().min(0.5);
    if r.norm() < tol {
        return z;
    }
    for _ in 0..(2 * n).max(10) {
        let hd = h * &d;
        let dhd = d.dot(&hd);
        if dhd <= 0.0 {
            return &z + &d * boundary_tau(&z, &d, radius);
        }
        let rr = r.dot(&r);
        let alpha = rr / dhd;
        let z_next = &z + &d * alpha;
        if z_next.norm() >= radius {
            return &z + &d * boundary_tau(&z, &d, radius);
        }
        r += hd * alpha;
        z = z_next;
        if r.norm() < tol {
            return z;
        }
        let beta = r.dot(&r) / rr;
        d = -&r + d * beta;
    }
    z
}

/// Positive `tau` with `||z + tau d|| = radius`.
fn boundary_tau(z: &DVector<f64>, d: &DVector<f64>, radius: f64) -> f64 {
    let a = d.dot(d);
    let b = 2.0 * z.dot(d);
    let c = z.dot(z) - radius * radius;
    (-b + (b * b - 4.0 * a * c).max(0.0).sqrt()) / (2.0 * a)
}
