//! Eigendecomposition-based matrix exponential for the anti-Hermitian step
//! generators `Z = -i dt H`, together with its first and second Fréchet
//! derivatives.
//!
//! The Hermitian `H` is diagonalized (real spectrum, unitary eigenvectors) and
//! the spectrum of `Z` is formed as `z_p = -i dt lambda_p`. Derivatives use the
//! Daleckii–Krein form: in the eigenbasis, the first derivative in direction
//! `W` is the Hadamard product of `V^H W V` with the table of first divided
//! differences of `exp`; the second derivative contracts second divided
//! differences against two directions.

pub mod divided;

use nalgebra::{DVector, SymmetricEigen};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::CMatrix;

/// Per-entry tolerance on `|H_pq - conj(H_qp)|`.
pub const HERMITIAN_TOL: f64 = 1e-12;

/// A square complex matrix equal to its conjugate transpose.
#[derive(Debug, Clone, PartialEq)]
pub struct HermitianMatrix(CMatrix);

impl HermitianMatrix {
    pub fn new(m: CMatrix) -> Result<Self> {
        if m.nrows() != m.ncols() {
            return Err(Error::Dimension(format!(
                "Hermitian matrix must be square, got {}x{}",
                m.nrows(),
                m.ncols()
            )));
        }
        if m.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
            return Err(Error::Invalid("matrix has non-finite entries".into()));
        }
        let residual = hermitian_residual(&m);
        if residual > HERMITIAN_TOL {
            return Err(Error::NotHermitian {
                residual,
                tolerance: HERMITIAN_TOL,
            });
        }
        Ok(Self(m))
    }

    pub fn zeros(n: usize) -> Self {
        Self(CMatrix::zeros(n, n))
    }

    pub fn from_real_diagonal(diag: &[f64]) -> Self {
        let n = diag.len();
        Self(CMatrix::from_fn(n, n, |i, j| {
            if i == j {
                Complex64::new(diag[i], 0.0)
            } else {
                Complex64::new(0.0, 0.0)
            }
        }))
    }

    pub fn dim(&self) -> usize {
        self.0.nrows()
    }

    pub fn as_matrix(&self) -> &CMatrix {
        &self.0
    }

    pub fn into_inner(self) -> CMatrix {
        self.0
    }

    pub fn is_zero(&self) -> bool {
        self.0.iter().all(|z| z.re == 0.0 && z.im == 0.0)
    }

    /// `self + sum_k coeffs[k] * terms[k]`; Hermitian since the coefficients
    /// are real.
    pub fn add_scaled(&self, coeffs: &[f64], terms: &[HermitianMatrix]) -> HermitianMatrix {
        debug_assert_eq!(coeffs.len(), terms.len());
        let mut out = self.0.clone();
        for (&c, t) in coeffs.iter().zip(terms) {
            if c != 0.0 {
                out.zip_apply(&t.0, |o, m| *o += m * c);
            }
        }
        HermitianMatrix(out)
    }
}

/// Largest entrywise `|M_pq - conj(M_qp)|`.
pub fn hermitian_residual(m: &CMatrix) -> f64 {
    let n = m.nrows();
    let mut worst = 0f64;
    for i in 0..n {
        for j in i..n {
            worst = worst.max((m[(i, j)] - m[(j, i)].conj()).norm());
        }
    }
    worst
}

/// Eigendecomposition `H = V diag(lambda) V^H` of the Hermitian part of one
/// step generator, with the time step that maps it to `Z = -i dt H`.
///
/// Eigenvalues are ascending; each eigenvector column is phased so that its
/// largest-magnitude component is real and positive.
#[derive(Debug, Clone)]
pub struct SpectralFactor {
    eigenvalues: DVector<f64>,
    eigenvectors: CMatrix,
    dt: f64,
    points: Vec<Complex64>,
    exp_points: Vec<Complex64>,
    first_divided: CMatrix,
}

impl SpectralFactor {
    pub fn eigenvalues(&self) -> &DVector<f64> {
        &self.eigenvalues
    }

    pub fn eigenvectors(&self) -> &CMatrix {
        &self.eigenvectors
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    pub fn dim(&self) -> usize {
        self.eigenvalues.len()
    }

    /// Spectrum of `Z`: `z_p = -i dt lambda_p`.
    pub fn points(&self) -> &[Complex64] {
        &self.points
    }

    /// `exp(z_p)` for each spectrum point.
    pub fn exp_points(&self) -> &[Complex64] {
        &self.exp_points
    }

    /// Table of first divided differences `exp[z_p, z_q]`.
    pub fn first_divided(&self) -> &CMatrix {
        &self.first_divided
    }

    /// `V^H W V`.
    pub fn to_eigenbasis(&self, w: &CMatrix) -> CMatrix {
        self.eigenvectors.ad_mul(w) * &self.eigenvectors
    }

    /// `V W V^H`.
    pub fn from_eigenbasis(&self, w: &CMatrix) -> CMatrix {
        &self.eigenvectors * w * self.eigenvectors.adjoint()
    }

    /// First Fréchet derivative with the direction already in the eigenbasis;
    /// the result is also in the eigenbasis.
    pub fn frechet_first_eigenbasis(&self, wt: &CMatrix) -> CMatrix {
        self.first_divided.component_mul(wt)
    }

    /// `exp[z_p, z_r, z_q]`, from the cached first differences whenever two of
    /// the points are at least [`divided::SPLIT_GAP`] apart.
    fn second_divided(&self, p: usize, r: usize, q: usize) -> Complex64 {
        let z = &self.points;
        let phi = &self.first_divided;
        if (z[p] - z[q]).norm() >= divided::SPLIT_GAP {
            (phi[(p, r)] - phi[(r, q)]) / (z[p] - z[q])
        } else if (z[p] - z[r]).norm() >= divided::SPLIT_GAP {
            (phi[(p, q)] - phi[(q, r)]) / (z[p] - z[r])
        } else if (z[r] - z[q]).norm() >= divided::SPLIT_GAP {
            (phi[(r, p)] - phi[(p, q)]) / (z[r] - z[q])
        } else {
            divided::second(z[p], z[r], z[q])
        }
    }

    /// Second Fréchet derivative with both directions already in the
    /// eigenbasis; the result is also in the eigenbasis.
    ///
    /// For well-separated `z_p, z_q` the sum over `r` telescopes into two
    /// matrix products per direction,
    /// `([(Phi o W1) W2 - W1 (Phi o W2)] + [1 <-> 2])_pq / (z_p - z_q)`,
    /// so no `N^3` table is needed. Entries with `z_p` close to `z_q`
    /// (including the diagonal) are summed explicitly.
    pub fn frechet_second_eigenbasis(&self, wt1: &CMatrix, wt2: &CMatrix) -> CMatrix {
        let n = self.dim();
        let z = &self.points;
        let phi = &self.first_divided;
        let f1 = phi.component_mul(wt1);
        let f2 = phi.component_mul(wt2);
        let cross = (&f1 * wt2 - wt1 * &f2) + (&f2 * wt1 - wt2 * &f1);
        let mut out = CMatrix::zeros(n, n);
        for q in 0..n {
            for p in 0..n {
                let gap = z[p] - z[q];
                out[(p, q)] = if gap.norm() >= divided::SPLIT_GAP {
                    cross[(p, q)] / gap
                } else {
                    let mut acc = Complex64::new(0.0, 0.0);
                    for r in 0..n {
                        let sym = wt1[(p, r)] * wt2[(r, q)] + wt2[(p, r)] * wt1[(r, q)];
                        acc += self.second_divided(p, r, q) * sym;
                    }
                    acc
                };
            }
        }
        out
    }

    /// `left^H D2(wt1, wt2) right` with every operand in the eigenbasis, where
    /// `D2` is the second Fréchet derivative.
    pub fn second_form(
        &self,
        left: &crate::CVector,
        wt1: &CMatrix,
        wt2: &CMatrix,
        right: &crate::CVector,
    ) -> Complex64 {
        left.dotc(&(self.frechet_second_eigenbasis(wt1, wt2) * right))
    }
}

/// Diagonalize `h` and attach the time step.
pub fn decompose(h: &HermitianMatrix, dt: f64) -> Result<SpectralFactor> {
    if !(dt > 0.0 && dt.is_finite()) {
        return Err(Error::Invalid(format!("time step must be positive, got {dt}")));
    }
    let n = h.dim();
    let eig = SymmetricEigen::try_new(h.as_matrix().clone(), f64::EPSILON, 1000 * n.max(1))
        .ok_or(Error::EigenSolver { step: None })?;

    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[a].total_cmp(&eig.eigenvalues[b]));

    let eigenvalues = DVector::from_iterator(n, order.iter().map(|&i| eig.eigenvalues[i]));
    let mut eigenvectors = CMatrix::zeros(n, n);
    for (dst, &src) in order.iter().enumerate() {
        let col = eig.eigenvectors.column(src);
        let mut lead = 0;
        for p in 1..n {
            if col[p].norm() > col[lead].norm() {
                lead = p;
            }
        }
        let phase = col[lead].conj() / col[lead].norm();
        eigenvectors.set_column(dst, &(col * phase));
    }

    let points: Vec<Complex64> = eigenvalues
        .iter()
        .map(|&l| Complex64::new(0.0, -dt * l))
        .collect();
    let exp_points: Vec<Complex64> = points.iter().map(|z| z.exp()).collect();
    let first_divided = CMatrix::from_fn(n, n, |p, q| {
        divided::first_with_exp(points[p], points[q], exp_points[p], exp_points[q])
    });

    Ok(SpectralFactor {
        eigenvalues,
        eigenvectors,
        dt,
        points,
        exp_points,
        first_divided,
    })
}

/// `exp(-i dt H) = V diag(exp(z)) V^H`.
pub fn step_propagator(sf: &SpectralFactor) -> CMatrix {
    let v = &sf.eigenvectors;
    let mut scaled = v.clone();
    for (mut col, e) in scaled.column_iter_mut().zip(&sf.exp_points) {
        col *= *e;
    }
    scaled * v.adjoint()
}

/// Directional derivative of `exp` at `Z = -i dt H` in direction `w`.
pub fn frechet_first(sf: &SpectralFactor, w: &CMatrix) -> CMatrix {
    assert_eq!(w.shape(), (sf.dim(), sf.dim()), "direction dimension mismatch");
    sf.from_eigenbasis(&sf.frechet_first_eigenbasis(&sf.to_eigenbasis(w)))
}

/// Symmetric second directional derivative of `exp` at `Z` along `(w1, w2)`.
pub fn frechet_second(sf: &SpectralFactor, w1: &CMatrix, w2: &CMatrix) -> CMatrix {
    let n = sf.dim();
    assert_eq!(w1.shape(), (n, n), "direction dimension mismatch");
    assert_eq!(w2.shape(), (n, n), "direction dimension mismatch");
    let r = sf.frechet_second_eigenbasis(&sf.to_eigenbasis(w1), &sf.to_eigenbasis(w2));
    sf.from_eigenbasis(&r)
}

/// Materialized first and second divided-difference tables over the spectrum
/// of one step generator. Meant for inspection; the derivative kernels never
/// build the `N^3` tensor.
#[derive(Debug, Clone)]
pub struct LoewnerTable {
    pub first_divided: CMatrix,
    second_divided: Vec<Complex64>,
    n: usize,
}

impl LoewnerTable {
    pub fn from_factor(sf: &SpectralFactor) -> Self {
        let n = sf.dim();
        let z = sf.points();
        let mut second_divided = Vec::with_capacity(n * n * n);
        for p in 0..n {
            for r in 0..n {
                for q in 0..n {
                    second_divided.push(divided::second(z[p], z[r], z[q]));
                }
            }
        }
        Self {
            first_divided: sf.first_divided().clone(),
            second_divided,
            n,
        }
    }

    pub fn dim(&self) -> usize {
        self.n
    }

    pub fn second(&self, p: usize, r: usize, q: usize) -> Complex64 {
        self.second_divided[(p * self.n + r) * self.n + q]
    }
}

/// Frobenius norm of `V^H V - I`.
pub fn unitarity_defect(u: &CMatrix) -> f64 {
    let n = u.ncols();
    (u.ad_mul(u) - CMatrix::identity(n, n)).norm()
}
