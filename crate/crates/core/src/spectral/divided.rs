//! Divided differences of the scalar exponential over points of a spectrum.
//!
//! These are the entrywise multipliers in the Daleckii–Krein representation of
//! the first and second Fréchet derivatives of `exp` at a normal matrix. Both
//! functions canonically order their arguments before evaluating, so results
//! are bit-for-bit invariant under permutation of the points.

use num_complex::Complex64;
use std::cmp::Ordering;

/// Relative separation below which two points are treated as confluent.
pub const CONFLUENCE_TOL: f64 = 1e-7;

const SINHC_SERIES_CUTOFF: f64 = 1e-4;

/// Separation below which `exp[a, b]` is evaluated in the cancellation-free
/// form `e^{(a+b)/2} sinhc((a-b)/2)` rather than from the two exponentials.
const CANCELLATION_GAP: f64 = 1.0;

/// Separation above which a second divided difference is formed from two
/// first differences without a series.
pub const SPLIT_GAP: f64 = 1e-2;

/// Spread below which the second divided difference is summed as a series.
const SERIES_SPREAD: f64 = 0.5;

fn canonical(a: &Complex64, b: &Complex64) -> Ordering {
    a.re.total_cmp(&b.re).then(a.im.total_cmp(&b.im))
}

/// `sinh(x) / x`, with the removable singularity at zero filled in.
pub fn sinhc(x: Complex64) -> Complex64 {
    if x.norm() < SINHC_SERIES_CUTOFF {
        let x2 = x * x;
        Complex64::new(1.0, 0.0) + x2 / 6.0 + x2 * x2 / 120.0
    } else {
        x.sinh() / x
    }
}

fn confluent(a: Complex64, b: Complex64) -> bool {
    let scale = 1f64.max(a.norm()).max(b.norm());
    (a - b).norm() < CONFLUENCE_TOL * scale
}

/// First divided difference `exp[a, b] = (e^a - e^b) / (a - b)`, with
/// `exp[a, a] = e^a`.
pub fn first(a: Complex64, b: Complex64) -> Complex64 {
    first_with_exp(a, b, a.exp(), b.exp())
}

/// As [`first`], reusing already-evaluated exponentials `ea = e^a`, `eb = e^b`.
pub fn first_with_exp(a: Complex64, b: Complex64, ea: Complex64, eb: Complex64) -> Complex64 {
    let (a, b, ea, eb) = match canonical(&a, &b) {
        Ordering::Greater => (b, a, eb, ea),
        _ => (a, b, ea, eb),
    };
    if confluent(a, b) || (a - b).norm() < CANCELLATION_GAP {
        ((a + b) * 0.5).exp() * sinhc((a - b) * 0.5)
    } else {
        (ea - eb) / (a - b)
    }
}

/// Second divided difference `exp[a, b, c]`; equals `e^a / 2` when all three
/// points coincide.
pub fn second(a: Complex64, b: Complex64, c: Complex64) -> Complex64 {
    let mut pts = [a, b, c];
    pts.sort_by(canonical);
    let [a, b, c] = pts;

    let dab = (a - b).norm();
    let dbc = (b - c).norm();
    let dac = (a - c).norm();
    let spread = dab.max(dbc).max(dac);

    if spread <= SERIES_SPREAD {
        return shifted_series(a, b, c);
    }

    // Divide by the farthest pair so the denominator is bounded away from zero.
    let (x, mid, y) = if dac >= dab && dac >= dbc {
        (a, b, c)
    } else if dab >= dbc {
        (a, c, b)
    } else {
        (b, a, c)
    };
    (first(x, mid) - first(mid, y)) / (x - y)
}

/// `e^m * sum_k h_k(w) / (k+2)!` with `w = z - m`, `m` the centroid, and
/// `h_k` the complete homogeneous symmetric polynomial of degree `k`.
fn shifted_series(a: Complex64, b: Complex64, c: Complex64) -> Complex64 {
    let m = (a + b + c) / 3.0;
    let (w0, w1, w2) = (a - m, b - m, c - m);

    let one = Complex64::new(1.0, 0.0);
    let mut p0 = one;
    let mut h2 = one;
    let mut h3 = one;
    let mut fact = 2.0;
    let mut sum = h3 / fact;
    for k in 1..60 {
        p0 *= w0;
        h2 = p0 + w1 * h2;
        h3 = h2 + w2 * h3;
        fact *= (k + 2) as f64;
        let term = h3 / fact;
        sum += term;
        if k >= 3 && term.norm() <= 1e-18 * sum.norm() {
            break;
        }
    }
    m.exp() * sum
}
