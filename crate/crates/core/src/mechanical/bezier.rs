use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Value and first two `tau`-derivatives of a Bézier polynomial.
#[derive(Clone, Debug, PartialEq)]
pub struct BezierEval {
    pub value: DVector<f64>,
    pub d1: DVector<f64>,
    pub d2: DVector<f64>,
}

fn binomial(n: usize, k: usize) -> f64 {
    (0..k).fold(1.0, |acc, i| acc * (n - i) as f64 / (i + 1) as f64)
}

/// Sum of `coeffs[:, k] * b_{k,n}(tau)` in the Bernstein basis of degree
/// `coeffs.ncols() - 1`.
fn bernstein(coeffs: &DMatrix<f64>, tau: f64) -> DVector<f64> {
    let mut out = DVector::zeros(coeffs.nrows());
    if coeffs.ncols() == 0 {
        return out;
    }
    let n = coeffs.ncols() - 1;
    for k in 0..=n {
        let b = binomial(n, k) * tau.powi(k as i32) * (1.0 - tau).powi((n - k) as i32);
        out += coeffs.column(k) * b;
    }
    out
}

fn forward_difference(coeffs: &DMatrix<f64>) -> DMatrix<f64> {
    let n = coeffs.ncols().saturating_sub(1);
    DMatrix::from_fn(coeffs.nrows(), n, |r, c| coeffs[(r, c + 1)] - coeffs[(r, c)])
}

/// Evaluates the Bézier polynomial with coefficient columns `alpha` at `tau`
/// clamped to `[0, 1]`, with its first and second derivatives.
pub fn bezier_full(alpha: &DMatrix<f64>, tau: f64) -> BezierEval {
    let tau = tau.clamp(0.0, 1.0);
    let n = alpha.ncols().saturating_sub(1) as f64;
    let d1c = forward_difference(alpha);
    let d2c = forward_difference(&d1c);
    BezierEval {
        value: bernstein(alpha, tau),
        d1: n * bernstein(&d1c, tau),
        d2: n * (n - 1.0) * bernstein(&d2c, tau),
    }
}

/// `(y_d, dy_d/dtau)` at `tau` clamped to `[0, 1]`.
pub fn bezier(alpha: &DMatrix<f64>, tau: f64) -> (DVector<f64>, DVector<f64>) {
    let e = bezier_full(alpha, tau);
    (e.value, e.d1)
}

/// `alpha_r = M alpha_f`.
pub fn mirror_coeffs(alpha: &DMatrix<f64>, m: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if m.ncols() != alpha.nrows() {
        return Err(Error::dim("mirror matrix columns", alpha.nrows(), m.ncols()));
    }
    Ok(m * alpha)
}
