//! Central finite differences.

use nalgebra::{DMatrix, DVector};

use crate::error::Result;

/// Default relative step for central differences.
pub const DEFAULT_STEP: f64 = 1e-6;

fn step_for(x: f64, step: f64) -> f64 {
    step * x.abs().max(1.0)
}

/// Central-difference Jacobian of `f` at `x`; column `k` uses a step scaled by
/// `max(1, |x_k|)`.
pub fn jacobian<F>(mut f: F, x: &DVector<f64>, step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let cols: Vec<usize> = (0..x.len()).collect();
    jacobian_columns(&mut f, x, &cols, step)
}

/// Central-difference Jacobian restricted to the variables in `cols`; the
/// returned matrix has one column per entry of `cols`.
pub fn jacobian_columns<F>(f: &mut F, x: &DVector<f64>, cols: &[usize], step: f64) -> Result<DMatrix<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    let mut xp = x.clone();
    let mut out: Option<DMatrix<f64>> = None;
    for (k, &c) in cols.iter().enumerate() {
        let h = step_for(x[c], step);
        xp[c] = x[c] + h;
        let fp = f(&xp)?;
        xp[c] = x[c] - h;
        let fm = f(&xp)?;
        xp[c] = x[c];
        let jac = out.get_or_insert_with(|| DMatrix::zeros(fp.len(), cols.len()));
        jac.set_column(k, &((fp - fm) / (2.0 * h)));
    }
    Ok(out.unwrap_or_else(|| {
        let m = f(x).map(|v| v.len()).unwrap_or(0);
        DMatrix::zeros(m, 0)
    }))
}

/// Central-difference gradient of a scalar function.
pub fn gradient<F>(mut f: F, x: &DVector<f64>, step: f64) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<f64>,
{
    let mut xp = x.clone();
    let mut g = DVector::zeros(x.len());
    for c in 0..x.len() {
        let h = step_for(x[c], step);
        xp[c] = x[c] + h;
        let fp = f(&xp)?;
        xp[c] = x[c] - h;
        let fm = f(&xp)?;
        xp[c] = x[c];
        g[c] = (fp - fm) / (2.0 * h);
    }
    Ok(g)
}
