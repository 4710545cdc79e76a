//! Small dense helpers shared by the reduction, simulation and solver code.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Reciprocal condition estimate below which a square solve is rejected.
pub const MIN_RCOND: f64 = 1e-10;

/// Entries at or below this fraction of the matrix max-norm count as zero when
/// deciding whether a row is identically zero.
const ZERO_ROW_RTOL: f64 = 1e-13;

/// Ratio of smallest to largest singular value; 0 for empty or zero matrices.
pub fn rcond(m: &DMatrix<f64>) -> f64 {
    if m.is_empty() {
        return 1.0;
    }
    let sv = m.singular_values();
    let max = sv.max();
    if max == 0.0 {
        return 0.0;
    }
    sv.min() / max
}

/// Solves `a * x = b` for square `a`, failing loudly when `a` is
/// ill-conditioned instead of regularizing.
pub fn solve_square(a: &DMatrix<f64>, b: &DMatrix<f64>, what: &str, min_rcond: f64) -> Result<DMatrix<f64>> {
    if a.nrows() != a.ncols() {
        return Err(Error::dim(
            what,
            "square matrix".to_string(),
            format!("{}x{}", a.nrows(), a.ncols()),
        ));
    }
    if b.nrows() != a.nrows() {
        return Err(Error::dim(what, a.nrows(), b.nrows()));
    }
    if a.nrows() == 0 {
        return Ok(DMatrix::zeros(0, b.ncols()));
    }
    let rc = rcond(a);
    if !(rc >= min_rcond) {
        return Err(Error::Singular {
            what: what.to_string(),
            rcond: rc,
        });
    }
    a.clone().full_piv_lu().solve(b).ok_or_else(|| Error::Singular {
        what: what.to_string(),
        rcond: rc,
    })
}

pub fn solve_square_vec(a: &DMatrix<f64>, b: &DVector<f64>, what: &str, min_rcond: f64) -> Result<DVector<f64>> {
    let rhs = DMatrix::from_column_slice(b.len(), 1, b.as_slice());
    let x = solve_square(a, &rhs, what, min_rcond)?;
    Ok(x.column(0).into_owned())
}

/// Indices of rows that are not identically zero.
pub fn nonzero_rows(m: &DMatrix<f64>) -> Vec<usize> {
    let scale = m.amax();
    let tol = if scale > 0.0 { ZERO_ROW_RTOL * scale } else { 0.0 };
    (0..m.nrows())
        .filter(|&r| m.row(r).iter().any(|v| v.abs() > tol))
        .collect()
}

pub fn select_rows(m: &DMatrix<f64>, rows: &[usize]) -> DMatrix<f64> {
    DMatrix::from_fn(rows.len(), m.ncols(), |r, c| m[(rows[r], c)])
}

pub fn select_entries(v: &DVector<f64>, rows: &[usize]) -> DVector<f64> {
    DVector::from_iterator(rows.len(), rows.iter().map(|&r| v[r]))
}

pub fn vstack(parts: &[&DVector<f64>]) -> DVector<f64> {
    let n = parts.iter().map(|p| p.len()).sum();
    DVector::from_iterator(n, parts.iter().flat_map(|p| p.iter().copied()))
}

pub fn vstack_mat(parts: &[&DMatrix<f64>]) -> DMatrix<f64> {
    let ncols = parts.first().map_or(0, |p| p.ncols());
    let nrows = parts.iter().map(|p| p.nrows()).sum();
    let mut out = DMatrix::zeros(nrows, ncols);
    let mut r0 = 0;
    for p in parts {
        debug_assert_eq!(p.ncols(), ncols);
        out.view_mut((r0, 0), (p.nrows(), ncols)).copy_from(*p);
        r0 += p.nrows();
    }
    out
}

/// Assembles a 2x2 block matrix.
pub fn block2(a: &DMatrix<f64>, b: &DMatrix<f64>, c: &DMatrix<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    debug_assert_eq!(a.nrows(), b.nrows());
    debug_assert_eq!(c.nrows(), d.nrows());
    debug_assert_eq!(a.ncols(), c.ncols());
    debug_assert_eq!(b.ncols(), d.ncols());
    let (r1, r2, c1, c2) = (a.nrows(), c.nrows(), a.ncols(), b.ncols());
    let mut out = DMatrix::zeros(r1 + r2, c1 + c2);
    out.view_mut((0, 0), (r1, c1)).copy_from(a);
    out.view_mut((0, c1), (r1, c2)).copy_from(b);
    out.view_mut((r1, 0), (r2, c1)).copy_from(c);
    out.view_mut((r1, c1), (r2, c2)).copy_from(d);
    out
}

pub fn max_abs(v: &DVector<f64>) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}
