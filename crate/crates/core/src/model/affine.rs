use nalgebra::{DMatrix, DVector};
use rand::Rng;

use super::{Dims, SubsystemDynamics, Terms};
use crate::error::Result;

/// A subsystem whose drift terms are affine in `(x, z_own)` and whose input
/// and coupling matrices are constant.
///
/// ```text
/// f = f0 + fx x + fz z,   p = p0 + px x + pz z
/// ```
#[derive(Clone, Debug, PartialEq)]
pub struct AffineSubsystem {
    pub f0: DVector<f64>,
    pub fx: DMatrix<f64>,
    pub fz: DMatrix<f64>,
    pub g: DMatrix<f64>,
    pub p0: DVector<f64>,
    pub px: DMatrix<f64>,
    pub pz: DMatrix<f64>,
    pub q: DMatrix<f64>,
    pub g_breve: DMatrix<f64>,
    pub q_breve: DMatrix<f64>,
}

impl AffineSubsystem {
    /// All maps zero.
    pub fn zeros(d: Dims) -> Self {
        AffineSubsystem {
            f0: DVector::zeros(d.n_x),
            fx: DMatrix::zeros(d.n_x, d.n_x),
            fz: DMatrix::zeros(d.n_x, d.n_z),
            g: DMatrix::zeros(d.n_x, d.n_u),
            p0: DVector::zeros(d.n_z),
            px: DMatrix::zeros(d.n_z, d.n_x),
            pz: DMatrix::zeros(d.n_z, d.n_z),
            q: DMatrix::zeros(d.n_z, d.n_u),
            g_breve: DMatrix::zeros(d.n_x, d.n_lambda),
            q_breve: DMatrix::zeros(d.n_z, d.n_lambda),
        }
    }

    /// Entries drawn uniformly from `[-1, 1]`; the input and coupling
    /// matrices get an identity shift so the reductions stay well posed.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, d: Dims) -> Self {
        let mut mat = |r: usize, c: usize| DMatrix::from_fn(r, c, |_, _| rng.random_range(-1.0..1.0));
        let mut s = AffineSubsystem {
            f0: mat(d.n_x, 1).column(0).into_owned(),
            fx: mat(d.n_x, d.n_x),
            fz: mat(d.n_x, d.n_z),
            g: mat(d.n_x, d.n_u),
            p0: mat(d.n_z, 1).column(0).into_owned(),
            px: mat(d.n_z, d.n_x),
            pz: mat(d.n_z, d.n_z),
            q: mat(d.n_z, d.n_u),
            g_breve: mat(d.n_x, d.n_lambda),
            q_breve: mat(d.n_z, d.n_lambda),
        };
        for k in 0..d.n_x.min(d.n_u) {
            s.g[(k, k)] += 2.0;
        }
        for k in 0..d.n_z.min(d.n_lambda) {
            s.q_breve[(k, k)] += 2.0;
        }
        s
    }

    pub fn dims_of(&self) -> Dims {
        Dims {
            n_x: self.f0.len(),
            n_z: self.p0.len(),
            n_u: self.g.ncols(),
            n_lambda: self.q_breve.ncols(),
        }
    }
}

impl SubsystemDynamics for AffineSubsystem {
    fn dims(&self) -> Dims {
        self.dims_of()
    }

    fn terms(&self, x: &DVector<f64>, z_own: &DVector<f64>, _z_other: &DVector<f64>) -> Result<Terms> {
        Ok(Terms {
            f: &self.f0 + &self.fx * x + &self.fz * z_own,
            g: self.g.clone(),
            p: &self.p0 + &self.px * x + &self.pz * z_own,
            q: self.q.clone(),
            g_breve: self.g_breve.clone(),
            q_breve: self.q_breve.clone(),
        })
    }
}
