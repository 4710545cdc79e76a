use nalgebra::{DMatrix, DVector};

use super::output::OutputSpec;
use super::LagrangianModel;
use crate::error::{Error, Result};
use crate::linalg;

const NEWTON_TOL: f64 = 1e-12;
const NEWTON_MAX_ITER: usize = 50;

/// Base-row dynamics on the zero-dynamics manifold `y = 0`:
/// `dz xi'' + hz = j_hat^T F + lambda` with contact rows
/// `jz xi'' + wz = 0`.
#[derive(Clone, Debug, PartialEq)]
pub struct PinnedReduction {
    /// Configuration and velocity on the manifold.
    pub q: DVector<f64>,
    pub qdot: DVector<f64>,
    /// `dq/dxi`, `n x base_dim`.
    pub j_z: DMatrix<f64>,
    /// `J_z' xi'`.
    pub jdot_z_xidot: DVector<f64>,
    pub dz: DMatrix<f64>,
    pub hz: DVector<f64>,
    pub jz: DMatrix<f64>,
    pub wz: DVector<f64>,
    /// Base columns of the contact Jacobian.
    pub j_hat: DMatrix<f64>,
}

/// Solves `y(xi, theta) = 0` for the actuated coordinates with damped Newton.
fn pinned_configuration(m: &dyn LagrangianModel, out: &OutputSpec, xi: &DVector<f64>) -> Result<DVector<f64>> {
    let nb = m.base_dim();
    let nu = m.n_u();
    let mut q = linalg::vstack(&[xi, &DVector::zeros(nu)]);
    let mut res = out.y(nb, &q);
    for _ in 0..NEWTON_MAX_ITER {
        if res.amax() <= NEWTON_TOL {
            return Ok(q);
        }
        let jt = out.jacobian(nb, &q).columns(nb, nu).into_owned();
        let step = linalg::solve_square_vec(&jt, &res, "output Jacobian dy/dtheta", linalg::MIN_RCOND)?;
        let mut t = 1.0;
        loop {
            let mut trial = q.clone();
            trial.rows_mut(nb, nu).axpy(-t, &step, 1.0);
            let r = out.y(nb, &trial);
            if r.norm() < res.norm() || t < 1e-4 {
                q = trial;
                res = r;
                break;
            }
            t *= 0.5;
        }
    }
    if res.amax() <= NEWTON_TOL {
        return Ok(q);
    }
    Err(Error::NoConvergence {
        iterations: NEWTON_MAX_ITER,
        residual: res.amax(),
    })
}

/// The pinned ("bipedal") reduction of `m` with outputs `out` held at zero.
pub fn pinned_zero_dynamics(
    m: &dyn LagrangianModel,
    out: &OutputSpec,
    xi: &DVector<f64>,
    xidot: &DVector<f64>,
) -> Result<PinnedReduction> {
    let nb = m.base_dim();
    let nu = m.n_u();
    if xi.len() != nb || xidot.len() != nb {
        return Err(Error::dim("base coordinates", nb, xi.len().max(xidot.len())));
    }
    let q = pinned_configuration(m, out, xi)?;
    let jy = out.jacobian(nb, &q);
    let jy_theta = jy.columns(nb, nu).into_owned();
    let jy_xi = jy.columns(0, nb).into_owned();
    let lower = linalg::solve_square(&jy_theta, &(-jy_xi), "output Jacobian dy/dtheta", linalg::MIN_RCOND)?;
    let j_z = linalg::vstack_mat(&[&DMatrix::identity(nb, nb), &lower]);
    let qdot = &j_z * xidot;
    let bias = out.jacobian_bias(nb, &q, &qdot);
    let theta_acc = linalg::solve_square_vec(&jy_theta, &(-bias), "output Jacobian dy/dtheta", linalg::MIN_RCOND)?;
    let jdot_z_xidot = linalg::vstack(&[&DVector::zeros(nb), &theta_acc]);

    let d = m.mass_matrix(&q);
    let d_hat = d.rows(0, nb).into_owned();
    let h_hat = m.drift(&q, &qdot).rows(0, nb).into_owned();
    let jc = m.contact_jacobian(&q);
    Ok(PinnedReduction {
        dz: &d_hat * &j_z,
        hz: &d_hat * &jdot_z_xidot + h_hat,
        jz: &jc * &j_z,
        wz: &jc * &jdot_z_xidot + m.contact_bias(&q, &qdot),
        j_hat: jc.columns(0, nb).into_owned(),
        q,
        qdot,
        j_z,
        jdot_z_xidot,
    })
}
