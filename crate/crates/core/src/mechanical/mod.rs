//! Coupled control systems built from planar Lagrangian models.
//!
//! A model has configuration `q = (xi, theta)` with unactuated base
//! coordinates `xi` first and actuated coordinates `theta` after them, and
//! dynamics
//!
//! ```text
//! D(q) q'' + H(q, q') = B u + J_e^T lambda + J(q)^T F,   J q'' + J' q' = 0
//! ```
//!
//! where `J` collects holonomic contacts and `J_e` selects the base rows
//! shared with the other half of a split model.

mod bezier;
mod carrier;
mod output;
mod pinned;

pub use bezier::{bezier, bezier_full, mirror_coeffs, BezierEval};
pub use carrier::{double_pendulum_pivot, example_by_name, example_split_cart, front_output, Contact, PendulumCarrier, SplitExample, DEFAULT_ALPHA};
pub use output::{to_ccs, MechanicalSubsystem, OutputSpec, Phase};
pub use pinned::{pinned_zero_dynamics, PinnedReduction};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// A planar Lagrangian model with optional holonomic contacts.
pub trait LagrangianModel: Send + Sync + std::fmt::Debug {
    /// Configuration dimension.
    fn n(&self) -> usize;
    /// Number of leading unactuated base coordinates.
    fn base_dim(&self) -> usize;
    fn n_contact(&self) -> usize;
    fn mass_matrix(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// Coriolis, centrifugal and gravity terms.
    fn drift(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64>;
    /// `n_contact x n`.
    fn contact_jacobian(&self, q: &DVector<f64>) -> DMatrix<f64>;
    /// `J'(q, q') q'`.
    fn contact_bias(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64>;
    fn potential(&self, q: &DVector<f64>) -> f64;

    fn n_u(&self) -> usize {
        self.n() - self.base_dim()
    }

    /// `B = [0; I]`.
    fn actuation(&self) -> DMatrix<f64> {
        let mut b = DMatrix::zeros(self.n(), self.n_u());
        b.view_mut((self.base_dim(), 0), (self.n_u(), self.n_u())).fill_with_identity();
        b
    }

    /// `J_e = [I 0]`, the selector of the base coordinates.
    fn couple_jacobian(&self) -> DMatrix<f64> {
        let mut j = DMatrix::zeros(self.base_dim(), self.n());
        j.view_mut((0, 0), (self.base_dim(), self.base_dim())).fill_with_identity();
        j
    }

    fn kinetic_energy(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
        0.5 * qdot.dot(&(self.mass_matrix(q) * qdot))
    }

    fn energy(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> f64 {
        self.kinetic_energy(q, qdot) + self.potential(q)
    }
}

/// Accelerations affine in the inputs after eliminating the contact force:
/// `q'' = a0 + bm u + cm lambda`.
#[derive(Clone, Debug, PartialEq)]
pub struct AccelAffine {
    pub a0: DVector<f64>,
    pub bm: DMatrix<f64>,
    pub cm: DMatrix<f64>,
}

fn inverse_mass(m: &dyn LagrangianModel, q: &DVector<f64>) -> Result<DMatrix<f64>> {
    let d = m.mass_matrix(q);
    d.clone().cholesky().map(|c| c.inverse()).ok_or_else(|| Error::Singular {
        what: "mass matrix D (not positive definite)".into(),
        rcond: linalg::rcond(&d),
    })
}

struct ContactProjection {
    dinv: DMatrix<f64>,
    /// `D^-1 J^T S^-1`, empty without contacts.
    p: DMatrix<f64>,
    j: DMatrix<f64>,
    s: DMatrix<f64>,
}

fn contact_projection(m: &dyn LagrangianModel, q: &DVector<f64>) -> Result<ContactProjection> {
    let dinv = inverse_mass(m, q)?;
    let j = m.contact_jacobian(q);
    if j.nrows() == 0 {
        return Ok(ContactProjection {
            p: DMatrix::zeros(m.n(), 0),
            s: DMatrix::zeros(0, 0),
            dinv,
            j,
        });
    }
    let s = &j * &dinv * j.transpose();
    let sinv = linalg::solve_square(&s, &DMatrix::identity(s.nrows(), s.nrows()), "contact matrix J D^-1 J^T", linalg::MIN_RCOND)?;
    let p = &dinv * j.transpose() * sinv;
    Ok(ContactProjection { dinv, p, j, s })
}

/// The affine dependence of `q''` on `(u, lambda)` with contacts enforced.
pub fn acceleration_affine(m: &dyn LagrangianModel, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<AccelAffine> {
    let cp = contact_projection(m, q)?;
    let gamma = &cp.dinv - &cp.p * &cp.j * &cp.dinv;
    let a0 = -(&gamma * m.drift(q, qdot)) - &cp.p * m.contact_bias(q, qdot);
    Ok(AccelAffine {
        a0,
        bm: &gamma * m.actuation(),
        cm: &gamma * m.couple_jacobian().transpose(),
    })
}

/// Accelerations and contact force.
#[derive(Clone, Debug, PartialEq)]
pub struct ContactSolution {
    pub qddot: DVector<f64>,
    pub force: DVector<f64>,
}

/// Solves the dynamics together with `J q'' + J' q' = 0` for `(q'', F)`.
pub fn eliminate_contact_force(
    m: &dyn LagrangianModel,
    q: &DVector<f64>,
    qdot: &DVector<f64>,
    u: &DVector<f64>,
    lambda_e: &DVector<f64>,
) -> Result<ContactSolution> {
    if u.len() != m.n_u() {
        return Err(Error::dim("u", m.n_u(), u.len()));
    }
    if lambda_e.len() != m.base_dim() {
        return Err(Error::dim("lambda", m.base_dim(), lambda_e.len()));
    }
    let cp = contact_projection(m, q)?;
    let rhs = -m.drift(q, qdot) + m.actuation() * u + m.couple_jacobian().transpose() * lambda_e;
    let free = &cp.dinv * &rhs;
    if cp.j.nrows() == 0 {
        return Ok(ContactSolution {
            qddot: free,
            force: DVector::zeros(0),
        });
    }
    let force = linalg::solve_square_vec(&cp.s, &(-m.contact_bias(q, qdot) - &cp.j * &free), "contact matrix J D^-1 J^T", linalg::MIN_RCOND)?;
    let qddot = free + &cp.dinv * cp.j.transpose() * &force;
    Ok(ContactSolution { qddot, force })
}

/// `(q', q'')` for the stacked state `(q, q')`.
pub fn state_derivative(m: &dyn LagrangianModel, state: &DVector<f64>, u: &DVector<f64>, lambda_e: &DVector<f64>) -> Result<DVector<f64>> {
    let n = m.n();
    if state.len() != 2 * n {
        return Err(Error::dim("mechanical state", 2 * n, state.len()));
    }
    let q = state.rows(0, n).into_owned();
    let qdot = state.rows(n, n).into_owned();
    let sol = eliminate_contact_force(m, &q, &qdot, u, lambda_e)?;
    Ok(linalg::vstack(&[&qdot, &sol.qddot]))
}

/// Rigid plastic impact through the given Jacobian:
/// `q'+ = (I - D^-1 J^T (J D^-1 J^T)^-1 J) q'-`.
pub fn plastic_impact_with(d: &DMatrix<f64>, j: &DMatrix<f64>, qdot_pre: &DVector<f64>) -> Result<DVector<f64>> {
    let dinv = linalg::solve_square(d, &DMatrix::identity(d.nrows(), d.nrows()), "mass matrix D", linalg::MIN_RCOND)?;
    let s = j * &dinv * j.transpose();
    let mult = linalg::solve_square_vec(&s, &(j * qdot_pre), "impact matrix J D^-1 J^T", linalg::MIN_RCOND)?;
    Ok(qdot_pre - dinv * j.transpose() * mult)
}

/// Plastic impact of `m` through its contact Jacobian.
pub fn plastic_impact(m: &dyn LagrangianModel, q: &DVector<f64>, qdot_pre: &DVector<f64>) -> Result<DVector<f64>> {
    plastic_impact_with(&m.mass_matrix(q), &m.contact_jacobian(q), qdot_pre)
}

#[cfg(test)]
mod tests;
