use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::bezier::{bezier_full, mirror_coeffs, BezierEval};
use super::{acceleration_affine, LagrangianModel};
use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{CcsModel, Dims, SubsystemDynamics, Terms};

/// State-based phase: `tau = (xi[coord] - start) / (end - start)` clamped to
/// `[0, 1]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Phase {
    pub coord: usize,
    pub start: f64,
    pub end: f64,
}

impl Phase {
    /// `(tau, dtau/dxi[coord])`; the slope is zero where the clamp is active.
    pub fn eval(&self, xi: &DVector<f64>) -> (f64, f64) {
        let slope = 1.0 / (self.end - self.start);
        let raw = (xi[self.coord] - self.start) * slope;
        if (0.0..=1.0).contains(&raw) {
            (raw, slope)
        } else {
            (raw.clamp(0.0, 1.0), 0.0)
        }
    }
}

/// Virtual-constraint outputs `y = theta - y_d(tau(xi))` on the actuated
/// coordinates, with `y_d` a Bézier polynomial (one row of `alpha` per
/// output).
#[derive(Clone, Debug, PartialEq)]
pub struct OutputSpec {
    pub alpha: DMatrix<f64>,
    pub phase: Phase,
    /// Mirroring relation used to derive the other half's coefficients.
    pub mirror: DMatrix<f64>,
}

/// Desired outputs and the pieces of the output Jacobian that depend on the
/// base coordinates.
struct Desired {
    bez: BezierEval,
    /// `dy/dxi`, `n_y x base_dim`.
    jy_xi: DMatrix<f64>,
    dtau: f64,
}

impl OutputSpec {
    pub fn new(alpha: DMatrix<f64>, phase: Phase) -> Self {
        let n = alpha.nrows();
        OutputSpec {
            alpha,
            phase,
            mirror: DMatrix::identity(n, n),
        }
    }

    pub fn n_y(&self) -> usize {
        self.alpha.nrows()
    }

    pub fn degree(&self) -> usize {
        self.alpha.ncols().saturating_sub(1)
    }

    /// The spec of the other half: same phase, coefficients `M alpha`.
    pub fn mirrored(&self) -> Result<OutputSpec> {
        Ok(OutputSpec {
            alpha: mirror_coeffs(&self.alpha, &self.mirror)?,
            phase: self.phase,
            mirror: self.mirror.clone(),
        })
    }

    fn desired(&self, xi: &DVector<f64>) -> Desired {
        let (tau, dtau) = self.phase.eval(xi);
        let bez = bezier_full(&self.alpha, tau);
        let mut jy_xi = DMatrix::zeros(self.n_y(), xi.len());
        jy_xi.set_column(self.phase.coord, &(-dtau * &bez.d1));
        Desired { bez, jy_xi, dtau }
    }

    /// `y(q) = q[nb..] - y_d(tau(q[..nb]))`.
    pub fn y(&self, base_dim: usize, q: &DVector<f64>) -> DVector<f64> {
        let xi = q.rows(0, base_dim).into_owned();
        q.rows(base_dim, self.n_y()).into_owned() - self.desired(&xi).bez.value
    }

    /// `J_y = dy/dq = [dy/dxi, I]`.
    pub fn jacobian(&self, base_dim: usize, q: &DVector<f64>) -> DMatrix<f64> {
        let xi = q.rows(0, base_dim).into_owned();
        let d = self.desired(&xi);
        let mut j = DMatrix::zeros(self.n_y(), base_dim + self.n_y());
        j.view_mut((0, 0), (self.n_y(), base_dim)).copy_from(&d.jy_xi);
        j.view_mut((0, base_dim), (self.n_y(), self.n_y())).fill_with_identity();
        j
    }

    /// `J_y'(q, q') q'`.
    pub fn jacobian_bias(&self, base_dim: usize, q: &DVector<f64>, qdot: &DVector<f64>) -> DVector<f64> {
        let xi = q.rows(0, base_dim).into_owned();
        let d = self.desired(&xi);
        let v = qdot[self.phase.coord];
        -(d.dtau * d.dtau * v * v) * d.bez.d2
    }

    /// `(q, q')` from `x = (y, y')` and `z = (xi, xi')`.
    pub fn coordinates(&self, x: &DVector<f64>, z: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let (ny, nb) = (self.n_y(), z.len() / 2);
        let xi = z.rows(0, nb).into_owned();
        let xid = z.rows(nb, nb).into_owned();
        let d = self.desired(&xi);
        let theta = x.rows(0, ny) + &d.bez.value;
        let thetad = x.rows(ny, ny) - &d.jy_xi * &xid;
        (linalg::vstack(&[&xi, &theta]), linalg::vstack(&[&xid, &thetad]))
    }

    /// Inverse of [`OutputSpec::coordinates`].
    pub fn states(&self, base_dim: usize, q: &DVector<f64>, qdot: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
        let y = self.y(base_dim, q);
        let yd = self.jacobian(base_dim, q) * qdot;
        let z = linalg::vstack(&[&q.rows(0, base_dim).into_owned(), &qdot.rows(0, base_dim).into_owned()]);
        (linalg::vstack(&[&y, &yd]), z)
    }
}

/// One half of a split mechanical model, expressed in output coordinates
/// `x = (y, y')`, `z = (xi, xi')`.
#[derive(Clone, Debug)]
pub struct MechanicalSubsystem {
    pub model: Arc<dyn LagrangianModel>,
    pub output: OutputSpec,
}

impl MechanicalSubsystem {
    pub fn new(model: Arc<dyn LagrangianModel>, output: OutputSpec) -> Result<Self> {
        if output.n_y() != model.n_u() {
            return Err(Error::dim("outputs", model.n_u(), output.n_y()));
        }
        if output.phase.coord >= model.base_dim() {
            return Err(Error::dim("phase coordinate", format!("< {}", model.base_dim()), output.phase.coord));
        }
        Ok(MechanicalSubsystem { model, output })
    }

    /// Checks that `J_y B_bar` is invertible at `(q, q')`; the error names
    /// the output row with the weakest input authority.
    pub fn check_relative_degree(&self, q: &DVector<f64>, qdot: &DVector<f64>) -> Result<()> {
        let acc = acceleration_affine(self.model.as_ref(), q, qdot)?;
        let jy = self.output.jacobian(self.model.base_dim(), q);
        let decoupling = &jy * acc.bm;
        // Compare against the authority the outputs would have without contacts.
        let unconstrained = self.model.mass_matrix(q).try_inverse().map_or(0.0, |d| (&jy * d * self.model.actuation()).norm());
        let smin = decoupling.singular_values().min();
        if linalg::rcond(&decoupling) < linalg::MIN_RCOND || smin <= linalg::MIN_RCOND * unconstrained {
            let row = (0..decoupling.nrows())
                .min_by(|&a, &b| decoupling.row(a).norm().total_cmp(&decoupling.row(b).norm()))
                .unwrap_or(0);
            return Err(Error::RelativeDegree { row });
        }
        Ok(())
    }
}

impl SubsystemDynamics for MechanicalSubsystem {
    fn dims(&self) -> Dims {
        let nb = self.model.base_dim();
        Dims {
            n_x: 2 * self.output.n_y(),
            n_z: 2 * nb,
            n_u: self.model.n_u(),
            n_lambda: nb,
        }
    }

    fn terms(&self, x: &DVector<f64>, z_own: &DVector<f64>, _z_other: &DVector<f64>) -> Result<Terms> {
        let (ny, nb) = (self.output.n_y(), self.model.base_dim());
        let (q, qdot) = self.output.coordinates(x, z_own);
        let acc = acceleration_affine(self.model.as_ref(), &q, &qdot)?;
        let jy = self.output.jacobian(nb, &q);
        let bias = self.output.jacobian_bias(nb, &q, &qdot);
        let top = |v: DVector<f64>, extra: DVector<f64>| linalg::vstack(&[&v, &extra]);
        let lower = |m: DMatrix<f64>| linalg::vstack_mat(&[&DMatrix::zeros(m.nrows(), m.ncols()), &m]);
        let xi_rows = |m: &DMatrix<f64>| m.rows(0, nb).into_owned();
        Ok(Terms {
            f: top(x.rows(ny, ny).into_owned(), bias + &jy * &acc.a0),
            g: lower(&jy * &acc.bm),
            g_breve: lower(&jy * &acc.cm),
            p: top(z_own.rows(nb, nb).into_owned(), acc.a0.rows(0, nb).into_owned()),
            q: lower(xi_rows(&acc.bm)),
            q_breve: lower(xi_rows(&acc.cm)),
        })
    }
}

/// Builds the coupled control system of a front/rear split. The front half
/// is vertex 1.
pub fn to_ccs(
    m_front: Arc<dyn LagrangianModel>,
    m_rear: Arc<dyn LagrangianModel>,
    out_f: OutputSpec,
    out_r: OutputSpec,
) -> Result<CcsModel> {
    let front = MechanicalSubsystem::new(m_front, out_f)?;
    let rear = MechanicalSubsystem::new(m_rear, out_r)?;
    for half in [&front, &rear] {
        let n = half.model.n();
        half.check_relative_degree(&DVector::zeros(n), &DVector::zeros(n))?;
    }
    CcsModel::new(Arc::new(front), Arc::new(rear))
}
