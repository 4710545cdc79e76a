//! Coupling relations and the isolated control subsystem.
//!
//! Restricting vertex `j` to its zero dynamics (`x_j = 0`) and differentiating
//! the coupling constraint gives a square linear system in `(u_j, lambda)`:
//!
//! ```text
//! [ g_j(0,z_j)   gb_ebar(0,z)          ] [ u_j      ]   [ -f_j(0,z_j)                  ]
//! [ q_j(0,z_j)   qb_e(x_i,z)+qb_ebar(0,z)] [ lambda_ebar ] = [ p_i - p_j(0,z_j) + q_i u_i ]
//! ```
//!
//! Its solution is affine in `u_i`, which is the coupling relation
//! `lambda_e = A_e u_i + b_e` together with `u_j = uz_a u_i + uz_b`. Note the
//! unknown in the second block row is the input on the reversed edge; the
//! relation reports `lambda_e = -lambda_ebar`.
//!
//! Rows of the block matrix that are identically zero (velocity rows of
//! relative-degree-two outputs, position rows of mechanical coupled states)
//! carry no information about the unknowns and are dropped before solving.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{self, MIN_RCOND};
use crate::model::{coupling_residual, CcsModel, FullState, PerVertex, Terms, Vertex};

/// The block matrix of the zero-dynamics / coupling solve, before row
/// reduction.
pub fn qbreve_matrix(model: &CcsModel, i: Vertex, x_i: &DVector<f64>, z: &PerVertex<DVector<f64>>) -> Result<DMatrix<f64>> {
    let (ti, tj) = endpoint_terms(model, i, x_i, z)?;
    Ok(assemble_qbreve(&ti, &tj))
}

fn endpoint_terms(model: &CcsModel, i: Vertex, x_i: &DVector<f64>, z: &PerVertex<DVector<f64>>) -> Result<(Terms, Terms)> {
    let j = i.other();
    let ti = model.terms(i, x_i, &z[i], &z[j])?;
    let tj = model.terms(j, &DVector::zeros(model.dims(j).n_x), &z[j], &z[i])?;
    Ok((ti, tj))
}

fn assemble_qbreve(ti: &Terms, tj: &Terms) -> DMatrix<f64> {
    linalg::block2(&tj.g, &tj.g_breve, &tj.q, &(&ti.q_breve + &tj.q_breve))
}

/// The coupling relation evaluated at one point `(x_i, z)`.
#[derive(Clone, Debug)]
pub struct RelationPoint {
    pub vertex: Vertex,
    /// Terms of the isolated vertex at `(x_i, z_i, z_j)`.
    pub terms_i: Terms,
    /// Terms of the other vertex at `(0, z_j, z_i)`.
    pub terms_j: Terms,
    pub a_e: DMatrix<f64>,
    pub b_e: DVector<f64>,
    pub uz_a: DMatrix<f64>,
    pub uz_b: DVector<f64>,
    /// Rows of the block system that were kept (indices into `x_j` rows
    /// followed by `z` rows).
    pub kept_rows: Vec<usize>,
    pub rcond: f64,
}

impl RelationPoint {
    pub fn lambda_e(&self, u_i: &DVector<f64>) -> DVector<f64> {
        &self.a_e * u_i + &self.b_e
    }

    pub fn uz_j(&self, u_i: &DVector<f64>) -> DVector<f64> {
        &self.uz_a * u_i + &self.uz_b
    }

    /// `f^Z_i = f_i + gb_e b_e`.
    pub fn fz_i(&self) -> DVector<f64> {
        &self.terms_i.f + &self.terms_i.g_breve * &self.b_e
    }

    /// `g^Z_i = g_i + gb_e A_e`.
    pub fn gz_i(&self) -> DMatrix<f64> {
        &self.terms_i.g + &self.terms_i.g_breve * &self.a_e
    }

    pub fn pz_i(&self) -> DVector<f64> {
        &self.terms_i.p + &self.terms_i.q_breve * &self.b_e
    }

    pub fn qz_i(&self) -> DMatrix<f64> {
        &self.terms_i.q + &self.terms_i.q_breve * &self.a_e
    }

    /// `p^Z_j = p_j + q_j u^Z_j - qb_ebar b_e`, with `u^Z_j` evaluated at the
    /// actual `u_i`.
    pub fn pz_j(&self, u_i: &DVector<f64>) -> DVector<f64> {
        &self.terms_j.p + &self.terms_j.q * self.uz_j(u_i) - &self.terms_j.q_breve * &self.b_e
    }

    /// `q^Z_j = -qb_ebar A_e`.
    pub fn qz_j(&self) -> DMatrix<f64> {
        -(&self.terms_j.q_breve * &self.a_e)
    }

    /// `f^Z_j = f_j - gb_ebar b_e` at `x_j = 0`.
    pub fn fz_j(&self) -> DVector<f64> {
        &self.terms_j.f - &self.terms_j.g_breve * &self.b_e
    }

    /// `g^Z_j = g_j - gb_ebar A_e` at `x_j = 0`.
    pub fn gz_j(&self) -> DMatrix<f64> {
        &self.terms_j.g - &self.terms_j.g_breve * &self.a_e
    }
}

struct Stacked {
    matrix: DMatrix<f64>,
    bias: DVector<f64>,
    input: DMatrix<f64>,
    kept: Vec<usize>,
}

fn stacked(ti: &Terms, tj: &Terms) -> Result<Stacked> {
    let full = assemble_qbreve(ti, tj);
    let bias = linalg::vstack(&[&(-&tj.f), &(&ti.p - &tj.p)]);
    let input = linalg::vstack_mat(&[&DMatrix::zeros(tj.f.len(), ti.q.ncols()), &ti.q]);
    let kept = linalg::nonzero_rows(&full);
    let unknowns = full.ncols();
    if kept.len() != unknowns {
        return Err(Error::dim(
            "coupling relation system (rows kept after dropping zero rows vs unknowns u_j, lambda)",
            unknowns,
            kept.len(),
        ));
    }
    Ok(Stacked {
        matrix: linalg::select_rows(&full, &kept),
        bias: linalg::select_entries(&bias, &kept),
        input: linalg::select_rows(&input, &kept),
        kept,
    })
}

/// Solves for the zero-dynamics input of the other vertex and the coupling
/// input `lambda_e` on edge `e = (i, j)`.
pub fn coupling_solve(
    model: &CcsModel,
    i: Vertex,
    x_i: &DVector<f64>,
    z: &PerVertex<DVector<f64>>,
    u_i: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let (ti, tj) = endpoint_terms(model, i, x_i, z)?;
    if u_i.len() != ti.q.ncols() {
        return Err(Error::dim("u_i", ti.q.ncols(), u_i.len()));
    }
    let sys = stacked(&ti, &tj)?;
    let rhs = &sys.bias + &sys.input * u_i;
    let w = linalg::solve_square_vec(&sys.matrix, &rhs, "coupling matrix Q_e", MIN_RCOND)?;
    let n_uj = tj.g.ncols();
    let uz = w.rows(0, n_uj).into_owned();
    let lambda_e = -w.rows(n_uj, w.len() - n_uj).into_owned();
    Ok((uz, lambda_e))
}

/// The coupling relation for isolated vertex `i`, evaluated pointwise.
#[derive(Clone, Debug)]
pub struct CouplingRelation {
    model: CcsModel,
    vertex: Vertex,
}

pub fn build_relation(model: &CcsModel, i: Vertex) -> CouplingRelation {
    CouplingRelation {
        model: model.clone(),
        vertex: i,
    }
}

impl CouplingRelation {
    pub fn vertex(&self) -> Vertex {
        self.vertex
    }

    pub fn model(&self) -> &CcsModel {
        &self.model
    }

    /// Evaluates `A_e, b_e` and the zero-dynamics input maps at `(x_i, z)`.
    /// The bias comes from the solve at `u_i = 0`, the columns from unit
    /// inputs, all against one factorization.
    pub fn at(&self, x_i: &DVector<f64>, z: &PerVertex<DVector<f64>>) -> Result<RelationPoint> {
        let (ti, tj) = endpoint_terms(&self.model, self.vertex, x_i, z)?;
        let sys = stacked(&ti, &tj)?;
        let n_ui = ti.q.ncols();
        let mut rhs = DMatrix::zeros(sys.bias.len(), n_ui + 1);
        rhs.set_column(0, &sys.bias);
        for k in 0..n_ui {
            rhs.set_column(k + 1, &sys.input.column(k));
        }
        let rcond = linalg::rcond(&sys.matrix);
        let w = linalg::solve_square(&sys.matrix, &rhs, "coupling matrix Q_e", MIN_RCOND)?;
        let n_uj = tj.g.ncols();
        let n_l = w.nrows() - n_uj;
        Ok(RelationPoint {
            vertex: self.vertex,
            uz_b: w.view((0, 0), (n_uj, 1)).column(0).into_owned(),
            uz_a: w.view((0, 1), (n_uj, n_ui)).into_owned(),
            b_e: -w.view((n_uj, 0), (n_l, 1)).column(0).into_owned(),
            a_e: -w.view((n_uj, 1), (n_l, n_ui)).into_owned(),
            kept_rows: sys.kept,
            rcond,
            terms_i: ti,
            terms_j: tj,
        })
    }
}

/// Residual of the zero-dynamics invariance condition for the other vertex,
/// `f^Z_j + g^Z_j u_i + g_j (u^Z_j - u_i)`, written out as
/// `f_j - gb_ebar (A_e u_i + b_e) + g_j u^Z_j` so that `u_i` and `u^Z_j` may
/// have different sizes.
pub fn zero_invariance_residual(point: &RelationPoint, u_i: &DVector<f64>, uz_j: &DVector<f64>) -> DVector<f64> {
    let tj = &point.terms_j;
    &tj.f - &tj.g_breve * point.lambda_e(u_i) + &tj.g * uz_j
}

/// Derivatives of the isolated subsystem at one point.
#[derive(Clone, Debug)]
pub struct IsolatedRhs {
    pub xdot_i: DVector<f64>,
    pub zdot_i: DVector<f64>,
    pub zdot_j: DVector<f64>,
    pub lambda_e: DVector<f64>,
    pub uz_j: DVector<f64>,
}

/// The isolated control subsystem of vertex `i`: state `(x_i, z_i, z_j)`,
/// input `u_i`, with `lambda` eliminated by the coupling relation.
#[derive(Clone, Debug)]
pub struct IsolatedModel {
    relation: CouplingRelation,
}

impl IsolatedModel {
    pub fn new(model: &CcsModel, i: Vertex) -> Self {
        IsolatedModel {
            relation: build_relation(model, i),
        }
    }

    pub fn model(&self) -> &CcsModel {
        self.relation.model()
    }

    pub fn vertex(&self) -> Vertex {
        self.relation.vertex()
    }

    pub fn relation(&self) -> &CouplingRelation {
        &self.relation
    }

    pub fn n_x(&self) -> usize {
        self.model().dims(self.vertex()).n_x
    }

    pub fn n_z(&self) -> usize {
        self.model().n_z()
    }

    pub fn n_u(&self) -> usize {
        self.model().dims(self.vertex()).n_u
    }

    pub fn n_uz(&self) -> usize {
        self.model().dims(self.vertex().other()).n_u
    }

    /// Length of the packed state `(x_i, z_i, z_j)`.
    pub fn n_state(&self) -> usize {
        self.n_x() + 2 * self.n_z()
    }

    pub fn pack(&self, x_i: &DVector<f64>, z: &PerVertex<DVector<f64>>) -> DVector<f64> {
        let i = self.vertex();
        linalg::vstack(&[x_i, &z[i], &z[i.other()]])
    }

    pub fn unpack(&self, s: &DVector<f64>) -> (DVector<f64>, PerVertex<DVector<f64>>) {
        let (nx, nz) = (self.n_x(), self.n_z());
        let i = self.vertex();
        let x = s.rows(0, nx).into_owned();
        let mut z = PerVertex::new(DVector::zeros(0), DVector::zeros(0));
        z[i] = s.rows(nx, nz).into_owned();
        z[i.other()] = s.rows(nx + nz, nz).into_owned();
        (x, z)
    }

    pub fn rhs(&self, x_i: &DVector<f64>, z: &PerVertex<DVector<f64>>, u_i: &DVector<f64>) -> Result<IsolatedRhs> {
        let pt = self.relation.at(x_i, z)?;
        Ok(Self::rhs_at(&pt, x_i, u_i))
    }

    /// Isolated right-hand side from an already evaluated relation.
    pub fn rhs_at(pt: &RelationPoint, _x_i: &DVector<f64>, u_i: &DVector<f64>) -> IsolatedRhs {
        IsolatedRhs {
            xdot_i: pt.fz_i() + pt.gz_i() * u_i,
            zdot_i: pt.pz_i() + pt.qz_i() * u_i,
            zdot_j: pt.pz_j(u_i) + pt.qz_j() * u_i,
            lambda_e: pt.lambda_e(u_i),
            uz_j: pt.uz_j(u_i),
        }
    }

    /// Packed derivative of the packed state.
    pub fn rhs_packed(&self, s: &DVector<f64>, u_i: &DVector<f64>) -> Result<DVector<f64>> {
        let (x, z) = self.unpack(s);
        let r = self.rhs(&x, &z, u_i)?;
        Ok(linalg::vstack(&[&r.xdot_i, &r.zdot_i, &r.zdot_j]))
    }

    /// Embeds `(x_i, z)` into the full state with `x_j = 0`.
    pub fn embed(&self, x_i: &DVector<f64>, z: &PerVertex<DVector<f64>>) -> FullState {
        crate::model::embed(self.model(), x_i, z, self.vertex())
    }
}

pub fn isolated_rhs(
    iso: &IsolatedModel,
    x_i: &DVector<f64>,
    z_i: &DVector<f64>,
    z_j: &DVector<f64>,
    u_i: &DVector<f64>,
) -> Result<IsolatedRhs> {
    let i = iso.vertex();
    let mut z = PerVertex::new(z_i.clone(), z_i.clone());
    z[i.other()] = z_j.clone();
    iso.rhs(x_i, &z, u_i)
}

/// `c_e(z)` and `c_e'` under the isolated model's relation-derived inputs.
pub fn manifold_residuals(
    iso: &IsolatedModel,
    x_i: &DVector<f64>,
    z: &PerVertex<DVector<f64>>,
    u_i: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let i = iso.vertex();
    let c = coupling_residual(&z[i], &z[i.other()])?;
    let r = iso.rhs(x_i, z, u_i)?;
    Ok((c, r.zdot_i - r.zdot_j))
}

#[cfg(test)]
mod tests;
