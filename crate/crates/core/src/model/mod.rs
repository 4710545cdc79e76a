//! The two-vertex coupled control system.
//!
//! Each vertex `i` carries internal states `x_i`, coupled states `z_i` and
//! inputs `u_i`:
//!
//! ```text
//! x_i' = f_i(x_i, z_i) + g_i(x_i, z_i) u_i + gb_e(x_i, z_i, z_j) lambda_e
//! z_i' = p_i(x_i, z_i) + q_i(x_i, z_i) u_i + qb_e(x_i, z_i, z_j) lambda_e
//! s.t. c_e(z_i, z_j) = z_i - z_j = 0,   lambda_e = -lambda_ebar
//! ```
//!
//! Vertex `i` always contributes through edge `e = (i, j)`; the other vertex
//! through `ebar = (j, i)`.

mod affine;
mod graph;

pub use affine::AffineSubsystem;
pub use graph::{CouplingGraph, Edge, PerVertex, Vertex};

use std::fmt;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg;

/// Dimensions of one subsystem.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Dims {
    pub n_x: usize,
    pub n_z: usize,
    pub n_u: usize,
    /// Coupling-input dimension. Mechanical models couple through forces on
    /// the base coordinates only, so this may be smaller than `n_z`.
    pub n_lambda: usize,
}

/// All dynamics maps of one vertex evaluated at a point.
#[derive(Clone, Debug, PartialEq)]
pub struct Terms {
    pub f: DVector<f64>,
    pub g: DMatrix<f64>,
    pub p: DVector<f64>,
    pub q: DMatrix<f64>,
    pub g_breve: DMatrix<f64>,
    pub q_breve: DMatrix<f64>,
}

impl Terms {
    fn check(&self, d: Dims) -> Result<()> {
        let shape = |m: &DMatrix<f64>| (m.nrows(), m.ncols());
        type Check<'a> = (&'a str, (usize, usize), (usize, usize));
        let checks: [Check; 6] = [
            ("f", (self.f.len(), 1), (d.n_x, 1)),
            ("g", shape(&self.g), (d.n_x, d.n_u)),
            ("p", (self.p.len(), 1), (d.n_z, 1)),
            ("q", shape(&self.q), (d.n_z, d.n_u)),
            ("g_breve", shape(&self.g_breve), (d.n_x, d.n_lambda)),
            ("q_breve", shape(&self.q_breve), (d.n_z, d.n_lambda)),
        ];
        for (name, got, want) in checks {
            if got != want {
                return Err(Error::dim(
                    name,
                    format!("{}x{}", want.0, want.1),
                    format!("{}x{}", got.0, got.1),
                ));
            }
        }
        Ok(())
    }
}

/// Dynamics of one vertex. Implementations must be pure: the same arguments
/// always produce the same terms.
pub trait SubsystemDynamics: Send + Sync {
    fn dims(&self) -> Dims;

    /// Evaluates `f, g, p, q` at `(x, z_own)` and `gb, qb` at
    /// `(x, z_own, z_other)`.
    fn terms(&self, x: &DVector<f64>, z_own: &DVector<f64>, z_other: &DVector<f64>) -> Result<Terms>;
}

/// Axis-aligned box.
#[derive(Clone, Debug, PartialEq)]
pub struct BoxSet {
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
}

impl BoxSet {
    pub fn unbounded(n: usize) -> Self {
        BoxSet {
            lower: DVector::from_element(n, f64::NEG_INFINITY),
            upper: DVector::from_element(n, f64::INFINITY),
        }
    }

    pub fn symmetric(bound: &[f64]) -> Self {
        let upper = DVector::from_column_slice(bound);
        BoxSet {
            lower: -upper.clone(),
            upper,
        }
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn contains(&self, v: &DVector<f64>) -> bool {
        v.len() == self.dim() && v.iter().zip(self.lower.iter().zip(self.upper.iter())).all(|(x, (l, u))| l <= x && x <= u)
    }
}

/// Admissible sets of one vertex, as boxes.
#[derive(Clone, Debug, PartialEq)]
pub struct AdmissibleSets {
    pub x: BoxSet,
    pub z: BoxSet,
    pub u: BoxSet,
}

impl AdmissibleSets {
    pub fn unbounded(d: Dims) -> Self {
        AdmissibleSets {
            x: BoxSet::unbounded(d.n_x),
            z: BoxSet::unbounded(d.n_z),
            u: BoxSet::unbounded(d.n_u),
        }
    }
}

/// A coupled control system on the two-vertex graph.
#[derive(Clone)]
pub struct CcsModel {
    graph: CouplingGraph,
    subsystems: PerVertex<Arc<dyn SubsystemDynamics>>,
    admissible: PerVertex<AdmissibleSets>,
}

impl fmt::Debug for CcsModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("CcsModel")
            .field("dims", &[self.dims(Vertex::One), self.dims(Vertex::Two)])
            .field("admissible", &self.admissible)
            .finish()
    }
}

impl CcsModel {
    pub fn new(one: Arc<dyn SubsystemDynamics>, two: Arc<dyn SubsystemDynamics>) -> Result<Self> {
        let (d1, d2) = (one.dims(), two.dims());
        if d1.n_z != d2.n_z {
            return Err(Error::dim("coupled state z", d1.n_z, d2.n_z));
        }
        if d1.n_lambda != d2.n_lambda {
            return Err(Error::dim("coupling input lambda", d1.n_lambda, d2.n_lambda));
        }
        if d1.n_lambda > d1.n_z {
            return Err(Error::dim("coupling input lambda", format!("<= {}", d1.n_z), d1.n_lambda));
        }
        Ok(CcsModel {
            graph: CouplingGraph,
            admissible: PerVertex::new(AdmissibleSets::unbounded(d1), AdmissibleSets::unbounded(d2)),
            subsystems: PerVertex::new(one, two),
        })
    }

    pub fn with_admissible(mut self, vertex: Vertex, sets: AdmissibleSets) -> Result<Self> {
        let d = self.dims(vertex);
        if sets.x.dim() != d.n_x || sets.z.dim() != d.n_z || sets.u.dim() != d.n_u {
            return Err(Error::dim("admissible sets", format!("{d:?}"), "mismatched box sizes"));
        }
        self.admissible[vertex] = sets;
        Ok(self)
    }

    pub fn graph(&self) -> CouplingGraph {
        self.graph
    }

    pub fn dims(&self, v: Vertex) -> Dims {
        self.subsystems[v].dims()
    }

    pub fn n_z(&self) -> usize {
        self.dims(Vertex::One).n_z
    }

    pub fn n_lambda(&self) -> usize {
        self.dims(Vertex::One).n_lambda
    }

    pub fn admissible(&self, v: Vertex) -> &AdmissibleSets {
        &self.admissible[v]
    }

    pub fn subsystem(&self, v: Vertex) -> &Arc<dyn SubsystemDynamics> {
        &self.subsystems[v]
    }

    /// Evaluates vertex `v`'s maps with shape validation.
    pub fn terms(&self, v: Vertex, x: &DVector<f64>, z_own: &DVector<f64>, z_other: &DVector<f64>) -> Result<Terms> {
        let d = self.dims(v);
        if x.len() != d.n_x {
            return Err(Error::dim("x", d.n_x, x.len()));
        }
        if z_own.len() != d.n_z || z_other.len() != d.n_z {
            return Err(Error::dim("z", d.n_z, z_own.len().max(z_other.len())));
        }
        let t = self.subsystems[v].terms(x, z_own, z_other)?;
        t.check(d)?;
        Ok(t)
    }

    /// Terms of `v` at a full state.
    pub fn terms_at(&self, v: Vertex, s: &FullState) -> Result<Terms> {
        self.terms(v, &s.x[v], &s.z[v], &s.z[v.other()])
    }
}

/// Internal and coupled states of both vertices.
#[derive(Clone, Debug, PartialEq)]
pub struct FullState {
    pub x: PerVertex<DVector<f64>>,
    pub z: PerVertex<DVector<f64>>,
}

impl FullState {
    /// Packs as `(x_1, z_1, x_2, z_2)`.
    pub fn to_vector(&self) -> DVector<f64> {
        linalg::vstack(&[&self.x[Vertex::One], &self.z[Vertex::One], &self.x[Vertex::Two], &self.z[Vertex::Two]])
    }

    pub fn from_vector(model: &CcsModel, v: &DVector<f64>) -> Result<Self> {
        let (d1, d2) = (model.dims(Vertex::One), model.dims(Vertex::Two));
        let n = d1.n_x + d1.n_z + d2.n_x + d2.n_z;
        if v.len() != n {
            return Err(Error::dim("full state", n, v.len()));
        }
        let seg = |a: usize, len: usize| v.rows(a, len).into_owned();
        Ok(FullState {
            x: PerVertex::new(seg(0, d1.n_x), seg(d1.n_x + d1.n_z, d2.n_x)),
            z: PerVertex::new(seg(d1.n_x, d1.n_z), seg(d1.n_x + d1.n_z + d2.n_x, d2.n_z)),
        })
    }
}

/// A full state together with the edge coupling inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct CcsState {
    pub state: FullState,
    /// `lambda[i]` is the input on the edge leaving vertex `i`.
    pub lambda: PerVertex<DVector<f64>>,
}

impl CcsState {
    /// Builds the state with `lambda_ebar = -lambda_e` for `e = (from, other)`.
    pub fn new(state: FullState, from: Vertex, lambda_e: DVector<f64>) -> Self {
        let mut lambda = PerVertex::new(lambda_e.clone(), lambda_e.clone());
        lambda[from.other()] = -lambda_e;
        CcsState { state, lambda }
    }

    pub fn is_antisymmetric(&self) -> bool {
        (&self.lambda[Vertex::One] + &self.lambda[Vertex::Two]).iter().all(|v| *v == 0.0)
    }
}

/// Right-hand side of one vertex of the coupled control system.
pub fn eval_rhs(
    model: &CcsModel,
    vertex: Vertex,
    x_i: &DVector<f64>,
    z_i: &DVector<f64>,
    z_j: &DVector<f64>,
    u_i: &DVector<f64>,
    lambda_e: &DVector<f64>,
) -> Result<(DVector<f64>, DVector<f64>)> {
    let d = model.dims(vertex);
    if u_i.len() != d.n_u {
        return Err(Error::dim("u", d.n_u, u_i.len()));
    }
    if lambda_e.len() != d.n_lambda {
        return Err(Error::dim("lambda", d.n_lambda, lambda_e.len()));
    }
    let t = model.terms(vertex, x_i, z_i, z_j)?;
    Ok(rhs_from_terms(&t, u_i, lambda_e))
}

pub(crate) fn rhs_from_terms(t: &Terms, u: &DVector<f64>, lambda: &DVector<f64>) -> (DVector<f64>, DVector<f64>) {
    let xdot = &t.f + &t.g * u + &t.g_breve * lambda;
    let zdot = &t.p + &t.q * u + &t.q_breve * lambda;
    (xdot, zdot)
}

/// The coupling constraint `c_e(z_i, z_j) = z_i - z_j`.
pub fn coupling_residual(z_i: &DVector<f64>, z_j: &DVector<f64>) -> Result<DVector<f64>> {
    if z_i.len() != z_j.len() {
        return Err(Error::dim("coupling residual", z_i.len(), z_j.len()));
    }
    Ok(z_i - z_j)
}

/// `c_e' = z_i' - z_j'` for `e = (i, j)`, using `lambda_ebar = -lambda_e`.
/// For `c = z_i - z_j` the constraint Jacobians are `I` and `-I`.
pub fn coupling_velocity_residual(
    model: &CcsModel,
    i: Vertex,
    state: &FullState,
    u: &PerVertex<DVector<f64>>,
    lambda_e: &DVector<f64>,
) -> Result<DVector<f64>> {
    let j = i.other();
    let (_, zdot_i) = eval_rhs(model, i, &state.x[i], &state.z[i], &state.z[j], &u[i], lambda_e)?;
    let (_, zdot_j) = eval_rhs(model, j, &state.x[j], &state.z[j], &state.z[i], &u[j], &(-lambda_e))?;
    Ok(zdot_i - zdot_j)
}

/// Canonical embedding `(x_i, z) -> (x, z)` with the other internal state set
/// to exactly zero.
pub fn embed(model: &CcsModel, x_i: &DVector<f64>, z: &PerVertex<DVector<f64>>, which: Vertex) -> FullState {
    let other = which.other();
    let mut x = PerVertex::new(DVector::zeros(0), DVector::zeros(0));
    x[which] = x_i.clone();
    x[other] = DVector::zeros(model.dims(other).n_x);
    FullState { x, z: z.clone() }
}

/// Inverse of [`embed`] on its image.
pub fn project(state: &FullState, which: Vertex) -> (DVector<f64>, PerVertex<DVector<f64>>) {
    (state.x[which].clone(), state.z.clone())
}

/// A state-feedback law for one vertex of the full system.
pub trait StateFeedback: Send + Sync {
    fn control(&self, state: &FullState) -> Result<DVector<f64>>;
}

impl<F> StateFeedback for F
where
    F: Fn(&FullState) -> Result<DVector<f64>> + Send + Sync,
{
    fn control(&self, state: &FullState) -> Result<DVector<f64>> {
        self(state)
    }
}

/// Computes the coupling input `lambda_e` for `e = (1, 2)` given the inputs.
pub trait LambdaSolver: Send + Sync {
    fn lambda(&self, model: &CcsModel, state: &FullState, u: &PerVertex<DVector<f64>>) -> Result<DVector<f64>>;
}

impl<F> LambdaSolver for F
where
    F: Fn(&CcsModel, &FullState, &PerVertex<DVector<f64>>) -> Result<DVector<f64>> + Send + Sync,
{
    fn lambda(&self, model: &CcsModel, state: &FullState, u: &PerVertex<DVector<f64>>) -> Result<DVector<f64>> {
        self(model, state, u)
    }
}

/// Evaluation of the closed-loop field at one state.
#[derive(Clone, Debug)]
pub struct ClosedLoopEval {
    pub derivative: FullState,
    pub u: PerVertex<DVector<f64>>,
    /// Input on edge `(1, 2)`.
    pub lambda_e: DVector<f64>,
}

/// The coupled dynamical system obtained by closing the loop with per-vertex
/// feedback and a rule for the coupling input.
#[derive(Clone)]
pub struct ClosedLoop {
    pub model: CcsModel,
    pub controllers: PerVertex<Arc<dyn StateFeedback>>,
    pub lambda_solver: Arc<dyn LambdaSolver>,
}

/// Builds the closed-loop vector field.
pub fn closed_loop_rhs(
    model: &CcsModel,
    controllers: PerVertex<Arc<dyn StateFeedback>>,
    lambda_solver: Arc<dyn LambdaSolver>,
) -> ClosedLoop {
    ClosedLoop {
        model: model.clone(),
        controllers,
        lambda_solver,
    }
}

impl ClosedLoop {
    pub fn eval(&self, s: &FullState) -> Result<ClosedLoopEval> {
        let u = PerVertex::new(
            self.controllers[Vertex::One].control(s)?,
            self.controllers[Vertex::Two].control(s)?,
        );
        let lambda_e = self.lambda_solver.lambda(&self.model, s, &u)?;
        let one = Vertex::One;
        let two = Vertex::Two;
        let (x1, z1) = eval_rhs(&self.model, one, &s.x[one], &s.z[one], &s.z[two], &u[one], &lambda_e)?;
        let (x2, z2) = eval_rhs(&self.model, two, &s.x[two], &s.z[two], &s.z[one], &u[two], &(-&lambda_e))?;
        Ok(ClosedLoopEval {
            derivative: FullState {
                x: PerVertex::new(x1, x2),
                z: PerVertex::new(z1, z2),
            },
            u,
            lambda_e,
        })
    }
}

#[cfg(test)]
mod tests;
