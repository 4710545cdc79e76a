use std::fmt;
use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use super::layout::{DecisionLayout, NodeVars, VarRef};
use crate::error::Result;
use crate::linalg;
use crate::mechanical::{plastic_impact, LagrangianModel, OutputSpec};
use crate::model::PerVertex;
use crate::reduction::{zero_invariance_residual, IsolatedModel};

fn z_pair(iso: &IsolatedModel, z_i: &DVector<f64>, z_j: &DVector<f64>) -> PerVertex<DVector<f64>> {
    let mut z = PerVertex::new(z_i.clone(), z_i.clone());
    z[iso.vertex().other()] = z_j.clone();
    z
}

/// Zero-dynamics invariance of the other vertex at one node, on the given
/// rows of `x_j'`: `f_j - gb_ebar lambda_e(u_i) + g_j u^Z_j` at `x_j = 0`.
pub fn zero_dynamics_rows(iso: &IsolatedModel, node: &NodeVars, rows: &[usize]) -> Result<DVector<f64>> {
    let pt = iso.relation().at(&node.x, &z_pair(iso, &node.z_i, &node.z_j))?;
    Ok(linalg::select_entries(&zero_invariance_residual(&pt, &node.u, &node.uz), rows))
}

/// Rows of `x_j'` that the zero-dynamics condition constrains at a point:
/// those kept by the coupling relation.
pub fn zero_rows(iso: &IsolatedModel, node: &NodeVars) -> Result<Vec<usize>> {
    let pt = iso.relation().at(&node.x, &z_pair(iso, &node.z_i, &node.z_j))?;
    let n_xj = pt.terms_j.f.len();
    Ok(pt.kept_rows.iter().copied().filter(|r| *r < n_xj).collect())
}

/// Isolated vector field at a packed `(x_i, z_i, z_j)`.
pub fn isolated_field(iso: &IsolatedModel, chi: &DVector<f64>, u: &DVector<f64>) -> Result<DVector<f64>> {
    iso.rhs_packed(chi, u)
}

/// `chi' - F(chi, u_i)` at one node.
pub fn node_dynamics_rows(iso: &IsolatedModel, node: &NodeVars) -> Result<DVector<f64>> {
    Ok(node.chi_dot() - isolated_field(iso, &node.chi(), &node.u)?)
}

/// Value and slope of the cubic Hermite interpolant at the subinterval
/// center.
pub fn hermite_center(
    a: &DVector<f64>,
    a_dot: &DVector<f64>,
    b: &DVector<f64>,
    b_dot: &DVector<f64>,
    h: f64,
) -> (DVector<f64>, DVector<f64>) {
    let center = 0.5 * (a + b) + (h / 8.0) * (a_dot - b_dot);
    let slope = -(1.5 / h) * (a - b) - 0.25 * (a_dot + b_dot);
    (center, slope)
}

/// Input used at the subinterval center.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControlAtCenter {
    /// `u^k`, as in `d(chi^k, chi^{k+1}, u^k)`. The node rows still use
    /// `u^{k+1}` at the right end, so no input signal reproduces the
    /// transcription exactly.
    LeftNode,
    /// `(u^k + u^{k+1}) / 2`, matching linear interpolation of the inputs.
    #[default]
    Average,
}

impl ControlAtCenter {
    pub fn input(&self, left: &NodeVars, right: &NodeVars) -> DVector<f64> {
        match self {
            ControlAtCenter::LeftNode => left.u.clone(),
            ControlAtCenter::Average => 0.5 * (&left.u + &right.u),
        }
    }

    /// Input at time `t` of a subinterval of length `h` when re-simulating.
    pub fn interpolate(&self, left: &DVector<f64>, right: &DVector<f64>, t: f64, h: f64) -> DVector<f64> {
        match self {
            ControlAtCenter::LeftNode => left.clone(),
            ControlAtCenter::Average => {
                let w = (t / h).clamp(0.0, 1.0);
                (1.0 - w) * left + w * right
            }
        }
    }
}

/// Collocation defect at the center of `[t^k, t^{k+1}]`.
pub fn collocation_defect(iso: &IsolatedModel, left: &NodeVars, right: &NodeVars, h: f64, center: ControlAtCenter) -> Result<DVector<f64>> {
    let (chi_c, chi_c_dot) = hermite_center(&left.chi(), &left.chi_dot(), &right.chi(), &right.chi_dot(), h);
    Ok(chi_c_dot - isolated_field(iso, &chi_c, &center.input(left, right))?)
}

pub type ResetFn = Arc<dyn Fn(&DVector<f64>) -> Result<DVector<f64>> + Send + Sync>;

/// Map applied to `(x_i, z_i)` at the end of the period.
#[derive(Clone, Default)]
pub enum ResetMap {
    #[default]
    Identity,
    Custom(ResetFn),
}

impl fmt::Debug for ResetMap {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ResetMap::Identity => write!(f, "Identity"),
            ResetMap::Custom(_) => write!(f, "Custom"),
        }
    }
}

impl ResetMap {
    pub fn apply(&self, s: &DVector<f64>) -> Result<DVector<f64>> {
        match self {
            ResetMap::Identity => Ok(s.clone()),
            ResetMap::Custom(f) => f(s),
        }
    }

    /// Plastic impact of a mechanical half through its contact Jacobian,
    /// expressed on `(x_i, z_i) = (y, y', xi, xi')`.
    pub fn plastic_impact(model: Arc<dyn LagrangianModel>, output: OutputSpec) -> Self {
        ResetMap::Custom(Arc::new(move |s: &DVector<f64>| {
            let ny = output.n_y();
            let nb = model.base_dim();
            let x = s.rows(0, 2 * ny).into_owned();
            let z = s.rows(2 * ny, 2 * nb).into_owned();
            let (q, qdot) = output.coordinates(&x, &z);
            let post = plastic_impact(model.as_ref(), &q, &qdot)?;
            let (xp, zp) = output.states(nb, &q, &post);
            Ok(linalg::vstack(&[&xp, &zp]))
        }))
    }
}

/// Pins one coupled coordinate at node 0 to remove the translation
/// invariance of periodic orbits.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhaseAnchor {
    pub coord: usize,
    pub value: f64,
}

/// Boundary rows: `reset(x_i^K, z_i^K) - (x_i^0, z_i^0)`, the coupling
/// constraint `z_i^0 - z_j^0` and the optional phase anchor.
pub fn boundary_rows(layout: &DecisionLayout, x: &DVector<f64>, reset: &ResetMap, anchor: Option<PhaseAnchor>) -> Result<DVector<f64>> {
    let first = layout.node(x, 0);
    let last = layout.node(x, layout.nodes - 1);
    let end = reset.apply(&linalg::vstack(&[&last.x, &last.z_i]))?;
    let start = linalg::vstack(&[&first.x, &first.z_i]);
    let mut rows = vec![end - start, &first.z_i - &first.z_j];
    if let Some(a) = anchor {
        rows.push(DVector::from_element(1, first.z_i[a.coord] - a.value));
    }
    Ok(linalg::vstack(&rows.iter().collect::<Vec<_>>()))
}

pub fn boundary_len(layout: &DecisionLayout, anchor: Option<PhaseAnchor>) -> usize {
    layout.n_x + 2 * layout.n_z + usize::from(anchor.is_some())
}

/// Per-node path inequalities, each written as `value >= 0`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum PathConstraint {
    /// `|v| <= bound` as two smooth rows.
    Amplitude { var: VarRef, bound: f64 },
    /// `|lambda_e[k]| <= bound` for every component.
    LambdaCeiling { bound: f64 },
    /// `v - min >= 0` (ground-clearance archetype).
    Clearance { var: VarRef, min: f64 },
    /// `mu F_n -|F_t| >= 0` on two coupling-input components.
    FrictionCone { mu: f64, normal: usize, tangent: usize },
}

impl PathConstraint {
    pub fn len(&self, n_lambda: usize) -> usize {
        match self {
            PathConstraint::Amplitude { .. } | PathConstraint::FrictionCone { .. } => 2,
            PathConstraint::LambdaCeiling { .. } => 2 * n_lambda,
            PathConstraint::Clearance { .. } => 1,
        }
    }
}

/// `(mu F_n - F_t, mu F_n + F_t)`; both nonnegative inside the cone.
pub fn friction_cone(mu: f64, normal: f64, tangent: f64) -> [f64; 2] {
    [mu * normal - tangent, mu * normal + tangent]
}

/// Stacked path inequalities at one node.
pub fn path_rows(iso: &IsolatedModel, node: &NodeVars, constraints: &[PathConstraint]) -> Result<DVector<f64>> {
    let mut out = Vec::new();
    let needs_lambda = constraints
        .iter()
        .any(|c| matches!(c, PathConstraint::LambdaCeiling { .. } | PathConstraint::FrictionCone { .. }));
    let lambda = if needs_lambda {
        let pt = iso.relation().at(&node.x, &z_pair(iso, &node.z_i, &node.z_j))?;
        pt.lambda_e(&node.u)
    } else {
        DVector::zeros(0)
    };
    for c in constraints {
        match *c {
            PathConstraint::Amplitude { var, bound } => {
                let v = node.get(var);
                out.extend([bound - v, bound + v]);
            }
            PathConstraint::LambdaCeiling { bound } => {
                for l in lambda.iter() {
                    out.extend([bound - l, bound + l]);
                }
            }
            PathConstraint::Clearance { var, min } => out.push(node.get(var) - min),
            PathConstraint::FrictionCone { mu, normal, tangent } => {
                out.extend(friction_cone(mu, lambda[normal], lambda[tangent]));
            }
        }
    }
    Ok(DVector::from_vec(out))
}

/// `x_i' + eps x_i` on the rows the input reaches.
pub fn contraction_rows(node: &NodeVars, eps: f64, rows: &[usize]) -> DVector<f64> {
    linalg::select_entries(&(&node.xdot + eps * &node.x), rows)
}
