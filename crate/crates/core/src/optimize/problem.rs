use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::constraints::{
    zero_rows, zero_dynamics_rows, node_dynamics_rows, collocation_defect, path_rows, boundary_len, boundary_rows, contraction_rows, ControlAtCenter, PathConstraint,
    PhaseAnchor, ResetMap,
};
use super::cost::{CostKind, RunningCost};
use super::layout::{Block, DecisionLayout, Grid, NodeVars, VarRef};
use super::solver::NlpFunctions;
use crate::error::{Error, Result};
use crate::fd;
use crate::linalg;
use crate::model::PerVertex;
use crate::reduction::IsolatedModel;
use crate::simulate::{periodicity_residual, reconstruct_full, rk4_step_t, StateLayout, Trajectory, TrajectoryMeta};

/// A node variable held at a value through equal bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NodeFix {
    pub node: usize,
    pub var: VarRef,
    pub value: f64,
}

/// Everything but the model that defines a periodic-orbit problem.
#[derive(Clone, Debug)]
pub struct ProblemSpec {
    pub grid: Grid,
    pub free_period: bool,
    /// Bounds on `T` when it is free.
    pub period_bounds: (f64, f64),
    pub cost: CostKind,
    pub path: Vec<PathConstraint>,
    pub reset: ResetMap,
    pub anchor: Option<PhaseAnchor>,
    pub center: ControlAtCenter,
    /// Optional `x_i' + eps x_i = 0` rows at every node.
    pub contraction: Option<f64>,
    pub fixes: Vec<NodeFix>,
    pub fd_step: f64,
}

impl ProblemSpec {
    pub fn new(grid: Grid) -> Self {
        ProblemSpec {
            grid,
            free_period: false,
            period_bounds: (0.2 * grid.period, 5.0 * grid.period),
            cost: CostKind::default(),
            path: Vec::new(),
            reset: ResetMap::Identity,
            anchor: Some(PhaseAnchor { coord: 0, value: 0.0 }),
            center: ControlAtCenter::default(),
            contraction: None,
            fixes: Vec::new(),
            fd_step: fd::DEFAULT_STEP,
        }
    }
}

/// Which constraint family a block belongs to, and where.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockKind {
    ZeroDynamics(usize),
    NodeDynamics(usize),
    Defect(usize),
    Path(usize),
    Boundary,
    Contraction(usize),
}

/// A constraint block: its rows in the stacked residual and the decision
/// variables it depends on.
#[derive(Clone, Debug, PartialEq)]
pub struct ConstraintBlock {
    pub kind: BlockKind,
    pub offset: usize,
    pub len: usize,
    pub cols: Vec<usize>,
}

/// A variable whose initial value lies outside its bounds.
#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct BoundViolation {
    pub index: usize,
    pub value: f64,
    pub lower: f64,
    pub upper: f64,
}

/// The transcribed periodic-orbit NLP of an isolated subsystem.
#[derive(Clone, Debug)]
pub struct NlpProblem {
    pub iso: IsolatedModel,
    pub spec: ProblemSpec,
    pub layout: DecisionLayout,
    pub lower: DVector<f64>,
    pub upper: DVector<f64>,
    pub zero_rows: Vec<usize>,
    pub actuated_rows: Vec<usize>,
    pub eq_blocks: Vec<ConstraintBlock>,
    pub ineq_blocks: Vec<ConstraintBlock>,
    cost: RunningCost,
    n_eq: usize,
    n_ineq: usize,
}

fn set_box(lower: &mut DVector<f64>, upper: &mut DVector<f64>, start: usize, b: &crate::model::BoxSet) {
    lower.rows_mut(start, b.dim()).copy_from(&b.lower);
    upper.rows_mut(start, b.dim()).copy_from(&b.upper);
}

/// Builds the NLP: zero-dynamics and node-dynamics rows at every node,
/// collocation defects per interval, variable boxes and fixes, path
/// inequalities and the boundary rows.
pub fn assemble(iso: &IsolatedModel, spec: ProblemSpec) -> Result<NlpProblem> {
    let grid = Grid::new(spec.grid.k, spec.grid.period)?;
    let layout = DecisionLayout::new(iso, &grid, spec.free_period);
    let n = layout.len();
    let i = iso.vertex();
    let model = iso.model();

    let mut lower = DVector::from_element(n, f64::NEG_INFINITY);
    let mut upper = DVector::from_element(n, f64::INFINITY);
    let (adm_i, adm_j) = (model.admissible(i), model.admissible(i.other()));
    for node in 0..layout.nodes {
        set_box(&mut lower, &mut upper, layout.offset(node, Block::X), &adm_i.x);
        set_box(&mut lower, &mut upper, layout.offset(node, Block::Zi), &adm_i.z);
        set_box(&mut lower, &mut upper, layout.offset(node, Block::Zj), &adm_j.z);
        set_box(&mut lower, &mut upper, layout.offset(node, Block::U), &adm_i.u);
        set_box(&mut lower, &mut upper, layout.offset(node, Block::Uz), &adm_j.u);
    }
    if let Some(t) = layout.period_index() {
        lower[t] = spec.period_bounds.0;
        upper[t] = spec.period_bounds.1;
    }
    for f in &spec.fixes {
        if f.node >= layout.nodes || f.var.index >= layout.block_len(f.var.block) {
            return Err(Error::Config(format!("fix {f:?} is outside the decision layout")));
        }
        let idx = layout.index(f.node, f.var);
        lower[idx] = f.value;
        upper[idx] = f.value;
    }
    if let Some(a) = spec.anchor {
        if a.coord >= layout.n_z {
            return Err(Error::dim("phase anchor coordinate", format!("< {}", layout.n_z), a.coord));
        }
    }

    // Row structure is read off the reference guess.
    let reference = reference_node(&layout, spec.anchor);
    let kept = zero_rows(iso, &reference)?;
    let pt = iso.relation().at(&reference.x, &PerVertex::new(reference.z_i.clone(), reference.z_j.clone()))?;
    let actuated_rows = linalg::nonzero_rows(&pt.gz_i());

    let mut eq_blocks = Vec::new();
    let mut offset = 0;
    let push = |blocks: &mut Vec<ConstraintBlock>, offset: &mut usize, kind, len, cols: Vec<usize>| {
        blocks.push(ConstraintBlock {
            kind,
            offset: *offset,
            len,
            cols,
        });
        *offset += len;
    };
    let period_col: Vec<usize> = layout.period_index().into_iter().collect();
    let nx2z = layout.n_x + 2 * layout.n_z;
    for node in 0..layout.nodes {
        let cols: Vec<usize> = layout.node_indices(node).collect();
        push(&mut eq_blocks, &mut offset, BlockKind::ZeroDynamics(node), kept.len(), cols.clone());
        push(&mut eq_blocks, &mut offset, BlockKind::NodeDynamics(node), nx2z, cols);
    }
    for k in 0..grid.k {
        let cols: Vec<usize> = layout.node_indices(k).chain(layout.node_indices(k + 1)).chain(period_col.iter().copied()).collect();
        push(&mut eq_blocks, &mut offset, BlockKind::Defect(k), nx2z, cols);
    }
    let boundary_cols: Vec<usize> = layout.node_indices(0).chain(layout.node_indices(layout.nodes - 1)).collect();
    push(&mut eq_blocks, &mut offset, BlockKind::Boundary, boundary_len(&layout, spec.anchor), boundary_cols);
    if spec.contraction.is_some() {
        for node in 0..layout.nodes {
            push(&mut eq_blocks, &mut offset, BlockKind::Contraction(node), actuated_rows.len(), layout.node_indices(node).collect());
        }
    }
    let n_eq = offset;

    let n_lambda = model.n_lambda();
    let per_node: usize = spec.path.iter().map(|c| c.len(n_lambda)).sum();
    let mut ineq_blocks = Vec::new();
    let mut ioff = 0;
    if per_node > 0 {
        for node in 0..layout.nodes {
            push(&mut ineq_blocks, &mut ioff, BlockKind::Path(node), per_node, layout.node_indices(node).collect());
        }
    }

    let cost = RunningCost::new(spec.cost, &layout, grid.k, grid.step());
    Ok(NlpProblem {
        iso: iso.clone(),
        layout,
        lower,
        upper,
        zero_rows: kept,
        actuated_rows,
        eq_blocks,
        ineq_blocks,
        cost,
        n_eq,
        n_ineq: ioff,
        spec,
    })
}

fn reference_node(layout: &DecisionLayout, anchor: Option<PhaseAnchor>) -> NodeVars {
    let mut z = DVector::zeros(layout.n_z);
    if let Some(a) = anchor {
        z[a.coord] = a.value;
    }
    NodeVars {
        x: DVector::zeros(layout.n_x),
        xdot: DVector::zeros(layout.n_x),
        z_i: z.clone(),
        z_i_dot: DVector::zeros(layout.n_z),
        z_j: z,
        z_j_dot: DVector::zeros(layout.n_z),
        u: DVector::zeros(layout.n_u),
        uz: DVector::zeros(layout.n_uz),
    }
}

impl NlpProblem {
    pub fn grid(&self) -> Grid {
        self.spec.grid
    }

    pub fn n_eq(&self) -> usize {
        self.n_eq
    }

    pub fn n_ineq(&self) -> usize {
        self.n_ineq
    }

    pub fn step(&self, x: &DVector<f64>) -> f64 {
        self.period(x) / self.spec.grid.k as f64
    }

    pub fn period(&self, x: &DVector<f64>) -> f64 {
        self.layout.period_index().map_or(self.spec.grid.period, |i| x[i])
    }

    pub fn cost_kind(&self) -> CostKind {
        self.cost.kind()
    }

    /// Residual of one block.
    pub fn eval_block(&self, kind: BlockKind, x: &DVector<f64>) -> Result<DVector<f64>> {
        let node = |k| self.layout.node(x, k);
        match kind {
            BlockKind::ZeroDynamics(k) => zero_dynamics_rows(&self.iso, &node(k), &self.zero_rows),
            BlockKind::NodeDynamics(k) => node_dynamics_rows(&self.iso, &node(k)),
            BlockKind::Defect(k) => collocation_defect(&self.iso, &node(k), &node(k + 1), self.step(x), self.spec.center),
            BlockKind::Path(k) => path_rows(&self.iso, &node(k), &self.spec.path),
            BlockKind::Boundary => boundary_rows(&self.layout, x, &self.spec.reset, self.spec.anchor),
            BlockKind::Contraction(k) => Ok(contraction_rows(&node(k), self.spec.contraction.unwrap_or(0.0), &self.actuated_rows)),
        }
        .map_err(|e| match kind {
            BlockKind::Boundary => e,
            BlockKind::ZeroDynamics(k) | BlockKind::NodeDynamics(k) | BlockKind::Defect(k) | BlockKind::Path(k) | BlockKind::Contraction(k) => {
                e.at_time(self.spec.grid.times()[k])
            }
        })
    }

    /// Central-difference Jacobian of one block over its own columns,
    /// scattered into a `len x n` matrix.
    pub fn block_jacobian(&self, block: &ConstraintBlock, x: &DVector<f64>, step: f64) -> Result<DMatrix<f64>> {
        let mut f = |v: &DVector<f64>| self.eval_block(block.kind, v);
        let cols = fd::jacobian_columns(&mut f, x, &block.cols, step)?;
        let mut out = DMatrix::zeros(block.len, x.len());
        for (c, &j) in block.cols.iter().enumerate() {
            out.set_column(j, &cols.column(c));
        }
        Ok(out)
    }

    fn stack(&self, blocks: &[ConstraintBlock], total: usize, x: &DVector<f64>) -> Result<DVector<f64>> {
        let mut out = DVector::zeros(total);
        for b in blocks {
            let r = self.eval_block(b.kind, x)?;
            if r.len() != b.len {
                return Err(Error::dim(format!("{:?} residual", b.kind), b.len, r.len()));
            }
            out.rows_mut(b.offset, b.len).copy_from(&r);
        }
        Ok(out)
    }

    fn stack_jacobian(&self, blocks: &[ConstraintBlock], total: usize, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        let mut out = DMatrix::zeros(total, x.len());
        for b in blocks {
            let mut f = |v: &DVector<f64>| self.eval_block(b.kind, v);
            let cols = fd::jacobian_columns(&mut f, x, &b.cols, self.spec.fd_step)?;
            for (c, &j) in b.cols.iter().enumerate() {
                out.view_mut((b.offset, j), (b.len, 1)).copy_from(&cols.column(c));
            }
        }
        Ok(out)
    }

    /// Variables of `x` outside their bounds.
    pub fn bound_violations(&self, x: &DVector<f64>) -> Vec<BoundViolation> {
        (0..x.len())
            .filter(|&i| x[i] < self.lower[i] || x[i] > self.upper[i])
            .map(|i| BoundViolation {
                index: i,
                value: x[i],
                lower: self.lower[i],
                upper: self.upper[i],
            })
            .collect()
    }

    /// Small sinusoid on the internal states, coupled states at the anchor
    /// and at rest, zero inputs, and fixed variables at their values.
    pub fn initial_guess(&self, amplitude: f64) -> DVector<f64> {
        let l = &self.layout;
        let period = self.spec.grid.period;
        let w = 2.0 * std::f64::consts::PI / period;
        let half = l.n_x / 2;
        let reference = reference_node(l, self.spec.anchor);
        let nodes: Vec<NodeVars> = self
            .spec
            .grid
            .times()
            .iter()
            .map(|&t| {
                let mut n = reference.clone();
                let (s, c) = ((w * t).sin(), (w * t).cos());
                if l.n_x.is_multiple_of(2) {
                    for r in 0..half {
                        n.x[r] = amplitude * s;
                        n.x[half + r] = amplitude * w * c;
                        n.xdot[r] = amplitude * w * c;
                        n.xdot[half + r] = -amplitude * w * w * s;
                    }
                } else {
                    n.x.fill(amplitude * s);
                    n.xdot.fill(amplitude * w * c);
                }
                n
            })
            .collect();
        let mut x = l.pack(&nodes, Some(period));
        for f in &self.spec.fixes {
            x[l.index(f.node, f.var)] = f.value;
        }
        x
    }

    /// Samples a trajectory of the isolated model onto the grid. Node
    /// derivatives come from the isolated field and `u^Z_j` from the
    /// relation.
    pub fn sample_trajectory(&self, traj: &Trajectory) -> Result<DVector<f64>> {
        let times = self.spec.grid.times();
        let mut nodes = Vec::with_capacity(times.len());
        let l = &self.layout;
        for t in times {
            let k = traj
                .times
                .iter()
                .position(|s| (s - t).abs() <= 1e-9 * t.abs().max(1.0))
                .ok_or_else(|| Error::GridMismatch(format!("no sample at t = {t}")))?;
            let s = &traj.states[k];
            let u = traj.inputs[k].rows(0, l.n_u).into_owned();
            let (x, z) = self.iso.unpack(s);
            let i = self.iso.vertex();
            let r = self.iso.rhs(&x, &z, &u)?;
            nodes.push(NodeVars {
                x,
                xdot: r.xdot_i,
                z_i: z[i].clone(),
                z_i_dot: r.zdot_i,
                z_j: z[i.other()].clone(),
                z_j_dot: r.zdot_j,
                u,
                uz: r.uz_j,
            });
        }
        Ok(l.pack(&nodes, Some(self.spec.grid.period)))
    }
}

impl NlpFunctions for NlpProblem {
    fn n(&self) -> usize {
        self.layout.len()
    }

    fn lower(&self) -> &DVector<f64> {
        &self.lower
    }

    fn upper(&self) -> &DVector<f64> {
        &self.upper
    }

    fn cost(&self, x: &DVector<f64>) -> Result<f64> {
        Ok(self.cost.value(x))
    }

    fn cost_gradient(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.cost.gradient(x))
    }

    fn cost_hessian(&self, x: &DVector<f64>) -> Option<DMatrix<f64>> {
        Some(self.cost.hessian(x))
    }

    fn eq(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.stack(&self.eq_blocks, self.n_eq, x)
    }

    fn eq_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.stack_jacobian(&self.eq_blocks, self.n_eq, x)
    }

    fn ineq(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        self.stack(&self.ineq_blocks, self.n_ineq, x)
    }

    fn ineq_jacobian(&self, x: &DVector<f64>) -> Result<DMatrix<f64>> {
        self.stack_jacobian(&self.ineq_blocks, self.n_ineq, x)
    }
}

/// Checks run on an extracted orbit.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct PostCheck {
    /// `|reset(chi^K) - chi^0|_inf` on the node values.
    pub periodicity: f64,
    /// The same for the reconstructed full-order orbit.
    pub full_periodicity: f64,
    /// Open-loop re-simulation from node 0 with interpolated inputs:
    /// largest gap to the node values, and the periodicity gap at `T`.
    pub resim_max_node_gap: f64,
    pub resim_final_gap: f64,
    pub resim_step: f64,
}

fn reset_isolated(problem: &NlpProblem, s: &DVector<f64>) -> Result<DVector<f64>> {
    let l = &problem.layout;
    let head = problem.spec.reset.apply(&s.rows(0, l.n_x + l.n_z).into_owned())?;
    Ok(linalg::vstack(&[&head, &s.rows(l.n_x + l.n_z, l.n_z).into_owned()]))
}

/// Node trajectory of a solution: states `(x_i, z_i, z_j)`, inputs
/// `(u_i, u^Z_j)` and `lambda_e` from the coupling relation.
pub fn solution_to_trajectory(x: &DVector<f64>, problem: &NlpProblem) -> Result<(Trajectory, PostCheck)> {
    let l = &problem.layout;
    let iso = &problem.iso;
    let h = problem.step(x);
    let (nodes, _) = l.unpack(x);
    let mut traj = Trajectory {
        times: (0..l.nodes).map(|k| k as f64 * h).collect(),
        states: Vec::with_capacity(l.nodes),
        inputs: Vec::with_capacity(l.nodes),
        lambdas: Vec::with_capacity(l.nodes),
        meta: TrajectoryMeta {
            integrator: "collocation".into(),
            step: h,
            layout: StateLayout::Isolated {
                vertex: iso.vertex(),
                n_x: l.n_x,
                n_x_other: iso.model().dims(iso.vertex().other()).n_x,
                n_z: l.n_z,
                n_u: l.n_u,
                n_uz: l.n_uz,
            },
        },
    };
    for n in &nodes {
        let pt = iso.relation().at(&n.x, &z_of(iso, n))?;
        traj.states.push(n.chi());
        traj.inputs.push(linalg::vstack(&[&n.u, &n.uz]));
        traj.lambdas.push(pt.lambda_e(&n.u));
    }

    let reset = |s: &DVector<f64>| reset_isolated(problem, s).unwrap_or_else(|_| DVector::from_element(s.len(), f64::NAN));
    let periodicity = periodicity_residual(&traj, &reset).amax();
    // The full-order orbit closes under the reset extended by x_j = 0.
    let full_periodicity = {
        let mut ends = traj.clone();
        ends.times = vec![0.0, 1.0];
        ends.states = vec![reset(&traj.states[traj.len() - 1]), traj.states[0].clone()];
        ends.inputs = vec![traj.inputs[0].clone(); 2];
        ends.lambdas = vec![traj.lambdas[0].clone(); 2];
        let full = reconstruct_full(&ends);
        (&full.states[0] - &full.states[1]).amax()
    };

    let (gap, final_gap, step) = resimulate(problem, &nodes, h)?;
    Ok((
        traj,
        PostCheck {
            periodicity,
            full_periodicity,
            resim_max_node_gap: gap,
            resim_final_gap: final_gap,
            resim_step: step,
        },
    ))
}

fn z_of(iso: &IsolatedModel, n: &NodeVars) -> PerVertex<DVector<f64>> {
    let mut z = PerVertex::new(n.z_i.clone(), n.z_i.clone());
    z[iso.vertex().other()] = n.z_j.clone();
    z
}

fn resimulate(problem: &NlpProblem, nodes: &[NodeVars], h: f64) -> Result<(f64, f64, f64)> {
    let iso = &problem.iso;
    let sub = (h / 1e-3).ceil().max(1.0) as usize;
    let dt = h / sub as f64;
    let mut s = nodes[0].chi();
    let l = &problem.layout;
    // project onto the coupling manifold
    let zi = s.rows(l.n_x, l.n_z).into_owned();
    s.rows_mut(l.n_x + l.n_z, l.n_z).copy_from(&zi);
    let mut gap = 0.0_f64;
    for k in 0..nodes.len() - 1 {
        let (ul, ur) = (&nodes[k].u, &nodes[k + 1].u);
        for m in 0..sub {
            let t0 = m as f64 * dt;
            s = rk4_step_t(|t, y| iso.rhs_packed(y, &problem.spec.center.interpolate(ul, ur, t, h)), t0, &s, dt)
                .map_err(|e| e.at_time(k as f64 * h + t0))?;
        }
        gap = gap.max((&s - nodes[k + 1].chi()).amax());
    }
    let final_gap = (reset_isolated(problem, &s)? - nodes[0].chi()).amax();
    Ok((gap, final_gap, dt))
}
