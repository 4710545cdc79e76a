//! Fixed-step integration of isolated and full coupled systems.

use std::sync::Arc;

use nalgebra::DVector;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg;
use crate::model::{eval_rhs, CcsModel, FullState, LambdaSolver, PerVertex, StateFeedback, Vertex};
use crate::reduction::IsolatedModel;

/// Baumgarte gains for the differentiated coupling constraint: the
/// controllable rows of `c'` are driven to `-2 alpha c_v - beta c_p`, where
/// `c_v` are the controllable rows and `c_p` the uncontrolled rows paired with
/// them in order.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Baumgarte {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for Baumgarte {
    fn default() -> Self {
        Baumgarte { alpha: 10.0, beta: 25.0 }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct IntegratorConfig {
    pub step: f64,
    pub horizon: f64,
    pub baumgarte: Option<Baumgarte>,
    /// Minimum reciprocal condition number accepted for the lambda solve.
    pub lambda_rcond: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig {
            step: 1e-3,
            horizon: 2.0,
            baumgarte: None,
            lambda_rcond: linalg::MIN_RCOND,
        }
    }
}

impl IntegratorConfig {
    pub fn new(step: f64, horizon: f64) -> Self {
        IntegratorConfig {
            step,
            horizon,
            ..Default::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.step > 0.0) {
            return Err(Error::Config(format!("step must be positive, got {}", self.step)));
        }
        if !(self.horizon >= self.step) {
            return Err(Error::Config(format!(
                "horizon {} must be at least one step {}",
                self.horizon, self.step
            )));
        }
        Ok(())
    }

    pub fn steps(&self) -> usize {
        (self.horizon / self.step).round() as usize
    }
}

/// How the columns of a trajectory are laid out.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StateLayout {
    /// States `(x_i, z_i, z_j)`, inputs `(u_i, u^Z_j)`, lambda on `(i, j)`.
    Isolated {
        vertex: Vertex,
        n_x: usize,
        n_x_other: usize,
        n_z: usize,
        n_u: usize,
        n_uz: usize,
    },
    /// States `(x_1, z_1, x_2, z_2)`, inputs `(u_1, u_2)`, lambda on `(1, 2)`.
    Full { n_x: [usize; 2], n_z: usize, n_u: [usize; 2] },
}

fn names(prefix: &'static str, n: usize) -> impl Iterator<Item = String> {
    (0..n).map(move |k| format!("{prefix}[{k}]"))
}

impl StateLayout {
    pub fn state_columns(&self) -> Vec<String> {
        match *self {
            StateLayout::Isolated { n_x, n_z, .. } => {
                names("x_i", n_x).chain(names("z_i", n_z)).chain(names("z_j", n_z)).collect()
            }
            StateLayout::Full { n_x, n_z, .. } => names("x_1", n_x[0])
                .chain(names("z_1", n_z))
                .chain(names("x_2", n_x[1]))
                .chain(names("z_2", n_z))
                .collect(),
        }
    }

    pub fn input_columns(&self) -> Vec<String> {
        match *self {
            StateLayout::Isolated { n_u, n_uz, .. } => names("u_i", n_u).chain(names("uZ_j", n_uz)).collect(),
            StateLayout::Full { n_u, .. } => names("u_1", n_u[0]).chain(names("u_2", n_u[1])).collect(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrajectoryMeta {
    pub integrator: String,
    pub step: f64,
    pub layout: StateLayout,
}

/// Time-indexed samples of states, inputs and coupling inputs.
#[derive(Clone, Debug, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<DVector<f64>>,
    pub inputs: Vec<DVector<f64>>,
    pub lambdas: Vec<DVector<f64>>,
    pub meta: TrajectoryMeta,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.times.len();
        if self.states.len() != n || self.inputs.len() != n || self.lambdas.len() != n {
            return Err(Error::GridMismatch("sample counts differ between columns".into()));
        }
        for w in self.times.windows(2) {
            if !(w[1] > w[0]) {
                return Err(Error::GridMismatch("times not strictly increasing".into()));
            }
            if ((w[1] - w[0]) - self.meta.step).abs() > 1e-9 * self.meta.step.max(1.0) {
                return Err(Error::GridMismatch("non-uniform step".into()));
            }
        }
        Ok(())
    }

    pub fn lambda_columns(&self) -> Vec<String> {
        let n = self.lambdas.first().map_or(0, |l| l.len());
        (0..n).map(|k| format!("lambda_e[{k}]")).collect()
    }
}

/// One classical RK4 step of an autonomous system.
pub fn rk4_step<F>(mut rhs: F, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(&DVector<f64>) -> Result<DVector<f64>>,
{
    rk4_step_t(|_, y| rhs(y), 0.0, y, h)
}

/// One classical RK4 step of `y' = f(t, y)`.
pub fn rk4_step_t<F>(mut rhs: F, t: f64, y: &DVector<f64>, h: f64) -> Result<DVector<f64>>
where
    F: FnMut(f64, &DVector<f64>) -> Result<DVector<f64>>,
{
    let k1 = rhs(t, y)?;
    let k2 = rhs(t + 0.5 * h, &(y + 0.5 * h * &k1))?;
    let k3 = rhs(t + 0.5 * h, &(y + 0.5 * h * &k2))?;
    let k4 = rhs(t + h, &(y + h * &k3))?;
    Ok(y + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4))
}

/// Feedback for an isolated subsystem: `u_i(x_i, z)`.
pub trait IsolatedFeedback: Send + Sync {
    fn control(&self, x_i: &DVector<f64>, z: &PerVertex<DVector<f64>>) -> Result<DVector<f64>>;
}

impl<F> IsolatedFeedback for F
where
    F: Fn(&DVector<f64>, &PerVertex<DVector<f64>>) -> Result<DVector<f64>> + Send + Sync,
{
    fn control(&self, x_i: &DVector<f64>, z: &PerVertex<DVector<f64>>) -> Result<DVector<f64>> {
        self(x_i, z)
    }
}

/// Input-output linearizing feedback enforcing `x_i' + eps x_i = 0` on the
/// rows of `x_i'` that the input reaches.
#[derive(Clone, Debug)]
pub struct IoLinearizing {
    iso: IsolatedModel,
    eps: f64,
}

pub fn io_linearizing_controller(iso: &IsolatedModel, eps: f64) -> Result<IoLinearizing> {
    if !(eps > 0.0) {
        return Err(Error::Config(format!("eps must be positive, got {eps}")));
    }
    Ok(IoLinearizing { iso: iso.clone(), eps })
}

impl IoLinearizing {
    pub fn eps(&self) -> f64 {
        self.eps
    }
}

impl IsolatedFeedback for IoLinearizing {
    fn control(&self, x_i: &DVector<f64>, z: &PerVertex<DVector<f64>>) -> Result<DVector<f64>> {
        let pt = self.iso.relation().at(x_i, z)?;
        let gz = pt.gz_i();
        let rows = linalg::nonzero_rows(&gz);
        if rows.len() != gz.ncols() {
            return Err(Error::Singular {
                what: format!("g^Z_i ({} actuated rows for {} inputs)", rows.len(), gz.ncols()),
                rcond: 0.0,
            });
        }
        let target = -self.eps * x_i - pt.fz_i();
        linalg::solve_square_vec(
            &linalg::select_rows(&gz, &rows),
            &linalg::select_entries(&target, &rows),
            "g^Z_i",
            linalg::MIN_RCOND,
        )
    }
}

/// Full-system feedback for the isolated vertex: reads `(x_i, z)` only.
struct IsolatedVertexFeedback {
    vertex: Vertex,
    inner: Arc<dyn IsolatedFeedback>,
}

impl StateFeedback for IsolatedVertexFeedback {
    fn control(&self, s: &FullState) -> Result<DVector<f64>> {
        self.inner.control(&s.x[self.vertex], &s.z)
    }
}

/// Full-system feedback for the other vertex: the zero-dynamics input
/// `u^Z_j(0, z; u_i(x_i, z))` from the coupling relation.
struct ZeroDynamicsFeedback {
    iso: IsolatedModel,
    inner: Arc<dyn IsolatedFeedback>,
}

impl StateFeedback for ZeroDynamicsFeedback {
    fn control(&self, s: &FullState) -> Result<DVector<f64>> {
        let i = self.iso.vertex();
        let u_i = self.inner.control(&s.x[i], &s.z)?;
        Ok(self.iso.relation().at(&s.x[i], &s.z)?.uz_j(&u_i))
    }
}

/// The pair of full-system controllers realized by an isolated feedback law:
/// `u_i` on the isolated vertex and `u^Z_j` on the other.
pub fn companion_controllers(iso: &IsolatedModel, inner: Arc<dyn IsolatedFeedback>) -> PerVertex<Arc<dyn StateFeedback>> {
    let i = iso.vertex();
    let mine: Arc<dyn StateFeedback> = Arc::new(IsolatedVertexFeedback {
        vertex: i,
        inner: inner.clone(),
    });
    let theirs: Arc<dyn StateFeedback> = Arc::new(ZeroDynamicsFeedback { iso: iso.clone(), inner });
    let mut out = PerVertex::new(mine.clone(), mine);
    out[i.other()] = theirs;
    out
}

/// Integrates the isolated subsystem under feedback, logging `u_i`, `u^Z_j`
/// and `lambda_e` at every sample. The initial condition is projected onto
/// the constraint manifold by `z_j <- z_i`.
pub fn simulate_isolated(
    iso: &IsolatedModel,
    controller: &dyn IsolatedFeedback,
    x0: &DVector<f64>,
    z0: &PerVertex<DVector<f64>>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    simulate_isolated_with(iso, &|_, x, z| controller.control(x, z), x0, z0, cfg)
}

/// Integrates the isolated subsystem under an open-loop input `u_i(t)`.
pub fn simulate_isolated_open_loop(
    iso: &IsolatedModel,
    input: &dyn Fn(f64) -> DVector<f64>,
    x0: &DVector<f64>,
    z0: &PerVertex<DVector<f64>>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    simulate_isolated_with(iso, &|t, _, _| Ok(input(t)), x0, z0, cfg)
}

type TimeVaryingLaw<'a> = dyn Fn(f64, &DVector<f64>, &PerVertex<DVector<f64>>) -> Result<DVector<f64>> + 'a;

fn simulate_isolated_with(
    iso: &IsolatedModel,
    law: &TimeVaryingLaw<'_>,
    x0: &DVector<f64>,
    z0: &PerVertex<DVector<f64>>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let i = iso.vertex();
    let mut z = z0.clone();
    z[i.other()] = z0[i].clone();
    let mut y = iso.pack(x0, &z);
    let n = cfg.steps();
    let h = cfg.step;

    type Stage = (DVector<f64>, DVector<f64>, DVector<f64>, DVector<f64>);
    let field = |t: f64, y: &DVector<f64>| -> Result<Stage> {
        let (x, z) = iso.unpack(y);
        let u = law(t, &x, &z)?;
        let r = iso.rhs(&x, &z, &u)?;
        let d = linalg::vstack(&[&r.xdot_i, &r.zdot_i, &r.zdot_j]);
        Ok((d, u, r.uz_j, r.lambda_e))
    };

    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        inputs: Vec::with_capacity(n + 1),
        lambdas: Vec::with_capacity(n + 1),
        meta: TrajectoryMeta {
            integrator: "rk4".into(),
            step: h,
            layout: StateLayout::Isolated {
                vertex: i,
                n_x: iso.n_x(),
                n_x_other: iso.model().dims(i.other()).n_x,
                n_z: iso.n_z(),
                n_u: iso.n_u(),
                n_uz: iso.n_uz(),
            },
        },
    };
    for k in 0..=n {
        let t = k as f64 * h;
        let (_, u, uz, l) = field(t, &y).map_err(|e| e.at_time(t))?;
        traj.times.push(t);
        traj.states.push(y.clone());
        traj.inputs.push(linalg::vstack(&[&u, &uz]));
        traj.lambdas.push(l);
        if k < n {
            y = rk4_step_t(|s, v| Ok(field(s, v)?.0), t, &y, h).map_err(|e| e.at_time(t))?;
        }
    }
    Ok(traj)
}

/// Solves the differentiated coupling constraint for `lambda_e` on edge
/// `(1, 2)` given both inputs:
/// `(qb_e + qb_ebar) lambda_e = -(p_1 + q_1 u_1 - p_2 - q_2 u_2)` on the rows
/// that lambda reaches.
#[derive(Clone, Copy, Debug)]
pub struct DifferentiatedConstraint {
    pub baumgarte: Option<Baumgarte>,
    pub min_rcond: f64,
}

impl Default for DifferentiatedConstraint {
    fn default() -> Self {
        DifferentiatedConstraint {
            baumgarte: None,
            min_rcond: linalg::MIN_RCOND,
        }
    }
}

impl LambdaSolver for DifferentiatedConstraint {
    fn lambda(&self, model: &CcsModel, s: &FullState, u: &PerVertex<DVector<f64>>) -> Result<DVector<f64>> {
        let (one, two) = (Vertex::One, Vertex::Two);
        let t1 = model.terms_at(one, s)?;
        let t2 = model.terms_at(two, s)?;
        let coef = &t1.q_breve + &t2.q_breve;
        let free = &t1.p + &t1.q * &u[one] - &t2.p - &t2.q * &u[two];
        let rows = linalg::nonzero_rows(&coef);
        if rows.len() != coef.ncols() {
            return Err(Error::Singular {
                what: format!(
                    "lambda coefficient qb_e + qb_ebar ({} usable rows for {} unknowns)",
                    rows.len(),
                    coef.ncols()
                ),
                rcond: 0.0,
            });
        }
        let mut target = -linalg::select_entries(&free, &rows);
        if let Some(b) = self.baumgarte {
            let c = &s.z[one] - &s.z[two];
            let others: Vec<usize> = (0..c.len()).filter(|r| !rows.contains(r)).collect();
            target -= 2.0 * b.alpha * linalg::select_entries(&c, &rows);
            if others.len() == rows.len() {
                target -= b.beta * linalg::select_entries(&c, &others);
            }
        }
        linalg::solve_square_vec(&linalg::select_rows(&coef, &rows), &target, "lambda coefficient", self.min_rcond)
    }
}

/// Integrates the full coupled dynamical system, solving for `lambda_e` at
/// every RK4 stage. The initial condition is projected by `z_2 <- z_1`.
pub fn simulate_full_cds(
    model: &CcsModel,
    controllers: PerVertex<Arc<dyn StateFeedback>>,
    x0: &PerVertex<DVector<f64>>,
    z0: &PerVertex<DVector<f64>>,
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    cfg.validate()?;
    let solver = DifferentiatedConstraint {
        baumgarte: cfg.baumgarte,
        min_rcond: cfg.lambda_rcond,
    };
    let cl = crate::model::closed_loop_rhs(model, controllers, Arc::new(solver));
    let mut z = z0.clone();
    z[Vertex::Two] = z0[Vertex::One].clone();
    let mut y = FullState { x: x0.clone(), z }.to_vector();
    let n = cfg.steps();
    let h = cfg.step;
    let (d1, d2) = (model.dims(Vertex::One), model.dims(Vertex::Two));

    let mut traj = Trajectory {
        times: Vec::with_capacity(n + 1),
        states: Vec::with_capacity(n + 1),
        inputs: Vec::with_capacity(n + 1),
        lambdas: Vec::with_capacity(n + 1),
        meta: TrajectoryMeta {
            integrator: "rk4".into(),
            step: h,
            layout: StateLayout::Full {
                n_x: [d1.n_x, d2.n_x],
                n_z: d1.n_z,
                n_u: [d1.n_u, d2.n_u],
            },
        },
    };
    for k in 0..=n {
        let t = k as f64 * h;
        let s = FullState::from_vector(model, &y)?;
        let ev = cl.eval(&s).map_err(|e| e.at_time(t))?;
        traj.times.push(t);
        traj.states.push(y.clone());
        traj.inputs.push(linalg::vstack(&[&ev.u[Vertex::One], &ev.u[Vertex::Two]]));
        traj.lambdas.push(ev.lambda_e);
        if k < n {
            y = rk4_step(
                |v| {
                    let s = FullState::from_vector(model, v)?;
                    Ok(cl.eval(&s)?.derivative.to_vector())
                },
                &y,
                h,
            )
            .map_err(|e| e.at_time(t))?;
        }
    }
    Ok(traj)
}

/// Lifts an isolated trajectory to the full system: `x_j = 0`, inputs
/// reordered to `(u_1, u_2)`, and lambda reported on edge `(1, 2)`.
pub fn reconstruct_full(iso_traj: &Trajectory) -> Trajectory {
    let StateLayout::Isolated {
        vertex,
        n_x,
        n_x_other,
        n_z,
        n_u,
        n_uz,
    } = iso_traj.meta.layout
    else {
        return iso_traj.clone();
    };
    let flip = if vertex == Vertex::One { 1.0 } else { -1.0 };
    let zeros_j = DVector::zeros(n_x_other);
    let mut out = Trajectory {
        times: iso_traj.times.clone(),
        states: Vec::with_capacity(iso_traj.len()),
        inputs: Vec::with_capacity(iso_traj.len()),
        lambdas: iso_traj.lambdas.iter().map(|l| flip * l).collect(),
        meta: TrajectoryMeta {
            integrator: iso_traj.meta.integrator.clone(),
            step: iso_traj.meta.step,
            layout: match vertex {
                Vertex::One => StateLayout::Full {
                    n_x: [n_x, n_x_other],
                    n_z,
                    n_u: [n_u, n_uz],
                },
                Vertex::Two => StateLayout::Full {
                    n_x: [n_x_other, n_x],
                    n_z,
                    n_u: [n_uz, n_u],
                },
            },
        },
    };
    for (s, u) in iso_traj.states.iter().zip(&iso_traj.inputs) {
        let x_i = s.rows(0, n_x).into_owned();
        let z_i = s.rows(n_x, n_z).into_owned();
        let z_j = s.rows(n_x + n_z, n_z).into_owned();
        let u_i = u.rows(0, n_u).into_owned();
        let u_j = u.rows(n_u, n_uz).into_owned();
        match vertex {
            Vertex::One => {
                out.states.push(linalg::vstack(&[&x_i, &z_i, &zeros_j, &z_j]));
                out.inputs.push(linalg::vstack(&[&u_i, &u_j]));
            }
            Vertex::Two => {
                out.states.push(linalg::vstack(&[&zeros_j, &z_j, &x_i, &z_i]));
                out.inputs.push(linalg::vstack(&[&u_j, &u_i]));
            }
        }
    }
    out
}

/// Max-norm and RMS errors of one signal group.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SignalError {
    pub per_column_max: Vec<f64>,
    pub per_column_rms: Vec<f64>,
    pub max: f64,
    pub rms: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TrajectoryError {
    pub states: SignalError,
    pub inputs: SignalError,
    pub lambdas: SignalError,
}

fn signal_error(a: &[DVector<f64>], b: &[DVector<f64>], what: &str) -> Result<SignalError> {
    let ncol = a.first().map_or(0, |v| v.len());
    if a.iter().chain(b).any(|v| v.len() != ncol) {
        return Err(Error::GridMismatch(format!("{what} column counts differ")));
    }
    let mut max = vec![0.0_f64; ncol];
    let mut sq = vec![0.0_f64; ncol];
    for (va, vb) in a.iter().zip(b) {
        for c in 0..ncol {
            let d = (va[c] - vb[c]).abs();
            max[c] = max[c].max(d);
            sq[c] += d * d;
        }
    }
    let n = a.len().max(1) as f64;
    let rms: Vec<f64> = sq.iter().map(|s| (s / n).sqrt()).collect();
    Ok(SignalError {
        max: max.iter().copied().fold(0.0, f64::max),
        rms: (sq.iter().sum::<f64>() / (n * ncol.max(1) as f64)).sqrt(),
        per_column_max: max,
        per_column_rms: rms,
    })
}

/// Per-column and aggregate differences between two trajectories sampled on
/// the same grid.
pub fn trajectory_error(a: &Trajectory, b: &Trajectory) -> Result<TrajectoryError> {
    if a.times.len() != b.times.len() {
        return Err(Error::GridMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    if a.times.iter().zip(&b.times).any(|(s, t)| (s - t).abs() > 1e-12 * s.abs().max(1.0)) {
        return Err(Error::GridMismatch("sample times differ".into()));
    }
    Ok(TrajectoryError {
        states: signal_error(&a.states, &b.states, "state")?,
        inputs: signal_error(&a.inputs, &b.inputs, "input")?,
        lambdas: signal_error(&a.lambdas, &b.lambdas, "lambda")?,
    })
}

/// `reset(final sample) - initial sample`.
pub fn periodicity_residual(traj: &Trajectory, reset: &dyn Fn(&DVector<f64>) -> DVector<f64>) -> DVector<f64> {
    match (traj.states.first(), traj.states.last()) {
        (Some(first), Some(last)) => reset(last) - first,
        _ => DVector::zeros(0),
    }
}

/// Largest `|c_e(z)|` over a trajectory of either layout.
pub fn max_coupling_drift(traj: &Trajectory) -> f64 {
    traj.states
        .iter()
        .map(|s| {
            let (a, b, n) = match traj.meta.layout {
                StateLayout::Isolated { n_x, n_z, .. } => (n_x, n_x + n_z, n_z),
                StateLayout::Full { n_x, n_z, .. } => (n_x[0], n_x[0] + n_z + n_x[1], n_z),
            };
            (s.rows(a, n) - s.rows(b, n)).amax()
        })
        .fold(0.0, f64::max)
}

/// Largest mismatch between centered differences of a full-layout trajectory
/// and the coupled vector field evaluated with the logged inputs and lambda.
pub fn full_field_residual(model: &CcsModel, traj: &Trajectory) -> Result<f64> {
    let StateLayout::Full { n_u, .. } = traj.meta.layout else {
        return Err(Error::Config("full_field_residual needs a full-layout trajectory".into()));
    };
    let h = traj.meta.step;
    let mut worst = 0.0_f64;
    for k in 1..traj.len().saturating_sub(1) {
        let s = FullState::from_vector(model, &traj.states[k])?;
        let u1 = traj.inputs[k].rows(0, n_u[0]).into_owned();
        let u2 = traj.inputs[k].rows(n_u[0], n_u[1]).into_owned();
        let l = &traj.lambdas[k];
        let (one, two) = (Vertex::One, Vertex::Two);
        let (x1, z1) = eval_rhs(model, one, &s.x[one], &s.z[one], &s.z[two], &u1, l)?;
        let (x2, z2) = eval_rhs(model, two, &s.x[two], &s.z[two], &s.z[one], &u2, &(-l))?;
        let field = linalg::vstack(&[&x1, &z1, &x2, &z2]);
        let diff = (&traj.states[k + 1] - &traj.states[k - 1]) / (2.0 * h);
        worst = worst.max((diff - field).amax());
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::DMatrix;

    #[test]
    fn rk4_trivial_fields() {
        let y = DVector::from_vec(vec![1.0, -2.0]);
        assert_eq!(rk4_step(|_| Ok(DVector::zeros(2)), &y, 0.1).unwrap(), y);
        let y1 = rk4_step(|_| Ok(DVector::from_element(2, 1.0)), &y, 0.25).unwrap();
        assert_eq!(y1, DVector::from_vec(vec![1.25, -1.75]));
    }

    #[test]
    fn rk4_local_error_is_fifth_order() {
        let a = DMatrix::from_row_slice(2, 2, &[0.0, 1.0, -4.0, -0.3]);
        let y0 = DVector::from_vec(vec![1.0, 0.5]);
        let err = |h: f64| {
            let exact = (&a * h).exp() * &y0;
            let approx = rk4_step(|y| Ok(&a * y), &y0, h).unwrap();
            (exact - approx).norm()
        };
        let (e1, e2) = (err(0.1), err(0.05));
        let ratio = e1 / e2;
        // h^5 scaling gives 32.
        assert!(ratio > 28.0 && ratio < 36.0, "{ratio}");
    }

    #[test]
    fn config_validation() {
        assert!(IntegratorConfig::new(0.0, 1.0).validate().is_err());
        assert!(IntegratorConfig::new(0.1, 0.05).validate().is_err());
        assert_eq!(IntegratorConfig::new(1e-3, 2.0).steps(), 2000);
    }

    fn const_traj(v: f64, n: usize) -> Trajectory {
        Trajectory {
            times: (0..n).map(|k| k as f64 * 0.1).collect(),
            states: vec![DVector::from_element(3, v); n],
            inputs: vec![DVector::from_element(1, v); n],
            lambdas: vec![DVector::from_element(1, v); n],
            meta: TrajectoryMeta {
                integrator: "test".into(),
                step: 0.1,
                layout: StateLayout::Full {
                    n_x: [1, 0],
                    n_z: 1,
                    n_u: [1, 0],
                },
            },
        }
    }

    #[test]
    fn trajectory_error_examples() {
        let a = const_traj(1.0, 5);
        assert_eq!(trajectory_error(&a, &a).unwrap().states.max, 0.0);
        let b = const_traj(1.25, 5);
        let e = trajectory_error(&a, &b).unwrap();
        assert!((e.states.max - 0.25).abs() < 1e-15);
        assert!((e.states.rms - 0.25).abs() < 1e-15);
        assert!(matches!(trajectory_error(&a, &const_traj(1.0, 4)), Err(Error::GridMismatch(_))));
    }

    #[test]
    fn periodicity_residual_examples() {
        let c = const_traj(2.0, 4);
        assert_eq!(periodicity_residual(&c, &|s| s.clone()), DVector::zeros(3));
        // sin over [0, 0.3] sampled with the wrong period: residual is sin(0.3) - sin(0).
        let mut s = const_traj(0.0, 4);
        s.states = s.times.iter().map(|t| DVector::from_element(3, t.sin())).collect();
        let r = periodicity_residual(&s, &|v| v.clone());
        assert!((r[0] - 0.3f64.sin()).abs() < 1e-15);
        assert!(s.validate().is_ok());
    }
}
