//! Configuration-driven front end: `verify`, `simulate` and `optimize`.
//!
//! A run reads one JSON document (unknown keys are rejected), applies flag
//! overrides, and writes its outputs plus a `manifest.json` into the output
//! directory. Exit codes: 0 success, 1 failed check or solve, 2 usage or
//! configuration error.

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use clap::{Parser, Subcommand};
use nalgebra::DVector;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use serde_json::json;

use crate::error::{Error, Result};
use crate::mechanical::{example_by_name, front_output, Contact, PendulumCarrier, SplitExample, DEFAULT_ALPHA};
use crate::model::{AffineSubsystem, CcsModel, Dims, FullState, PerVertex, StateFeedback, Vertex};
use crate::optimize::{
    assemble, solution_to_trajectory, solve, ControlAtCenter, CostKind, NlpFunctions, NodeFix, PathConstraint, PhaseAnchor, ProblemSpec,
    ResetMap, SolverConfig, VarRef,
};
use crate::optimize::{Block, Grid};
use crate::reduction::{zero_invariance_residual, IsolatedModel};
use crate::simulate::{
    companion_controllers, io_linearizing_controller, max_coupling_drift, reconstruct_full, simulate_full_cds, simulate_isolated,
    trajectory_error, Baumgarte, IntegratorConfig, IsolatedFeedback, Trajectory,
};

pub const MODEL_NAMES: [&str; 3] = ["split_cart", "double_pendulum_pivot", "random_affine"];

#[derive(Debug, Parser)]
#[command(name = "ccs", version, about = "Coupled control systems: verify, simulate and optimize periodic orbits")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// JSON run configuration; defaults apply to every missing key.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Output directory (overrides `out`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Seed for randomized checks and guess jitter (overrides `seed`).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Model name (overrides `model`).
    #[arg(long, global = true)]
    pub model: Option<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Isolated-vs-full equivalence and coupling-relation checks.
    Verify {
        /// Simulated time span.
        #[arg(long)]
        horizon: Option<f64>,
        /// RK4 step.
        #[arg(long)]
        step: Option<f64>,
        /// Perturb the relation output to exercise the failure path.
        #[arg(long)]
        break_relation: bool,
    },
    /// Integrate the isolated or full system and write the trajectory.
    Simulate {
        /// Simulated time span.
        #[arg(long)]
        horizon: Option<f64>,
        /// RK4 step.
        #[arg(long)]
        step: Option<f64>,
        #[arg(long, value_parser = ["isolated", "full"])]
        mode: Option<String>,
    },
    /// Periodic orbit of the isolated subsystem by direct collocation.
    Optimize {
        /// Number of collocation intervals.
        #[arg(long)]
        k: Option<usize>,
        /// Period, or the initial period when it is free.
        #[arg(long)]
        period: Option<f64>,
        /// Cap on total inner iterations.
        #[arg(long)]
        max_iterations: Option<usize>,
    },
}

/// A bundled model by name, or a split pendulum carrier given inline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ModelConfig {
    Named(String),
    Inline(InlineModel),
}

/// Base of `base_mass` with two pendula, split evenly between the halves.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InlineModel {
    pub base_mass: f64,
    #[serde(default = "one")]
    pub base_dim: usize,
    pub pendula: [(f64, f64); 2],
    #[serde(default = "gravity")]
    pub gravity: f64,
    #[serde(default = "no_contact")]
    pub front_contact: Contact,
    #[serde(default = "no_contact")]
    pub rear_contact: Contact,
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
}

fn one() -> usize {
    1
}

fn gravity() -> f64 {
    9.81
}

fn no_contact() -> Contact {
    Contact::None
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimMode {
    #[default]
    Isolated,
    Full,
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ControllerChoice {
    #[default]
    IoLinearizing,
    Zero,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct InitialCondition {
    /// `x_i` of the isolated vertex; defaults to a fixed nonzero pattern.
    pub x0: Option<Vec<f64>>,
    /// `x_j` of the other vertex in full runs; zero by default.
    pub x0_other: Option<Vec<f64>>,
    pub z0: Option<Vec<f64>>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SimulateConfig {
    pub mode: SimMode,
    pub controller: ControllerChoice,
    pub eps: f64,
    pub step: f64,
    pub horizon: f64,
    pub baumgarte: Option<Baumgarte>,
    pub initial: InitialCondition,
    /// State column pairs drawn as phase portraits.
    pub plots: Vec<[usize; 2]>,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        SimulateConfig {
            mode: SimMode::Isolated,
            controller: ControllerChoice::IoLinearizing,
            eps: 5.0,
            step: 1e-3,
            horizon: 2.0,
            baumgarte: None,
            initial: InitialCondition::default(),
            plots: vec![[0, 1]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct VerifyConfig {
    pub eps: f64,
    pub step: f64,
    pub horizon: f64,
    pub initial: InitialCondition,
    pub tolerance: f64,
    pub drift_tolerance: f64,
    pub relation_tolerance: f64,
    pub random_points: usize,
    pub break_relation: bool,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig {
            eps: 5.0,
            step: 1e-3,
            horizon: 2.0,
            initial: InitialCondition::default(),
            tolerance: 1e-5,
            drift_tolerance: 1e-6,
            relation_tolerance: 1e-10,
            random_points: 100,
            break_relation: false,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ResetChoice {
    #[default]
    Identity,
    PlasticImpact,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct OptimizeConfig {
    pub k: usize,
    pub period: f64,
    pub free_period: bool,
    pub period_bounds: Option<(f64, f64)>,
    pub cost: CostKind,
    pub path: Vec<PathConstraint>,
    pub reset: ResetChoice,
    pub anchor: Option<PhaseAnchor>,
    pub center: ControlAtCenter,
    pub contraction: Option<f64>,
    /// Node variables held fixed. The default pins the first output at node
    /// 0 so the orbit is not the trivial equilibrium.
    pub fixes: Vec<NodeFix>,
    pub guess_amplitude: f64,
    /// Uniform noise added to the guess, drawn from the run seed.
    pub guess_jitter: f64,
    pub solver: SolverConfig,
    pub resim_tolerance: f64,
    pub periodicity_tolerance: f64,
    pub plots: Vec<[usize; 2]>,
}

impl Default for OptimizeConfig {
    fn default() -> Self {
        OptimizeConfig {
            k: 10,
            period: 1.0,
            free_period: false,
            period_bounds: None,
            cost: CostKind::InputEffort,
            path: Vec::new(),
            reset: ResetChoice::Identity,
            anchor: Some(PhaseAnchor { coord: 0, value: 0.0 }),
            center: ControlAtCenter::default(),
            contraction: None,
            fixes: vec![NodeFix {
                node: 0,
                var: VarRef { block: Block::X, index: 0 },
                value: 0.2,
            }],
            guess_amplitude: 0.05,
            guess_jitter: 0.0,
            solver: SolverConfig::default(),
            resim_tolerance: 1e-3,
            periodicity_tolerance: 1e-3,
            plots: vec![[0, 1]],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    pub model: ModelConfig,
    /// The vertex whose isolated subsystem is simulated or optimized.
    pub vertex: Vertex,
    pub seed: u64,
    pub out: PathBuf,
    pub simulate: SimulateConfig,
    pub verify: VerifyConfig,
    pub optimize: OptimizeConfig,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::Named("split_cart".into()),
            vertex: Vertex::One,
            seed: 0,
            out: PathBuf::from("out"),
            simulate: SimulateConfig::default(),
            verify: VerifyConfig::default(),
            optimize: OptimizeConfig::default(),
        }
    }
}

fn positive(what: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{what} must be positive, got {v}")))
    }
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn validate(&self) -> Result<()> {
        let s = &self.simulate;
        positive("simulate.step", s.step)?;
        positive("simulate.horizon", s.horizon)?;
        positive("simulate.eps", s.eps)?;
        let v = &self.verify;
        positive("verify.step", v.step)?;
        positive("verify.horizon", v.horizon)?;
        positive("verify.eps", v.eps)?;
        positive("verify.tolerance", v.tolerance)?;
        positive("verify.drift_tolerance", v.drift_tolerance)?;
        positive("verify.relation_tolerance", v.relation_tolerance)?;
        let o = &self.optimize;
        positive("optimize.period", o.period)?;
        positive("optimize.resim_tolerance", o.resim_tolerance)?;
        positive("optimize.periodicity_tolerance", o.periodicity_tolerance)?;
        positive("optimize.solver.tol_eq", o.solver.tol_eq)?;
        positive("optimize.solver.tol_ineq", o.solver.tol_ineq)?;
        positive("optimize.solver.tol_stationarity", o.solver.tol_stationarity)?;
        if o.guess_amplitude < 0.0 || o.guess_jitter < 0.0 {
            return Err(Error::Config("guess amplitude and jitter must be nonnegative".into()));
        }
        if let Some(e) = o.contraction {
            positive("optimize.contraction", e)?;
        }
        if o.k < 2 {
            return Err(Error::Config(format!("optimize.k must be at least 2, got {}", o.k)));
        }
        Ok(())
    }
}

/// A built model: the coupled system and, for mechanical ones, the split
/// example it came from.
pub struct BuiltModel {
    pub name: String,
    pub ccs: CcsModel,
    pub example: Option<SplitExample>,
}

pub fn build_model(cfg: &ModelConfig, seed: u64) -> Result<BuiltModel> {
    match cfg {
        ModelConfig::Named(name) if name == "random_affine" => {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let d = Dims {
                n_x: 2,
                n_z: 3,
                n_u: 2,
                n_lambda: 3,
            };
            let a = AffineSubsystem::random(&mut rng, d);
            let b = AffineSubsystem::random(&mut rng, d);
            Ok(BuiltModel {
                name: name.clone(),
                ccs: CcsModel::new(Arc::new(a), Arc::new(b))?,
                example: None,
            })
        }
        ModelConfig::Named(name) => match example_by_name(name) {
            Some(ex) => Ok(BuiltModel {
                name: name.clone(),
                ccs: ex.ccs.clone(),
                example: Some(ex),
            }),
            None => Err(Error::Config(format!(
                "unknown model `{name}`; available models: {}",
                MODEL_NAMES.join(", ")
            ))),
        },
        ModelConfig::Inline(m) => {
            positive("model.base_mass", m.base_mass)?;
            if !(1..=2).contains(&m.base_dim) {
                return Err(Error::Config(format!("model.base_dim must be 1 or 2, got {}", m.base_dim)));
            }
            for (mass, l) in m.pendula {
                positive("pendulum mass", mass)?;
                positive("pendulum length", l)?;
            }
            let half = |pendulum, contact| PendulumCarrier {
                base_mass: m.base_mass / 2.0,
                base_dim: m.base_dim,
                pendula: vec![pendulum],
                gravity: m.gravity,
                contact,
            };
            let full_contact = match (m.front_contact, m.rear_contact) {
                (Contact::Tip(_), _) | (_, Contact::Tip(_)) => Contact::None,
                (Contact::BaseHeight, _) | (_, Contact::BaseHeight) => Contact::BaseHeight,
                _ => Contact::None,
            };
            let full = PendulumCarrier {
                base_mass: m.base_mass,
                base_dim: m.base_dim,
                pendula: m.pendula.to_vec(),
                gravity: m.gravity,
                contact: full_contact,
            };
            let halves = PerVertex::new(half(m.pendula[0], m.front_contact), half(m.pendula[1], m.rear_contact));
            let alpha = m.alpha.clone().unwrap_or_else(|| DEFAULT_ALPHA.to_vec());
            if alpha.len() < 2 {
                return Err(Error::Config("model.alpha needs at least two coefficients".into()));
            }
            let ex = SplitExample::new("inline", full, halves, front_output(&alpha))?;
            Ok(BuiltModel {
                name: "inline".into(),
                ccs: ex.ccs.clone(),
                example: Some(ex),
            })
        }
    }
}

/// Exit status of a command.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Outcome {
    Success,
    CheckFailed,
}

impl Outcome {
    pub fn code(self) -> i32 {
        match self {
            Outcome::Success => 0,
            Outcome::CheckFailed => 1,
        }
    }
}

/// One named pass/fail check of a report.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub value: f64,
    pub tolerance: f64,
    pub passed: bool,
}

impl Check {
    fn new(name: &str, value: f64, tolerance: f64) -> Self {
        Check {
            name: name.into(),
            value,
            tolerance,
            passed: value <= tolerance,
        }
    }
}

/// Parses `args` (including the program name), runs the command and
/// returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    let cfg = match load_config(&cli) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return 2;
        }
    };
    match execute(&cli.command, &cfg) {
        Ok(o) => o.code(),
        Err(e @ (Error::Config(_) | Error::Json(_))) => {
            eprintln!("error: {e}");
            2
        }
        Err(e) => {
            eprintln!("error: {e}");
            1
        }
    }
}

/// Reads the config file and applies flag overrides.
pub fn load_config(cli: &Cli) -> Result<RunConfig> {
    let mut cfg = match &cli.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| Error::Config(format!("cannot read {}: {e}", p.display())))?;
            RunConfig::from_json(&text).map_err(|e| Error::Config(format!("{}: {e}", p.display())))?
        }
        None => RunConfig::default(),
    };
    if let Some(o) = &cli.out {
        cfg.out = o.clone();
    }
    if let Some(s) = cli.seed {
        cfg.seed = s;
    }
    if let Some(m) = &cli.model {
        cfg.model = ModelConfig::Named(m.clone());
    }
    match &cli.command {
        Command::Verify {
            horizon,
            step,
            break_relation,
        } => {
            if let Some(h) = horizon {
                cfg.verify.horizon = *h;
            }
            if let Some(s) = step {
                cfg.verify.step = *s;
            }
            cfg.verify.break_relation |= break_relation;
        }
        Command::Simulate { horizon, step, mode } => {
            if let Some(h) = horizon {
                cfg.simulate.horizon = *h;
            }
            if let Some(s) = step {
                cfg.simulate.step = *s;
            }
            if let Some(m) = mode {
                cfg.simulate.mode = if m == "full" { SimMode::Full } else { SimMode::Isolated };
            }
        }
        Command::Optimize { k, period, max_iterations } => {
            if let Some(k) = k {
                cfg.optimize.k = *k;
            }
            if let Some(t) = period {
                cfg.optimize.period = *t;
            }
            if let Some(m) = max_iterations {
                cfg.optimize.solver.max_iterations = *m;
            }
        }
    }
    if let Command::Verify { .. } = cli.command {
        if cfg.verify.horizon <= 0.0 {
            return Err(Error::Config("verify horizon is zero: the report would be empty".into()));
        }
    }
    cfg.validate()?;
    Ok(cfg)
}

pub fn execute(cmd: &Command, cfg: &RunConfig) -> Result<Outcome> {
    fs::create_dir_all(&cfg.out)?;
    match cmd {
        Command::Verify { .. } => cmd_verify(cfg),
        Command::Simulate { .. } => cmd_simulate(cfg),
        Command::Optimize { .. } => cmd_optimize(cfg),
    }
}

fn pattern(values: &[f64], n: usize) -> DVector<f64> {
    DVector::from_fn(n, |i, _| values[i % values.len()])
}

fn vector(name: &str, v: &Option<Vec<f64>>, n: usize, default: &[f64]) -> Result<DVector<f64>> {
    match v {
        Some(v) if v.len() == n => Ok(DVector::from_column_slice(v)),
        Some(v) => Err(Error::Config(format!("{name} has {} entries, the model needs {n}", v.len()))),
        None => Ok(pattern(default, n)),
    }
}

struct Start {
    x_i: DVector<f64>,
    x_j: DVector<f64>,
    z: PerVertex<DVector<f64>>,
}

fn initial_state(model: &CcsModel, i: Vertex, ic: &InitialCondition) -> Result<Start> {
    let (di, dj) = (model.dims(i), model.dims(i.other()));
    let x_i = vector("initial.x0", &ic.x0, di.n_x, &[0.15, -0.4])?;
    let x_j = vector("initial.x0_other", &ic.x0_other, dj.n_x, &[0.0])?;
    let z = vector("initial.z0", &ic.z0, di.n_z, &[0.1, 0.3])?;
    Ok(Start {
        x_i,
        x_j,
        z: PerVertex::new(z.clone(), z),
    })
}

fn per_vertex_x(i: Vertex, x_i: DVector<f64>, x_j: DVector<f64>) -> PerVertex<DVector<f64>> {
    match i {
        Vertex::One => PerVertex::new(x_i, x_j),
        Vertex::Two => PerVertex::new(x_j, x_i),
    }
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn write_manifest(cfg: &RunConfig, command: &str, start: Instant, outputs: &[&str], extra: serde_json::Value) -> Result<()> {
    let manifest = json!({
        "command": command,
        "crate": env!("CARGO_PKG_NAME"),
        "version": env!("CARGO_PKG_VERSION"),
        "config": cfg,
        "seed": cfg.seed,
        "wall_time_s": start.elapsed().as_secs_f64(),
        "outputs": outputs,
        "details": extra,
    });
    write_json(&cfg.out.join("manifest.json"), &manifest)
}

/// Header and rows of a trajectory CSV; floats use 17 significant digits.
pub fn trajectory_csv(traj: &Trajectory) -> String {
    let mut out = String::new();
    let header: Vec<String> = std::iter::once("t".to_string())
        .chain(traj.meta.layout.state_columns())
        .chain(traj.meta.layout.input_columns())
        .chain(traj.lambda_columns())
        .collect();
    out.push_str(&header.join(","));
    out.push('\n');
    for k in 0..traj.len() {
        let row = std::iter::once(traj.times[k])
            .chain(traj.states[k].iter().copied())
            .chain(traj.inputs[k].iter().copied())
            .chain(traj.lambdas[k].iter().copied());
        let cells: Vec<String> = row.map(|v| format!("{v:.16e}")).collect();
        out.push_str(&cells.join(","));
        out.push('\n');
    }
    out
}

/// Reads back a CSV written by [`trajectory_csv`]: header and rows.
pub fn read_csv(text: &str) -> Result<(Vec<String>, Vec<Vec<f64>>)> {
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| Error::Config("empty CSV".into()))?
        .split(',')
        .map(str::to_string)
        .collect();
    let rows = lines
        .map(|l| {
            l.split(',')
                .map(|c| c.parse::<f64>().map_err(|e| Error::Config(format!("bad CSV cell `{c}`: {e}"))))
                .collect::<Result<Vec<f64>>>()
        })
        .collect::<Result<Vec<_>>>()?;
    Ok((header, rows))
}

/// A polyline phase portrait of two columns.
pub fn phase_svg(xs: &[f64], ys: &[f64], x_label: &str, y_label: &str) -> String {
    let (w, h, pad) = (480.0, 360.0, 40.0);
    let range = |v: &[f64]| {
        let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = v.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        if hi - lo > 1e-12 {
            (lo, hi)
        } else {
            (lo - 0.5, lo + 0.5)
        }
    };
    let ((x0, x1), (y0, y1)) = (range(xs), range(ys));
    let mut points = String::new();
    for (x, y) in xs.iter().zip(ys) {
        let px = pad + (x - x0) / (x1 - x0) * (w - 2.0 * pad);
        let py = h - pad - (y - y0) / (y1 - y0) * (h - 2.0 * pad);
        let _ = write!(points, "{px:.2},{py:.2} ");
    }
    format!(
        concat!(
            "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{w}\" height=\"{h}\" viewBox=\"0 0 {w} {h}\">\n",
            "<rect width=\"100%\" height=\"100%\" fill=\"white\"/>\n",
            "<polyline fill=\"none\" stroke=\"#1f5fa8\" stroke-width=\"1.5\" points=\"{points}\"/>\n",
            "<text x=\"{cx}\" y=\"{by}\" font-size=\"12\" text-anchor=\"middle\">{xl} [{x0:.3}, {x1:.3}]</text>\n",
            "<text x=\"12\" y=\"{cy}\" font-size=\"12\" transform=\"rotate(-90 12 {cy})\" text-anchor=\"middle\">{yl} [{y0:.3}, {y1:.3}]</text>\n",
            "</svg>\n"
        ),
        w = w,
        h = h,
        points = points.trim_end(),
        cx = w / 2.0,
        by = h - 10.0,
        cy = h / 2.0,
        xl = x_label,
        yl = y_label,
        x0 = x0,
        x1 = x1,
        y0 = y0,
        y1 = y1,
    )
}

/// Writes the configured phase portraits; failures are logged and ignored.
fn write_plots(dir: &Path, traj: &Trajectory, pairs: &[[usize; 2]], files: &mut Vec<String>) {
    let cols = traj.meta.layout.state_columns();
    for &[a, b] in pairs {
        if a >= cols.len() || b >= cols.len() {
            log::warn!("plot columns ({a}, {b}) out of range, skipped");
            continue;
        }
        let xs: Vec<f64> = traj.states.iter().map(|s| s[a]).collect();
        let ys: Vec<f64> = traj.states.iter().map(|s| s[b]).collect();
        let name = format!("phase_{a}_{b}.svg");
        match fs::write(dir.join(&name), phase_svg(&xs, &ys, &cols[a], &cols[b])) {
            Ok(()) => files.push(name),
            Err(e) => log::warn!("could not write {name}: {e}"),
        }
    }
}

fn isolated_controller(iso: &IsolatedModel, choice: ControllerChoice, eps: f64) -> Result<Arc<dyn IsolatedFeedback>> {
    Ok(match choice {
        ControllerChoice::IoLinearizing => Arc::new(io_linearizing_controller(iso, eps)?),
        ControllerChoice::Zero => {
            let n = iso.n_u();
            Arc::new(move |_: &DVector<f64>, _: &PerVertex<DVector<f64>>| Ok(DVector::zeros(n)))
        }
    })
}

fn zero_controllers(model: &CcsModel) -> PerVertex<Arc<dyn StateFeedback>> {
    let zero = |n: usize| -> Arc<dyn StateFeedback> { Arc::new(move |_: &FullState| Ok(DVector::zeros(n))) };
    PerVertex::new(zero(model.dims(Vertex::One).n_u), zero(model.dims(Vertex::Two).n_u))
}

pub fn cmd_simulate(cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    let built = build_model(&cfg.model, cfg.seed)?;
    let s = &cfg.simulate;
    let i = cfg.vertex;
    let iso = IsolatedModel::new(&built.ccs, i);
    let init = initial_state(&built.ccs, i, &s.initial)?;
    let mut icfg = IntegratorConfig::new(s.step, s.horizon);
    icfg.baumgarte = s.baumgarte;
    let ctrl = isolated_controller(&iso, s.controller, s.eps)?;
    let traj = match s.mode {
        SimMode::Isolated => simulate_isolated(&iso, ctrl.as_ref(), &init.x_i, &init.z, &icfg)?,
        SimMode::Full => {
            let controllers = match s.controller {
                ControllerChoice::IoLinearizing => companion_controllers(&iso, ctrl),
                ControllerChoice::Zero => zero_controllers(&built.ccs),
            };
            simulate_full_cds(&built.ccs, controllers, &per_vertex_x(i, init.x_i.clone(), init.x_j.clone()), &init.z, &icfg)?
        }
    };
    let mut files = vec!["trajectory.csv".to_string(), "diagnostics.csv".to_string()];
    fs::write(cfg.out.join("trajectory.csv"), trajectory_csv(&traj))?;

    let full = reconstruct_full(&traj);
    let mut diag = String::from(if built.example.is_some() { "t,coupling_drift,energy\n" } else { "t,coupling_drift\n" });
    let mut energy_range = (f64::INFINITY, f64::NEG_INFINITY);
    for k in 0..full.len() {
        let fs_k = FullState::from_vector(&built.ccs, &full.states[k])?;
        let drift = (&fs_k.z[Vertex::One] - &fs_k.z[Vertex::Two]).amax();
        let _ = write!(diag, "{:.16e},{drift:.16e}", full.times[k]);
        if let Some(ex) = &built.example {
            let e = ex.cds_energy(&fs_k);
            energy_range = (energy_range.0.min(e), energy_range.1.max(e));
            let _ = write!(diag, ",{e:.16e}");
        }
        diag.push('\n');
    }
    fs::write(cfg.out.join("diagnostics.csv"), diag)?;
    write_plots(&cfg.out, &traj, &s.plots, &mut files);

    let drift = max_coupling_drift(&traj);
    let energy_spread = if built.example.is_some() { energy_range.1 - energy_range.0 } else { f64::NAN };
    println!("simulated {} samples; max coupling drift {drift:.3e}", traj.len());
    if built.example.is_some() {
        println!("energy spread {energy_spread:.3e}");
    }
    let refs: Vec<&str> = files.iter().map(String::as_str).collect();
    write_manifest(
        cfg,
        "simulate",
        start,
        &refs,
        json!({"samples": traj.len(), "max_coupling_drift": drift, "energy_spread": energy_spread}),
    )?;
    Ok(Outcome::Success)
}

fn random_vec(rng: &mut ChaCha8Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| rng.random_range(-scale..scale))
}

/// Coupling-relation residuals at random points: zero-dynamics invariance
/// and the coupling rate `z_i' - z_j'` with `u^Z_j` from the relation.
fn relation_checks(iso: &IsolatedModel, cfg: &VerifyConfig, seed: u64) -> Result<(f64, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut inv, mut rate) = (0.0_f64, 0.0_f64);
    for _ in 0..cfg.random_points {
        let x = random_vec(&mut rng, iso.n_x(), 0.5);
        let zi = random_vec(&mut rng, iso.n_z(), 0.5);
        let u = random_vec(&mut rng, iso.n_u(), 1.0);
        let z = PerVertex::new(zi.clone(), zi);
        let pt = iso.relation().at(&x, &z)?;
        let mut uz = pt.uz_j(&u);
        if cfg.break_relation {
            uz *= 1.0 + 1e-3;
            uz.add_scalar_mut(1e-3);
        }
        inv = inv.max(zero_invariance_residual(&pt, &u, &uz).amax());
        let r = iso.rhs(&x, &z, &u)?;
        rate = rate.max((r.zdot_i - r.zdot_j).amax());
    }
    Ok((inv, rate))
}

pub fn cmd_verify(cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    let built = build_model(&cfg.model, cfg.seed)?;
    let v = &cfg.verify;
    let i = cfg.vertex;
    let iso = IsolatedModel::new(&built.ccs, i);
    let init = initial_state(&built.ccs, i, &v.initial)?;
    let icfg = IntegratorConfig::new(v.step, v.horizon);
    icfg.validate()?;

    let (inv, rate) = relation_checks(&iso, v, cfg.seed)?;
    let ctrl = isolated_controller(&iso, ControllerChoice::IoLinearizing, v.eps)?;
    let isolated = simulate_isolated(&iso, ctrl.as_ref(), &init.x_i, &init.z, &icfg)?;
    let reconstructed = reconstruct_full(&isolated);
    let x0 = per_vertex_x(i, init.x_i.clone(), DVector::zeros(built.ccs.dims(i.other()).n_x));
    let full = simulate_full_cds(&built.ccs, companion_controllers(&iso, ctrl), &x0, &init.z, &icfg)?;
    let err = trajectory_error(&reconstructed, &full)?;
    let discrepancy = err.states.max.max(err.inputs.max).max(err.lambdas.max);

    let checks = vec![
        Check::new("relation_invariance", inv, v.relation_tolerance),
        Check::new("relation_coupling_rate", rate, v.relation_tolerance),
        Check::new("isolated_full_equivalence", discrepancy, v.tolerance),
        Check::new("coupling_drift_isolated", max_coupling_drift(&isolated), v.drift_tolerance),
        Check::new("coupling_drift_full", max_coupling_drift(&full), v.drift_tolerance),
    ];
    if checks.is_empty() {
        return Err(Error::Config("empty verification report".into()));
    }
    let passed = checks.iter().all(|c| c.passed);
    for c in &checks {
        println!("{} {:<26} {:.3e} (tolerance {:.1e})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.value, c.tolerance);
    }
    let report = json!({
        "model": built.name,
        "vertex": i,
        "passed": passed,
        "checks": checks,
        "samples": isolated.len(),
        "state_error": err.states,
    });
    write_json(&cfg.out.join("report.json"), &report)?;
    write_manifest(cfg, "verify", start, &["report.json"], json!({"passed": passed}))?;
    if passed {
        Ok(Outcome::Success)
    } else {
        let failing: Vec<&str> = checks.iter().filter(|c| !c.passed).map(|c| c.name.as_str()).collect();
        eprintln!("verification failed: {}", failing.join(", "));
        Ok(Outcome::CheckFailed)
    }
}

/// The orbit problem described by a run configuration.
pub fn orbit_spec(cfg: &RunConfig, built: &BuiltModel) -> Result<ProblemSpec> {
    let o = &cfg.optimize;
    let mut spec = ProblemSpec::new(Grid::new(o.k, o.period)?);
    spec.free_period = o.free_period;
    if let Some(b) = o.period_bounds {
        spec.period_bounds = b;
    }
    spec.cost = o.cost;
    spec.path = o.path.clone();
    spec.anchor = o.anchor;
    spec.center = o.center;
    spec.contraction = o.contraction;
    spec.fixes = o.fixes.clone();
    spec.reset = match o.reset {
        ResetChoice::Identity => ResetMap::Identity,
        ResetChoice::PlasticImpact => {
            let ex = built
                .example
                .as_ref()
                .ok_or_else(|| Error::Config("plastic_impact reset needs a mechanical model".into()))?;
            let half = Arc::new(ex.halves[cfg.vertex].clone());
            ResetMap::plastic_impact(half, ex.outputs[cfg.vertex].clone())
        }
    };
    Ok(spec)
}

pub fn cmd_optimize(cfg: &RunConfig) -> Result<Outcome> {
    let start = Instant::now();
    let built = build_model(&cfg.model, cfg.seed)?;
    let o = &cfg.optimize;
    let iso = IsolatedModel::new(&built.ccs, cfg.vertex);
    let problem = assemble(&iso, orbit_spec(cfg, &built)?)?;

    let mut x0 = problem.initial_guess(o.guess_amplitude);
    if o.guess_jitter > 0.0 {
        let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
        for v in x0.iter_mut() {
            *v += rng.random_range(-o.guess_jitter..o.guess_jitter);
        }
    }
    let violations = problem.bound_violations(&x0);
    for b in &violations {
        log::warn!("initial guess variable {} = {} outside [{}, {}]", b.index, b.value, b.lower, b.upper);
    }
    let sol = solve(&problem, &x0, &o.solver);
    let mut files = vec![
        "solution.csv".to_string(),
        "solution.json".to_string(),
        "iterations.csv".to_string(),
        "status.json".to_string(),
    ];

    let extracted = solution_to_trajectory(&sol.x, &problem);
    if let Ok((traj, _)) = &extracted {
        fs::write(cfg.out.join("solution.csv"), trajectory_csv(traj))?;
    } else {
        fs::write(cfg.out.join("solution.csv"), "")?;
    }
    write_json(
        &cfg.out.join("solution.json"),
        &json!({
            "status": sol.status,
            "cost": sol.cost,
            "eq_inf": sol.eq_inf,
            "ineq_violation": sol.ineq_violation,
            "stationarity": sol.stationarity,
            "iterations": sol.iterations,
            "period": problem.period(&sol.x),
            "n_variables": problem.n(),
            "n_equalities": problem.n_eq(),
            "n_inequalities": problem.n_ineq(),
            "x": sol.x.as_slice(),
        }),
    )?;
    let mut log_csv = String::from("iteration,outer,merit,feasibility,stationarity,step,rho\n");
    for r in &sol.log {
        let _ = writeln!(
            log_csv,
            "{},{},{:.16e},{:.16e},{:.16e},{:.16e},{:.16e}",
            r.iteration, r.outer, r.merit, r.feasibility, r.stationarity, r.step, r.rho
        );
    }
    fs::write(cfg.out.join("iterations.csv"), log_csv)?;

    let mut failing = Vec::new();
    if !sol.converged() {
        failing.push(format!("solver status {:?}", sol.status));
    }
    let postcheck = match &extracted {
        Ok((traj, check)) => {
            if check.resim_final_gap > o.resim_tolerance {
                failing.push("resimulation_gap".into());
            }
            if check.full_periodicity > o.periodicity_tolerance {
                failing.push("full_periodicity".into());
            }
            write_json(&cfg.out.join("postcheck.json"), check)?;
            files.push("postcheck.json".into());
            write_plots(&cfg.out, traj, &o.plots, &mut files);
            Some(check.clone())
        }
        Err(e) => {
            failing.push(format!("extraction failed: {e}"));
            None
        }
    };
    let passed = failing.is_empty();
    write_json(
        &cfg.out.join("status.json"),
        &json!({
            "status": sol.status,
            "converged": sol.converged(),
            "passed": passed,
            "failing": failing,
            "initial_bound_violations": violations,
        }),
    )?;
    println!(
        "{:?} after {} iterations: cost {:.6e}, equality {:.2e}, stationarity {:.2e}",
        sol.status, sol.iterations, sol.cost, sol.eq_inf, sol.stationarity
    );
    if let Some(c) = &postcheck {
        println!(
            "re-simulation gap {:.3e}, periodicity {:.3e}, full-order periodicity {:.3e}",
            c.resim_final_gap, c.periodicity, c.full_periodicity
        );
    }
    let refs: Vec<&str> = files.iter().map(String::as_str).collect();
    write_manifest(cfg, "optimize", start, &refs, json!({"solver_wall_time_s": sol.wall_time_s, "passed": passed}))?;
    if passed {
        Ok(Outcome::Success)
    } else {
        eprintln!("optimization failed: {}", failing.join("; "));
        Ok(Outcome::CheckFailed)
    }
}
