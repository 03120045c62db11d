//! Iterated steps: the piecewise-constant discrete flow and the
//! self-convergence study.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::path::PathBuf;
use std::sync::Arc;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde_json::Value;
use thiserror::Error;

use crate::anisotropy::Anisotropy;
use crate::diagnostics::{initial_record, record_step, DiagnosticsRecord};
use crate::geometry::{circle_points, ellipse_points, hausdorff_distance, resample_arclength, ClosedCurve, GeometryError, Vec2};
use crate::graph::sup_norm;
use crate::io::{load_curve_csv, IoError};
use crate::step::{StepError, StepMode, StepOptions, StepRegistry};

/// The run stops once `||psi||_inf / h` falls below this velocity.
pub const STATIONARY_VELOCITY: f64 = 1e-8;
/// Builtin initial curves are sampled this many times finer before resampling.
const OVERSAMPLE: usize = 16;

#[derive(Debug, Error)]
pub enum FlowError {
    #[error("invalid flow configuration: {0}")]
    Config(String),
    #[error("unknown initial curve `{0}`")]
    UnknownCurve(String),
    #[error("step {step}: {source}")]
    Step { step: usize, source: StepError },
    #[error("time {t} outside [0, {last}]")]
    OutOfRange { t: f64, last: f64 },
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Io(#[from] IoError),
}

/// Produces the points of an initial curve.
pub trait CurveGenerator: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn points(&self, n: usize) -> Vec<Vec2>;
}

#[derive(Debug, Clone, Copy)]
pub struct Circle {
    pub r: f64,
}

impl CurveGenerator for Circle {
    fn name(&self) -> &'static str {
        "circle"
    }

    fn points(&self, n: usize) -> Vec<Vec2> {
        circle_points(self.r, n)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct Ellipse {
    pub a: f64,
    pub b: f64,
}

impl CurveGenerator for Ellipse {
    fn name(&self) -> &'static str {
        "ellipse"
    }

    fn points(&self, n: usize) -> Vec<Vec2> {
        ellipse_points(self.a, self.b, n)
    }
}

/// `r(theta) = 1 + amp cos(mode theta + phase)`, with the phase drawn from the seed.
#[derive(Debug, Clone, Copy)]
pub struct PerturbedCircle {
    pub amp: f64,
    pub mode: u32,
    pub phase: f64,
}

impl CurveGenerator for PerturbedCircle {
    fn name(&self) -> &'static str {
        "perturbed_circle"
    }

    fn points(&self, n: usize) -> Vec<Vec2> {
        (0..n)
            .map(|k| {
                let t = TAU * k as f64 / n as f64;
                let r = 1.0 + self.amp * (self.mode as f64 * t + self.phase).cos();
                Vec2::new(r * t.cos(), r * t.sin())
            })
            .collect()
    }
}

pub type CurveFactory = fn(&Value, u64) -> Result<Box<dyn CurveGenerator>, FlowError>;

fn param(v: &Value, key: &str, default: Option<f64>) -> Result<f64, FlowError> {
    match v.get(key) {
        Some(x) => x.as_f64().ok_or_else(|| FlowError::Config(format!("`{key}` must be a number"))),
        None => default.ok_or_else(|| FlowError::Config(format!("missing `{key}`"))),
    }
}

fn positive(v: f64, key: &str) -> Result<f64, FlowError> {
    if v > 0.0 && v.is_finite() {
        Ok(v)
    } else {
        Err(FlowError::Config(format!("`{key}` must be positive")))
    }
}

/// Initial-curve generators by name.
#[derive(Clone)]
pub struct CurveRegistry {
    factories: BTreeMap<&'static str, CurveFactory>,
}

impl fmt::Debug for CurveRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl CurveRegistry {
    pub fn builtin() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register("circle", |v, _| Ok(Box::new(Circle { r: positive(param(v, "r", Some(1.0))?, "r")? })));
        r.register("ellipse", |v, _| {
            let a = positive(param(v, "a", None)?, "a")?;
            let b = positive(param(v, "b", None)?, "b")?;
            Ok(Box::new(Ellipse { a, b }))
        });
        r.register("perturbed_circle", |v, seed| {
            let amp = param(v, "amp", None)?;
            if !(0.0..1.0).contains(&amp) {
                return Err(FlowError::Config("`amp` must lie in [0,1)".into()));
            }
            let mode = param(v, "mode", None)?;
            if !(mode >= 1.0 && mode.fract() == 0.0) {
                return Err(FlowError::Config("`mode` must be a positive integer".into()));
            }
            let phase = ChaCha8Rng::seed_from_u64(seed).gen_range(0.0..TAU);
            Ok(Box::new(PerturbedCircle { amp, mode: mode as u32, phase }))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: CurveFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn build(&self, kind: &str, params: &Value, seed: u64) -> Result<Box<dyn CurveGenerator>, FlowError> {
        let f = self.factories.get(kind).ok_or_else(|| FlowError::UnknownCurve(kind.to_string()))?;
        f(params, seed)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum InitialCurve {
    /// A registered generator with its parameters as a JSON object.
    Builtin { kind: String, params: Value },
    /// A curve CSV file.
    File(PathBuf),
}

impl InitialCurve {
    pub fn builtin(kind: &str, params: Value) -> Self {
        InitialCurve::Builtin { kind: kind.to_string(), params }
    }

    pub fn circle() -> Self {
        Self::builtin("circle", Value::Null)
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Self::builtin("ellipse", serde_json::json!({ "a": a, "b": b }))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OutputConfig {
    /// Store every `snapshot_every`-th curve (the first and last are always kept).
    pub snapshot_every: usize,
    /// SVG overlays every `svg_every`-th snapshot.
    pub svg_every: usize,
    /// Draw the area-1 Wulff shape into the SVG.
    pub show_target: bool,
}

impl Default for OutputConfig {
    fn default() -> Self {
        Self { snapshot_every: 1, svg_every: 50, show_target: true }
    }
}

#[derive(Debug, Clone)]
pub struct FlowConfig {
    pub initial: InitialCurve,
    pub anisotropy: Anisotropy,
    pub h: f64,
    pub t_end: f64,
    pub n_nodes: usize,
    /// Admissibility radius; `None` uses half the tubular radius at each step.
    pub delta: Option<f64>,
    pub resample_every: usize,
    pub mode: StepMode,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub seed: u64,
    pub output: OutputConfig,
}

impl FlowConfig {
    pub fn new(initial: InitialCurve, anisotropy: Anisotropy, h: f64, t_end: f64) -> Self {
        Self {
            initial,
            anisotropy,
            h,
            t_end,
            n_nodes: 256,
            delta: None,
            resample_every: 1,
            mode: StepMode::Constrained,
            newton_tol: 1e-10,
            max_newton: 50,
            seed: 0,
            output: OutputConfig::default(),
        }
    }

    pub fn validate(&self) -> Result<(), FlowError> {
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(FlowError::Config(format!("h must lie in (0,1), got {}", self.h)));
        }
        if !(self.t_end > 0.0 && self.t_end.is_finite()) {
            return Err(FlowError::Config("t_end must be positive".into()));
        }
        if self.n_nodes < crate::geometry::MIN_NODES {
            return Err(FlowError::Config(format!("n_nodes must be at least {}", crate::geometry::MIN_NODES)));
        }
        if self.resample_every == 0 || self.output.snapshot_every == 0 || self.output.svg_every == 0 {
            return Err(FlowError::Config("cadences must be positive".into()));
        }
        self.step_options().validate().map_err(|e| FlowError::Config(e.to_string()))
    }

    pub fn step_options(&self) -> StepOptions {
        StepOptions { h: self.h, newton_tol: self.newton_tol, max_newton: self.max_newton, mode: self.mode, delta: self.delta }
    }

    /// Number of steps to reach `t_end`.
    pub fn n_steps(&self) -> usize {
        let r = self.t_end / self.h;
        if (r - r.round()).abs() <= 1e-9 * r.max(1.0) {
            r.round() as usize
        } else {
            r.ceil() as usize
        }
    }

    /// The initial curve, resampled to `n_nodes` equal chords and scaled to area 1.
    pub fn initial_curve(&self) -> Result<ClosedCurve, FlowError> {
        let raw = match &self.initial {
            InitialCurve::Builtin { kind, params } => {
                let gen = CurveRegistry::builtin().build(kind, params, self.seed)?;
                ClosedCurve::new(gen.points(OVERSAMPLE * self.n_nodes))?
            }
            InitialCurve::File(path) => ClosedCurve::new(load_curve_csv(path)?)?,
        };
        Ok(resample_arclength(&raw, self.n_nodes)?.with_area(1.0)?)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TerminationReason {
    ReachedTEnd,
    Stationary,
    LeftTube,
    SolverFailed,
}

impl TerminationReason {
    pub fn as_str(&self) -> &'static str {
        match self {
            TerminationReason::ReachedTEnd => "reached_t_end",
            TerminationReason::Stationary => "stationary",
            TerminationReason::LeftTube => "left_tube",
            TerminationReason::SolverFailed => "solver_failed",
        }
    }

    pub fn is_success(&self) -> bool {
        matches!(self, TerminationReason::ReachedTEnd | TerminationReason::Stationary)
    }
}

impl fmt::Display for TerminationReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone)]
pub struct Snapshot {
    pub step: usize,
    pub t: f64,
    pub curve: ClosedCurve,
    pub lambda: f64,
    pub d_l2: f64,
}

#[derive(Debug, Clone)]
pub struct FlowTrajectory {
    h: f64,
    anisotropy: Anisotropy,
    times: Vec<f64>,
    snapshots: Vec<Snapshot>,
    diagnostics: Vec<DiagnosticsRecord>,
    terminated_reason: TerminationReason,
    failure: Option<(usize, StepError)>,
}

impl FlowTrajectory {
    pub fn h(&self) -> f64 {
        self.h
    }

    pub fn anisotropy(&self) -> &Anisotropy {
        &self.anisotropy
    }

    /// `k h` for every completed step, starting at 0.
    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn snapshots(&self) -> &[Snapshot] {
        &self.snapshots
    }

    pub fn diagnostics(&self) -> &[DiagnosticsRecord] {
        &self.diagnostics
    }

    pub fn terminated_reason(&self) -> TerminationReason {
        self.terminated_reason
    }

    /// The failing step and its error, when the run did not succeed.
    pub fn failure(&self) -> Option<&(usize, StepError)> {
        self.failure.as_ref()
    }

    pub fn steps(&self) -> usize {
        self.times.len() - 1
    }

    pub fn initial(&self) -> &ClosedCurve {
        &self.snapshots[0].curve
    }

    pub fn last(&self) -> &ClosedCurve {
        &self.snapshots.last().expect("trajectory has a snapshot").curve
    }
}

/// `E_t = E_{kh}` for `t in [kh, (k+1)h)`. With a sparse snapshot cadence the
/// latest stored curve at or before step `k` is returned.
pub fn interpolate_at(traj: &FlowTrajectory, t: f64) -> Result<&ClosedCurve, FlowError> {
    let last = *traj.times.last().expect("trajectory has a time");
    if !(t >= 0.0 && t <= last) {
        return Err(FlowError::OutOfRange { t, last });
    }
    let k = traj.times.partition_point(|&s| s <= t) - 1;
    let idx = traj.snapshots.partition_point(|s| s.step <= k) - 1;
    Ok(&traj.snapshots[idx].curve)
}

/// Runs the scheme from the configured initial curve. Step failures end the
/// run with a reason code; only configuration and input errors are returned.
pub fn run_flow(cfg: &FlowConfig) -> Result<FlowTrajectory, FlowError> {
    cfg.validate()?;
    let a = &cfg.anisotropy;
    let h = cfg.h;
    let strategy = StepRegistry::builtin().get(cfg.mode.name()).map_err(|e| FlowError::Config(e.to_string()))?;
    let opts = cfg.step_options();
    let n_steps = cfg.n_steps();

    let mut e = Arc::new(cfg.initial_curve()?);
    let mut traj = FlowTrajectory {
        h,
        anisotropy: a.clone(),
        times: vec![0.0],
        snapshots: vec![Snapshot { step: 0, t: 0.0, curve: (*e).clone(), lambda: crate::step::lagrange_multiplier_estimate(&e, a), d_l2: 0.0 }],
        diagnostics: vec![initial_record(&e, a, h)],
        terminated_reason: TerminationReason::ReachedTEnd,
        failure: None,
    };

    for k in 1..=n_steps {
        let result = match strategy.solve(&e, a, &opts) {
            Ok(r) if r.accepted => r,
            Ok(r) => {
                let err = StepError::NewtonDiverged { iters: r.newton_iters, residual: r.kkt_residual };
                traj.terminated_reason = TerminationReason::SolverFailed;
                traj.failure = Some((k, err));
                break;
            }
            Err(err) => {
                traj.terminated_reason = match err {
                    StepError::GraphLeavesTube { .. } | StepError::SelfIntersecting(_) => TerminationReason::LeftTube,
                    _ => TerminationReason::SolverFailed,
                };
                traj.failure = Some((k, err));
                break;
            }
        };
        traj.diagnostics.push(record_step(&e, &result, a, h, k));
        traj.times.push(k as f64 * h);
        let velocity = sup_norm(result.psi.psi()) / h;

        // Keep the resampled curve only if it does not raise the energy, so the
        // dissipation chain across steps stays exact.
        let mut next = result.curve.clone();
        if k % cfg.resample_every == 0 {
            if let Ok(r) = resample_arclength(&next, cfg.n_nodes) {
                if a.perimeter(&r) <= a.perimeter(&next) && (r.enclosed_area() - 1.0).abs() <= (next.enclosed_area() - 1.0).abs().max(1e-14) {
                    next = r;
                }
            }
        }
        let stationary = velocity <= STATIONARY_VELOCITY;
        if k % cfg.output.snapshot_every == 0 || k == n_steps || stationary {
            traj.snapshots.push(Snapshot { step: k, t: k as f64 * h, curve: next.clone(), lambda: result.lambda, d_l2: result.energy_after_terms.distance });
        }
        e = Arc::new(next);
        if stationary {
            traj.terminated_reason = TerminationReason::Stationary;
            break;
        }
    }
    if let Some(last) = traj.snapshots.last() {
        let final_step = traj.steps();
        if last.step != final_step {
            let d = traj.diagnostics.last().map(|r| (r.lambda, r.d_l2)).unwrap_or((0.0, 0.0));
            traj.snapshots.push(Snapshot { step: final_step, t: final_step as f64 * h, curve: (*e).clone(), lambda: d.0, d_l2: d.1 });
        }
    }
    Ok(traj)
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceRow {
    pub h_coarse: f64,
    pub h_fine: f64,
    /// Hausdorff distance between the two final curves.
    pub distance: f64,
    /// `log(d_prev / d) / log(h_prev / h)` against the previous row.
    pub order: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceTable {
    pub t_end: f64,
    pub rows: Vec<ConvergenceRow>,
}

impl ConvergenceTable {
    /// Order from the finest pair of rows.
    pub fn observed_order(&self) -> Option<f64> {
        self.rows.iter().rev().find_map(|r| r.order)
    }

    pub fn to_csv(&self) -> String {
        let mut s = String::from("h_coarse,h_fine,distance,order\n");
        for r in &self.rows {
            let order = r.order.map(|p| p.to_string()).unwrap_or_default();
            s.push_str(&format!("{},{},{},{}\n", r.h_coarse, r.h_fine, r.distance, order));
        }
        s
    }
}

/// Runs one trajectory per `h` in parallel and compares final curves of
/// successive refinements.
pub fn self_convergence_study(cfg: &FlowConfig, h_list: &[f64]) -> Result<ConvergenceTable, FlowError> {
    if h_list.len() < 3 {
        return Err(FlowError::Config("convergence study needs at least three time steps".into()));
    }
    if h_list.windows(2).any(|w| !(w[1] < w[0])) {
        return Err(FlowError::Config("time steps must be strictly decreasing".into()));
    }
    for &h in h_list {
        let r = cfg.t_end / h;
        if (r - r.round()).abs() > 1e-9 * r {
            return Err(FlowError::Config(format!("t_end = {} is not a multiple of h = {h}", cfg.t_end)));
        }
    }
    let finals: Vec<Result<ClosedCurve, FlowError>> = h_list
        .par_iter()
        .map(|&h| {
            let mut c = cfg.clone();
            c.h = h;
            let traj = run_flow(&c)?;
            match traj.failure {
                Some((step, source)) => Err(FlowError::Step { step, source }),
                None => Ok(traj.last().clone()),
            }
        })
        .collect();
    let finals = finals.into_iter().collect::<Result<Vec<_>, _>>()?;
    let mut rows: Vec<ConvergenceRow> = Vec::new();
    for i in 0..finals.len() - 1 {
        let distance = hausdorff_distance(&finals[i], &finals[i + 1]);
        let order = rows.last().map(|prev| (prev.distance / distance).ln() / (prev.h_fine / h_list[i + 1]).ln());
        rows.push(ConvergenceRow { h_coarse: h_list[i], h_fine: h_list[i + 1], distance, order });
    }
    Ok(ConvergenceTable { t_end: cfg.t_end, rows })
}
