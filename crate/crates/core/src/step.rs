//! One minimizing-movements step.
//!
//! The unknowns are the heights `psi_i` of the next curve over the nodes of the
//! previous one, `p_i = x_i + psi_i nu_i`, plus the multiplier `lambda`. The
//! discrete energy is the exact anisotropic perimeter of the polygon `p`
//! plus `(1/2h) sum xi_i^2 w_i`, and the volume constraint is the exact
//! shoelace area of `p`. Both are smooth in `psi` and couple only neighbouring
//! nodes, so every Hessian is periodic tridiagonal.

use std::collections::BTreeMap;
use std::fmt;
use std::sync::Arc;

use thiserror::Error;

use crate::anisotropy::{Anisotropy, Mat2};
use crate::geometry::{cross, rot_cw, tubular_radius, ClosedCurve, GeometryError, Vec2};
use crate::graph::{graph_to_curve, sup_norm, xi_from_height, GraphError, HeightField};
use crate::linalg::PeriodicTridiag;

/// Constraint tolerance for an accepted constrained step.
pub const AREA_TOL: f64 = 1e-12;
/// Slack in the energy comparison against the previous curve.
pub const ENERGY_SLACK: f64 = 1e-12;
/// Smoothing of the penalty `|c| ~ sqrt(c^2 + PENALTY_SMOOTHING)`.
pub const PENALTY_SMOOTHING: f64 = 1e-16;
/// Largest volume error tolerated from the penalized solve.
pub const PENALTY_VOLUME_TOL: f64 = 1e-6;
/// Precondition on the area of the reference curve.
pub const UNIT_AREA_TOL: f64 = 1e-9;

const ARMIJO: f64 = 1e-4;
const MAX_HALVINGS: usize = 40;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("Newton iteration stalled after {iters} iterations (residual {residual:e})")]
    NewtonDiverged { iters: usize, residual: f64 },
    #[error("step leaves the admissible tube: |psi|_inf = {psi_inf:e} > {limit:e}")]
    GraphLeavesTube { psi_inf: f64, limit: f64 },
    #[error("step produced a non-simple curve: {0}")]
    SelfIntersecting(GeometryError),
    #[error("penalty too weak: volume error {0:e} at convergence")]
    PenaltyTooWeak(f64),
    #[error("reference curve must have unit area, got {0}")]
    AreaNotNormalized(f64),
    #[error("invalid step options: {0}")]
    InvalidOptions(String),
    #[error("unknown step mode `{0}`")]
    UnknownMode(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

impl From<GraphError> for StepError {
    fn from(e: GraphError) -> Self {
        match e {
            GraphError::GraphLeavesTube { psi_inf, limit } => StepError::GraphLeavesTube { psi_inf, limit },
            GraphError::Geometry(g @ GeometryError::SelfIntersecting(..)) => StepError::SelfIntersecting(g),
            GraphError::Geometry(g) => StepError::Geometry(g),
            other => StepError::InvalidOptions(other.to_string()),
        }
    }
}

/// How the volume constraint is imposed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepMode {
    Constrained,
    /// Exact penalty with weight `sigma`; `None` picks `10 (1 + max|kappa^phi|)`.
    Penalized { sigma: Option<f64> },
}

impl StepMode {
    pub fn name(&self) -> &'static str {
        match self {
            StepMode::Constrained => "constrained",
            StepMode::Penalized { .. } => "penalized",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOptions {
    pub h: f64,
    pub newton_tol: f64,
    pub max_newton: usize,
    pub mode: StepMode,
    /// Admissibility radius; `None` means half the tubular radius.
    pub delta: Option<f64>,
}

impl StepOptions {
    pub fn new(h: f64) -> Self {
        Self { h, newton_tol: 1e-10, max_newton: 50, mode: StepMode::Constrained, delta: None }
    }

    pub fn with_mode(mut self, mode: StepMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<(), StepError> {
        if !(self.h > 0.0 && self.h < 1.0) {
            return Err(StepError::InvalidOptions(format!("h must lie in (0,1), got {}", self.h)));
        }
        if !(self.newton_tol > 0.0) {
            return Err(StepError::InvalidOptions("newton_tol must be positive".into()));
        }
        if self.max_newton == 0 {
            return Err(StepError::InvalidOptions("max_newton must be positive".into()));
        }
        if let Some(d) = self.delta {
            if !(d > 0.0) {
                return Err(StepError::InvalidOptions("delta must be positive".into()));
            }
        }
        if let StepMode::Penalized { sigma: Some(s) } = self.mode {
            if !(s > 0.0) {
                return Err(StepError::InvalidOptions("penalty weight must be positive".into()));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyTerms {
    pub perimeter: f64,
    /// `d_L2(F; E)`, not squared.
    pub distance: f64,
}

#[derive(Debug, Clone)]
pub struct StepResult {
    pub psi: HeightField,
    pub lambda: f64,
    pub newton_iters: usize,
    pub kkt_residual: f64,
    pub energy_before: f64,
    pub energy_after_terms: EnergyTerms,
    pub accepted: bool,
    /// The new curve rebuilt from `psi`.
    pub curve: ClosedCurve,
}

impl StepResult {
    pub fn energy_after(&self, h: f64) -> f64 {
        let d = self.energy_after_terms.distance;
        self.energy_after_terms.perimeter + d * d / (2.0 * h)
    }
}

/// Everything the solvers need at one iterate.
struct State {
    objective: f64,
    area: f64,
    grad_obj: Vec<f64>,
    grad_area: Vec<f64>,
    hess_obj: PeriodicTridiag,
    hess_area_off: Vec<f64>,
}

/// `f(e) = phi(R e)` with `R = rot_cw`; returns value, gradient and Hessian in `e`.
fn edge_eval(a: &Anisotropy, e: Vec2) -> (f64, Vec2, Mat2) {
    let ev = a.eval(rot_cw(e));
    let r = Mat2::new(0.0, 1.0, -1.0, 0.0);
    (ev.value, r.transpose() * ev.grad, r.transpose() * ev.hess * r)
}

fn eval_state(e: &ClosedCurve, a: &Anisotropy, h: f64, psi: &[f64], with_hessian: bool) -> State {
    let n = e.len();
    let x = e.nodes();
    let nu = e.normals();
    let k = e.curvature();
    let w = e.arc_weights();
    let p: Vec<Vec2> = (0..n).map(|i| x[i] + nu[i] * psi[i]).collect();

    let mut perimeter = 0.0;
    let mut area = 0.0;
    let mut edge_grad = Vec::with_capacity(n);
    let mut edge_hess = Vec::with_capacity(n);
    for i in 0..n {
        let j = (i + 1) % n;
        let (v, g, hm) = edge_eval(a, p[j] - p[i]);
        perimeter += v;
        area += cross(p[i], p[j]);
        edge_grad.push(g);
        edge_hess.push(hm);
    }
    area *= 0.5;

    let mut dist_sq = 0.0;
    let mut grad_obj = vec![0.0; n];
    let mut grad_area = vec![0.0; n];
    let mut hess_obj = PeriodicTridiag::zeros(if with_hessian { n } else { 0 });
    let mut hess_area_off = vec![0.0; if with_hessian { n } else { 0 }];
    for i in 0..n {
        let prev = (i + n - 1) % n;
        let next = (i + 1) % n;
        let s = 1.0 + k[i] * psi[i];
        let xi = psi[i] + 0.5 * k[i] * psi[i] * psi[i];
        dist_sq += xi * xi * w[i];
        grad_obj[i] = (edge_grad[prev] - edge_grad[i]).dot(&nu[i]) + xi * s * w[i] / h;
        grad_area[i] = 0.5 * cross(nu[i], p[next] - p[prev]);
        if with_hessian {
            hess_obj.diag[i] = nu[i].dot(&((edge_hess[prev] + edge_hess[i]) * nu[i])) + (s * s + xi * k[i]) * w[i] / h;
            hess_obj.off[i] = -nu[i].dot(&(edge_hess[i] * nu[next]));
            hess_area_off[i] = 0.5 * cross(nu[i], nu[next]);
        }
    }
    State {
        objective: perimeter + dist_sq / (2.0 * h),
        area,
        grad_obj,
        grad_area,
        hess_obj,
        hess_area_off,
    }
}

/// Discrete step energy `P_phi(F) + d_L2(F;E)^2 / (2h)`, with `P_phi(F)` the
/// anisotropic perimeter of the graph polygon.
pub fn objective(hf: &HeightField, a: &Anisotropy, h: f64) -> f64 {
    eval_state(hf.reference(), a, h, hf.psi(), false).objective
}

/// Gradient of [`objective`] in the nodal heights.
pub fn objective_gradient(hf: &HeightField, a: &Anisotropy, h: f64) -> Vec<f64> {
    eval_state(hf.reference(), a, h, hf.psi(), false).grad_obj
}

/// Exact area of the graph polygon and its gradient in the nodal heights.
pub fn graph_area(hf: &HeightField) -> (f64, Vec<f64>) {
    let st = eval_state(hf.reference(), &Anisotropy::euclidean(), 1.0, hf.psi(), false);
    (st.area, st.grad_area)
}

/// Dense-free view of the Lagrangian Hessian `Hess objective - lambda Hess area`.
pub fn lagrangian_hessian(hf: &HeightField, a: &Anisotropy, h: f64, lambda: f64) -> PeriodicTridiag {
    let st = eval_state(hf.reference(), a, h, hf.psi(), true);
    lagrangian(&st, lambda)
}

fn lagrangian(st: &State, lambda: f64) -> PeriodicTridiag {
    let mut hl = st.hess_obj.clone();
    for (o, ha) in hl.off.iter_mut().zip(&st.hess_area_off) {
        *o -= lambda * ha;
    }
    hl
}

fn residual(st: &State, lambda: f64) -> Vec<f64> {
    st.grad_obj.iter().zip(&st.grad_area).map(|(g, ga)| g / ga - lambda).collect()
}

/// Nodewise Euler-Lagrange residual `xi/h + kappa^phi_F - lambda` in its
/// discrete form: the stationarity condition of the Lagrangian at node `i`
/// divided by the area sensitivity of that node. The ratio
/// `(dP/dpsi_i) / (dA/dpsi_i)` is the anisotropic curvature of the polygon.
pub fn el_residual(hf: &HeightField, a: &Anisotropy, h: f64, lambda: f64) -> Vec<f64> {
    residual(&eval_state(hf.reference(), a, h, hf.psi(), false), lambda)
}

/// Arc-length average of `kappa^phi`.
pub fn lagrange_multiplier_estimate(f: &ClosedCurve, a: &Anisotropy) -> f64 {
    let kphi = a.anisotropic_curvature(f);
    f.integrate(&kphi) / f.arc_weights().iter().sum::<f64>()
}

/// Semi-implicit linearized step `((1/h) I + L_g) psi = -kappa^phi + lambda`
/// with zero mean, `L_g` the three-point discretization of `-g d_tau^2`.
/// Returns the heights and the multiplier.
pub fn linearized_guess(e: &ClosedCurve, a: &Anisotropy, h: f64) -> Option<(Vec<f64>, f64)> {
    let n = e.len();
    let x = e.nodes();
    let w = e.arc_weights();
    let kphi = a.anisotropic_curvature(e);
    let g: Vec<f64> = e.normals().iter().map(|nu| a.g(*nu)).collect();
    let len: Vec<f64> = (0..n).map(|i| (x[(i + 1) % n] - x[i]).norm()).collect();
    // multiplied through by w/g to make the operator symmetric
    let mut m = PeriodicTridiag::zeros(n);
    for i in 0..n {
        let prev = (i + n - 1) % n;
        m.diag[i] = w[i] / (g[i] * h) + 1.0 / len[prev] + 1.0 / len[i];
        m.off[i] = -1.0 / len[i];
    }
    let rhs_k: Vec<f64> = (0..n).map(|i| -w[i] * kphi[i] / g[i]).collect();
    let rhs_1: Vec<f64> = (0..n).map(|i| w[i] / g[i]).collect();
    let pa = m.solve(&rhs_k)?;
    let pb = m.solve(&rhs_1)?;
    let lambda = -e.integrate(&pa) / e.integrate(&pb);
    Some(((0..n).map(|i| pa[i] + lambda * pb[i]).collect(), lambda))
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn axpy(x: &[f64], alpha: f64, d: &[f64]) -> Vec<f64> {
    x.iter().zip(d).map(|(x, d)| x + alpha * d).collect()
}

/// Least-squares multiplier for a given gradient.
fn ls_multiplier(st: &State) -> f64 {
    dot(&st.grad_obj, &st.grad_area) / dot(&st.grad_area, &st.grad_area)
}

struct Prepared {
    limit: f64,
    psi0: Vec<f64>,
    lambda0: f64,
    energy_before: f64,
}

fn prepare(e: &ClosedCurve, a: &Anisotropy, opts: &StepOptions) -> Result<Prepared, StepError> {
    opts.validate()?;
    if (e.enclosed_area() - 1.0).abs() > UNIT_AREA_TOL {
        return Err(StepError::AreaNotNormalized(e.enclosed_area()));
    }
    let sigma = tubular_radius(e)?.sigma;
    let limit = opts.delta.unwrap_or(0.5 * sigma).min(sigma);
    let n = e.len();
    let (mut psi0, _) = linearized_guess(e, a, opts.h).unwrap_or((vec![0.0; n], 0.0));
    let sup = sup_norm(&psi0);
    if !(sup <= 0.5 * limit) {
        psi0 = if sup.is_finite() { psi0.iter().map(|p| p * 0.5 * limit / sup).collect() } else { vec![0.0; n] };
    }
    let st = eval_state(e, a, opts.h, &psi0, false);
    Ok(Prepared { limit, lambda0: ls_multiplier(&st), psi0, energy_before: a.perimeter(e) })
}

#[allow(clippy::too_many_arguments)]
fn finish(
    e: &Arc<ClosedCurve>,
    a: &Anisotropy,
    opts: &StepOptions,
    prep: &Prepared,
    psi: Vec<f64>,
    lambda: f64,
    iters: usize,
    kkt_residual: f64,
    constraint_ok: bool,
) -> Result<StepResult, StepError> {
    let psi_inf = sup_norm(&psi);
    if !(psi_inf <= prep.limit) {
        return Err(StepError::GraphLeavesTube { psi_inf, limit: prep.limit });
    }
    let hf = HeightField::new(e.clone(), psi, prep.limit)?;
    let curve = graph_to_curve(&hf)?;
    let perimeter = a.perimeter(&curve);
    let distance = e.l2_norm(&xi_from_height(&hf).0);
    let after = perimeter + distance * distance / (2.0 * opts.h);
    let accepted = kkt_residual <= opts.newton_tol && constraint_ok && after <= prep.energy_before + ENERGY_SLACK;
    Ok(StepResult {
        psi: hf,
        lambda,
        newton_iters: iters,
        kkt_residual,
        energy_before: prep.energy_before,
        energy_after_terms: EnergyTerms { perimeter, distance },
        accepted,
        curve,
    })
}

/// Newton on the KKT system of `min objective s.t. area = 1`.
pub fn solve_step(e: &Arc<ClosedCurve>, a: &Anisotropy, opts: &StepOptions) -> Result<StepResult, StepError> {
    let prep = prepare(e, a, opts)?;
    let h = opts.h;
    let mut psi = prep.psi0.clone();
    let mut lambda = prep.lambda0;
    let kkt = |st: &State, lambda: f64| sup_norm(&residual(st, lambda)).max((st.area - 1.0).abs());

    for iter in 0..=opts.max_newton {
        let st = eval_state(e, a, h, &psi, true);
        let c = st.area - 1.0;
        let res = sup_norm(&residual(&st, lambda));
        if res <= opts.newton_tol && c.abs() <= 0.1 * AREA_TOL {
            return finish(e, a, opts, &prep, psi, lambda, iter, res.max(c.abs()), true);
        }
        if iter == opts.max_newton {
            return Err(StepError::NewtonDiverged { iters: iter, residual: res.max(c.abs()) });
        }

        let hl = lagrangian(&st, lambda);
        let grad_l: Vec<f64> = st.grad_obj.iter().zip(&st.grad_area).map(|(g, ga)| -(g - lambda * ga)).collect();
        let stalled = || StepError::NewtonDiverged { iters: iter, residual: res.max(c.abs()) };
        let u = hl.solve(&grad_l).ok_or_else(stalled)?;
        let v = hl.solve(&st.grad_area).ok_or_else(stalled)?;
        let gv = dot(&st.grad_area, &v);
        if gv == 0.0 || !gv.is_finite() {
            return Err(stalled());
        }
        let dlambda = (-c - dot(&st.grad_area, &u)) / gv;
        let dpsi = axpy(&u, dlambda, &v);

        let new_lambda = lambda + dlambda;
        let mu = new_lambda.abs() + 1.0;
        let merit0 = st.objective + mu * c.abs();
        let slope = dot(&st.grad_obj, &dpsi) - mu * c.abs();
        let res0 = res.max(c.abs());
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = axpy(&psi, alpha, &dpsi);
            if sup_norm(&trial) <= prep.limit {
                let ts = eval_state(e, a, h, &trial, false);
                let tl = lambda + alpha * dlambda;
                let merit = ts.objective + mu * (ts.area - 1.0).abs();
                let noise = 8.0 * f64::EPSILON * (1.0 + merit0.abs());
                if merit <= merit0 + ARMIJO * alpha * slope.min(0.0) + noise || kkt(&ts, tl) <= 0.5 * res0 {
                    psi = trial;
                    lambda = tl;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            let psi_inf = sup_norm(&axpy(&psi, 1.0, &dpsi));
            if psi_inf > prep.limit {
                return Err(StepError::GraphLeavesTube { psi_inf, limit: prep.limit });
            }
            return Err(stalled());
        }
    }
    unreachable!()
}

/// Default penalty weight `10 (1 + max|kappa^phi|)`.
pub fn default_penalty(e: &ClosedCurve, a: &Anisotropy) -> f64 {
    10.0 * (1.0 + sup_norm(&a.anisotropic_curvature(e)))
}

/// Unconstrained minimization of `objective + sigma sqrt((area - 1)^2 + eps)`.
///
/// The rank-one curvature of the penalty is replaced by its majorizer
/// `sigma / s(c)`, which keeps every Newton matrix positive definite near the
/// kink. The reported multiplier is the least-squares fit of the objective
/// gradient to the area gradient, and the residual measures stationarity
/// only, since the volume is a soft constraint here.
pub fn solve_step_penalized(e: &Arc<ClosedCurve>, a: &Anisotropy, opts: &StepOptions) -> Result<StepResult, StepError> {
    let prep = prepare(e, a, opts)?;
    let h = opts.h;
    let sigma = match opts.mode {
        StepMode::Penalized { sigma: Some(s) } => s,
        _ => default_penalty(e, a),
    };
    let smooth = |c: f64| (c * c + PENALTY_SMOOTHING).sqrt();
    let mut psi = prep.psi0.clone();

    for iter in 0..=opts.max_newton {
        let st = eval_state(e, a, h, &psi, true);
        let c = st.area - 1.0;
        let s = smooth(c);
        let lam_hat = ls_multiplier(&st);
        let res = sup_norm(&residual(&st, lam_hat));

        let grad: Vec<f64> = st.grad_obj.iter().zip(&st.grad_area).map(|(g, ga)| g + sigma * c / s * ga).collect();
        let hl = lagrangian(&st, -sigma * c / s);
        let neg: Vec<f64> = grad.iter().map(|g| -g).collect();
        let stalled = || StepError::NewtonDiverged { iters: iter, residual: res };
        let dpsi = hl.solve_rank_one(sigma / s, &st.grad_area, &neg).ok_or_else(stalled)?;
        let dc = dot(&st.grad_area, &dpsi);

        if res <= opts.newton_tol && dc.abs() <= 1e-14 {
            if c.abs() > PENALTY_VOLUME_TOL {
                return Err(StepError::PenaltyTooWeak(c.abs()));
            }
            return finish(e, a, opts, &prep, psi, lam_hat, iter, res, true);
        }
        if iter == opts.max_newton {
            if c.abs() > PENALTY_VOLUME_TOL {
                return Err(StepError::PenaltyTooWeak(c.abs()));
            }
            return Err(stalled());
        }

        let f0 = st.objective + sigma * s;
        let slope = dot(&grad, &dpsi);
        let mut alpha = 1.0;
        let mut accepted = false;
        for _ in 0..MAX_HALVINGS {
            let trial = axpy(&psi, alpha, &dpsi);
            if sup_norm(&trial) <= prep.limit {
                let ts = eval_state(e, a, h, &trial, false);
                let f = ts.objective + sigma * smooth(ts.area - 1.0);
                let noise = 8.0 * f64::EPSILON * (1.0 + f0.abs());
                if f <= f0 + ARMIJO * alpha * slope.min(0.0) + noise {
                    psi = trial;
                    accepted = true;
                    break;
                }
            }
            alpha *= 0.5;
        }
        if !accepted {
            if c.abs() > PENALTY_VOLUME_TOL {
                return Err(StepError::PenaltyTooWeak(c.abs()));
            }
            return Err(stalled());
        }
    }
    unreachable!()
}

/// A way of solving one step, selected by name at runtime.
pub trait StepStrategy: Send + Sync + fmt::Debug {
    fn name(&self) -> &'static str;
    fn solve(&self, e: &Arc<ClosedCurve>, a: &Anisotropy, opts: &StepOptions) -> Result<StepResult, StepError>;
}

#[derive(Debug, Clone, Copy)]
pub struct ConstrainedNewton;

impl StepStrategy for ConstrainedNewton {
    fn name(&self) -> &'static str {
        "constrained"
    }

    fn solve(&self, e: &Arc<ClosedCurve>, a: &Anisotropy, opts: &StepOptions) -> Result<StepResult, StepError> {
        solve_step(e, a, opts)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct PenalizedNewton;

impl StepStrategy for PenalizedNewton {
    fn name(&self) -> &'static str {
        "penalized"
    }

    fn solve(&self, e: &Arc<ClosedCurve>, a: &Anisotropy, opts: &StepOptions) -> Result<StepResult, StepError> {
        solve_step_penalized(e, a, opts)
    }
}

pub type StrategyFactory = fn() -> Box<dyn StepStrategy>;

/// Step strategies by name.
#[derive(Clone)]
pub struct StepRegistry {
    factories: BTreeMap<&'static str, StrategyFactory>,
}

impl fmt::Debug for StepRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl StepRegistry {
    pub fn builtin() -> Self {
        let mut r = Self { factories: BTreeMap::new() };
        r.register("constrained", || Box::new(ConstrainedNewton));
        r.register("penalized", || Box::new(PenalizedNewton));
        r
    }

    pub fn register(&mut self, name: &'static str, factory: StrategyFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    pub fn get(&self, name: &str) -> Result<Box<dyn StepStrategy>, StepError> {
        self.factories.get(name).map(|f| f()).ok_or_else(|| StepError::UnknownMode(name.to_string()))
    }
}
