//! Normal graphs over a reference curve.
//!
//! A [`HeightField`] `psi` over `E` describes the curve `x + psi(x) nu_E(x)`.
//! This module evaluates the graph-side formulas (normal, Jacobian,
//! perimeter, the thickness function `xi`, the L2 distance and the volume
//! change) and the brute-force ray scanner used to cross-check `xi`.

use std::sync::Arc;

use thiserror::Error;

use crate::anisotropy::Anisotropy;
use crate::geometry::{tubular_radius, ClosedCurve, GeometryError, Vec2};

/// Samples per normal ray in [`xi_scan`].
pub const SCAN_SAMPLES: usize = 512;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GraphError {
    #[error("height field leaves the admissible tube: |psi|_inf = {psi_inf:e} > {limit:e}")]
    GraphLeavesTube { psi_inf: f64, limit: f64 },
    #[error("height field has {got} values for {expected} reference nodes")]
    LengthMismatch { expected: usize, got: usize },
    #[error("symmetric difference leaves the sigma-tube along the ray at node {0}")]
    NotInTube(usize),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Height function over a reference curve.
#[derive(Debug, Clone)]
pub struct HeightField {
    reference: Arc<ClosedCurve>,
    psi: Vec<f64>,
    bound: f64,
}

impl HeightField {
    /// Checks `|psi|_inf <= min(bound, sigma_E)`.
    pub fn new(reference: Arc<ClosedCurve>, psi: Vec<f64>, bound: f64) -> Result<Self, GraphError> {
        if psi.len() != reference.len() {
            return Err(GraphError::LengthMismatch { expected: reference.len(), got: psi.len() });
        }
        let sigma = tubular_radius(&reference)?.sigma;
        let limit = bound.min(sigma);
        let psi_inf = sup_norm(&psi);
        if !(psi_inf <= limit) {
            return Err(GraphError::GraphLeavesTube { psi_inf, limit });
        }
        Ok(Self { reference, psi, bound })
    }

    /// `psi = 0` with the bound set to the tubular radius.
    pub fn zero(reference: Arc<ClosedCurve>) -> Result<Self, GraphError> {
        let sigma = tubular_radius(&reference)?.sigma;
        let n = reference.len();
        Self::new(reference, vec![0.0; n], sigma)
    }

    pub fn reference(&self) -> &ClosedCurve {
        &self.reference
    }

    pub fn reference_arc(&self) -> &Arc<ClosedCurve> {
        &self.reference
    }

    pub fn psi(&self) -> &[f64] {
        &self.psi
    }

    pub fn bound(&self) -> f64 {
        self.bound
    }

    pub fn into_psi(self) -> Vec<f64> {
        self.psi
    }
}

pub fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0_f64, |m, x| m.max(x.abs()))
}

/// `xi_{F,E}` sampled at the reference nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct XiField(pub Vec<f64>);

impl XiField {
    pub fn values(&self) -> &[f64] {
        &self.0
    }
}

/// Graph nodes `x_i + psi_i nu_i` without any validation.
pub fn graph_nodes(hf: &HeightField) -> Vec<Vec2> {
    let e = hf.reference();
    e.nodes().iter().zip(e.normals()).zip(&hf.psi).map(|((x, nu), p)| x + nu * *p).collect()
}

/// Rebuilds the graph as a curve, recomputing every differential quantity.
pub fn graph_to_curve(hf: &HeightField) -> Result<ClosedCurve, GraphError> {
    Ok(ClosedCurve::new(graph_nodes(hf))?)
}

/// Closed-form outer normal of the graph at each node:
/// `(-(d_tau psi) tau + (1 + psi kappa) nu) / J`.
pub fn normal_from_height(hf: &HeightField) -> Vec<Vec2> {
    let e = hf.reference();
    let dpsi = e.d_tau(&hf.psi);
    (0..e.len())
        .map(|i| {
            let v = -e.tangents()[i] * dpsi[i] + e.normals()[i] * (1.0 + hf.psi[i] * e.curvature()[i]);
            v / v.norm()
        })
        .collect()
}

/// Tangential Jacobian `sqrt((1 + psi kappa)^2 + (d_tau psi)^2)` of the graph map.
pub fn jacobian(hf: &HeightField) -> Vec<f64> {
    let e = hf.reference();
    let dpsi = e.d_tau(&hf.psi);
    (0..e.len()).map(|i| (1.0 + hf.psi[i] * e.curvature()[i]).hypot(dpsi[i])).collect()
}

/// `P_phi(F) = int_E phi(-(d_tau psi) tau + (1 + psi kappa) nu)`.
pub fn graph_perimeter(hf: &HeightField, a: &Anisotropy) -> f64 {
    let e = hf.reference();
    let dpsi = e.d_tau(&hf.psi);
    (0..e.len())
        .map(|i| {
            let v = -e.tangents()[i] * dpsi[i] + e.normals()[i] * (1.0 + hf.psi[i] * e.curvature()[i]);
            a.value(v) * e.arc_weights()[i]
        })
        .sum()
}

/// `xi = psi + psi^2 kappa / 2`, nodewise.
pub fn xi_from_height(hf: &HeightField) -> XiField {
    let k = hf.reference().curvature();
    XiField(hf.psi.iter().zip(k).map(|(p, k)| p + 0.5 * p * p * k).collect())
}

/// Even-odd point-in-polygon test.
pub fn point_in_polygon(p: Vec2, poly: &[Vec2]) -> bool {
    let n = poly.len();
    let mut inside = false;
    let mut j = n - 1;
    for i in 0..n {
        let (a, b) = (poly[i], poly[j]);
        if (a.y > p.y) != (b.y > p.y) {
            let x = a.x + (p.y - a.y) * (b.x - a.x) / (b.y - a.y);
            if p.x < x {
                inside = !inside;
            }
        }
        j = i;
    }
    inside
}

/// `int (t + kappa t^2 / 2)` over the parts of `[-sigma, sigma]` where the
/// indicator along the ray is set. Transitions found on a uniform grid are
/// refined by bisection.
fn weighted_inside_length(origin: Vec2, dir: Vec2, kappa: f64, sigma: f64, poly: &[Vec2]) -> (f64, bool, bool) {
    let inside = |t: f64| point_in_polygon(origin + dir * t, poly);
    let prim = |t: f64| t + 0.5 * kappa * t * t;
    let step = 2.0 * sigma / SCAN_SAMPLES as f64;
    let mut t_prev = -sigma;
    let mut s_prev = inside(t_prev);
    let first = s_prev;
    let mut start = if s_prev { Some(t_prev) } else { None };
    let mut acc = 0.0;
    for j in 1..=SCAN_SAMPLES {
        let t = if j == SCAN_SAMPLES { sigma } else { -sigma + step * j as f64 };
        let s = inside(t);
        if s != s_prev {
            let (mut lo, mut hi) = (t_prev, t);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if mid <= lo || mid >= hi {
                    break;
                }
                if inside(mid) == s_prev {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let cut = 0.5 * (lo + hi);
            match start.take() {
                Some(t0) => acc += prim(cut) - prim(t0),
                None => start = Some(cut),
            }
        }
        t_prev = t;
        s_prev = s;
    }
    if let Some(t0) = start {
        acc += prim(sigma) - prim(t0);
    }
    (acc, first, s_prev)
}

/// Brute-force `xi_{F,E}`: integrates `(chi_F - chi_E)(1 + t kappa)` along
/// each normal ray of `e` over `t in [-sigma, sigma]`.
pub fn xi_scan(e: &ClosedCurve, f: &ClosedCurve, sigma: f64) -> Result<XiField, GraphError> {
    let mut out = Vec::with_capacity(e.len());
    for i in 0..e.len() {
        let x = e.nodes()[i];
        let nu = e.normals()[i];
        let k = e.curvature()[i];
        let (int_f, f_lo, f_hi) = weighted_inside_length(x, nu, k, sigma, f.nodes());
        let (int_e, e_lo, e_hi) = weighted_inside_length(x, nu, k, sigma, e.nodes());
        if f_lo != e_lo || f_hi != e_hi {
            return Err(GraphError::NotInTube(i));
        }
        out.push(int_f - int_e);
    }
    Ok(XiField(out))
}

/// `d_L2(F; E) = ||xi||_{L2(E)}`.
pub fn l2_distance(xi: &XiField, e: &ClosedCurve) -> f64 {
    e.l2_norm(&xi.0)
}

/// `|F| - |E| = int_E xi`.
pub fn volume_change(xi: &XiField, e: &ClosedCurve) -> f64 {
    e.integrate(&xi.0)
}

/// Residual `R_0 = kappa^phi_F o Psi + g(nu_E) d_tau^2 psi - kappa^phi_E`, with
/// the graph curvature taken from the rebuilt curve.
pub fn linearization_remainder(hf: &HeightField, a: &Anisotropy) -> Result<Vec<f64>, GraphError> {
    let f = graph_to_curve(hf)?;
    let e = hf.reference();
    let kf = a.anisotropic_curvature(&f);
    let ke = a.anisotropic_curvature(e);
    let d2 = e.d2_tau(&hf.psi);
    Ok((0..e.len()).map(|i| kf[i] + a.g(e.normals()[i]) * d2[i] - ke[i]).collect())
}

/// Both sides of `int_F |dG|^2 = int_E |d G_hat|^2 / J`, where `g_on_f` holds
/// `G` at the graph nodes (equivalently `G_hat` at the reference nodes).
pub fn gradient_transform_check(hf: &HeightField, g_on_f: &[f64]) -> Result<(f64, f64), GraphError> {
    let e = hf.reference();
    if g_on_f.len() != e.len() {
        return Err(GraphError::LengthMismatch { expected: e.len(), got: g_on_f.len() });
    }
    let f = graph_to_curve(hf)?;
    let lhs = f.integrate_sq(&f.d_tau(g_on_f));
    let dg = e.d_tau(g_on_f);
    let jac = jacobian(hf);
    let rhs = (0..e.len()).map(|i| dg[i] * dg[i] / jac[i] * e.arc_weights()[i]).sum();
    Ok((lhs, rhs))
}
