//! Per-step measurements and the reports built from them.
//!
//! Every report is a pure function of the record stream, so saved CSV files
//! can be re-checked without re-running the flow.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::anisotropy::Anisotropy;
use crate::geometry::ClosedCurve;
use crate::graph::{sup_norm, xi_from_height};
use crate::step::StepResult;

/// Ratio checks skip steps whose denominator is below this floor.
pub const RATIO_FLOOR: f64 = 1e-12;
/// Slack allowed in the per-step dissipation inequality.
pub const DISSIPATION_TOL: f64 = 1e-12;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DiagnosticsError {
    #[error("need at least {needed} records, got {got}")]
    InsufficientData { needed: usize, got: usize },
    #[error("dissipation inequality violated at step {step} by {excess:e}")]
    DissipationViolated { step: usize, excess: f64 },
}

/// One row of the diagnostics stream. Field order is the CSV column order.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub step: usize,
    pub t: f64,
    pub perimeter_phi: f64,
    pub area: f64,
    pub d_l2: f64,
    pub lambda: f64,
    pub psi_inf: f64,
    pub dpsi_l2: f64,
    pub d2psi_l2: f64,
    pub dxi_l2: f64,
    pub q_h: f64,
    pub gauss_bonnet: f64,
    pub newton_iters: usize,
}

impl DiagnosticsRecord {
    pub fn is_finite(&self) -> bool {
        [
            self.t,
            self.perimeter_phi,
            self.area,
            self.d_l2,
            self.lambda,
            self.psi_inf,
            self.dpsi_l2,
            self.d2psi_l2,
            self.dxi_l2,
            self.q_h,
            self.gauss_bonnet,
        ]
        .iter()
        .all(|v| v.is_finite())
    }
}

/// `||kappa||_inf + ||d kappa||_2 + sqrt(h) ||d^2 kappa||_2` with the plain curvature.
pub fn q_h(curve: &ClosedCurve, h: f64) -> f64 {
    let k = curve.curvature();
    sup_norm(k) + curve.l2_norm(&curve.d_ds(k)) + h.sqrt() * curve.l2_norm(&curve.d2_tau(k))
}

/// Record for the initial curve, before any step.
pub fn initial_record(e0: &ClosedCurve, a: &Anisotropy, h: f64) -> DiagnosticsRecord {
    DiagnosticsRecord {
        step: 0,
        t: 0.0,
        perimeter_phi: a.perimeter(e0),
        area: e0.enclosed_area(),
        d_l2: 0.0,
        lambda: crate::step::lagrange_multiplier_estimate(e0, a),
        psi_inf: 0.0,
        dpsi_l2: 0.0,
        d2psi_l2: 0.0,
        dxi_l2: 0.0,
        q_h: q_h(e0, h),
        gauss_bonnet: a.gauss_bonnet_integral(e0),
        newton_iters: 0,
    }
}

/// Measures an accepted step. Height norms live on the reference curve
/// `e_prev`; curve quantities are those of the new curve.
pub fn record_step(e_prev: &ClosedCurve, result: &StepResult, a: &Anisotropy, h: f64, step: usize) -> DiagnosticsRecord {
    let psi = result.psi.psi();
    let xi = xi_from_height(&result.psi);
    let f = &result.curve;
    DiagnosticsRecord {
        step,
        t: step as f64 * h,
        perimeter_phi: result.energy_after_terms.perimeter,
        area: f.enclosed_area(),
        d_l2: result.energy_after_terms.distance,
        lambda: result.lambda,
        psi_inf: sup_norm(psi),
        dpsi_l2: e_prev.l2_norm(&e_prev.d_tau(psi)),
        d2psi_l2: e_prev.l2_norm(&e_prev.d2_tau(psi)),
        dxi_l2: e_prev.l2_norm(&e_prev.d_tau(&xi.0)),
        q_h: q_h(f, h),
        gauss_bonnet: a.gauss_bonnet_integral(f),
        newton_iters: result.newton_iters,
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IterationBoundReport {
    /// `(step, ||d xi_k||^2 / ||d xi_{k-1}||^2)` for steps above the floor.
    pub ratios: Vec<(usize, f64)>,
    /// `max_k (r_k - 1) / h`, or `-inf` when no ratio was usable.
    pub max_growth: f64,
    /// Steps with `r_k > 1 + c h`.
    pub flagged: Vec<usize>,
}

/// Tracks the growth of `||d_tau xi||^2` from step to step.
pub fn iteration_bound_check(records: &[DiagnosticsRecord], h: f64, c: f64) -> Result<IterationBoundReport, DiagnosticsError> {
    let steps: Vec<&DiagnosticsRecord> = records.iter().filter(|r| r.step > 0).collect();
    if steps.len() < 2 {
        return Err(DiagnosticsError::InsufficientData { needed: 2, got: steps.len() });
    }
    let mut ratios = Vec::new();
    let mut flagged = Vec::new();
    let mut max_growth = f64::NEG_INFINITY;
    for pair in steps.windows(2) {
        let denom = pair[0].dxi_l2 * pair[0].dxi_l2;
        if denom < RATIO_FLOOR {
            continue;
        }
        let r = pair[1].dxi_l2 * pair[1].dxi_l2 / denom;
        ratios.push((pair[1].step, r));
        max_growth = max_growth.max((r - 1.0) / h);
        if r > 1.0 + c * h {
            flagged.push(pair[1].step);
        }
    }
    Ok(IterationBoundReport { ratios, max_growth, flagged })
}

#[derive(Debug, Clone, PartialEq)]
pub struct DissipationReport {
    /// `P(E_{k-1}) - P(E_k) - d_k^2 / (2h)` per step.
    pub margins: Vec<(usize, f64)>,
    /// `sum_k d_k^2 / (2h)`.
    pub total_dissipation: f64,
    /// `P(E_0) - P(E_K) - total_dissipation`.
    pub telescoped_slack: f64,
}

/// Checks `P(E_k) + d_k^2 / (2h) <= P(E_{k-1})` along the stream.
pub fn dissipation_report(records: &[DiagnosticsRecord], initial_perimeter: f64, h: f64) -> Result<DissipationReport, DiagnosticsError> {
    if records.is_empty() {
        return Err(DiagnosticsError::InsufficientData { needed: 1, got: 0 });
    }
    let mut prev = initial_perimeter;
    let mut margins = Vec::new();
    let mut total = 0.0;
    for r in records {
        if r.step == 0 {
            prev = r.perimeter_phi;
            continue;
        }
        let dissipated = r.d_l2 * r.d_l2 / (2.0 * h);
        let margin = prev - r.perimeter_phi - dissipated;
        if margin < -DISSIPATION_TOL {
            return Err(DiagnosticsError::DissipationViolated { step: r.step, excess: -margin });
        }
        margins.push((r.step, margin));
        total += dissipated;
        prev = r.perimeter_phi;
    }
    Ok(DissipationReport { margins, total_dissipation: total, telescoped_slack: initial_perimeter - prev - total })
}

/// Largest relative deviation of the Gauss-Bonnet integral from its first value.
pub fn gauss_bonnet_spread(records: &[DiagnosticsRecord]) -> f64 {
    match records.first() {
        None => 0.0,
        Some(first) => records.iter().map(|r| ((r.gauss_bonnet - first.gauss_bonnet) / first.gauss_bonnet).abs()).fold(0.0, f64::max),
    }
}
