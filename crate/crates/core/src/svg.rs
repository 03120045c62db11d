//! SVG overlay of trajectory snapshots, colored from blue (early) to red (late).
//!
//! Output depends only on the trajectory, so identical runs give identical bytes.

use std::fmt::Write as _;
use std::path::Path;

use crate::flow::FlowTrajectory;
use crate::geometry::{ClosedCurve, Vec2};
use crate::io::IoError;

const CANVAS: f64 = 800.0;
const MARGIN: f64 = 0.05;

/// Snapshots whose step is a multiple of `every`.
pub fn selected_snapshots(traj: &FlowTrajectory, every: usize) -> Vec<usize> {
    let every = every.max(1);
    traj.snapshots().iter().enumerate().filter(|(_, s)| s.step % every == 0).map(|(i, _)| i).collect()
}

fn ramp(frac: f64) -> String {
    let f = frac.clamp(0.0, 1.0);
    let (r0, g0, b0) = (33.0, 102.0, 172.0);
    let (r1, g1, b1) = (178.0, 24.0, 43.0);
    let mix = |a: f64, b: f64| (a + (b - a) * f).round() as u8;
    format!("#{:02x}{:02x}{:02x}", mix(r0, r1), mix(g0, g1), mix(b0, b1))
}

fn path_data(nodes: &[Vec2]) -> String {
    let mut d = String::with_capacity(nodes.len() * 24);
    for (i, p) in nodes.iter().enumerate() {
        let _ = write!(d, "{}{:.6} {:.6} ", if i == 0 { "M" } else { "L" }, p.x, -p.y);
    }
    d.push('Z');
    d
}

/// Renders the selected snapshots, plus `target` as a dashed outline when given.
pub fn svg_string(traj: &FlowTrajectory, every: usize, target: Option<&ClosedCurve>) -> String {
    let picked = selected_snapshots(traj, every);
    let mut curves: Vec<&ClosedCurve> = picked.iter().map(|&i| &traj.snapshots()[i].curve).collect();
    if let Some(t) = target {
        curves.push(t);
    }
    let (mut lo, mut hi) = (Vec2::new(f64::INFINITY, f64::INFINITY), Vec2::new(f64::NEG_INFINITY, f64::NEG_INFINITY));
    for c in &curves {
        for p in c.nodes() {
            lo = lo.inf(&Vec2::new(p.x, -p.y));
            hi = hi.sup(&Vec2::new(p.x, -p.y));
        }
    }
    let span = (hi - lo).max().max(f64::MIN_POSITIVE);
    let pad = MARGIN * span;
    let (x0, y0, w, h) = (lo.x - pad, lo.y - pad, hi.x - lo.x + 2.0 * pad, hi.y - lo.y + 2.0 * pad);
    let stroke = span / 400.0;
    let t_max = traj.snapshots()[picked.last().copied().unwrap_or(0)].t.max(f64::MIN_POSITIVE);

    let mut s = String::new();
    let _ = writeln!(
        s,
        r#"<svg xmlns="http://www.w3.org/2000/svg" width="{CANVAS}" height="{:.0}" viewBox="{x0:.6} {y0:.6} {w:.6} {h:.6}">"#,
        CANVAS * h / w
    );
    if let Some(t) = target {
        let _ = writeln!(
            s,
            r##"<path class="target" d="{}" fill="none" stroke="#555555" stroke-width="{stroke:.6}" stroke-dasharray="{:.6}"/>"##,
            path_data(t.nodes()),
            4.0 * stroke
        );
    }
    for &i in &picked {
        let snap = &traj.snapshots()[i];
        let _ = writeln!(
            s,
            r#"<path class="snapshot" data-t="{:.6}" d="{}" fill="none" stroke="{}" stroke-width="{stroke:.6}"/>"#,
            snap.t,
            path_data(snap.curve.nodes()),
            ramp(snap.t / t_max)
        );
    }
    s.push_str("</svg>\n");
    s
}

pub fn render_svg(traj: &FlowTrajectory, every: usize, path: &Path, target: Option<&ClosedCurve>) -> Result<(), IoError> {
    std::fs::write(path, svg_string(traj, every, target)).map_err(IoError::at(path))
}
