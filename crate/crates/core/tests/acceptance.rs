//! Acceptance suite: one PASS/FAIL line per criterion, non-zero exit on any failure.

use std::f64::consts::{PI, TAU};
use std::path::Path;
use std::process::ExitCode;
use std::sync::Arc;
use std::time::Instant;

use rayon::prelude::*;
use wulff_flow::anisotropy::{Anisotropy, Mat2};
use wulff_flow::diagnostics::{dissipation_report, iteration_bound_check, DiagnosticsRecord};
use wulff_flow::flow::{run_flow, self_convergence_study, FlowConfig, FlowTrajectory, InitialCurve};
use wulff_flow::geometry::{circle_points, ellipse_points, hausdorff_distance, hausdorff_up_to_translation, polygon_perimeter, ClosedCurve};
use wulff_flow::graph::{gradient_transform_check, graph_perimeter, graph_to_curve, xi_from_height, xi_scan, HeightField};
use wulff_flow::io::save_curve_csv;
use wulff_flow::step::{graph_area, objective, objective_gradient, solve_step, solve_step_penalized, StepMode, StepOptions};

// Tolerances, pinned.
const AREA_STEP_TOL: f64 = 1e-10;
const AREA_DRIFT_TOL: f64 = 1e-8;
const RUNTIME_500_STEPS_S: f64 = 30.0;
const STATIONARY_HAUSDORFF: f64 = 1e-3;
const DEFICIT_TOL: f64 = 1e-3;
const WULFF_HAUSDORFF: f64 = 5e-3;
const SCALING_SPREAD: f64 = 2.0;
const ITERATION_SPREAD: f64 = 3.0;
const GB_REL_TOL: f64 = 1e-3;
const GB_EUCLIDEAN_TOL: f64 = 1e-4;
const XI_SCAN_TOL: f64 = 1e-5;
const MIN_ORDER_TWO: f64 = 1.8;
const FD_REL_TOL: f64 = 1e-6;
const PENALIZED_HAUSDORFF: f64 = 1e-6;
const ORDER_RANGE: (f64, f64) = (0.7, 1.5);
const SUITE_RUNTIME_S: f64 = 300.0;

type Outcome = Result<String, String>;

fn elliptic() -> Anisotropy {
    Anisotropy::elliptic(Mat2::new(1.0, 0.0, 0.0, 4.0)).unwrap()
}

fn ellipse_cfg(h: f64, t_end: f64) -> FlowConfig {
    FlowConfig::new(InitialCurve::ellipse(2.0, 1.0), Anisotropy::euclidean(), h, t_end)
}

fn require(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn succeeded(traj: &FlowTrajectory) -> Result<(), String> {
    if traj.terminated_reason().is_success() {
        Ok(())
    } else {
        Err(format!("run ended with {} ({:?})", traj.terminated_reason(), traj.failure()))
    }
}

fn max_area_error(records: &[DiagnosticsRecord]) -> f64 {
    records.iter().map(|r| (r.area - 1.0).abs()).fold(0.0, f64::max)
}

fn spread(values: &[f64]) -> f64 {
    let lo = values.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = values.iter().cloned().fold(0.0, f64::max);
    hi / lo
}

/// Shared trajectories, computed once.
struct Runs {
    ellipse_500: FlowTrajectory,
    ellipse_500_secs: f64,
    circle_stationary: FlowTrajectory,
    wulff_stationary: FlowTrajectory,
    circle_elliptic: FlowTrajectory,
    /// Ellipse fixture to t = 0.1 for h = 4e-3, 2e-3, 1e-3.
    ladder: Vec<FlowTrajectory>,
}

fn wulff_file(dir: &Path) -> std::path::PathBuf {
    let w = elliptic().wulff_shape(1.0, 4096).unwrap();
    let path = dir.join("wulff.csv");
    save_curve_csv(&path, w.nodes()).unwrap();
    path
}

fn compute_runs(dir: &Path) -> Runs {
    let start = Instant::now();
    let ellipse_500 = run_flow(&ellipse_cfg(1e-3, 0.5)).unwrap();
    let ellipse_500_secs = start.elapsed().as_secs_f64();

    let mut circ = FlowConfig::new(InitialCurve::circle(), Anisotropy::euclidean(), 1e-3, 0.2);
    circ.n_nodes = 512;
    let mut wulff = FlowConfig::new(InitialCurve::File(wulff_file(dir)), elliptic(), 1e-3, 0.2);
    wulff.n_nodes = 512;
    let relax = FlowConfig::new(InitialCurve::circle(), elliptic(), 1e-3, 1.0);

    let cfgs = vec![circ, wulff, relax, ellipse_cfg(4e-3, 0.1), ellipse_cfg(2e-3, 0.1), ellipse_cfg(1e-3, 0.1)];
    let mut out: Vec<FlowTrajectory> = cfgs.par_iter().map(|c| run_flow(c).unwrap()).collect();
    let ladder = out.split_off(3);
    let circle_elliptic = out.pop().unwrap();
    let wulff_stationary = out.pop().unwrap();
    let circle_stationary = out.pop().unwrap();
    Runs { ellipse_500, ellipse_500_secs, circle_stationary, wulff_stationary, circle_elliptic, ladder }
}

fn all_runs(r: &Runs) -> Vec<(&'static str, &FlowTrajectory)> {
    let mut v = vec![
        ("ellipse t=0.5", &r.ellipse_500),
        ("circle", &r.circle_stationary),
        ("wulff", &r.wulff_stationary),
        ("circle/elliptic", &r.circle_elliptic),
    ];
    for (name, t) in ["ellipse h=4e-3", "ellipse h=2e-3", "ellipse h=1e-3"].into_iter().zip(&r.ladder) {
        v.push((name, t));
    }
    v
}

fn c1_volume(r: &Runs) -> Outcome {
    let mut worst = 0.0f64;
    for (name, t) in all_runs(r) {
        succeeded(t).map_err(|e| format!("{name}: {e}"))?;
        worst = worst.max(max_area_error(t.diagnostics()));
    }
    let drift = (r.ellipse_500.diagnostics().last().unwrap().area - r.ellipse_500.diagnostics()[0].area).abs();
    let steps = r.ellipse_500.steps();
    require(
        worst <= AREA_STEP_TOL && drift <= AREA_DRIFT_TOL && steps == 500 && r.ellipse_500_secs <= RUNTIME_500_STEPS_S,
        format!("max |area-1| = {worst:.2e}, drift over {steps} steps = {drift:.2e}, runtime {:.1}s", r.ellipse_500_secs),
    )
}

fn c2_dissipation(r: &Runs) -> Outcome {
    let mut min_margin = f64::INFINITY;
    let mut checked = 0;
    for (name, t) in all_runs(r) {
        let d = t.diagnostics();
        let rep = dissipation_report(d, d[0].perimeter_phi, t.h()).map_err(|e| format!("{name}: {e}"))?;
        if rep.telescoped_slack < -1e-12 * d.len() as f64 {
            return Err(format!("{name}: telescoped slack {:.2e}", rep.telescoped_slack));
        }
        checked += rep.margins.len();
        min_margin = rep.margins.iter().map(|m| m.1).fold(min_margin, f64::min);
    }
    Ok(format!("{checked} steps, zero violations, smallest margin {min_margin:.2e}"))
}

fn max_excursion(t: &FlowTrajectory) -> f64 {
    t.snapshots().iter().map(|s| hausdorff_distance(t.initial(), &s.curve)).fold(0.0, f64::max)
}

fn c3_stationary(r: &Runs) -> Outcome {
    succeeded(&r.circle_stationary)?;
    succeeded(&r.wulff_stationary)?;
    let dc = max_excursion(&r.circle_stationary);
    let dw = max_excursion(&r.wulff_stationary);
    require(
        dc <= STATIONARY_HAUSDORFF && dw <= STATIONARY_HAUSDORFF,
        format!(
            "circle moved {dc:.2e} ({}), Wulff moved {dw:.2e} ({})",
            r.circle_stationary.terminated_reason(),
            r.wulff_stationary.terminated_reason()
        ),
    )
}

fn c4_relaxation(r: &Runs) -> Outcome {
    succeeded(&r.ellipse_500)?;
    succeeded(&r.circle_elliptic)?;
    let f = r.ellipse_500.last();
    let p = polygon_perimeter(f.nodes());
    let deficit = p * p / (4.0 * PI * f.enclosed_area()) - 1.0;
    let target = elliptic().wulff_shape(1.0, 2048).unwrap();
    let d = hausdorff_up_to_translation(r.circle_elliptic.last(), &target);
    require(deficit <= DEFICIT_TOL && d <= WULFF_HAUSDORFF, format!("ellipse deficit {deficit:.2e} at t=0.5, circle-to-Wulff distance {d:.2e} at t=1.0"))
}

fn c5_scaling(r: &Runs) -> Outcome {
    let mut d = Vec::new();
    let mut p = Vec::new();
    let mut dp = Vec::new();
    for t in &r.ladder {
        succeeded(t)?;
        let steps = &t.diagnostics()[1..];
        let h = t.h();
        d.push(steps.iter().map(|s| s.d_l2 / h).fold(0.0, f64::max));
        p.push(steps.iter().map(|s| s.psi_inf / h).fold(0.0, f64::max));
        dp.push(steps.iter().map(|s| s.dpsi_l2 / h).fold(0.0, f64::max));
    }
    let (sd, sp, sdp) = (spread(&d), spread(&p), spread(&dp));
    require(
        sd <= SCALING_SPREAD && sp <= SCALING_SPREAD && sdp <= SCALING_SPREAD,
        format!("max/min over h of max d/h {sd:.3}, of max |psi|/h {sp:.3}, of max |d psi|/h {sdp:.3}"),
    )
}

fn c6_iteration(r: &Runs) -> Outcome {
    let growth = |t: &FlowTrajectory| iteration_bound_check(t.diagnostics(), t.h(), f64::INFINITY).map(|rep| rep.max_growth);
    let g2 = growth(&r.ladder[1]).map_err(|e| e.to_string())?;
    let g1 = growth(&r.ladder[2]).map_err(|e| e.to_string())?;
    let (lo, hi) = (g1.abs().min(g2.abs()), g1.abs().max(g2.abs()));
    require(g1.is_finite() && g2.is_finite() && hi <= ITERATION_SPREAD * lo, format!("max (r_k - 1)/h: {g2:.4} at h=2e-3, {g1:.4} at h=1e-3"))
}

fn c7_gauss_bonnet(r: &Runs) -> Outcome {
    let a = elliptic();
    let gb = |pts| a.gauss_bonnet_integral(&ClosedCurve::new(pts).unwrap());
    let shapes = [
        gb(circle_points(1.0, 512)),
        gb(ellipse_points(2.0, 1.0, 512)),
        a.gauss_bonnet_integral(&a.wulff_shape(1.0, 512).unwrap()),
    ];
    let reference = shapes[0];
    let mut worst = shapes.iter().map(|g| ((g - reference) / reference).abs()).fold(0.0, f64::max);
    for t in [&r.wulff_stationary, &r.circle_elliptic] {
        for s in t.snapshots() {
            worst = worst.max(((a.gauss_bonnet_integral(&s.curve) - reference) / reference).abs());
        }
    }
    let euclid = Anisotropy::euclidean().gauss_bonnet_integral(&ClosedCurve::new(ellipse_points(2.0, 1.0, 512)).unwrap());
    let mut worst_euclid = (euclid - TAU).abs();
    for s in r.circle_stationary.snapshots() {
        worst_euclid = worst_euclid.max((Anisotropy::euclidean().gauss_bonnet_integral(&s.curve) - TAU).abs());
    }
    require(
        worst <= GB_REL_TOL && worst_euclid <= GB_EUCLIDEAN_TOL,
        format!("elliptic: max relative spread {worst:.2e} (value {reference:.6}); euclidean: max |C - 2pi| {worst_euclid:.2e}"),
    )
}

fn order_two(gap: impl Fn(usize) -> f64) -> (f64, f64) {
    let (g1, g2) = (gap(256), gap(512));
    ((g1 / g2).log2(), g2)
}

fn c8_oracles() -> Outcome {
    let a = elliptic();
    let circle = |n: usize| Arc::new(ClosedCurve::new(circle_points(1.0, n)).unwrap());
    let bump = |e: &Arc<ClosedCurve>, amp: f64| {
        let n = e.len();
        let psi = (0..n).map(|i| amp * (3.0 * TAU * i as f64 / n as f64).cos()).collect();
        HeightField::new(e.clone(), psi, 0.5).unwrap()
    };

    let e = circle(512);
    let hf = bump(&e, 0.05);
    let f = graph_to_curve(&hf).unwrap();
    let scan = xi_scan(&e, &f, 0.5).map_err(|x| x.to_string())?;
    let xi_gap = scan.0.iter().zip(&xi_from_height(&hf).0).map(|(s, x)| (s - x).abs()).fold(0.0, f64::max);

    let (p_order, p_gap) = order_two(|n| {
        let hf = bump(&circle(n), 0.02);
        (graph_perimeter(&hf, &a) - a.perimeter(&graph_to_curve(&hf).unwrap())).abs()
    });
    let (r_order, r_gap) = order_two(|n| {
        let e = circle(n);
        let hf = bump(&e, 0.05);
        let g: Vec<f64> = (0..n).map(|i| (2.0 * TAU * i as f64 / n as f64).sin()).collect();
        let (l, r) = gradient_transform_check(&hf, &g).unwrap();
        (l - r).abs()
    });

    let e = Arc::new(ClosedCurve::new(ellipse_points(2.0, 1.0, 128)).unwrap());
    let hf = bump(&e, 0.01);
    let h = 2e-3;
    let grad = objective_gradient(&hf, &a, h);
    let (_, grad_a) = graph_area(&hf);
    let mut fd_err = 0.0f64;
    for i in (0..128).step_by(16) {
        let shifted = |s: f64| {
            let mut p = hf.psi().to_vec();
            p[i] += s;
            HeightField::new(e.clone(), p, 0.5).unwrap()
        };
        let step = 1e-6;
        let fd = (objective(&shifted(step), &a, h) - objective(&shifted(-step), &a, h)) / (2.0 * step);
        let fda = (graph_area(&shifted(step)).0 - graph_area(&shifted(-step)).0) / (2.0 * step);
        fd_err = fd_err.max((fd - grad[i]).abs() / grad[i].abs().max(1e-2));
        fd_err = fd_err.max((fda - grad_a[i]).abs() / grad_a[i].abs());
    }
    require(
        xi_gap <= XI_SCAN_TOL && p_order >= MIN_ORDER_TWO && r_order >= MIN_ORDER_TWO && fd_err <= FD_REL_TOL,
        format!(
            "xi scan gap {xi_gap:.1e}; perimeter gap {p_gap:.1e} order {p_order:.2}; gradient identity gap {r_gap:.1e} order {r_order:.2}; FD rel err {fd_err:.1e}"
        ),
    )
}

fn c9_penalized() -> Outcome {
    let mut worst = 0.0f64;
    for pts in [circle_points(1.0, 256), ellipse_points(2.0, 1.0, 256)] {
        let e = Arc::new(ClosedCurve::new(pts).unwrap().with_area(1.0).unwrap());
        for a in [Anisotropy::euclidean(), elliptic()] {
            let opts = StepOptions::new(1e-3);
            let con = solve_step(&e, &a, &opts).map_err(|x| x.to_string())?;
            let pen = solve_step_penalized(&e, &a, &opts.clone().with_mode(StepMode::Penalized { sigma: None })).map_err(|x| x.to_string())?;
            if !(con.accepted && pen.accepted) {
                return Err("a step was not accepted".into());
            }
            worst = worst.max(hausdorff_distance(&con.curve, &pen.curve));
        }
    }
    require(worst <= PENALIZED_HAUSDORFF, format!("max Hausdorff gap {worst:.2e} over circle/ellipse x euclidean/elliptic"))
}

fn c10_self_convergence() -> Outcome {
    let table = self_convergence_study(&ellipse_cfg(1e-3, 0.1), &[4e-3, 2e-3, 1e-3]).map_err(|e| e.to_string())?;
    let p = table.observed_order().ok_or("no order")?;
    let d: Vec<String> = table.rows.iter().map(|r| format!("{:.2e}", r.distance)).collect();
    require((ORDER_RANGE.0..=ORDER_RANGE.1).contains(&p), format!("distances [{}], observed order {p:.3}", d.join(", ")))
}

fn main() -> ExitCode {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let runs = compute_runs(dir.path());
    let results: Vec<(&str, Outcome)> = vec![
        ("volume preservation", c1_volume(&runs)),
        ("energy dissipation", c2_dissipation(&runs)),
        ("stationary shapes", c3_stationary(&runs)),
        ("relaxation", c4_relaxation(&runs)),
        ("step-size scaling", c5_scaling(&runs)),
        ("iteration bound", c6_iteration(&runs)),
        ("Gauss-Bonnet invariant", c7_gauss_bonnet(&runs)),
        ("oracle equivalences", c8_oracles()),
        ("penalized/constrained equivalence", c9_penalized()),
        ("self-convergence", {
            let r = c10_self_convergence();
            let secs = start.elapsed().as_secs_f64();
            match r {
                Ok(s) if secs <= SUITE_RUNTIME_S => Ok(format!("{s}; suite runtime {secs:.1}s")),
                Ok(s) => Err(format!("{s}; suite runtime {secs:.1}s exceeds budget")),
                Err(e) => Err(e),
            }
        }),
    ];
    let mut failed = 0;
    for (i, (name, r)) in results.iter().enumerate() {
        match r {
            Ok(d) => println!("PASS  {:>2}. {name}: {d}", i + 1),
            Err(d) => {
                failed += 1;
                println!("FAIL  {:>2}. {name}: {d}", i + 1);
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", results.len() - failed);
    if failed == 0 {
        ExitCode::SUCCESS
    } else {
        ExitCode::FAILURE
    }
}
