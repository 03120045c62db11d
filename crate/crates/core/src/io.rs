//! Curve CSV, diagnostics CSV and trajectory JSON-lines files.
//!
//! Floats are written in the shortest form that parses back to the same
//! value, so a write followed by a read is lossless.

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::Serialize;
use thiserror::Error;

use crate::diagnostics::DiagnosticsRecord;
use crate::flow::FlowTrajectory;
use crate::geometry::Vec2;

pub const DIAGNOSTICS_HEADER: [&str; 13] = [
    "step",
    "t",
    "perimeter_phi",
    "area",
    "d_l2",
    "lambda",
    "psi_inf",
    "dpsi_l2",
    "d2psi_l2",
    "dxi_l2",
    "q_h",
    "gauss_bonnet",
    "newton_iters",
];

#[derive(Debug, Error)]
pub enum IoError {
    #[error("{path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error("line {line}: {msg}")]
    Parse { line: usize, msg: String },
    #[error("non-finite coordinate at node {0}")]
    NonFinite(usize),
    #[error("csv: {0}")]
    Csv(String),
    #[error("json: {0}")]
    Json(#[from] serde_json::Error),
}

impl IoError {
    pub fn at(path: &Path) -> impl FnOnce(std::io::Error) -> IoError + '_ {
        move |source| IoError::Io { path: path.display().to_string(), source }
    }
}

fn create(path: &Path) -> Result<BufWriter<File>, IoError> {
    Ok(BufWriter::new(File::create(path).map_err(IoError::at(path))?))
}

pub fn write_curve_csv<W: Write>(mut w: W, nodes: &[Vec2]) -> Result<(), IoError> {
    let io = |e| IoError::Io { path: "<curve>".into(), source: e };
    writeln!(w, "x,y").map_err(io)?;
    for (i, p) in nodes.iter().enumerate() {
        if !(p.x.is_finite() && p.y.is_finite()) {
            return Err(IoError::NonFinite(i));
        }
        writeln!(w, "{},{}", p.x, p.y).map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_curve_csv(path: &Path, nodes: &[Vec2]) -> Result<(), IoError> {
    write_curve_csv(create(path)?, nodes).map_err(|e| match e {
        IoError::Io { source, .. } => IoError::Io { path: path.display().to_string(), source },
        other => other,
    })
}

/// Reads `x,y` rows; a leading `x,y` header is optional.
pub fn read_curve_csv<R: Read>(r: R) -> Result<Vec<Vec2>, IoError> {
    let mut nodes = Vec::new();
    for (idx, line) in BufReader::new(r).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| IoError::Io { path: "<curve>".into(), source: e })?;
        let line = line.trim();
        if line.is_empty() || (idx == 0 && line.replace(' ', "") == "x,y") {
            continue;
        }
        let mut parts = line.split(',');
        let mut coord = || -> Result<f64, IoError> {
            let tok = parts.next().ok_or_else(|| IoError::Parse { line: line_no, msg: "expected two columns".into() })?;
            tok.trim().parse::<f64>().map_err(|e| IoError::Parse { line: line_no, msg: format!("`{}`: {e}", tok.trim()) })
        };
        let (x, y) = (coord()?, coord()?);
        if parts.next().is_some() {
            return Err(IoError::Parse { line: line_no, msg: "expected two columns".into() });
        }
        if !(x.is_finite() && y.is_finite()) {
            return Err(IoError::NonFinite(nodes.len()));
        }
        nodes.push(Vec2::new(x, y));
    }
    Ok(nodes)
}

pub fn load_curve_csv(path: &Path) -> Result<Vec<Vec2>, IoError> {
    read_curve_csv(File::open(path).map_err(IoError::at(path))?)
}

pub fn write_diagnostics_csv<W: Write>(w: W, records: &[DiagnosticsRecord]) -> Result<(), IoError> {
    let mut wr = csv::Writer::from_writer(w);
    if records.is_empty() {
        wr.write_record(DIAGNOSTICS_HEADER).map_err(|e| IoError::Csv(e.to_string()))?;
    }
    for r in records {
        wr.serialize(r).map_err(|e| IoError::Csv(e.to_string()))?;
    }
    wr.flush().map_err(|e| IoError::Io { path: "<diagnostics>".into(), source: e })
}

pub fn save_diagnostics_csv(path: &Path, records: &[DiagnosticsRecord]) -> Result<(), IoError> {
    write_diagnostics_csv(create(path)?, records)
}

pub fn read_diagnostics_csv<R: Read>(r: R) -> Result<Vec<DiagnosticsRecord>, IoError> {
    let mut rd = csv::Reader::from_reader(r);
    let header = rd.headers().map_err(|e| IoError::Csv(e.to_string()))?.clone();
    if header.iter().ne(DIAGNOSTICS_HEADER.iter().copied()) {
        return Err(IoError::Parse { line: 1, msg: format!("expected header {}", DIAGNOSTICS_HEADER.join(",")) });
    }
    let mut out = Vec::new();
    for (i, row) in rd.deserialize().enumerate() {
        let rec: DiagnosticsRecord = row.map_err(|e| IoError::Parse { line: i + 2, msg: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}

pub fn load_diagnostics_csv(path: &Path) -> Result<Vec<DiagnosticsRecord>, IoError> {
    read_diagnostics_csv(File::open(path).map_err(IoError::at(path))?)
}

#[derive(Serialize)]
struct SnapshotLine {
    t: f64,
    nodes: Vec<[f64; 2]>,
    perimeter_phi: f64,
    area: f64,
    lambda: f64,
    d_l2: f64,
    gauss_bonnet: f64,
}

/// One JSON object per stored snapshot.
pub fn write_trajectory_jsonl<W: Write>(mut w: W, traj: &FlowTrajectory) -> Result<(), IoError> {
    let io = |e| IoError::Io { path: "<trajectory>".into(), source: e };
    let a = traj.anisotropy();
    for s in traj.snapshots() {
        let line = SnapshotLine {
            t: s.t,
            nodes: s.curve.nodes().iter().map(|p| [p.x, p.y]).collect(),
            perimeter_phi: a.perimeter(&s.curve),
            area: s.curve.enclosed_area(),
            lambda: s.lambda,
            d_l2: s.d_l2,
            gauss_bonnet: a.gauss_bonnet_integral(&s.curve),
        };
        serde_json::to_writer(&mut w, &line)?;
        w.write_all(b"\n").map_err(io)?;
    }
    w.flush().map_err(io)
}

pub fn save_trajectory_jsonl(path: &Path, traj: &FlowTrajectory) -> Result<(), IoError> {
    write_trajectory_jsonl(create(path)?, traj)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    proptest! {
        #[test]
        fn curve_csv_round_trip(coords in proptest::collection::vec((-1e6f64..1e6, -1e-3f64..1e-3), 1..64)) {
            let nodes: Vec<Vec2> = coords.iter().map(|(x, y)| Vec2::new(*x, *y)).collect();
            let mut buf = Vec::new();
            write_curve_csv(&mut buf, &nodes).unwrap();
            prop_assert_eq!(read_curve_csv(&buf[..]).unwrap(), nodes);
        }
    }

    #[test]
    fn curve_csv_rejects_bad_input() {
        let mut buf = Vec::new();
        assert!(matches!(write_curve_csv(&mut buf, &[Vec2::new(f64::NAN, 0.0)]), Err(IoError::NonFinite(0))));
        assert!(matches!(read_curve_csv(&b"x,y\n1,2\n3\n"[..]), Err(IoError::Parse { line: 3, .. })));
        assert!(matches!(read_curve_csv(&b"1,2,3\n"[..]), Err(IoError::Parse { line: 1, .. })));
        assert!(matches!(read_curve_csv(&b"1,inf\n"[..]), Err(IoError::NonFinite(0))));
        assert_eq!(read_curve_csv(&b"1,2\n\n0.5,-1e-7\n"[..]).unwrap(), vec![Vec2::new(1.0, 2.0), Vec2::new(0.5, -1e-7)]);
    }

    #[test]
    fn diagnostics_csv_round_trip() {
        let rec = DiagnosticsRecord {
            step: 3,
            t: 0.003,
            perimeter_phi: 3.5449077018110318,
            area: 0.9999999999999998,
            d_l2: 1.25e-7,
            lambda: 1.772453850905516,
            psi_inf: 1e-300,
            dpsi_l2: 0.0,
            d2psi_l2: 2.0,
            dxi_l2: 1.0 / 3.0,
            q_h: 1.7724538509055159,
            gauss_bonnet: std::f64::consts::TAU,
            newton_iters: 4,
        };
        let mut buf = Vec::new();
        write_diagnostics_csv(&mut buf, &[rec, rec]).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert_eq!(text.lines().next().unwrap(), DIAGNOSTICS_HEADER.join(","));
        assert_eq!(read_diagnostics_csv(&buf[..]).unwrap(), vec![rec, rec]);

        let mut empty = Vec::new();
        write_diagnostics_csv(&mut empty, &[]).unwrap();
        assert_eq!(String::from_utf8(empty).unwrap().trim(), DIAGNOSTICS_HEADER.join(","));
        assert!(matches!(read_diagnostics_csv(&b"step,t\n1,0.1\n"[..]), Err(IoError::Parse { line: 1, .. })));
    }
}
