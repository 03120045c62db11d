//! JSON run configuration.
//!
//! ```json
//! {
//!   "initial": "ellipse", "a": 2, "b": 1,
//!   "anisotropy": {"kind": "elliptic", "A": [[1, 0], [0, 4]]},
//!   "h": 1e-3, "t_end": 0.5
//! }
//! ```
//!
//! Unknown keys are rejected so that typos do not silently fall back to defaults.

use std::path::{Path, PathBuf};

use serde_json::{Map, Value};
use thiserror::Error;

use crate::anisotropy::AnisotropyRegistry;
use crate::flow::{CurveRegistry, FlowConfig, InitialCurve, OutputConfig};
use crate::step::StepMode;

const TOP_LEVEL_KEYS: [&str; 17] = [
    "initial",
    "a",
    "b",
    "r",
    "amp",
    "anisotropy",
    "h",
    "t_end",
    "n_nodes",
    "delta",
    "resample_every",
    "mode",
    "sigma",
    "newton_tol",
    "max_newton",
    "seed",
    "output",
];
const FLAT_CURVE_KEYS: [&str; 4] = ["a", "b", "r", "amp"];

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ConfigError {
    #[error("{path}: {msg}")]
    Io { path: String, msg: String },
    #[error("parse error at line {line}, column {column}: {msg}")]
    Parse { line: usize, column: usize, msg: String },
    #[error("invalid `{field}`: {msg}")]
    Validation { field: String, msg: String },
}

fn invalid(field: &str, msg: impl Into<String>) -> ConfigError {
    ConfigError::Validation { field: field.to_string(), msg: msg.into() }
}

fn number(obj: &Map<String, Value>, key: &str) -> Result<Option<f64>, ConfigError> {
    match obj.get(key) {
        None => Ok(None),
        Some(v) => v.as_f64().map(Some).ok_or_else(|| invalid(key, "expected a number")),
    }
}

fn count(obj: &Map<String, Value>, key: &str) -> Result<Option<u64>, ConfigError> {
    match obj.get(key) {
        None => Ok(None),
        Some(v) => v.as_u64().map(Some).ok_or_else(|| invalid(key, "expected a non-negative integer")),
    }
}

fn required(obj: &Map<String, Value>, key: &str) -> Result<f64, ConfigError> {
    number(obj, key)?.ok_or_else(|| invalid(key, "missing"))
}

pub fn parse_config(path: &Path) -> Result<FlowConfig, ConfigError> {
    let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io { path: path.display().to_string(), msg: e.to_string() })?;
    parse_config_str(&text, path.parent().unwrap_or(Path::new(".")))
}

/// Parses a configuration; relative curve-file paths resolve against `base_dir`.
pub fn parse_config_str(text: &str, base_dir: &Path) -> Result<FlowConfig, ConfigError> {
    let root: Value = serde_json::from_str(text).map_err(|e| ConfigError::Parse { line: e.line(), column: e.column(), msg: e.to_string() })?;
    let obj = root.as_object().ok_or_else(|| invalid("<root>", "expected a JSON object"))?;
    if let Some(k) = obj.keys().find(|k| !TOP_LEVEL_KEYS.contains(&k.as_str())) {
        return Err(invalid(k, "unknown key"));
    }

    let seed = count(obj, "seed")?.unwrap_or(0);
    let initial = parse_initial(obj, base_dir, seed)?;
    let anisotropy = AnisotropyRegistry::builtin()
        .build(obj.get("anisotropy").unwrap_or(&Value::String("euclidean".into())))
        .map_err(|e| invalid("anisotropy", e.to_string()))?;
    let h = required(obj, "h")?;
    if !(h > 0.0 && h < 1.0) {
        return Err(invalid("h", format!("h must lie in (0,1), got {h}")));
    }
    let t_end = required(obj, "t_end")?;
    let mut cfg = FlowConfig::new(initial, anisotropy, h, t_end);
    cfg.seed = seed;
    if let Some(n) = count(obj, "n_nodes")? {
        cfg.n_nodes = n as usize;
    }
    cfg.delta = match obj.get("delta") {
        None => None,
        Some(Value::String(s)) if s == "auto" => None,
        Some(v) => Some(v.as_f64().ok_or_else(|| invalid("delta", "expected a number or \"auto\""))?),
    };
    if let Some(n) = count(obj, "resample_every")? {
        cfg.resample_every = n as usize;
    }
    cfg.mode = parse_mode(obj)?;
    if let Some(t) = number(obj, "newton_tol")? {
        cfg.newton_tol = t;
    }
    if let Some(n) = count(obj, "max_newton")? {
        cfg.max_newton = n as usize;
    }
    cfg.output = parse_output(obj.get("output"))?;

    cfg.validate().map_err(|e| invalid("config", e.to_string()))?;
    Ok(cfg)
}

fn parse_initial(obj: &Map<String, Value>, base_dir: &Path, seed: u64) -> Result<InitialCurve, ConfigError> {
    let registry = CurveRegistry::builtin();
    let initial = match obj.get("initial") {
        None => return Err(invalid("initial", "missing")),
        Some(Value::String(s)) if registry.names().any(|n| n == s) => {
            let params: Map<String, Value> = FLAT_CURVE_KEYS.iter().filter_map(|k| obj.get(*k).map(|v| (k.to_string(), v.clone()))).collect();
            InitialCurve::Builtin { kind: s.clone(), params: Value::Object(params) }
        }
        Some(Value::String(s)) => {
            let p = PathBuf::from(s);
            InitialCurve::File(if p.is_absolute() { p } else { base_dir.join(p) })
        }
        Some(Value::Object(o)) => {
            let kind = o.get("kind").and_then(Value::as_str).ok_or_else(|| invalid("initial", "object needs a `kind`"))?;
            InitialCurve::Builtin { kind: kind.to_string(), params: Value::Object(o.clone()) }
        }
        Some(_) => return Err(invalid("initial", "expected a generator name, a file path or an object")),
    };
    if let InitialCurve::Builtin { kind, params } = &initial {
        registry.build(kind, params, seed).map_err(|e| invalid("initial", e.to_string()))?;
    }
    Ok(initial)
}

fn parse_mode(obj: &Map<String, Value>) -> Result<StepMode, ConfigError> {
    let flat_sigma = number(obj, "sigma")?;
    let (name, sigma) = match obj.get("mode") {
        None => ("constrained", flat_sigma),
        Some(Value::String(s)) => (s.as_str(), flat_sigma),
        Some(Value::Object(o)) => {
            let kind = o.get("kind").and_then(Value::as_str).ok_or_else(|| invalid("mode", "object needs a `kind`"))?;
            (kind, number(o, "sigma")?.or(flat_sigma))
        }
        Some(_) => return Err(invalid("mode", "expected \"constrained\" or \"penalized\"")),
    };
    match name {
        "constrained" if sigma.is_none() => Ok(StepMode::Constrained),
        "constrained" => Err(invalid("sigma", "only used in penalized mode")),
        "penalized" => Ok(StepMode::Penalized { sigma }),
        other => Err(invalid("mode", format!("unknown mode `{other}`"))),
    }
}

fn parse_output(v: Option<&Value>) -> Result<OutputConfig, ConfigError> {
    let mut out = OutputConfig::default();
    let Some(v) = v else { return Ok(out) };
    let o = v.as_object().ok_or_else(|| invalid("output", "expected an object"))?;
    for key in o.keys() {
        if !["snapshot_every", "svg_every", "show_target"].contains(&key.as_str()) {
            return Err(invalid(&format!("output.{key}"), "unknown key"));
        }
    }
    if let Some(n) = count(o, "snapshot_every")? {
        out.snapshot_every = n as usize;
    }
    if let Some(n) = count(o, "svg_every")? {
        out.svg_every = n as usize;
    }
    if let Some(b) = o.get("show_target") {
        out.show_target = b.as_bool().ok_or_else(|| invalid("output.show_target", "expected a boolean"))?;
    }
    Ok(out)
}
