// `!(x > 0.0)` style guards are deliberate: they also reject NaN.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod anisotropy;
pub mod config;
pub mod diagnostics;
pub mod flow;
pub mod geometry;
pub mod graph;
pub mod io;
pub mod linalg;
pub mod step;
pub mod svg;
