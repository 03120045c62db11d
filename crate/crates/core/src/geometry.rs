//! Discrete closed planar curves and their differential quantities.
//!
//! A [`ClosedCurve`] is a simple, positively oriented polygon whose nodes are
//! treated as samples of a smooth boundary. Derivatives along the curve come
//! from a local quartic interpolant through five consecutive nodes,
//! parametrized by cumulative chord length.

use nalgebra::{Matrix5, Vector2};
use thiserror::Error;

pub type Vec2 = Vector2<f64>;

/// Smallest admissible node count.
pub const MIN_NODES: usize = 16;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum GeometryError {
    #[error("a closed curve needs at least {MIN_NODES} nodes, got {0}")]
    TooFewNodes(usize),
    #[error("non-finite coordinate at node {0}")]
    NonFinite(usize),
    #[error("consecutive nodes {0} and {1} coincide")]
    DuplicateNode(usize, usize),
    #[error("polygon is self-intersecting (segments {0} and {1})")]
    SelfIntersecting(usize, usize),
    #[error("polygon is negatively oriented")]
    NegativeOrientation,
    #[error("curvature vanishes at every node")]
    FlatCurve,
    #[error("arc-length resampling failed to close the curve")]
    ResampleFailed,
}

/// Clockwise rotation by 90 degrees.
#[inline]
pub fn rot_cw(v: Vec2) -> Vec2 {
    Vec2::new(v.y, -v.x)
}

#[inline]
pub fn cross(a: Vec2, b: Vec2) -> f64 {
    a.x * b.y - a.y * b.x
}

/// Signed shoelace area; positive for counterclockwise polygons.
pub fn shoelace_area(nodes: &[Vec2]) -> f64 {
    let n = nodes.len();
    let mut acc = 0.0;
    for i in 0..n {
        acc += cross(nodes[i], nodes[(i + 1) % n]);
    }
    0.5 * acc
}

pub fn polygon_perimeter(nodes: &[Vec2]) -> f64 {
    let n = nodes.len();
    (0..n).map(|i| (nodes[(i + 1) % n] - nodes[i]).norm()).sum()
}

/// Area centroid of a simple polygon.
pub fn polygon_centroid(nodes: &[Vec2]) -> Vec2 {
    let n = nodes.len();
    let mut c = Vec2::zeros();
    let mut a = 0.0;
    for i in 0..n {
        let p = nodes[i];
        let q = nodes[(i + 1) % n];
        let w = cross(p, q);
        a += w;
        c += (p + q) * w;
    }
    c / (3.0 * a)
}

/// Derivative weights of a five-point stencil centred at a node.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Stencil {
    pub d1: [f64; 5],
    pub d2: [f64; 5],
}

impl Stencil {
    /// Weights for the first two derivatives at `s = 0` of the quartic
    /// interpolating values at the parameter offsets `s`.
    fn from_offsets(s: [f64; 5]) -> Option<Self> {
        let scale = 0.25 * (s[4] - s[0]);
        if !(scale > 0.0) {
            return None;
        }
        let t: Vec<f64> = s.iter().map(|v| v / scale).collect();
        let vander = Matrix5::from_fn(|r, c| t[r].powi(c as i32));
        let inv = vander.try_inverse()?;
        let mut d1 = [0.0; 5];
        let mut d2 = [0.0; 5];
        for j in 0..5 {
            d1[j] = inv[(1, j)] / scale;
            d2[j] = 2.0 * inv[(2, j)] / (scale * scale);
        }
        Some(Self { d1, d2 })
    }
}

/// Discretized boundary of a bounded planar set.
///
/// Immutable after construction. Nodes run counterclockwise; `normals` point
/// outward and `tangents` are the normals rotated clockwise, so they point
/// against the direction of travel.
#[derive(Debug, Clone)]
pub struct ClosedCurve {
    nodes: Vec<Vec2>,
    arc_weights: Vec<f64>,
    normals: Vec<Vec2>,
    tangents: Vec<Vec2>,
    curvature: Vec<f64>,
    enclosed_area: f64,
    stencils: Vec<Stencil>,
}

impl ClosedCurve {
    /// Validates the polygon and computes all per-node quantities.
    pub fn new(points: Vec<Vec2>) -> Result<Self, GeometryError> {
        let n = points.len();
        if n < MIN_NODES {
            return Err(GeometryError::TooFewNodes(n));
        }
        if let Some(i) = points.iter().position(|p| !p.x.is_finite() || !p.y.is_finite()) {
            return Err(GeometryError::NonFinite(i));
        }
        let seg: Vec<f64> = (0..n).map(|i| (points[(i + 1) % n] - points[i]).norm()).collect();
        if let Some(i) = seg.iter().position(|&l| l == 0.0) {
            return Err(GeometryError::DuplicateNode(i, (i + 1) % n));
        }
        check_simple(&points)?;
        let enclosed_area = shoelace_area(&points);
        if enclosed_area <= 0.0 {
            return Err(GeometryError::NegativeOrientation);
        }

        let mut arc_weights = Vec::with_capacity(n);
        let mut stencils = Vec::with_capacity(n);
        for i in 0..n {
            arc_weights.push(0.5 * (seg[(i + n - 1) % n] + seg[i]));
            let s = [
                -(seg[(i + n - 1) % n] + seg[(i + n - 2) % n]),
                -seg[(i + n - 1) % n],
                0.0,
                seg[i],
                seg[i] + seg[(i + 1) % n],
            ];
            // Offsets are strictly increasing, so the Vandermonde system is regular.
            stencils.push(Stencil::from_offsets(s).ok_or(GeometryError::DuplicateNode(i, (i + 1) % n))?);
        }

        let mut normals = Vec::with_capacity(n);
        let mut tangents = Vec::with_capacity(n);
        let mut curvature = Vec::with_capacity(n);
        for i in 0..n {
            let st = &stencils[i];
            let mut r1 = Vec2::zeros();
            let mut r2 = Vec2::zeros();
            for (k, off) in (-2i64..=2).enumerate() {
                let p = points[wrap(i as i64 + off, n)] - points[i];
                r1 += p * st.d1[k];
                r2 += p * st.d2[k];
            }
            let speed = r1.norm();
            let nu = rot_cw(r1 / speed);
            normals.push(nu);
            tangents.push(rot_cw(nu));
            curvature.push(cross(r1, r2) / speed.powi(3));
        }

        Ok(Self { nodes: points, arc_weights, normals, tangents, curvature, enclosed_area, stencils })
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn nodes(&self) -> &[Vec2] {
        &self.nodes
    }

    pub fn arc_weights(&self) -> &[f64] {
        &self.arc_weights
    }

    pub fn normals(&self) -> &[Vec2] {
        &self.normals
    }

    pub fn tangents(&self) -> &[Vec2] {
        &self.tangents
    }

    pub fn curvature(&self) -> &[f64] {
        &self.curvature
    }

    pub fn stencils(&self) -> &[Stencil] {
        &self.stencils
    }

    /// Cached shoelace area.
    pub fn enclosed_area(&self) -> f64 {
        self.enclosed_area
    }

    /// Euclidean length of the polygon.
    pub fn perimeter(&self) -> f64 {
        self.arc_weights.iter().sum()
    }

    pub fn centroid(&self) -> Vec2 {
        polygon_centroid(&self.nodes)
    }

    pub fn max_abs_curvature(&self) -> f64 {
        self.curvature.iter().fold(0.0_f64, |m, k| m.max(k.abs()))
    }

    /// Derivative of nodal values along the direction of travel.
    pub fn d_ds(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f, |st| &st.d1)
    }

    /// Derivative along `tangents`, i.e. against the direction of travel.
    pub fn d_tau(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f, |st| &st.d1).into_iter().map(|v| -v).collect()
    }

    /// Second derivative in arc length (orientation independent).
    pub fn d2_tau(&self, f: &[f64]) -> Vec<f64> {
        self.apply(f, |st| &st.d2)
    }

    fn apply<'a>(&'a self, f: &[f64], pick: impl Fn(&'a Stencil) -> &'a [f64; 5]) -> Vec<f64> {
        let n = self.len();
        assert_eq!(f.len(), n, "nodal field length mismatch");
        (0..n)
            .map(|i| {
                let w = pick(&self.stencils[i]);
                (-2i64..=2).enumerate().map(|(k, off)| w[k] * f[wrap(i as i64 + off, n)]).sum()
            })
            .collect()
    }

    /// Arc-weighted L2 norm of a nodal field.
    pub fn l2_norm(&self, f: &[f64]) -> f64 {
        self.integrate_sq(f).sqrt()
    }

    pub fn integrate(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.arc_weights).map(|(v, w)| v * w).sum()
    }

    pub fn integrate_sq(&self, f: &[f64]) -> f64 {
        f.iter().zip(&self.arc_weights).map(|(v, w)| v * v * w).sum()
    }

    pub fn translated(&self, by: Vec2) -> Result<Self, GeometryError> {
        Self::new(self.nodes.iter().map(|p| p + by).collect())
    }

    /// Uniform scaling about `center`.
    pub fn scaled(&self, factor: f64, center: Vec2) -> Result<Self, GeometryError> {
        Self::new(self.nodes.iter().map(|p| center + (p - center) * factor).collect())
    }

    /// Rescales about the centroid so that the shoelace area equals `area`.
    pub fn with_area(&self, area: f64) -> Result<Self, GeometryError> {
        let factor = (area / self.enclosed_area).sqrt();
        self.scaled(factor, self.centroid())
    }
}

#[inline]
pub(crate) fn wrap(i: i64, n: usize) -> usize {
    i.rem_euclid(n as i64) as usize
}

/// Same as [`ClosedCurve::new`].
pub fn build_curve(points: Vec<Vec2>) -> Result<ClosedCurve, GeometryError> {
    ClosedCurve::new(points)
}

pub fn enclosed_area(curve: &ClosedCurve) -> f64 {
    curve.enclosed_area()
}

/// Tubular radius `1 / (2 max|kappa|)`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TubularData {
    pub sigma: f64,
}

pub fn tubular_radius(curve: &ClosedCurve) -> Result<TubularData, GeometryError> {
    let kmax = curve.max_abs_curvature();
    if !(kmax > 0.0) {
        return Err(GeometryError::FlatCurve);
    }
    Ok(TubularData { sigma: 1.0 / (2.0 * kmax) })
}

fn orient(a: Vec2, b: Vec2, c: Vec2) -> f64 {
    cross(b - a, c - a)
}

fn on_segment(a: Vec2, b: Vec2, p: Vec2) -> bool {
    p.x >= a.x.min(b.x) && p.x <= a.x.max(b.x) && p.y >= a.y.min(b.y) && p.y <= a.y.max(b.y)
}

fn segments_intersect(p1: Vec2, p2: Vec2, q1: Vec2, q2: Vec2) -> bool {
    let d1 = orient(q1, q2, p1);
    let d2 = orient(q1, q2, p2);
    let d3 = orient(p1, p2, q1);
    let d4 = orient(p1, p2, q2);
    if ((d1 > 0.0 && d2 < 0.0) || (d1 < 0.0 && d2 > 0.0)) && ((d3 > 0.0 && d4 < 0.0) || (d3 < 0.0 && d4 > 0.0)) {
        return true;
    }
    (d1 == 0.0 && on_segment(q1, q2, p1))
        || (d2 == 0.0 && on_segment(q1, q2, p2))
        || (d3 == 0.0 && on_segment(p1, p2, q1))
        || (d4 == 0.0 && on_segment(p1, p2, q2))
}

/// Sweep over segments sorted by their left end; only segments whose
/// x-extents overlap are tested pairwise.
pub fn check_simple(points: &[Vec2]) -> Result<(), GeometryError> {
    let n = points.len();
    let seg = |i: usize| (points[i], points[(i + 1) % n]);

    // Adjacent segments share a node; they only intersect by folding back.
    for i in 0..n {
        let (a, b) = seg(i);
        let (_, c) = seg((i + 1) % n);
        if cross(b - a, c - b) == 0.0 && (b - a).dot(&(c - b)) < 0.0 {
            return Err(GeometryError::SelfIntersecting(i, (i + 1) % n));
        }
    }

    let mut order: Vec<usize> = (0..n).collect();
    let xmin = |i: usize| {
        let (a, b) = seg(i);
        a.x.min(b.x)
    };
    let xmax = |i: usize| {
        let (a, b) = seg(i);
        a.x.max(b.x)
    };
    order.sort_by(|&i, &j| xmin(i).total_cmp(&xmin(j)).then(i.cmp(&j)));

    let mut active: Vec<usize> = Vec::new();
    for &i in &order {
        let left = xmin(i);
        active.retain(|&j| xmax(j) >= left);
        let (p1, p2) = seg(i);
        for &j in &active {
            let adjacent = (i + 1) % n == j || (j + 1) % n == i;
            if adjacent {
                continue;
            }
            let (q1, q2) = seg(j);
            if segments_intersect(p1, p2, q1, q2) {
                return Err(GeometryError::SelfIntersecting(i.min(j), i.max(j)));
            }
        }
        active.push(i);
    }
    Ok(())
}

fn point_segment_distance(p: Vec2, a: Vec2, b: Vec2) -> f64 {
    let ab = b - a;
    let len2 = ab.norm_squared();
    let t = if len2 > 0.0 { ((p - a).dot(&ab) / len2).clamp(0.0, 1.0) } else { 0.0 };
    (p - (a + ab * t)).norm()
}

/// Largest distance from a node of `from` to the polygon `to`.
fn directed_hausdorff(from: &[Vec2], to: &[Vec2]) -> f64 {
    let m = to.len();
    from.iter()
        .map(|&p| {
            (0..m)
                .map(|j| point_segment_distance(p, to[j], to[(j + 1) % m]))
                .fold(f64::INFINITY, f64::min)
        })
        .fold(0.0, f64::max)
}

/// Symmetric Hausdorff distance, node-to-segment in both directions.
pub fn hausdorff_distance(a: &ClosedCurve, b: &ClosedCurve) -> f64 {
    directed_hausdorff(a.nodes(), b.nodes()).max(directed_hausdorff(b.nodes(), a.nodes()))
}

/// Hausdorff distance after aligning area centroids.
pub fn hausdorff_up_to_translation(a: &ClosedCurve, b: &ClosedCurve) -> f64 {
    let shift = a.centroid() - b.centroid();
    let moved: Vec<Vec2> = b.nodes().iter().map(|p| p + shift).collect();
    directed_hausdorff(a.nodes(), &moved).max(directed_hausdorff(&moved, a.nodes()))
}

/// Walks along the polygon `nodes` placing `count` points at Euclidean
/// distance `chord` from each other, starting from node 0. Returns the
/// points and the arc-length position reached by the closing point.
fn chord_walk(nodes: &[Vec2], cum: &[f64], chord: f64, count: usize) -> (Vec<Vec2>, f64) {
    let m = nodes.len();
    let total = cum[m];
    let node_at = |k: usize| nodes[k % m];
    let mut out = Vec::with_capacity(count);
    let mut seg = 0usize; // segment index, may exceed m (wraps)
    let mut u = 0.0; // parameter on current segment
    let mut q = nodes[0];
    out.push(q);
    let mut pos = 0.0;
    for step in 1..=count {
        loop {
            let a = node_at(seg);
            let b = node_at(seg + 1);
            if (b - q).norm() >= chord {
                // Solve |a + t (b - a) - q| = chord for the largest root in [u, 1].
                let d = b - a;
                let w = a - q;
                let qa = d.norm_squared();
                let qb = 2.0 * d.dot(&w);
                let qc = w.norm_squared() - chord * chord;
                let disc = (qb * qb - 4.0 * qa * qc).max(0.0);
                let t = ((-qb + disc.sqrt()) / (2.0 * qa)).clamp(u, 1.0);
                u = t;
                q = a + d * t;
                pos = cum[seg % m] + (seg / m) as f64 * total + t * (cum[seg % m + 1] - cum[seg % m]);
                break;
            }
            seg += 1;
            u = 0.0;
            if seg > 3 * m {
                return (out, f64::INFINITY);
            }
        }
        if step < count {
            out.push(q);
        }
    }
    (out, pos)
}

/// Resamples to `n` nodes with equal consecutive chords lying on the input
/// polygon, then rescales about the centroid to restore the input area.
pub fn resample_arclength(curve: &ClosedCurve, n: usize) -> Result<ClosedCurve, GeometryError> {
    if n < MIN_NODES {
        return Err(GeometryError::TooFewNodes(n));
    }
    let nodes = curve.nodes();
    let m = nodes.len();
    let mut cum = Vec::with_capacity(m + 1);
    cum.push(0.0);
    for i in 0..m {
        cum.push(cum[i] + (nodes[(i + 1) % m] - nodes[i]).norm());
    }
    let total = cum[m];

    // Closing position grows monotonically with the chord; find where it hits
    // the total length by safeguarded secant (Illinois) iteration.
    let eval = |c: f64| chord_walk(nodes, &cum, c, n).1 - total;
    let mut lo = 0.5 * total / n as f64;
    let mut hi = total / n as f64;
    let mut flo = eval(lo);
    let mut fhi = eval(hi);
    if !(flo < 0.0) {
        return Err(GeometryError::ResampleFailed);
    }
    let mut grow = 0;
    while !(fhi >= 0.0) {
        hi *= 1.1;
        fhi = eval(hi);
        grow += 1;
        if grow > 50 {
            return Err(GeometryError::ResampleFailed);
        }
    }
    let mut side = 0i8;
    let mut chord = hi;
    for _ in 0..200 {
        chord = (lo * fhi - hi * flo) / (fhi - flo);
        if !(chord > lo && chord < hi) {
            chord = 0.5 * (lo + hi);
        }
        let f = eval(chord);
        if f.abs() <= 1e-15 * total || (hi - lo) <= 1e-16 * hi {
            break;
        }
        if f < 0.0 {
            lo = chord;
            flo = f;
            if side == -1 {
                fhi *= 0.5;
            }
            side = -1;
        } else {
            hi = chord;
            fhi = f;
            if side == 1 {
                flo *= 0.5;
            }
            side = 1;
        }
    }
    let (points, _) = chord_walk(nodes, &cum, chord, n);
    if points.len() != n {
        return Err(GeometryError::ResampleFailed);
    }
    let raw = ClosedCurve::new(points)?;
    let factor = (curve.enclosed_area() / raw.enclosed_area()).sqrt();
    if factor == 1.0 {
        return Ok(raw);
    }
    raw.scaled(factor, raw.centroid())
}

/// Counterclockwise samples of an ellipse centred at the origin, equispaced in
/// the angle parameter.
pub fn ellipse_points(a: f64, b: f64, n: usize) -> Vec<Vec2> {
    (0..n)
        .map(|k| {
            let t = std::f64::consts::TAU * k as f64 / n as f64;
            Vec2::new(a * t.cos(), b * t.sin())
        })
        .collect()
}

pub fn circle_points(r: f64, n: usize) -> Vec<Vec2> {
    ellipse_points(r, r, n)
}
