//! Smooth, uniformly convex norms on the plane.
//!
//! Each family implements [`Norm`] and is registered by name in an
//! [`AnisotropyRegistry`]; an [`Anisotropy`] wraps a norm together with the
//! cached extrema of `phi` on the unit circle and the ellipticity constant.

use std::collections::BTreeMap;
use std::f64::consts::TAU;
use std::fmt;
use std::sync::Arc;

use nalgebra::Matrix2;
use serde_json::{json, Value};
use thiserror::Error;

use crate::geometry::{rot_cw, ClosedCurve, GeometryError, Vec2};

pub type Mat2 = Matrix2<f64>;

/// Angular samples used for `m_phi`, `M_phi` and `J_phi`.
pub const ANGULAR_GRID: usize = 4096;

/// Below this the tangential ellipticity is treated as lost.
pub const DEGENERACY_FLOOR: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum AnisotropyError {
    #[error("anisotropy evaluated at the zero vector")]
    ZeroVector,
    #[error("normal is not a unit vector (|nu| = {0})")]
    NonUnitNormal(f64),
    #[error("anisotropy is not uniformly elliptic (J_phi estimate {0:e})")]
    DegenerateAnisotropy(f64),
    #[error("invalid anisotropy parameter: {0}")]
    InvalidParameter(String),
    #[error("unknown anisotropy kind `{0}`")]
    UnknownKind(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
}

/// Value, gradient and Hessian of a norm at a point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AnisoEval {
    pub value: f64,
    pub grad: Vec2,
    pub hess: Mat2,
}

/// A 1-homogeneous norm, smooth away from the origin, with analytic
/// derivatives. Callers guarantee `x != 0`.
pub trait Norm: Send + Sync + fmt::Debug {
    fn kind(&self) -> &'static str;

    fn eval(&self, x: Vec2) -> AnisoEval;

    /// Parameters as they appear in a config file.
    fn params(&self) -> Value;

    fn value(&self, x: Vec2) -> f64 {
        self.eval(x).value
    }
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Euclidean;

impl Norm for Euclidean {
    fn kind(&self) -> &'static str {
        "euclidean"
    }

    fn eval(&self, x: Vec2) -> AnisoEval {
        let r = x.norm();
        let u = x / r;
        AnisoEval { value: r, grad: u, hess: (Mat2::identity() - u * u.transpose()) / r }
    }

    fn params(&self) -> Value {
        json!({ "kind": "euclidean" })
    }

    fn value(&self, x: Vec2) -> f64 {
        x.norm()
    }
}

/// `sqrt(x . A x)` for a symmetric positive-definite `A`.
#[derive(Debug, Clone, Copy)]
pub struct Elliptic {
    a: Mat2,
}

impl Elliptic {
    pub fn new(a: Mat2) -> Result<Self, AnisotropyError> {
        let scale = a.abs().max();
        if a.iter().any(|v| !v.is_finite()) {
            return Err(AnisotropyError::InvalidParameter("matrix entries must be finite".into()));
        }
        if (a[(0, 1)] - a[(1, 0)]).abs() > 1e-12 * scale {
            return Err(AnisotropyError::InvalidParameter("elliptic matrix must be symmetric".into()));
        }
        let a = 0.5 * (a + a.transpose());
        if !(a[(0, 0)] > 0.0 && a.determinant() > 0.0) {
            return Err(AnisotropyError::InvalidParameter("elliptic matrix must be positive definite".into()));
        }
        Ok(Self { a })
    }

    pub fn matrix(&self) -> Mat2 {
        self.a
    }
}

impl Norm for Elliptic {
    fn kind(&self) -> &'static str {
        "elliptic"
    }

    fn eval(&self, x: Vec2) -> AnisoEval {
        let ax = self.a * x;
        let value = x.dot(&ax).sqrt();
        AnisoEval {
            value,
            grad: ax / value,
            hess: self.a / value - ax * ax.transpose() / value.powi(3),
        }
    }

    fn params(&self) -> Value {
        let a = self.a;
        json!({ "kind": "elliptic", "A": [[a[(0, 0)], a[(0, 1)]], [a[(1, 0)], a[(1, 1)]]] })
    }
}

/// `(1 - beta)|x| + beta (x1^4 + x2^4)^(1/4)`.
#[derive(Debug, Clone, Copy)]
pub struct BlendedQuartic {
    beta: f64,
}

impl BlendedQuartic {
    pub fn new(beta: f64) -> Result<Self, AnisotropyError> {
        if !(0.0..1.0).contains(&beta) {
            return Err(AnisotropyError::InvalidParameter(format!("beta must lie in [0,1), got {beta}")));
        }
        Ok(Self { beta })
    }

    pub fn beta(&self) -> f64 {
        self.beta
    }
}

impl Norm for BlendedQuartic {
    fn kind(&self) -> &'static str {
        "blended_quartic"
    }

    fn eval(&self, x: Vec2) -> AnisoEval {
        let e = Euclidean.eval(x);
        let q = (x.x.powi(4) + x.y.powi(4)).powf(0.25);
        let c = Vec2::new(x.x.powi(3), x.y.powi(3));
        let q3 = q.powi(3);
        let grad_q = c / q3;
        let hess_q = Mat2::new(3.0 * x.x * x.x, 0.0, 0.0, 3.0 * x.y * x.y) / q3 - 3.0 * c * c.transpose() / q.powi(7);
        let b = self.beta;
        AnisoEval {
            value: (1.0 - b) * e.value + b * q,
            grad: (1.0 - b) * e.grad + b * grad_q,
            hess: (1.0 - b) * e.hess + b * hess_q,
        }
    }

    fn params(&self) -> Value {
        json!({ "kind": "blended_quartic", "beta": self.beta })
    }
}

pub type NormFactory = fn(&Value) -> Result<Box<dyn Norm>, AnisotropyError>;

/// Norm families addressable by name.
#[derive(Clone)]
pub struct AnisotropyRegistry {
    factories: BTreeMap<&'static str, NormFactory>,
}

impl fmt::Debug for AnisotropyRegistry {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_list().entries(self.factories.keys()).finish()
    }
}

impl Default for AnisotropyRegistry {
    fn default() -> Self {
        Self::builtin()
    }
}

impl AnisotropyRegistry {
    pub fn empty() -> Self {
        Self { factories: BTreeMap::new() }
    }

    pub fn builtin() -> Self {
        let mut r = Self::empty();
        r.register("euclidean", |_| Ok(Box::new(Euclidean)));
        r.register("elliptic", |v| {
            let rows = v
                .get("A")
                .and_then(Value::as_array)
                .ok_or_else(|| AnisotropyError::InvalidParameter("elliptic requires a 2x2 matrix `A`".into()))?;
            let mut m = [[0.0; 2]; 2];
            if rows.len() != 2 {
                return Err(AnisotropyError::InvalidParameter("`A` must have two rows".into()));
            }
            for (i, row) in rows.iter().enumerate() {
                let row = row.as_array().filter(|r| r.len() == 2).ok_or_else(|| {
                    AnisotropyError::InvalidParameter("each row of `A` must have two numbers".into())
                })?;
                for (j, e) in row.iter().enumerate() {
                    m[i][j] = e
                        .as_f64()
                        .ok_or_else(|| AnisotropyError::InvalidParameter("entries of `A` must be numbers".into()))?;
                }
            }
            Ok(Box::new(Elliptic::new(Mat2::new(m[0][0], m[0][1], m[1][0], m[1][1]))?))
        });
        r.register("blended_quartic", |v| {
            let beta = v
                .get("beta")
                .and_then(Value::as_f64)
                .ok_or_else(|| AnisotropyError::InvalidParameter("blended_quartic requires `beta`".into()))?;
            Ok(Box::new(BlendedQuartic::new(beta)?))
        });
        r
    }

    pub fn register(&mut self, name: &'static str, factory: NormFactory) {
        self.factories.insert(name, factory);
    }

    pub fn names(&self) -> impl Iterator<Item = &'static str> + '_ {
        self.factories.keys().copied()
    }

    /// Accepts either a bare kind name (`"euclidean"`) or an object with a
    /// `kind` field and the family's parameters.
    pub fn build(&self, desc: &Value) -> Result<Anisotropy, AnisotropyError> {
        let (kind, params) = match desc {
            Value::String(s) => (s.as_str(), &Value::Null),
            Value::Object(o) => (
                o.get("kind")
                    .and_then(Value::as_str)
                    .ok_or_else(|| AnisotropyError::InvalidParameter("anisotropy object needs a `kind`".into()))?,
                desc,
            ),
            _ => return Err(AnisotropyError::InvalidParameter("anisotropy must be a string or object".into())),
        };
        let factory = self.factories.get(kind).ok_or_else(|| AnisotropyError::UnknownKind(kind.to_string()))?;
        Anisotropy::from_boxed(factory(params)?)
    }
}

/// A norm with its cached constants.
#[derive(Debug, Clone)]
pub struct Anisotropy {
    norm: Arc<dyn Norm>,
    m_phi: f64,
    max_phi: f64,
    j_phi: f64,
}

impl Anisotropy {
    pub fn new(norm: impl Norm + 'static) -> Result<Self, AnisotropyError> {
        Self::from_arc(Arc::new(norm))
    }

    pub fn from_boxed(norm: Box<dyn Norm>) -> Result<Self, AnisotropyError> {
        Self::from_arc(Arc::from(norm))
    }

    fn from_arc(norm: Arc<dyn Norm>) -> Result<Self, AnisotropyError> {
        let mut m_phi = f64::INFINITY;
        let mut max_phi = 0.0_f64;
        let mut j_phi = f64::INFINITY;
        for k in 0..ANGULAR_GRID {
            let t = TAU * k as f64 / ANGULAR_GRID as f64;
            let nu = Vec2::new(t.cos(), t.sin());
            let ev = norm.eval(nu);
            let tau = rot_cw(nu);
            m_phi = m_phi.min(ev.value);
            max_phi = max_phi.max(ev.value);
            j_phi = j_phi.min(tau.dot(&(ev.hess * tau)));
        }
        if !(j_phi > DEGENERACY_FLOOR) {
            return Err(AnisotropyError::DegenerateAnisotropy(j_phi));
        }
        Ok(Self { norm, m_phi, max_phi, j_phi })
    }

    pub fn euclidean() -> Self {
        Self::new(Euclidean).expect("euclidean norm is elliptic")
    }

    pub fn elliptic(a: Mat2) -> Result<Self, AnisotropyError> {
        Self::new(Elliptic::new(a)?)
    }

    pub fn blended_quartic(beta: f64) -> Result<Self, AnisotropyError> {
        Self::new(BlendedQuartic::new(beta)?)
    }

    pub fn kind(&self) -> &'static str {
        self.norm.kind()
    }

    pub fn params(&self) -> Value {
        self.norm.params()
    }

    pub fn evaluate(&self, x: Vec2) -> Result<AnisoEval, AnisotropyError> {
        if !(x.norm() > 0.0) {
            return Err(AnisotropyError::ZeroVector);
        }
        Ok(self.norm.eval(x))
    }

    /// Unchecked evaluation for hot loops; `x` must be nonzero.
    #[inline]
    pub fn eval(&self, x: Vec2) -> AnisoEval {
        self.norm.eval(x)
    }

    #[inline]
    pub fn value(&self, x: Vec2) -> f64 {
        self.norm.value(x)
    }

    /// `g(nu) = tau . Hess phi(nu) tau`, the factor in `kappa^phi = g(nu) kappa`.
    pub fn g_factor(&self, nu: Vec2) -> Result<f64, AnisotropyError> {
        let len = nu.norm();
        if (len - 1.0).abs() > 1e-12 {
            return Err(AnisotropyError::NonUnitNormal(len));
        }
        Ok(self.g(nu))
    }

    #[inline]
    pub fn g(&self, nu: Vec2) -> f64 {
        let tau = rot_cw(nu);
        tau.dot(&(self.norm.eval(nu).hess * tau))
    }

    /// Grid minimum of `g` over the unit circle.
    pub fn ellipticity_constant(&self) -> f64 {
        self.j_phi
    }

    pub fn m_phi(&self) -> f64 {
        self.m_phi
    }

    #[allow(non_snake_case)]
    pub fn M_phi(&self) -> f64 {
        self.max_phi
    }

    /// Anisotropic perimeter of a polygon: each edge contributes
    /// `phi(outer normal) * length = phi(rot_cw(edge))`.
    pub fn polygon_perimeter(&self, nodes: &[Vec2]) -> f64 {
        let n = nodes.len();
        (0..n).map(|i| self.value(rot_cw(nodes[(i + 1) % n] - nodes[i]))).sum()
    }

    pub fn perimeter(&self, curve: &ClosedCurve) -> f64 {
        self.polygon_perimeter(curve.nodes())
    }

    /// Nodewise `g(nu) kappa`.
    pub fn anisotropic_curvature(&self, curve: &ClosedCurve) -> Vec<f64> {
        curve.normals().iter().zip(curve.curvature()).map(|(nu, k)| self.g(*nu) * k).collect()
    }

    /// Quadrature of `kappa^phi phi(nu)` against the arc weights.
    pub fn gauss_bonnet_integral(&self, curve: &ClosedCurve) -> f64 {
        let kphi = self.anisotropic_curvature(curve);
        curve
            .normals()
            .iter()
            .zip(&kphi)
            .zip(curve.arc_weights())
            .map(|((nu, k), w)| k * self.value(*nu) * w)
            .sum()
    }

    /// Wulff shape of the given area, sampled at `n` equispaced normal angles.
    ///
    /// The boundary point with outer normal `nu` is `grad phi(nu)`, which is
    /// the support-function parametrization `h nu + h' nu_theta`. The scale is
    /// fixed from the area of the smooth shape, so nodes lie on the exact
    /// boundary and the polygon is inscribed in it.
    pub fn wulff_shape(&self, area: f64, n: usize) -> Result<ClosedCurve, AnisotropyError> {
        if !(area > 0.0) {
            return Err(AnisotropyError::InvalidParameter(format!("area must be positive, got {area}")));
        }
        if n < 64 {
            return Err(AnisotropyError::InvalidParameter(format!("wulff shape needs n >= 64, got {n}")));
        }
        let mut pts = Vec::with_capacity(n);
        let mut smooth_area = 0.0;
        for k in 0..n {
            let t = TAU * k as f64 / n as f64;
            let nu = Vec2::new(t.cos(), t.sin());
            let dnu = Vec2::new(-t.sin(), t.cos());
            let ev = self.eval(nu);
            let x = ev.grad;
            let dx = ev.hess * dnu;
            smooth_area += 0.5 * crate::geometry::cross(x, dx);
            pts.push(x);
        }
        smooth_area *= TAU / n as f64;
        let s = (area / smooth_area).sqrt();
        Ok(ClosedCurve::new(pts.into_iter().map(|p| p * s).collect())?)
    }
}
