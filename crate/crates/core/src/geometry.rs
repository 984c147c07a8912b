//! Parametrized smooth closed curves and their quadrature discretizations.
//!
//! Every curve is a C², simple, positively oriented (counterclockwise)
//! parametrization γ: [0, 2π) → ℝ², discretized with the periodic trapezoid
//! rule on equispaced parameter nodes. For analytic curves this rule is
//! spectrally accurate, which is what the downstream Nyström scheme assumes.
//! Normals, speeds and curvatures come from the analytic parametrization;
//! custom curves must supply first and second derivative callbacks because
//! the Nyström diagonal limit needs the curvature exactly.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::multiindex::MultiIndex;

/// Analytic parametrization of a closed curve on [0, 2π).
pub trait Parametrization: Send + Sync {
    fn position(&self, t: f64) -> Vector2<f64>;
    fn velocity(&self, t: f64) -> Vector2<f64>;
    fn acceleration(&self, t: f64) -> Vector2<f64>;
}

/// Base curve family, before centering/rotation/scaling.
#[derive(Clone)]
pub enum CurveKind {
    Disk {
        radius: f64,
    },
    Ellipse {
        a: f64,
        b: f64,
    },
    /// γ(t) = (cos t + 0.65 cos 2t − 0.65, 1.5 sin t): a standard smooth
    /// test curve with no symmetry axis, so parity-based cancellations in
    /// tensor tables cannot hide errors.
    Kite,
    Custom(Arc<dyn Parametrization>),
}

impl std::fmt::Debug for CurveKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CurveKind::Disk { radius } => write!(f, "Disk {{ radius: {radius} }}"),
            CurveKind::Ellipse { a, b } => write!(f, "Ellipse {{ a: {a}, b: {b} }}"),
            CurveKind::Kite => write!(f, "Kite"),
            CurveKind::Custom(_) => write!(f, "Custom(..)"),
        }
    }
}

/// A closed curve: base kind plus center offset, rotation, uniform scale and
/// an optional rotation of the parameter origin.
#[derive(Debug, Clone)]
pub struct ShapeSpec {
    pub kind: CurveKind,
    pub center: Vector2<f64>,
    pub rotation: f64,
    pub scale: f64,
    /// Shift of the parameter origin: the curve is traversed as γ₀(t + shift).
    pub param_shift: f64,
}

impl ShapeSpec {
    pub fn disk(radius: f64) -> Self {
        Self::from_kind(CurveKind::Disk { radius })
    }

    pub fn ellipse(a: f64, b: f64) -> Self {
        Self::from_kind(CurveKind::Ellipse { a, b })
    }

    pub fn kite() -> Self {
        Self::from_kind(CurveKind::Kite)
    }

    pub fn custom(parametrization: Arc<dyn Parametrization>) -> Self {
        Self::from_kind(CurveKind::Custom(parametrization))
    }

    fn from_kind(kind: CurveKind) -> Self {
        Self {
            kind,
            center: Vector2::zeros(),
            rotation: 0.0,
            scale: 1.0,
            param_shift: 0.0,
        }
    }

    pub fn with_center(mut self, center: Vector2<f64>) -> Self {
        self.center = center;
        self
    }

    pub fn with_rotation(mut self, rotation: f64) -> Self {
        self.rotation = rotation;
        self
    }

    pub fn with_scale(mut self, scale: f64) -> Self {
        self.scale = scale;
        self
    }

    pub fn with_param_shift(mut self, shift: f64) -> Self {
        self.param_shift = shift;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.scale > 0.0) || !self.scale.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "curve scale must be positive and finite, got {}",
                self.scale
            )));
        }
        match self.kind {
            CurveKind::Disk { radius } => {
                if !(radius > 0.0) || !radius.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "disk radius must be positive, got {radius}"
                    )));
                }
            }
            CurveKind::Ellipse { a, b } => {
                if !(a > 0.0 && b > 0.0) || !a.is_finite() || !b.is_finite() {
                    return Err(Error::InvalidArgument(format!(
                        "ellipse semi-axes must be positive, got a = {a}, b = {b}"
                    )));
                }
            }
            CurveKind::Kite | CurveKind::Custom(_) => {}
        }
        Ok(())
    }

    fn base_position(&self, t: f64) -> Vector2<f64> {
        match &self.kind {
            CurveKind::Disk { radius } => Vector2::new(radius * t.cos(), radius * t.sin()),
            CurveKind::Ellipse { a, b } => Vector2::new(a * t.cos(), b * t.sin()),
            CurveKind::Kite => Vector2::new(t.cos() + 0.65 * (2.0 * t).cos() - 0.65, 1.5 * t.sin()),
            CurveKind::Custom(p) => p.position(t),
        }
    }

    fn base_velocity(&self, t: f64) -> Vector2<f64> {
        match &self.kind {
            CurveKind::Disk { radius } => Vector2::new(-radius * t.sin(), radius * t.cos()),
            CurveKind::Ellipse { a, b } => Vector2::new(-a * t.sin(), b * t.cos()),
            CurveKind::Kite => Vector2::new(-t.sin() - 1.3 * (2.0 * t).sin(), 1.5 * t.cos()),
            CurveKind::Custom(p) => p.velocity(t),
        }
    }

    fn base_acceleration(&self, t: f64) -> Vector2<f64> {
        match &self.kind {
            CurveKind::Disk { radius } => Vector2::new(-radius * t.cos(), -radius * t.sin()),
            CurveKind::Ellipse { a, b } => Vector2::new(-a * t.cos(), -b * t.sin()),
            CurveKind::Kite => Vector2::new(-t.cos() - 2.6 * (2.0 * t).cos(), -1.5 * t.sin()),
            CurveKind::Custom(p) => p.acceleration(t),
        }
    }

    fn rotate(&self, v: Vector2<f64>) -> Vector2<f64> {
        let (s, c) = self.rotation.sin_cos();
        Vector2::new(c * v.x - s * v.y, s * v.x + c * v.y)
    }

    /// γ(t) = center + scale · R(rotation) · γ₀(t + shift)
    pub fn position(&self, t: f64) -> Vector2<f64> {
        self.center + self.scale * self.rotate(self.base_position(t + self.param_shift))
    }

    pub fn velocity(&self, t: f64) -> Vector2<f64> {
        self.scale * self.rotate(self.base_velocity(t + self.param_shift))
    }

    pub fn acceleration(&self, t: f64) -> Vector2<f64> {
        self.scale * self.rotate(self.base_acceleration(t + self.param_shift))
    }

    /// Enclosed area. Closed form for the built-in families, quadrature of
    /// ∮ ½ (x − center)·ν dσ otherwise.
    pub fn area(&self) -> Result<f64> {
        self.validate()?;
        let s2 = self.scale * self.scale;
        Ok(match &self.kind {
            CurveKind::Disk { radius } => PI * radius * radius * s2,
            CurveKind::Ellipse { a, b } => PI * a * b * s2,
            // ∮ x y' dt = ∫ (cos t + 0.65 cos 2t − 0.65)(1.5 cos t) dt = 1.5π
            CurveKind::Kite => 1.5 * PI * s2,
            CurveKind::Custom(_) => {
                let curve = BoundaryCurve::discretize(self.clone(), 512)?;
                curve.enclosed_area()
            }
        })
    }

    /// Largest distance from the curve to its center offset (sampled).
    pub fn max_radius(&self) -> f64 {
        let samples = 256;
        (0..samples)
            .map(|m| (self.position(2.0 * PI * m as f64 / samples as f64) - self.center).norm())
            .fold(0.0f64, f64::max)
    }

    /// Diameter of the curve (largest pairwise node distance, sampled).
    pub fn diameter(&self) -> f64 {
        let samples = 256;
        let pts: Vec<Vector2<f64>> = (0..samples)
            .map(|m| self.position(2.0 * PI * m as f64 / samples as f64))
            .collect();
        let mut best = 0.0f64;
        for p in 0..samples {
            for q in (p + 1)..samples {
                best = best.max((pts[p] - pts[q]).norm());
            }
        }
        best
    }
}

/// Discretized closed curve: nodes, outward unit normals, speeds, periodic
/// trapezoid weights, curvatures and parameter values.
#[derive(Debug, Clone)]
pub struct BoundaryCurve {
    shape: ShapeSpec,
    params: Vec<f64>,
    nodes: Vec<Vector2<f64>>,
    normals: Vec<Vector2<f64>>,
    speeds: Vec<f64>,
    weights: Vec<f64>,
    curvatures: Vec<f64>,
}

impl BoundaryCurve {
    /// Discretize `shape` with M equispaced parameter nodes (M even, ≥ 16).
    pub fn discretize(shape: ShapeSpec, m: usize) -> Result<Self> {
        shape.validate()?;
        if m < 16 || m % 2 != 0 {
            return Err(Error::InvalidArgument(format!(
                "node count must be even and at least 16, got {m}"
            )));
        }
        let dt = 2.0 * PI / m as f64;
        let mut params = Vec::with_capacity(m);
        let mut nodes = Vec::with_capacity(m);
        let mut normals = Vec::with_capacity(m);
        let mut speeds = Vec::with_capacity(m);
        let mut weights = Vec::with_capacity(m);
        let mut curvatures = Vec::with_capacity(m);
        for idx in 0..m {
            let t = dt * idx as f64;
            let v = shape.velocity(t);
            let a = shape.acceleration(t);
            let speed = v.norm();
            if !(speed > 0.0) {
                return Err(Error::InvalidArgument(format!(
                    "parametrization is degenerate at t = {t} (zero speed)"
                )));
            }
            params.push(t);
            nodes.push(shape.position(t));
            // outward normal of a counterclockwise curve
            normals.push(Vector2::new(v.y, -v.x) / speed);
            speeds.push(speed);
            weights.push(dt * speed);
            curvatures.push((v.x * a.y - v.y * a.x) / (speed * speed * speed));
        }
        Ok(Self {
            shape,
            params,
            nodes,
            normals,
            speeds,
            weights,
            curvatures,
        })
    }

    pub fn shape(&self) -> &ShapeSpec {
        &self.shape
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn param(&self, m: usize) -> f64 {
        self.params[m]
    }

    pub fn node(&self, m: usize) -> Vector2<f64> {
        self.nodes[m]
    }

    pub fn normal(&self, m: usize) -> Vector2<f64> {
        self.normals[m]
    }

    pub fn speed(&self, m: usize) -> f64 {
        self.speeds[m]
    }

    pub fn weight(&self, m: usize) -> f64 {
        self.weights[m]
    }

    pub fn curvature(&self, m: usize) -> f64 {
        self.curvatures[m]
    }

    pub fn nodes(&self) -> &[Vector2<f64>] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    /// ∮ v dσ for nodal values v.
    pub fn integrate(&self, values: &[f64]) -> f64 {
        assert_eq!(values.len(), self.len());
        values.iter().zip(&self.weights).map(|(v, w)| v * w).sum()
    }

    pub fn perimeter(&self) -> f64 {
        self.weights.iter().sum()
    }

    /// ∮ ½ (x − c)·ν dσ with c the centroid offset of the parametrization;
    /// equals the enclosed area by the divergence theorem.
    pub fn enclosed_area(&self) -> f64 {
        0.5 * (0..self.len())
            .map(|m| (self.nodes[m] - self.shape.center).dot(&self.normals[m]) * self.weights[m])
            .sum::<f64>()
    }

    /// Moment vector (∮ y^j ν₁ dσ, ∮ y^j ν₂ dσ).
    pub fn moment(&self, j: MultiIndex) -> Vector2<f64> {
        let mut out = Vector2::zeros();
        for m in 0..self.len() {
            out += j.monomial(self.nodes[m]) * self.weights[m] * self.normals[m];
        }
        out
    }

    /// Largest physical node spacing; the resolution scale for near-field checks.
    pub fn mesh_width(&self) -> f64 {
        let dt = 2.0 * PI / self.len() as f64;
        dt * self.speeds.iter().cloned().fold(0.0f64, f64::max)
    }

    /// Distance from `x` to the closest node.
    pub fn distance_to_nodes(&self, x: Vector2<f64>) -> f64 {
        self.nodes
            .iter()
            .map(|p| (p - x).norm())
            .fold(f64::INFINITY, f64::min)
    }

    /// Parameter of the point on the curve closest to `x`, refined by Newton
    /// iteration on d/dt |γ(t) − x|² starting from the closest node.
    pub fn closest_param(&self, x: Vector2<f64>) -> f64 {
        let m0 = (0..self.len())
            .min_by(|&p, &q| {
                (self.nodes[p] - x)
                    .norm_squared()
                    .total_cmp(&(self.nodes[q] - x).norm_squared())
            })
            .expect("curve has nodes");
        let t_start = self.params[m0];
        let dt = 2.0 * PI / self.len() as f64;
        let mut t = t_start;
        for _ in 0..30 {
            let gamma = self.shape.position(t);
            let v = self.shape.velocity(t);
            let a = self.shape.acceleration(t);
            let d = gamma - x;
            let f = d.dot(&v);
            let fp = v.dot(&v) + d.dot(&a);
            if fp.abs() < 1e-300 {
                break;
            }
            // the minimizer lies within a node spacing of the closest node;
            // clamp so far targets (flat objective) cannot send t adrift
            let step = (f / fp).clamp(-dt, dt);
            t = (t - step).clamp(t_start - 2.0 * dt, t_start + 2.0 * dt);
            if step.abs() < 1e-15 {
                break;
            }
        }
        t
    }
}
