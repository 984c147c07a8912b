//! Fundamental solution, single/double layer potentials, and Nyström
//! matrices of the boundary operators K and K*.
//!
//! Conventions (d = 2 throughout, ω₂ = 2π):
//!   Γ(x) = (1/2π) ln|x|
//!   S φ(x) = ∮ Γ(x−y) φ(y) dσ(y)
//!   D φ(x) = ∮ ∂Γ(x−y)/∂ν_y φ(y) dσ(y),  ∂Γ(x−y)/∂ν_y = ⟨y−x, ν_y⟩ / (2π|x−y|²)
//!   K φ(x) = p.v. ∮ ⟨y−x, ν_y⟩/(2π|x−y|²) φ dσ,  K* its L² adjoint
//! with the trace formulas ∂S/∂ν± = (±½ I + K*) φ and D|± = (∓½ I + K) φ
//! (+ the outer limit). On smooth curves both kernels extend smoothly to the
//! diagonal with limit κ(x)/(4π), so the Nyström matrices need no singular
//! quadrature; only the on-curve single-layer trace does (Kress rule).

use std::f64::consts::PI;
use std::sync::{Arc, OnceLock};

use nalgebra::{DMatrix, Matrix2, Vector2};
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::fourier::TrigInterp;
use crate::geometry::BoundaryCurve;
use crate::multiindex::{factorial, MultiIndex};

/// Largest supported order for closed-form kernel derivatives.
pub const MAX_DERIVATIVE_ORDER: u32 = 8;

/// i^b
pub(crate) fn ipow(b: u32) -> Complex64 {
    match b % 4 {
        0 => Complex64::new(1.0, 0.0),
        1 => Complex64::new(0.0, 1.0),
        2 => Complex64::new(-1.0, 0.0),
        _ => Complex64::new(0.0, -1.0),
    }
}

pub(crate) fn zeta(v: Vector2<f64>) -> Complex64 {
    Complex64::new(v.x, v.y)
}

/// Γ(x) = (1/2π) ln|x|.
pub fn fundamental_solution(x: Vector2<f64>) -> Result<f64> {
    let r = x.norm();
    if r == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(r.ln() / (2.0 * PI))
}

/// ∇Γ(x) = x / (2π|x|²).
pub fn fundamental_gradient(x: Vector2<f64>) -> Result<Vector2<f64>> {
    let r2 = x.norm_squared();
    if r2 == 0.0 {
        return Err(Error::SingularPoint);
    }
    Ok(x / (2.0 * PI * r2))
}

/// ∂^j Γ(x). For |j| = k ≥ 1 the closed form is
/// Re[ i^{j₂} (−1)^{k−1} (k−1)! ζ^{−k} ] / 2π with ζ = x₁ + i x₂.
pub fn fundamental_partial(j: MultiIndex, x: Vector2<f64>) -> Result<f64> {
    let k = j.order();
    if k == 0 {
        return fundamental_solution(x);
    }
    if k > MAX_DERIVATIVE_ORDER {
        return Err(Error::InvalidArgument(format!(
            "derivative order {k} exceeds the supported cap {MAX_DERIVATIVE_ORDER}"
        )));
    }
    let z = zeta(x);
    if z.norm_sqr() == 0.0 {
        return Err(Error::SingularPoint);
    }
    let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
    let coeff = sign * factorial(k - 1) / (2.0 * PI);
    Ok(coeff * (ipow(j.1) * z.powi(-(k as i32))).re)
}

/// Hessian of Γ: (1/2π)(I/|x|² − 2 x xᵀ/|x|⁴).
pub fn fundamental_hessian(x: Vector2<f64>) -> Result<Matrix2<f64>> {
    let r2 = x.norm_squared();
    if r2 == 0.0 {
        return Err(Error::SingularPoint);
    }
    let outer = x * x.transpose();
    Ok((Matrix2::identity() / r2 - 2.0 * outer / (r2 * r2)) / (2.0 * PI))
}

/// Double-layer kernel ∂Γ(x−y)/∂ν_y = ⟨y−x, ν_y⟩ / (2π|x−y|²).
pub(crate) fn dlp_kernel(x: Vector2<f64>, y: Vector2<f64>, nu_y: Vector2<f64>) -> f64 {
    let d = y - x;
    d.dot(&nu_y) / (2.0 * PI * d.norm_squared())
}

/// Adjoint kernel ⟨x−y, ν_x⟩ / (2π|x−y|²).
pub(crate) fn kstar_kernel(x: Vector2<f64>, nu_x: Vector2<f64>, y: Vector2<f64>) -> f64 {
    let d = x - y;
    d.dot(&nu_x) / (2.0 * PI * d.norm_squared())
}

/// A function on a boundary curve: nodal values tied to the discretization.
#[derive(Debug, Clone)]
pub struct Density {
    curve: Arc<BoundaryCurve>,
    values: Vec<f64>,
    mean_zero: bool,
}

impl Density {
    pub fn new(curve: Arc<BoundaryCurve>, values: Vec<f64>) -> Result<Self> {
        if values.len() != curve.len() {
            return Err(Error::InvalidArgument(format!(
                "density has {} values for a curve with {} nodes",
                values.len(),
                curve.len()
            )));
        }
        Ok(Self {
            curve,
            values,
            mean_zero: false,
        })
    }

    /// Construct and assert ∮ φ dσ = 0 (tolerance 1e−12 relative to ‖φ‖).
    pub fn mean_zero(curve: Arc<BoundaryCurve>, values: Vec<f64>) -> Result<Self> {
        let mut density = Self::new(curve, values)?;
        let integral = density.integral();
        let scale = density.sup_norm().max(1.0);
        if integral.abs() > 1e-12 * scale * density.curve.perimeter() {
            return Err(Error::IncompatibleFlux(integral));
        }
        density.mean_zero = true;
        Ok(density)
    }

    pub fn from_fn(curve: Arc<BoundaryCurve>, f: impl Fn(Vector2<f64>) -> f64) -> Self {
        let values = curve.nodes().iter().map(|&x| f(x)).collect();
        Self {
            curve,
            values,
            mean_zero: false,
        }
    }

    pub fn zero(curve: Arc<BoundaryCurve>) -> Self {
        let n = curve.len();
        Self {
            curve,
            values: vec![0.0; n],
            mean_zero: true,
        }
    }

    pub fn curve(&self) -> &Arc<BoundaryCurve> {
        &self.curve
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn is_mean_zero_flagged(&self) -> bool {
        self.mean_zero
    }

    /// ∮ φ dσ
    pub fn integral(&self) -> f64 {
        self.curve.integrate(&self.values)
    }

    pub fn sup_norm(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }

    /// Subtract the weighted mean so that ∮ φ dσ = 0; returns the removed mean value.
    pub fn project_mean_zero(&mut self) -> f64 {
        let mean = self.integral() / self.curve.perimeter();
        for v in &mut self.values {
            *v -= mean;
        }
        self.mean_zero = true;
        mean
    }

    /// Spectrally accurate evaluation between nodes (trigonometric interpolation).
    pub fn interpolant(&self) -> TrigInterp {
        TrigInterp::new(&self.values)
    }
}

/// How off-curve evaluation treats targets inside the near-field zone where
/// the plain trapezoid rule loses accuracy.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum EvalPolicy {
    /// Refuse near-field targets (the default: silent inaccuracy would
    /// poison every convergence study downstream).
    #[default]
    Strict,
    /// Evaluate anyway; the caller owns the accuracy loss.
    Permissive,
}

/// Near-field limit: targets closer than this to the curve are rejected
/// under [`EvalPolicy::Strict`].
pub fn near_field_limit(curve: &BoundaryCurve) -> f64 {
    4.0 * curve.mesh_width()
}

fn check_targets(
    curve: &BoundaryCurve,
    targets: &[Vector2<f64>],
    policy: EvalPolicy,
) -> Result<()> {
    if policy == EvalPolicy::Permissive {
        return Ok(());
    }
    let limit = near_field_limit(curve);
    for &x in targets {
        let dist = curve.distance_to_nodes(x);
        if dist < limit {
            return Err(Error::NearSingularTarget { dist, limit });
        }
    }
    Ok(())
}

pub(crate) fn s_eval(curve: &BoundaryCurve, values: &[f64], x: Vector2<f64>) -> f64 {
    (0..curve.len())
        .map(|q| {
            let d = x - curve.node(q);
            d.norm().ln() / (2.0 * PI) * values[q] * curve.weight(q)
        })
        .sum()
}

pub(crate) fn grad_s_eval(curve: &BoundaryCurve, values: &[f64], x: Vector2<f64>) -> Vector2<f64> {
    let mut out = Vector2::zeros();
    for q in 0..curve.len() {
        let d = x - curve.node(q);
        out += d / (2.0 * PI * d.norm_squared()) * values[q] * curve.weight(q);
    }
    out
}

/// ∂^l_x S(values)(x) for x off the curve.
pub(crate) fn partial_s_eval(
    curve: &BoundaryCurve,
    values: &[f64],
    l: MultiIndex,
    x: Vector2<f64>,
) -> Result<f64> {
    let mut out = 0.0;
    for q in 0..curve.len() {
        out += fundamental_partial(l, x - curve.node(q))? * values[q] * curve.weight(q);
    }
    Ok(out)
}

pub(crate) fn d_eval(curve: &BoundaryCurve, values: &[f64], x: Vector2<f64>) -> f64 {
    (0..curve.len())
        .map(|q| dlp_kernel(x, curve.node(q), curve.normal(q)) * values[q] * curve.weight(q))
        .sum()
}

/// ∂^l_x D(values)(x) for x off the curve:
/// ∂^l_x [∂Γ(x−y)/∂ν_y] = −Σ_s ν_{y,s} ∂^{l+e_s} Γ(x−y).
pub(crate) fn partial_d_eval(
    curve: &BoundaryCurve,
    values: &[f64],
    l: MultiIndex,
    x: Vector2<f64>,
) -> Result<f64> {
    let mut out = 0.0;
    for q in 0..curve.len() {
        let w = x - curve.node(q);
        let nu = curve.normal(q);
        let kernel = -(nu.x * fundamental_partial(l.add(MultiIndex::E1), w)?
            + nu.y * fundamental_partial(l.add(MultiIndex::E2), w)?);
        out += kernel * values[q] * curve.weight(q);
    }
    Ok(out)
}

pub(crate) fn grad_d_eval(curve: &BoundaryCurve, values: &[f64], x: Vector2<f64>) -> Vector2<f64> {
    let mut out = Vector2::zeros();
    for q in 0..curve.len() {
        let hess = fundamental_hessian(x - curve.node(q)).expect("target off the curve");
        out -= hess * curve.normal(q) * values[q] * curve.weight(q);
    }
    out
}

/// Single layer potential at off-curve targets.
pub fn single_layer(
    density: &Density,
    targets: &[Vector2<f64>],
    policy: EvalPolicy,
) -> Result<Vec<f64>> {
    check_targets(density.curve(), targets, policy)?;
    Ok(targets
        .iter()
        .map(|&x| s_eval(density.curve(), density.values(), x))
        .collect())
}

/// Double layer potential at off-curve targets.
pub fn double_layer(
    density: &Density,
    targets: &[Vector2<f64>],
    policy: EvalPolicy,
) -> Result<Vec<f64>> {
    check_targets(density.curve(), targets, policy)?;
    Ok(targets
        .iter()
        .map(|&x| d_eval(density.curve(), density.values(), x))
        .collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OperatorTag {
    K,
    KStar,
    SingleTrace,
}

/// Dense Nyström matrix of a boundary operator on a fixed curve.
#[derive(Debug, Clone)]
pub struct OperatorMatrix {
    curve: Arc<BoundaryCurve>,
    matrix: DMatrix<f64>,
    tag: OperatorTag,
}

impl OperatorMatrix {
    pub fn curve(&self) -> &Arc<BoundaryCurve> {
        &self.curve
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    pub fn tag(&self) -> OperatorTag {
        self.tag
    }

    pub fn apply(&self, values: &[f64]) -> Vec<f64> {
        let m = self.matrix.nrows();
        let mut out = vec![0.0; m];
        for p in 0..m {
            let mut acc = 0.0;
            for q in 0..self.matrix.ncols() {
                acc += self.matrix[(p, q)] * values[q];
            }
            out[p] = acc;
        }
        out
    }
}

/// Nyström matrix of K (the double-layer trace operator).
pub fn k_matrix(curve: &Arc<BoundaryCurve>) -> OperatorMatrix {
    let m = curve.len();
    let mut a = DMatrix::zeros(m, m);
    for p in 0..m {
        for q in 0..m {
            let kernel = if p == q {
                curve.curvature(p) / (4.0 * PI)
            } else {
                dlp_kernel(curve.node(p), curve.node(q), curve.normal(q))
            };
            a[(p, q)] = kernel * curve.weight(q);
        }
    }
    let out = OperatorMatrix {
        curve: Arc::clone(curve),
        matrix: a,
        tag: OperatorTag::K,
    };
    debug_assert!(adjointness_defect(&out, &kstar_matrix_raw(curve)) < 1e-14);
    out
}

fn kstar_matrix_raw(curve: &Arc<BoundaryCurve>) -> OperatorMatrix {
    let m = curve.len();
    let mut a = DMatrix::zeros(m, m);
    for p in 0..m {
        for q in 0..m {
            let kernel = if p == q {
                curve.curvature(p) / (4.0 * PI)
            } else {
                kstar_kernel(curve.node(p), curve.normal(p), curve.node(q))
            };
            a[(p, q)] = kernel * curve.weight(q);
        }
    }
    OperatorMatrix {
        curve: Arc::clone(curve),
        matrix: a,
        tag: OperatorTag::KStar,
    }
}

/// Nyström matrix of K* (the adjoint, appearing in the jump relations).
pub fn kstar_matrix(curve: &Arc<BoundaryCurve>) -> OperatorMatrix {
    kstar_matrix_raw(curve)
}

/// max over (p, q) of |K*`[p][q]` w_p − K`[q][p]` w_q|: the discrete L²
/// adjointness defect.
pub fn adjointness_defect(k: &OperatorMatrix, kstar: &OperatorMatrix) -> f64 {
    let curve = k.curve();
    let m = curve.len();
    let mut defect = 0.0f64;
    for p in 0..m {
        for q in 0..m {
            let lhs = kstar.matrix()[(p, q)] * curve.weight(p);
            let rhs = k.matrix()[(q, p)] * curve.weight(q);
            defect = defect.max((lhs - rhs).abs());
        }
    }
    defect
}

/// On-curve trace of the single layer via the Kress logarithmic quadrature:
/// ln|γ(t)−γ(τ)| is split into ½ ln(4 sin²((t−τ)/2)) (integrated with the
/// Martensen–Kussmaul weights) plus a smooth remainder (periodic trapezoid).
pub fn single_layer_trace_matrix(curve: &Arc<BoundaryCurve>) -> OperatorMatrix {
    let m = curve.len();
    let half = m / 2;
    // R(s) = −(4π/M) Σ_{m=1}^{M/2−1} cos(m s)/m − (4π/M²) cos(M s / 2)
    let mut r_weights = vec![0.0; m];
    for (diff, rw) in r_weights.iter_mut().enumerate() {
        let s = 2.0 * PI * diff as f64 / m as f64;
        let mut acc = 0.0;
        for mode in 1..half {
            acc += (mode as f64 * s).cos() / mode as f64;
        }
        *rw = -(4.0 * PI / m as f64) * acc
            - (4.0 * PI / (m as f64 * m as f64)) * (half as f64 * s).cos();
    }
    let dt = 2.0 * PI / m as f64;
    let mut a = DMatrix::zeros(m, m);
    for p in 0..m {
        for q in 0..m {
            let smooth = if p == q {
                curve.speed(p).powi(2)
            } else {
                let chord2 = (curve.node(p) - curve.node(q)).norm_squared();
                let sine = (0.5 * (curve.param(p) - curve.param(q))).sin();
                chord2 / (4.0 * sine * sine)
            };
            let diff = (p + m - q) % m;
            a[(p, q)] =
                (0.5 * r_weights[diff] + dt * 0.5 * smooth.ln()) * curve.speed(q) / (2.0 * PI);
        }
    }
    OperatorMatrix {
        curve: Arc::clone(curve),
        matrix: a,
        tag: OperatorTag::SingleTrace,
    }
}

/// Single layer evaluated on the curve itself (Kress rule).
pub fn single_layer_trace(density: &Density) -> Vec<f64> {
    single_layer_trace_matrix(density.curve()).apply(density.values())
}

// ---------------------------------------------------------------------------
// Near-field evaluation: panel quadrature graded dyadically toward the
// parameter of the closest curve point. Accuracy is independent of how close
// the target sits to the curve, which is what the jump check needs.
// ---------------------------------------------------------------------------

const GAUSS_PANEL_ORDER: usize = 16;

fn gauss_legendre(n: usize) -> Vec<(f64, f64)> {
    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut x = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            // Legendre recurrence for P_n(x) and P_n'(x)
            let mut p0 = 1.0;
            let mut p1 = x;
            for k in 2..=n {
                let pk = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
                p0 = p1;
                p1 = pk;
            }
            dp = n as f64 * (x * p1 - p0) / (x * x - 1.0);
            let step = p1 / dp;
            x -= step;
            if step.abs() < 1e-15 {
                break;
            }
        }
        out.push((x, 2.0 / ((1.0 - x * x) * dp * dp)));
    }
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

fn panel_rule() -> &'static [(f64, f64)] {
    static RULE: OnceLock<Vec<(f64, f64)>> = OnceLock::new();
    RULE.get_or_init(|| gauss_legendre(GAUSS_PANEL_ORDER))
}

fn integrate_panel(f: &mut dyn FnMut(f64) -> f64, a: f64, b: f64) -> f64 {
    let mid = 0.5 * (a + b);
    let rad = 0.5 * (b - a);
    panel_rule()
        .iter()
        .map(|&(x, w)| w * f(mid + rad * x))
        .sum::<f64>()
        * rad
}

/// Widest panel the 16-point rule resolves to machine precision for curve
/// integrands (the speed factor has complex branch points at O(1) distance).
const MAX_PANEL_WIDTH: f64 = 0.25;

/// ∫_{t0−π}^{t0+π} f(τ) dτ with panels growing dyadically away from t0 (the
/// near-singular point), from `min_width` up to [`MAX_PANEL_WIDTH`].
fn integrate_graded(f: &mut dyn FnMut(f64) -> f64, t0: f64, min_width: f64) -> f64 {
    let mut total = 0.0;
    for side in [-1.0, 1.0] {
        let mut a = 0.0;
        let mut width = min_width.min(MAX_PANEL_WIDTH);
        while a < PI {
            let b = (a + width).min(PI);
            let (lo, hi) = if side < 0.0 {
                (t0 - b, t0 - a)
            } else {
                (t0 + a, t0 + b)
            };
            total += integrate_panel(f, lo, hi);
            a = b;
            width = (2.0 * width).min(MAX_PANEL_WIDTH);
        }
    }
    total
}

/// Single layer at a target arbitrarily close to (but not on) the curve.
/// `density_at` evaluates the density at any curve parameter.
pub fn single_layer_near(
    curve: &BoundaryCurve,
    density_at: &dyn Fn(f64) -> f64,
    x: Vector2<f64>,
) -> f64 {
    let t0 = curve.closest_param(x);
    let dist = (curve.shape().position(t0) - x).norm();
    let min_width = (dist / 4.0).max(1e-9);
    let mut f = |t: f64| {
        let y = curve.shape().position(t);
        let speed = curve.shape().velocity(t).norm();
        (x - y).norm().ln() / (2.0 * PI) * density_at(t) * speed
    };
    integrate_graded(&mut f, t0, min_width)
}

/// Gradient of the single layer at a near-field target.
pub fn grad_single_layer_near(
    curve: &BoundaryCurve,
    density_at: &dyn Fn(f64) -> f64,
    x: Vector2<f64>,
) -> Vector2<f64> {
    let t0 = curve.closest_param(x);
    let dist = (curve.shape().position(t0) - x).norm();
    let min_width = (dist / 4.0).max(1e-9);
    let mut fx = |t: f64| {
        let y = curve.shape().position(t);
        let speed = curve.shape().velocity(t).norm();
        let d = x - y;
        d.x / (2.0 * PI * d.norm_squared()) * density_at(t) * speed
    };
    let gx = integrate_graded(&mut fx, t0, min_width);
    let mut fy = |t: f64| {
        let y = curve.shape().position(t);
        let speed = curve.shape().velocity(t).norm();
        let d = x - y;
        d.y / (2.0 * PI * d.norm_squared()) * density_at(t) * speed
    };
    let gy = integrate_graded(&mut fy, t0, min_width);
    Vector2::new(gx, gy)
}

/// Residuals of the single-layer jump relations measured at every node.
#[derive(Debug, Clone, Copy)]
pub struct JumpCheckReport {
    /// max_p |∂S/∂ν₊(x_p) − ((½I + K*)φ)_p|
    pub plus_residual: f64,
    /// max_p |∂S/∂ν₋(x_p) − ((−½I + K*)φ)_p|
    pub minus_residual: f64,
    /// max_p |(∂S/∂ν₊ − ∂S/∂ν₋)(x_p) − φ_p|
    pub jump_residual: f64,
}

impl JumpCheckReport {
    pub fn max_residual(&self) -> f64 {
        self.plus_residual.max(self.minus_residual)
    }
}

/// Verify the trace formula ∂S/∂ν± = (±½ I + K*) φ by one-sided limits.
///
/// The normal derivative at distances h..4h off the curve is computed with
/// the graded near-field rule and extrapolated to the curve
/// (4 f(h) − 6 f(2h) + 4 f(3h) − f(4h), error O(h⁴) — far below the Nyström
/// error of K*, which is the quantity under test); the right-hand side uses
/// the Nyström K*.
pub fn jump_check(density: &Density, h_eps: f64) -> Result<JumpCheckReport> {
    let curve = density.curve();
    if !(h_eps > 0.0) || h_eps > 0.05 * curve.mesh_width().max(1e-6) * curve.len() as f64 {
        return Err(Error::InvalidArgument(format!(
            "offset h_eps = {h_eps} must be positive and small relative to the curve"
        )));
    }
    let interp = density.interpolant();
    let density_at = |t: f64| interp.eval(t);
    let kstar = kstar_matrix(curve);
    let kphi = kstar.apply(density.values());

    let mut plus = 0.0f64;
    let mut minus = 0.0f64;
    let mut jump = 0.0f64;
    for p in 0..curve.len() {
        let x = curve.node(p);
        let nu = curve.normal(p);
        let one_sided = |sign: f64| {
            let at = |mult: f64| {
                grad_single_layer_near(curve, &density_at, x + sign * mult * h_eps * nu).dot(&nu)
            };
            4.0 * at(1.0) - 6.0 * at(2.0) + 4.0 * at(3.0) - at(4.0)
        };
        let outer = one_sided(1.0);
        let inner = one_sided(-1.0);
        plus = plus.max((outer - (0.5 * density.values()[p] + kphi[p])).abs());
        minus = minus.max((inner - (-0.5 * density.values()[p] + kphi[p])).abs());
        jump = jump.max((outer - inner - density.values()[p]).abs());
    }
    Ok(JumpCheckReport {
        plus_residual: plus,
        minus_residual: minus,
        jump_residual: jump,
    })
}
