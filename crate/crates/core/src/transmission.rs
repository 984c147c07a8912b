//! Resolvent solves (λI − K*)φ = f and generalized polarization tensors.
//!
//! λ = (k+1)/(2(k−1)) encodes the conductivity contrast; physical k ∈ [0,∞]
//! with k ≠ 1 gives |λ| ≥ ½, with the extremes λ(0) = −½ and λ(∞) = +½.
//! The resolvent is invertible on L² for λ outside [−½, ½] and on the
//! mean-zero subspace at |λ| = ½; at λ = +½ the operator genuinely kills the
//! equilibrium density, so that solve is deflated onto mean-zero data.
//!
//! The generalized polarization tensor of a shape B and contrast k is
//!   M_ij = ∮_{∂B} y^j φ_i dσ,   φ_i = (λI − K*)⁻¹((1/i!) ν·∇y^i),
//! the shape-and-contrast signature every asymptotic expansion contracts
//! against. Solves are dense LU at desk scale, one factorization per (B, λ).

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::BoundaryCurve;
use crate::layer_potentials::{kstar_matrix, Density};
use crate::multiindex::{indices_in_range, MultiIndex};

/// Tolerance used to recognize the extreme resolvent values ±½.
const LAMBDA_EXTREME_TOL: f64 = 1e-13;

/// Conductivity contrast k ∈ [0, ∞], k ≠ 1, with its resolvent parameter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Conductivity {
    k: f64,
}

impl Conductivity {
    pub fn new(k: f64) -> Result<Self> {
        if k.is_nan() || k < 0.0 {
            return Err(Error::InvalidArgument(format!(
                "conductivity must lie in [0, ∞], got {k}"
            )));
        }
        if k == 1.0 {
            return Err(Error::DegenerateContrast);
        }
        Ok(Self { k })
    }

    pub fn insulating() -> Self {
        Self { k: 0.0 }
    }

    pub fn perfectly_conducting() -> Self {
        Self { k: f64::INFINITY }
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    /// λ = (k+1)/(2(k−1)), with λ(0) = −½ and λ(∞) = +½ exactly.
    pub fn lambda(&self) -> f64 {
        if self.k.is_infinite() {
            0.5
        } else if self.k == 0.0 {
            -0.5
        } else {
            (self.k + 1.0) / (2.0 * (self.k - 1.0))
        }
    }
}

/// Dense factorization of λI − K* on a fixed curve, reusable across
/// right-hand sides.
pub struct NpoSolver {
    curve: Arc<BoundaryCurve>,
    lambda: f64,
    deflated: bool,
    matrix: DMatrix<f64>,
    lu: nalgebra::LU<f64, nalgebra::Dyn, nalgebra::Dyn>,
}

impl NpoSolver {
    pub fn new(curve: Arc<BoundaryCurve>, lambda: f64) -> Result<Self> {
        if lambda.abs() < 0.5 - LAMBDA_EXTREME_TOL || lambda.is_nan() {
            return Err(Error::OutsideInvertibilityRange(lambda));
        }
        let m = curve.len();
        let kstar = kstar_matrix(&curve);
        let mut a = DMatrix::zeros(m, m);
        for p in 0..m {
            for q in 0..m {
                a[(p, q)] = -kstar.matrix()[(p, q)];
            }
            a[(p, p)] += lambda;
        }
        // λ = +½ kills the equilibrium density; shift the constant left
        // null direction away with the rank-one term 1 wᵀ (harmless for
        // mean-zero solutions, which is the only regime this λ admits).
        let deflated = (lambda - 0.5).abs() <= LAMBDA_EXTREME_TOL;
        if deflated {
            for p in 0..m {
                for q in 0..m {
                    a[(p, q)] += curve.weight(q);
                }
            }
        }
        let lu = a.clone().lu();
        Ok(Self {
            curve,
            lambda,
            deflated,
            matrix: a,
            lu,
        })
    }

    pub fn for_conductivity(curve: Arc<BoundaryCurve>, conductivity: Conductivity) -> Result<Self> {
        Self::new(curve, conductivity.lambda())
    }

    pub fn lambda(&self) -> f64 {
        self.lambda
    }

    pub fn curve(&self) -> &Arc<BoundaryCurve> {
        &self.curve
    }

    pub fn is_deflated(&self) -> bool {
        self.deflated
    }

    fn solve_vector(&self, rhs: &[f64]) -> Result<Vec<f64>> {
        let b = DVector::from_column_slice(rhs);
        let x = self
            .lu
            .solve(&b)
            .ok_or_else(|| Error::NumericalFailure("LU solve of λI − K* failed".into()))?;
        // direct-solve contract: residual below 1e−10 relative to the data
        let residual = (&self.matrix * &x - &b).amax();
        let scale = b.amax().max(1e-300);
        if residual > 1e-10 * scale {
            return Err(Error::NumericalFailure(format!(
                "resolvent solve residual {residual:.3e} exceeds 1e-10 × ‖rhs‖"
            )));
        }
        Ok(x.data.into())
    }

    /// Solve (λI − K*)φ = rhs. At λ = +½ the right-hand side must already be
    /// mean-zero; anything else is rejected.
    pub fn solve(&self, rhs: &Density) -> Result<Density> {
        if !Arc::ptr_eq(rhs.curve(), &self.curve) && rhs.len() != self.curve.len() {
            return Err(Error::InvalidArgument(
                "right-hand side lives on a different discretization".into(),
            ));
        }
        if self.deflated {
            let integral = rhs.integral();
            let scale = rhs.sup_norm().max(1.0) * self.curve.perimeter();
            if integral.abs() > 1e-10 * scale {
                return Err(Error::IncompatibleRhs(integral));
            }
        }
        let x = self.solve_vector(rhs.values())?;
        Density::new(Arc::clone(&self.curve), x)
    }

    /// Solve after projecting the right-hand side onto mean zero, returning
    /// the discarded mean value (zero when no projection was needed). Only
    /// the λ = +½ solve projects; elsewhere the full right-hand side is kept
    /// because the resolvent is invertible on all of L².
    pub fn solve_projected(&self, rhs: &Density) -> Result<(Density, f64)> {
        if self.deflated {
            let mut projected = rhs.clone();
            let discarded = projected.project_mean_zero();
            let phi = self.solve(&projected)?;
            Ok((phi, discarded))
        } else {
            Ok((self.solve(rhs)?, 0.0))
        }
    }
}

/// One-shot resolvent solve; see [`NpoSolver`] for the reusable form.
pub fn solve_npo(curve: &Arc<BoundaryCurve>, lambda: f64, rhs: &Density) -> Result<Density> {
    NpoSolver::new(Arc::clone(curve), lambda)?.solve(rhs)
}

/// Right-hand side of the φ_i equation: (1/i!) ν·∇(y^i) at the nodes.
pub fn phi_rhs(curve: &Arc<BoundaryCurve>, i: MultiIndex) -> Result<Density> {
    if i.order() == 0 {
        return Err(Error::InvalidArgument(
            "φ_i requires a multi-index with |i| ≥ 1".into(),
        ));
    }
    let inv_fact = 1.0 / i.factorial();
    let values = (0..curve.len())
        .map(|m| inv_fact * curve.normal(m).dot(&i.grad_monomial(curve.node(m))))
        .collect();
    Density::new(Arc::clone(curve), values)
}

/// φ_i = (λI − K*)⁻¹((1/i!) ν·∇y^i); also returns the mean discarded by the
/// λ = +½ projection (zero otherwise). For |i| ≥ 2 the right-hand side can
/// carry the nonzero mean (1/i!)∫_B Δ(y^i) dx, which is kept whenever the
/// resolvent admits it.
pub fn phi_i(solver: &NpoSolver, i: MultiIndex) -> Result<(Density, f64)> {
    let rhs = phi_rhs(solver.curve(), i)?;
    solver.solve_projected(&rhs)
}

/// First-order polarization tensor m_ij = ∮ y_i (λI − K*)⁻¹(ν_j) dσ.
pub fn polarization_tensor(curve: &Arc<BoundaryCurve>, lambda: f64) -> Result<Matrix2<f64>> {
    let solver = NpoSolver::new(Arc::clone(curve), lambda)?;
    let mut m = Matrix2::zeros();
    for (col, j) in [MultiIndex::E1, MultiIndex::E2].into_iter().enumerate() {
        let (phi, _) = phi_i(&solver, j)?;
        for row in 0..2 {
            let moment: f64 = (0..curve.len())
                .map(|p| {
                    let y = curve.node(p);
                    let yi = if row == 0 { y.x } else { y.y };
                    yi * phi.values()[p] * curve.weight(p)
                })
                .sum();
            m[(row, col)] = moment;
        }
    }
    Ok(m)
}

/// Serialized form of one table entry.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GptEntry {
    pub i: MultiIndex,
    pub j: MultiIndex,
    pub value: f64,
}

/// Generalized polarization tensors M_ij for 1 ≤ |i| ≤ n, 1 ≤ |j| ≤ n−|i|+1,
/// plus the zeroth-moment column ∮ φ_i dσ.
#[derive(Debug, Clone)]
pub struct GptTable {
    pub order: u32,
    pub conductivity: f64,
    pub lambda: f64,
    curve: Arc<BoundaryCurve>,
    entries: BTreeMap<(MultiIndex, MultiIndex), f64>,
    zeroth_moments: BTreeMap<MultiIndex, f64>,
    /// Means discarded by the λ = +½ projection, per the entry-wise solve
    /// convention at extreme conductivity; empty away from λ = +½.
    pub projected_means: Vec<(MultiIndex, f64)>,
}

impl GptTable {
    /// The shape discretization the table was computed on.
    pub fn curve(&self) -> &Arc<BoundaryCurve> {
        &self.curve
    }

    pub fn get(&self, i: MultiIndex, j: MultiIndex) -> Option<f64> {
        self.entries.get(&(i, j)).copied()
    }

    pub fn zeroth_moment(&self, i: MultiIndex) -> Option<f64> {
        self.zeroth_moments.get(&i).copied()
    }

    pub fn entries(&self) -> impl Iterator<Item = (MultiIndex, MultiIndex, f64)> + '_ {
        self.entries.iter().map(|(&(i, j), &v)| (i, j, v))
    }

    pub fn zeroth_moments(&self) -> impl Iterator<Item = (MultiIndex, f64)> + '_ {
        self.zeroth_moments.iter().map(|(&i, &v)| (i, v))
    }

    /// A same-shaped table with every entry zero (dry-run hook: contracting
    /// against it must reproduce the background field exactly).
    pub fn zeroed(&self) -> GptTable {
        GptTable {
            order: self.order,
            conductivity: self.conductivity,
            lambda: self.lambda,
            curve: Arc::clone(&self.curve),
            entries: self.entries.keys().map(|&k| (k, 0.0)).collect(),
            zeroth_moments: self.zeroth_moments.keys().map(|&k| (k, 0.0)).collect(),
            projected_means: Vec::new(),
        }
    }

    /// First-order block as a 2×2 matrix.
    pub fn first_order_block(&self) -> Matrix2<f64> {
        let g = |i, j| self.get(i, j).unwrap_or(0.0);
        Matrix2::new(
            g(MultiIndex::E1, MultiIndex::E1),
            g(MultiIndex::E1, MultiIndex::E2),
            g(MultiIndex::E2, MultiIndex::E1),
            g(MultiIndex::E2, MultiIndex::E2),
        )
    }
}

/// Build the GPT table of order n for the given shape discretization and
/// contrast. All φ_i solves share one LU factorization.
pub fn gpt_table(
    curve: &Arc<BoundaryCurve>,
    conductivity: Conductivity,
    n: u32,
) -> Result<GptTable> {
    if n == 0 {
        return Err(Error::InvalidArgument(
            "GPT order must be at least 1".into(),
        ));
    }
    let lambda = conductivity.lambda();
    let solver = NpoSolver::new(Arc::clone(curve), lambda)?;
    let mut entries = BTreeMap::new();
    let mut zeroth = BTreeMap::new();
    let mut projected = Vec::new();
    for i in indices_in_range(1, n) {
        let (phi, discarded) = phi_i(&solver, i)?;
        if discarded.abs() > 1e-12 {
            projected.push((i, discarded));
        }
        zeroth.insert(i, phi.integral());
        for j in indices_in_range(1, n - i.order() + 1) {
            let moment: f64 = (0..curve.len())
                .map(|p| j.monomial(curve.node(p)) * phi.values()[p] * curve.weight(p))
                .sum();
            entries.insert((i, j), moment);
        }
    }
    Ok(GptTable {
        order: n,
        conductivity: conductivity.k(),
        lambda,
        curve: Arc::clone(curve),
        entries,
        zeroth_moments: zeroth,
        projected_means: projected,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::geometry::ShapeSpec;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn unit_disk(m: usize) -> Arc<BoundaryCurve> {
        Arc::new(BoundaryCurve::discretize(ShapeSpec::disk(1.0), m).unwrap())
    }

    #[test]
    fn lambda_conventions() {
        assert_eq!(Conductivity::new(0.0).unwrap().lambda(), -0.5);
        assert_eq!(Conductivity::perfectly_conducting().lambda(), 0.5);
        assert_abs_diff_eq!(Conductivity::new(2.0).unwrap().lambda(), 1.5);
        assert!(Conductivity::new(1.0).is_err());
        assert!(Conductivity::new(-0.1).is_err());
        // monotone onto |λ| ≥ ½
        for k in [0.0, 0.3, 0.9, 1.5, 7.0, 1e9, f64::INFINITY] {
            if k != 1.0 {
                assert!(Conductivity::new(k).unwrap().lambda().abs() >= 0.5);
            }
        }
    }

    #[test]
    fn disk_resolvent_closed_form() {
        // K*(ν₁) = 0 on the disk, so φ = ν₁/λ
        let curve = unit_disk(64);
        let lambda = 1.5;
        let rhs = Density::from_fn(Arc::clone(&curve), |x| x.x);
        let phi = solve_npo(&curve, lambda, &rhs).unwrap();
        for p in 0..curve.len() {
            assert_abs_diff_eq!(phi.values()[p], curve.normal(p).x / lambda, epsilon = 1e-12);
        }
    }

    #[test]
    fn zero_rhs_gives_zero_solution() {
        let curve = unit_disk(32);
        let phi = solve_npo(&curve, 0.75, &Density::zero(Arc::clone(&curve))).unwrap();
        assert_eq!(phi.sup_norm(), 0.0);
    }

    #[test]
    fn rejects_lambda_inside_spectral_bound() {
        let curve = unit_disk(32);
        let rhs = Density::zero(Arc::clone(&curve));
        assert!(matches!(
            solve_npo(&curve, 0.3, &rhs),
            Err(Error::OutsideInvertibilityRange(_))
        ));
    }

    #[test]
    fn extreme_lambda_requires_mean_zero_rhs() {
        let curve = unit_disk(32);
        let one = Density::new(Arc::clone(&curve), vec![1.0; curve.len()]).unwrap();
        assert!(matches!(
            solve_npo(&curve, 0.5, &one),
            Err(Error::IncompatibleRhs(_))
        ));
        // mean-zero data is fine at λ = +½ and the solution is mean-zero
        let rhs = Density::from_fn(Arc::clone(&curve), |x| x.x);
        let phi = solve_npo(&curve, 0.5, &rhs).unwrap();
        assert!(phi.integral().abs() < 1e-10);
    }

    #[test]
    fn mean_zero_preserved_under_resolvent() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        for shape in [
            ShapeSpec::disk(1.0),
            ShapeSpec::ellipse(2.0, 1.0),
            ShapeSpec::kite(),
        ] {
            let curve = Arc::new(BoundaryCurve::discretize(shape, 96).unwrap());
            let solver = NpoSolver::new(Arc::clone(&curve), 0.8).unwrap();
            for _ in 0..50 {
                let mut raw: Vec<f64> =
                    (0..curve.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let mean = curve.integrate(&raw) / curve.perimeter();
                for v in &mut raw {
                    *v -= mean;
                }
                let rhs = Density::new(Arc::clone(&curve), raw).unwrap();
                let phi = solver.solve(&rhs).unwrap();
                assert!(phi.integral().abs() < 1e-10, "∮φ = {:.3e}", phi.integral());
            }
        }
    }

    #[test]
    fn resolvent_mean_identity() {
        // ∮φ = ∮rhs / (λ − ½); on the unit disk with i = (2,0) this is π(k−1)
        let curve = unit_disk(128);
        let k = 3.0;
        let solver =
            NpoSolver::for_conductivity(Arc::clone(&curve), Conductivity::new(k).unwrap()).unwrap();
        let (phi, discarded) = phi_i(&solver, MultiIndex(2, 0)).unwrap();
        assert_eq!(discarded, 0.0);
        assert_abs_diff_eq!(phi.integral(), PI * (k - 1.0), epsilon = 1e-10);
    }

    #[test]
    fn phi_i_disk_closed_forms() {
        let curve = unit_disk(128);
        let k = 3.0;
        let lambda = Conductivity::new(k).unwrap().lambda();
        let solver = NpoSolver::new(Arc::clone(&curve), lambda).unwrap();
        let (phi10, _) = phi_i(&solver, MultiIndex(1, 0)).unwrap();
        for p in 0..curve.len() {
            assert_abs_diff_eq!(
                phi10.values()[p],
                curve.normal(p).x / lambda,
                epsilon = 1e-11
            );
        }
        // φ_{(2,0)} = (k−1)/2 + cos(2θ)/(2λ) on the unit circle
        let (phi20, _) = phi_i(&solver, MultiIndex(2, 0)).unwrap();
        for p in 0..curve.len() {
            let theta = curve.param(p);
            let expected = (k - 1.0) / 2.0 + (2.0 * theta).cos() / (2.0 * lambda);
            assert_abs_diff_eq!(phi20.values()[p], expected, epsilon = 1e-11);
        }
    }

    #[test]
    fn extreme_conductivity_projects_and_flags_nonzero_means() {
        // at λ = +½ the solve lives on the mean-zero subspace; for |i| ≥ 2
        // the discarded mean is reported rather than silently dropped
        let curve = unit_disk(128);
        let solver =
            NpoSolver::for_conductivity(Arc::clone(&curve), Conductivity::perfectly_conducting())
                .unwrap();
        assert!(solver.is_deflated());
        let (phi, discarded) = phi_i(&solver, MultiIndex(2, 0)).unwrap();
        // rhs = (1 + cos 2θ)/2 has mean value ½ over the unit circle
        assert_abs_diff_eq!(discarded, 0.5, epsilon = 1e-12);
        assert!(phi.integral().abs() < 1e-10);
        // first-order solves have mean-zero data; only roundoff is removed
        let (_, none) = phi_i(&solver, MultiIndex(1, 0)).unwrap();
        assert!(none.abs() < 1e-14);
        // the table records the projection events
        let table = gpt_table(&curve, Conductivity::perfectly_conducting(), 2).unwrap();
        assert!(table
            .projected_means
            .iter()
            .any(|&(i, mean)| i == MultiIndex(2, 0) && (mean - 0.5).abs() < 1e-12));
        let regular = gpt_table(&curve, Conductivity::new(2.0).unwrap(), 2).unwrap();
        assert!(regular.projected_means.is_empty());
    }

    #[test]
    fn phi_i_rotates_covariantly() {
        let angle = 0.5;
        let base = Arc::new(BoundaryCurve::discretize(ShapeSpec::kite(), 128).unwrap());
        let rotated = Arc::new(
            BoundaryCurve::discretize(ShapeSpec::kite().with_rotation(angle), 128).unwrap(),
        );
        let lambda = 1.1;
        let sb = NpoSolver::new(Arc::clone(&base), lambda).unwrap();
        let sr = NpoSolver::new(Arc::clone(&rotated), lambda).unwrap();
        let (p1, _) = phi_i(&sb, MultiIndex(1, 0)).unwrap();
        let (p2, _) = phi_i(&sb, MultiIndex(0, 1)).unwrap();
        let (r1, _) = phi_i(&sr, MultiIndex(1, 0)).unwrap();
        // ν(Ry)·e₁ = cos·ν₁(y) − sin·ν₂(y), so φ rotates the same way
        for p in 0..base.len() {
            let expected = angle.cos() * p1.values()[p] - angle.sin() * p2.values()[p];
            assert_abs_diff_eq!(r1.values()[p], expected, epsilon = 1e-10);
        }
    }

    #[test]
    fn disk_polarization_closed_form_across_contrasts() {
        let curve = unit_disk(128);
        for k in [0.0, 0.1, 2.0, 10.0, f64::INFINITY] {
            let lambda = Conductivity::new(k).unwrap().lambda();
            let m = polarization_tensor(&curve, lambda).unwrap();
            let expected = PI / lambda;
            assert!(
                (m[(0, 0)] - expected).abs() <= 1e-10 * expected.abs(),
                "k = {k}: m11 = {} vs {}",
                m[(0, 0)],
                expected
            );
            assert!((m[(1, 1)] - expected).abs() <= 1e-10 * expected.abs());
            assert!(m[(0, 1)].abs() < 1e-10 && m[(1, 0)].abs() < 1e-10);
        }
        // k = 2 gives the reference value 2π/3 ≈ 2.0944
        let m = polarization_tensor(&curve, 1.5).unwrap();
        assert_abs_diff_eq!(m[(0, 0)], 2.0 * PI / 3.0, epsilon = 1e-10);
    }

    #[test]
    fn polarization_scaling_law() {
        // d = 2 homogeneity: M(rB) = r² M(B)
        let unit = unit_disk(96);
        let scaled =
            Arc::new(BoundaryCurve::discretize(ShapeSpec::disk(1.0).with_scale(0.35), 96).unwrap());
        let m1 = polarization_tensor(&unit, 0.9).unwrap();
        let m2 = polarization_tensor(&scaled, 0.9).unwrap();
        assert_abs_diff_eq!(m2[(0, 0)], 0.35 * 0.35 * m1[(0, 0)], epsilon = 1e-10);
        assert_abs_diff_eq!(m2[(1, 1)], 0.35 * 0.35 * m1[(1, 1)], epsilon = 1e-10);
    }

    #[test]
    fn ellipse_polarization_is_axis_aligned_and_converged() {
        let lambda = Conductivity::new(2.0).unwrap().lambda();
        let coarse =
            Arc::new(BoundaryCurve::discretize(ShapeSpec::ellipse(2.0, 1.0), 256).unwrap());
        let fine = Arc::new(BoundaryCurve::discretize(ShapeSpec::ellipse(2.0, 1.0), 1024).unwrap());
        let mc = polarization_tensor(&coarse, lambda).unwrap();
        let mf = polarization_tensor(&fine, lambda).unwrap();
        assert!((mc[(0, 0)] - mf[(0, 0)]).abs() < 1e-8);
        assert!((mc[(1, 1)] - mf[(1, 1)]).abs() < 1e-8);
        assert!(mc[(0, 1)].abs() < 1e-10);
        assert!((mc[(0, 0)] - mc[(1, 1)]).abs() > 0.1);
    }

    #[test]
    fn gpt_table_parity_and_first_order_block() {
        let curve = unit_disk(128);
        let cond = Conductivity::new(2.0).unwrap();
        let table = gpt_table(&curve, cond, 2).unwrap();
        for (i, j, v) in table.entries() {
            if (i.order() + j.order()) % 2 == 1 {
                assert!(
                    v.abs() < 1e-11,
                    "parity violation at i={i:?} j={j:?}: {v:.3e}"
                );
            }
        }
        let block = table.first_order_block();
        let pt = polarization_tensor(&curve, cond.lambda()).unwrap();
        assert!((block - pt).amax() < 1e-13);
        // first-order block is symmetric
        assert!((block[(0, 1)] - block[(1, 0)]).abs() < 1e-11);
    }

    #[test]
    fn gpt_table_self_convergence_on_kite() {
        let cond = Conductivity::new(5.0).unwrap();
        let coarse = Arc::new(BoundaryCurve::discretize(ShapeSpec::kite(), 128).unwrap());
        let fine = Arc::new(BoundaryCurve::discretize(ShapeSpec::kite(), 256).unwrap());
        let tc = gpt_table(&coarse, cond, 2).unwrap();
        let tf = gpt_table(&fine, cond, 2).unwrap();
        for (i, j, v) in tc.entries() {
            let fv = tf.get(i, j).unwrap();
            assert!(
                (v - fv).abs() <= 1e-6 * fv.abs().max(1.0),
                "i={i:?} j={j:?}: {v} vs {fv}"
            );
        }
    }

    #[test]
    fn harmonic_sum_identity() {
        // Σ_{|i|=l} a_i ∮φ_i dσ = 0 whenever Σ a_i Δ(y^i)/i! ≡ 0; the
        // coefficients of any harmonic polynomial Re/Im(ζ^l) qualify with
        // a_i = i! · (Taylor coefficient), i.e. a_i = ∂^i of the polynomial.
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let curve = Arc::new(BoundaryCurve::discretize(ShapeSpec::kite(), 128).unwrap());
        let solver = NpoSolver::new(Arc::clone(&curve), 0.75).unwrap();
        for _ in 0..50 {
            let l = rng.gen_range(2u32..=4);
            let (cr, ci) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            // H(y) = cr·Re ζ^l + ci·Im ζ^l, ζ = y₁ + i y₂
            let coeff = |i: MultiIndex| {
                // ∂^i Re/Im ζ^l at 0: only |i| = l contributes
                let z = crate::layer_potentials::ipow(i.1)
                    * num_complex::Complex64::new(crate::multiindex::factorial(l), 0.0);
                cr * z.re + ci * z.im
            };
            let mut sum = 0.0;
            for i in crate::multiindex::indices_of_degree(l) {
                let (phi, _) = phi_i(&solver, i).unwrap();
                sum += coeff(i) * phi.integral();
            }
            assert!(sum.abs() < 1e-8, "l = {l}: Σ a_i ∮φ_i = {sum:.3e}");
        }
    }
}
