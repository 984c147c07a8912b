//! Property tests over randomized shapes, contrasts and densities.

use std::sync::Arc;

use proptest::prelude::*;

use perturb2d::geometry::{BoundaryCurve, ShapeSpec};
use perturb2d::layer_potentials::{adjointness_defect, k_matrix, kstar_matrix, Density};
use perturb2d::multiindex::MultiIndex;
use perturb2d::transmission::{polarization_tensor, NpoSolver};

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    /// Geometry invariants hold for any admissible ellipse pose: closed-curve
    /// moment, divergence-theorem moment, orthogonal unit normals.
    #[test]
    fn ellipse_discretization_invariants(
        a in 0.5f64..3.0,
        b in 0.5f64..3.0,
        rotation in 0.0f64..std::f64::consts::TAU,
        shift in 0.0f64..std::f64::consts::TAU,
    ) {
        let shape = ShapeSpec::ellipse(a, b)
            .with_rotation(rotation)
            .with_param_shift(shift);
        let curve = BoundaryCurve::discretize(shape, 128).unwrap();
        prop_assert!(curve.moment(MultiIndex(0, 0)).norm() < 1e-10);
        let area = std::f64::consts::PI * a * b;
        prop_assert!((curve.enclosed_area() - area).abs() < 1e-8 * area.max(1.0));
        for m in (0..curve.len()).step_by(13) {
            prop_assert!((curve.normal(m).norm() - 1.0).abs() < 1e-12);
            let v = curve.shape().velocity(curve.param(m));
            prop_assert!(curve.normal(m).dot(&v).abs() < 1e-10 * v.norm());
        }
    }

    /// Discrete L² adjointness of K and K* holds by construction on any pose.
    #[test]
    fn adjointness_over_poses(
        rotation in 0.0f64..std::f64::consts::TAU,
        scale in 0.2f64..2.0,
    ) {
        let shape = ShapeSpec::kite().with_rotation(rotation).with_scale(scale);
        let curve = Arc::new(BoundaryCurve::discretize(shape, 64).unwrap());
        prop_assert!(adjointness_defect(&k_matrix(&curve), &kstar_matrix(&curve)) < 1e-14);
    }

    /// The resolvent maps mean-zero data to mean-zero solutions for any
    /// admissible λ on either side of the spectrum.
    #[test]
    fn resolvent_preserves_mean_zero(
        magnitude in 0.51f64..4.0,
        negative in any::<bool>(),
        seed in any::<u64>(),
    ) {
        use rand::{Rng, SeedableRng};
        let lambda = if negative { -magnitude } else { magnitude };
        let curve = Arc::new(BoundaryCurve::discretize(ShapeSpec::kite(), 96).unwrap());
        let solver = NpoSolver::new(Arc::clone(&curve), lambda).unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut raw: Vec<f64> = (0..curve.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mean = curve.integrate(&raw) / curve.perimeter();
        for v in &mut raw {
            *v -= mean;
        }
        let rhs = Density::new(Arc::clone(&curve), raw).unwrap();
        let phi = solver.solve(&rhs).unwrap();
        prop_assert!(phi.integral().abs() < 1e-9);
    }

    /// Disk polarization tensors follow the closed form (|B|/λ)·I for any
    /// admissible contrast.
    #[test]
    fn disk_polarization_closed_form(k in 1.05f64..60.0) {
        let lambda = (k + 1.0) / (2.0 * (k - 1.0));
        let curve = Arc::new(BoundaryCurve::discretize(ShapeSpec::disk(1.0), 96).unwrap());
        let m = polarization_tensor(&curve, lambda).unwrap();
        let expected = std::f64::consts::PI / lambda;
        prop_assert!((m[(0, 0)] - expected).abs() < 1e-9 * expected);
        prop_assert!((m[(1, 1)] - expected).abs() < 1e-9 * expected);
        prop_assert!(m[(0, 1)].abs() < 1e-10);
    }
}
