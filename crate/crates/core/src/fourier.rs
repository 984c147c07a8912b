//! Fourier helpers on the equispaced circle grid.
//!
//! Nodal data on θ_m = 2πm/M supports two spectrally accurate operations:
//! trigonometric interpolation between nodes, and diagonal Fourier
//! multipliers (used for the disk's Neumann trace map g ↦ U|∂Ω and the
//! Dirichlet-to-Neumann map f ↦ ∂V/∂ν).

use num_complex::Complex64;
use rustfft::FftPlanner;

fn forward_coeffs(values: &[f64]) -> Vec<Complex64> {
    let m = values.len();
    let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
    FftPlanner::new().plan_fft_forward(m).process(&mut buf);
    buf
}

/// Trigonometric interpolant of real nodal values on the equispaced grid.
#[derive(Debug, Clone)]
pub struct TrigInterp {
    /// c_k = (1/M) Σ_m v_m e^{−i k θ_m}
    coeffs: Vec<Complex64>,
}

impl TrigInterp {
    pub fn new(values: &[f64]) -> Self {
        assert!(values.len() >= 2 && values.len() % 2 == 0);
        let m = values.len();
        let mut coeffs = forward_coeffs(values);
        for c in &mut coeffs {
            *c /= m as f64;
        }
        Self { coeffs }
    }

    /// Evaluate at an arbitrary parameter (exact at the grid nodes).
    pub fn eval(&self, t: f64) -> f64 {
        let m = self.coeffs.len();
        let half = m / 2;
        let e = Complex64::new(0.0, t).exp();
        let mut acc = Complex64::new(0.0, 0.0);
        for k in (1..half).rev() {
            acc = (acc + self.coeffs[k]) * e;
        }
        // real signal: conjugate modes fold into 2 Re, Nyquist into a cosine
        self.coeffs[0].re + 2.0 * acc.re + self.coeffs[half].re * (half as f64 * t).cos()
    }
}

/// Apply a diagonal multiplier in mode space: mode number |k| is passed to
/// `multiplier` (0 for the mean, M/2 for the Nyquist mode).
pub fn apply_mode_multiplier(values: &[f64], multiplier: impl Fn(u32) -> f64) -> Vec<f64> {
    let m = values.len();
    assert!(m >= 2 && m % 2 == 0);
    let mut buf = forward_coeffs(values);
    for (k, c) in buf.iter_mut().enumerate() {
        let mode = k.min(m - k) as u32;
        *c *= multiplier(mode);
    }
    FftPlanner::new().plan_fft_inverse(m).process(&mut buf);
    buf.iter().map(|c| c.re / m as f64).collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn grid(m: usize) -> Vec<f64> {
        (0..m).map(|i| 2.0 * PI * i as f64 / m as f64).collect()
    }

    #[test]
    fn interpolation_is_exact_for_band_limited_data() {
        let m = 16;
        let f = |t: f64| 0.7 + (3.0 * t).cos() - 0.2 * (5.0 * t).sin();
        let values: Vec<f64> = grid(m).iter().map(|&t| f(t)).collect();
        let interp = TrigInterp::new(&values);
        for probe in [0.1, 0.77, 2.3, 5.9] {
            assert_abs_diff_eq!(interp.eval(probe), f(probe), epsilon = 1e-13);
        }
        for (i, &t) in grid(m).iter().enumerate() {
            assert_abs_diff_eq!(interp.eval(t), values[i], epsilon = 1e-13);
        }
    }

    #[test]
    fn multiplier_scales_single_modes() {
        let m = 32;
        let values: Vec<f64> = grid(m).iter().map(|&t| (3.0 * t).cos()).collect();
        let out = apply_mode_multiplier(&values, |mode| mode as f64);
        for (i, &t) in grid(m).iter().enumerate() {
            assert_abs_diff_eq!(out[i], 3.0 * (3.0 * t).cos(), epsilon = 1e-12);
        }
        // the mean mode is controlled independently
        let constant = vec![2.0; m];
        let zeroed = apply_mode_multiplier(&constant, |mode| if mode == 0 { 0.0 } else { 1.0 });
        for v in zeroed {
            assert_abs_diff_eq!(v, 0.0, epsilon = 1e-13);
        }
    }
}
