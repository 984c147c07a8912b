//! The background domain Ω (a disk of radius R): Neumann function, Dirichlet
//! Green function, their z-derivatives, and the background potentials U, V.
//!
//! The Neumann function solves Δ_x N(x,z) = −δ_z with constant flux
//! ∂N/∂ν = −1/|∂Ω| and zero boundary mean. On the disk the image point
//! z* = R²z/|z|² gives the closed form
//!
//!   N(x,z) = −(1/2π) [ ln|x−z| + ln|ζ_x ζ̄_z − R²| ] + (3 ln R)/2π,
//!
//! (ζ = x₁ + i x₂; the second log absorbs |x−z*| |z|/R, which keeps the
//! z → 0 limit regular), and N(x,z) = N(z,x) exactly. The Dirichlet Green
//! function enters only through its boundary flux, the Poisson kernel
//!
//!   ∂G/∂ν_x (x,z) = (R²−|z|²)/(2πR |x−z|²) = Re[(ζ_x+ζ_z)/(ζ_x−ζ_z)]/2πR.
//!
//! All z-derivatives are analytic: both kernels are real parts of functions
//! holomorphic (or anti-holomorphic) in ζ_z, so ∂^j_z reduces to powers of
//! (ζ_z − ζ_x)⁻¹, exact and cheap at the orders the expansions need.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::Vector2;

use crate::error::{Error, Result};
use crate::fourier::apply_mode_multiplier;
use crate::geometry::{BoundaryCurve, ShapeSpec};
use crate::layer_potentials::{ipow, zeta, Density, MAX_DERIVATIVE_ORDER};
use crate::multiindex::{factorial, MultiIndex, MultiIndexSet};

/// The background domain: a disk of radius R about the origin with its
/// boundary discretization.
#[derive(Debug, Clone)]
pub struct DiskDomain {
    radius: f64,
    curve: Arc<BoundaryCurve>,
}

impl DiskDomain {
    pub fn new(radius: f64, m_nodes: usize) -> Result<Self> {
        if !(radius > 0.0) || !radius.is_finite() {
            return Err(Error::InvalidArgument(format!(
                "domain radius must be positive, got {radius}"
            )));
        }
        let curve = Arc::new(BoundaryCurve::discretize(ShapeSpec::disk(radius), m_nodes)?);
        Ok(Self { radius, curve })
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }

    pub fn curve(&self) -> &Arc<BoundaryCurve> {
        &self.curve
    }

    pub fn boundary_len(&self) -> usize {
        self.curve.len()
    }

    /// dist(z, ∂Ω) for interior z.
    pub fn boundary_distance(&self, z: Vector2<f64>) -> f64 {
        self.radius - z.norm()
    }

    fn check_interior(&self, z: Vector2<f64>) -> Result<()> {
        if z.norm() >= self.radius {
            return Err(Error::DomainViolation(format!(
                "point ({}, {}) is not inside the disk of radius {}",
                z.x, z.y, self.radius
            )));
        }
        Ok(())
    }

    /// N(x, z) for x in the closed disk (x ≠ z), z interior.
    pub fn neumann(&self, x: Vector2<f64>, z: Vector2<f64>) -> Result<f64> {
        self.check_interior(z)?;
        let r = self.radius;
        let zx = zeta(x);
        let zz = zeta(z);
        if (zx - zz).norm_sqr() == 0.0 {
            return Err(Error::SingularPoint);
        }
        let image = (zx * zz.conj() - r * r).norm();
        Ok(-((zx - zz).norm().ln() + image.ln()) / (2.0 * PI) + 1.5 * r.ln() / PI)
    }

    /// ∂^j_z N(x, z); j = 0 gives the value.
    pub fn neumann_dz(&self, j: MultiIndex, x: Vector2<f64>, z: Vector2<f64>) -> Result<f64> {
        let k = j.order();
        if k == 0 {
            return self.neumann(x, z);
        }
        if k > MAX_DERIVATIVE_ORDER {
            return Err(Error::InvalidArgument(format!(
                "derivative order {k} exceeds the supported cap {MAX_DERIVATIVE_ORDER}"
            )));
        }
        self.check_interior(z)?;
        let r = self.radius;
        let zx = zeta(x);
        let zz = zeta(z);
        if (zx - zz).norm_sqr() == 0.0 {
            return Err(Error::SingularPoint);
        }
        let fact = factorial(k - 1);
        // ln|x−z| as Re ln(ζ_x − s), holomorphic in s = ζ_z
        let term1 = (ipow(j.1) * (-fact) * (zx - zz).powi(-(k as i32))).re;
        // ln|ζ_x ζ̄_z − R²| as Re ln(ζ_x s − R²), anti-holomorphic in ζ_z
        let sign = if k % 2 == 0 { -1.0 } else { 1.0 };
        let term2 = (ipow(j.1).conj()
            * (sign * fact)
            * zx.powi(k as i32)
            * (zx * zz.conj() - r * r).powi(-(k as i32)))
        .re;
        Ok(-(term1 + term2) / (2.0 * PI))
    }

    /// Poisson kernel ∂G/∂ν_x (x, z) for x on ∂Ω, normalized to unit mass.
    pub fn poisson(&self, x: Vector2<f64>, z: Vector2<f64>) -> Result<f64> {
        self.check_interior(z)?;
        let r = self.radius;
        Ok((r * r - z.norm_squared()) / (2.0 * PI * r * (x - z).norm_squared()))
    }

    /// ∂^j_z of the Poisson kernel; j = 0 gives the value.
    pub fn poisson_dz(&self, j: MultiIndex, x: Vector2<f64>, z: Vector2<f64>) -> Result<f64> {
        let k = j.order();
        if k == 0 {
            return self.poisson(x, z);
        }
        if k > MAX_DERIVATIVE_ORDER {
            return Err(Error::InvalidArgument(format!(
                "derivative order {k} exceeds the supported cap {MAX_DERIVATIVE_ORDER}"
            )));
        }
        self.check_interior(z)?;
        let r = self.radius;
        let zx = zeta(x);
        let zz = zeta(z);
        // (ζ_x+s)/(ζ_x−s) = −1 + 2ζ_x/(ζ_x−s): k-th derivative 2ζ_x k! (ζ_x−s)^{−k−1}
        let deriv = ipow(j.1) * (2.0 * factorial(k)) * zx * (zx - zz).powi(-(k as i32 + 1));
        Ok(deriv.re / (2.0 * PI * r))
    }

    /// Truncated Taylor expansion of N(x, εy + z) about z:
    /// Σ_{|j| ≤ p} (1/j!) ε^{|j|} ∂^j_z N(x,z) y^j.
    pub fn taylor_neumann(
        &self,
        x: Vector2<f64>,
        z: Vector2<f64>,
        y: Vector2<f64>,
        eps: f64,
        p: u32,
    ) -> Result<f64> {
        if eps < 0.0 {
            return Err(Error::InvalidArgument("eps must be nonnegative".into()));
        }
        if eps * y.norm() >= self.boundary_distance(z) {
            return Err(Error::DomainViolation(format!(
                "ε|y| = {:.3e} reaches the convergence radius dist(z, ∂Ω) = {:.3e}",
                eps * y.norm(),
                self.boundary_distance(z)
            )));
        }
        let mut sum = 0.0;
        for j in MultiIndexSet::up_to(p).iter() {
            sum += eps.powi(j.order() as i32) / j.factorial()
                * self.neumann_dz(j, x, z)?
                * j.monomial(y);
        }
        Ok(sum)
    }
}

/// Background potential U for Neumann data g ∈ L²₀(∂Ω):
/// U(y) = ∮ N(x,y) g(x) dσ(x), harmonic with ∂U/∂ν = g and zero boundary mean.
pub struct NeumannField {
    domain: DiskDomain,
    flux: Density,
    trace: Vec<f64>,
}

impl NeumannField {
    pub fn new(domain: DiskDomain, flux: Density) -> Result<Self> {
        if flux.len() != domain.boundary_len() {
            return Err(Error::InvalidArgument(
                "flux is not sampled on the domain boundary".into(),
            ));
        }
        let integral = flux.integral();
        if integral.abs() > 1e-10 * flux.sup_norm().max(1.0) * domain.curve().perimeter() {
            return Err(Error::IncompatibleFlux(integral));
        }
        // mode m of g lifts to mode m of U|∂Ω with factor R/m; the mean is 0
        let r = domain.radius();
        let trace =
            apply_mode_multiplier(
                flux.values(),
                |mode| {
                    if mode == 0 {
                        0.0
                    } else {
                        r / mode as f64
                    }
                },
            );
        Ok(Self {
            domain,
            flux,
            trace,
        })
    }

    pub fn domain(&self) -> &DiskDomain {
        &self.domain
    }

    pub fn flux(&self) -> &Density {
        &self.flux
    }

    /// U restricted to ∂Ω (nodal, zero mean).
    pub fn trace(&self) -> &[f64] {
        &self.trace
    }

    /// U at an interior point, by quadrature of N against the flux.
    pub fn value(&self, z: Vector2<f64>) -> Result<f64> {
        self.partial(MultiIndex::ZERO, z)
    }

    /// ∂^l U(z), differentiating N under the integral.
    pub fn partial(&self, l: MultiIndex, z: Vector2<f64>) -> Result<f64> {
        let curve = self.domain.curve();
        let mut acc = 0.0;
        for p in 0..curve.len() {
            acc += self.domain.neumann_dz(l, curve.node(p), z)?
                * self.flux.values()[p]
                * curve.weight(p);
        }
        Ok(acc)
    }

    /// The derivative vector (∂^l U(z))_{|l| ≤ n}.
    pub fn derivative_vector(&self, set: &MultiIndexSet, z: Vector2<f64>) -> Result<Vec<f64>> {
        set.iter().map(|l| self.partial(l, z)).collect()
    }
}

/// Background potential V for Dirichlet data f: the Poisson integral, with
/// its boundary flux ∂V/∂ν obtained from the Fourier multiplier |m|/R.
pub struct DirichletField {
    domain: DiskDomain,
    boundary_values: Density,
    flux: Vec<f64>,
}

impl DirichletField {
    pub fn new(domain: DiskDomain, boundary_values: Density) -> Result<Self> {
        if boundary_values.len() != domain.boundary_len() {
            return Err(Error::InvalidArgument(
                "boundary data is not sampled on the domain boundary".into(),
            ));
        }
        let r = domain.radius();
        let flux = apply_mode_multiplier(boundary_values.values(), |mode| mode as f64 / r);
        Ok(Self {
            domain,
            boundary_values,
            flux,
        })
    }

    pub fn domain(&self) -> &DiskDomain {
        &self.domain
    }

    pub fn boundary_values(&self) -> &Density {
        &self.boundary_values
    }

    /// ∂V/∂ν on ∂Ω (nodal).
    pub fn flux(&self) -> &[f64] {
        &self.flux
    }

    /// V at an interior point via the Poisson integral.
    pub fn value(&self, z: Vector2<f64>) -> Result<f64> {
        self.partial(MultiIndex::ZERO, z)
    }

    /// ∂^l V(z), differentiating the Poisson kernel under the integral.
    pub fn partial(&self, l: MultiIndex, z: Vector2<f64>) -> Result<f64> {
        let curve = self.domain.curve();
        let mut acc = 0.0;
        for p in 0..curve.len() {
            acc += self.domain.poisson_dz(l, curve.node(p), z)?
                * self.boundary_values.values()[p]
                * curve.weight(p);
        }
        Ok(acc)
    }

    pub fn derivative_vector(&self, set: &MultiIndexSet, z: Vector2<f64>) -> Result<Vec<f64>> {
        set.iter().map(|l| self.partial(l, z)).collect()
    }
}
