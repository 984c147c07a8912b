//! High-order asymptotic expansions of the boundary perturbation caused by a
//! small inclusion D = z + εB of conductivity k inside the disk domain Ω.
//!
//! The boundary trace of the Neumann solution expands as (d = 2)
//!
//!   u(x) = U(x) − Σ_{|i|=1}^{n} Σ_{|j|=1}^{n−|i|+1} (1/j!) ε^{|i|+|j|}
//!            w_i(ε) M_ij ∂^j_z N(x, z) + O(ε^{2+n}),
//!
//! where M_ij are the generalized polarization tensors of (B, k), N is the
//! domain Neumann function, and the weights w_i(ε) are the components of the
//! correction ladder applied to the background derivative vector:
//! w = (I + Σ_p ε^{p+1} Q_p)(∂^l U(z)). The ladder converts derivatives of
//! the inaccessible harmonic part H into derivatives of U; at order n ≤ 2 it
//! is the identity and the formula reduces to the classical leading-order
//! expansion. The Dirichlet twin replaces U by V, N by the (negated) Green
//! flux so the correction enters with a plus sign against the positive
//! Poisson kernel, and D_Ω by S_Ω inside the ladder. A free-space variant
//! replaces N by the fundamental solution for interior evaluation points.

use std::collections::BTreeMap;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Vector2};
use serde::Serialize;

use crate::domain_functions::{DirichletField, DiskDomain, NeumannField};
use crate::error::{Error, Result};
use crate::geometry::{BoundaryCurve, ShapeSpec};
use crate::layer_potentials::{
    fundamental_partial, near_field_limit, partial_d_eval, partial_s_eval, Density,
};
use crate::multiindex::{indices_in_range, MultiIndex, MultiIndexSet};
use crate::transmission::{gpt_table, Conductivity, GptTable};

/// A small inclusion: reference shape B (containing the origin), center z,
/// scale ε and conductivity k. k = 1 is representable but degenerate: the
/// inclusion is invisible and solvers reject it (superposition skips it).
#[derive(Debug, Clone)]
pub struct InclusionSpec {
    pub shape: ShapeSpec,
    pub center: Vector2<f64>,
    pub scale: f64,
    pub k: f64,
}

impl InclusionSpec {
    pub fn new(shape: ShapeSpec, center: Vector2<f64>, scale: f64, k: f64) -> Self {
        Self {
            shape,
            center,
            scale,
            k,
        }
    }

    pub fn conductivity(&self) -> Result<Conductivity> {
        Conductivity::new(self.k)
    }

    /// The physical curve D = z + εB.
    pub fn physical_shape(&self) -> ShapeSpec {
        let mut s = self.shape.clone();
        s.scale *= self.scale;
        s.center = self.center;
        s
    }
}

/// Validate the separation constraints for a family of inclusions inside the
/// domain: dist(z_l, ∂Ω) ≥ 2c₀, ε_l·diam(B_l) < c₀ and |z_l − z_l'| ≥ 2c₀.
/// Returns the c₀ used (default: the largest admissible one, min_l dist/2).
pub fn validate_inclusions(
    domain: &DiskDomain,
    inclusions: &[InclusionSpec],
    c0: Option<f64>,
) -> Result<f64> {
    if inclusions.is_empty() {
        return Err(Error::InvalidArgument("no inclusions supplied".into()));
    }
    for inc in inclusions {
        inc.shape.validate()?;
        if !(inc.scale > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "inclusion scale must be positive, got {}",
                inc.scale
            )));
        }
    }
    let min_dist = inclusions
        .iter()
        .map(|inc| domain.boundary_distance(inc.center))
        .fold(f64::INFINITY, f64::min);
    if min_dist <= 0.0 {
        return Err(Error::DomainViolation(
            "inclusion center lies outside the domain".into(),
        ));
    }
    let c0 = c0.unwrap_or(0.5 * min_dist);
    let slack = 1.0 + 1e-12;
    for (l, inc) in inclusions.iter().enumerate() {
        let dist = domain.boundary_distance(inc.center);
        if dist * slack < 2.0 * c0 {
            return Err(Error::DomainViolation(format!(
                "inclusion {l}: dist(z, ∂Ω) = {dist:.4} < 2 c₀ = {:.4}",
                2.0 * c0
            )));
        }
        let extent = inc.scale * inc.shape.diameter();
        if extent >= c0 * slack {
            return Err(Error::DomainViolation(format!(
                "inclusion {l}: ε·diam(B) = {extent:.4} is not below c₀ = {c0:.4}"
            )));
        }
        for (lp, other) in inclusions.iter().enumerate().skip(l + 1) {
            let sep = (inc.center - other.center).norm();
            if sep * slack < 2.0 * c0 {
                return Err(Error::DomainViolation(format!(
                    "inclusions {l} and {lp} are {sep:.4} apart, below 2 c₀ = {:.4}",
                    2.0 * c0
                )));
            }
        }
    }
    Ok(c0)
}

/// Which boundary condition the expansion targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExpansionKind {
    Neumann,
    Dirichlet,
}

/// One ladder tensor: (1/j!) M_ij ∂^l_x D_Ω(∂^j_z N(·,z))|_{x=z} for
/// the Neumann ladder, with D_Ω → S_Ω and N → Poisson kernel for Dirichlet.
pub fn ladder_tensor(
    domain: &DiskDomain,
    z: Vector2<f64>,
    kind: ExpansionKind,
    gpt: &GptTable,
    i: MultiIndex,
    j: MultiIndex,
    l: MultiIndex,
) -> Result<f64> {
    let m_ij = gpt.get(i, j).ok_or_else(|| {
        Error::InvalidArgument(format!("GPT table does not cover i={i:?}, j={j:?}"))
    })?;
    let curve = domain.curve();
    let psi: Vec<f64> = (0..curve.len())
        .map(|p| match kind {
            ExpansionKind::Neumann => domain.neumann_dz(j, curve.node(p), z),
            ExpansionKind::Dirichlet => domain.poisson_dz(j, curve.node(p), z),
        })
        .collect::<Result<_>>()?;
    let pot = match kind {
        ExpansionKind::Neumann => partial_d_eval(curve, &psi, l, z)?,
        ExpansionKind::Dirichlet => partial_s_eval(curve, &psi, l, z)?,
    };
    Ok(m_ij / j.factorial() * pot)
}

/// The ε-independent correction ladder: operators Q_p acting on background
/// derivative vectors (∂^l U(z))_{|l| ≤ n}, obtained by formal Neumann-series
/// inversion of I + ε² P_1 + ... + ε^{n+1} P_n.
#[derive(Debug, Clone)]
pub struct CorrectionLadder {
    set: MultiIndexSet,
    q_ops: Vec<DMatrix<f64>>,
}

pub fn correction_ladder(
    domain: &DiskDomain,
    z: Vector2<f64>,
    gpt: &GptTable,
    n: u32,
    kind: ExpansionKind,
) -> Result<CorrectionLadder> {
    let set = MultiIndexSet::up_to(n);
    let dim = set.len();
    let curve = domain.curve();
    // shared potential factors ∂^l_x Pot_Ω(ψ_j)(z)
    let mut pot: BTreeMap<(MultiIndex, MultiIndex), f64> = BTreeMap::new();
    for j in indices_in_range(1, n) {
        let psi: Vec<f64> = (0..curve.len())
            .map(|p| match kind {
                ExpansionKind::Neumann => domain.neumann_dz(j, curve.node(p), z),
                ExpansionKind::Dirichlet => domain.poisson_dz(j, curve.node(p), z),
            })
            .collect::<Result<_>>()?;
        for l in set.iter() {
            let val = match kind {
                ExpansionKind::Neumann => partial_d_eval(curve, &psi, l, z)?,
                ExpansionKind::Dirichlet => partial_s_eval(curve, &psi, l, z)?,
            };
            pot.insert((j, l), val);
        }
    }
    // P_p collects blocks with |i| + |j| = p + 1
    let mut p_ops: Vec<DMatrix<f64>> = (0..n).map(|_| DMatrix::zeros(dim, dim)).collect();
    for i in indices_in_range(1, n) {
        for j in indices_in_range(1, n - i.order() + 1) {
            let p = (i.order() + j.order() - 1) as usize;
            let m_ij = gpt
                .get(i, j)
                .expect("GPT table covers the ladder index range");
            for l in set.iter() {
                p_ops[p - 1][(set.position(l), set.position(i))] +=
                    m_ij / j.factorial() * pot[&(j, l)];
            }
        }
    }
    // Q_r = −P_r − Σ_{p+q = r−1, p,q ≥ 1} P_p Q_q
    let mut q_ops: Vec<DMatrix<f64>> = Vec::with_capacity(n as usize);
    for r in 1..=n as usize {
        let mut q = -p_ops[r - 1].clone();
        for p in 1..=r.saturating_sub(2) {
            let partner = &q_ops[r - 2 - p]; // Q_{r−1−p}
            q -= &p_ops[p - 1] * partner;
        }
        q_ops.push(q);
    }
    Ok(CorrectionLadder { set, q_ops })
}

impl CorrectionLadder {
    pub fn index_set(&self) -> &MultiIndexSet {
        &self.set
    }

    pub fn max_p(&self) -> u32 {
        self.q_ops.len() as u32
    }

    /// Q_p v for every p, reused across (i, j) terms at a fixed ε.
    fn applied(&self, v: &[f64]) -> Vec<Vec<f64>> {
        let vv = DVector::from_column_slice(v);
        self.q_ops.iter().map(|q| (q * &vv).data.into()).collect()
    }

    /// ((I + Σ_{p ≤ p_max} ε^{p+1} Q_p) v) as a full vector.
    pub fn corrected(&self, v: &[f64], eps: f64, p_max: u32) -> Vec<f64> {
        let qv = self.applied(v);
        let mut out = v.to_vec();
        for p in 1..=(p_max.min(self.max_p()) as usize) {
            let scale = eps.powi(p as i32 + 1);
            for (o, q) in out.iter_mut().zip(&qv[p - 1]) {
                *o += scale * q;
            }
        }
        out
    }
}

/// One (i, j) contribution to an expansion, as signed boundary values.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionTerm {
    pub i: MultiIndex,
    pub j: MultiIndex,
    /// Which inclusion produced the term (0 unless superposing).
    pub inclusion: usize,
    pub values: Vec<f64>,
}

impl ExpansionTerm {
    pub fn total_order(&self) -> u32 {
        self.i.order() + self.j.order()
    }

    pub fn max_abs(&self) -> f64 {
        self.values.iter().fold(0.0f64, |a, v| a.max(v.abs()))
    }
}

/// Boundary trace of an asymptotic expansion with its per-term breakdown.
/// The background column plus all term columns sum to `values` exactly.
#[derive(Debug, Clone, Serialize)]
pub struct ExpansionResult {
    pub kind_label: String,
    pub eps: f64,
    pub order: u32,
    pub nodes: Vec<[f64; 2]>,
    /// U|∂Ω for Neumann expansions, ∂V/∂ν|∂Ω for Dirichlet ones.
    pub background: Vec<f64>,
    pub values: Vec<f64>,
    pub terms: Vec<ExpansionTerm>,
}

impl ExpansionResult {
    /// Sum the term columns by total order |i| + |j|.
    pub fn order_totals(&self) -> BTreeMap<u32, Vec<f64>> {
        let mut out: BTreeMap<u32, Vec<f64>> = BTreeMap::new();
        for term in &self.terms {
            let entry = out
                .entry(term.total_order())
                .or_insert_with(|| vec![0.0; self.values.len()]);
            for (e, v) in entry.iter_mut().zip(&term.values) {
                *e += v;
            }
        }
        out
    }

    /// Diagnostic: are per-order magnitudes non-increasing in the total
    /// order? Shape constants can reorder nearby terms, so callers treat a
    /// `false` as a warning, not a failure.
    pub fn hierarchy_nonincreasing(&self) -> bool {
        let totals = self.order_totals();
        let mags: Vec<f64> = totals
            .values()
            .map(|col| col.iter().fold(0.0f64, |a, v| a.max(v.abs())))
            .collect();
        mags.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12))
    }

    pub fn max_abs_residual_against(&self, reference: &[f64]) -> f64 {
        self.values
            .iter()
            .zip(reference)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    }
}

fn mean_adjust(curve: &BoundaryCurve, values: &mut [f64]) {
    let mean = curve.integrate(values) / curve.perimeter();
    for v in values {
        *v -= mean;
    }
}

/// Shared assembly of the double sum over the GPT index range.
/// `sign` is −1 for the Neumann trace and +1 for the Dirichlet flux (where
/// the Green flux is the negated Poisson kernel).
struct Assembler<'a> {
    domain: &'a DiskDomain,
    gpt: &'a GptTable,
    ladder: &'a CorrectionLadder,
    derivs: &'a [f64],
    kernels: &'a BTreeMap<MultiIndex, Vec<f64>>,
    order: u32,
    sign: f64,
}

impl Assembler<'_> {
    fn assemble(
        &self,
        eps: f64,
        background: &[f64],
        h_derivs_override: Option<&[f64]>,
        kind_label: &str,
    ) -> ExpansionResult {
        let curve = self.domain.curve();
        let n = self.order;
        let qv = match h_derivs_override {
            None => Some(self.ladder.applied(self.derivs)),
            Some(_) => None,
        };
        let mut values = background.to_vec();
        let mut terms = Vec::new();
        for i in indices_in_range(1, n) {
            for j in indices_in_range(1, n - i.order() + 1) {
                // ladder corrections enter up to p ≤ n − |i| − |j|: higher
                // ones fall below the remainder budget of the truncation
                let p_max = n.saturating_sub(i.order() + j.order());
                let w_i = match h_derivs_override {
                    Some(h) => h[self.ladder.set.position(i)],
                    None => {
                        let mut w = self.derivs[self.ladder.set.position(i)];
                        let qv = qv.as_ref().unwrap();
                        for p in 1..=(p_max.min(self.ladder.max_p()) as usize) {
                            w += eps.powi(p as i32 + 1) * qv[p - 1][self.ladder.set.position(i)];
                        }
                        w
                    }
                };
                let m_ij = self
                    .gpt
                    .get(i, j)
                    .expect("GPT table covers the expansion index range");
                let coeff = self.sign * eps.powi((i.order() + j.order()) as i32) / j.factorial()
                    * w_i
                    * m_ij;
                let kernel = &self.kernels[&j];
                let mut term_values: Vec<f64> = kernel.iter().map(|k| coeff * k).collect();
                // each kernel column has zero boundary mean analytically;
                // adjust the discrete residue so columns sum exactly
                mean_adjust(curve, &mut term_values);
                for (v, t) in values.iter_mut().zip(&term_values) {
                    *v += t;
                }
                terms.push(ExpansionTerm {
                    i,
                    j,
                    inclusion: 0,
                    values: term_values,
                });
            }
        }
        ExpansionResult {
            kind_label: kind_label.to_string(),
            eps,
            order: n,
            nodes: curve.nodes().iter().map(|p| [p.x, p.y]).collect(),
            background: background.to_vec(),
            values,
            terms,
        }
    }
}

/// Assembled machinery for the Neumann expansion of one inclusion shape:
/// everything except ε is precomputed, so ε-grids evaluate cheaply.
pub struct NeumannExpansion {
    domain: DiskDomain,
    pub inclusion: InclusionSpec,
    order: u32,
    background: NeumannField,
    gpt: GptTable,
    ladder: CorrectionLadder,
    derivs: Vec<f64>,
    kernels: BTreeMap<MultiIndex, Vec<f64>>,
}

fn kernel_traces(
    domain: &DiskDomain,
    z: Vector2<f64>,
    n: u32,
    kind: ExpansionKind,
) -> Result<BTreeMap<MultiIndex, Vec<f64>>> {
    let curve = domain.curve();
    let mut out = BTreeMap::new();
    for j in indices_in_range(1, n) {
        let col: Vec<f64> = (0..curve.len())
            .map(|p| match kind {
                ExpansionKind::Neumann => domain.neumann_dz(j, curve.node(p), z),
                ExpansionKind::Dirichlet => domain.poisson_dz(j, curve.node(p), z),
            })
            .collect::<Result<_>>()?;
        out.insert(j, col);
    }
    Ok(out)
}

impl NeumannExpansion {
    /// `m_inclusion` is the node count for the reference shape B.
    pub fn new(
        domain: DiskDomain,
        inclusion: InclusionSpec,
        flux: Density,
        n: u32,
        m_inclusion: usize,
    ) -> Result<Self> {
        validate_inclusions(&domain, std::slice::from_ref(&inclusion), None)?;
        let conductivity = inclusion.conductivity()?;
        let curve_b = Arc::new(BoundaryCurve::discretize(
            inclusion.shape.clone(),
            m_inclusion,
        )?);
        let gpt = gpt_table(&curve_b, conductivity, n)?;
        let background = NeumannField::new(domain.clone(), flux)?;
        let set = MultiIndexSet::up_to(n);
        let derivs = background.derivative_vector(&set, inclusion.center)?;
        let ladder = correction_ladder(&domain, inclusion.center, &gpt, n, ExpansionKind::Neumann)?;
        let kernels = kernel_traces(&domain, inclusion.center, n, ExpansionKind::Neumann)?;
        Ok(Self {
            domain,
            inclusion,
            order: n,
            background,
            gpt,
            ladder,
            derivs,
            kernels,
        })
    }

    pub fn gpt(&self) -> &GptTable {
        &self.gpt
    }

    pub fn ladder(&self) -> &CorrectionLadder {
        &self.ladder
    }

    pub fn background(&self) -> &NeumannField {
        &self.background
    }

    /// Replace the GPT table by zeros (dry-run hook): the expansion must
    /// then reproduce the background exactly.
    pub fn zero_gpt(&mut self) -> Result<()> {
        self.gpt = self.gpt.zeroed();
        self.ladder = correction_ladder(
            &self.domain,
            self.inclusion.center,
            &self.gpt,
            self.order,
            ExpansionKind::Neumann,
        )?;
        Ok(())
    }

    fn assembler(&self) -> Assembler<'_> {
        Assembler {
            domain: &self.domain,
            gpt: &self.gpt,
            ladder: &self.ladder,
            derivs: &self.derivs,
            kernels: &self.kernels,
            order: self.order,
            sign: -1.0,
        }
    }

    /// The ladder-corrected boundary-trace expansion at scale ε.
    pub fn evaluate(&self, eps: f64) -> ExpansionResult {
        self.assembler()
            .assemble(eps, self.background.trace(), None, "neumann")
    }

    /// The expansion with an externally supplied H-derivative vector over
    /// |l| ≤ n
    /// (testing hook; the ladder is bypassed).
    pub fn evaluate_with_h(&self, h_derivs: &[f64], eps: f64) -> ExpansionResult {
        self.assembler()
            .assemble(eps, self.background.trace(), Some(h_derivs), "neumann-H")
    }
}

/// Dirichlet twin: expands the boundary flux ∂u/∂ν about ∂V/∂ν.
pub struct DirichletExpansion {
    domain: DiskDomain,
    pub inclusion: InclusionSpec,
    order: u32,
    background: DirichletField,
    gpt: GptTable,
    ladder: CorrectionLadder,
    derivs: Vec<f64>,
    kernels: BTreeMap<MultiIndex, Vec<f64>>,
}

impl DirichletExpansion {
    pub fn new(
        domain: DiskDomain,
        inclusion: InclusionSpec,
        boundary_values: Density,
        n: u32,
        m_inclusion: usize,
    ) -> Result<Self> {
        validate_inclusions(&domain, std::slice::from_ref(&inclusion), None)?;
        let conductivity = inclusion.conductivity()?;
        let curve_b = Arc::new(BoundaryCurve::discretize(
            inclusion.shape.clone(),
            m_inclusion,
        )?);
        let gpt = gpt_table(&curve_b, conductivity, n)?;
        let background = DirichletField::new(domain.clone(), boundary_values)?;
        let set = MultiIndexSet::up_to(n);
        let derivs = background.derivative_vector(&set, inclusion.center)?;
        let ladder =
            correction_ladder(&domain, inclusion.center, &gpt, n, ExpansionKind::Dirichlet)?;
        let kernels = kernel_traces(&domain, inclusion.center, n, ExpansionKind::Dirichlet)?;
        Ok(Self {
            domain,
            inclusion,
            order: n,
            background,
            gpt,
            ladder,
            derivs,
            kernels,
        })
    }

    pub fn background(&self) -> &DirichletField {
        &self.background
    }

    pub fn gpt(&self) -> &GptTable {
        &self.gpt
    }

    pub fn zero_gpt(&mut self) -> Result<()> {
        self.gpt = self.gpt.zeroed();
        self.ladder = correction_ladder(
            &self.domain,
            self.inclusion.center,
            &self.gpt,
            self.order,
            ExpansionKind::Dirichlet,
        )?;
        Ok(())
    }

    /// The ladder-corrected boundary-flux expansion at scale ε.
    pub fn evaluate(&self, eps: f64) -> ExpansionResult {
        Assembler {
            domain: &self.domain,
            gpt: &self.gpt,
            ladder: &self.ladder,
            derivs: &self.derivs,
            kernels: &self.kernels,
            order: self.order,
            sign: 1.0,
        }
        .assemble(eps, self.background.flux(), None, "dirichlet")
    }
}

/// A harmonic function known through its values and derivatives, as exposed
/// by the transmission oracle's harmonic part H.
pub trait HarmonicPart {
    fn value(&self, x: Vector2<f64>) -> Result<f64>;
    fn partial(&self, l: MultiIndex, z: Vector2<f64>) -> Result<f64>;
}

/// Free-space form: u(x) ≈ H(x) + Σ (1/j!) ε^{|i|+|j|} ∂^i H(z) M_ij
/// ∂^j_z Γ(x−z) at interior points bounded away from ∂Ω and from D.
pub fn expand_free_space(
    domain: &DiskDomain,
    inclusion: &InclusionSpec,
    h: &dyn HarmonicPart,
    n: u32,
    m_inclusion: usize,
    targets: &[Vector2<f64>],
) -> Result<Vec<f64>> {
    validate_inclusions(domain, std::slice::from_ref(inclusion), None)?;
    let conductivity = inclusion.conductivity()?;
    let curve_b = Arc::new(BoundaryCurve::discretize(
        inclusion.shape.clone(),
        m_inclusion,
    )?);
    let gpt = gpt_table(&curve_b, conductivity, n)?;
    let eps = inclusion.scale;
    let z = inclusion.center;
    let boundary_margin = near_field_limit(domain.curve());
    let inclusion_margin = 2.0 * eps * inclusion.shape.max_radius();
    let set = MultiIndexSet::up_to(n);
    let mut h_derivs = Vec::with_capacity(set.len());
    for l in set.iter() {
        h_derivs.push(h.partial(l, z)?);
    }
    let mut out = Vec::with_capacity(targets.len());
    for &x in targets {
        if domain.boundary_distance(x) < boundary_margin {
            return Err(Error::DomainViolation(format!(
                "evaluation point ({}, {}) is too close to ∂Ω",
                x.x, x.y
            )));
        }
        if (x - z).norm() < inclusion_margin {
            return Err(Error::DomainViolation(format!(
                "evaluation point ({}, {}) is too close to the inclusion",
                x.x, x.y
            )));
        }
        let mut val = h.value(x)?;
        for i in indices_in_range(1, n) {
            for j in indices_in_range(1, n - i.order() + 1) {
                let m_ij = gpt.get(i, j).expect("table covers the range");
                // ∂^j_z Γ(x−z) = (−1)^{|j|} (∂^j Γ)(x−z)
                let sign = if j.order() % 2 == 0 { 1.0 } else { -1.0 };
                val += eps.powi((i.order() + j.order()) as i32) / j.factorial()
                    * h_derivs[set.position(i)]
                    * m_ij
                    * sign
                    * fundamental_partial(j, x - z)?;
            }
        }
        out.push(val);
    }
    Ok(out)
}

/// Additive multi-inclusion approximation: the per-inclusion expansions about
/// the shared background U, summed. Accurate to O(ε^{d+1}) only (inclusion
/// interactions enter at ε^{2d}), regardless of the per-inclusion order n.
/// Inclusions with k = 1 contribute nothing and are skipped.
pub fn superpose_multi(
    domain: &DiskDomain,
    inclusions: &[InclusionSpec],
    flux: Density,
    n: u32,
    m_inclusion: usize,
) -> Result<ExpansionResult> {
    validate_inclusions(domain, inclusions, None)?;
    let background = NeumannField::new(domain.clone(), flux.clone())?;
    let curve = domain.curve();
    let mut values = background.trace().to_vec();
    let mut terms: Vec<ExpansionTerm> = Vec::new();
    for (idx, inclusion) in inclusions.iter().enumerate() {
        if inclusion.k == 1.0 {
            continue;
        }
        let expansion = NeumannExpansion::new(
            domain.clone(),
            inclusion.clone(),
            flux.clone(),
            n,
            m_inclusion,
        )?;
        let single = expansion.evaluate(inclusion.scale);
        for mut term in single.terms {
            term.inclusion = idx;
            for (v, t) in values.iter_mut().zip(&term.values) {
                *v += t;
            }
            terms.push(term);
        }
    }
    Ok(ExpansionResult {
        kind_label: "neumann-superposed".to_string(),
        eps: inclusions.iter().map(|i| i.scale).fold(0.0, f64::max),
        order: n,
        nodes: curve.nodes().iter().map(|p| [p.x, p.y]).collect(),
        background: background.trace().to_vec(),
        values,
        terms,
    })
}

/// Least-squares slope of log(residual) against log(ε).
pub fn fit_loglog_slope(eps: &[f64], residuals: &[f64]) -> f64 {
    assert_eq!(eps.len(), residuals.len());
    assert!(eps.len() >= 2);
    let xs: Vec<f64> = eps.iter().map(|e| e.ln()).collect();
    let ys: Vec<f64> = residuals.iter().map(|r| r.max(1e-300).ln()).collect();
    let n = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / n;
    let my = ys.iter().sum::<f64>() / n;
    let num: f64 = xs.iter().zip(&ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let den: f64 = xs.iter().map(|x| (x - mx) * (x - mx)).sum();
    num / den
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;
    use std::f64::consts::PI;

    fn disk_setup(k: f64, n: u32) -> NeumannExpansion {
        let domain = DiskDomain::new(1.0, 128).unwrap();
        let g = Density::from_fn(Arc::clone(domain.curve()), |x| x.x);
        let inclusion = InclusionSpec::new(ShapeSpec::disk(1.0), Vector2::new(0.3, 0.0), 0.05, k);
        NeumannExpansion::new(domain, inclusion, g, n, 64).unwrap()
    }

    #[test]
    fn slope_fit_recovers_power_laws() {
        let eps = [0.1, 0.07, 0.05, 0.035];
        let res: Vec<f64> = eps.iter().map(|e| 3.7 * e * e * e).collect();
        assert_abs_diff_eq!(fit_loglog_slope(&eps, &res), 3.0, epsilon = 1e-10);
    }

    #[test]
    fn zeroed_gpt_reproduces_background() {
        let mut exp = disk_setup(2.0, 2);
        exp.zero_gpt().unwrap();
        let result = exp.evaluate(0.05);
        for (v, u) in result.values.iter().zip(result.background.iter()) {
            assert_abs_diff_eq!(v, u, epsilon = 1e-15);
        }
    }

    #[test]
    fn ladder_is_identity_at_zero_eps_and_order_one() {
        let exp = disk_setup(2.0, 3);
        let v: Vec<f64> = (0..exp.ladder.index_set().len())
            .map(|q| 0.1 * q as f64 - 0.3)
            .collect();
        let corrected = exp.ladder.corrected(&v, 0.0, 3);
        for (a, b) in corrected.iter().zip(&v) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
        // n = 1 ladder has Q₁ only; the per-term truncation p ≤ n−|i|−|j| ≤ −1
        // applies no correction, so the order-1 expansion uses U-derivatives
        let exp1 = disk_setup(2.0, 1);
        let r = exp1.evaluate(0.05);
        // |i| = 1 and |j| = 1 each range over two indices
        assert_eq!(r.terms.len(), 4);
    }

    #[test]
    fn hand_assembled_single_term_matches() {
        // n = 1, disk B: the only term is −ε² (1/λ) π ∂U(z)·∂_z N(x,z)
        let exp = disk_setup(2.0, 1);
        let eps = 0.05;
        let result = exp.evaluate(eps);
        let domain = DiskDomain::new(1.0, 128).unwrap();
        let lambda = Conductivity::new(2.0).unwrap().lambda();
        let z = Vector2::new(0.3, 0.0);
        let curve = domain.curve();
        for p in (0..curve.len()).step_by(11) {
            let x = curve.node(p);
            let mut hand = 0.0;
            for (i, j) in [
                (MultiIndex::E1, MultiIndex::E1),
                (MultiIndex::E1, MultiIndex::E2),
            ] {
                // ∂U = e₁ for U = x₁; disk GPT is (π/λ) δ_ij
                let m_ij = if i == j { PI / lambda } else { 0.0 };
                let du = if i == MultiIndex::E1 { 1.0 } else { 0.0 };
                hand -= eps * eps * du * m_ij * domain.neumann_dz(j, x, z).unwrap();
            }
            // remaining index pairs carry ∂U = 0 on this data
            let expansion_delta = result.values[p] - result.background[p];
            assert_abs_diff_eq!(expansion_delta, hand, epsilon = 1e-11);
        }
    }

    #[test]
    fn vanishing_contrast_limit() {
        // as k → 1, all GPT entries are O(k−1), so ‖u − U‖ = O(k−1)
        let deltas: Vec<f64> = [1e-3, 1e-4]
            .iter()
            .map(|d| {
                let exp = disk_setup(1.0 + d, 2);
                let r = exp.evaluate(0.05);
                r.max_abs_residual_against(&r.background)
            })
            .collect();
        assert!(deltas[0] < 1e-4);
        let ratio = deltas[0] / deltas[1];
        assert!((ratio - 10.0).abs() < 1.0, "ratio {ratio}");
    }

    #[test]
    fn expansion_is_linear_in_the_data() {
        let domain = DiskDomain::new(1.0, 128).unwrap();
        let curve = Arc::clone(domain.curve());
        let inclusion = InclusionSpec::new(ShapeSpec::kite(), Vector2::new(0.25, 0.1), 0.04, 3.0);
        let g1 = Density::from_fn(Arc::clone(&curve), |x| x.x);
        let g2 = Density::from_fn(Arc::clone(&curve), |x| {
            let t = x.y.atan2(x.x);
            (2.0 * t).cos()
        });
        let g_sum = Density::new(
            Arc::clone(&curve),
            g1.values()
                .iter()
                .zip(g2.values())
                .map(|(a, b)| a + b)
                .collect(),
        )
        .unwrap();
        let make = |g: Density| {
            NeumannExpansion::new(domain.clone(), inclusion.clone(), g, 3, 96)
                .unwrap()
                .evaluate(0.04)
        };
        let (r1, r2, rs) = (make(g1), make(g2), make(g_sum));
        for p in 0..curve.len() {
            assert_abs_diff_eq!(rs.values[p], r1.values[p] + r2.values[p], epsilon = 1e-12);
        }
    }

    #[test]
    fn expansion_output_is_mean_zero_and_terms_sum() {
        let exp = disk_setup(5.0, 3);
        let r = exp.evaluate(0.05);
        let curve = BoundaryCurve::discretize(ShapeSpec::disk(1.0), 128).unwrap();
        assert!(curve.integrate(&r.values).abs() < 1e-10);
        // bookkeeping: background + Σ terms = values exactly
        let mut recon = r.background.clone();
        for term in &r.terms {
            for (a, b) in recon.iter_mut().zip(&term.values) {
                *a += b;
            }
        }
        for (a, b) in recon.iter().zip(&r.values) {
            assert_abs_diff_eq!(a, b, epsilon = 1e-15);
        }
    }

    #[test]
    fn term_hierarchy_on_the_disk_at_small_eps() {
        let exp = disk_setup(5.0, 3);
        let r = exp.evaluate(0.02);
        assert!(r.hierarchy_nonincreasing());
    }

    #[test]
    fn superposition_trivia() {
        let domain = DiskDomain::new(1.0, 128).unwrap();
        let g = Density::from_fn(Arc::clone(domain.curve()), |x| x.x);
        let inc1 = InclusionSpec::new(ShapeSpec::disk(1.0), Vector2::new(0.4, 0.0), 0.05, 5.0);
        let inc2 = InclusionSpec::new(ShapeSpec::disk(1.0), Vector2::new(-0.4, 0.0), 0.05, 1.0);
        // single inclusion: identical to the plain expansion
        let single = superpose_multi(&domain, &[inc1.clone()], g.clone(), 1, 64).unwrap();
        let plain = NeumannExpansion::new(domain.clone(), inc1.clone(), g.clone(), 1, 64)
            .unwrap()
            .evaluate(0.05);
        for p in 0..single.values.len() {
            assert_abs_diff_eq!(single.values[p], plain.values[p], epsilon = 1e-14);
        }
        // a k = 1 partner contributes nothing
        let pair = superpose_multi(&domain, &[inc1, inc2], g, 1, 64).unwrap();
        for p in 0..pair.values.len() {
            assert_abs_diff_eq!(pair.values[p], plain.values[p], epsilon = 1e-14);
        }
    }

    #[test]
    fn ladder_duality_tensors_match_finite_differences() {
        // both ladder tensors are derivatives of explicit potentials at z;
        // confirm ∂^l by central differences of the assembled potential
        let domain = DiskDomain::new(1.0, 128).unwrap();
        let z = Vector2::new(0.3, 0.1);
        let curve_b = Arc::new(BoundaryCurve::discretize(ShapeSpec::kite(), 96).unwrap());
        let gpt = gpt_table(&curve_b, Conductivity::new(5.0).unwrap(), 2).unwrap();
        let curve = domain.curve();
        for kind in [ExpansionKind::Neumann, ExpansionKind::Dirichlet] {
            let i = MultiIndex::E1;
            let j = MultiIndex(1, 1);
            let l = MultiIndex(1, 0);
            let tensor = ladder_tensor(&domain, z, kind, &gpt, i, j, l).unwrap();
            let psi: Vec<f64> = (0..curve.len())
                .map(|p| match kind {
                    ExpansionKind::Neumann => domain.neumann_dz(j, curve.node(p), z).unwrap(),
                    ExpansionKind::Dirichlet => domain.poisson_dz(j, curve.node(p), z).unwrap(),
                })
                .collect();
            let pot_at = |x: Vector2<f64>| match kind {
                ExpansionKind::Neumann => crate::layer_potentials::d_eval(curve, &psi, x),
                ExpansionKind::Dirichlet => crate::layer_potentials::s_eval(curve, &psi, x),
            };
            let h = 1e-4;
            let fd =
                (pot_at(z + Vector2::new(h, 0.0)) - pot_at(z - Vector2::new(h, 0.0))) / (2.0 * h);
            let expected = gpt.get(i, j).unwrap() / j.factorial() * fd;
            assert!(
                (tensor - expected).abs() <= 1e-6 * expected.abs().max(1e-12),
                "{kind:?}: {tensor:.10e} vs {expected:.10e}"
            );
        }
    }
}
