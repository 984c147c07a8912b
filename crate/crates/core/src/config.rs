//! Experiment configuration: one TOML file describing the domain, the
//! inclusions, the boundary data and the study parameters.

use std::sync::Arc;

use nalgebra::Vector2;
use serde::{Deserialize, Serialize};

use crate::asymptotics::InclusionSpec;
use crate::domain_functions::DiskDomain;
use crate::error::{Error, Result};
use crate::geometry::ShapeSpec;
use crate::layer_potentials::Density;

pub const SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StudyConfig {
    pub schema_version: u32,
    /// Seed for the randomized diagnostic checks (ignored otherwise).
    #[serde(default)]
    pub seed: u64,
    pub domain: DomainConfig,
    pub inclusions: Vec<InclusionConfig>,
    pub boundary_data: BoundaryDataConfig,
    #[serde(default)]
    pub discretization: DiscretizationConfig,
    #[serde(default)]
    pub expansion: ExpansionConfig,
    #[serde(default)]
    pub study: StudySection,
    #[serde(default)]
    pub gpt: GptSection,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DomainConfig {
    pub radius: f64,
    pub nodes: usize,
}

/// Conductivity in TOML: a number, or the string "inf" for a perfect
/// conductor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ConductivityValue(pub f64);

impl Serialize for ConductivityValue {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        if self.0.is_infinite() {
            s.serialize_str("inf")
        } else {
            s.serialize_f64(self.0)
        }
    }
}

impl<'de> Deserialize<'de> for ConductivityValue {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Number(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Number(k) => Ok(ConductivityValue(k)),
            Raw::Text(s) => match s.trim().to_ascii_lowercase().as_str() {
                "inf" | "infinity" => Ok(ConductivityValue(f64::INFINITY)),
                other => Err(serde::de::Error::custom(format!(
                    "conductivity must be a number or \"inf\", got \"{other}\""
                ))),
            },
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct InclusionConfig {
    /// "disk" | "ellipse" | "kite"
    pub shape: String,
    #[serde(default = "default_radius")]
    pub radius: f64,
    #[serde(default)]
    pub semi_axes: Option<[f64; 2]>,
    pub center: [f64; 2],
    /// ε; may be omitted when a study supplies an ε-grid.
    #[serde(default)]
    pub scale: Option<f64>,
    pub conductivity: ConductivityValue,
    #[serde(default)]
    pub rotation: f64,
}

fn default_radius() -> f64 {
    1.0
}

impl InclusionConfig {
    pub fn shape_spec(&self) -> Result<ShapeSpec> {
        let base = match self.shape.as_str() {
            "disk" => ShapeSpec::disk(self.radius),
            "ellipse" => {
                let [a, b] = self.semi_axes.ok_or_else(|| {
                    Error::InvalidArgument("ellipse inclusion needs semi_axes".into())
                })?;
                ShapeSpec::ellipse(a, b)
            }
            "kite" => ShapeSpec::kite(),
            other => {
                return Err(Error::InvalidArgument(format!(
                    "unknown inclusion shape \"{other}\""
                )))
            }
        };
        Ok(base.with_rotation(self.rotation))
    }

    /// The inclusion at a given ε (falling back to the configured scale).
    pub fn inclusion_spec(&self, eps: Option<f64>) -> Result<InclusionSpec> {
        let scale = eps.or(self.scale).ok_or_else(|| {
            Error::InvalidArgument("inclusion has no scale: set `scale` or supply an ε-grid".into())
        })?;
        Ok(InclusionSpec::new(
            self.shape_spec()?,
            Vector2::new(self.center[0], self.center[1]),
            scale,
            self.conductivity.0,
        ))
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct BoundaryDataConfig {
    /// "neumann" | "dirichlet"
    pub kind: String,
    /// Fourier modes (m, cos coefficient, sin coefficient), m ≥ 1.
    pub modes: Vec<(u32, f64, f64)>,
}

impl BoundaryDataConfig {
    pub fn is_neumann(&self) -> bool {
        self.kind == "neumann"
    }

    /// Nodal samples of the mode sum on the domain boundary.
    pub fn density(&self, domain: &DiskDomain) -> Result<Density> {
        let curve = domain.curve();
        let values: Vec<f64> = (0..curve.len())
            .map(|p| {
                let t = curve.param(p);
                self.modes
                    .iter()
                    .map(|&(m, a, b)| a * (m as f64 * t).cos() + b * (m as f64 * t).sin())
                    .sum()
            })
            .collect();
        Density::new(Arc::clone(curve), values)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct DiscretizationConfig {
    #[serde(default = "default_inclusion_nodes")]
    pub inclusion_nodes: usize,
}

fn default_inclusion_nodes() -> usize {
    128
}

impl Default for DiscretizationConfig {
    fn default() -> Self {
        Self {
            inclusion_nodes: default_inclusion_nodes(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct ExpansionConfig {
    #[serde(default = "default_orders")]
    pub orders: Vec<u32>,
    /// Dry-run hook: zero every GPT entry; the expansion must return the
    /// background field exactly.
    #[serde(default)]
    pub zero_gpt: bool,
}

fn default_orders() -> Vec<u32> {
    vec![1]
}

impl Default for ExpansionConfig {
    fn default() -> Self {
        Self {
            orders: default_orders(),
            zero_gpt: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct StudySection {
    #[serde(default = "default_eps_grid")]
    pub eps_grid: Vec<f64>,
    #[serde(default = "default_slope_tolerance")]
    pub slope_tolerance: f64,
    /// Run the seeded randomized invariants (mean-zero preservation,
    /// dissipated power) alongside the study.
    #[serde(default)]
    pub randomized_checks: bool,
}

fn default_eps_grid() -> Vec<f64> {
    vec![0.1, 0.07, 0.05, 0.035]
}

fn default_slope_tolerance() -> f64 {
    0.3
}

impl Default for StudySection {
    fn default() -> Self {
        Self {
            eps_grid: default_eps_grid(),
            slope_tolerance: default_slope_tolerance(),
            randomized_checks: false,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
#[serde(deny_unknown_fields)]
pub struct GptSection {
    #[serde(default = "default_gpt_order")]
    pub order: u32,
}

fn default_gpt_order() -> u32 {
    2
}

impl Default for GptSection {
    fn default() -> Self {
        Self {
            order: default_gpt_order(),
        }
    }
}

impl StudyConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        let config: StudyConfig = toml::from_str(text)
            .map_err(|e| Error::InvalidArgument(format!("config parse error: {e}")))?;
        config.validate()?;
        Ok(config)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(Error::InvalidArgument(format!(
                "unsupported schema_version {} (expected {SCHEMA_VERSION})",
                self.schema_version
            )));
        }
        if self.inclusions.is_empty() {
            return Err(Error::InvalidArgument("no inclusions configured".into()));
        }
        if self.boundary_data.kind != "neumann" && self.boundary_data.kind != "dirichlet" {
            return Err(Error::InvalidArgument(format!(
                "boundary_data.kind must be \"neumann\" or \"dirichlet\", got \"{}\"",
                self.boundary_data.kind
            )));
        }
        if self.boundary_data.modes.is_empty() {
            return Err(Error::InvalidArgument("boundary data has no modes".into()));
        }
        for &(m, _, _) in &self.boundary_data.modes {
            if m == 0 {
                return Err(Error::InvalidArgument(
                    "boundary mode m = 0 is not mean-zero admissible".into(),
                ));
            }
        }
        if !self
            .study
            .eps_grid
            .windows(2)
            .all(|w| w[1] < w[0] && w[1] > 0.0)
            || self.study.eps_grid.is_empty()
            || self.study.eps_grid[0] <= 0.0
        {
            return Err(Error::InvalidArgument(
                "study.eps_grid must be strictly decreasing and positive".into(),
            ));
        }
        // orders beyond 4 push the remainder below the oracle's own noise
        // floor at desk scale; the cap keeps studies meaningful
        for n in &self.expansion.orders {
            if *n == 0 || *n > 4 {
                return Err(Error::InvalidArgument(format!(
                    "expansion order {n} outside the supported range 1..=4"
                )));
            }
        }
        if self.gpt.order == 0 || self.gpt.order > 4 {
            return Err(Error::InvalidArgument(format!(
                "gpt order {} outside the supported range 1..=4",
                self.gpt.order
            )));
        }
        // geometric constraints of the separation condition, checked at the
        // largest scale the run can use
        let domain = self.domain()?;
        let eps0 = self.study.eps_grid.first().copied();
        let specs: Vec<InclusionSpec> = self
            .inclusions
            .iter()
            .map(|inc| inc.inclusion_spec(inc.scale.is_none().then(|| eps0).flatten()))
            .collect::<Result<_>>()?;
        crate::asymptotics::validate_inclusions(&domain, &specs, None)?;
        Ok(())
    }

    pub fn domain(&self) -> Result<DiskDomain> {
        DiskDomain::new(self.domain.radius, self.domain.nodes)
    }

    pub fn inclusion_specs(&self, eps: Option<f64>) -> Result<Vec<InclusionSpec>> {
        self.inclusions
            .iter()
            .map(|inc| inc.inclusion_spec(eps))
            .collect()
    }
}
