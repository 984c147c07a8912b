//! Command implementations behind the `perturb2d` binary: GPT tables,
//! forward solves, expansions and convergence studies, with deterministic
//! CSV/JSON artifacts (identical config in, identical bytes out; wall-clock
//! content goes only to the `run.log` sidecar).

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use serde::Serialize;

use crate::asymptotics::{
    fit_loglog_slope, superpose_multi, DirichletExpansion, ExpansionResult, NeumannExpansion,
};
use crate::config::{StudyConfig, SCHEMA_VERSION};
use crate::error::Error;
use crate::forward_oracle::{solve_dirichlet, solve_neumann, TransmissionSolution};
use crate::layer_potentials::Density;
use crate::transmission::{gpt_table, GptTable};

/// Failure classes mapped to process exit codes by the binary.
#[derive(Debug)]
pub enum CliError {
    /// Exit code 2: configuration or argument problem.
    Config(String),
    /// Exit code 3: solver or tolerance failure.
    Numerical(String),
    /// Exit code 4: a study ran to completion and an acceptance slope failed.
    StudyFailed,
    /// Exit code 3 as well: filesystem trouble writing artifacts.
    Io(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) | CliError::Io(_) => 3,
            CliError::StudyFailed => 4,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(msg) => write!(f, "configuration error: {msg}"),
            CliError::Numerical(msg) => write!(f, "numerical failure: {msg}"),
            CliError::StudyFailed => write!(f, "study verdict: FAIL"),
            CliError::Io(msg) => write!(f, "io error: {msg}"),
        }
    }
}

fn classify(err: Error) -> CliError {
    match err {
        Error::InvalidArgument(_) | Error::DomainViolation(_) => CliError::Config(err.to_string()),
        other => CliError::Numerical(other.to_string()),
    }
}

fn write_file(out_dir: &Path, name: &str, content: &str) -> Result<(), CliError> {
    fs::create_dir_all(out_dir).map_err(|e| CliError::Io(e.to_string()))?;
    fs::write(out_dir.join(name), content).map_err(|e| CliError::Io(e.to_string()))
}

fn write_json<T: Serialize>(out_dir: &Path, name: &str, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value).map_err(|e| CliError::Io(e.to_string()))?;
    text.push('\n');
    write_file(out_dir, name, &text)
}

/// Echo of the parsed config plus a timestamped sidecar log.
fn write_run_metadata(config: &StudyConfig, out_dir: &Path, command: &str) -> Result<(), CliError> {
    write_file(out_dir, "config_echo.toml", &config.to_toml())?;
    let stamp = std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    let log = format!("command = {command}\nunix_time = {stamp}\n");
    write_file(out_dir, "run.log", &log)
}

fn conductivity_label(k: f64) -> String {
    if k.is_infinite() {
        "inf".to_string()
    } else {
        format!("{k}")
    }
}

// JSON shapes -----------------------------------------------------------

#[derive(Serialize)]
struct GptJson {
    schema_version: u32,
    shape: String,
    conductivity: String,
    lambda: f64,
    order: u32,
    entries: Vec<GptEntryJson>,
    zeroth_moments: Vec<ZerothJson>,
    projected_means: Vec<ZerothJson>,
}

#[derive(Serialize)]
struct GptEntryJson {
    i: [u32; 2],
    j: [u32; 2],
    value: f64,
}

#[derive(Serialize)]
struct ZerothJson {
    i: [u32; 2],
    value: f64,
}

fn gpt_json(shape: String, table: &GptTable) -> GptJson {
    GptJson {
        schema_version: SCHEMA_VERSION,
        shape,
        conductivity: conductivity_label(table.conductivity),
        lambda: table.lambda,
        order: table.order,
        entries: table
            .entries()
            .map(|(i, j, value)| GptEntryJson {
                i: [i.0, i.1],
                j: [j.0, j.1],
                value,
            })
            .collect(),
        zeroth_moments: table
            .zeroth_moments()
            .map(|(i, value)| ZerothJson {
                i: [i.0, i.1],
                value,
            })
            .collect(),
        projected_means: table
            .projected_means
            .iter()
            .map(|&(i, value)| ZerothJson {
                i: [i.0, i.1],
                value,
            })
            .collect(),
    }
}

fn gpt_csv(table: &GptTable) -> String {
    let mut out = format!("# gpt-table schema_version={SCHEMA_VERSION}\n");
    out.push_str("i1,i2,j1,j2,value\n");
    for (i, j, value) in table.entries() {
        let _ = writeln!(out, "{},{},{},{},{}", i.0, i.1, j.0, j.1, value);
    }
    for (i, value) in table.zeroth_moments() {
        let _ = writeln!(out, "{},{},0,0,{}", i.0, i.1, value);
    }
    out
}

#[derive(Serialize)]
struct BoundaryTableJson {
    schema_version: u32,
    kind: String,
    eps: f64,
    order: u32,
    x1: Vec<f64>,
    x2: Vec<f64>,
    background: Vec<f64>,
    values: Vec<f64>,
    terms: Vec<TermJson>,
}

#[derive(Serialize)]
struct TermJson {
    i: [u32; 2],
    j: [u32; 2],
    inclusion: usize,
    values: Vec<f64>,
}

fn expansion_json(result: &ExpansionResult) -> BoundaryTableJson {
    BoundaryTableJson {
        schema_version: SCHEMA_VERSION,
        kind: result.kind_label.clone(),
        eps: result.eps,
        order: result.order,
        x1: result.nodes.iter().map(|p| p[0]).collect(),
        x2: result.nodes.iter().map(|p| p[1]).collect(),
        background: result.background.clone(),
        values: result.values.clone(),
        terms: result
            .terms
            .iter()
            .map(|t| TermJson {
                i: [t.i.0, t.i.1],
                j: [t.j.0, t.j.1],
                inclusion: t.inclusion,
                values: t.values.clone(),
            })
            .collect(),
    }
}

/// CSV with one column per total order; the term columns sum to
/// value − background exactly.
fn expansion_csv(result: &ExpansionResult) -> String {
    let totals = result.order_totals();
    let mut out = format!("# boundary-table schema_version={SCHEMA_VERSION}\n");
    out.push_str("node,x1,x2,background,value");
    for order in totals.keys() {
        let _ = write!(out, ",term_order{order}");
    }
    out.push('\n');
    for p in 0..result.values.len() {
        let _ = write!(
            out,
            "{},{},{},{},{}",
            p, result.nodes[p][0], result.nodes[p][1], result.background[p], result.values[p]
        );
        for col in totals.values() {
            let _ = write!(out, ",{}", col[p]);
        }
        out.push('\n');
    }
    out
}

#[derive(Serialize)]
struct ForwardJson {
    schema_version: u32,
    kind: String,
    x1: Vec<f64>,
    x2: Vec<f64>,
    background: Vec<f64>,
    values: Vec<f64>,
    densities: Vec<DensityBlockJson>,
}

#[derive(Serialize)]
struct DensityBlockJson {
    inclusion: usize,
    conductivity: String,
    x1: Vec<f64>,
    x2: Vec<f64>,
    values: Vec<f64>,
}

fn forward_json(
    kind: &str,
    background: &[f64],
    boundary: &TransmissionSolution,
    values: &[f64],
    conductivities: &[f64],
) -> ForwardJson {
    let omega = boundary.domain().curve();
    ForwardJson {
        schema_version: SCHEMA_VERSION,
        kind: kind.to_string(),
        x1: omega.nodes().iter().map(|p| p.x).collect(),
        x2: omega.nodes().iter().map(|p| p.y).collect(),
        background: background.to_vec(),
        values: values.to_vec(),
        densities: boundary
            .densities()
            .iter()
            .enumerate()
            .map(|(idx, phi)| DensityBlockJson {
                inclusion: idx,
                conductivity: conductivity_label(conductivities[idx]),
                x1: phi.curve().nodes().iter().map(|p| p.x).collect(),
                x2: phi.curve().nodes().iter().map(|p| p.y).collect(),
                values: phi.values().to_vec(),
            })
            .collect(),
    }
}

fn boundary_csv(omega_nodes: &[[f64; 2]], background: &[f64], values: &[f64]) -> String {
    let mut out = format!("# boundary-table schema_version={SCHEMA_VERSION}\n");
    out.push_str("node,x1,x2,background,value\n");
    for p in 0..values.len() {
        let _ = writeln!(
            out,
            "{},{},{},{},{}",
            p, omega_nodes[p][0], omega_nodes[p][1], background[p], values[p]
        );
    }
    out
}

// commands ---------------------------------------------------------------

/// `gpt`: one table per configured inclusion shape.
pub fn cmd_gpt(config: &StudyConfig, out_dir: &Path, quiet: bool) -> Result<(), CliError> {
    write_run_metadata(config, out_dir, "gpt")?;
    for (idx, inclusion) in config.inclusions.iter().enumerate() {
        let shape = inclusion.shape_spec().map_err(classify)?;
        let curve = std::sync::Arc::new(
            crate::geometry::BoundaryCurve::discretize(
                shape,
                config.discretization.inclusion_nodes,
            )
            .map_err(classify)?,
        );
        let conductivity =
            crate::transmission::Conductivity::new(inclusion.conductivity.0).map_err(classify)?;
        let table = gpt_table(&curve, conductivity, config.gpt.order).map_err(classify)?;
        write_json(
            out_dir,
            &format!("gpt_inclusion{idx}.json"),
            &gpt_json(inclusion.shape.clone(), &table),
        )?;
        write_file(
            out_dir,
            &format!("gpt_inclusion{idx}.csv"),
            &gpt_csv(&table),
        )?;
        if !quiet {
            println!(
                "gpt: inclusion {idx} ({}) k = {} order {} -> {} entries",
                inclusion.shape,
                conductivity_label(inclusion.conductivity.0),
                config.gpt.order,
                table.entries().count()
            );
        }
    }
    Ok(())
}

/// `forward`: one full-accuracy transmission solve at the configured scales.
pub fn cmd_forward(config: &StudyConfig, out_dir: &Path, quiet: bool) -> Result<(), CliError> {
    write_run_metadata(config, out_dir, "forward")?;
    let domain = config.domain().map_err(classify)?;
    let data = config.boundary_data.density(&domain).map_err(classify)?;
    let specs = config.inclusion_specs(None).map_err(classify)?;
    let conductivities: Vec<f64> = specs.iter().map(|s| s.k).collect();
    let m_d = config.discretization.inclusion_nodes;
    let (kind, background, solution): (&str, Vec<f64>, TransmissionSolution) =
        if config.boundary_data.is_neumann() {
            let field = crate::domain_functions::NeumannField::new(domain.clone(), data.clone())
                .map_err(classify)?;
            let solution = solve_neumann(&domain, &specs, &data, m_d).map_err(classify)?;
            ("neumann", field.trace().to_vec(), solution)
        } else {
            let field = crate::domain_functions::DirichletField::new(domain.clone(), data.clone())
                .map_err(classify)?;
            let solution = solve_dirichlet(&domain, &specs, &data, m_d).map_err(classify)?;
            ("dirichlet", field.flux().to_vec(), solution)
        };
    let values: Vec<f64> = if config.boundary_data.is_neumann() {
        solution.trace().values().to_vec()
    } else {
        solution.flux().values().to_vec()
    };
    let nodes: Vec<[f64; 2]> = domain.curve().nodes().iter().map(|p| [p.x, p.y]).collect();
    write_json(
        out_dir,
        "forward.json",
        &forward_json(kind, &background, &solution, &values, &conductivities),
    )?;
    write_file(
        out_dir,
        "forward.csv",
        &boundary_csv(&nodes, &background, &values),
    )?;
    if !quiet {
        println!(
            "forward: {kind} solve, {} inclusions, boundary residual table written",
            specs.len()
        );
    }
    Ok(())
}

fn build_expansion_result(
    config: &StudyConfig,
    n: u32,
    eps: Option<f64>,
) -> Result<ExpansionResult, CliError> {
    let domain = config.domain().map_err(classify)?;
    let data = config.boundary_data.density(&domain).map_err(classify)?;
    let m_d = config.discretization.inclusion_nodes;
    let specs = config.inclusion_specs(eps).map_err(classify)?;
    if config.boundary_data.is_neumann() {
        if specs.len() > 1 {
            let result = superpose_multi(&domain, &specs, data, n, m_d).map_err(classify)?;
            return Ok(result);
        }
        let mut expansion =
            NeumannExpansion::new(domain, specs[0].clone(), data, n, m_d).map_err(classify)?;
        if config.expansion.zero_gpt {
            expansion.zero_gpt().map_err(classify)?;
        }
        Ok(expansion.evaluate(specs[0].scale))
    } else {
        if specs.len() > 1 {
            return Err(CliError::Config(
                "dirichlet expansions support a single inclusion".into(),
            ));
        }
        let mut expansion =
            DirichletExpansion::new(domain, specs[0].clone(), data, n, m_d).map_err(classify)?;
        if config.expansion.zero_gpt {
            expansion.zero_gpt().map_err(classify)?;
        }
        Ok(expansion.evaluate(specs[0].scale))
    }
}

/// `expand`: asymptotic boundary tables at each configured order.
pub fn cmd_expand(config: &StudyConfig, out_dir: &Path, quiet: bool) -> Result<(), CliError> {
    write_run_metadata(config, out_dir, "expand")?;
    for &n in &config.expansion.orders {
        let result = build_expansion_result(config, n, None)?;
        write_json(
            out_dir,
            &format!("expand_order{n}.json"),
            &expansion_json(&result),
        )?;
        write_file(
            out_dir,
            &format!("expand_order{n}.csv"),
            &expansion_csv(&result),
        )?;
        if !quiet {
            println!(
                "expand: order {n}, eps = {}, {} terms",
                result.eps,
                result.terms.len()
            );
        }
    }
    Ok(())
}

#[derive(Serialize)]
struct StudyJson {
    schema_version: u32,
    kind: String,
    slope_tolerance: f64,
    verdicts: Vec<VerdictJson>,
    randomized_checks: Option<RandomizedJson>,
    pass: bool,
}

#[derive(Serialize)]
struct VerdictJson {
    order: u32,
    target_slope: f64,
    slope: f64,
    pass: bool,
    residuals: Vec<ResidualJson>,
}

#[derive(Serialize)]
struct ResidualJson {
    eps: f64,
    residual: f64,
}

#[derive(Serialize)]
struct RandomizedJson {
    seed: u64,
    mean_zero_max: f64,
    min_power: f64,
    pass: bool,
}

fn oracle_boundary_values(config: &StudyConfig, eps: f64) -> Result<Vec<f64>, CliError> {
    let domain = config.domain().map_err(classify)?;
    let data = config.boundary_data.density(&domain).map_err(classify)?;
    let specs = config.inclusion_specs(Some(eps)).map_err(classify)?;
    let m_d = config.discretization.inclusion_nodes;
    if config.boundary_data.is_neumann() {
        let solution = solve_neumann(&domain, &specs, &data, m_d).map_err(classify)?;
        Ok(solution.trace().values().to_vec())
    } else {
        let solution = solve_dirichlet(&domain, &specs, &data, m_d).map_err(classify)?;
        Ok(solution.flux().values().to_vec())
    }
}

fn randomized_checks(config: &StudyConfig) -> Result<RandomizedJson, CliError> {
    let domain = config.domain().map_err(classify)?;
    let curve = domain.curve();
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(config.seed);
    // mean-zero preservation through the resolvent on the first shape
    let shape = config.inclusions[0].shape_spec().map_err(classify)?;
    let b_curve = std::sync::Arc::new(
        crate::geometry::BoundaryCurve::discretize(shape, 96).map_err(classify)?,
    );
    let solver = crate::transmission::NpoSolver::new(std::sync::Arc::clone(&b_curve), 0.8)
        .map_err(classify)?;
    let mut mean_zero_max = 0.0f64;
    for _ in 0..10 {
        let mut raw: Vec<f64> = (0..b_curve.len())
            .map(|_| rng.gen_range(-1.0..1.0))
            .collect();
        let mean = b_curve.integrate(&raw) / b_curve.perimeter();
        for v in &mut raw {
            *v -= mean;
        }
        let rhs = Density::new(std::sync::Arc::clone(&b_curve), raw).map_err(classify)?;
        let phi = solver.solve(&rhs).map_err(classify)?;
        mean_zero_max = mean_zero_max.max(phi.integral().abs());
    }
    // dissipated power for one random flux
    let mut raw: Vec<f64> = (0..curve.len()).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let mean = curve.integrate(&raw) / curve.perimeter();
    for v in &mut raw {
        *v -= mean;
    }
    let g = Density::new(std::sync::Arc::clone(curve), raw).map_err(classify)?;
    let specs = config
        .inclusion_specs(Some(*config.study.eps_grid.last().unwrap()))
        .map_err(classify)?;
    let solution = solve_neumann(&domain, &specs, &g, config.discretization.inclusion_nodes)
        .map_err(classify)?;
    let power: f64 = (0..curve.len())
        .map(|p| g.values()[p] * solution.trace().values()[p] * curve.weight(p))
        .sum();
    let pass = mean_zero_max < 1e-8 && power >= 0.0;
    Ok(RandomizedJson {
        seed: config.seed,
        mean_zero_max,
        min_power: power,
        pass,
    })
}

/// `study`: per-order log-log slope fits of the oracle-vs-expansion residual
/// over the ε-grid, with a machine-readable verdict.
pub fn cmd_study(config: &StudyConfig, out_dir: &Path, quiet: bool) -> Result<(), CliError> {
    write_run_metadata(config, out_dir, "study")?;
    if config.study.eps_grid.len() < 3 {
        return Err(CliError::Config(
            "study needs an eps grid with at least 3 points".into(),
        ));
    }
    let mut verdicts = Vec::new();
    let mut csv =
        format!("# study-residuals schema_version={SCHEMA_VERSION}\norder,eps,residual\n");
    let mut all_pass = true;
    for &n in &config.expansion.orders {
        let mut residuals = Vec::new();
        for &eps in &config.study.eps_grid {
            let expansion = build_expansion_result(config, n, Some(eps))?;
            let oracle = oracle_boundary_values(config, eps)?;
            let residual = expansion.max_abs_residual_against(&oracle);
            let _ = writeln!(csv, "{n},{eps},{residual}");
            residuals.push(ResidualJson { eps, residual });
        }
        let eps: Vec<f64> = residuals.iter().map(|r| r.eps).collect();
        let res: Vec<f64> = residuals.iter().map(|r| r.residual).collect();
        let slope = fit_loglog_slope(&eps, &res);
        let target = (2 + n) as f64 - config.study.slope_tolerance;
        let pass = slope >= target;
        all_pass &= pass;
        if !quiet {
            println!(
                "study: order {n} slope {slope:.3} (target >= {target:.3}) {}",
                if pass { "PASS" } else { "FAIL" }
            );
        }
        verdicts.push(VerdictJson {
            order: n,
            target_slope: target,
            slope,
            pass,
            residuals,
        });
    }
    let randomized = if config.study.randomized_checks {
        let checks = randomized_checks(config)?;
        all_pass &= checks.pass;
        if !quiet {
            println!(
                "study: randomized checks (seed {}) {}",
                checks.seed,
                if checks.pass { "PASS" } else { "FAIL" }
            );
        }
        Some(checks)
    } else {
        None
    };
    write_json(
        out_dir,
        "study.json",
        &StudyJson {
            schema_version: SCHEMA_VERSION,
            kind: config.boundary_data.kind.clone(),
            slope_tolerance: config.study.slope_tolerance,
            verdicts,
            randomized_checks: randomized,
            pass: all_pass,
        },
    )?;
    write_file(out_dir, "residuals.csv", &csv)?;
    if all_pass {
        Ok(())
    } else {
        Err(CliError::StudyFailed)
    }
}
