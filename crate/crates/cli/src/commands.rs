//! The four commands behind the `dynbc` binary: single solves, convergence
//! studies, stability sweeps, and the built-in problem listing.

use std::path::PathBuf;
use std::sync::Arc;

use dynbc_core::assembly::{assemble, CoefficientSet, Lumping};
use dynbc_core::integrators::{run, IntegratorConfig, Method, SnapshotPlan, Startup};
use dynbc_core::mesh::generate_square_mesh;
use dynbc_core::problems::{build_mesh, builtin, Problem, BUILTIN_NAMES};
use dynbc_core::report::{format_float, ErrorTable};
use dynbc_core::stability::{verify_stability, BlockSystem};
use dynbc_core::study::{
    snap_to_divisor, spatial_study, temporal_reference, temporal_study, ReferenceKind,
    SpatialStudyConfig, TauRule, TemporalStudyConfig,
};

use crate::config::Config;
use crate::output::{write_csv, write_vtk};

/// A command failure plus the process exit code it maps to:
/// 1 = runtime failure, 2 = configuration error, 3 = threshold violation.
#[derive(Debug)]
pub struct CliError {
    pub code: i32,
    pub message: String,
}

impl CliError {
    fn threshold(message: String) -> Self {
        CliError { code: 3, message }
    }
}

impl From<dynbc_core::Error> for CliError {
    fn from(err: dynbc_core::Error) -> Self {
        use dynbc_core::Error::*;
        let code = match &err {
            InvalidArgument(_) | Coefficient(_) | Config(_) => 2,
            SolverFailure { .. } | NewtonFailure { .. } | SizeLimit(_) | Io(_) => 1,
        };
        CliError {
            code,
            message: err.to_string(),
        }
    }
}

type CmdResult = Result<(), CliError>;

const KNOWN_KEYS: &[(&str, &[&str])] = &[
    ("problem", &["name", "t_end", "zero_source", "zero_initial"]),
    ("mesh", &["n", "levels"]),
    (
        "integrator",
        &[
            "method",
            "tau",
            "lumping",
            "startup",
            "newton_tol",
            "newton_max_iter",
            "solver_tol",
            "phi_tol",
            "linearly_implicit",
            "averaged_source",
        ],
    ),
    (
        "study",
        &[
            "kind",
            "taus",
            "reference",
            "reference_tau",
            "sigma",
            "tau_rule",
            "tau_rule_constant",
            "min_eoc",
            "eoc_column",
            "eoc_measure",
            "random_systems",
        ],
    ),
    ("output", &["dir", "write_vtk", "snapshots"]),
];

fn config_err(message: String) -> CliError {
    CliError { code: 2, message }
}

// ---------------------------------------------------------------------------
// Shared configuration plumbing
// ---------------------------------------------------------------------------

fn parse_method(name: &str) -> Result<Method, CliError> {
    Ok(match name {
        "bdf1" => Method::Bdf(1),
        "bdf2" => Method::Bdf(2),
        "bdf3" => Method::Bdf(3),
        "bdf4" => Method::Bdf(4),
        "bdf5" => Method::Bdf(5),
        "exp_euler" => Method::ExpEuler,
        "split_force_lie" => Method::SplitForceLie,
        "split_force_strang" => Method::SplitForceStrang,
        "split_comp_lie" => Method::SplitCompLie,
        "split_comp_strang" => Method::SplitCompStrang,
        other => {
            return Err(config_err(format!(
                "unknown method '{other}'; expected bdf1..bdf5, exp_euler, \
                 split_force_lie, split_force_strang, split_comp_lie or split_comp_strang"
            )))
        }
    })
}

fn parse_lumping(name: &str) -> Result<Lumping, CliError> {
    Ok(match name {
        "consistent" => Lumping::Consistent,
        "bulk_only" => Lumping::BulkOnly,
        "full" => Lumping::Full,
        other => {
            return Err(config_err(format!(
                "unknown lumping '{other}'; expected consistent, bulk_only or full"
            )))
        }
    })
}

/// Build the problem from `[problem]`, applying the optional overrides.
fn build_problem(cfg: &Config) -> Result<Problem, CliError> {
    let name = cfg.require("problem", "name")?;
    let mut problem = builtin(name).map_err(|_| {
        config_err(format!(
            "unknown problem '{name}'; available problems: {}",
            BUILTIN_NAMES.join(", ")
        ))
    })?;
    if let Some(t_end) = cfg.get_f64("problem", "t_end")? {
        if !(t_end > 0.0) {
            return Err(config_err(format!(
                "[problem] t_end = {t_end} must be positive"
            )));
        }
        problem.t_end = t_end;
    }
    if cfg.get_bool("problem", "zero_source")?.unwrap_or(false) {
        // Dropping the source invalidates the manufactured exact solution.
        problem.source = None;
        problem.exact = None;
    }
    if cfg.get_bool("problem", "zero_initial")?.unwrap_or(false) {
        problem.u0 = Arc::new(|_| 0.0);
        problem.exact = None;
    }
    Ok(problem)
}

/// The integrator method, defaulting to BDF2.
fn read_method(cfg: &Config) -> Result<Method, CliError> {
    parse_method(cfg.get("integrator", "method").unwrap_or("bdf2"))
}

/// Lumping: explicit key wins; otherwise the exponential and splitting
/// integrators get the diagonal mass they require, and everything else the
/// consistent mass.
fn read_lumping(cfg: &Config, method: Method) -> Result<Lumping, CliError> {
    match cfg.get("integrator", "lumping") {
        Some(name) => parse_lumping(name),
        None => Ok(match method {
            Method::Bdf(_) => Lumping::Consistent,
            _ => Lumping::Full,
        }),
    }
}

/// Startup: explicit key wins; otherwise projections of the exact solution
/// when one exists, self-starting otherwise.
fn read_startup(cfg: &Config, problem: &Problem) -> Result<Startup, CliError> {
    match cfg.get("integrator", "startup") {
        Some("exact_ritz") => Ok(Startup::ExactRitz),
        Some("bootstrap") => Ok(Startup::Bootstrap),
        Some(other) => Err(config_err(format!(
            "unknown startup '{other}'; expected exact_ritz or bootstrap"
        ))),
        None => Ok(if problem.exact.is_some() {
            Startup::ExactRitz
        } else {
            Startup::Bootstrap
        }),
    }
}

fn apply_tolerances(cfg: &Config, out: &mut IntegratorConfig) -> CmdResult {
    if let Some(v) = cfg.get_f64("integrator", "newton_tol")? {
        out.newton_tol = v;
    }
    if let Some(v) = cfg.get_usize("integrator", "newton_max_iter")? {
        out.newton_max_iter = v;
    }
    if let Some(v) = cfg.get_f64("integrator", "solver_tol")? {
        out.solver_tol = v;
    }
    if let Some(v) = cfg.get_f64("integrator", "phi_tol")? {
        out.phi_tol = v;
    }
    if let Some(v) = cfg.get_bool("integrator", "linearly_implicit")? {
        out.linearly_implicit = v;
    }
    if let Some(v) = cfg.get_bool("integrator", "averaged_source")? {
        out.averaged_source = v;
    }
    Ok(())
}

fn output_dir(cfg: &Config) -> Result<PathBuf, CliError> {
    let dir = PathBuf::from(cfg.get("output", "dir").unwrap_or("out"));
    std::fs::create_dir_all(&dir).map_err(|e| CliError {
        code: 1,
        message: format!("cannot create output directory '{}': {e}", dir.display()),
    })?;
    Ok(dir)
}

fn snapshot_plan(cfg: &Config) -> Result<SnapshotPlan, CliError> {
    match cfg.get("output", "snapshots") {
        None | Some("final") => Ok(SnapshotPlan::FinalOnly),
        Some("every") => Ok(SnapshotPlan::EveryStep),
        Some(_) => {
            let times = cfg
                .get_f64_list("output", "snapshots")?
                .expect("key is present");
            Ok(SnapshotPlan::At(times))
        }
    }
}

// ---------------------------------------------------------------------------
// dynbc solve
// ---------------------------------------------------------------------------

pub fn cmd_solve(cfg: &Config) -> CmdResult {
    cfg.check_known(KNOWN_KEYS)?;
    let problem = build_problem(cfg)?;
    let n = cfg
        .get_usize("mesh", "n")?
        .ok_or_else(|| config_err("solve needs [mesh] n".into()))?;
    let mesh = build_mesh(problem.domain, n)?;

    let method = read_method(cfg)?;
    let tau_requested = cfg
        .get_f64("integrator", "tau")?
        .ok_or_else(|| config_err("solve needs [integrator] tau".into()))?;
    let tau = snap_to_divisor(tau_requested, problem.t_end)?;
    if (tau - tau_requested).abs() > 1e-12 * tau_requested {
        println!(
            "note: tau = {} snapped to {} so it divides T = {}",
            tau_requested, tau, problem.t_end
        );
    }

    let mut int_cfg = IntegratorConfig::new(method, tau, problem.t_end);
    int_cfg.lumping = read_lumping(cfg, method)?;
    int_cfg.startup = read_startup(cfg, &problem)?;
    int_cfg.snapshots = snapshot_plan(cfg)?;
    apply_tolerances(cfg, &mut int_cfg)?;

    let report = run(&problem, &mesh, &int_cfg)?;

    let dir = output_dir(cfg)?;
    if cfg.get_bool("output", "write_vtk")?.unwrap_or(true) {
        for snap in &report.snapshots {
            let path = dir.join(format!("solution_{:.6}.vtk", snap.time));
            write_vtk(&path, &mesh, &snap.values, snap.time)?;
        }
        println!("wrote {} VTK snapshot(s) to {}", report.snapshots.len(), dir.display());
    }

    let body = match &report.error_table {
        Some(table) => table.to_csv(),
        None => format!(
            "problem,method,n_dofs,h,tau,t_end\n{},{},{},{},{},{}\n",
            report.problem,
            report.method,
            report.n_dofs,
            format_float(report.h),
            format_float(report.tau),
            format_float(report.t_end),
        ),
    };
    let csv_path = dir.join("report.csv");
    write_csv(&csv_path, cfg.raw(), &body)?;

    println!(
        "solved {} with {} on {} unknowns (h = {:.4e}, tau = {:.4e}, T = {})",
        report.problem, report.method, report.n_dofs, report.h, report.tau, report.t_end
    );
    for (phase, secs) in &report.phase_seconds {
        println!("  {phase}: {secs:.3}s");
    }
    println!("wrote {}", csv_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// dynbc convergence
// ---------------------------------------------------------------------------

fn tau_rule(cfg: &Config) -> Result<TauRule, CliError> {
    let constant = cfg.get_f64("study", "tau_rule_constant")?;
    match cfg.get("study", "tau_rule") {
        None | Some("h_squared_over") => Ok(TauRule::HSquaredOver(constant.unwrap_or(4.0))),
        Some("proportional_to_h") => Ok(TauRule::ProportionalToH(constant.unwrap_or(1.0))),
        Some("fixed") => {
            let tau = cfg.get_f64("integrator", "tau")?.ok_or_else(|| {
                config_err("tau_rule = fixed needs [integrator] tau".into())
            })?;
            Ok(TauRule::Fixed(tau))
        }
        Some(other) => Err(config_err(format!(
            "unknown tau_rule '{other}'; expected h_squared_over, proportional_to_h or fixed"
        ))),
    }
}

/// Check the configured EOC threshold, if any.  Returns exit code 3 when
/// the measured order falls short.
fn check_threshold(cfg: &Config, table: &ErrorTable, default_column: &str) -> CmdResult {
    let Some(min_eoc) = cfg.get_f64("study", "min_eoc")? else {
        return Ok(());
    };
    let column = cfg.get("study", "eoc_column").unwrap_or(default_column);
    let idx = table.column_index(column).ok_or_else(|| {
        config_err(format!(
            "eoc_column '{column}' is not one of the table columns: {}",
            table.columns.join(", ")
        ))
    })?;
    let measure = cfg.get("study", "eoc_measure").unwrap_or("last");
    let eoc = match measure {
        "last" => table.eoc_last(idx),
        "regression" => table.ls_slope(idx),
        other => {
            return Err(config_err(format!(
                "unknown eoc_measure '{other}'; expected last or regression"
            )))
        }
    };
    let Some(eoc) = eoc else {
        println!("threshold skipped: single rung, no EOC");
        return Ok(());
    };
    if eoc < min_eoc {
        return Err(CliError::threshold(format!(
            "EOC({column}, {measure}) = {eoc:.4} fell below the configured minimum {min_eoc}"
        )));
    }
    println!("threshold ok: EOC({column}, {measure}) = {eoc:.4} >= {min_eoc}");
    Ok(())
}

pub fn cmd_convergence(cfg: &Config) -> CmdResult {
    cfg.check_known(KNOWN_KEYS)?;
    let problem = build_problem(cfg)?;
    let method = read_method(cfg)?;
    let kind = cfg.get("study", "kind").unwrap_or("spatial");

    let (table, default_column) = match kind {
        "spatial" => {
            let levels = cfg
                .get_usize_list("mesh", "levels")?
                .ok_or_else(|| config_err("a spatial study needs [mesh] levels".into()))?;
            let mut study = SpatialStudyConfig::new(&levels, method, problem.t_end);
            study.lumping = read_lumping(cfg, method)?;
            study.tau_rule = tau_rule(cfg)?;
            study.startup = read_startup(cfg, &problem)?;
            if let Some(v) = cfg.get_bool("integrator", "linearly_implicit")? {
                study.linearly_implicit = v;
            }
            (spatial_study(&problem, &study)?, "h_combined")
        }
        "temporal" => {
            let n = cfg
                .get_usize("mesh", "n")?
                .ok_or_else(|| config_err("a temporal study needs [mesh] n".into()))?;
            let mesh = build_mesh(problem.domain, n)?;
            let taus = cfg
                .get_f64_list("study", "taus")?
                .ok_or_else(|| config_err("a temporal study needs [study] taus".into()))?;

            let mut study = TemporalStudyConfig::new(&taus, problem.t_end);
            study.lumping = read_lumping(cfg, method)?;
            study.startup = read_startup(cfg, &problem)?;
            if let Some(v) = cfg.get_bool("integrator", "linearly_implicit")? {
                study.linearly_implicit = v;
            }
            if let Some(v) = cfg.get_bool("integrator", "averaged_source")? {
                study.averaged_source = v;
            }
            if let Some(v) = cfg.get_f64("integrator", "solver_tol")? {
                study.solver_tol = v;
            }
            if let Some(v) = cfg.get_f64("integrator", "phi_tol")? {
                study.phi_tol = v;
            }

            let reference = match cfg.get("study", "reference") {
                None | Some("bdf5") => {
                    let smallest = taus.iter().copied().fold(f64::INFINITY, f64::min);
                    let tau_ref = match cfg.get_f64("study", "reference_tau")? {
                        Some(v) => v,
                        None => smallest / 16.0,
                    };
                    ReferenceKind::Bdf5Fine {
                        tau_ref: snap_to_divisor(tau_ref, problem.t_end)?,
                    }
                }
                Some("separable") => {
                    let sigma = cfg.get_f64("study", "sigma")?.ok_or_else(|| {
                        config_err("reference = separable needs [study] sigma".into())
                    })?;
                    ReferenceKind::SeparableExponential { sigma }
                }
                Some(other) => {
                    return Err(config_err(format!(
                        "unknown reference '{other}'; expected bdf5 or separable"
                    )))
                }
            };
            let reference_state =
                temporal_reference(&problem, &mesh, reference, problem.t_end, study.lumping)?;
            (
                temporal_study(&problem, &mesh, method, &study, &reference_state)?,
                "err_m",
            )
        }
        other => {
            return Err(config_err(format!(
                "unknown study kind '{other}'; expected spatial or temporal"
            )))
        }
    };

    let dir = output_dir(cfg)?;
    let csv_path = dir.join("convergence.csv");
    write_csv(&csv_path, cfg.raw(), &table.to_csv())?;
    println!(
        "{kind} study of {} with {} over {} rung(s); wrote {}",
        problem.name,
        method.name(),
        table.rows.len(),
        csv_path.display()
    );
    check_threshold(cfg, &table, default_column)
}

// ---------------------------------------------------------------------------
// dynbc stability
// ---------------------------------------------------------------------------

pub fn cmd_stability(cfg: &Config) -> CmdResult {
    cfg.check_known(KNOWN_KEYS)?;
    let levels = cfg
        .get_usize_list("mesh", "levels")?
        .unwrap_or_else(|| vec![2, 4, 8]);
    let taus = cfg
        .get_f64_list("study", "taus")?
        .unwrap_or_else(|| vec![0.01, 0.1, 1.0, 10.0]);
    let random_systems = cfg.get_usize("study", "random_systems")?.unwrap_or(100);
    if taus.iter().any(|&t| !(t > 0.0)) {
        return Err(config_err("[study] taus must all be positive".into()));
    }

    let mut body = String::from(
        "kind,param,tau,l10_norm,s_tilde_norm,lsl_norm,symmetry_defect,pass\n",
    );
    let mut failures = 0usize;
    let mut push_row = |kind: &str, param: usize, report: &dynbc_core::stability::StabilityReport| {
        body.push_str(&format!(
            "{kind},{param},{},{},{},{},{},{}\n",
            format_float(report.tau),
            format_float(report.l10_norm),
            format_float(report.s_tilde_norm),
            format_float(report.lsl_norm),
            format_float(report.symmetry_defect),
            report.pass
        ));
        if !report.pass {
            failures += 1;
        }
    };

    // Finite-element sweep: unit square, unit coefficients, no surface
    // diffusion, diagonal (fully lumped) mass.
    let coeffs = CoefficientSet::constants(1.0, 1.0, 0.0);
    for &n in &levels {
        let mesh = generate_square_mesh(n)?;
        let system = assemble(&mesh, &coeffs, 0.0, Lumping::Full)?;
        let blocks = BlockSystem::from_assembled(&system)?;
        for &tau in &taus {
            push_row("fem", n, &verify_stability(&blocks, tau)?);
        }
    }

    // Deterministic random block systems.
    for i in 0..random_systems {
        let n0 = 2 + (7 * i + 3) % 29;
        let n1 = 1 + (5 * i + 1) % 17;
        let blocks = BlockSystem::random(n0, n1, i as u64)?;
        for &tau in &taus {
            push_row("random", i, &verify_stability(&blocks, tau)?);
        }
    }
    drop(push_row);

    let dir = output_dir(cfg)?;
    let csv_path = dir.join("stability.csv");
    write_csv(&csv_path, cfg.raw(), &body)?;
    let total = (levels.len() + random_systems) * taus.len();
    println!("checked {total} propagators; wrote {}", csv_path.display());
    if failures > 0 {
        return Err(CliError::threshold(format!(
            "{failures} of {total} stability checks exceeded the 1 + 1e-10 norm bound"
        )));
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// dynbc list-problems
// ---------------------------------------------------------------------------

pub fn list_problems() {
    for name in BUILTIN_NAMES {
        let problem = builtin(name).expect("every listed problem constructs");
        let domain = format!("{:?}", problem.domain).to_lowercase();
        let kind = if problem.is_linear() {
            "linear"
        } else {
            "semi-linear"
        };
        println!("{name}  ({domain}, {kind}, T = {})", problem.t_end);
    }
}
