//! Convergence-study drivers: spatial mesh-refinement ladders and temporal
//! step-size ladders with a shared notion of reference solutions.
//!
//! Both the library's verification tests and the command-line harness run
//! studies through this module so that thresholds are checked against the
//! exact same numbers that get written to disk.

use std::collections::VecDeque;
use std::sync::Mutex;

use crate::assembly::{assemble, assemble_load, Lumping};
use crate::error::{Error, Result};
use crate::integrators::{run, IntegratorConfig, Method, SnapshotPlan, Startup};
use crate::linalg::sym_scale;
use crate::mesh::Mesh;
use crate::problems::{build_mesh, Problem};
use crate::report::ErrorTable;
use crate::ritz;

/// How the time step is tied to the mesh width on a spatial ladder.
#[derive(Clone, Copy, Debug)]
pub enum TauRule {
    /// The same `τ` on every rung.
    Fixed(f64),
    /// `τ ≈ h²/c` (then snapped to divide the horizon).
    HSquaredOver(f64),
    /// `τ ≈ h/c` (then snapped to divide the horizon).
    ProportionalToH(f64),
}

/// Largest `τ' ≤ τ` that divides `t_end` exactly: `t_end / ceil(t_end/τ)`.
pub fn snap_to_divisor(tau: f64, t_end: f64) -> Result<f64> {
    if !(tau > 0.0) || !(t_end > 0.0) {
        return Err(Error::invalid("snap_to_divisor needs tau > 0 and t_end > 0"));
    }
    let n = (t_end / tau).ceil().max(1.0);
    Ok(t_end / n)
}

impl TauRule {
    pub fn tau_for(&self, h: f64, t_end: f64) -> Result<f64> {
        let raw = match self {
            TauRule::Fixed(tau) => *tau,
            TauRule::HSquaredOver(c) => h * h / c,
            TauRule::ProportionalToH(c) => h / c,
        };
        snap_to_divisor(raw, t_end)
    }
}

/// Thread cap for ladder parallelism: the `DYNBC_THREADS` environment
/// variable when set (minimum 1), otherwise the machine parallelism.
pub fn thread_cap() -> usize {
    match std::env::var("DYNBC_THREADS") {
        Ok(s) => s.trim().parse::<usize>().ok().filter(|&n| n >= 1).unwrap_or(1),
        Err(_) => std::thread::available_parallelism().map(|n| n.get()).unwrap_or(1),
    }
}

#[derive(Clone, Debug)]
pub struct SpatialStudyConfig {
    /// Mesh parameters, one per rung, strictly increasing.
    pub levels: Vec<usize>,
    pub method: Method,
    pub lumping: Lumping,
    pub tau_rule: TauRule,
    pub startup: Startup,
    pub linearly_implicit: bool,
    pub t_end: f64,
}

impl SpatialStudyConfig {
    pub fn new(levels: &[usize], method: Method, t_end: f64) -> Self {
        SpatialStudyConfig {
            levels: levels.to_vec(),
            method,
            lumping: Lumping::Consistent,
            tau_rule: TauRule::HSquaredOver(4.0),
            startup: Startup::ExactRitz,
            linearly_implicit: false,
            t_end,
        }
    }
}

/// Run a mesh-refinement ladder and tabulate the final-time error norms
/// against the mesh width.  Rungs may run concurrently (capped by
/// [`thread_cap`]); the table order and content are deterministic.
pub fn spatial_study(problem: &Problem, cfg: &SpatialStudyConfig) -> Result<ErrorTable> {
    if problem.exact.is_none() {
        return Err(Error::invalid(format!(
            "spatial study needs an exact solution; problem '{}' has none",
            problem.name
        )));
    }
    if cfg.levels.is_empty() {
        return Err(Error::invalid("spatial study needs at least one refinement level"));
    }
    if cfg.levels.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::invalid("refinement levels must be strictly increasing"));
    }

    let run_level = |&level: &usize| -> Result<(f64, Vec<f64>)> {
        let mesh = build_mesh(problem.domain, level)?;
        let tau = cfg.tau_rule.tau_for(mesh.h(), cfg.t_end)?;
        let mut config = IntegratorConfig::new(cfg.method, tau, cfg.t_end);
        config.lumping = cfg.lumping;
        config.startup = cfg.startup;
        config.linearly_implicit = cfg.linearly_implicit;
        let report = run(problem, &mesh, &config)?;
        let errors = report
            .final_errors()
            .ok_or_else(|| Error::invalid("run produced no error table"))?
            .clone();
        Ok((mesh.h(), errors))
    };

    let threads = thread_cap().min(cfg.levels.len()).max(1);
    let mut slots: Vec<Result<(f64, Vec<f64>)>> = Vec::new();
    if threads == 1 {
        for level in &cfg.levels {
            slots.push(run_level(level));
        }
    } else {
        let jobs: Mutex<VecDeque<usize>> = Mutex::new((0..cfg.levels.len()).collect());
        let results: Vec<Mutex<Option<Result<(f64, Vec<f64>)>>>> =
            (0..cfg.levels.len()).map(|_| Mutex::new(None)).collect();
        std::thread::scope(|scope| {
            for _ in 0..threads {
                scope.spawn(|| loop {
                    let job = jobs.lock().unwrap().pop_front();
                    match job {
                        Some(i) => {
                            let out = run_level(&cfg.levels[i]);
                            *results[i].lock().unwrap() = Some(out);
                        }
                        None => break,
                    }
                });
            }
        });
        for slot in results {
            slots.push(slot.into_inner().unwrap().expect("worker finished every job"));
        }
    }

    let mut table = ErrorTable::for_norms("h");
    for slot in slots {
        let (h, errors) = slot?;
        table.push(h, errors)?;
    }
    Ok(table)
}

/// Reference solutions for temporal ladders.
#[derive(Clone, Copy, Debug)]
pub enum ReferenceKind {
    /// A BDF5 run with a much finer step on the same mesh.
    Bdf5Fine { tau_ref: f64 },
    /// Dense eigendecomposition of the fully lumped system, exact for
    /// linear autonomous problems whose load satisfies
    /// `b(t) = e^{−σt} b(0)`.
    SeparableExponential { sigma: f64 },
}

/// Largest system admitted into the dense eigendecomposition reference.
const MAX_DENSE_REFERENCE: usize = 2000;

/// Exact final state of `M u̇ + A u = b(t)`, `b(t) = e^{−σt} b(0)`, via the
/// spectral solution of the symmetrized system: with `y = M^{1/2}u`,
/// `Â = QΛQᵀ` and `z = Qᵀy`, each mode obeys
/// `z_k(t) = e^{−λ_k t} z_k(0) + ĉ_k (e^{−σt} − e^{−λ_k t})/(λ_k − σ)`
/// (limit `ĉ_k t e^{−λ_k t}` at `λ_k = σ`).
pub fn separable_exponential_reference(
    problem: &Problem,
    mesh: &Mesh,
    sigma: f64,
    t_end: f64,
) -> Result<Vec<f64>> {
    if problem.nonlinearity.is_some() {
        return Err(Error::invalid("dense reference supports linear problems only"));
    }
    if !problem.coeffs.constant_in_time() {
        return Err(Error::invalid("dense reference needs time-constant coefficients"));
    }
    let sys = assemble(mesh, &problem.coeffs, 0.0, Lumping::Full)?;
    let n = sys.n();
    if n > MAX_DENSE_REFERENCE {
        return Err(Error::SizeLimit(format!(
            "dense reference supports at most {MAX_DENSE_REFERENCE} degrees of freedom, got {n}"
        )));
    }
    let d = sys
        .mass_diagonal()
        .expect("full lumping produces a diagonal mass matrix");
    let d_sqrt: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();
    let load_at = |t: f64| -> Vec<f64> {
        match &problem.source {
            Some(src) => assemble_load(
                mesh,
                &problem.coeffs,
                t,
                src.f_bulk.as_ref(),
                src.f_surf.as_ref(),
                Lumping::Full,
            ),
            None => vec![0.0; n],
        }
    };
    // The separability premise is checked, not assumed: compare b at two
    // times against the claimed exponential profile.
    let b0 = load_at(0.0);
    let b_probe = load_at(0.5 * t_end);
    let factor = (-sigma * 0.5 * t_end).exp();
    let scale = b0.iter().map(|v| v.abs()).fold(0.0f64, f64::max).max(1e-300);
    for i in 0..n {
        if (b_probe[i] - factor * b0[i]).abs() > 1e-10 * scale {
            return Err(Error::invalid(format!(
                "source is not separable with rate sigma = {sigma}: \
                 component {i} deviates by {:.3e}",
                (b_probe[i] - factor * b0[i]).abs()
            )));
        }
    }

    let a_hat = sym_scale(&d, &sys.stiffness)?.to_dense();
    let sym = (&a_hat + a_hat.transpose()) * 0.5;
    let eig = nalgebra::SymmetricEigen::new(sym);
    let u0 = problem.initial_values(mesh);
    let y0 = nalgebra::DVector::from_iterator(n, u0.iter().zip(&d_sqrt).map(|(u, s)| u * s));
    let c_hat = nalgebra::DVector::from_iterator(n, b0.iter().zip(&d_sqrt).map(|(b, s)| b / s));
    let z0 = eig.eigenvectors.transpose() * y0;
    let cz = eig.eigenvectors.transpose() * c_hat;
    let mut zt = nalgebra::DVector::zeros(n);
    for k in 0..n {
        let lambda = eig.eigenvalues[k];
        let decay = (-lambda * t_end).exp();
        let forced = if (lambda - sigma).abs() > 1e-9 * (1.0 + lambda.abs()) {
            cz[k] * ((-sigma * t_end).exp() - decay) / (lambda - sigma)
        } else {
            cz[k] * t_end * decay
        };
        zt[k] = z0[k] * decay + forced;
    }
    let yt = &eig.eigenvectors * zt;
    Ok((0..n).map(|i| yt[i] / d_sqrt[i]).collect())
}

/// Compute the reference state at `t_end` on the given mesh.
pub fn temporal_reference(
    problem: &Problem,
    mesh: &Mesh,
    reference: ReferenceKind,
    t_end: f64,
    lumping: Lumping,
) -> Result<Vec<f64>> {
    match reference {
        ReferenceKind::Bdf5Fine { tau_ref } => {
            let mut config = IntegratorConfig::new(Method::Bdf(5), tau_ref, t_end);
            config.lumping = lumping;
            config.startup = if problem.exact.is_some() {
                Startup::ExactRitz
            } else {
                Startup::Bootstrap
            };
            config.snapshots = SnapshotPlan::FinalOnly;
            let report = crate::integrators::run_bdf(problem, mesh, &config)?;
            Ok(report.final_state().values.clone())
        }
        ReferenceKind::SeparableExponential { sigma } => {
            separable_exponential_reference(problem, mesh, sigma, t_end)
        }
    }
}

#[derive(Clone, Debug)]
pub struct TemporalStudyConfig {
    /// Step sizes, strictly decreasing.
    pub taus: Vec<f64>,
    pub lumping: Lumping,
    pub startup: Startup,
    pub linearly_implicit: bool,
    pub averaged_source: bool,
    pub t_end: f64,
    /// Tight inner tolerances keep algebraic error below the smallest
    /// temporal error on the ladder.
    pub solver_tol: f64,
    pub phi_tol: f64,
}

impl TemporalStudyConfig {
    pub fn new(taus: &[f64], t_end: f64) -> Self {
        TemporalStudyConfig {
            taus: taus.to_vec(),
            lumping: Lumping::Consistent,
            startup: Startup::ExactRitz,
            linearly_implicit: false,
            averaged_source: false,
            t_end,
            solver_tol: 1e-13,
            phi_tol: 1e-12,
        }
    }
}

/// Run a step-size ladder for one method on a fixed mesh and tabulate the
/// final-time error against `reference_state` in the consistent-mass norm.
/// The table has a single error column `err_m`.
pub fn temporal_study(
    problem: &Problem,
    mesh: &Mesh,
    method: Method,
    cfg: &TemporalStudyConfig,
    reference_state: &[f64],
) -> Result<ErrorTable> {
    if cfg.taus.len() < 2 {
        return Err(Error::invalid("temporal study needs at least two step sizes"));
    }
    if cfg.taus.windows(2).any(|w| w[1] >= w[0]) {
        return Err(Error::invalid("step sizes must be strictly decreasing"));
    }
    if reference_state.len() != mesh.num_vertices() {
        return Err(Error::invalid("reference state has the wrong dimension"));
    }
    let mass_sys = assemble(mesh, &problem.coeffs, cfg.t_end, Lumping::Consistent)?;
    let mut table = ErrorTable::new("tau", &["err_m"]);
    for &tau in &cfg.taus {
        let mut config = IntegratorConfig::new(method, tau, cfg.t_end);
        config.lumping = cfg.lumping;
        config.startup = cfg.startup;
        config.linearly_implicit = cfg.linearly_implicit;
        config.averaged_source = cfg.averaged_source;
        config.solver_tol = cfg.solver_tol;
        config.phi_tol = cfg.phi_tol;
        let report = run(problem, mesh, &config)?;
        let u = &report.final_state().values;
        let diff: Vec<f64> = u
            .iter()
            .zip(reference_state)
            .map(|(a, b)| a - b)
            .collect();
        let err = mass_sys.m_norm(&diff).max(f64::MIN_POSITIVE);
        table.push(tau, vec![err])?;
    }
    Ok(table)
}

/// Ritz-projection convergence ladder: tabulates the energy-norm and
/// combined-L² errors of the Ritz projection of the exact solution at the
/// given time across mesh refinements.
pub fn ritz_study(problem: &Problem, levels: &[usize], t: f64) -> Result<ErrorTable> {
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::invalid("Ritz study needs an exact solution"))?;
    let mut table = ErrorTable::for_norms("h");
    for &level in levels {
        let mesh = build_mesh(problem.domain, level)?;
        let shift = ritz::suggested_shift(&mesh, &problem.coeffs, t);
        let sys = assemble(&mesh, &problem.coeffs, t, Lumping::Consistent)?;
        let r = ritz::ritz_project(&mesh, &problem.coeffs, &sys, t, exact, shift)?;
        let norms = ritz::error_norms(&mesh, &problem.coeffs, t, &r, exact)?;
        table.push_norms(mesh.h(), &norms)?;
    }
    Ok(table)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::generate_square_mesh;
    use crate::problems::builtin;

    #[test]
    fn snap_produces_exact_divisors() {
        let tau = snap_to_divisor(0.3, 1.0).unwrap();
        assert!((tau - 0.25).abs() < 1e-15);
        let tau = snap_to_divisor(0.25, 1.0).unwrap();
        assert!((tau - 0.25).abs() < 1e-15);
        // Snapped value never exceeds the request.
        for raw in [0.013, 0.1, 0.7, 2.0] {
            let tau = snap_to_divisor(raw, 1.0).unwrap();
            assert!(tau <= raw + 1e-15);
            let n = (1.0 / tau).round();
            assert!((n * tau - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn tau_rules() {
        let tau = TauRule::HSquaredOver(4.0).tau_for(0.2, 1.0).unwrap();
        assert!(tau <= 0.01 + 1e-15 && tau > 0.005);
        let tau = TauRule::Fixed(0.125).tau_for(0.5, 1.0).unwrap();
        assert!((tau - 0.125).abs() < 1e-15);
    }

    #[test]
    fn spatial_study_reports_second_order_l2() {
        let problem = builtin("wentzell_square").unwrap();
        let mut cfg = SpatialStudyConfig::new(&[4, 8, 16], Method::Bdf(2), 0.1);
        cfg.tau_rule = TauRule::HSquaredOver(4.0);
        let table = spatial_study(&problem, &cfg).unwrap();
        assert_eq!(table.rows.len(), 3);
        let col = table.column_index("l2_bulk").unwrap();
        let rate = table.eoc_last(col).unwrap();
        assert!(rate > 1.7, "observed L2 rate {rate}");
    }

    #[test]
    fn spatial_study_is_deterministic_across_thread_counts() {
        let problem = builtin("wentzell_square").unwrap();
        let cfg = SpatialStudyConfig::new(&[4, 8], Method::Bdf(1), 0.05);
        std::env::set_var("DYNBC_THREADS", "1");
        let a = spatial_study(&problem, &cfg).unwrap().to_csv();
        std::env::set_var("DYNBC_THREADS", "2");
        let b = spatial_study(&problem, &cfg).unwrap().to_csv();
        std::env::remove_var("DYNBC_THREADS");
        assert_eq!(a, b);
    }

    #[test]
    fn dense_reference_matches_fine_bdf5() {
        // Both references must track the same semidiscrete trajectory, so
        // the BDF5 run self-starts from the interpolated initial value
        // (Ritz startup would inject spatially different starting data).
        let mut problem = builtin("coupled_square").unwrap();
        problem.exact = None;
        let mesh = generate_square_mesh(4).unwrap();
        let t_end = 0.5;
        let dense =
            separable_exponential_reference(&problem, &mesh, 1.0, t_end).unwrap();
        let bdf = temporal_reference(
            &problem,
            &mesh,
            ReferenceKind::Bdf5Fine { tau_ref: 1.0 / 1280.0 },
            t_end,
            Lumping::Full,
        )
        .unwrap();
        let diff = dense
            .iter()
            .zip(&bdf)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        // The bootstrap ramp-up limits the fine run to O(τ_ref²) accuracy.
        assert!(diff < 5e-6, "dense and BDF5 references disagree by {diff}");
    }

    #[test]
    fn dense_reference_rejects_wrong_rate() {
        let problem = builtin("coupled_square").unwrap();
        let mesh = generate_square_mesh(3).unwrap();
        let err = separable_exponential_reference(&problem, &mesh, 2.0, 0.5).unwrap_err();
        assert!(err.to_string().contains("separable"), "{err}");
    }

    #[test]
    fn temporal_study_sees_first_order_for_bdf1() {
        let problem = builtin("coupled_square").unwrap();
        let mesh = generate_square_mesh(4).unwrap();
        let t_end = 0.5;
        let mut cfg = TemporalStudyConfig::new(&[0.1, 0.05, 0.025, 0.0125], t_end);
        cfg.lumping = Lumping::Full;
        // Ladder runs and the dense reference must solve the same ODE, so
        // they start from the same interpolated initial value.
        cfg.startup = Startup::Bootstrap;
        let reference = separable_exponential_reference(&problem, &mesh, 1.0, t_end).unwrap();
        let table = temporal_study(&problem, &mesh, Method::Bdf(1), &cfg, &reference).unwrap();
        let slope = table.ls_slope(0).unwrap();
        assert!((slope - 1.0).abs() < 0.25, "BDF1 slope {slope}");
    }

    #[test]
    fn ritz_study_first_order_energy() {
        let problem = builtin("coupled_square").unwrap();
        let table = ritz_study(&problem, &[4, 8, 16], 0.0).unwrap();
        let energy = table.column_index("energy").unwrap();
        let rate = table.eoc_last(energy).unwrap();
        assert!((rate - 1.0).abs() < 0.25, "energy rate {rate}");
        let l2 = table.column_index("l2_bulk").unwrap();
        let rate2 = table.eoc_last(l2).unwrap();
        assert!(rate2 > 1.7, "L2 rate {rate2}");
    }
}
