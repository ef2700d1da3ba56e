//! Release gate for the solver library.
//!
//! Thirteen numbered criteria, each compressed into a single pass/fail
//! assertion at the end of its test.  Thresholds are frozen here on
//! purpose: a change that moves one of these numbers is a change in the
//! numerics, not in the test.  Runs in seconds in release mode; use
//! `cargo test --release -p dynbc-core --test acceptance`.

use std::sync::Arc;
use std::time::Instant;

use dynbc_core::assembly::{assemble, CoefficientSet, Lumping};
use dynbc_core::integrators::{run, IntegratorConfig, Method, SnapshotPlan, Startup};
use dynbc_core::mesh::{generate_disk_mesh, generate_square_mesh};
use dynbc_core::problems::{
    build_mesh, builtin, disk_harmonic_exact, linear_trajectory_square, square_cosine_exact,
    with_manufactured_solution, SourcePair, BUILTIN_NAMES,
};
use dynbc_core::report::ErrorTable;
use dynbc_core::ritz;
use dynbc_core::stability::{verify_stability, BlockSystem};
use dynbc_core::study::{
    ritz_study, spatial_study, temporal_reference, temporal_study, ReferenceKind,
    SpatialStudyConfig, TemporalStudyConfig,
};

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Mesh ladder used by every spatial study below.
const SPATIAL_LEVELS: [usize; 4] = [4, 8, 16, 32];
/// Step ladder used by the temporal studies (criteria 5 and 7).
const TEMPORAL_TAUS: [f64; 5] = [0.1, 0.05, 0.025, 0.0125, 0.00625];

fn eoc_last(table: &ErrorTable, column: &str) -> f64 {
    let idx = table
        .column_index(column)
        .unwrap_or_else(|| panic!("table has no column '{column}'"));
    table
        .eoc_last(idx)
        .expect("ladder has at least two rungs, so the last EOC exists")
}

/// Least-squares EOC across the whole ladder.  Used for the disk studies:
/// the disk meshes at different resolutions are generated independently
/// rather than by nested refinement, so the error constant fluctuates a few
/// percent from level to level and pairwise EOCs oscillate around the true
/// slope; the regression over all rungs is the faithful estimate.
fn eoc_regression(table: &ErrorTable, column: &str) -> f64 {
    let idx = table
        .column_index(column)
        .unwrap_or_else(|| panic!("table has no column '{column}'"));
    table
        .ls_slope(idx)
        .expect("ladder has at least two rungs, so the regression slope exists")
}

/// Criterion 1 — bulk–surface coupling on the square: second-order BDF with
/// the diffusive step-size coupling `τ = h²/4` reaches the full spatial rate
/// in the combined `L²` norm and at least first order in energy, within a
/// fixed wall-clock budget.
#[test]
fn criterion_01_coupled_square_bdf2_rates() {
    let problem = builtin("coupled_square").unwrap();
    let cfg = SpatialStudyConfig::new(&SPATIAL_LEVELS, Method::Bdf(2), 0.25);
    let start = Instant::now();
    let table = spatial_study(&problem, &cfg).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let eoc_m = eoc_last(&table, "h_combined");
    let eoc_e = eoc_last(&table, "energy");
    assert!(
        eoc_m >= 1.85 && eoc_e >= 0.9 && secs <= 60.0,
        "criterion 1 failed: EOC(L2 bulk+surface) = {eoc_m:.3} (need >= 1.85), \
         EOC(energy) = {eoc_e:.3} (need >= 0.9), runtime = {secs:.1}s (need <= 60s)\n{}",
        table.to_csv()
    );
}

/// The disk problem with the surface-diffusion coefficient switched off:
/// a pure dynamic (Wentzell) boundary condition with a harmonic bulk field.
fn wentzell_disk_problem() -> dynbc_core::problems::Problem {
    let mut base = builtin("coupled_disk").unwrap();
    base.coeffs = CoefficientSet::constants(1.0, 1.0, 0.0);
    with_manufactured_solution(&base, disk_harmonic_exact()).unwrap()
}

/// Criterion 2 — dynamic boundary condition on the disk (β = 0): the bulk
/// `L²` error converges at second order and the boundary trace error,
/// measured in the discrete `H^{-1/2}` surrogate norm, at order ≥ 1.7.
#[test]
fn criterion_02_wentzell_disk_rates() {
    let problem = wentzell_disk_problem();
    let cfg = SpatialStudyConfig::new(&SPATIAL_LEVELS, Method::Bdf(2), 0.25);
    let table = spatial_study(&problem, &cfg).unwrap();
    let eoc_bulk = eoc_regression(&table, "l2_bulk");
    let eoc_trace = eoc_regression(&table, "hminus_half_surf");
    assert!(
        eoc_bulk >= 1.85 && eoc_trace >= 1.7,
        "criterion 2 failed: regression EOC(L2 bulk) = {eoc_bulk:.3} (need >= 1.85), \
         regression EOC(H^-1/2 trace) = {eoc_trace:.3} (need >= 1.7)\n{}",
        table.to_csv()
    );
}

/// Criterion 3 — mass lumping: with surface diffusion (β > 0) full lumping
/// keeps the criterion-1 rates; without it (β = 0) full lumping degrades the
/// combined-norm order towards one, and lumping the bulk only recovers the
/// second-order bulk rate.
#[test]
fn criterion_03_lumping_effects() {
    let coupled = builtin("coupled_square").unwrap();
    let wentzell = wentzell_disk_problem();

    let mut cfg = SpatialStudyConfig::new(&SPATIAL_LEVELS, Method::Bdf(2), 0.25);
    cfg.lumping = Lumping::Full;
    let table_beta = spatial_study(&coupled, &cfg).unwrap();
    let table_full = spatial_study(&wentzell, &cfg).unwrap();
    cfg.lumping = Lumping::BulkOnly;
    let table_bulk = spatial_study(&wentzell, &cfg).unwrap();

    let eoc_beta = eoc_last(&table_beta, "h_combined");
    let eoc_beta_energy = eoc_last(&table_beta, "energy");
    let eoc_full = eoc_regression(&table_full, "h_combined");
    let eoc_recovered = eoc_regression(&table_bulk, "l2_bulk");
    assert!(
        eoc_beta >= 1.85 && eoc_beta_energy >= 0.9 && eoc_full >= 0.9 && eoc_recovered >= 1.85,
        "criterion 3 failed: full lumping with beta>0: EOC(L2) = {eoc_beta:.3} \
         (need >= 1.85), EOC(energy) = {eoc_beta_energy:.3} (need >= 0.9); \
         full lumping with beta=0: regression EOC(L2) = {eoc_full:.3} (need >= 0.9); \
         bulk-only lumping with beta=0: regression EOC(L2 bulk) = {eoc_recovered:.3} (need >= 1.85)\n\
         beta>0 full:\n{}\nbeta=0 full:\n{}\nbeta=0 bulk-only:\n{}",
        table_beta.to_csv(),
        table_full.to_csv(),
        table_bulk.to_csv()
    );
}

/// Criterion 4 — time-dependent coefficients: the non-autonomous square
/// problem keeps second order in the combined `L²` norm and at least first
/// order in energy.
#[test]
fn criterion_04_nonautonomous_rates() {
    let problem = builtin("nonauto_square").unwrap();
    let cfg = SpatialStudyConfig::new(&SPATIAL_LEVELS, Method::Bdf(2), 0.25);
    let table = spatial_study(&problem, &cfg).unwrap();
    let eoc_m = eoc_last(&table, "h_combined");
    let eoc_e = eoc_last(&table, "energy");
    assert!(
        eoc_m >= 1.85 && eoc_e >= 0.9,
        "criterion 4 failed: EOC(L2 bulk+surface) = {eoc_m:.3} (need >= 1.85), \
         EOC(energy) = {eoc_e:.3} (need >= 0.9)\n{}",
        table.to_csv()
    );
}

/// Criterion 5 — temporal orders: BDF 1–5 on a fixed mesh, started from
/// projections of the exact solution, each reproduce their classical order
/// within ±0.2 against a fine reference trajectory, within a fixed
/// wall-clock budget.  The trajectory is spatially linear, so the spatial
/// and temporal discretisation errors do not mix.
#[test]
fn criterion_05_bdf_temporal_orders() {
    let problem = linear_trajectory_square();
    let mesh = generate_square_mesh(32).unwrap();
    let t_end = 1.0;
    let start = Instant::now();
    let reference = temporal_reference(
        &problem,
        &mesh,
        ReferenceKind::Bdf5Fine { tau_ref: 1.0 / 2560.0 },
        t_end,
        Lumping::Consistent,
    )
    .unwrap();
    let cfg = TemporalStudyConfig::new(&TEMPORAL_TAUS, t_end);
    let mut eocs = Vec::new();
    for k in 1..=5 {
        let table = temporal_study(&problem, &mesh, Method::Bdf(k), &cfg, &reference).unwrap();
        eocs.push(eoc_last(&table, "err_m"));
    }
    let secs = start.elapsed().as_secs_f64();
    let all_match = eocs
        .iter()
        .enumerate()
        .all(|(i, &eoc)| (eoc - (i + 1) as f64).abs() <= 0.2);
    assert!(
        all_match && secs <= 120.0,
        "criterion 5 failed: BDF1..5 EOCs = {:?} (need within 0.2 of 1..5), \
         runtime = {secs:.1}s (need <= 120s)",
        eocs.iter().map(|e| format!("{e:.3}")).collect::<Vec<_>>()
    );
}

/// Criterion 6 — exponential Euler on an autonomous linear problem with a
/// time-constant source is exact up to the Krylov tolerance: the error at
/// `T = 1` stays below `100 ×` the φ-tolerance for both a huge and a small
/// step size.
#[test]
fn criterion_06_exp_euler_exactness() {
    let mut problem = builtin("coupled_square").unwrap();
    problem.exact = None;
    problem.source = Some(SourcePair {
        f_bulk: Arc::new(|x, _| 1.0 + x[0]),
        f_surf: Arc::new(|x, _| 0.5 - x[1]),
    });

    let mesh = generate_square_mesh(16).unwrap();
    let reference = temporal_reference(
        &problem,
        &mesh,
        ReferenceKind::SeparableExponential { sigma: 0.0 },
        1.0,
        Lumping::Full,
    )
    .unwrap();
    let system = assemble(&mesh, &problem.coeffs, 0.0, Lumping::Full).unwrap();

    let phi_tol = 1e-10;
    let mut errors = Vec::new();
    for tau in [0.5, 0.1] {
        let mut cfg = IntegratorConfig::new(Method::ExpEuler, tau, 1.0);
        cfg.lumping = Lumping::Full;
        cfg.phi_tol = phi_tol;
        let report = run(&problem, &mesh, &cfg).unwrap();
        let diff: Vec<f64> = report
            .final_state()
            .values
            .iter()
            .zip(&reference)
            .map(|(a, b)| a - b)
            .collect();
        errors.push(system.m_norm(&diff));
    }
    assert!(
        errors.iter().all(|&e| e <= 100.0 * phi_tol),
        "criterion 6 failed: exp-Euler errors at T=1 for tau = 0.5, 0.1 are {:?} \
         (each must be <= {:.1e})",
        errors.iter().map(|e| format!("{e:.3e}")).collect::<Vec<_>>(),
        100.0 * phi_tol
    );
}

/// Criterion 7 — splitting orders: both Strang variants (force and
/// component) converge at second order, both Lie variants at first order,
/// on the criterion-5 step ladder against the exact trajectory of the
/// lumped semi-discrete system.  The splitting error constants grow with
/// the stiffness (∝ h⁻²), so the fixed mesh is chosen coarse enough that
/// the given step ladder sits inside the asymptotic regime.
#[test]
fn criterion_07_splitting_orders() {
    let problem = builtin("coupled_square").unwrap();
    let mesh = generate_square_mesh(8).unwrap();
    let t_end = 1.0;
    let reference = temporal_reference(
        &problem,
        &mesh,
        ReferenceKind::SeparableExponential { sigma: 1.0 },
        t_end,
        Lumping::Full,
    )
    .unwrap();
    let mut cfg = TemporalStudyConfig::new(&TEMPORAL_TAUS, t_end);
    cfg.lumping = Lumping::Full;

    let eoc = |method: Method| -> f64 {
        let table = temporal_study(&problem, &mesh, method, &cfg, &reference).unwrap();
        eoc_last(&table, "err_m")
    };
    let force_strang = eoc(Method::SplitForceStrang);
    let comp_strang = eoc(Method::SplitCompStrang);
    let force_lie = eoc(Method::SplitForceLie);
    let comp_lie = eoc(Method::SplitCompLie);

    let lie_ok = |e: f64| (0.8..=1.3).contains(&e);
    assert!(
        force_strang >= 1.8 && comp_strang >= 1.8 && lie_ok(force_lie) && lie_ok(comp_lie),
        "criterion 7 failed: EOC(Strang force) = {force_strang:.3}, \
         EOC(Strang component) = {comp_strang:.3} (both need >= 1.8); \
         EOC(Lie force) = {force_lie:.3}, EOC(Lie component) = {comp_lie:.3} \
         (both need to lie in [0.8, 1.3])"
    );
}

/// Criterion 8 — unconditional contractivity of the force splitting: with
/// the source switched off, the `M`-norm of the iterates never grows, for
/// step sizes spanning three orders of magnitude on three meshes.
#[test]
fn criterion_08_splitting_contractivity() {
    let mut problem = builtin("coupled_square").unwrap();
    problem.exact = None;
    problem.source = None;

    let mut violations = Vec::new();
    for n in [4usize, 8, 16] {
        let mesh = generate_square_mesh(n).unwrap();
        let system = assemble(&mesh, &problem.coeffs, 0.0, Lumping::Full).unwrap();
        for tau in [0.01, 0.1, 1.0, 10.0] {
            for method in [Method::SplitForceLie, Method::SplitForceStrang] {
                let mut cfg = IntegratorConfig::new(method, tau, 5.0 * tau);
                cfg.lumping = Lumping::Full;
                cfg.snapshots = SnapshotPlan::EveryStep;
                let report = run(&problem, &mesh, &cfg).unwrap();
                let mut prev = f64::INFINITY;
                for snap in &report.snapshots {
                    let norm = system.m_norm(&snap.values);
                    if norm > prev * (1.0 + 1e-10) {
                        violations.push(format!(
                            "n={n} tau={tau} {}: |u|_M grew from {prev:.12e} to {norm:.12e} \
                             at t={:.3}",
                            method.name(),
                            snap.time
                        ));
                    }
                    prev = norm;
                }
            }
        }
    }
    assert!(
        violations.is_empty(),
        "criterion 8 failed: force-splitting M-norm grew in {} case(s):\n{}",
        violations.len(),
        violations.join("\n")
    );
}

/// Criterion 9 — stability laboratory: the similarity-transformed Strang
/// propagator and the sandwiched coupling block have 2-norm at most
/// `1 + 1e-10` on the full finite-element sweep and on one hundred random
/// block systems.
#[test]
fn criterion_09_stability_lemma() {
    let mut max_lsl: f64 = 0.0;
    let mut max_l10: f64 = 0.0;
    let mut record = |report: &dynbc_core::stability::StabilityReport| {
        max_lsl = max_lsl.max(report.lsl_norm);
        max_l10 = max_l10.max(report.l10_norm);
    };

    // Finite-element sweep: unit square, unit coefficients, no surface
    // diffusion, fully lumped mass.
    let coeffs = CoefficientSet::constants(1.0, 1.0, 0.0);
    for n in [2usize, 4, 8] {
        let mesh = generate_square_mesh(n).unwrap();
        let system = assemble(&mesh, &coeffs, 0.0, Lumping::Full).unwrap();
        let blocks = BlockSystem::from_assembled(&system).unwrap();
        for tau in [0.01, 0.1, 1.0, 10.0] {
            record(&verify_stability(&blocks, tau).unwrap());
        }
    }

    // One hundred random symmetric positive definite block systems with
    // deterministic sizes and seeds, each swept over five step sizes.
    for i in 0..100u64 {
        let n0 = 2 + (7 * i as usize + 3) % 29;
        let n1 = 1 + (5 * i as usize + 1) % 17;
        let blocks = BlockSystem::random(n0, n1, i).unwrap();
        for tau in [1e-3, 1e-2, 0.1, 1.0, 10.0] {
            record(&verify_stability(&blocks, tau).unwrap());
        }
    }

    assert!(
        max_lsl <= 1.0 + 1e-10 && max_l10 <= 1.0 + 1e-10,
        "criterion 9 failed: max |L S L^-1|_2 = {max_lsl:.12} and \
         max |L10|_2 = {max_l10:.12} (both need <= 1 + 1e-10)"
    );
}

/// Criterion 10 — Ritz map: the projection is energy-orthogonal to the
/// discrete space at solver accuracy, and its error converges at first
/// order in energy and second order in the combined `L²` norm.
#[test]
fn criterion_10_ritz_map() {
    let problem = builtin("coupled_square").unwrap();
    let exact = problem.exact.as_ref().unwrap();
    let mesh = generate_square_mesh(16).unwrap();
    let t = 0.4;
    let system = assemble(&mesh, &problem.coeffs, t, Lumping::Consistent).unwrap();
    let shift = ritz::suggested_shift(&mesh, &problem.coeffs, t);
    let u_h = ritz::ritz_project(&mesh, &problem.coeffs, &system, t, exact, shift).unwrap();
    let residual =
        ritz::a_orthogonality_residual(&mesh, &problem.coeffs, &system, t, exact, shift, &u_h)
            .unwrap();

    let table = ritz_study(&problem, &SPATIAL_LEVELS, 0.5).unwrap();
    let eoc_energy = eoc_last(&table, "energy");
    let eoc_l2 = eoc_last(&table, "h_combined");

    assert!(
        residual <= 1e-10
            && (0.85..=1.15).contains(&eoc_energy)
            && (1.85..=2.4).contains(&eoc_l2),
        "criterion 10 failed: a-orthogonality residual = {residual:.3e} (need <= 1e-10), \
         EOC(energy) = {eoc_energy:.3} (need in [0.85, 1.15]), \
         EOC(L2 combined) = {eoc_l2:.3} (need in [1.85, 2.4])\n{}",
        table.to_csv()
    );
}

/// Criterion 11 — assembly invariants on every built-in problem, on the
/// base mesh and four red refinements: mass and stiffness are symmetric,
/// both bulk and surface stiffness parts annihilate constants, the mass of
/// the constant one equals `|Ω| + μ(t)·|Γ|`, and (on meshes small enough
/// for a dense check) the mass matrix is positive definite and the
/// stiffness positive semi-definite.
#[test]
fn criterion_11_assembly_invariants() {
    let t = 0.3;
    let mut violations = Vec::new();

    for name in BUILTIN_NAMES {
        let problem = builtin(name).unwrap();
        let mut mesh = build_mesh(problem.domain, 4).unwrap();
        for level in 0..5 {
            let sys = assemble(&mesh, &problem.coeffs, t, Lumping::Consistent).unwrap();
            let n = sys.n();
            let mut complain = |what: String| violations.push(format!("{name} level {level}: {what}"));

            // Symmetry, measured entrywise through a transpose map.
            let sym_defect = |m: &dynbc_core::linalg::SparseMatrix| -> (f64, f64) {
                let mut map = std::collections::HashMap::new();
                let mut max_abs: f64 = 0.0;
                for (i, j, v) in m.entries() {
                    map.insert((i, j), v);
                    max_abs = max_abs.max(v.abs());
                }
                let mut defect: f64 = 0.0;
                for (&(i, j), &v) in &map {
                    let vt = map.get(&(j, i)).copied().unwrap_or(0.0);
                    defect = defect.max((v - vt).abs());
                }
                (defect, max_abs)
            };
            let (m_defect, _) = sym_defect(&sys.mass);
            if m_defect != 0.0 {
                complain(format!("mass symmetry defect {m_defect:.3e} (need exactly 0)"));
            }
            let (a_defect, a_max) = sym_defect(&sys.stiffness);
            if a_defect > 1e-14 * a_max {
                complain(format!(
                    "stiffness symmetry defect {a_defect:.3e} exceeds 1e-14 * {a_max:.3e}"
                ));
            }

            // Both stiffness parts annihilate the constant vector.
            let ones = vec![1.0; n];
            for (label, part) in [("bulk", &sys.k_bulk), ("surface", &sys.k_surf)] {
                let image = part.matvec(&ones);
                let worst = image.iter().fold(0.0f64, |a, v| a.max(v.abs()));
                let scale = part
                    .entries()
                    .fold(0.0f64, |a, (_, _, v)| a.max(v.abs()))
                    .max(1e-300);
                if worst > 1e-13 * scale {
                    complain(format!(
                        "{label} stiffness kernel defect {worst:.3e} exceeds 1e-13 * {scale:.3e}"
                    ));
                }
            }

            // Mass of the constant one: area plus mu(t) times perimeter
            // (all built-in densities are constant in space).
            let mu = problem.coeffs.mu.eval([0.5, 0.5], t);
            let expected = mesh.area() + mu * mesh.perimeter();
            let got = sys.m_product(&ones, &ones);
            if (got - expected).abs() > 1e-12 * expected {
                complain(format!(
                    "1^T M 1 = {got:.15e}, expected area + mu*perimeter = {expected:.15e}"
                ));
            }

            // Dense definiteness check on small meshes.
            if n <= 500 {
                let eig_min = |m: &dynbc_core::linalg::SparseMatrix| -> f64 {
                    let d = m.to_dense();
                    // symmetrise to shield the eigensolver from 1e-16 noise
                    let dense = 0.5 * (&d + d.transpose());
                    nalgebra::SymmetricEigen::new(dense)
                        .eigenvalues
                        .iter()
                        .fold(f64::INFINITY, |a, &v| a.min(v))
                };
                let m_min = eig_min(&sys.mass);
                if m_min <= 0.0 {
                    complain(format!("mass min eigenvalue {m_min:.3e} (need > 0)"));
                }
                // With a strictly positive surface reaction the stiffness is
                // definite; with kappa = 0 it is only semi-definite
                // (constants are in its kernel).
                let kappa_min = mesh
                    .boundary_loop()
                    .iter()
                    .map(|&i| problem.coeffs.kappa.eval(mesh.vertices[i], t))
                    .fold(f64::INFINITY, f64::min);
                let a_min = eig_min(&sys.stiffness);
                if kappa_min > 0.0 && a_min <= 0.0 {
                    complain(format!(
                        "stiffness min eigenvalue {a_min:.3e} (need > 0 for kappa > 0)"
                    ));
                } else if a_min < -1e-12 * a_max {
                    complain(format!(
                        "stiffness min eigenvalue {a_min:.3e} below -1e-12 * {a_max:.3e}"
                    ));
                }
            }

            if level < 4 {
                mesh = mesh.refine();
            }
        }
    }

    assert!(
        violations.is_empty(),
        "criterion 11 failed on {} invariant(s):\n{}",
        violations.len(),
        violations.join("\n")
    );
}

/// Criterion 12 — semilinear problems: the double-well gradient flow is
/// energy-diminishing step by step under implicit Euler, and a manufactured
/// semilinear problem converges at second order in space under the
/// diffusive step-size coupling.
#[test]
fn criterion_12_semilinear() {
    // (a) Energy decay of the gradient flow.
    let flow = builtin("allen_cahn_square").unwrap();
    let mesh = build_mesh(flow.domain, 16).unwrap();
    let mut cfg = IntegratorConfig::new(Method::Bdf(1), 1e-3, 0.5);
    cfg.lumping = Lumping::Full;
    cfg.startup = Startup::Bootstrap;
    cfg.snapshots = SnapshotPlan::EveryStep;
    let report = run(&flow, &mesh, &cfg).unwrap();
    let system = assemble(&mesh, &flow.coeffs, 0.0, Lumping::Full).unwrap();
    let mut energy_ok = true;
    let mut energy_msg = String::new();
    let mut prev = f64::INFINITY;
    for snap in &report.snapshots {
        let e = ritz::discrete_energy(&snap.values, &system, flow.nonlinearity.as_ref());
        if e > prev + 1e-12 * (1.0 + prev.abs()) {
            energy_ok = false;
            energy_msg = format!("energy grew from {prev:.15e} to {e:.15e} at t = {:.4}", snap.time);
            break;
        }
        prev = e;
    }

    // (b) Spatial order of a manufactured semilinear problem.
    let manufactured =
        with_manufactured_solution(&flow, square_cosine_exact()).unwrap();
    let cfg = SpatialStudyConfig::new(&SPATIAL_LEVELS, Method::Bdf(2), 0.25);
    let table = spatial_study(&manufactured, &cfg).unwrap();
    let eoc_m = eoc_last(&table, "h_combined");

    assert!(
        energy_ok && eoc_m >= 1.8,
        "criterion 12 failed: energy decay: {} ; EOC(L2 bulk+surface) = {eoc_m:.3} \
         (need >= 1.8)\n{}",
        if energy_ok { "ok".to_string() } else { energy_msg },
        table.to_csv()
    );
}

/// Criterion 13 — lumping quadrature error: the bilinear error form of mass
/// lumping, `E(v, w) = v^T (M_consistent - M_lumped) w`, is bounded by a
/// mesh-independent constant times `h² |v|_A |w|_A` with surface diffusion
/// present.  The constant and its level-to-level growth are frozen from an
/// oracle run of this very experiment.
#[test]
fn criterion_13_lumping_quadrature_bound() {
    let coeffs = CoefficientSet::constants(1.0, 1.0, 1.0);
    let mut rng = ChaCha8Rng::seed_from_u64(1357);
    let mut level_maxima = Vec::new();

    for base in [
        generate_square_mesh(8).unwrap(),
        generate_disk_mesh(32).unwrap(),
    ] {
        let mut mesh = base;
        let mut family = Vec::new();
        for level in 0..3 {
            let sys_c = assemble(&mesh, &coeffs, 0.0, Lumping::Consistent).unwrap();
            let sys_l = sys_c.lump(Lumping::Full);
            let n = sys_c.n();
            let h2 = mesh.h().powi(2);
            let mut worst: f64 = 0.0;
            for _ in 0..50 {
                let v: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let w: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
                let quad_err = sys_c.m_product(&v, &w) - sys_l.m_product(&v, &w);
                let va = sys_c.a_product(&v, &v).max(0.0).sqrt();
                let wa = sys_c.a_product(&w, &w).max(0.0).sqrt();
                worst = worst.max(quad_err.abs() / (h2 * va * wa));
            }
            family.push(worst);
            if level < 2 {
                mesh = mesh.refine();
            }
        }
        level_maxima.push(family);
    }

    let global_max = level_maxima
        .iter()
        .flatten()
        .fold(0.0f64, |a, &v| a.max(v));
    // Frozen from the oracle run of this experiment: the measured maxima are
    // 0.033 (square) and 0.024 (disk) on the coarsest level and decrease
    // under refinement.
    let growth_ok = level_maxima
        .iter()
        .all(|family| family.windows(2).all(|w| w[1] <= 1.5 * w[0].max(1e-3)));
    assert!(
        global_max <= 0.05 && growth_ok,
        "criterion 13 failed: max |E(v,w)| / (h^2 |v|_A |w|_A) = {global_max:.4} \
         (frozen bound 0.05), per-family level maxima = {level_maxima:?} \
         (allowed level-to-level growth 1.5x)"
    );
}
