//! Time integration: BDF 1–5 (autonomous, non-autonomous and semi-linear),
//! exponential Euler, and bulk–surface Lie/Strang splittings.
//!
//! All methods integrate the spatially discrete system
//!
//! ```text
//! M(t) u̇(t) + A(t) u(t) = b(t) + F(t, u)
//! ```
//!
//! (`F` the weighted semi-linear term, absent for linear problems).
//!
//! * **BDF k**: `(δ₀/τ·M(tⁿ) + A(tⁿ)) uⁿ = b(tⁿ) − M(tⁿ)·(1/τ) Σ_{j=1}^k δ_j u^{n−j}`,
//!   with coefficients from the generating polynomial `Σ_{ℓ=1}^k (1/ℓ)(1−ζ)^ℓ`.
//!   Semi-linear problems solve the nonlinear step equation by Newton's
//!   method with the lumped-diagonal Jacobian
//!   `δ₀/τ·M + A − diag(w_i f′(u_i))`.
//! * **Exponential Euler** (diagonal mass only): on `y = M^{1/2} u` with
//!   `Â = M^{−1/2} A M^{−1/2}`, iterate `y^{n+1} = yⁿ + τ φ(−τÂ)(−Âyⁿ + b̂(tⁿ))`.
//! * **Splittings** (diagonal mass only): each substep solves a linear
//!   constant-inhomogeneity ODE exactly through the closed form
//!   `y(s) = y⁰ + s·φ(−sÂ_s)(ĉ − Â_s y⁰)`.  Force splitting separates the
//!   stiffness into its bulk part `A_Ω` and surface part `A_Γ`; component
//!   splitting partitions the DOFs into interior and boundary blocks with
//!   cross-coupling frozen per substep.  Strang variants take
//!   surface-half / full / surface-half steps; Lie variants one full
//!   surface step followed by one full bulk step.

use std::time::Instant;

use crate::assembly::{
    assemble, assemble_load_parts, evaluate_nonlinearity, AssembledSystem, CoefficientSet,
    Lumping,
};
use crate::error::{Error, Result};
use crate::linalg::{phi1_apply, solve_spd, solve_spd_guess, sym_scale, SparseMatrix};
use crate::mesh::Mesh;
use crate::problems::Problem;
use crate::report::{ErrorTable, RunReport, Snapshot};
use crate::ritz;

/// Time discretisation method.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Method {
    /// k-step BDF, `1 ≤ k ≤ 5`.
    Bdf(usize),
    ExpEuler,
    SplitForceLie,
    SplitForceStrang,
    SplitCompLie,
    SplitCompStrang,
}

impl Method {
    pub fn name(&self) -> String {
        match self {
            Method::Bdf(k) => format!("bdf{k}"),
            Method::ExpEuler => "exp_euler".into(),
            Method::SplitForceLie => "split_force_lie".into(),
            Method::SplitForceStrang => "split_force_strang".into(),
            Method::SplitCompLie => "split_comp_lie".into(),
            Method::SplitCompStrang => "split_comp_strang".into(),
        }
    }

    pub fn parse(s: &str) -> Result<Method> {
        Ok(match s {
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
                return Err(Error::config(format!(
                    "unknown method '{other}'; expected bdf1..bdf5, exp_euler, \
                     split_force_lie, split_force_strang, split_comp_lie, split_comp_strang"
                )))
            }
        })
    }
}

/// How BDF starting values `u⁰, …, u^{k−1}` are produced.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Startup {
    /// Ritz projections of the exact solution (needs an exact bundle).
    ExactRitz,
    /// Self-start: step `n` uses order `min(n, k)`.
    Bootstrap,
}

/// Which states a run records.
#[derive(Clone, Debug, PartialEq)]
pub enum SnapshotPlan {
    FinalOnly,
    EveryStep,
    At(Vec<f64>),
}

#[derive(Clone, Debug)]
pub struct IntegratorConfig {
    pub method: Method,
    pub tau: f64,
    pub t_end: f64,
    pub lumping: Lumping,
    pub startup: Startup,
    pub newton_tol: f64,
    pub newton_max_iter: usize,
    /// Semi-linear steps: replace Newton by one solve with the
    /// extrapolated nonlinearity (linearly implicit variant).
    pub linearly_implicit: bool,
    /// Splittings: use `½(b(t₀)+b(t₁))` instead of `b(t_{1/2})` in the
    /// middle substep.
    pub averaged_source: bool,
    /// Relative tolerance of the inner conjugate-gradient solves.
    pub solver_tol: f64,
    /// Tolerance of Krylov φ/exp applications.
    pub phi_tol: f64,
    pub snapshots: SnapshotPlan,
}

impl IntegratorConfig {
    pub fn new(method: Method, tau: f64, t_end: f64) -> Self {
        IntegratorConfig {
            method,
            tau,
            t_end,
            lumping: Lumping::Consistent,
            startup: Startup::ExactRitz,
            newton_tol: 1e-10,
            newton_max_iter: 25,
            linearly_implicit: false,
            averaged_source: false,
            solver_tol: 1e-11,
            phi_tol: 1e-10,
            snapshots: SnapshotPlan::FinalOnly,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.tau > 0.0) {
            return Err(Error::invalid(format!("tau must be positive, got {}", self.tau)));
        }
        if self.t_end < self.tau {
            return Err(Error::invalid(format!(
                "horizon T = {} must be at least one step tau = {}",
                self.t_end, self.tau
            )));
        }
        if let Method::Bdf(k) = self.method {
            if !(1..=5).contains(&k) {
                return Err(Error::invalid(format!("BDF order must be in 1..=5, got {k}")));
            }
        }
        Ok(())
    }

    /// Number of steps; `tau` must divide `t_end` to within 1e−9 relative.
    pub fn num_steps(&self) -> Result<usize> {
        let n = (self.t_end / self.tau).round();
        if n < 1.0 || (n * self.tau - self.t_end).abs() > 1e-9 * self.t_end.max(1.0) {
            return Err(Error::invalid(format!(
                "tau = {} does not divide the horizon T = {}",
                self.tau, self.t_end
            )));
        }
        Ok(n as usize)
    }
}

/// BDF coefficients `(δ₀, …, δ_k)` from `Σ_{ℓ=1}^k (1/ℓ)(1−ζ)^ℓ`:
/// `δ_j = Σ_{ℓ=max(j,1)}^k (−1)^j C(ℓ,j) / ℓ`.
pub fn bdf_coefficients(k: usize) -> Result<Vec<f64>> {
    if !(1..=5).contains(&k) {
        return Err(Error::invalid(format!("BDF order must be in 1..=5, got {k}")));
    }
    let mut delta = vec![0.0; k + 1];
    for ell in 1..=k {
        let mut binom = 1.0; // C(ell, 0)
        for (j, d) in delta.iter_mut().enumerate().take(ell + 1) {
            let sign = if j % 2 == 0 { 1.0 } else { -1.0 };
            *d += sign * binom / ell as f64;
            binom = binom * (ell - j) as f64 / (j + 1) as f64;
        }
    }
    Ok(delta)
}

/// Assembles (and caches, when coefficients are time-constant) the system
/// matrices at requested times.
pub struct SystemFactory<'a> {
    mesh: &'a Mesh,
    coeffs: &'a CoefficientSet,
    lumping: Lumping,
    autonomous: bool,
    cache: Option<AssembledSystem>,
}

impl<'a> SystemFactory<'a> {
    pub fn new(mesh: &'a Mesh, coeffs: &'a CoefficientSet, lumping: Lumping) -> Self {
        SystemFactory {
            mesh,
            coeffs,
            lumping,
            autonomous: coeffs.constant_in_time(),
            cache: None,
        }
    }

    /// The system at time `t` (reassembled unless time-constant).
    pub fn at(&mut self, t: f64) -> Result<&AssembledSystem> {
        let needs = match &self.cache {
            Some(sys) => !self.autonomous && sys.time != t,
            None => true,
        };
        if needs {
            self.cache = Some(assemble(self.mesh, self.coeffs, t, self.lumping)?);
        }
        Ok(self.cache.as_ref().unwrap())
    }
}

fn add_step_context(e: Error, step: usize, time: f64) -> Error {
    match e {
        Error::SolverFailure {
            context,
            residual,
            iterations,
        } => Error::SolverFailure {
            context: format!("step {step} (t = {time:.6}): {context}"),
            residual,
            iterations,
        },
        other => other,
    }
}

/// One linear BDF advance: solve
/// `(δ₀/τ M + A) u = b − (1/τ) M Σ_{j≥1} δ_j u^{n−j}`,
/// warm-started from the most recent state.
fn bdf_advance(
    lhs: &SparseMatrix,
    mass: &SparseMatrix,
    delta: &[f64],
    tau: f64,
    history: &[Vec<f64>],
    b: &[f64],
    tol: f64,
) -> Result<Vec<f64>> {
    let n = b.len();
    let order = delta.len() - 1;
    let mut hsum = vec![0.0; n];
    for j in 1..=order {
        let uj = &history[j - 1];
        for i in 0..n {
            hsum[i] += delta[j] * uj[i];
        }
    }
    let mh = mass.matvec(&hsum);
    let rhs: Vec<f64> = b.iter().zip(&mh).map(|(bi, mi)| bi - mi / tau).collect();
    solve_spd_guess(lhs, &rhs, &history[0], tol)
}

/// Extrapolation coefficients: `u* = Σ_{j=1}^k (−1)^{j+1} C(k,j) u^{n−j}`.
fn extrapolate(history: &[Vec<f64>], order: usize) -> Vec<f64> {
    let n = history[0].len();
    let mut out = vec![0.0; n];
    let mut binom = order as f64; // C(order, 1)
    for j in 1..=order {
        let sign = if j % 2 == 1 { 1.0 } else { -1.0 };
        let uj = &history[j - 1];
        for i in 0..n {
            out[i] += sign * binom * uj[i];
        }
        binom = binom * (order - j) as f64 / (j + 1) as f64;
    }
    out
}

struct PhaseClock {
    phases: Vec<(String, f64)>,
    current: Option<(String, Instant)>,
}

impl PhaseClock {
    fn new() -> Self {
        PhaseClock {
            phases: Vec::new(),
            current: None,
        }
    }
    fn enter(&mut self, name: &str) {
        self.close();
        self.current = Some((name.to_string(), Instant::now()));
    }
    fn close(&mut self) {
        if let Some((name, start)) = self.current.take() {
            let secs = start.elapsed().as_secs_f64();
            if let Some(entry) = self.phases.iter_mut().find(|(n, _)| *n == name) {
                entry.1 += secs;
            } else {
                self.phases.push((name, secs));
            }
        }
    }
    fn finish(mut self) -> Vec<(String, f64)> {
        self.close();
        self.phases
    }
}

struct SnapshotRecorder {
    plan: Vec<usize>,
    snapshots: Vec<Snapshot>,
    tau: f64,
}

impl SnapshotRecorder {
    fn new(plan: &SnapshotPlan, tau: f64, n_steps: usize) -> Self {
        let mut indices: Vec<usize> = match plan {
            SnapshotPlan::FinalOnly => vec![n_steps],
            SnapshotPlan::EveryStep => (0..=n_steps).collect(),
            SnapshotPlan::At(times) => {
                let mut idx: Vec<usize> = times
                    .iter()
                    .map(|&t| ((t / tau).round().max(0.0) as usize).min(n_steps))
                    .collect();
                idx.push(n_steps);
                idx
            }
        };
        indices.sort_unstable();
        indices.dedup();
        SnapshotRecorder {
            plan: indices,
            snapshots: Vec::new(),
            tau,
        }
    }

    fn record(&mut self, step: usize, u: &[f64]) {
        if self.plan.binary_search(&step).is_ok() {
            self.snapshots.push(Snapshot {
                time: step as f64 * self.tau,
                values: u.to_vec(),
            });
        }
    }
}

fn final_error_table(
    problem: &Problem,
    mesh: &Mesh,
    t: f64,
    u: &[f64],
) -> Result<Option<ErrorTable>> {
    match &problem.exact {
        None => Ok(None),
        Some(exact) => {
            let norms = ritz::error_norms(mesh, &problem.coeffs, t, u, exact)?;
            let mut table = ErrorTable::for_norms("h");
            table.push_norms(mesh.h(), &norms)?;
            Ok(Some(table))
        }
    }
}

/// Run a k-step BDF method.  See the module docs for the scheme; startup
/// values come from Ritz projections of the exact solution
/// ([`Startup::ExactRitz`]) or from self-starting with increasing orders
/// ([`Startup::Bootstrap`]).
pub fn run_bdf(problem: &Problem, mesh: &Mesh, config: &IntegratorConfig) -> Result<RunReport> {
    let k = match config.method {
        Method::Bdf(k) => k,
        m => {
            return Err(Error::invalid(format!(
                "run_bdf called with method {}",
                m.name()
            )))
        }
    };
    config.validate()?;
    let delta_full = bdf_coefficients(k)?;
    let tau = config.tau;
    let n_steps = config.num_steps()?;
    let mut clock = PhaseClock::new();
    let mut recorder = SnapshotRecorder::new(&config.snapshots, tau, n_steps);
    let mut factory = SystemFactory::new(mesh, &problem.coeffs, config.lumping);

    clock.enter("startup");
    // history[0] is the most recent state.
    let mut history: Vec<Vec<f64>> = Vec::new();
    let start_step = match config.startup {
        Startup::ExactRitz => {
            let exact = problem.exact.as_ref().ok_or_else(|| {
                Error::invalid("ExactRitz startup requires a problem with an exact solution")
            })?;
            if n_steps < k {
                return Err(Error::invalid(format!(
                    "horizon provides {n_steps} steps, fewer than the k = {k} starting values"
                )));
            }
            for j in 0..k {
                let t_j = j as f64 * tau;
                let shift = ritz::suggested_shift(mesh, &problem.coeffs, t_j);
                let sys = factory.at(t_j)?;
                let u_j = ritz::ritz_project(mesh, &problem.coeffs, sys, t_j, exact, shift)?;
                history.push(u_j);
            }
            // history currently oldest-first; reverse to newest-first.
            history.reverse();
            k
        }
        Startup::Bootstrap => {
            history.push(problem.initial_values(mesh));
            1
        }
    };
    for (j, u) in history.iter().rev().enumerate() {
        recorder.record(j, u);
    }

    clock.enter("stepping");
    for n in start_step..=n_steps {
        let order = match config.startup {
            Startup::ExactRitz => k,
            Startup::Bootstrap => k.min(n),
        };
        let delta: Vec<f64> = if order == k {
            delta_full.clone()
        } else {
            bdf_coefficients(order)?
        };
        let t_n = n as f64 * tau;
        let sys = factory.at(t_n)?;
        let b = match &problem.source {
            Some(src) => crate::assembly::assemble_load(
                mesh,
                &problem.coeffs,
                t_n,
                src.f_bulk.as_ref(),
                src.f_surf.as_ref(),
                config.lumping,
            ),
            None => vec![0.0; sys.n()],
        };
        let lhs = sys.mass.scaled(delta[0] / tau).add_scaled(&sys.stiffness, 1.0)?;

        let u_next = match &problem.nonlinearity {
            None => bdf_advance(&lhs, &sys.mass, &delta, tau, &history, &b, config.solver_tol)
                .map_err(|e| add_step_context(e, n, t_n))?,
            Some(nl) => {
                // Constant part of the step equation:
                // rhs = b − (1/τ) M Σ_{j≥1} δ_j u^{n−j}.
                let nn = sys.n();
                let mut hsum = vec![0.0; nn];
                for j in 1..=order {
                    for i in 0..nn {
                        hsum[i] += delta[j] * history[j - 1][i];
                    }
                }
                let mh = sys.mass.matvec(&hsum);
                let rhs: Vec<f64> = b.iter().zip(&mh).map(|(bi, mi)| bi - mi / tau).collect();
                let rhs_scale = 1.0 + rhs.iter().map(|v| v * v).sum::<f64>().sqrt();

                if config.linearly_implicit {
                    let u_star = extrapolate(&history, order);
                    let f = evaluate_nonlinearity(
                        mesh,
                        &problem.coeffs,
                        t_n,
                        config.lumping,
                        &u_star,
                        nl.f_bulk.as_ref(),
                        nl.f_surf.as_ref(),
                    );
                    let full_rhs: Vec<f64> = rhs.iter().zip(&f).map(|(r, fi)| r + fi).collect();
                    solve_spd_guess(&lhs, &full_rhs, &history[0], config.solver_tol)
                        .map_err(|e| add_step_context(e, n, t_n))?
                } else {
                    // Newton iteration on G(u) = lhs·u − F(u) − rhs = 0.
                    let mut u = history[0].clone();
                    let mut converged = false;
                    let mut res_norm = f64::INFINITY;
                    for _ in 0..config.newton_max_iter {
                        let f = evaluate_nonlinearity(
                            mesh,
                            &problem.coeffs,
                            t_n,
                            config.lumping,
                            &u,
                            nl.f_bulk.as_ref(),
                            nl.f_surf.as_ref(),
                        );
                        let lu = lhs.matvec(&u);
                        let g: Vec<f64> = (0..nn).map(|i| lu[i] - f[i] - rhs[i]).collect();
                        res_norm = g.iter().map(|v| v * v).sum::<f64>().sqrt();
                        if res_norm <= config.newton_tol * rhs_scale {
                            converged = true;
                            break;
                        }
                        // Lumped-diagonal Jacobian of −F.
                        let jac_diag: Vec<f64> = (0..nn)
                            .map(|i| {
                                sys.lumped_bulk[i] * (nl.f_bulk_prime)(u[i])
                                    + sys.lumped_surf[i] * (nl.f_surf_prime)(u[i])
                            })
                            .collect();
                        let jac = lhs.add_scaled(&SparseMatrix::from_diag(&jac_diag), -1.0)?;
                        let neg_g: Vec<f64> = g.iter().map(|v| -v).collect();
                        let du = solve_spd(&jac, &neg_g, config.solver_tol)
                            .map_err(|e| add_step_context(e, n, t_n))?;
                        for i in 0..nn {
                            u[i] += du[i];
                        }
                    }
                    if !converged {
                        return Err(Error::NewtonFailure {
                            step: n,
                            time: t_n,
                            residual: res_norm,
                            iterations: config.newton_max_iter,
                        });
                    }
                    u
                }
            }
        };

        history.insert(0, u_next);
        if history.len() > k {
            history.pop();
        }
        recorder.record(n, &history[0]);
    }

    clock.enter("error_norms");
    let error_table = final_error_table(problem, mesh, n_steps as f64 * tau, &history[0])?;

    Ok(RunReport {
        problem: problem.name.clone(),
        method: config.method.name(),
        h: mesh.h(),
        n_dofs: mesh.num_vertices(),
        tau,
        t_end: n_steps as f64 * tau,
        snapshots: recorder.snapshots,
        error_table,
        phase_seconds: clock.finish(),
    })
}

/// Transformed pieces `(d^{1/2}, Â)` of a fully lumped system.
fn transformed(system: &AssembledSystem) -> Result<(Vec<f64>, SparseMatrix)> {
    let d = system.mass_diagonal().ok_or_else(|| {
        Error::invalid(
            "this integrator requires a diagonal mass matrix; assemble with full lumping",
        )
    })?;
    let a_hat = sym_scale(&d, &system.stiffness)?;
    Ok((d, a_hat))
}

/// One exponential-Euler step `y ← y + τ φ(−τÂ)(−Ây + b̂)`.
fn exp_euler_step(
    a_hat: &SparseMatrix,
    y: &[f64],
    b_hat: &[f64],
    tau: f64,
    phi_tol: f64,
) -> Result<Vec<f64>> {
    let ay = a_hat.matvec(y);
    let w: Vec<f64> = b_hat.iter().zip(&ay).map(|(b, a)| b - a).collect();
    let phi_w = phi1_apply(a_hat, &w, tau, phi_tol)?;
    Ok(y.iter().zip(&phi_w).map(|(yi, p)| yi + tau * p).collect())
}

/// Run the exponential Euler method on a linear problem with
/// time-constant coefficients and a fully lumped (diagonal) mass matrix.
pub fn run_exp_euler(
    problem: &Problem,
    mesh: &Mesh,
    config: &IntegratorConfig,
) -> Result<RunReport> {
    if config.method != Method::ExpEuler {
        return Err(Error::invalid(format!(
            "run_exp_euler called with method {}",
            config.method.name()
        )));
    }
    config.validate()?;
    if config.lumping != Lumping::Full {
        return Err(Error::invalid(
            "exponential Euler requires a diagonal mass matrix; set lumping to full",
        ));
    }
    if problem.nonlinearity.is_some() {
        return Err(Error::invalid("exponential Euler supports linear problems only"));
    }
    if !problem.coeffs.constant_in_time() {
        return Err(Error::invalid(
            "exponential Euler requires time-constant coefficients",
        ));
    }
    let tau = config.tau;
    let n_steps = config.num_steps()?;
    let mut clock = PhaseClock::new();
    clock.enter("assembly");
    let sys = assemble(mesh, &problem.coeffs, 0.0, Lumping::Full)?;
    let (d, a_hat) = transformed(&sys)?;
    let d_sqrt: Vec<f64> = d.iter().map(|v| v.sqrt()).collect();

    clock.enter("stepping");
    let u0 = problem.initial_values(mesh);
    let mut y: Vec<f64> = u0.iter().zip(&d_sqrt).map(|(u, s)| u * s).collect();
    let mut recorder = SnapshotRecorder::new(&config.snapshots, tau, n_steps);
    let to_u = |y: &[f64]| -> Vec<f64> { y.iter().zip(&d_sqrt).map(|(v, s)| v / s).collect() };
    recorder.record(0, &to_u(&y));
    for n in 1..=n_steps {
        let t_prev = (n - 1) as f64 * tau;
        let b_hat = match &problem.source {
            Some(src) => {
                let (bb, bs) = assemble_load_parts(
                    mesh,
                    &problem.coeffs,
                    t_prev,
                    src.f_bulk.as_ref(),
                    src.f_surf.as_ref(),
                    Lumping::Full,
                );
                (0..y.len()).map(|i| (bb[i] + bs[i]) / d_sqrt[i]).collect()
            }
            None => vec![0.0; y.len()],
        };
        y = exp_euler_step(&a_hat, &y, &b_hat, tau, config.phi_tol)
            .map_err(|e| add_step_context(e, n, t_prev + tau))?;
        recorder.record(n, &to_u(&y));
    }

    clock.enter("error_norms");
    let u_end = to_u(&y);
    let error_table = final_error_table(problem, mesh, n_steps as f64 * tau, &u_end)?;
    Ok(RunReport {
        problem: problem.name.clone(),
        method: config.method.name(),
        h: mesh.h(),
        n_dofs: mesh.num_vertices(),
        tau,
        t_end: n_steps as f64 * tau,
        snapshots: recorder.snapshots,
        error_table,
        phase_seconds: clock.finish(),
    })
}

/// Exact-subflow stepper for the four splitting variants, acting on the
/// transformed variable `y = M^{1/2} u`.
pub struct SplittingStepper {
    variant: Method,
    averaged_source: bool,
    phi_tol: f64,
    d_sqrt: Vec<f64>,
    interior: Vec<usize>,
    boundary: Vec<usize>,
    /// Force splitting: transformed bulk stiffness (full size) and the
    /// boundary-restricted transformed surface stiffness.
    a_bulk_hat: SparseMatrix,
    a_surf_bb: SparseMatrix,
    /// Component splitting: blocks of `Â` under the interior/boundary
    /// partition.
    a00: SparseMatrix,
    a01: SparseMatrix,
    a10: SparseMatrix,
    a11: SparseMatrix,
}

impl SplittingStepper {
    /// Build from raw pieces.  `mass_diag` must be strictly positive;
    /// `a_surf` must be supported on boundary rows/columns.
    pub fn from_raw(
        mass_diag: &[f64],
        a_bulk: &SparseMatrix,
        a_surf: &SparseMatrix,
        interior: &[usize],
        boundary: &[usize],
        variant: Method,
        phi_tol: f64,
        averaged_source: bool,
    ) -> Result<Self> {
        match variant {
            Method::SplitForceLie
            | Method::SplitForceStrang
            | Method::SplitCompLie
            | Method::SplitCompStrang => {}
            m => {
                return Err(Error::invalid(format!(
                    "{} is not a splitting method",
                    m.name()
                )))
            }
        }
        let n = mass_diag.len();
        let mut is_boundary = vec![false; n];
        for &b in boundary {
            is_boundary[b] = true;
        }
        for (i, j, v) in a_surf.entries() {
            if v != 0.0 && (!is_boundary[i] || !is_boundary[j]) {
                return Err(Error::invalid(format!(
                    "surface stiffness has entry ({i}, {j}) outside the boundary block"
                )));
            }
        }
        let a_bulk_hat = sym_scale(mass_diag, a_bulk)?;
        let a_surf_hat = sym_scale(mass_diag, a_surf)?;
        let a_hat = a_bulk_hat.add_scaled(&a_surf_hat, 1.0)?;
        Ok(SplittingStepper {
            variant,
            averaged_source,
            phi_tol,
            d_sqrt: mass_diag.iter().map(|v| v.sqrt()).collect(),
            interior: interior.to_vec(),
            boundary: boundary.to_vec(),
            a_surf_bb: a_surf_hat.restrict(boundary, boundary),
            a00: a_hat.restrict(interior, interior),
            a01: a_hat.restrict(interior, boundary),
            a10: a_hat.restrict(boundary, interior),
            a11: a_hat.restrict(boundary, boundary),
            a_bulk_hat,
        })
    }

    /// Build from a fully lumped assembled system.
    pub fn from_system(
        system: &AssembledSystem,
        variant: Method,
        phi_tol: f64,
        averaged_source: bool,
    ) -> Result<Self> {
        let d = system.mass_diagonal().ok_or_else(|| {
            Error::invalid("splitting integrators require a diagonal mass matrix; use full lumping")
        })?;
        Self::from_raw(
            &d,
            &system.k_bulk,
            &system.a_surf,
            &system.interior_dofs,
            &system.boundary_dofs,
            variant,
            phi_tol,
            averaged_source,
        )
    }

    pub fn to_transformed(&self, u: &[f64]) -> Vec<f64> {
        u.iter().zip(&self.d_sqrt).map(|(v, s)| v * s).collect()
    }

    pub fn from_transformed(&self, y: &[f64]) -> Vec<f64> {
        y.iter().zip(&self.d_sqrt).map(|(v, s)| v / s).collect()
    }

    /// Exact affine subflow `y ← y + s φ(−s A_s)(c − A_s y)` on a
    /// restricted index set; entries outside `idx` are untouched.
    fn subflow(
        &self,
        a_s: &SparseMatrix,
        idx: &[usize],
        y: &mut [f64],
        c: &[f64],
        s: f64,
    ) -> Result<()> {
        let yr: Vec<f64> = idx.iter().map(|&i| y[i]).collect();
        let ay = a_s.matvec(&yr);
        let w: Vec<f64> = c.iter().zip(&ay).map(|(ci, ai)| ci - ai).collect();
        let phi_w = phi1_apply(a_s, &w, s, self.phi_tol)?;
        for (k, &i) in idx.iter().enumerate() {
            y[i] += s * phi_w[k];
        }
        Ok(())
    }

    /// Advance the transformed state by one step of length `tau` from
    /// `t0`.  `loads` returns the *untransformed* `(b_bulk, b_surf)` parts
    /// at a requested time.
    pub fn step(
        &self,
        y: &mut [f64],
        t0: f64,
        tau: f64,
        loads: &mut dyn FnMut(f64) -> Result<(Vec<f64>, Vec<f64>)>,
    ) -> Result<()> {
        let n = y.len();
        let hat = |b: &[f64]| -> Vec<f64> {
            b.iter().zip(&self.d_sqrt).map(|(v, s)| v / s).collect()
        };
        let gather = |v: &[f64], idx: &[usize]| -> Vec<f64> { idx.iter().map(|&i| v[i]).collect() };

        match self.variant {
            Method::SplitForceLie | Method::SplitForceStrang => {
                let strang = self.variant == Method::SplitForceStrang;
                let (bb0, bs0) = loads(t0)?;
                let bs0_hat = hat(&bs0);
                let c_surf0 = gather(&bs0_hat, &self.boundary);
                let half = if strang { tau / 2.0 } else { tau };
                // Surface substep (boundary nodes only).
                self.subflow(&self.a_surf_bb, &self.boundary, y, &c_surf0, half)?;
                // Bulk substep over the full step.
                let bulk_hat = if strang {
                    if self.averaged_source {
                        let (bb1, _) = loads(t0 + tau)?;
                        hat(&(0..n).map(|i| 0.5 * (bb0[i] + bb1[i])).collect::<Vec<_>>())
                    } else {
                        let (bbm, _) = loads(t0 + tau / 2.0)?;
                        hat(&bbm)
                    }
                } else {
                    hat(&bb0)
                };
                let all: Vec<usize> = (0..n).collect();
                self.subflow(&self.a_bulk_hat, &all, y, &bulk_hat, tau)?;
                if strang {
                    let (_, bs1) = loads(t0 + tau)?;
                    let c_surf1 = gather(&hat(&bs1), &self.boundary);
                    self.subflow(&self.a_surf_bb, &self.boundary, y, &c_surf1, tau / 2.0)?;
                }
            }
            Method::SplitCompLie | Method::SplitCompStrang => {
                let strang = self.variant == Method::SplitCompStrang;
                let total = |t: f64, loads: &mut dyn FnMut(f64) -> Result<(Vec<f64>, Vec<f64>)>|
                 -> Result<Vec<f64>> {
                    let (bb, bs) = loads(t)?;
                    Ok((0..n).map(|i| (bb[i] + bs[i]) / self.d_sqrt[i]).collect())
                };
                let b0_hat = total(t0, loads)?;
                let half = if strang { tau / 2.0 } else { tau };
                // Surface substep: ẏ₁ = −Â₁₁y₁ − Â₁₀y₀ + b̂₁, y₀ frozen.
                let y0 = gather(y, &self.interior);
                let a10_y0 = self.a10.matvec(&y0);
                let c1: Vec<f64> = self
                    .boundary
                    .iter()
                    .zip(&a10_y0)
                    .map(|(&i, a)| b0_hat[i] - a)
                    .collect();
                self.subflow(&self.a11, &self.boundary, y, &c1, half)?;
                // Interior substep with the frozen updated boundary value.
                let b_mid_hat = if strang {
                    if self.averaged_source {
                        let b1_hat = total(t0 + tau, loads)?;
                        (0..n).map(|i| 0.5 * (b0_hat[i] + b1_hat[i])).collect()
                    } else {
                        total(t0 + tau / 2.0, loads)?
                    }
                } else {
                    b0_hat.clone()
                };
                let y1 = gather(y, &self.boundary);
                let a01_y1 = self.a01.matvec(&y1);
                let c0: Vec<f64> = self
                    .interior
                    .iter()
                    .zip(&a01_y1)
                    .map(|(&i, a)| b_mid_hat[i] - a)
                    .collect();
                self.subflow(&self.a00, &self.interior, y, &c0, tau)?;
                if strang {
                    let b1_hat = total(t0 + tau, loads)?;
                    let y0 = gather(y, &self.interior);
                    let a10_y0 = self.a10.matvec(&y0);
                    let c1: Vec<f64> = self
                        .boundary
                        .iter()
                        .zip(&a10_y0)
                        .map(|(&i, a)| b1_hat[i] - a)
                        .collect();
                    self.subflow(&self.a11, &self.boundary, y, &c1, tau / 2.0)?;
                }
            }
            _ => unreachable!("constructor rejects non-splitting methods"),
        }
        Ok(())
    }
}

/// Run one of the four splitting methods on a linear problem with
/// time-constant coefficients and a fully lumped mass matrix.
pub fn run_splitting(
    problem: &Problem,
    mesh: &Mesh,
    config: &IntegratorConfig,
) -> Result<RunReport> {
    match config.method {
        Method::SplitForceLie
        | Method::SplitForceStrang
        | Method::SplitCompLie
        | Method::SplitCompStrang => {}
        m => {
            return Err(Error::invalid(format!(
                "run_splitting called with method {}",
                m.name()
            )))
        }
    }
    config.validate()?;
    if config.lumping != Lumping::Full {
        return Err(Error::invalid(
            "splitting integrators require a diagonal mass matrix; set lumping to full",
        ));
    }
    if problem.nonlinearity.is_some() {
        return Err(Error::invalid("splitting integrators support linear problems only"));
    }
    if !problem.coeffs.constant_in_time() {
        return Err(Error::invalid(
            "splitting integrators require time-constant coefficients",
        ));
    }
    let tau = config.tau;
    let n_steps = config.num_steps()?;
    let mut clock = PhaseClock::new();
    clock.enter("assembly");
    let sys = assemble(mesh, &problem.coeffs, 0.0, Lumping::Full)?;
    let stepper =
        SplittingStepper::from_system(&sys, config.method, config.phi_tol, config.averaged_source)?;

    clock.enter("stepping");
    let mut y = stepper.to_transformed(&problem.initial_values(mesh));
    let mut recorder = SnapshotRecorder::new(&config.snapshots, tau, n_steps);
    recorder.record(0, &stepper.from_transformed(&y));
    let zero_loads = (vec![0.0; y.len()], vec![0.0; y.len()]);
    let mut loads = |t: f64| -> Result<(Vec<f64>, Vec<f64>)> {
        match &problem.source {
            Some(src) => Ok(assemble_load_parts(
                mesh,
                &problem.coeffs,
                t,
                src.f_bulk.as_ref(),
                src.f_surf.as_ref(),
                Lumping::Full,
            )),
            None => Ok(zero_loads.clone()),
        }
    };
    for n in 1..=n_steps {
        let t0 = (n - 1) as f64 * tau;
        stepper
            .step(&mut y, t0, tau, &mut loads)
            .map_err(|e| add_step_context(e, n, t0 + tau))?;
        recorder.record(n, &stepper.from_transformed(&y));
    }

    clock.enter("error_norms");
    let u_end = stepper.from_transformed(&y);
    let error_table = final_error_table(problem, mesh, n_steps as f64 * tau, &u_end)?;
    Ok(RunReport {
        problem: problem.name.clone(),
        method: config.method.name(),
        h: mesh.h(),
        n_dofs: mesh.num_vertices(),
        tau,
        t_end: n_steps as f64 * tau,
        snapshots: recorder.snapshots,
        error_table,
        phase_seconds: clock.finish(),
    })
}

/// Dispatch to the right runner for the configured method.
pub fn run(problem: &Problem, mesh: &Mesh, config: &IntegratorConfig) -> Result<RunReport> {
    match config.method {
        Method::Bdf(_) => run_bdf(problem, mesh, config),
        Method::ExpEuler => run_exp_euler(problem, mesh, config),
        _ => run_splitting(problem, mesh, config),
    }
}
