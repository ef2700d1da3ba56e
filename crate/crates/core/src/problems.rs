//! Problem library: model problems with dynamic boundary conditions plus
//! manufactured-solution (MMS) source generation.
//!
//! The strong form of the linear model problem is
//!
//! ```text
//! ∂_t u = Δu + f_bulk                      in Ω,
//! μ ∂_t u = −κ u + β Δ_Γ u − ∂_ν u + μ f_surf   on Γ = ∂Ω,
//! ```
//!
//! so given a smooth `u` with all its derivatives as closures, the sources
//! that make it exact are `f_bulk = ∂_t u − Δu` and
//! `f_surf = ∂_t u + (κ u − β Δ_Γ u + ∂_ν u)/μ`.
//!
//! Semi-linear problems add `f_Ω(u)` and `μ f_Γ(u)` to the right-hand
//! sides; [`with_manufactured_solution`] attaches a compensating explicit
//! source so any smooth `u` becomes an exact solution of the semi-linear
//! equation as well.

use std::sync::Arc;

use crate::assembly::{Coefficient, CoefficientSet};
use crate::error::{Error, Result};
use crate::mesh::{generate_disk_mesh, generate_square_mesh, DomainKind, Mesh};

/// Scalar field closure `f(x, t)`.
pub type ScalarField = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;
/// Vector field closure `f(x, t) ∈ ℝ²`.
pub type VectorField = Arc<dyn Fn([f64; 2], f64) -> [f64; 2] + Send + Sync>;
/// Pointwise nonlinearity `f(u)`.
pub type PointFn = Arc<dyn Fn(f64) -> f64 + Send + Sync>;

/// A smooth exact solution together with every derivative the solver and
/// the error norms need.  The surface closures (`laplace_surf`,
/// `normal_deriv`) are smooth extensions valid at boundary quadrature
/// points of the discrete domain.
#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarField,
    pub u_t: ScalarField,
    pub grad: VectorField,
    pub laplace: ScalarField,
    /// Laplace–Beltrami `Δ_Γ u` on the boundary.
    pub laplace_surf: ScalarField,
    /// Outward normal derivative `∂_ν u` on the boundary.
    pub normal_deriv: ScalarField,
}

/// Explicit right-hand sides `(f_bulk, f_surf)` of the linear problem.
#[derive(Clone)]
pub struct SourcePair {
    pub f_bulk: ScalarField,
    pub f_surf: ScalarField,
}

impl std::fmt::Debug for SourcePair {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SourcePair { .. }")
    }
}

impl SourcePair {
    pub fn zero() -> Self {
        SourcePair {
            f_bulk: Arc::new(|_, _| 0.0),
            f_surf: Arc::new(|_, _| 0.0),
        }
    }
}

/// Pointwise semi-linear terms with their derivatives (for Newton) and
/// optional potentials (for the discrete energy of gradient flows).
#[derive(Clone)]
pub struct Nonlinearity {
    pub f_bulk: PointFn,
    pub f_bulk_prime: PointFn,
    pub f_surf: PointFn,
    pub f_surf_prime: PointFn,
    /// Bulk potential `W` with `f_bulk = −W′` for gradient flows.
    pub w_bulk: Option<PointFn>,
    /// Surface potential `W_Γ` with `f_surf = −W_Γ′`.
    pub w_surf: Option<PointFn>,
}

/// A fully configured model problem.
#[derive(Clone)]
pub struct Problem {
    pub name: String,
    pub domain: DomainKind,
    pub coeffs: CoefficientSet,
    /// Exact solution when the problem is manufactured.
    pub exact: Option<ExactSolution>,
    /// Explicit sources (for manufactured problems these are the MMS pair).
    pub source: Option<SourcePair>,
    pub nonlinearity: Option<Nonlinearity>,
    /// Initial field `u(·, 0)`.
    pub u0: Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>,
    /// Time horizon `T`.
    pub t_end: f64,
}

impl Problem {
    /// Nodal interpolant of the initial data.
    pub fn initial_values(&self, mesh: &Mesh) -> Vec<f64> {
        mesh.vertices.iter().map(|&x| (self.u0)(x)).collect()
    }

    pub fn is_linear(&self) -> bool {
        self.nonlinearity.is_none()
    }
}

/// Derive the MMS sources that make `exact` solve the linear problem with
/// the given coefficients.
///
/// Spatially varying β would require the extra closure `∇_Γβ·∇_Γu` for the
/// full surface divergence `∇_Γ·(β ∇_Γ u)`; it is not part of the bundle,
/// so such coefficients are rejected.
pub fn mms_sources(exact: &ExactSolution, coeffs: &CoefficientSet) -> Result<SourcePair> {
    if !coeffs.beta.constant_in_space {
        return Err(Error::config(
            "manufactured sources require beta constant in space: the surface term \
             ∇_Γ·(β∇_Γu) needs the missing closure grad_surf_beta_dot_grad_surf_u",
        ));
    }
    let u_t = exact.u_t.clone();
    let laplace = exact.laplace.clone();
    let f_bulk: ScalarField = Arc::new(move |x, t| u_t(x, t) - laplace(x, t));

    let u_t = exact.u_t.clone();
    let u = exact.u.clone();
    let lap_s = exact.laplace_surf.clone();
    let dnu = exact.normal_deriv.clone();
    let mu = coeffs.mu.clone();
    let kappa = coeffs.kappa.clone();
    let beta = coeffs.beta.clone();
    let f_surf: ScalarField = Arc::new(move |x, t| {
        u_t(x, t)
            + (kappa.eval(x, t) * u(x, t) - beta.eval(x, t) * lap_s(x, t) + dnu(x, t))
                / mu.eval(x, t)
    });
    Ok(SourcePair { f_bulk, f_surf })
}

/// Attach a manufactured exact solution to a (semi-linear) problem: the
/// explicit source is chosen so `exact` solves the full equation including
/// the nonlinearity.  The linear MMS pair gets `f_Ω(u(x,t))` resp.
/// `f_Γ(u(x,t))` subtracted.
pub fn with_manufactured_solution(problem: &Problem, exact: ExactSolution) -> Result<Problem> {
    let linear = mms_sources(&exact, &problem.coeffs)?;
    let source = match &problem.nonlinearity {
        None => linear,
        Some(nl) => {
            let u = exact.u.clone();
            let fb = nl.f_bulk.clone();
            let lb = linear.f_bulk.clone();
            let f_bulk: ScalarField = Arc::new(move |x, t| lb(x, t) - fb(u(x, t)));
            let u = exact.u.clone();
            let fs = nl.f_surf.clone();
            let ls = linear.f_surf.clone();
            let f_surf: ScalarField = Arc::new(move |x, t| ls(x, t) - fs(u(x, t)));
            SourcePair { f_bulk, f_surf }
        }
    };
    let u = exact.u.clone();
    Ok(Problem {
        name: format!("{}_mms", problem.name),
        domain: problem.domain,
        coeffs: problem.coeffs.clone(),
        exact: Some(exact),
        source: Some(source),
        nonlinearity: problem.nonlinearity.clone(),
        u0: Arc::new(move |x| u(x, 0.0)),
        t_end: problem.t_end,
    })
}

/// `u(x, y, t) = e^{−t} cos(πx) cos(πy)` on the unit square.  Its normal
/// derivative vanishes on all four sides and the tangential second
/// derivative along each side is `−π² u`.
pub fn square_cosine_exact() -> ExactSolution {
    let pi = std::f64::consts::PI;
    ExactSolution {
        u: Arc::new(move |x, t| (-t).exp() * (pi * x[0]).cos() * (pi * x[1]).cos()),
        u_t: Arc::new(move |x, t| -(-t).exp() * (pi * x[0]).cos() * (pi * x[1]).cos()),
        grad: Arc::new(move |x, t| {
            let e = (-t).exp();
            [
                -pi * e * (pi * x[0]).sin() * (pi * x[1]).cos(),
                -pi * e * (pi * x[0]).cos() * (pi * x[1]).sin(),
            ]
        }),
        laplace: Arc::new(move |x, t| {
            -2.0 * pi * pi * (-t).exp() * (pi * x[0]).cos() * (pi * x[1]).cos()
        }),
        laplace_surf: Arc::new(move |x, t| {
            -pi * pi * (-t).exp() * (pi * x[0]).cos() * (pi * x[1]).cos()
        }),
        normal_deriv: Arc::new(|_, _| 0.0),
    }
}

/// `u(x, y, t) = e^{−t} (x² − y²)` on the unit disk: harmonic in space, so
/// the bulk source is `−u`.  On the circle of radius r through x the
/// extensions are `∂_ν u = ∇u·x/|x|` and `Δ_Γ u = −4u/r²`.
pub fn disk_harmonic_exact() -> ExactSolution {
    ExactSolution {
        u: Arc::new(|x, t| (-t).exp() * (x[0] * x[0] - x[1] * x[1])),
        u_t: Arc::new(|x, t| -(-t).exp() * (x[0] * x[0] - x[1] * x[1])),
        grad: Arc::new(|x, t| {
            let e = (-t).exp();
            [2.0 * e * x[0], -2.0 * e * x[1]]
        }),
        laplace: Arc::new(|_, _| 0.0),
        laplace_surf: Arc::new(|x, t| {
            let r2 = x[0] * x[0] + x[1] * x[1];
            -4.0 * (-t).exp() * (x[0] * x[0] - x[1] * x[1]) / r2
        }),
        normal_deriv: Arc::new(|x, t| {
            let r = (x[0] * x[0] + x[1] * x[1]).sqrt();
            2.0 * (-t).exp() * (x[0] * x[0] - x[1] * x[1]) / r
        }),
    }
}

/// `u(x, y, t) = (e^{−t} + sin 2t)(1 + 3x + 2y)` on the unit square.
/// Linear in space, so it lies in every P1 space and all assembly
/// quadratures are exact for it; with consistent mass its nodal
/// interpolant solves the semidiscrete system exactly.  The oscillatory
/// time profile keeps high temporal derivatives large, so high-order
/// steppers produce errors well above solver noise.  The normal
/// derivative is constant per side (`∓3` on the vertical, `∓2` on the
/// horizontal sides, times the profile); the closure detects the side
/// from the coordinates, which is unambiguous at boundary quadrature
/// points.
pub fn square_linear_exact() -> ExactSolution {
    let shape = |x: [f64; 2]| 1.0 + 3.0 * x[0] + 2.0 * x[1];
    let g = |t: f64| (-t).exp() + (2.0 * t).sin();
    let g_t = |t: f64| -(-t).exp() + 2.0 * (2.0 * t).cos();
    ExactSolution {
        u: Arc::new(move |x, t| g(t) * shape(x)),
        u_t: Arc::new(move |x, t| g_t(t) * shape(x)),
        grad: Arc::new(move |_, t| [3.0 * g(t), 2.0 * g(t)]),
        laplace: Arc::new(|_, _| 0.0),
        laplace_surf: Arc::new(|_, _| 0.0),
        normal_deriv: Arc::new(move |x, t| {
            let e = g(t);
            if x[0] < 1e-9 {
                -3.0 * e
            } else if x[0] > 1.0 - 1e-9 {
                3.0 * e
            } else if x[1] < 1e-9 {
                -2.0 * e
            } else {
                2.0 * e
            }
        }),
    }
}

/// Manufactured problem on the unit square (μ = κ = 1, β = 0) whose exact
/// solution [`square_linear_exact`] is linear in space.  Starting values
/// projected from the exact solution then sit exactly on the semidiscrete
/// trajectory, which isolates the temporal error of a time stepper.
pub fn linear_trajectory_square() -> Problem {
    linear_builtin(
        "linear_trajectory_square",
        DomainKind::Square,
        CoefficientSet::constants(1.0, 1.0, 0.0),
        square_linear_exact(),
        1.0,
    )
    .expect("constant coefficients always admit manufactured sources")
}

fn linear_builtin(
    name: &str,
    domain: DomainKind,
    coeffs: CoefficientSet,
    exact: ExactSolution,
    t_end: f64,
) -> Result<Problem> {
    let source = mms_sources(&exact, &coeffs)?;
    let u = exact.u.clone();
    Ok(Problem {
        name: name.to_string(),
        domain,
        coeffs,
        exact: Some(exact),
        source: Some(source),
        nonlinearity: None,
        u0: Arc::new(move |x| u(x, 0.0)),
        t_end,
    })
}

/// The double-well nonlinearity `f = −W′` with `W(u) = (u² − 1)²`.
pub fn double_well_nonlinearity() -> Nonlinearity {
    let f: PointFn = Arc::new(|u| -4.0 * u * (u * u - 1.0));
    let fp: PointFn = Arc::new(|u| -12.0 * u * u + 4.0);
    let w: PointFn = Arc::new(|u| {
        let s = u * u - 1.0;
        s * s
    });
    Nonlinearity {
        f_bulk: f.clone(),
        f_bulk_prime: fp.clone(),
        f_surf: f,
        f_surf_prime: fp,
        w_bulk: Some(w.clone()),
        w_surf: Some(w),
    }
}

/// Construct one of the built-in problems:
///
/// * `wentzell_square` — μ = 1, κ = 1, β = 0 on the unit square; manufactured.
/// * `coupled_square` — μ = κ = β = 1 on the unit square; manufactured.
/// * `coupled_disk` — μ = κ = β = 1 on the unit disk; manufactured.
/// * `nonauto_square` — μ = 2 + sin t, κ = 1 + ½cos(t)·x₀, β = 1 + ½sin t;
///   manufactured, non-autonomous.
/// * `allen_cahn_square` — gradient flow with the double-well potential,
///   μ = 1, κ = 0, β = 1, no exact solution.
/// * `reaction_diffusion_disk` — surface reaction `f_Γ(ψ) = ψ(1 − ψ²)`
///   clamped to [−10, 10], no bulk reaction, μ = 1, κ = 0, β = 1.
pub fn builtin(name: &str) -> Result<Problem> {
    match name {
        "wentzell_square" => linear_builtin(
            name,
            DomainKind::Square,
            CoefficientSet::constants(1.0, 1.0, 0.0),
            square_cosine_exact(),
            1.0,
        ),
        "coupled_square" => linear_builtin(
            name,
            DomainKind::Square,
            CoefficientSet::constants(1.0, 1.0, 1.0),
            square_cosine_exact(),
            1.0,
        ),
        "coupled_disk" => linear_builtin(
            name,
            DomainKind::Disk,
            CoefficientSet::constants(1.0, 1.0, 1.0),
            disk_harmonic_exact(),
            1.0,
        ),
        "nonauto_square" => linear_builtin(
            name,
            DomainKind::Square,
            CoefficientSet {
                mu: Coefficient::of_time(|t| 2.0 + t.sin()),
                kappa: Coefficient::of_space_time(|x, t| 1.0 + 0.5 * t.cos() * x[0]),
                beta: Coefficient::of_time(|t| 1.0 + 0.5 * t.sin()),
            },
            square_cosine_exact(),
            1.0,
        ),
        "allen_cahn_square" => {
            let pi = std::f64::consts::PI;
            Ok(Problem {
                name: name.to_string(),
                domain: DomainKind::Square,
                coeffs: CoefficientSet::constants(1.0, 0.0, 1.0),
                exact: None,
                source: None,
                nonlinearity: Some(double_well_nonlinearity()),
                u0: Arc::new(move |x| 0.2 + 0.1 * (pi * x[0]).cos() * (pi * x[1]).cos()),
                t_end: 0.5,
            })
        }
        "reaction_diffusion_disk" => {
            let clamp = 10.0_f64;
            let f_surf: PointFn = Arc::new(move |u| (u * (1.0 - u * u)).clamp(-clamp, clamp));
            let f_surf_prime: PointFn = Arc::new(move |u| {
                let g = u * (1.0 - u * u);
                if g.abs() >= clamp {
                    0.0
                } else {
                    1.0 - 3.0 * u * u
                }
            });
            let zero: PointFn = Arc::new(|_| 0.0);
            Ok(Problem {
                name: name.to_string(),
                domain: DomainKind::Disk,
                coeffs: CoefficientSet::constants(1.0, 0.0, 1.0),
                exact: None,
                source: None,
                nonlinearity: Some(Nonlinearity {
                    f_bulk: zero.clone(),
                    f_bulk_prime: zero,
                    f_surf,
                    f_surf_prime,
                    w_bulk: None,
                    w_surf: None,
                }),
                u0: Arc::new(|x| x[0]),
                t_end: 1.0,
            })
        }
        other => Err(Error::invalid(format!(
            "unknown builtin problem '{other}'; available: wentzell_square, coupled_square, \
             coupled_disk, nonauto_square, allen_cahn_square, reaction_diffusion_disk"
        ))),
    }
}

/// Names of all built-in problems, in a stable order.
pub const BUILTIN_NAMES: [&str; 6] = [
    "wentzell_square",
    "coupled_square",
    "coupled_disk",
    "nonauto_square",
    "allen_cahn_square",
    "reaction_diffusion_disk",
];

/// Build the standard mesh for a problem domain at refinement parameter `n`:
/// the structured `n × n` square mesh, or the disk mesh with `4n` boundary
/// vertices (so halving `h` means doubling `n` in both cases).
pub fn build_mesh(domain: DomainKind, n: usize) -> Result<Mesh> {
    match domain {
        DomainKind::Square => generate_square_mesh(n),
        DomainKind::Disk => generate_disk_mesh(4 * n.max(2)),
        DomainKind::External => Err(Error::invalid(
            "external domains have no mesh generator; load the mesh from a file",
        )),
    }
}

/// A point on the true boundary of the domain, parameterised by `s ∈ [0, 1)`
/// (arc-length fraction).  Used to spot-check manufactured residuals on Γ.
pub fn boundary_point(domain: DomainKind, s: f64) -> [f64; 2] {
    let s = s.rem_euclid(1.0);
    match domain {
        DomainKind::Square => {
            let p = 4.0 * s;
            if p < 1.0 {
                [p, 0.0]
            } else if p < 2.0 {
                [1.0, p - 1.0]
            } else if p < 3.0 {
                [3.0 - p, 1.0]
            } else {
                [0.0, 4.0 - p]
            }
        }
        _ => {
            let phi = 2.0 * std::f64::consts::PI * s;
            [phi.cos(), phi.sin()]
        }
    }
}

/// Maximum strong-form residual of a manufactured problem over `samples`
/// random space-time points (bulk equation at interior points, boundary
/// equation on the true boundary).  Linear problems must return ~1e−15;
/// anything above 1e−8 indicates an inconsistent bundle.
pub fn mms_residual(problem: &Problem, samples: usize, seed: u64) -> Result<f64> {
    use rand::{Rng, SeedableRng};
    let exact = problem
        .exact
        .as_ref()
        .ok_or_else(|| Error::invalid("mms_residual requires an exact solution"))?;
    let source = problem
        .source
        .as_ref()
        .ok_or_else(|| Error::invalid("mms_residual requires explicit sources"))?;
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut worst = 0.0_f64;
    for _ in 0..samples {
        let t = rng.gen_range(0.0..problem.t_end.max(1e-9));
        // Interior point.
        let x = match problem.domain {
            DomainKind::Square => [rng.gen_range(0.05..0.95), rng.gen_range(0.05..0.95)],
            _ => {
                let r = 0.9 * rng.gen::<f64>().sqrt();
                let phi = rng.gen_range(0.0..2.0 * std::f64::consts::PI);
                [r * phi.cos(), r * phi.sin()]
            }
        };
        let mut fb = (source.f_bulk)(x, t);
        if let Some(nl) = &problem.nonlinearity {
            fb += (nl.f_bulk)((exact.u)(x, t));
        }
        let bulk_res = (exact.u_t)(x, t) - (exact.laplace)(x, t) - fb;
        worst = worst.max(bulk_res.abs());

        // Boundary point.
        let xb = boundary_point(problem.domain, rng.gen::<f64>());
        let mu = problem.coeffs.mu.eval(xb, t);
        let kappa = problem.coeffs.kappa.eval(xb, t);
        let beta = problem.coeffs.beta.eval(xb, t);
        let mut fs = (source.f_surf)(xb, t);
        if let Some(nl) = &problem.nonlinearity {
            fs += (nl.f_surf)((exact.u)(xb, t));
        }
        let surf_res = mu * (exact.u_t)(xb, t) + kappa * (exact.u)(xb, t)
            - beta * (exact.laplace_surf)(xb, t)
            + (exact.normal_deriv)(xb, t)
            - mu * fs;
        worst = worst.max(surf_res.abs());
    }
    Ok(worst)
}
