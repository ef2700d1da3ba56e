//! Ritz projection, discrete error norms, and the discrete energy — the
//! measurement side of the solver.
//!
//! The Ritz projection of a smooth function `u` is the finite-element
//! function `R_h u` with
//!
//! ```text
//! a(R_h u, v_h) + c·m(R_h u, v_h) = a(u, v_h) + c·m(u, v_h)   ∀ v_h,
//! ```
//!
//! where the shift `c ≥ 0` makes the form positive definite when the
//! reaction coefficient κ is not strictly positive.  The right-hand side is
//! evaluated by quadrature from the exact closures (`u`, `∇u`) only — no
//! derivatives of finite-element data enter.
//!
//! Error norms are measured with quadrature two degrees higher than
//! assembly (6-point degree-4 rule on triangles, 3-point Gauss on boundary
//! edges) so measurement error stays below the discretisation error being
//! observed.

use crate::assembly::{AssembledSystem, CoefficientSet, Lumping};
use crate::error::Result;
use crate::linalg::{hminus_half_norm, solve_spd};
use crate::mesh::Mesh;
use crate::problems::{ExactSolution, Nonlinearity};
use crate::quadrature::{EDGE_GAUSS3, TRI_DEGREE4};
use crate::report::NormTuple;
use nalgebra::DMatrix;

/// A positive-definiteness shift for the given coefficients at time `t`:
/// zero when the sampled κ is strictly positive, otherwise `|κ_min| + 1`.
pub fn suggested_shift(mesh: &Mesh, coeffs: &CoefficientSet, t: f64) -> f64 {
    let mut kappa_min = f64::INFINITY;
    for edge in &mesh.boundary_edges {
        let pi = mesh.vertices[edge[0]];
        let pj = mesh.vertices[edge[1]];
        for q in &EDGE_GAUSS3 {
            let x = [
                pi[0] + q.s * (pj[0] - pi[0]),
                pi[1] + q.s * (pj[1] - pi[1]),
            ];
            kappa_min = kappa_min.min(coeffs.kappa.eval(x, t));
        }
    }
    if kappa_min > 1e-12 {
        0.0
    } else {
        kappa_min.abs() + 1.0
    }
}

/// Right-hand side `ρ_i = a(u, φ_i) + c·m(u, φ_i)` of the shifted Ritz
/// system, by quadrature from the exact closures.
fn ritz_rhs(
    mesh: &Mesh,
    coeffs: &CoefficientSet,
    t: f64,
    exact: &ExactSolution,
    shift: f64,
) -> Vec<f64> {
    let n = mesh.num_vertices();
    let mut rho = vec![0.0; n];

    for tri in &mesh.triangles {
        let p = [
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ];
        let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        let area2 = e1[0] * e2[1] - e1[1] * e2[0];
        let area = 0.5 * area2;
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let a = p[(i + 2) % 3];
            let b = p[(i + 1) % 3];
            grads[i] = [-(a[1] - b[1]) / area2, (a[0] - b[0]) / area2];
        }
        for q in &TRI_DEGREE4 {
            let x = [
                q.bary[0] * p[0][0] + q.bary[1] * p[1][0] + q.bary[2] * p[2][0],
                q.bary[0] * p[0][1] + q.bary[1] * p[1][1] + q.bary[2] * p[2][1],
            ];
            let w = area * q.weight;
            let gu = (exact.grad)(x, t);
            let uv = (exact.u)(x, t);
            for i in 0..3 {
                rho[tri[i]] += w * (gu[0] * grads[i][0] + gu[1] * grads[i][1]);
                rho[tri[i]] += w * shift * uv * q.bary[i];
            }
        }
    }

    for edge in &mesh.boundary_edges {
        let (i, j) = (edge[0], edge[1]);
        let pi = mesh.vertices[i];
        let pj = mesh.vertices[j];
        let len = ((pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2)).sqrt();
        let tangent = [(pj[0] - pi[0]) / len, (pj[1] - pi[1]) / len];
        for q in &EDGE_GAUSS3 {
            let x = [
                pi[0] + q.s * (pj[0] - pi[0]),
                pi[1] + q.s * (pj[1] - pi[1]),
            ];
            let w = len * q.weight;
            let uv = (exact.u)(x, t);
            let gu = (exact.grad)(x, t);
            let du_ds = gu[0] * tangent[0] + gu[1] * tangent[1];
            let kappa = coeffs.kappa.eval(x, t);
            let beta = coeffs.beta.eval(x, t);
            let mu = coeffs.mu.eval(x, t);
            let phi = [1.0 - q.s, q.s];
            let dphi_ds = [-1.0 / len, 1.0 / len];
            for (a, &node) in [i, j].iter().enumerate() {
                rho[node] += w * (kappa + shift * mu) * uv * phi[a];
                rho[node] += w * beta * du_ds * dphi_ds[a];
            }
        }
    }
    rho
}

/// Shifted form matrix `A + shift·M_c` with the consistent mass,
/// regardless of the system's lumping mode.
fn shifted_form(system: &AssembledSystem, shift: f64) -> Result<crate::linalg::SparseMatrix> {
    if shift == 0.0 {
        return Ok(system.stiffness.clone());
    }
    let consistent = match system.lumping {
        Lumping::Consistent => system.mass.clone(),
        _ => system.lump(Lumping::Consistent).mass,
    };
    system.stiffness.add_scaled(&consistent, shift)
}

/// Ritz projection of the exact solution at time `t`, solved with the
/// (consistent-mass) shifted stiffness to relative tolerance `1e−12`.
pub fn ritz_project(
    mesh: &Mesh,
    coeffs: &CoefficientSet,
    system: &AssembledSystem,
    t: f64,
    exact: &ExactSolution,
    shift: f64,
) -> Result<Vec<f64>> {
    let rho = ritz_rhs(mesh, coeffs, t, exact, shift);
    let lhs = shifted_form(system, shift)?;
    solve_spd(&lhs, &rho, 1e-12)
}

/// Max-norm residual of the a-orthogonality relation
/// `a(u − u_h, φ_i) + shift·m_c(u − u_h, φ_i) = 0` for a candidate
/// projection `u_h`, relative to the max-norm of the quadrature load.
/// For the output of [`ritz_project`] this sits at the linear-solver
/// tolerance.
pub fn a_orthogonality_residual(
    mesh: &Mesh,
    coeffs: &CoefficientSet,
    system: &AssembledSystem,
    t: f64,
    exact: &ExactSolution,
    shift: f64,
    u_h: &[f64],
) -> Result<f64> {
    let rho = ritz_rhs(mesh, coeffs, t, exact, shift);
    let lhs = shifted_form(system, shift)?;
    let au = lhs.matvec(u_h);
    let res = au
        .iter()
        .zip(&rho)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0f64, f64::max);
    let scale = rho.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
    Ok(res / scale.max(f64::MIN_POSITIVE))
}

/// Discrete error norms of a nodal field against the exact solution at
/// time `t`, using the error-tier quadrature rules.
pub fn error_norms(
    mesh: &Mesh,
    coeffs: &CoefficientSet,
    t: f64,
    u_h: &[f64],
    exact: &ExactSolution,
) -> Result<NormTuple> {
    assert_eq!(u_h.len(), mesh.num_vertices());
    let mut l2_bulk2 = 0.0;
    let mut grad2 = 0.0;
    for tri in &mesh.triangles {
        let p = [
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ];
        let e1 = [p[1][0] - p[0][0], p[1][1] - p[0][1]];
        let e2 = [p[2][0] - p[0][0], p[2][1] - p[0][1]];
        let area2 = e1[0] * e2[1] - e1[1] * e2[0];
        let area = 0.5 * area2;
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let a = p[(i + 2) % 3];
            let b = p[(i + 1) % 3];
            grads[i] = [-(a[1] - b[1]) / area2, (a[0] - b[0]) / area2];
        }
        // ∇u_h is constant on the triangle.
        let gh = [
            (0..3).map(|i| u_h[tri[i]] * grads[i][0]).sum::<f64>(),
            (0..3).map(|i| u_h[tri[i]] * grads[i][1]).sum::<f64>(),
        ];
        for q in &TRI_DEGREE4 {
            let x = [
                q.bary[0] * p[0][0] + q.bary[1] * p[1][0] + q.bary[2] * p[2][0],
                q.bary[0] * p[0][1] + q.bary[1] * p[1][1] + q.bary[2] * p[2][1],
            ];
            let w = area * q.weight;
            let uh = (0..3).map(|i| u_h[tri[i]] * q.bary[i]).sum::<f64>();
            let diff = uh - (exact.u)(x, t);
            l2_bulk2 += w * diff * diff;
            let gu = (exact.grad)(x, t);
            grad2 += w * ((gh[0] - gu[0]).powi(2) + (gh[1] - gu[1]).powi(2));
        }
    }

    let mut l2_surf2 = 0.0;
    let mut mu_surf2 = 0.0;
    let mut react2 = 0.0;
    let mut tan2 = 0.0;
    for edge in &mesh.boundary_edges {
        let (i, j) = (edge[0], edge[1]);
        let pi = mesh.vertices[i];
        let pj = mesh.vertices[j];
        let len = ((pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2)).sqrt();
        let tangent = [(pj[0] - pi[0]) / len, (pj[1] - pi[1]) / len];
        // Tangential derivative of the trace of u_h along the edge.
        let dh_ds = (u_h[j] - u_h[i]) / len;
        for q in &EDGE_GAUSS3 {
            let x = [
                pi[0] + q.s * (pj[0] - pi[0]),
                pi[1] + q.s * (pj[1] - pi[1]),
            ];
            let w = len * q.weight;
            let uh = (1.0 - q.s) * u_h[i] + q.s * u_h[j];
            let diff = uh - (exact.u)(x, t);
            l2_surf2 += w * diff * diff;
            mu_surf2 += w * coeffs.mu.eval(x, t) * diff * diff;
            react2 += w * coeffs.kappa.eval(x, t) * diff * diff;
            let gu = (exact.grad)(x, t);
            let du_ds = gu[0] * tangent[0] + gu[1] * tangent[1];
            tan2 += w * coeffs.beta.eval(x, t) * (dh_ds - du_ds).powi(2);
        }
    }

    // Discrete H^{−1/2}(Γ) surrogate of the nodal trace error, on the
    // boundary polyline with unit densities.
    let loop_order = mesh.boundary_loop();
    let nb = loop_order.len();
    let g: Vec<f64> = loop_order
        .iter()
        .map(|&v| u_h[v] - (exact.u)(mesh.vertices[v], t))
        .collect();
    let mut m_gamma = DMatrix::<f64>::zeros(nb, nb);
    let mut k_gamma = DMatrix::<f64>::zeros(nb, nb);
    for k in 0..nb {
        let a = k;
        let b = (k + 1) % nb;
        let pa = mesh.vertices[loop_order[a]];
        let pb = mesh.vertices[loop_order[b]];
        let len = ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt();
        m_gamma[(a, a)] += len / 3.0;
        m_gamma[(b, b)] += len / 3.0;
        m_gamma[(a, b)] += len / 6.0;
        m_gamma[(b, a)] += len / 6.0;
        k_gamma[(a, a)] += 1.0 / len;
        k_gamma[(b, b)] += 1.0 / len;
        k_gamma[(a, b)] -= 1.0 / len;
        k_gamma[(b, a)] -= 1.0 / len;
    }
    let hminus = hminus_half_norm(&g, &m_gamma, &k_gamma)?;

    Ok(NormTuple {
        l2_bulk: l2_bulk2.max(0.0).sqrt(),
        l2_surf: l2_surf2.max(0.0).sqrt(),
        energy: (grad2 + react2 + tan2).max(0.0).sqrt(),
        h_combined: (l2_bulk2 + mu_surf2).max(0.0).sqrt(),
        hminus_half_surf: hminus,
    })
}

/// Discrete energy `E(u) = ½ uᵀAu + Σ_i w_i W(u_i) + Σ_i s_i W_Γ(u_i)`
/// with the lumped bulk weights `w_i` and unit-density lumped surface
/// weights `s_i`.  Without potentials this is the pure quadratic part.
pub fn discrete_energy(
    u: &[f64],
    system: &AssembledSystem,
    nonlinearity: Option<&Nonlinearity>,
) -> f64 {
    let mut e = 0.5 * system.a_product(u, u);
    if let Some(nl) = nonlinearity {
        if let Some(w) = &nl.w_bulk {
            e += system
                .lumped_bulk
                .iter()
                .zip(u)
                .map(|(wi, &ui)| wi * w(ui))
                .sum::<f64>();
        }
        if let Some(wg) = &nl.w_surf {
            e += system
                .lumped_surf_unit
                .iter()
                .zip(u)
                .map(|(si, &ui)| si * wg(ui))
                .sum::<f64>();
        }
    }
    e
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::assembly::assemble;
    use crate::mesh::generate_square_mesh;
    use crate::problems;
    use std::sync::Arc;

    /// Globally linear exact function on the unit square, with the correct
    /// edge-wise normal derivatives.
    fn linear_exact() -> ExactSolution {
        let grad = [2.0, -1.0];
        ExactSolution {
            u: Arc::new(move |x, _| 0.25 + grad[0] * x[0] + grad[1] * x[1]),
            u_t: Arc::new(|_, _| 0.0),
            grad: Arc::new(move |_, _| grad),
            laplace: Arc::new(|_, _| 0.0),
            laplace_surf: Arc::new(|_, _| 0.0),
            normal_deriv: Arc::new(move |x, _| {
                if x[1] <= 0.0 {
                    -grad[1]
                } else if x[0] >= 1.0 {
                    grad[0]
                } else if x[1] >= 1.0 {
                    grad[1]
                } else {
                    -grad[0]
                }
            }),
        }
    }

    #[test]
    fn ritz_reproduces_linear_functions() {
        let mesh = generate_square_mesh(3).unwrap();
        let coeffs = CoefficientSet::constants(1.0, 1.0, 1.0);
        let sys = assemble(&mesh, &coeffs, 0.0, Lumping::Consistent).unwrap();
        let exact = linear_exact();
        let r = ritz_project(&mesh, &coeffs, &sys, 0.0, &exact, 0.0).unwrap();
        for (v, &x) in r.iter().zip(mesh.vertices.iter()) {
            assert!((v - (exact.u)(x, 0.0)).abs() < 1e-9, "{v} at {x:?}");
        }
        // a-orthogonality: ‖A r − ρ‖_∞ ≤ 1e−10 ‖ρ‖_∞ (shift 0).
        let rho = ritz_rhs(&mesh, &coeffs, 0.0, &exact, 0.0);
        let ar = sys.stiffness.matvec(&r);
        let res = ar
            .iter()
            .zip(&rho)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f64, f64::max);
        let rho_inf = rho.iter().map(|v| v.abs()).fold(0.0f64, f64::max);
        assert!(res <= 1e-10 * rho_inf, "{res:.2e} vs {rho_inf:.2e}");
    }

    #[test]
    fn ritz_reproduces_constants_with_positive_kappa() {
        let mesh = generate_square_mesh(2).unwrap();
        let coeffs = CoefficientSet::constants(1.0, 2.0, 0.0);
        let sys = assemble(&mesh, &coeffs, 0.0, Lumping::Consistent).unwrap();
        let exact = ExactSolution {
            u: Arc::new(|_, _| 3.0),
            u_t: Arc::new(|_, _| 0.0),
            grad: Arc::new(|_, _| [0.0, 0.0]),
            laplace: Arc::new(|_, _| 0.0),
            laplace_surf: Arc::new(|_, _| 0.0),
            normal_deriv: Arc::new(|_, _| 0.0),
        };
        let r = ritz_project(&mesh, &coeffs, &sys, 0.0, &exact, 0.0).unwrap();
        for v in &r {
            assert!((v - 3.0).abs() < 1e-9);
        }
    }

    #[test]
    fn shift_needed_for_zero_kappa() {
        let mesh = generate_square_mesh(2).unwrap();
        let coeffs = CoefficientSet::constants(1.0, 0.0, 1.0);
        assert_eq!(suggested_shift(&mesh, &coeffs, 0.0), 1.0);
        let pos = CoefficientSet::constants(1.0, 0.5, 1.0);
        assert_eq!(suggested_shift(&mesh, &pos, 0.0), 0.0);
        let neg = CoefficientSet {
            mu: crate::assembly::Coefficient::constant(1.0),
            kappa: crate::assembly::Coefficient::constant(-2.0),
            beta: crate::assembly::Coefficient::constant(0.0),
        };
        assert_eq!(suggested_shift(&mesh, &neg, 0.0), 3.0);
    }

    #[test]
    fn shifted_ritz_reproduces_linear_with_indefinite_kappa() {
        let mesh = generate_square_mesh(3).unwrap();
        let coeffs = CoefficientSet {
            mu: crate::assembly::Coefficient::constant(1.0),
            kappa: crate::assembly::Coefficient::constant(-1.0),
            beta: crate::assembly::Coefficient::constant(1.0),
        };
        let sys = assemble(&mesh, &coeffs, 0.0, Lumping::Consistent).unwrap();
        let c = suggested_shift(&mesh, &coeffs, 0.0);
        assert_eq!(c, 2.0);
        let exact = linear_exact();
        let r = ritz_project(&mesh, &coeffs, &sys, 0.0, &exact, c).unwrap();
        for (v, &x) in r.iter().zip(mesh.vertices.iter()) {
            assert!((v - (exact.u)(x, 0.0)).abs() < 1e-9);
        }
    }

    #[test]
    fn error_norms_zero_for_interpolated_linear() {
        let mesh = generate_square_mesh(3).unwrap();
        let coeffs = CoefficientSet::constants(1.0, 1.0, 1.0);
        let exact = linear_exact();
        let u_h: Vec<f64> = mesh.vertices.iter().map(|&x| (exact.u)(x, 0.0)).collect();
        let norms = error_norms(&mesh, &coeffs, 0.0, &u_h, &exact).unwrap();
        for v in norms.as_vec() {
            assert!(v < 1e-12, "{v}");
        }
    }

    #[test]
    fn error_norms_constant_one_against_zero() {
        let mesh = generate_square_mesh(1).unwrap();
        let coeffs = CoefficientSet::constants(1.0, 1.0, 0.0);
        let zero = ExactSolution {
            u: Arc::new(|_, _| 0.0),
            u_t: Arc::new(|_, _| 0.0),
            grad: Arc::new(|_, _| [0.0, 0.0]),
            laplace: Arc::new(|_, _| 0.0),
            laplace_surf: Arc::new(|_, _| 0.0),
            normal_deriv: Arc::new(|_, _| 0.0),
        };
        let ones = vec![1.0; mesh.num_vertices()];
        let norms = error_norms(&mesh, &coeffs, 0.0, &ones, &zero).unwrap();
        // h_combined² = 1ᵀM1 = area + μ·perimeter = 5.
        assert!((norms.h_combined.powi(2) - 5.0).abs() < 1e-12);
        assert!((norms.l2_bulk - 1.0).abs() < 1e-13);
        assert!((norms.l2_surf - 2.0).abs() < 1e-13);
        // energy² = κ ∫_Γ 1 = 4 (no gradients, β = 0).
        assert!((norms.energy - 2.0).abs() < 1e-13);
        // Constant boundary data: H^{−1/2} surrogate equals the L² norm.
        assert!((norms.hminus_half_surf - 2.0).abs() < 1e-12);
    }

    #[test]
    fn discrete_energy_constants() {
        let mesh = generate_square_mesh(2).unwrap();
        // Allen–Cahn coefficients: μ = 1, κ = 0, β = 1.
        let coeffs = CoefficientSet::constants(1.0, 0.0, 1.0);
        let sys = assemble(&mesh, &coeffs, 0.0, Lumping::Full).unwrap();
        let nl = problems::double_well_nonlinearity();
        let zero = vec![0.0; sys.n()];
        // E(0) = W(0)·area + W_Γ(0)·perimeter = 1 + 4.
        let e0 = discrete_energy(&zero, &sys, Some(&nl));
        assert!((e0 - 5.0).abs() < 1e-12, "{e0}");
        // Well minima: E(±1) = 0 (κ = 0 so A·1 = 0).
        for s in [1.0, -1.0] {
            let u = vec![s; sys.n()];
            let e = discrete_energy(&u, &sys, Some(&nl));
            assert!(e.abs() < 1e-12, "{e}");
        }
        // Linear part matches the quadratic form without potentials.
        let u: Vec<f64> = (0..sys.n()).map(|i| (i as f64 * 0.37).sin()).collect();
        let e = discrete_energy(&u, &sys, None);
        let quad = 0.5 * sys.a_product(&u, &u);
        assert!((e - quad).abs() <= 1e-13 * quad.abs().max(1.0));
    }
}
