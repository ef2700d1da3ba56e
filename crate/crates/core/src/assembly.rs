//! Assembly of the coupled bulk–surface finite-element system.
//!
//! For the bilinear forms
//!
//! ```text
//! m(t; u, v) = ∫_Ω u v dx + ∫_Γ μ(·,t) u v dσ,
//! a(t; u, v) = ∫_Ω ∇u·∇v dx + ∫_Γ κ(·,t) u v dσ + ∫_Γ β(·,t) ∇_Γ u·∇_Γ v dσ,
//! ```
//!
//! the assembled pieces are the bulk mass `M_bulk`, the surface mass
//! `M_surf` (weighted by μ), the bulk stiffness `K_bulk`, the surface
//! stiffness `K_surf` (weighted by β) and the surface reaction `C_surf`
//! (weighted by κ).  The combined matrices are `M = M_bulk + M_surf` and
//! `A = K_bulk + K_surf + C_surf`; the splitting integrators additionally
//! use `A_Ω = K_bulk` and `A_Γ = K_surf + C_surf`.
//!
//! Spatially varying coefficients are sampled with a 2-point Gauss rule per
//! boundary edge; constant coefficients use exact element matrices.  Loads
//! and semi-linear terms integrate with the 3-point edge-midpoint rule per
//! triangle and the same 2-point Gauss rule per edge.
//!
//! Mass lumping replaces the element mass integrals by vertex quadratures:
//! on a triangle each vertex receives `area/3`, on a boundary edge each
//! endpoint receives `μ(endpoint)·length/2` (the coefficient is sampled at
//! the vertex itself).  [`Lumping::Full`] lumps both masses — making `M`
//! diagonal — while [`Lumping::BulkOnly`] keeps the consistent surface mass.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;
use crate::mesh::Mesh;
use crate::quadrature::{EDGE_GAUSS2, TRI_MIDPOINT};

/// Mass treatment.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Lumping {
    /// Consistent bulk and surface mass matrices.
    Consistent,
    /// Lumped bulk mass, consistent surface mass.
    BulkOnly,
    /// Lumped bulk and surface mass (diagonal `M`).
    Full,
}

type CoeffFn = Arc<dyn Fn([f64; 2], f64) -> f64 + Send + Sync>;

/// A scalar coefficient on `Γ × [0, T]` with constancy metadata used to
/// skip reassembly and to validate manufactured-solution closures.
#[derive(Clone)]
pub struct Coefficient {
    f: CoeffFn,
    pub constant_in_space: bool,
    pub constant_in_time: bool,
}

impl Coefficient {
    /// Constant coefficient.
    pub fn constant(value: f64) -> Self {
        Coefficient {
            f: Arc::new(move |_, _| value),
            constant_in_space: true,
            constant_in_time: true,
        }
    }

    /// Time-dependent, spatially constant coefficient.
    pub fn of_time(f: impl Fn(f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient {
            f: Arc::new(move |_, t| f(t)),
            constant_in_space: true,
            constant_in_time: false,
        }
    }

    /// Fully varying coefficient `c(x, t)`.
    pub fn of_space_time(f: impl Fn([f64; 2], f64) -> f64 + Send + Sync + 'static) -> Self {
        Coefficient {
            f: Arc::new(f),
            constant_in_space: false,
            constant_in_time: false,
        }
    }

    pub fn eval(&self, x: [f64; 2], t: f64) -> f64 {
        (self.f)(x, t)
    }

    pub fn is_constant(&self) -> bool {
        self.constant_in_space && self.constant_in_time
    }
}

impl std::fmt::Debug for Coefficient {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Coefficient")
            .field("constant_in_space", &self.constant_in_space)
            .field("constant_in_time", &self.constant_in_time)
            .finish()
    }
}

/// The coefficient triple (μ, κ, β) of the dynamic boundary condition.
#[derive(Clone, Debug)]
pub struct CoefficientSet {
    /// Surface density in front of `∂_t u` (must be strictly positive).
    pub mu: Coefficient,
    /// Surface reaction coefficient.
    pub kappa: Coefficient,
    /// Surface diffusion coefficient (identically zero, or positive).
    pub beta: Coefficient,
}

impl CoefficientSet {
    pub fn constants(mu: f64, kappa: f64, beta: f64) -> Self {
        CoefficientSet {
            mu: Coefficient::constant(mu),
            kappa: Coefficient::constant(kappa),
            beta: Coefficient::constant(beta),
        }
    }

    /// All three coefficients independent of time (the assembled system can
    /// be cached across time steps).
    pub fn constant_in_time(&self) -> bool {
        self.mu.constant_in_time && self.kappa.constant_in_time && self.beta.constant_in_time
    }
}

/// The assembled finite-element system at one point in time.
#[derive(Clone, Debug)]
pub struct AssembledSystem {
    /// Mass treatment the combined matrices currently reflect.
    pub lumping: Lumping,
    /// Assembly time (coefficients were sampled at this `t`).
    pub time: f64,
    /// Bulk mass (consistent or lumped according to `lumping`).
    pub m_bulk: SparseMatrix,
    /// Surface mass weighted by μ (consistent or lumped).
    pub m_surf: SparseMatrix,
    /// Bulk stiffness (Dirichlet form on Ω).
    pub k_bulk: SparseMatrix,
    /// Surface stiffness weighted by β.
    pub k_surf: SparseMatrix,
    /// Surface reaction matrix weighted by κ.
    pub c_surf: SparseMatrix,
    /// Combined mass `M = M_bulk + M_surf`.
    pub mass: SparseMatrix,
    /// Combined stiffness `A = K_bulk + K_surf + C_surf`.
    pub stiffness: SparseMatrix,
    /// Surface part `A_Γ = K_surf + C_surf` of the stiffness.
    pub a_surf: SparseMatrix,
    /// Lumped bulk vertex weights (`Σ area/3`; also the unit bulk mass).
    pub lumped_bulk: Vec<f64>,
    /// Lumped surface vertex weights including μ.
    pub lumped_surf: Vec<f64>,
    /// Lumped surface vertex weights with unit density (μ = 1).
    pub lumped_surf_unit: Vec<f64>,
    /// Interior vertex indices, increasing.
    pub interior_dofs: Vec<usize>,
    /// Boundary vertex indices, increasing.
    pub boundary_dofs: Vec<usize>,
    m_bulk_consistent: SparseMatrix,
    m_surf_consistent: SparseMatrix,
}

impl AssembledSystem {
    /// Number of degrees of freedom.
    pub fn n(&self) -> usize {
        self.mass.n_rows()
    }

    /// Bulk part `A_Ω = K_bulk` of the stiffness.
    pub fn a_bulk(&self) -> &SparseMatrix {
        &self.k_bulk
    }

    /// The diagonal of `M` when it is diagonal ([`Lumping::Full`]);
    /// `None` otherwise.
    pub fn mass_diagonal(&self) -> Option<Vec<f64>> {
        match self.lumping {
            Lumping::Full => Some(
                self.lumped_bulk
                    .iter()
                    .zip(&self.lumped_surf)
                    .map(|(b, s)| b + s)
                    .collect(),
            ),
            _ => None,
        }
    }

    /// Re-derive the system under a different mass treatment.  All lumped
    /// diagonals were computed at assembly time, so no mesh traversal is
    /// needed and any mode can be converted to any other.
    pub fn lump(&self, mode: Lumping) -> AssembledSystem {
        let mut out = self.clone();
        out.lumping = mode;
        out.m_bulk = match mode {
            Lumping::Consistent => self.m_bulk_consistent.clone(),
            _ => SparseMatrix::from_diag(&self.lumped_bulk),
        };
        out.m_surf = match mode {
            Lumping::Full => SparseMatrix::from_diag(&self.lumped_surf),
            _ => self.m_surf_consistent.clone(),
        };
        out.mass = out.m_bulk.add_scaled(&out.m_surf, 1.0).unwrap();
        out
    }

    /// Energy product `vᵀ A w`.
    pub fn a_product(&self, v: &[f64], w: &[f64]) -> f64 {
        let aw = self.stiffness.matvec(w);
        v.iter().zip(&aw).map(|(x, y)| x * y).sum()
    }

    /// Mass product `vᵀ M w`.
    pub fn m_product(&self, v: &[f64], w: &[f64]) -> f64 {
        let mw = self.mass.matvec(w);
        v.iter().zip(&mw).map(|(x, y)| x * y).sum()
    }

    /// Mass norm `|v|_M = (vᵀ M v)^{1/2}`.
    pub fn m_norm(&self, v: &[f64]) -> f64 {
        self.m_product(v, v).max(0.0).sqrt()
    }
}

fn perp(v: [f64; 2]) -> [f64; 2] {
    [-v[1], v[0]]
}

/// Assemble all matrices of the coupled system at time `t`.
///
/// Fails if μ is not strictly positive or β is negative at any quadrature
/// sample (Gauss points and vertices of boundary edges).
pub fn assemble(
    mesh: &Mesh,
    coeffs: &CoefficientSet,
    t: f64,
    lumping: Lumping,
) -> Result<AssembledSystem> {
    let n = mesh.num_vertices();
    let mut tm_bulk = Vec::new(); // consistent bulk mass triplets
    let mut tk_bulk = Vec::new();
    let mut lumped_bulk = vec![0.0; n];

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
        // P1 gradients: ∇φ_i = perp(p_{i+2} − p_{i+1}) / (2·area).
        let mut grads = [[0.0; 2]; 3];
        for i in 0..3 {
            let a = p[(i + 2) % 3];
            let b = p[(i + 1) % 3];
            let d = perp([a[0] - b[0], a[1] - b[1]]);
            grads[i] = [d[0] / area2, d[1] / area2];
        }
        for i in 0..3 {
            lumped_bulk[tri[i]] += area / 3.0;
            for j in 0..3 {
                let kij = area * (grads[i][0] * grads[j][0] + grads[i][1] * grads[j][1]);
                tk_bulk.push((tri[i], tri[j], kij));
                let mij = area / 12.0 * if i == j { 2.0 } else { 1.0 };
                tm_bulk.push((tri[i], tri[j], mij));
            }
        }
    }

    let mut tm_surf = Vec::new();
    let mut tk_surf = Vec::new();
    let mut tc_surf = Vec::new();
    let mut lumped_surf = vec![0.0; n];
    let mut lumped_surf_unit = vec![0.0; n];

    for edge in &mesh.boundary_edges {
        let (i, j) = (edge[0], edge[1]);
        let pi = mesh.vertices[i];
        let pj = mesh.vertices[j];
        let len = ((pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2)).sqrt();

        // Sample coefficients at the Gauss points and the endpoints.
        let mut mu_g = [0.0; 2];
        let mut kappa_g = [0.0; 2];
        let mut beta_g = [0.0; 2];
        for (g, q) in EDGE_GAUSS2.iter().enumerate() {
            let x = [
                pi[0] + q.s * (pj[0] - pi[0]),
                pi[1] + q.s * (pj[1] - pi[1]),
            ];
            mu_g[g] = coeffs.mu.eval(x, t);
            kappa_g[g] = coeffs.kappa.eval(x, t);
            beta_g[g] = coeffs.beta.eval(x, t);
        }
        let mu_ends = [coeffs.mu.eval(pi, t), coeffs.mu.eval(pj, t)];
        for (&m, where_) in mu_g
            .iter()
            .chain(mu_ends.iter())
            .zip(["gauss", "gauss", "vertex", "vertex"])
        {
            if !(m > 0.0) {
                return Err(Error::Coefficient(format!(
                    "mu must be strictly positive on the boundary; sampled {m:.3e} at a {where_} point of edge ({i}, {j}) at t = {t}"
                )));
            }
        }
        if beta_g.iter().any(|&b| b < 0.0) {
            return Err(Error::Coefficient(format!(
                "beta must be nonnegative; negative sample on edge ({i}, {j}) at t = {t}"
            )));
        }

        // Mass-type matrices: exact for constant coefficients, 2-point
        // Gauss otherwise (exact through cubic integrands either way).
        let local = [i, j];
        let mass_like = |c_const: Option<f64>, c_g: &[f64; 2]| -> [[f64; 2]; 2] {
            if let Some(c) = c_const {
                [
                    [c * len / 3.0, c * len / 6.0],
                    [c * len / 6.0, c * len / 3.0],
                ]
            } else {
                let mut m = [[0.0; 2]; 2];
                for (g, q) in EDGE_GAUSS2.iter().enumerate() {
                    let phi = [1.0 - q.s, q.s];
                    for a in 0..2 {
                        for b in 0..2 {
                            m[a][b] += len * q.weight * c_g[g] * phi[a] * phi[b];
                        }
                    }
                }
                m
            }
        };
        let mu_const = coeffs.mu.is_constant().then(|| coeffs.mu.eval(pi, t));
        let kappa_const = coeffs.kappa.is_constant().then(|| coeffs.kappa.eval(pi, t));
        let m_elem = mass_like(mu_const, &mu_g);
        let c_elem = mass_like(kappa_const, &kappa_g);
        // Surface stiffness: tangential derivatives of the P1 traces are
        // ±1/len, so only the β average over the edge enters.
        let beta_avg = if coeffs.beta.is_constant() {
            coeffs.beta.eval(pi, t)
        } else {
            EDGE_GAUSS2
                .iter()
                .zip(beta_g.iter())
                .map(|(q, &b)| q.weight * b)
                .sum()
        };
        let k_val = beta_avg / len;
        for a in 0..2 {
            for b in 0..2 {
                tm_surf.push((local[a], local[b], m_elem[a][b]));
                tc_surf.push((local[a], local[b], c_elem[a][b]));
                let sign = if a == b { 1.0 } else { -1.0 };
                tk_surf.push((local[a], local[b], sign * k_val));
            }
        }
        lumped_surf[i] += mu_ends[0] * len / 2.0;
        lumped_surf[j] += mu_ends[1] * len / 2.0;
        lumped_surf_unit[i] += len / 2.0;
        lumped_surf_unit[j] += len / 2.0;
    }

    let m_bulk_consistent = SparseMatrix::from_triplets(n, n, &tm_bulk)?;
    let m_surf_consistent = SparseMatrix::from_triplets(n, n, &tm_surf)?;
    let k_bulk = SparseMatrix::from_triplets(n, n, &tk_bulk)?;
    let k_surf = SparseMatrix::from_triplets(n, n, &tk_surf)?;
    let c_surf = SparseMatrix::from_triplets(n, n, &tc_surf)?;

    let m_bulk = match lumping {
        Lumping::Consistent => m_bulk_consistent.clone(),
        _ => SparseMatrix::from_diag(&lumped_bulk),
    };
    let m_surf = match lumping {
        Lumping::Full => SparseMatrix::from_diag(&lumped_surf),
        _ => m_surf_consistent.clone(),
    };
    let mass = m_bulk.add_scaled(&m_surf, 1.0)?;
    let a_surf = k_surf.add_scaled(&c_surf, 1.0)?;
    let stiffness = k_bulk.add_scaled(&a_surf, 1.0)?;

    Ok(AssembledSystem {
        lumping,
        time: t,
        m_bulk,
        m_surf,
        k_bulk,
        k_surf,
        c_surf,
        mass,
        stiffness,
        a_surf,
        lumped_bulk,
        lumped_surf,
        lumped_surf_unit,
        interior_dofs: mesh.interior_dofs(),
        boundary_dofs: mesh.boundary_dofs(),
        m_bulk_consistent,
        m_surf_consistent,
    })
}

/// Assemble the load vector split into its bulk and surface parts:
///
/// ```text
/// b_bulk_i = ∫_Ω f_bulk(·, t) φ_i dx,
/// b_surf_i = ∫_Γ μ(·, t) f_surf(·, t) φ_i dσ.
/// ```
///
/// Under lumping the corresponding integral is replaced by the vertex
/// quadrature (`area/3` resp. `μ(x_i)·len/2` weights at the nodes), matching
/// the lumped mass matrices.
pub fn assemble_load_parts(
    mesh: &Mesh,
    coeffs: &CoefficientSet,
    t: f64,
    f_bulk: &dyn Fn([f64; 2], f64) -> f64,
    f_surf: &dyn Fn([f64; 2], f64) -> f64,
    lumping: Lumping,
) -> (Vec<f64>, Vec<f64>) {
    let n = mesh.num_vertices();
    let mut b_bulk = vec![0.0; n];
    let mut b_surf = vec![0.0; n];

    let lump_bulk = lumping != Lumping::Consistent;
    for tri in &mesh.triangles {
        let p = [
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ];
        let area = 0.5
            * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        if lump_bulk {
            for i in 0..3 {
                b_bulk[tri[i]] += area / 3.0 * f_bulk(p[i], t);
            }
        } else {
            for q in &TRI_MIDPOINT {
                let x = [
                    q.bary[0] * p[0][0] + q.bary[1] * p[1][0] + q.bary[2] * p[2][0],
                    q.bary[0] * p[0][1] + q.bary[1] * p[1][1] + q.bary[2] * p[2][1],
                ];
                let fv = f_bulk(x, t) * area * q.weight;
                for i in 0..3 {
                    b_bulk[tri[i]] += fv * q.bary[i];
                }
            }
        }
    }

    let lump_surf = lumping == Lumping::Full;
    for edge in &mesh.boundary_edges {
        let (i, j) = (edge[0], edge[1]);
        let pi = mesh.vertices[i];
        let pj = mesh.vertices[j];
        let len = ((pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2)).sqrt();
        if lump_surf {
            b_surf[i] += coeffs.mu.eval(pi, t) * len / 2.0 * f_surf(pi, t);
            b_surf[j] += coeffs.mu.eval(pj, t) * len / 2.0 * f_surf(pj, t);
        } else {
            for q in &EDGE_GAUSS2 {
                let x = [
                    pi[0] + q.s * (pj[0] - pi[0]),
                    pi[1] + q.s * (pj[1] - pi[1]),
                ];
                let fv = coeffs.mu.eval(x, t) * f_surf(x, t) * len * q.weight;
                b_surf[i] += fv * (1.0 - q.s);
                b_surf[j] += fv * q.s;
            }
        }
    }
    (b_bulk, b_surf)
}

/// Combined load vector `b = b_bulk + b_surf`; see [`assemble_load_parts`].
pub fn assemble_load(
    mesh: &Mesh,
    coeffs: &CoefficientSet,
    t: f64,
    f_bulk: &dyn Fn([f64; 2], f64) -> f64,
    f_surf: &dyn Fn([f64; 2], f64) -> f64,
    lumping: Lumping,
) -> Vec<f64> {
    let (b, s) = assemble_load_parts(mesh, coeffs, t, f_bulk, f_surf, lumping);
    b.iter().zip(&s).map(|(x, y)| x + y).collect()
}

/// Evaluate the weighted semi-linear term
///
/// ```text
/// F_i(u) = ∫_Ω f_bulk(u_h) φ_i dx + ∫_Γ μ(·,t) f_surf(u_h) φ_i dσ
/// ```
///
/// for the finite-element function `u_h` with nodal values `u`.  Under
/// lumping the integrals collapse to `w_i f(u_i)` with the lumped vertex
/// weights, which is what makes Newton's method for lumped systems diagonal
/// in the nonlinearity.
pub fn evaluate_nonlinearity(
    mesh: &Mesh,
    coeffs: &CoefficientSet,
    t: f64,
    lumping: Lumping,
    u: &[f64],
    f_bulk: &dyn Fn(f64) -> f64,
    f_surf: &dyn Fn(f64) -> f64,
) -> Vec<f64> {
    let n = mesh.num_vertices();
    assert_eq!(u.len(), n, "nodal vector length mismatch");
    let mut out = vec![0.0; n];

    let lump_bulk = lumping != Lumping::Consistent;
    for tri in &mesh.triangles {
        let p = [
            mesh.vertices[tri[0]],
            mesh.vertices[tri[1]],
            mesh.vertices[tri[2]],
        ];
        let area = 0.5
            * ((p[1][0] - p[0][0]) * (p[2][1] - p[0][1])
                - (p[2][0] - p[0][0]) * (p[1][1] - p[0][1]));
        if lump_bulk {
            for i in 0..3 {
                out[tri[i]] += area / 3.0 * f_bulk(u[tri[i]]);
            }
        } else {
            for q in &TRI_MIDPOINT {
                let uq = q.bary[0] * u[tri[0]] + q.bary[1] * u[tri[1]] + q.bary[2] * u[tri[2]];
                let fv = f_bulk(uq) * area * q.weight;
                for i in 0..3 {
                    out[tri[i]] += fv * q.bary[i];
                }
            }
        }
    }

    let lump_surf = lumping == Lumping::Full;
    for edge in &mesh.boundary_edges {
        let (i, j) = (edge[0], edge[1]);
        let pi = mesh.vertices[i];
        let pj = mesh.vertices[j];
        let len = ((pj[0] - pi[0]).powi(2) + (pj[1] - pi[1]).powi(2)).sqrt();
        if lump_surf {
            out[i] += coeffs.mu.eval(pi, t) * len / 2.0 * f_surf(u[i]);
            out[j] += coeffs.mu.eval(pj, t) * len / 2.0 * f_surf(u[j]);
        } else {
            for q in &EDGE_GAUSS2 {
                let x = [
                    pi[0] + q.s * (pj[0] - pi[0]),
                    pi[1] + q.s * (pj[1] - pi[1]),
                ];
                let uq = (1.0 - q.s) * u[i] + q.s * u[j];
                let fv = coeffs.mu.eval(x, t) * f_surf(uq) * len * q.weight;
                out[i] += fv * (1.0 - q.s);
                out[j] += fv * q.s;
            }
        }
    }
    out
}
