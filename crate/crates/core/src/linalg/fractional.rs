//! Discrete surrogate for the `H^{-1/2}(Γ)` surface norm.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};

/// Largest boundary system for which the dense generalized eigenproblem is
/// attempted.
const MAX_BOUNDARY_DOFS: usize = 2000;

/// Discrete `H^{-1/2}(Γ_h)` norm of a boundary nodal vector `g`.
///
/// `m` and `k` are the surface mass and surface stiffness matrices with unit
/// densities (`μ = 1`, `β = 1`), restricted to the boundary degrees of
/// freedom in the same ordering as `g`.  With the generalized eigenpairs
/// `K v_k = λ_k M v_k`, `v_kᵀ M v_l = δ_kl`, the norm is
///
/// ```text
/// ‖g‖² = Σ_k (λ_k + 1)^{-1/2} (v_kᵀ M g)²,
/// ```
///
/// a quadrature of `((−Δ_Γ + I)^{-1/2} g, g)_{L²(Γ_h)}` in the discrete
/// eigenbasis of the surface Laplacian.
pub fn hminus_half_norm(g: &[f64], m: &DMatrix<f64>, k: &DMatrix<f64>) -> Result<f64> {
    let n = g.len();
    if m.nrows() != n || m.ncols() != n || k.nrows() != n || k.ncols() != n {
        return Err(Error::invalid("hminus_half_norm dimension mismatch"));
    }
    if n == 0 {
        return Ok(0.0);
    }
    if n > MAX_BOUNDARY_DOFS {
        return Err(Error::SizeLimit(format!(
            "hminus_half_norm supports at most {MAX_BOUNDARY_DOFS} boundary DOFs, got {n}"
        )));
    }
    // M = L Lᵀ; the generalized problem K v = λ M v becomes the standard
    // symmetric problem (L⁻¹ K L⁻ᵀ) w = λ w with v = L⁻ᵀ w, and the
    // M-orthonormal coefficients are c_k = w_kᵀ (Lᵀ g).
    let chol = nalgebra::Cholesky::new(m.clone()).ok_or_else(|| {
        Error::invalid("hminus_half_norm: surface mass matrix is not positive definite")
    })?;
    let l = chol.l();
    let y = l
        .solve_lower_triangular(k)
        .ok_or_else(|| Error::invalid("hminus_half_norm: singular Cholesky factor"))?;
    let b_t = l
        .solve_lower_triangular(&y.transpose())
        .ok_or_else(|| Error::invalid("hminus_half_norm: singular Cholesky factor"))?;
    // Symmetrize rounding noise before the eigendecomposition.
    let b = (&b_t + b_t.transpose()) * 0.5;
    let eig = b.symmetric_eigen();
    let w = l.transpose() * DVector::from_column_slice(g);
    let coeffs = eig.eigenvectors.transpose() * w;
    let mut norm_sq = 0.0;
    for i in 0..n {
        // The surface stiffness is positive semidefinite; clamp rounding.
        let lambda = eig.eigenvalues[i].max(0.0);
        norm_sq += coeffs[i] * coeffs[i] / (lambda + 1.0).sqrt();
    }
    Ok(norm_sq.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    /// Surface mass/stiffness (unit densities) for a closed polygon with
    /// the given edge lengths, vertices 0..n in loop order.
    fn loop_matrices(lengths: &[f64]) -> (DMatrix<f64>, DMatrix<f64>) {
        let n = lengths.len();
        let mut m = DMatrix::zeros(n, n);
        let mut k = DMatrix::zeros(n, n);
        for (e, &len) in lengths.iter().enumerate() {
            let (i, j) = (e, (e + 1) % n);
            m[(i, i)] += len / 3.0;
            m[(j, j)] += len / 3.0;
            m[(i, j)] += len / 6.0;
            m[(j, i)] += len / 6.0;
            k[(i, i)] += 1.0 / len;
            k[(j, j)] += 1.0 / len;
            k[(i, j)] -= 1.0 / len;
            k[(j, i)] -= 1.0 / len;
        }
        (m, k)
    }

    #[test]
    fn constant_on_unit_hexagon() {
        // Unit regular hexagon: 6 edges of length 1, perimeter 6.  For a
        // constant vector the only contribution is the zero eigenvalue with
        // (λ+1)^{-1/2} = 1, giving ‖c‖ = c·√(perimeter).
        let (m, k) = loop_matrices(&[1.0; 6]);
        for c in [1.0, -2.5, 0.3] {
            let g = vec![c; 6];
            let norm = hminus_half_norm(&g, &m, &k).unwrap();
            assert!(
                (norm - c.abs() * 6.0_f64.sqrt()).abs() < 1e-12,
                "c={c}: {norm}"
            );
        }
    }

    #[test]
    fn bounded_by_l2_norm() {
        // (λ+1)^{-1/2} ≤ 1, so ‖g‖_{-1/2} ≤ ‖g‖_{L²(Γ)} = (gᵀMg)^{1/2}.
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(11);
        let lengths: Vec<f64> = (0..12).map(|_| rng.gen_range(0.5..1.5)).collect();
        let (m, k) = loop_matrices(&lengths);
        for _ in 0..20 {
            let g: Vec<f64> = (0..12).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let frac = hminus_half_norm(&g, &m, &k).unwrap();
            let gv = DVector::from_column_slice(&g);
            let l2 = (gv.transpose() * &m * &gv)[(0, 0)].sqrt();
            assert!(frac <= l2 * (1.0 + 1e-12), "frac {frac} l2 {l2}");
        }
    }

    #[test]
    fn norm_axioms_hold() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(5);
        let lengths: Vec<f64> = (0..10).map(|_| rng.gen_range(0.5..2.0)).collect();
        let (m, k) = loop_matrices(&lengths);
        for _ in 0..20 {
            let g1: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let g2: Vec<f64> = (0..10).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let alpha: f64 = rng.gen_range(-3.0..3.0);
            let n1 = hminus_half_norm(&g1, &m, &k).unwrap();
            let n2 = hminus_half_norm(&g2, &m, &k).unwrap();
            // Homogeneity.
            let scaled: Vec<f64> = g1.iter().map(|&x| alpha * x).collect();
            let ns = hminus_half_norm(&scaled, &m, &k).unwrap();
            assert!((ns - alpha.abs() * n1).abs() <= 1e-12 * (1.0 + n1));
            // Triangle inequality.
            let sum: Vec<f64> = g1.iter().zip(&g2).map(|(a, b)| a + b).collect();
            let nsum = hminus_half_norm(&sum, &m, &k).unwrap();
            assert!(nsum <= n1 + n2 + 1e-12);
            // Definiteness.
            if g1.iter().any(|&x| x.abs() > 1e-12) {
                assert!(n1 > 0.0);
            }
        }
    }

    #[test]
    fn high_frequency_weighted_down() {
        // An oscillating vector concentrates on large-λ modes, so its
        // fractional norm must be strictly smaller than its L² norm.
        let (m, k) = loop_matrices(&[0.25; 16]);
        let g: Vec<f64> = (0..16).map(|i| if i % 2 == 0 { 1.0 } else { -1.0 }).collect();
        let frac = hminus_half_norm(&g, &m, &k).unwrap();
        let gv = DVector::from_column_slice(&g);
        let l2 = (gv.transpose() * &m * &gv)[(0, 0)].sqrt();
        assert!(frac < 0.5 * l2, "frac {frac} vs l2 {l2}");
    }

    #[test]
    fn size_limit_enforced() {
        let n = 2001;
        let g = vec![1.0; n];
        let m = DMatrix::identity(n, n);
        let k = DMatrix::zeros(n, n);
        assert!(matches!(
            hminus_half_norm(&g, &m, &k),
            Err(Error::SizeLimit(_))
        ));
    }
}
