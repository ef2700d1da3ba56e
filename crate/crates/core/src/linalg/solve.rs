//! Symmetric positive definite solves.

use crate::error::{Error, Result};
use crate::linalg::SparseMatrix;

/// Largest system size for which a dense Cholesky fallback is attempted
/// when conjugate gradients stall.
const DENSE_FALLBACK_LIMIT: usize = 600;

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Solve `A x = b` for symmetric positive definite `A` with
/// Jacobi-preconditioned conjugate gradients, starting from `x = 0`.
///
/// Returns `x` with true residual `‖Ax − b‖₂ ≤ tol·‖b‖₂`.  If CG has not
/// converged after `10·n` iterations the system is re-solved by dense
/// Cholesky when `n ≤ 600`; otherwise a solver-failure error carrying the
/// final residual is returned.
pub fn solve_spd(a: &SparseMatrix, b: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.n_rows();
    if a.n_cols() != n || b.len() != n {
        return Err(Error::invalid("solve_spd dimension mismatch"));
    }
    if !(tol > 0.0) {
        return Err(Error::invalid("solve_spd requires tol > 0"));
    }
    let b_norm = norm(b);
    if b_norm == 0.0 {
        return Ok(vec![0.0; n]);
    }
    let target = tol * b_norm;
    // Jacobi preconditioner; a non-positive diagonal entry would make the
    // preconditioned inner product meaningless, so fall back to identity
    // scaling there.
    let diag = a.diagonal();
    let inv_diag: Vec<f64> = diag
        .iter()
        .map(|&d| if d > 0.0 { 1.0 / d } else { 1.0 })
        .collect();

    let mut x = vec![0.0; n];
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let max_iter = 10 * n;
    let mut res_norm = b_norm;
    let mut iterations = 0;
    for it in 0..max_iter {
        iterations = it + 1;
        let ap = a.matvec(&p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) || !pap.is_finite() {
            // Not SPD along this direction (or numerically degenerate):
            // abandon CG and let the fallback below decide.
            break;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res_norm = norm(&r);
        if res_norm <= target {
            // Guard against drift of the recurrence residual.
            let true_res = residual_norm(a, &x, b);
            if true_res <= target {
                return Ok(x);
            }
            res_norm = true_res;
        }
        for i in 0..n {
            z[i] = r[i] * inv_diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    let mut best_residual = res_norm;
    if n <= DENSE_FALLBACK_LIMIT {
        if let Some(x) = dense_cholesky_solve(a, b) {
            let true_res = residual_norm(a, &x, b);
            if true_res <= target {
                return Ok(x);
            }
            best_residual = best_residual.min(true_res);
        }
    }
    Err(Error::SolverFailure {
        context: format!("conjugate gradients on {n}x{n} system"),
        residual: best_residual / b_norm,
        iterations,
    })
}

/// Warm-started SPD solve: solve `A d = b − A x₀` and return `x₀ + d`.
///
/// The tolerance applies to the *defect* `b − A x₀`, so when `x₀` is
/// already close to the solution the final residual `‖Ax − b‖₂ ≤
/// tol·‖b − A x₀‖₂` is far below `tol·‖b‖₂`.  This matters for implicit
/// time steps whose right-hand side is dominated by the history term: the
/// increment is small compared to the state, and solving for it keeps the
/// absolute algebraic error proportional to the increment.
pub fn solve_spd_guess(a: &SparseMatrix, b: &[f64], x0: &[f64], tol: f64) -> Result<Vec<f64>> {
    let n = a.n_rows();
    if x0.len() != n || b.len() != n {
        return Err(Error::invalid("solve_spd_guess dimension mismatch"));
    }
    let ax0 = a.matvec(x0);
    let defect: Vec<f64> = b.iter().zip(&ax0).map(|(bi, ai)| bi - ai).collect();
    let d = solve_spd(a, &defect, tol)?;
    Ok(x0.iter().zip(&d).map(|(x, di)| x + di).collect())
}

fn residual_norm(a: &SparseMatrix, x: &[f64], b: &[f64]) -> f64 {
    let ax = a.matvec(x);
    let r: Vec<f64> = ax.iter().zip(b).map(|(axi, bi)| bi - axi).collect();
    norm(&r)
}

fn dense_cholesky_solve(a: &SparseMatrix, b: &[f64]) -> Option<Vec<f64>> {
    let dense = a.to_dense();
    let chol = nalgebra::Cholesky::new(dense)?;
    let sol = chol.solve(&nalgebra::DVector::from_column_slice(b));
    Some(sol.as_slice().to_vec())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn random_spd(n: usize, seed: u64) -> SparseMatrix {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let mut g = nalgebra::DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                g[(i, j)] = rng.gen_range(-1.0..1.0);
            }
        }
        let spd = &g * g.transpose() + nalgebra::DMatrix::identity(n, n) * 0.5;
        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                triplets.push((i, j, spd[(i, j)]));
            }
        }
        SparseMatrix::from_triplets(n, n, &triplets).unwrap()
    }

    #[test]
    fn identity_solve() {
        let a = SparseMatrix::from_diag(&[1.0; 5]);
        let b = [1.0, -2.0, 3.0, 0.0, 0.5];
        let x = solve_spd(&a, &b, 1e-12).unwrap();
        for i in 0..5 {
            assert!((x[i] - b[i]).abs() < 1e-12);
        }
    }

    #[test]
    fn random_spd_residual_below_tol() {
        for seed in 0..5 {
            let n = 40;
            let a = random_spd(n, seed);
            let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(100 + seed);
            let b: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            let x = solve_spd(&a, &b, 1e-11).unwrap();
            let bn = norm(&b);
            assert!(residual_norm(&a, &x, &b) <= 1e-11 * bn);
        }
    }

    #[test]
    fn zero_rhs_gives_zero() {
        let a = random_spd(10, 7);
        let x = solve_spd(&a, &[0.0; 10], 1e-12).unwrap();
        assert!(x.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn indefinite_small_system_falls_back_or_fails_with_residual() {
        // diag(1, -1) is not SPD: CG breaks down, Cholesky fails, and the
        // error must carry the residual.
        let a = SparseMatrix::from_diag(&[1.0, -1.0]);
        let err = solve_spd(&a, &[1.0, 1.0], 1e-12).unwrap_err();
        match err {
            Error::SolverFailure { residual, .. } => assert!(residual.is_finite()),
            other => panic!("expected solver failure, got {other}"),
        }
    }

    #[test]
    fn warm_start_returns_exact_guess_unchanged() {
        let a = random_spd(20, 3);
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(42);
        let x_true: Vec<f64> = (0..20).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let b = a.matvec(&x_true);
        // Exact guess: defect is zero, so the guess comes back bit-identical.
        let x = solve_spd_guess(&a, &b, &x_true, 1e-12).unwrap();
        for (u, v) in x.iter().zip(&x_true) {
            assert_eq!(u.to_bits(), v.to_bits());
        }
        // Perturbed guess: residual must drop below tol times the defect.
        let x0: Vec<f64> = x_true.iter().map(|v| v + 1e-3).collect();
        let ax0 = a.matvec(&x0);
        let defect_norm = norm(
            &b.iter()
                .zip(&ax0)
                .map(|(bi, ai)| bi - ai)
                .collect::<Vec<_>>(),
        );
        let x = solve_spd_guess(&a, &b, &x0, 1e-11).unwrap();
        assert!(residual_norm(&a, &x, &b) <= 1e-11 * defect_norm * 1.001);
    }

    #[test]
    fn jacobi_helps_badly_scaled_systems() {
        // Strongly non-uniform diagonal; Jacobi-PCG should still converge
        // quickly and meet the tolerance.
        let n = 50;
        let mut triplets = Vec::new();
        for i in 0..n {
            let scale = 10.0_f64.powi((i % 7) as i32 - 3);
            triplets.push((i, i, 2.0 * scale));
            if i + 1 < n {
                let s2 = (scale * 10.0_f64.powi(((i + 1) % 7) as i32 - 3)).sqrt();
                triplets.push((i, i + 1, -0.5 * s2));
                triplets.push((i + 1, i, -0.5 * s2));
            }
        }
        let a = SparseMatrix::from_triplets(n, n, &triplets).unwrap();
        let b = vec![1.0; n];
        let x = solve_spd(&a, &b, 1e-12).unwrap();
        assert!(residual_norm(&a, &x, &b) <= 1e-12 * norm(&b));
    }
}
