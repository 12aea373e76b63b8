//! Jacobi-preconditioned conjugate gradients.

use thiserror::Error;

use super::{dot, SparseMatrix};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum SolveError {
    #[error("conjugate gradients did not converge in {iterations} iterations (relative residual {relative_residual:.3e})")]
    NotConverged { iterations: usize, relative_residual: f64 },
    #[error("conjugate gradients broke down: pᵀAp = {0:e} (matrix not positive definite?)")]
    Breakdown(f64),
}

#[derive(Debug, Clone)]
pub struct CgOutcome {
    pub x: Vec<f64>,
    pub iterations: usize,
    pub relative_residual: f64,
}

/// Solves `A x = rhs` for symmetric positive definite `A` until
/// `‖A x − rhs‖ ≤ tol·‖rhs‖`.
pub fn solve_spd(a: &SparseMatrix, rhs: &[f64], tol: f64, maxit: usize) -> Result<Vec<f64>, SolveError> {
    pcg(a, rhs, None, tol, maxit).map(|o| o.x)
}

/// Same as [`solve_spd`] with an optional starting guess, returning
/// iteration statistics.
pub fn pcg(
    a: &SparseMatrix,
    rhs: &[f64],
    guess: Option<&[f64]>,
    tol: f64,
    maxit: usize,
) -> Result<CgOutcome, SolveError> {
    let n = a.dim();
    assert_eq!(rhs.len(), n);
    let rhs_norm = dot(rhs, rhs).sqrt();
    if rhs_norm == 0.0 {
        return Ok(CgOutcome { x: vec![0.0; n], iterations: 0, relative_residual: 0.0 });
    }
    let inv_diag: Vec<f64> = a.diagonal().into_iter().map(|d| if d > 0.0 { 1.0 / d } else { 1.0 }).collect();

    let mut x = guess.map_or_else(|| vec![0.0; n], |g| g.to_vec());
    let mut r = rhs.to_vec();
    if guess.is_some() {
        let ax = a.mul_vec(&x);
        r.iter_mut().zip(&ax).for_each(|(ri, axi)| *ri -= axi);
    }
    let mut res = dot(&r, &r).sqrt();
    if res <= tol * rhs_norm {
        return Ok(CgOutcome { x, iterations: 0, relative_residual: res / rhs_norm });
    }
    let mut z: Vec<f64> = r.iter().zip(&inv_diag).map(|(ri, di)| ri * di).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    let mut ap = vec![0.0; n];
    for it in 1..=maxit {
        a.mul_vec_into(&p, &mut ap);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return Err(SolveError::Breakdown(pap));
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        res = dot(&r, &r).sqrt();
        if res <= tol * rhs_norm {
            return Ok(CgOutcome { x, iterations: it, relative_residual: res / rhs_norm });
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
    Err(SolveError::NotConverged { iterations: maxit, relative_residual: res / rhs_norm })
}

#[cfg(test)]
mod tests {
    use super::*;
    use nalgebra::{DMatrix, DVector};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn identity_and_zero_rhs() {
        let id = SparseMatrix::identity(4);
        let b = vec![1.0, -2.0, 3.0, 0.5];
        assert_eq!(solve_spd(&id, &b, 1e-14, 10).unwrap(), b);
        assert_eq!(solve_spd(&id, &[0.0; 4], 1e-14, 10).unwrap(), vec![0.0; 4]);
    }

    #[test]
    fn matches_dense_cholesky() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 10;
        let b = DMatrix::<f64>::from_fn(n, n, |_, _| rng.gen_range(-1.0..1.0));
        let spd = &b * b.transpose() + DMatrix::identity(n, n) * 0.5;
        let rhs = DVector::<f64>::from_fn(n, |_, _| rng.gen_range(-1.0..1.0));
        let oracle = spd.clone().cholesky().unwrap().solve(&rhs);

        let mut triplets = Vec::new();
        for i in 0..n {
            for j in 0..n {
                triplets.push((i, j, spd[(i, j)]));
            }
        }
        let a = SparseMatrix::from_triplets(n, &triplets);
        let x = solve_spd(&a, rhs.as_slice(), 1e-12, 200).unwrap();
        for i in 0..n {
            assert!((x[i] - oracle[i]).abs() <= 1e-10 * oracle.amax().max(1.0), "{i}: {} vs {}", x[i], oracle[i]);
        }
        // deterministic
        assert_eq!(x, solve_spd(&a, rhs.as_slice(), 1e-12, 200).unwrap());
    }

    #[test]
    fn reports_non_convergence() {
        let a = SparseMatrix::from_triplets(3, &[(0, 0, 1.0), (1, 1, 100.0), (2, 2, 1e4), (0, 1, 0.5), (1, 0, 0.5)]);
        let err = pcg(&a, &[1.0, 1.0, 1.0], Some(&[5.0, 5.0, 5.0]), 1e-30, 1).unwrap_err();
        assert!(matches!(err, SolveError::NotConverged { iterations: 1, .. }));
    }
}
