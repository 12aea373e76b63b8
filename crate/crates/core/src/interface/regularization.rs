//! Smooth convex regularizations of the non-penetration indicator and of the
//! Euclidean norm, and their derivatives.
//!
//! With `[x]₋ = max(−x, 0)`:
//!
//! | function | formula | role |
//! |---|---|---|
//! | `ψ_ε(x)` | `[x]₋³ / (3ε)` | penalty potential of the contact law |
//! | `β_ε(x)` | `−[x]₋² / ε` | `ψ_ε′`, the regularized normal stress |
//! | `dβ_ε(x)` | `2[x]₋ / ε` | `β_ε′`, used by Newton |
//! | `φ_ε(x)` | `√(‖x‖² + ε²)` | smoothed slip magnitude |
//! | `α_ε(x)` | `x / φ_ε(x)` | `∇φ_ε`, the regularized slip direction |
//! | `∇α_ε(x)` | `(I − α αᵀ) / φ_ε` | Jacobian of `α_ε` |
//!
//! `ψ_ε` and `φ_ε` are convex, so `β_ε` and `α_ε` are monotone and the
//! Jacobians are positive semidefinite.

/// `[x]₋ = max(−x, 0)`.
#[inline]
pub fn neg_part(x: f64) -> f64 {
    (-x).max(0.0)
}

#[inline]
pub fn psi_eps(x: f64, eps: f64) -> f64 {
    neg_part(x).powi(3) / (3.0 * eps)
}

#[inline]
pub fn beta_eps(x: f64, eps: f64) -> f64 {
    -neg_part(x).powi(2) / eps
}

#[inline]
pub fn dbeta_eps(x: f64, eps: f64) -> f64 {
    2.0 * neg_part(x) / eps
}

#[inline]
pub fn phi_eps(x: &[f64], eps: f64) -> f64 {
    (x.iter().map(|v| v * v).sum::<f64>() + eps * eps).sqrt()
}

pub fn alpha_eps(x: &[f64], eps: f64) -> Vec<f64> {
    let phi = phi_eps(x, eps);
    x.iter().map(|v| v / phi).collect()
}

/// `∇α_ε(x)` as a dense row-major `d × d` matrix.
pub fn dalpha_eps(x: &[f64], eps: f64) -> Vec<Vec<f64>> {
    let phi = phi_eps(x, eps);
    let a: Vec<f64> = x.iter().map(|v| v / phi).collect();
    (0..x.len())
        .map(|i| {
            (0..x.len())
                .map(|j| {
                    let id = if i == j { 1.0 } else { 0.0 };
                    (id - a[i] * a[j]) / phi
                })
                .collect()
        })
        .collect()
}
