//! Crack-face operators: jumps, the penalized dynamic contact law and the
//! regularized Tresca friction law.
//!
//! All integrals over `Γ_c` are evaluated with the facet rule of
//! [`Quadrature::facet`](crate::fem::Quadrature::facet) on the crack pairs. A
//! jump at a quadrature point is interpolated from the paired nodal values,
//!
//! ```text
//! ⟦w⟧(x_q) = Σ_k N_k(x_q) (w[plus_k] − w[minus_k]),
//! ```
//!
//! and split into a normal part `⟦w_n⟧ = ⟦w⟧·n` and a tangential part
//! `⟦w_τ⟧ = ⟦w⟧ − ⟦w_n⟧ n`, with `n` pointing from the minus to the plus side.
//!
//! The contact term is driven by `x = ⟦γu_n + v_n⟧`. With `γ = 0` it penalizes
//! the normal closing *velocity*; large `γ` approaches the classical
//! displacement condition with time scale `δ = 1/γ`.
//!
//! # Newton tangents
//!
//! The time integrator solves for one unknown `z` per step with
//! `∂u/∂z = coeff_u·I` and `∂v/∂z = coeff_v·I`. [`contact_tangent`] and
//! [`friction_tangent`] return the exact Jacobians of [`contact_residual`] and
//! [`friction_residual`] with respect to such a `z`:
//!
//! ```text
//! T_c = Σ_q w_q dβ_ε(x_q) (γ coeff_u + coeff_v) J_nᵀ J_n
//! T_f = Σ_q w_q g_q coeff_v (P J)ᵀ ∇α_ε(s_q) (P J)
//! ```
//!
//! where `J` maps nodal values to the jump at `x_q`, `P = I − n nᵀ` and
//! `s_q = ⟦v_τ⟧(x_q)`. Both are symmetric and positive semidefinite.

mod regularization;

pub use regularization::{alpha_eps, beta_eps, dalpha_eps, dbeta_eps, neg_part, phi_eps, psi_eps};

use thiserror::Error;

use crate::expr::{EvalError, Expr};
use crate::fem::assembly::map_point;
use crate::fem::{Quadrature, SparseMatrix};
use crate::mesh::{CrackedMesh, MeshError};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum InterfaceError {
    #[error("invalid contact parameters: {0}")]
    Params(String),
    #[error("friction threshold g is negative ({value}) at t = {t}, x = {point:?}")]
    NegativeThreshold { t: f64, point: Vec<f64>, value: f64 },
    #[error("evaluating g at t = {t}, x = {point:?}: {source}")]
    Eval { t: f64, point: Vec<f64>, source: EvalError },
}

/// Interface law parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ContactParams {
    /// Weight `γ ≥ 0` of the displacement in the contact law.
    pub gamma: f64,
    /// Penalty parameter `ε > 0`.
    pub epsilon: f64,
    /// Tresca threshold `g(t, x) ≥ 0`.
    pub g: Expr,
}

impl ContactParams {
    pub fn new(gamma: f64, epsilon: f64, g: Expr) -> Result<ContactParams, InterfaceError> {
        let p = ContactParams { gamma, epsilon, g };
        p.validate()?;
        Ok(p)
    }

    /// Frictionless parameters.
    pub fn frictionless(gamma: f64, epsilon: f64) -> Result<ContactParams, InterfaceError> {
        ContactParams::new(gamma, epsilon, Expr::constant(0.0))
    }

    pub fn validate(&self) -> Result<(), InterfaceError> {
        if !(self.gamma >= 0.0) || !self.gamma.is_finite() {
            return Err(InterfaceError::Params(format!("γ must be finite and ≥ 0, got {}", self.gamma)));
        }
        if !(self.epsilon > 0.0) || !self.epsilon.is_finite() {
            return Err(InterfaceError::Params(format!("ε must be finite and > 0, got {}", self.epsilon)));
        }
        Ok(())
    }

    /// Relaxation time `δ = 1/γ`; infinite for the velocity law `γ = 0`.
    pub fn delta(&self) -> f64 {
        if self.gamma == 0.0 {
            f64::INFINITY
        } else {
            1.0 / self.gamma
        }
    }
}

/// One quadrature point on the crack.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackPoint {
    /// Index of the crack pair the point belongs to.
    pub pair: usize,
    pub x: Vec<f64>,
    /// Absolute weight (rule weight times facet measure).
    pub weight: f64,
    /// Nodal basis values of the facet vertices at the point.
    pub shape: Vec<f64>,
    pub plus: Vec<usize>,
    pub minus: Vec<usize>,
    pub normal: [f64; 3],
}

/// Quadrature points of all crack pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct CrackQuadrature {
    pub dim: usize,
    pub points: Vec<CrackPoint>,
}

/// Jump of a nodal field at one crack point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Jump {
    pub full: [f64; 3],
    pub normal: f64,
    pub tangential: [f64; 3],
}

impl CrackQuadrature {
    pub fn new(mesh: &CrackedMesh) -> Result<CrackQuadrature, MeshError> {
        let maps = mesh.crack_trace_maps()?;
        let rule = Quadrature::facet(mesh.dim);
        let mut points = Vec::with_capacity(maps.len() * rule.len());
        for (pi, (map, pair)) in maps.iter().zip(&mesh.crack_pairs).enumerate() {
            let (_, measure) = mesh.facet_normal(&map.plus);
            for (bary, w) in rule.points.iter().zip(&rule.weights) {
                points.push(CrackPoint {
                    pair: pi,
                    x: map_point(mesh, &map.plus, bary),
                    weight: w * measure,
                    shape: bary.clone(),
                    plus: map.plus.clone(),
                    minus: map.minus.clone(),
                    normal: pair.normal,
                });
            }
        }
        Ok(CrackQuadrature { dim: mesh.dim, points })
    }

    /// `|Γ_c|`.
    pub fn measure(&self) -> f64 {
        self.points.iter().map(|p| p.weight).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    /// Jump of the nodal field `w` at point `q`.
    pub fn jump(&self, q: &CrackPoint, w: &[f64]) -> Jump {
        let d = self.dim;
        let mut full = [0.0; 3];
        for ((&p, &m), &s) in q.plus.iter().zip(&q.minus).zip(&q.shape) {
            for (i, f) in full.iter_mut().enumerate().take(d) {
                *f += s * (w[p * d + i] - w[m * d + i]);
            }
        }
        let normal: f64 = (0..d).map(|i| full[i] * q.normal[i]).sum();
        let mut tangential = [0.0; 3];
        for i in 0..d {
            tangential[i] = full[i] - normal * q.normal[i];
        }
        Jump { full, normal, tangential }
    }

    /// Threshold `g(t, x_q)` at every point; a negative sample is an error.
    pub fn threshold(&self, g: &Expr, t: f64) -> Result<Vec<f64>, InterfaceError> {
        if let Expr::Num(c) = *g {
            if c < 0.0 {
                let point = self.points.first().map(|q| q.x.clone()).unwrap_or_default();
                return Err(InterfaceError::NegativeThreshold { t, point, value: c });
            }
            return Ok(vec![c; self.points.len()]);
        }
        self.points
            .iter()
            .map(|q| {
                let value = g.eval(t, &q.x).map_err(|source| InterfaceError::Eval { t, point: q.x.clone(), source })?;
                if value < 0.0 || value.is_nan() {
                    return Err(InterfaceError::NegativeThreshold { t, point: q.x.clone(), value });
                }
                Ok(value)
            })
            .collect()
    }

    /// Adds `scale · Σ_k N_k (±e_i)` for the jump row vector `vec` at `q`.
    fn scatter(&self, q: &CrackPoint, vec: &[f64; 3], scale: f64, out: &mut [f64]) {
        let d = self.dim;
        for ((&p, &m), &s) in q.plus.iter().zip(&q.minus).zip(&q.shape) {
            for i in 0..d {
                out[p * d + i] += scale * s * vec[i];
                out[m * d + i] -= scale * s * vec[i];
            }
        }
    }

    /// Adds `scale · Jᵀ A J` for the `d × d` block `a` at `q`.
    fn scatter_block(&self, q: &CrackPoint, a: &[[f64; 3]; 3], scale: f64, triplets: &mut Vec<(usize, usize, f64)>) {
        let d = self.dim;
        let nodes: Vec<(usize, f64)> = q
            .plus
            .iter()
            .zip(&q.shape)
            .map(|(&p, &s)| (p, s))
            .chain(q.minus.iter().zip(&q.shape).map(|(&m, &s)| (m, -s)))
            .collect();
        for &(r, sr) in &nodes {
            for &(c, sc) in &nodes {
                for i in 0..d {
                    for j in 0..d {
                        let v = scale * sr * sc * a[i][j];
                        if v != 0.0 {
                            triplets.push((r * d + i, c * d + j, v));
                        }
                    }
                }
            }
        }
    }
}

/// Jumps of `w` at every crack point.
pub fn jump_eval(w: &[f64], quad: &CrackQuadrature) -> Vec<Jump> {
    quad.points.iter().map(|q| quad.jump(q, w)).collect()
}

/// Contact argument `⟦γu_n + v_n⟧` at every crack point.
pub fn contact_argument(u: &[f64], v: &[f64], params: &ContactParams, quad: &CrackQuadrature) -> Vec<f64> {
    quad.points
        .iter()
        .map(|q| {
            let un = if params.gamma == 0.0 { 0.0 } else { quad.jump(q, u).normal };
            params.gamma * un + quad.jump(q, v).normal
        })
        .collect()
}

/// Nodal vector `r` with `rᵀw = ∫_{Γ_c} β_ε(⟦γu_n + v_n⟧) ⟦w_n⟧ ds`.
pub fn contact_residual(u: &[f64], v: &[f64], params: &ContactParams, quad: &CrackQuadrature) -> Vec<f64> {
    let mut r = vec![0.0; u.len()];
    for (q, x) in quad.points.iter().zip(contact_argument(u, v, params, quad)) {
        let b = beta_eps(x, params.epsilon);
        if b != 0.0 {
            quad.scatter(q, &q.normal, q.weight * b, &mut r);
        }
    }
    r
}

/// Nodal vector `r` with `rᵀw = ∫_{Γ_c} g α_ε(⟦v_τ⟧)·⟦w_τ⟧ ds`.
pub fn friction_residual(
    v: &[f64],
    t: f64,
    params: &ContactParams,
    quad: &CrackQuadrature,
) -> Result<Vec<f64>, InterfaceError> {
    let mut r = vec![0.0; v.len()];
    if params.g.is_zero() {
        return Ok(r);
    }
    let g = quad.threshold(&params.g, t)?;
    let d = quad.dim;
    for (q, gq) in quad.points.iter().zip(g) {
        if gq == 0.0 {
            continue;
        }
        let s = quad.jump(q, v).tangential;
        // α_ε(s) is tangential because s is, so Pᵀα = α
        let a = alpha_eps(&s[..d], params.epsilon);
        let mut dir = [0.0; 3];
        dir[..d].copy_from_slice(&a);
        quad.scatter(q, &dir, q.weight * gq, &mut r);
    }
    Ok(r)
}

/// Jacobian of [`contact_residual`] with respect to an unknown `z` with
/// `∂u/∂z = coeff_u` and `∂v/∂z = coeff_v`.
pub fn contact_tangent(
    u: &[f64],
    v: &[f64],
    params: &ContactParams,
    quad: &CrackQuadrature,
    coeff_u: f64,
    coeff_v: f64,
) -> SparseMatrix {
    let d = quad.dim;
    let chain = params.gamma * coeff_u + coeff_v;
    let mut triplets = Vec::new();
    for (q, x) in quad.points.iter().zip(contact_argument(u, v, params, quad)) {
        let db = dbeta_eps(x, params.epsilon);
        if db == 0.0 {
            continue;
        }
        let mut nn = [[0.0; 3]; 3];
        for i in 0..d {
            for j in 0..d {
                nn[i][j] = q.normal[i] * q.normal[j];
            }
        }
        quad.scatter_block(q, &nn, q.weight * db * chain, &mut triplets);
    }
    SparseMatrix::from_triplets(u.len(), &triplets)
}

/// Jacobian of [`friction_residual`] with respect to an unknown `z` with
/// `∂v/∂z = coeff_v`.
pub fn friction_tangent(
    v: &[f64],
    t: f64,
    params: &ContactParams,
    quad: &CrackQuadrature,
    coeff_v: f64,
) -> Result<SparseMatrix, InterfaceError> {
    if params.g.is_zero() {
        return Ok(SparseMatrix::zeros(v.len()));
    }
    let g = quad.threshold(&params.g, t)?;
    let d = quad.dim;
    let mut triplets = Vec::new();
    for (q, gq) in quad.points.iter().zip(g) {
        if gq == 0.0 {
            continue;
        }
        let s = quad.jump(q, v).tangential;
        let phi = phi_eps(&s[..d], params.epsilon);
        let a: Vec<f64> = (0..d).map(|i| s[i] / phi).collect();
        // P ∇α P = (P − α αᵀ)/φ since α ⟂ n
        let mut block = [[0.0; 3]; 3];
        for i in 0..d {
            for j in 0..d {
                let p = if i == j { 1.0 } else { 0.0 } - q.normal[i] * q.normal[j];
                block[i][j] = (p - a[i] * a[j]) / phi;
            }
        }
        quad.scatter_block(q, &block, q.weight * gq * coeff_v, &mut triplets);
    }
    Ok(SparseMatrix::from_triplets(v.len(), &triplets))
}

/// Interface tractions and kinematics at one crack point.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Traction {
    /// Normal stress `σ_n = β_ε(⟦γu_n + v_n⟧) ≤ 0`.
    pub sigma_n: f64,
    /// Tangential stress `σ_τ = g α_ε(⟦v_τ⟧)`.
    pub sigma_tau: [f64; 3],
    /// `|σ_τ|`, evaluated as `g·(|s|/φ_ε(s))` so that it never exceeds `g`.
    pub sigma_tau_norm: f64,
    /// Contact argument `⟦γu_n + v_n⟧`.
    pub contact_arg: f64,
    /// Slip rate `⟦v_τ⟧`.
    pub slip: [f64; 3],
    pub g: f64,
    pub weight: f64,
}

/// Regularized interface tractions at every crack point.
pub fn recover_tractions(
    u: &[f64],
    v: &[f64],
    t: f64,
    params: &ContactParams,
    quad: &CrackQuadrature,
) -> Result<Vec<Traction>, InterfaceError> {
    let d = quad.dim;
    let g = quad.threshold(&params.g, t)?;
    let args = contact_argument(u, v, params, quad);
    Ok(quad
        .points
        .iter()
        .zip(args)
        .zip(g)
        .map(|((q, x), gq)| {
            let slip = quad.jump(q, v).tangential;
            let s_norm = slip[..d].iter().map(|c| c * c).sum::<f64>().sqrt();
            let phi = phi_eps(&slip[..d], params.epsilon);
            let mut sigma_tau = [0.0; 3];
            for i in 0..d {
                sigma_tau[i] = gq * slip[i] / phi;
            }
            Traction {
                sigma_n: beta_eps(x, params.epsilon),
                sigma_tau,
                sigma_tau_norm: gq * (s_norm / phi),
                contact_arg: x,
                slip,
                g: gq,
                weight: q.weight,
            }
        })
        .collect())
}
