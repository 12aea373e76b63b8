//! A scalar analog of the crack problem,
//!
//! ```text
//! ρ ü + k u + β_ε(γu + u̇) + g α_ε(u̇) = f(t),
//! ```
//!
//! integrated two ways: by the implicit stepper through [`OneDof`], and by
//! classical fourth-order Runge–Kutta with a tiny fixed step as an
//! independent reference.

use super::DiagnosticsError;
use crate::expr::Expr;
use crate::fem::{SparseMatrix, State};
use crate::interface::{beta_eps, dbeta_eps};
use crate::timestep::{Dynamics, StepError};

#[derive(Debug, Clone, PartialEq)]
pub struct OneDofParams {
    pub rho: f64,
    pub stiffness: f64,
    pub gamma: f64,
    pub epsilon: f64,
    pub g: f64,
    /// Load `f(t)`; spatial variables are not bound.
    pub force: Expr,
    pub u0: f64,
    pub v0: f64,
}

impl OneDofParams {
    pub fn validate(&self) -> Result<(), DiagnosticsError> {
        let bad = |m: &str| Err(DiagnosticsError::Oracle(m.into()));
        if !(self.rho > 0.0) || !(self.stiffness > 0.0) {
            return bad("ρ and k must be positive");
        }
        if !(self.epsilon > 0.0) {
            return bad("ε must be positive");
        }
        if !(self.gamma >= 0.0) || !(self.g >= 0.0) {
            return bad("γ and g must be non-negative");
        }
        Ok(())
    }

    /// Period `2π√(ρ/k)` of the free oscillation.
    pub fn period(&self) -> f64 {
        2.0 * std::f64::consts::PI * (self.rho / self.stiffness).sqrt()
    }

    fn force_at(&self, t: f64) -> Result<f64, DiagnosticsError> {
        self.force.eval(t, &[]).map_err(|e| DiagnosticsError::Oracle(format!("evaluating f at t = {t}: {e}")))
    }

    /// `β_ε(γu + v) + g α_ε(v)`.
    fn interface(&self, u: f64, v: f64) -> f64 {
        beta_eps(self.gamma * u + v, self.epsilon) + self.g * v / (v * v + self.epsilon * self.epsilon).sqrt()
    }

    /// Total mechanical energy `½ρv² + ½ku²`.
    pub fn energy(&self, u: f64, v: f64) -> f64 {
        0.5 * self.rho * v * v + 0.5 * self.stiffness * u * u
    }
}

/// Fine-step reference trajectory sampled every `dt`.
#[derive(Debug, Clone, PartialEq)]
pub struct OracleTrajectory {
    pub dt: f64,
    pub u: Vec<f64>,
    pub v: Vec<f64>,
    pub a: Vec<f64>,
}

impl OracleTrajectory {
    /// Displacement at time `t`, by cubic Hermite interpolation between the
    /// neighbouring samples.
    pub fn u_at(&self, t: f64) -> f64 {
        let last = self.u.len() - 1;
        let s = (t / self.dt).clamp(0.0, last as f64);
        let k = (s.floor() as usize).min(last.saturating_sub(1));
        if last == 0 {
            return self.u[0];
        }
        let x = s - k as f64;
        let h = self.dt;
        let (h00, h10, h01, h11) =
            (2.0 * x.powi(3) - 3.0 * x * x + 1.0, x.powi(3) - 2.0 * x * x + x, -2.0 * x.powi(3) + 3.0 * x * x, x.powi(3) - x * x);
        h00 * self.u[k] + h10 * h * self.v[k] + h01 * self.u[k + 1] + h11 * h * self.v[k + 1]
    }

    pub fn t_end(&self) -> f64 {
        self.dt * (self.u.len() - 1) as f64
    }
}

/// Integrates the scalar problem on `[0, t_end]` with RK4 at step
/// `dt_fine`, which must not exceed `10⁻⁵` of the free period.
pub fn one_dof_oracle(params: &OneDofParams, t_end: f64, dt_fine: f64) -> Result<OracleTrajectory, DiagnosticsError> {
    params.validate()?;
    if !(dt_fine > 0.0) || dt_fine > 1e-5 * params.period() {
        return Err(DiagnosticsError::Oracle(format!(
            "dt_fine = {dt_fine} exceeds 1e-5 of the period {}",
            params.period()
        )));
    }
    let n = (t_end / dt_fine).ceil().max(0.0) as usize;
    let h = if n == 0 { dt_fine } else { t_end / n as f64 };
    let p = params;
    let accel = |t: f64, u: f64, v: f64| -> Result<f64, DiagnosticsError> {
        Ok((p.force_at(t)? - p.stiffness * u - p.interface(u, v)) / p.rho)
    };
    let (mut u, mut v) = (p.u0, p.v0);
    let mut out = OracleTrajectory { dt: h, u: vec![u], v: vec![v], a: vec![accel(0.0, u, v)?] };
    for k in 0..n {
        let t = k as f64 * h;
        let (k1u, k1v) = (v, accel(t, u, v)?);
        let (k2u, k2v) = (v + 0.5 * h * k1v, accel(t + 0.5 * h, u + 0.5 * h * k1u, v + 0.5 * h * k1v)?);
        let (k3u, k3v) = (v + 0.5 * h * k2v, accel(t + 0.5 * h, u + 0.5 * h * k2u, v + 0.5 * h * k2v)?);
        let (k4u, k4v) = (v + h * k3v, accel(t + h, u + h * k3u, v + h * k3v)?);
        u += h / 6.0 * (k1u + 2.0 * k2u + 2.0 * k3u + k4u);
        v += h / 6.0 * (k1v + 2.0 * k2v + 2.0 * k3v + k4v);
        out.u.push(u);
        out.v.push(v);
        out.a.push(accel(t + h, u, v)?);
    }
    Ok(out)
}

/// The scalar problem as a [`Dynamics`] system with one unconstrained dof.
#[derive(Debug, Clone)]
pub struct OneDof {
    pub params: OneDofParams,
    mass: SparseMatrix,
    stiffness: SparseMatrix,
    constrained: Vec<bool>,
}

impl OneDof {
    pub fn new(params: OneDofParams) -> Result<OneDof, DiagnosticsError> {
        params.validate()?;
        Ok(OneDof {
            mass: SparseMatrix::from_triplets(1, &[(0, 0, params.rho)]),
            stiffness: SparseMatrix::from_triplets(1, &[(0, 0, params.stiffness)]),
            constrained: vec![false],
            params,
        })
    }

    /// Initial state with the consistent acceleration.
    pub fn initial_state(&self) -> Result<State, StepError> {
        let (u, v) = (vec![self.params.u0], vec![self.params.v0]);
        let a = crate::timestep::initial_acceleration(self, &u, &v, 0.0)?;
        Ok(State { t: 0.0, u, v, a })
    }
}

impl Dynamics for OneDof {
    fn n_dofs(&self) -> usize {
        1
    }

    fn constrained(&self) -> &[bool] {
        &self.constrained
    }

    fn mass(&self) -> &SparseMatrix {
        &self.mass
    }

    fn stiffness(&self) -> &SparseMatrix {
        &self.stiffness
    }

    fn pinned_mass(&self) -> &SparseMatrix {
        &self.mass
    }

    fn load(&self, t: f64) -> Result<Vec<f64>, StepError> {
        self.params.force_at(t).map(|f| vec![f]).map_err(|e| StepError::Params(e.to_string()))
    }

    fn interface(&self, u: &[f64], v: &[f64], _t: f64) -> Result<Vec<f64>, StepError> {
        Ok(vec![self.params.interface(u[0], v[0])])
    }

    fn interface_tangent(&self, u: &[f64], v: &[f64], _t: f64, cu: f64, cv: f64) -> Result<SparseMatrix, StepError> {
        let p = &self.params;
        let x = p.gamma * u[0] + v[0];
        let phi = (v[0] * v[0] + p.epsilon * p.epsilon).sqrt();
        // d/dv of v/φ is ε²/φ³
        let d = dbeta_eps(x, p.epsilon) * (p.gamma * cu + cv) + p.g * p.epsilon * p.epsilon / phi.powi(3) * cv;
        Ok(SparseMatrix::from_triplets(1, &[(0, 0, d)]))
    }
}
