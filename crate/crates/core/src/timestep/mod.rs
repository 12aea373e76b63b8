//! Implicit time integration of the semi-discrete system
//!
//! ```text
//! M u″ + K u + N(u, u′, t) = L(t),      N = contact + friction residuals,
//! ```
//!
//! with a Newton iteration on the regularized interface terms at every step.
//!
//! Two one-step schemes are available; both reduce to the trapezoidal rule
//! for the linear part and conserve `½vᵀMv + ½uᵀKu` exactly when `N = 0`,
//! `L = 0` and the velocity weight is ½.
//!
//! * [`Scheme::Midpoint`] (default). The unknown is the end-of-step velocity
//!   `z = v⁺`; with `θ = newmark_g`,
//!   `u⁺ = u + dt((1−θ)v + θz)` and the balance
//!   `M(z − v)/dt + K u_θ + N(u_θ, v_θ, t_θ) = L(t_θ)` is imposed at the
//!   weighted point `u_θ = (1−θ)u + θu⁺`, `v_θ = (1−θ)v + θz`. For `θ = ½`
//!   the energy changes by exactly `dt·v_θᵀ(L − N_θ)` per step, so the
//!   monotone interface laws can only remove energy.
//! * [`Scheme::Newmark`]. The unknown is `a⁺`;
//!   `u⁺ = u + dt v + dt²((½−b)a + b a⁺)`, `v⁺ = v + dt((1−g)a + g a⁺)` and
//!   `M a⁺ + K u⁺ + N(u⁺, v⁺, t⁺) = L(t⁺)`. Evaluating `N` at the end point
//!   leaves a cross term `−(dt/4)(vᵀN⁺ + v⁺ᵀN)` in the energy balance, which
//!   can be positive when a contact releases.
//!
//! In both cases the Newton matrix is `c_M M + c_K K` plus the interface
//! tangents, symmetric positive definite on the free dofs, and is solved with
//! preconditioned conjugate gradients. A step whose Newton iteration fails is
//! retried as two half steps, down to five halvings.

mod model;

pub use model::{Compatibility, Model};

use std::collections::HashMap;

use thiserror::Error;

use crate::fem::{dot, norm2, pcg, FemError, SolveError, SparseMatrix, State};
use crate::interface::InterfaceError;

/// Relative tolerance of the inner conjugate gradient solves.
const LINEAR_TOL: f64 = 1e-12;
/// Maximum number of step halvings after a Newton failure.
pub const MAX_HALVINGS: usize = 5;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StepError {
    #[error("invalid time parameters: {0}")]
    Params(String),
    #[error(transparent)]
    Fem(#[from] FemError),
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error("linear solve failed at t = {t}: {source}")]
    Linear { t: f64, source: SolveError },
    #[error(
        "Newton did not converge on [{t_start}, {t_end}]: residual {residual:.3e} (target {target:.3e}) \
         after {iterations} iterations and {halvings} step halvings"
    )]
    Newton { t_start: f64, t_end: f64, iterations: usize, residual: f64, target: f64, halvings: usize },
    #[error("state became non-finite at t = {t}")]
    NonFinite { t: f64 },
    /// Raised by a run observer, for example when writing output fails.
    #[error("run aborted by observer: {0}")]
    Observer(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Scheme {
    #[default]
    Midpoint,
    Newmark,
}

impl std::str::FromStr for Scheme {
    type Err = StepError;

    fn from_str(s: &str) -> Result<Scheme, StepError> {
        match s.trim() {
            "midpoint" => Ok(Scheme::Midpoint),
            "newmark" => Ok(Scheme::Newmark),
            other => Err(StepError::Params(format!("unknown scheme `{other}` (expected midpoint or newmark)"))),
        }
    }
}

impl std::fmt::Display for Scheme {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Scheme::Midpoint => "midpoint",
            Scheme::Newmark => "newmark",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TimeParams {
    pub t_end: f64,
    pub dt: f64,
    /// Displacement averaging weight `b ∈ [0, ½]` (Newmark scheme only).
    pub newmark_b: f64,
    /// Velocity weight `g ∈ [½, 1]`; the midpoint scheme uses it as `θ`.
    pub newmark_g: f64,
    pub newton_tol: f64,
    pub newton_maxit: usize,
    pub scheme: Scheme,
}

impl Default for TimeParams {
    fn default() -> TimeParams {
        TimeParams {
            t_end: 1.0,
            dt: 0.01,
            newmark_b: 0.25,
            newmark_g: 0.5,
            newton_tol: 1e-10,
            newton_maxit: 30,
            scheme: Scheme::Midpoint,
        }
    }
}

impl TimeParams {
    pub fn validate(&self) -> Result<(), StepError> {
        let bad = |m: String| Err(StepError::Params(m));
        if !(self.dt > 0.0) || !self.dt.is_finite() {
            return bad(format!("dt must be positive, got {}", self.dt));
        }
        if !(self.t_end >= 0.0) || !self.t_end.is_finite() {
            return bad(format!("t_end must be finite and ≥ 0, got {}", self.t_end));
        }
        if !(0.0..=0.5).contains(&self.newmark_b) {
            return bad(format!("newmark_b must lie in [0, 1/2], got {}", self.newmark_b));
        }
        if !(0.5..=1.0).contains(&self.newmark_g) {
            return bad(format!("newmark_g must lie in [1/2, 1], got {}", self.newmark_g));
        }
        if !(self.newton_tol > 0.0) {
            return bad(format!("newton_tol must be positive, got {}", self.newton_tol));
        }
        if self.newton_maxit == 0 {
            return bad("newton_maxit must be at least 1".into());
        }
        Ok(())
    }

    /// Number of steps to reach `t_end`; the last step is shortened when
    /// `t_end` is not a multiple of `dt`.
    pub fn n_steps(&self) -> usize {
        let n = self.t_end / self.dt;
        let rounded = n.round();
        if (n - rounded).abs() <= 1e-9 * n.max(1.0) {
            rounded as usize
        } else {
            n.ceil() as usize
        }
    }

    /// Time of step `k`.
    pub fn time(&self, k: usize) -> f64 {
        if k >= self.n_steps() {
            self.t_end
        } else {
            k as f64 * self.dt
        }
    }
}

/// A second-order system `M u″ + K u + N(u, u′, t) = L(t)` with homogeneous
/// constraints on some dofs.
pub trait Dynamics {
    fn n_dofs(&self) -> usize;
    /// Dofs held at zero.
    fn constrained(&self) -> &[bool];
    fn mass(&self) -> &SparseMatrix;
    fn stiffness(&self) -> &SparseMatrix;
    /// Mass matrix with the constrained rows and columns pinned.
    fn pinned_mass(&self) -> &SparseMatrix;
    fn load(&self, t: f64) -> Result<Vec<f64>, StepError>;
    /// Nonlinear interface force `N(u, v, t)`.
    fn interface(&self, u: &[f64], v: &[f64], t: f64) -> Result<Vec<f64>, StepError>;
    /// Jacobian of `N` along `u = u(z)`, `v = v(z)` with `∂u/∂z = coeff_u`
    /// and `∂v/∂z = coeff_v`.
    fn interface_tangent(
        &self,
        u: &[f64],
        v: &[f64],
        t: f64,
        coeff_u: f64,
        coeff_v: f64,
    ) -> Result<SparseMatrix, StepError>;
}

fn zero_constrained(x: &mut [f64], constrained: &[bool]) {
    for (xi, &c) in x.iter_mut().zip(constrained) {
        if c {
            *xi = 0.0;
        }
    }
}

fn axpby(a: f64, x: &[f64], b: f64, y: &[f64]) -> Vec<f64> {
    x.iter().zip(y).map(|(xi, yi)| a * xi + b * yi).collect()
}

fn max_cg_iterations(n: usize) -> usize {
    20 * n + 200
}

/// Acceleration balancing the equation of motion at `(u, v, t)`:
/// `M a = L(t) − K u − N(u, v, t)`.
pub fn acceleration<D: Dynamics>(model: &D, u: &[f64], v: &[f64], t: f64) -> Result<Vec<f64>, StepError> {
    let mut rhs = model.load(t)?;
    let ku = model.stiffness().mul_vec(u);
    let n = model.interface(u, v, t)?;
    for i in 0..rhs.len() {
        rhs[i] -= ku[i] + n[i];
    }
    zero_constrained(&mut rhs, model.constrained());
    let out = pcg(model.pinned_mass(), &rhs, None, LINEAR_TOL, max_cg_iterations(rhs.len()))
        .map_err(|source| StepError::Linear { t, source })?;
    Ok(out.x)
}

/// Consistent initial acceleration for `u0`, `v0` at time `t0`.
pub fn initial_acceleration<D: Dynamics>(model: &D, u0: &[f64], v0: &[f64], t0: f64) -> Result<Vec<f64>, StepError> {
    acceleration(model, u0, v0, t0)
}

/// The point `(t, u, v, a)` at which a step imposes the equation of motion
/// `M a + K u + N(u, v, t) = L(t)`, and the length of that step.
///
/// For the midpoint scheme this is the weighted point `(t_θ, u_θ, v_θ,
/// (v⁺ − v)/dt)`; for the Newmark scheme it is the end of the step. The
/// interface tractions of the step live here, so interface diagnostics are
/// evaluated at balance points.
#[derive(Debug, Clone, PartialEq)]
pub struct Balance {
    pub state: State,
    pub dt: f64,
}

/// Work done by one step, with the balance point of every sub-step taken.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct StepReport {
    pub newton_iters: usize,
    pub halvings: usize,
    pub balances: Vec<Balance>,
}

impl StepReport {
    /// Report for an initial state, which balances itself.
    pub fn initial(state: &State) -> StepReport {
        StepReport { newton_iters: 0, halvings: 0, balances: vec![Balance { state: state.clone(), dt: 0.0 }] }
    }

    /// The balance point of the last sub-step.
    pub fn last_balance(&self) -> &Balance {
        self.balances.last().expect("a step report always holds a balance point")
    }
}

/// One-step integrator bound to a model. It caches the constant part of the
/// Newton matrix per step size.
pub struct Stepper<'a, D: Dynamics> {
    model: &'a D,
    params: TimeParams,
    cache: HashMap<u64, (SparseMatrix, SparseMatrix)>,
}

struct Attempt {
    state: State,
    iterations: usize,
    balance: Balance,
}

struct NewtonFailure {
    iterations: usize,
    residual: f64,
    target: f64,
}

enum AttemptError {
    Newton(NewtonFailure),
    Fatal(StepError),
}

impl From<StepError> for AttemptError {
    fn from(e: StepError) -> AttemptError {
        match e {
            StepError::Linear { .. } | StepError::NonFinite { .. } => {
                AttemptError::Newton(NewtonFailure { iterations: 0, residual: f64::NAN, target: f64::NAN })
            }
            other => AttemptError::Fatal(other),
        }
    }
}

impl<'a, D: Dynamics> Stepper<'a, D> {
    pub fn new(model: &'a D, params: &TimeParams) -> Result<Stepper<'a, D>, StepError> {
        params.validate()?;
        Ok(Stepper { model, params: params.clone(), cache: HashMap::new() })
    }

    pub fn params(&self) -> &TimeParams {
        &self.params
    }

    /// `c_M M + c_K K`, unpinned and pinned.
    fn base_matrix(&mut self, dt: f64) -> &(SparseMatrix, SparseMatrix) {
        let (cm, ck) = match self.params.scheme {
            Scheme::Midpoint => {
                let th = self.params.newmark_g;
                (1.0 / dt, th * th * dt)
            }
            Scheme::Newmark => (1.0, self.params.newmark_b * dt * dt),
        };
        let model = self.model;
        self.cache.entry(dt.to_bits()).or_insert_with(|| {
            let base = model.mass().linear_combination(cm, model.stiffness(), ck);
            let pinned = base.pin(model.constrained());
            (base, pinned)
        })
    }

    /// Advances `state` to `t_next`, halving the step on Newton failure.
    pub fn step(&mut self, state: &State, t_next: f64) -> Result<(State, StepReport), StepError> {
        self.step_with_depth(state, t_next, 0)
    }

    fn step_with_depth(&mut self, state: &State, t_next: f64, depth: usize) -> Result<(State, StepReport), StepError> {
        match self.attempt(state, t_next) {
            Ok(a) => Ok((a.state, StepReport { newton_iters: a.iterations, halvings: depth, balances: vec![a.balance] })),
            Err(AttemptError::Fatal(e)) => Err(e),
            Err(AttemptError::Newton(fail)) => {
                if depth >= MAX_HALVINGS {
                    log::error!(
                        "Newton failed on [{}, {}] after {} halvings; |u| = {:.3e}, |v| = {:.3e}, |a| = {:.3e}",
                        state.t,
                        t_next,
                        depth,
                        norm2(&state.u),
                        norm2(&state.v),
                        norm2(&state.a)
                    );
                    return Err(StepError::Newton {
                        t_start: state.t,
                        t_end: t_next,
                        iterations: fail.iterations,
                        residual: fail.residual,
                        target: fail.target,
                        halvings: depth,
                    });
                }
                log::debug!("halving step [{}, {}] (residual {:.3e})", state.t, t_next, fail.residual);
                let mid = 0.5 * (state.t + t_next);
                let (s1, st1) = self.step_with_depth(state, mid, depth + 1)?;
                let (s2, st2) = self.step_with_depth(&s1, t_next, depth + 1)?;
                let mut balances = st1.balances;
                balances.extend(st2.balances);
                Ok((
                    s2,
                    StepReport {
                        newton_iters: st1.newton_iters + st2.newton_iters,
                        halvings: st1.halvings.max(st2.halvings),
                        balances,
                    },
                ))
            }
        }
    }

    fn attempt(&mut self, s: &State, t_next: f64) -> Result<Attempt, AttemptError> {
        let dt = t_next - s.t;
        match self.params.scheme {
            Scheme::Midpoint => self.attempt_midpoint(s, dt),
            Scheme::Newmark => self.attempt_newmark(s, dt),
        }
    }

    /// Newton iteration on `R(z) = 0` where `eval(z)` returns the point
    /// `(u, v, t)` at which the balance is imposed together with the inertia
    /// term, and `(coeff_u, coeff_v)` are the derivatives of `(u, v)` in `z`.
    fn newton(
        &mut self,
        dt: f64,
        mut z: Vec<f64>,
        t_eval: f64,
        coeffs: (f64, f64),
        load: &[f64],
        eval: impl Fn(&[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>),
    ) -> Result<(Vec<f64>, usize), AttemptError> {
        let model = self.model;
        let constrained = model.constrained();
        let n = model.n_dofs();
        let tol = self.params.newton_tol;
        let maxit = self.params.newton_maxit;
        self.base_matrix(dt);
        let (base, base_pinned) = &self.cache[&dt.to_bits()];
        let mut last = (f64::NAN, f64::NAN);
        for it in 0..=maxit {
            let (u, v, inertia) = eval(&z);
            let ku = model.stiffness().mul_vec(&u);
            let nl = model.interface(&u, &v, t_eval)?;
            let mut r: Vec<f64> = (0..n).map(|i| inertia[i] + ku[i] + nl[i] - load[i]).collect();
            zero_constrained(&mut r, constrained);
            let res = norm2(&r);
            let target = tol * (norm2(&inertia) + norm2(&ku) + norm2(&nl) + norm2(load)) + f64::MIN_POSITIVE;
            if !res.is_finite() {
                return Err(AttemptError::Newton(NewtonFailure { iterations: it, residual: res, target }));
            }
            if res <= target {
                return Ok((z, it));
            }
            last = (res, target);
            if it == maxit {
                break;
            }
            let tangent = model.interface_tangent(&u, &v, t_eval, coeffs.0, coeffs.1)?;
            let jac = if tangent.nnz() == 0 {
                base_pinned.clone()
            } else {
                base.linear_combination(1.0, &tangent, 1.0).pin(constrained)
            };
            r.iter_mut().for_each(|x| *x = -*x);
            let delta = pcg(&jac, &r, None, LINEAR_TOL, max_cg_iterations(n))
                .map_err(|source| StepError::Linear { t: t_eval, source })?;
            for (zi, di) in z.iter_mut().zip(&delta.x) {
                *zi += di;
            }
        }
        Err(AttemptError::Newton(NewtonFailure { iterations: maxit, residual: last.0, target: last.1 }))
    }

    fn attempt_midpoint(&mut self, s: &State, dt: f64) -> Result<Attempt, AttemptError> {
        let th = self.params.newmark_g;
        let model = self.model;
        let t_th = s.t + th * dt;
        let t1 = s.t + dt;
        let mut load = model.load(t_th)?;
        zero_constrained(&mut load, model.constrained());
        let mv = model.mass().mul_vec(&s.v);
        let mut guess = axpby(1.0, &s.v, dt, &s.a);
        zero_constrained(&mut guess, model.constrained());
        let u_th = |z: &[f64]| -> Vec<f64> {
            (0..z.len()).map(|i| s.u[i] + th * dt * ((1.0 - th) * s.v[i] + th * z[i])).collect()
        };
        let (z, iterations) = self.newton(dt, guess, t_th, (th * th * dt, th), &load, |z| {
            let mz = model.mass().mul_vec(z);
            let inertia = (0..z.len()).map(|i| (mz[i] - mv[i]) / dt).collect();
            (u_th(z), axpby(1.0 - th, &s.v, th, z), inertia)
        })?;
        let u1: Vec<f64> = (0..z.len()).map(|i| s.u[i] + dt * ((1.0 - th) * s.v[i] + th * z[i])).collect();
        let balance = Balance {
            state: State {
                t: t_th,
                u: u_th(&z),
                v: axpby(1.0 - th, &s.v, th, &z),
                a: (0..z.len()).map(|i| (z[i] - s.v[i]) / dt).collect(),
            },
            dt,
        };
        let a1 = acceleration(model, &u1, &z, t1)?;
        let state = State { t: t1, u: u1, v: z, a: a1 };
        check_finite(&state)?;
        Ok(Attempt { state, iterations, balance })
    }

    fn attempt_newmark(&mut self, s: &State, dt: f64) -> Result<Attempt, AttemptError> {
        let (b, g) = (self.params.newmark_b, self.params.newmark_g);
        let model = self.model;
        let t1 = s.t + dt;
        let mut load = model.load(t1)?;
        zero_constrained(&mut load, model.constrained());
        let n = s.u.len();
        let u_hat: Vec<f64> = (0..n).map(|i| s.u[i] + dt * s.v[i] + dt * dt * (0.5 - b) * s.a[i]).collect();
        let v_hat: Vec<f64> = (0..n).map(|i| s.v[i] + dt * (1.0 - g) * s.a[i]).collect();
        let (z, iterations) = self.newton(dt, s.a.clone(), t1, (b * dt * dt, g * dt), &load, |z| {
            (axpby(1.0, &u_hat, b * dt * dt, z), axpby(1.0, &v_hat, g * dt, z), model.mass().mul_vec(z))
        })?;
        let state = State { t: t1, u: axpby(1.0, &u_hat, b * dt * dt, &z), v: axpby(1.0, &v_hat, g * dt, &z), a: z };
        check_finite(&state)?;
        Ok(Attempt { balance: Balance { state: state.clone(), dt }, state, iterations })
    }
}

fn check_finite(s: &State) -> Result<(), StepError> {
    if s.u.iter().chain(&s.v).chain(&s.a).all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(StepError::NonFinite { t: s.t })
    }
}

/// A run that stopped early, with the last state reached.
#[derive(Debug, Clone)]
pub struct RunFailure {
    pub last: State,
    pub error: StepError,
}

impl std::fmt::Display for RunFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run stopped at t = {}: {}", self.last.t, self.error)
    }
}

impl std::error::Error for RunFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Integrates from `initial` to `params.t_end`, calling `observe` on the
/// initial state and after every step.
pub fn run<D: Dynamics>(
    model: &D,
    initial: State,
    params: &TimeParams,
    mut observe: impl FnMut(&State, &StepReport) -> Result<(), StepError>,
) -> Result<State, RunFailure> {
    let fail = |last: &State, error| RunFailure { last: last.clone(), error };
    let mut stepper = Stepper::new(model, params).map_err(|e| fail(&initial, e))?;
    observe(&initial, &StepReport::initial(&initial)).map_err(|e| fail(&initial, e))?;
    let mut state = initial;
    for k in 1..=params.n_steps() {
        let t_next = params.time(k);
        let (next, stats) = stepper.step(&state, t_next).map_err(|e| fail(&state, e))?;
        state = next;
        observe(&state, &stats).map_err(|e| fail(&state, e))?;
    }
    Ok(state)
}

/// All states and step statistics of a run.
#[derive(Debug, Clone, Default)]
pub struct Trajectory {
    pub states: Vec<State>,
    pub reports: Vec<StepReport>,
}

pub fn trajectory<D: Dynamics>(model: &D, initial: State, params: &TimeParams) -> Result<Trajectory, RunFailure> {
    let mut out = Trajectory::default();
    run(model, initial, params, |s, st| {
        out.states.push(s.clone());
        out.reports.push(st.clone());
        Ok(())
    })?;
    Ok(out)
}

/// `½vᵀMv` and `½uᵀKu`.
pub fn energies<D: Dynamics>(model: &D, state: &State) -> (f64, f64) {
    (0.5 * model.mass().bilinear(&state.v, &state.v), 0.5 * dot(&state.u, &model.stiffness().mul_vec(&state.u)))
}
