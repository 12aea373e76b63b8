//! Measurements on computed trajectories.
//!
//! Every recorded step yields a [`DiagnosticsRecord`]: the kinetic and
//! strain energies of the end-of-step state, and four interface residuals
//! that measure how far the regularized solution is from the unregularized
//! interface laws:
//!
//! * `penetration_L3 = ‖⟦γu_n + v_n⟧₋‖_{L³(Γ_c)}`,
//! * `comp_residual = ∫_{Γ_c} |σ_n ⟦γu_n + v_n⟧|`,
//! * `friction_gap = max (|σ_τ| − g)₊` over the crack quadrature points,
//! * `stick_slip_residual = ∫_{Γ_c} |g |⟦v_τ⟧| − σ_τ·⟦v_τ⟧|`.
//!
//! The interface terms are evaluated at the step's balance point (see
//! [`Balance`]), the state at which the time scheme imposes the interface
//! law. For the Newmark scheme this is the end of the step; for the midpoint
//! scheme it is the weighted point `(u_θ, v_θ)`.
//!
//! The submodules hold the parameter studies ([`epsilon_sweep`],
//! [`gamma_sweep`], [`stability_probe`]) and the scalar reference problem
//! used to check the time integrator ([`one_dof_oracle`]).

mod oracle;
mod sweep;

pub use oracle::{one_dof_oracle, OneDof, OneDofParams, OracleTrajectory};
pub use sweep::{
    energy_distance, epsilon_sweep, gamma_sweep, least_squares_slope, stability_probe, EpsilonRow, EpsilonSweep,
    GammaRow, Gronwall, ProbeRow,
};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::config::{ConfigError, Problem};
use crate::fem::{dot, norm2, State};
use crate::interface::{
    contact_argument, neg_part, phi_eps, psi_eps, recover_tractions, ContactParams, InterfaceError,
};
use crate::timestep::{energies, run, Balance, Dynamics, Model, RunFailure, StepError, StepReport};

#[derive(Debug, Error)]
pub enum DiagnosticsError {
    #[error(transparent)]
    Interface(#[from] InterfaceError),
    #[error(transparent)]
    Step(#[from] StepError),
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error("trial field violates the Dirichlet constraints")]
    DirichletViolation,
    #[error("trial field has {got} entries, expected {expected}")]
    TrialLength { expected: usize, got: usize },
    #[error("{0}")]
    Sweep(String),
    #[error("run with {label} failed: {failure}")]
    Run { label: String, failure: Box<SimulationFailure> },
    #[error("invalid one-dof parameters: {0}")]
    Oracle(String),
}

/// Column names of the diagnostics CSV, in order.
pub const CSV_COLUMNS: [&str; 8] = [
    "t",
    "kinetic",
    "strain",
    "penetration_L3",
    "comp_residual",
    "friction_gap",
    "stick_slip_residual",
    "newton_iters",
];

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRecord {
    pub t: f64,
    /// `½ vᵀMv`.
    pub kinetic: f64,
    /// `½ uᵀKu`.
    pub strain: f64,
    #[serde(rename = "penetration_L3")]
    pub penetration_l3: f64,
    pub comp_residual: f64,
    pub friction_gap: f64,
    pub stick_slip_residual: f64,
    pub newton_iters: usize,
}

impl DiagnosticsRecord {
    pub fn energy(&self) -> f64 {
        self.kinetic + self.strain
    }
}

/// Interface residuals at one state.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct InterfaceSample {
    pub penetration_l3: f64,
    pub comp_residual: f64,
    pub friction_gap: f64,
    pub stick_slip_residual: f64,
    /// Largest normal stress over the crack points (0 without a crack).
    pub max_sigma_n: f64,
}

impl InterfaceSample {
    /// `‖⟦γu_n + v_n⟧₋‖³_{L³}`.
    pub fn penetration_cubed(&self) -> f64 {
        self.penetration_l3.powi(3)
    }
}

/// Evaluates the interface residuals at `state`.
pub fn interface_sample(model: &Model, state: &State) -> Result<InterfaceSample, InterfaceError> {
    if model.quad.is_empty() {
        return Ok(InterfaceSample::default());
    }
    let tractions = recover_tractions(&state.u, &state.v, state.t, &model.contact, &model.quad)?;
    let mut s = InterfaceSample { max_sigma_n: f64::NEG_INFINITY, ..InterfaceSample::default() };
    let mut pen3 = 0.0;
    for tr in &tractions {
        pen3 += tr.weight * neg_part(tr.contact_arg).powi(3);
        s.comp_residual += tr.weight * (tr.sigma_n * tr.contact_arg).abs();
        s.friction_gap = s.friction_gap.max(tr.sigma_tau_norm - tr.g);
        let slip_norm = tr.slip.iter().map(|c| c * c).sum::<f64>().sqrt();
        let work = dot(&tr.sigma_tau, &tr.slip);
        s.stick_slip_residual += tr.weight * (tr.g * slip_norm - work).abs();
        s.max_sigma_n = s.max_sigma_n.max(tr.sigma_n);
    }
    s.penetration_l3 = pen3.cbrt();
    Ok(s)
}

/// Diagnostics of an end-of-step `state`, with interface terms taken at the
/// last balance point of `report`.
pub fn record(model: &Model, state: &State, report: &StepReport) -> Result<DiagnosticsRecord, InterfaceError> {
    let (kinetic, strain) = energies(model, state);
    let iface = interface_sample(model, &report.last_balance().state)?;
    Ok(DiagnosticsRecord {
        t: state.t,
        kinetic,
        strain,
        penetration_l3: iface.penetration_l3,
        comp_residual: iface.comp_residual,
        friction_gap: iface.friction_gap,
        stick_slip_residual: iface.stick_slip_residual,
        newton_iters: report.newton_iters,
    })
}

/// Relative residual of the regularized variational inequality at a balance
/// point `(t, u, v, a)` for the test field `trial`.
///
/// With `w = γu + v` and `d = trial − w` the inequality reads
///
/// ```text
/// dᵀ(M a + K u − L(t)) + ∫ ψ_ε(⟦trial_n⟧) − ψ_ε(⟦w_n⟧)
///                      + ∫ g (φ_ε(⟦trial_τ − γu_τ⟧) − φ_ε(⟦v_τ⟧)) ≥ 0.
/// ```
///
/// The left side is returned divided by `‖d‖` times the force scale
/// `‖Ma‖ + ‖Ku‖ + ‖L‖ + ‖N‖` used by the Newton test, so a converged step
/// gives values bounded below by minus the Newton tolerance.
pub fn vi_residual(model: &Model, at: &State, trial: &[f64]) -> Result<f64, DiagnosticsError> {
    let n = model.n_dofs();
    if trial.len() != n {
        return Err(DiagnosticsError::TrialLength { expected: n, got: trial.len() });
    }
    if !model.dofs.satisfies_constraints(trial) {
        return Err(DiagnosticsError::DirichletViolation);
    }
    let p: &ContactParams = &model.contact;
    let w: Vec<f64> = at.u.iter().zip(&at.v).map(|(u, v)| p.gamma * u + v).collect();
    let mut d: Vec<f64> = trial.iter().zip(&w).map(|(x, y)| x - y).collect();
    model.dofs.apply_constraints(&mut d);
    if d.iter().all(|x| *x == 0.0) {
        return Ok(0.0);
    }

    let ma = model.mass().mul_vec(&at.a);
    let ku = model.stiffness().mul_vec(&at.u);
    let load = model.load(at.t)?;
    let nl = model.interface(&at.u, &at.v, at.t)?;
    let bulk: f64 = (0..n).map(|i| d[i] * (ma[i] + ku[i] - load[i])).sum();

    let mut potentials = 0.0;
    if !model.quad.is_empty() {
        let dim = model.quad.dim;
        let g = model.quad.threshold(&p.g, at.t)?;
        let args = contact_argument(&at.u, &at.v, p, &model.quad);
        for ((q, x), gq) in model.quad.points.iter().zip(args).zip(g) {
            let jt = model.quad.jump(q, trial);
            let ju = model.quad.jump(q, &at.u);
            let jv = model.quad.jump(q, &at.v);
            let shifted: Vec<f64> = (0..dim).map(|i| jt.tangential[i] - p.gamma * ju.tangential[i]).collect();
            potentials += q.weight
                * (psi_eps(jt.normal, p.epsilon) - psi_eps(x, p.epsilon)
                    + gq * (phi_eps(&shifted, p.epsilon) - phi_eps(&jv.tangential[..dim], p.epsilon)));
        }
    }
    let scale = norm2(&d) * (norm2(&ma) + norm2(&ku) + norm2(&load) + norm2(&nl)) + f64::MIN_POSITIVE;
    Ok((bulk + potentials) / scale)
}

/// Smallest [`vi_residual`] over `count` random admissible trial fields.
///
/// Half of the trials are perturbations of `γu + v` on scales from `10⁻⁶`
/// to `1` relative to its size, the other half are independent random
/// fields. The sequence is fixed by `seed`.
pub fn sample_vi_residual(model: &Model, at: &State, count: usize, seed: u64) -> Result<f64, DiagnosticsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let gamma = model.contact.gamma;
    let w: Vec<f64> = at.u.iter().zip(&at.v).map(|(u, v)| gamma * u + v).collect();
    let size = w.iter().fold(0.0f64, |m, x| m.max(x.abs())).max(1e-3);
    let mut worst = f64::INFINITY;
    for k in 0..count {
        let mut trial: Vec<f64> = if k % 2 == 0 {
            let scale = size * 10f64.powf(rng.gen_range(-6.0..0.0));
            w.iter().map(|x| x + scale * rng.gen_range(-1.0..1.0)).collect()
        } else {
            w.iter().map(|_| size * rng.gen_range(-1.0..1.0)).collect()
        };
        model.dofs.apply_constraints(&mut trial);
        worst = worst.min(vi_residual(model, at, &trial)?);
    }
    Ok(worst)
}

/// Aggregate measurements of one run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RunSummary {
    pub records: Vec<DiagnosticsRecord>,
    /// Last state reached.
    pub final_state: State,
    /// `∫ ‖⟦γu_n + v_n⟧₋‖³_{L³} dt`, summed over balance points.
    pub penetration_cubed: f64,
    /// `∫ stick_slip_residual dt`, summed over balance points.
    pub stick_slip_integral: f64,
    /// Largest `penetration_L3` over all balance points.
    pub sup_penetration: f64,
    /// `max(0, σ_n)` over all balance points; zero unless the sign
    /// condition is violated.
    pub max_sigma_n: f64,
    pub max_friction_gap: f64,
    /// `max_t ‖a‖_H` with `‖a‖²_H = aᵀMa/ρ`, over the step end states.
    pub max_accel_h: f64,
    pub newton_iters: usize,
    pub max_halvings: usize,
}

impl RunSummary {
    pub fn energies(&self) -> Vec<f64> {
        self.records.iter().map(DiagnosticsRecord::energy).collect()
    }

    /// `max_k (E(t_{k+1}) − E(t_k)) / E(0)`; `-∞` for a single record.
    pub fn max_energy_rise(&self) -> f64 {
        let e = self.energies();
        let e0 = e.first().copied().unwrap_or(0.0);
        e.windows(2).map(|w| (w[1] - w[0]) / e0).fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Accumulates a [`RunSummary`] step by step.
#[derive(Debug)]
pub struct Monitor<'m> {
    model: &'m Model,
    summary: RunSummary,
}

impl<'m> Monitor<'m> {
    pub fn new(model: &'m Model) -> Monitor<'m> {
        Monitor { model, summary: RunSummary::default() }
    }

    pub fn observe(&mut self, state: &State, report: &StepReport) -> Result<&DiagnosticsRecord, InterfaceError> {
        let s = &mut self.summary;
        for Balance { state: b, dt } in &report.balances {
            let iface = interface_sample(self.model, b)?;
            s.penetration_cubed += dt * iface.penetration_cubed();
            s.stick_slip_integral += dt * iface.stick_slip_residual;
            s.sup_penetration = s.sup_penetration.max(iface.penetration_l3);
            s.max_friction_gap = s.max_friction_gap.max(iface.friction_gap);
            s.max_sigma_n = s.max_sigma_n.max(iface.max_sigma_n);
        }
        let accel = (self.model.mass().bilinear(&state.a, &state.a) / self.model.material.rho).sqrt();
        s.max_accel_h = s.max_accel_h.max(accel);
        s.newton_iters += report.newton_iters;
        s.max_halvings = s.max_halvings.max(report.halvings);
        s.records.push(record(self.model, state, report)?);
        s.final_state = state.clone();
        Ok(s.records.last().expect("just pushed"))
    }

    pub fn finish(self) -> RunSummary {
        self.summary
    }
}

/// A run that stopped early, with the measurements up to that point.
#[derive(Debug, Clone)]
pub struct SimulationFailure {
    pub partial: RunSummary,
    pub error: StepError,
}

impl std::fmt::Display for SimulationFailure {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "run stopped at t = {}: {}", self.partial.final_state.t, self.error)
    }
}

impl std::error::Error for SimulationFailure {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

/// Integrates `problem` and records diagnostics at every step. `on_step`
/// sees each end-of-step state with its record and may abort the run.
pub fn simulate(
    problem: &Problem,
    mut on_step: impl FnMut(&State, &DiagnosticsRecord) -> Result<(), StepError>,
) -> Result<RunSummary, SimulationFailure> {
    let mut monitor = Monitor::new(&problem.model);
    let outcome = run(&problem.model, problem.initial.clone(), &problem.time, |state, report| {
        let rec = monitor.observe(state, report)?;
        on_step(state, rec)
    });
    match outcome {
        Ok(_) => Ok(monitor.finish()),
        Err(RunFailure { last, error }) => {
            let mut partial = monitor.finish();
            partial.final_state = last;
            Err(SimulationFailure { partial, error })
        }
    }
}

#[cfg(test)]
mod tests;
