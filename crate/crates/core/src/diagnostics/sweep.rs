//! Parameter studies over whole runs: the penalty limit `ε → 0`, the family
//! of contact weights `γ`, and the response to perturbed initial data.
//!
//! Runs inside a study are independent and execute on the rayon pool; the
//! result tables are always in the order of the requested parameters.

use rayon::prelude::*;
use serde::Serialize;

use super::{simulate, DiagnosticsError, RunSummary, SimulationFailure};
use crate::config::{Config, Problem};
use crate::fem::State;
use crate::timestep::{run, Dynamics, Model, RunFailure};

/// Energy norm of the difference of two states,
/// `√(ΔvᵀMΔv + ΔuᵀKΔu)`.
pub fn energy_distance(model: &Model, a: &State, b: &State) -> f64 {
    let du: Vec<f64> = a.u.iter().zip(&b.u).map(|(x, y)| x - y).collect();
    let dv: Vec<f64> = a.v.iter().zip(&b.v).map(|(x, y)| x - y).collect();
    (model.mass().bilinear(&dv, &dv) + model.stiffness().bilinear(&du, &du)).max(0.0).sqrt()
}

/// Slope and intercept of the least-squares line through `(x, y)`.
pub fn least_squares_slope(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 {
        return None;
    }
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = points.iter().map(|p| (p.0 - mx).powi(2)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = points.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    Some((slope, my - slope * mx))
}

fn run_labeled(config: &Config, label: String) -> Result<(Problem, RunSummary), DiagnosticsError> {
    let problem = config.setup()?;
    let summary = simulate(&problem, |_, _| Ok(()))
        .map_err(|failure| DiagnosticsError::Run { label, failure: Box::new(failure) })?;
    Ok((problem, summary))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EpsilonRow {
    pub epsilon: f64,
    /// `∫ ‖⟦γu_n + v_n⟧₋‖³_{L³} dt`.
    pub penetration_cubed: f64,
    /// `sup_t penetration_L3`.
    pub sup_penetration: f64,
    /// `max_t ‖a‖_H`.
    pub max_accel_h: f64,
    /// `∫ stick_slip_residual dt`.
    pub stick_slip_integral: f64,
    pub max_sigma_n: f64,
    pub max_friction_gap: f64,
    pub max_energy_rise: f64,
    /// Energy-norm distance of the final state to the final state of the
    /// smallest `ε`.
    pub distance_to_finest: f64,
    /// Energy-norm distance of the final state to that of the previous
    /// (larger) `ε`; `None` on the first row.
    pub distance_to_previous: Option<f64>,
    pub newton_iters: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpsilonSweep {
    pub rows: Vec<EpsilonRow>,
    /// Fitted `p` in `∫ ‖penetration‖³ dt ≈ C ε^p`, from the rows with
    /// nonzero penetration; `None` when fewer than two rows penetrate.
    pub order: Option<f64>,
}

/// Runs `config` once per penalty parameter in `eps_list`, which must hold
/// at least three strictly decreasing positive values.
pub fn epsilon_sweep(config: &Config, eps_list: &[f64]) -> Result<EpsilonSweep, DiagnosticsError> {
    if eps_list.len() < 3 {
        return Err(DiagnosticsError::Sweep(format!("ε sweep: need ≥ 3 values, got {}", eps_list.len())));
    }
    if eps_list.iter().any(|e| !(*e > 0.0) || !e.is_finite()) || eps_list.windows(2).any(|w| w[1] >= w[0]) {
        return Err(DiagnosticsError::Sweep(format!("ε sweep: values must be positive and strictly decreasing, got {eps_list:?}")));
    }
    let runs = eps_list
        .par_iter()
        .map(|&eps| run_labeled(&config.with_epsilon(eps), format!("ε = {eps}")))
        .collect::<Result<Vec<_>, _>>()?;

    let (finest_problem, finest) = runs.last().expect("at least three runs");
    let model = &finest_problem.model;
    let rows = runs
        .iter()
        .enumerate()
        .map(|(k, (_, s))| EpsilonRow {
            epsilon: eps_list[k],
            penetration_cubed: s.penetration_cubed,
            sup_penetration: s.sup_penetration,
            max_accel_h: s.max_accel_h,
            stick_slip_integral: s.stick_slip_integral,
            max_sigma_n: s.max_sigma_n,
            max_friction_gap: s.max_friction_gap,
            max_energy_rise: s.max_energy_rise(),
            distance_to_finest: energy_distance(model, &s.final_state, &finest.final_state),
            distance_to_previous: (k > 0).then(|| energy_distance(model, &s.final_state, &runs[k - 1].1.final_state)),
            newton_iters: s.newton_iters,
        })
        .collect::<Vec<_>>();
    let points: Vec<(f64, f64)> = rows
        .iter()
        .filter(|r| r.penetration_cubed > 0.0)
        .map(|r| (r.epsilon.ln(), r.penetration_cubed.ln()))
        .collect();
    let order = least_squares_slope(&points).map(|(p, _)| p);
    Ok(EpsilonSweep { rows, order })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct GammaRow {
    pub gamma: f64,
    pub penetration_cubed: f64,
    pub sup_penetration: f64,
    pub max_accel_h: f64,
    pub stick_slip_integral: f64,
    pub max_sigma_n: f64,
    pub max_friction_gap: f64,
    pub max_energy_rise: f64,
    /// Kinetic plus strain energy at the final time.
    pub final_energy: f64,
    pub newton_iters: usize,
}

/// Runs `config` once per contact weight in `gammas`.
pub fn gamma_sweep(config: &Config, gammas: &[f64]) -> Result<Vec<GammaRow>, DiagnosticsError> {
    if gammas.is_empty() {
        return Err(DiagnosticsError::Sweep("γ sweep: need at least one value".into()));
    }
    gammas
        .par_iter()
        .map(|&gamma| {
            let (_, s) = run_labeled(&config.with_gamma(gamma), format!("γ = {gamma}"))?;
            Ok(GammaRow {
                gamma,
                penetration_cubed: s.penetration_cubed,
                sup_penetration: s.sup_penetration,
                max_accel_h: s.max_accel_h,
                stick_slip_integral: s.stick_slip_integral,
                max_sigma_n: s.max_sigma_n,
                max_friction_gap: s.max_friction_gap,
                max_energy_rise: s.max_energy_rise(),
                final_energy: s.records.last().map_or(0.0, |r| r.energy()),
                newton_iters: s.newton_iters,
            })
        })
        .collect()
}

/// Exponential envelope `d(t) ≤ A e^{Bt}` of a distance curve. `B` is the
/// least-squares slope of `ln d` against `t`; `A` is the smallest prefactor
/// for which the envelope lies above every sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gronwall {
    pub prefactor: f64,
    pub rate: f64,
}

impl Gronwall {
    pub fn fit(samples: &[(f64, f64)]) -> Option<Gronwall> {
        let logs: Vec<(f64, f64)> = samples.iter().filter(|s| s.1 > 0.0).map(|&(t, d)| (t, d.ln())).collect();
        let (rate, _) = least_squares_slope(&logs)?;
        let prefactor = logs.iter().map(|&(t, l)| (l - rate * t).exp()).fold(0.0, f64::max);
        Some(Gronwall { prefactor, rate })
    }

    pub fn at(&self, t: f64) -> f64 {
        self.prefactor * (self.rate * t).exp()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProbeRow {
    pub eta: f64,
    /// `sup_t` of the energy-norm distance between base and perturbed runs.
    pub sup_distance: f64,
    /// `∫₀ᵀ (ΔvᵀMΔv + ΔuᵀKΔu) dt` by the trapezoidal rule.
    pub integrated: f64,
    /// Envelope of the distance curve; `None` for `η = 0`.
    pub envelope: Option<Gronwall>,
}

/// Perturbation shape `(0, sin(π(x − x₀)/W), 0…)` over the mesh extent
/// `[x₀, x₀ + W]`, interpolated and zeroed on the Dirichlet boundary.
fn perturbation(model: &Model) -> Vec<f64> {
    let xs = model.mesh.vertices.iter().map(|v| v[0]);
    let x0 = xs.clone().fold(f64::INFINITY, f64::min);
    let width = xs.fold(f64::NEG_INFINITY, f64::max) - x0;
    let dim = model.mesh.dim;
    let mut p = vec![0.0; model.n_dofs()];
    for (i, v) in model.mesh.vertices.iter().enumerate() {
        p[dim * i + 1] = (std::f64::consts::PI * (v[0] - x0) / width).sin();
    }
    model.dofs.apply_constraints(&mut p);
    p
}

fn trajectory_of(problem: &Problem, initial: State, label: String) -> Result<Vec<State>, DiagnosticsError> {
    let mut states = Vec::new();
    let out = run(&problem.model, initial, &problem.time, |s, _| {
        states.push(s.clone());
        Ok(())
    });
    match out {
        Ok(_) => Ok(states),
        Err(RunFailure { last, error }) => {
            let partial = RunSummary { final_state: last, ..RunSummary::default() };
            Err(DiagnosticsError::Run { label, failure: Box::new(SimulationFailure { partial, error }) })
        }
    }
}

/// Runs `config` unperturbed and with `u₀` shifted by `η (0, sin(πx/W))` for
/// every `η` in `etas`, and measures how far the trajectories separate.
pub fn stability_probe(config: &Config, etas: &[f64]) -> Result<Vec<ProbeRow>, DiagnosticsError> {
    if etas.iter().any(|e| !(*e >= 0.0) || !e.is_finite()) {
        return Err(DiagnosticsError::Sweep(format!("stability probe: η must be finite and ≥ 0, got {etas:?}")));
    }
    let problem = config.setup()?;
    let model = &problem.model;
    let shape = perturbation(model);
    let base = trajectory_of(&problem, problem.initial.clone(), "η = 0".into())?;
    etas.par_iter()
        .map(|&eta| {
            let u0: Vec<f64> = problem.initial.u.iter().zip(&shape).map(|(u, p)| u + eta * p).collect();
            let (initial, _) = model.initial_state_from(u0, problem.initial.v.clone())?;
            let perturbed = trajectory_of(&problem, initial, format!("η = {eta}"))?;
            let curve: Vec<(f64, f64)> =
                base.iter().zip(&perturbed).map(|(a, b)| (a.t, energy_distance(model, a, b))).collect();
            let sup_distance = curve.iter().map(|c| c.1).fold(0.0, f64::max);
            let integrated =
                curve.windows(2).map(|w| 0.5 * (w[1].0 - w[0].0) * (w[0].1.powi(2) + w[1].1.powi(2))).sum();
            Ok(ProbeRow { eta, sup_distance, integrated, envelope: Gronwall::fit(&curve) })
        })
        .collect()
}
