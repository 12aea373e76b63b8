//! Property checks on one configuration, as run by `crackdyn verify`.
//!
//! The suite covers the regularization calculus at the configured `ε`, the
//! consistency of the assembled interface tangents with their residuals,
//! the initial compatibility conditions, and, over a full run, Newton
//! convergence, the sign conditions `σ_n ≤ 0` and `|σ_τ| ≤ g`, energy
//! decay and the variational inequality at sampled steps.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::config::{Config, ConfigError};
use crate::diagnostics::{sample_vi_residual, DiagnosticsError, Monitor};
use crate::fem::norm2;
use crate::interface::{alpha_eps, beta_eps, dalpha_eps, dbeta_eps};
use crate::timestep::{run, Dynamics, Model};

const SEED: u64 = 0x5eed;
/// Steps at which the variational inequality is sampled.
const VI_STEPS: usize = 20;
const VI_TRIALS: usize = 100;
/// Allowed energy increase per step, relative to the initial energy.
pub const ENERGY_TOL: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass,
    Fail,
    /// Not a failure, but worth reporting.
    Warn,
    /// Not applicable to this configuration.
    Skip,
}

impl std::fmt::Display for Outcome {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Outcome::Pass => "PASS",
            Outcome::Fail => "FAIL",
            Outcome::Warn => "WARN",
            Outcome::Skip => "SKIP",
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Check {
    pub name: &'static str,
    pub outcome: Outcome,
    pub detail: String,
}

impl Check {
    fn new(name: &'static str, ok: bool, detail: String) -> Check {
        Check { name, outcome: if ok { Outcome::Pass } else { Outcome::Fail }, detail }
    }
}

/// Ratio of central-difference errors at `h` and `h/2`, or `None` when both
/// errors are at rounding level (the difference quotient is exact).
/// Relative central-difference error at step `h`, and the ratio of errors at
/// `h` and `h/2` when the error is above rounding level.
fn fd_error(f: impl Fn(f64) -> f64, exact: f64, x: f64, h: f64) -> (f64, Option<f64>) {
    let err = |h: f64| ((f(x + h) - f(x - h)) / (2.0 * h) - exact).abs();
    let (e1, e2) = (err(h), err(h / 2.0));
    let noise = 1e-13 * (f(x).abs() / h + exact.abs() + 1.0);
    (e1 / (exact.abs() + 1.0), (e1 > noise).then(|| e1 / e2.max(f64::MIN_POSITIVE)))
}

/// Worst case over sampled derivative checks: smallest error ratio, largest
/// relative error, and the number of samples.
#[derive(Clone, Copy)]
struct FdWorst {
    ratio: f64,
    error: f64,
    count: usize,
}

impl FdWorst {
    const START: FdWorst = FdWorst { ratio: f64::INFINITY, error: 0.0, count: 0 };

    fn add(&mut self, (error, ratio): (f64, Option<f64>)) {
        self.error = self.error.max(error);
        if let Some(r) = ratio {
            self.ratio = self.ratio.min(r);
        }
        self.count += 1;
    }

    /// Second-order decay wherever the error is measurable, and a small
    /// error everywhere.
    fn ok(&self) -> bool {
        self.count > 0 && self.ratio > 3.0 && self.error < 1e-3
    }

    fn detail(&self, what: &str) -> String {
        format!("max relative error {:.2e}, min error ratio {:.3} over {} {what} (4 is second order)", self.error, self.ratio, self.count)
    }
}

/// Central-difference checks of `dβ_ε` and `∇α_ε` at `samples` random
/// points, requiring second-order error decay wherever the error is above
/// rounding level, and monotonicity of `β_ε`, `α_ε` on random pairs.
pub fn regularization_checks(eps: f64, samples: usize, seed: u64) -> Vec<Check> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let h = 1e-2 * eps;
    let mut worst_beta = FdWorst::START;
    let mut worst_alpha = FdWorst::START;
    for _ in 0..samples {
        // stay 2h away from the kink of dβ at 0, where the quotient is only first order
        let x = loop {
            let x: f64 = rng.gen_range(-10.0 * eps..10.0 * eps);
            if x.abs() > 2.0 * h {
                break x;
            }
        };
        worst_beta.add(fd_error(|s| beta_eps(s, eps), dbeta_eps(x, eps), x, h));
        let p = [rng.gen_range(-5.0 * eps..5.0 * eps), rng.gen_range(-5.0 * eps..5.0 * eps)];
        let jac = dalpha_eps(&p, eps);
        for (i, j) in [(0, 0), (0, 1), (1, 0), (1, 1)] {
            let f = |s: f64| {
                let mut q = p;
                q[j] = s;
                alpha_eps(&q, eps)[i]
            };
            worst_alpha.add(fd_error(f, jac[i][j], p[j], h));
        }
    }
    let mut mono = f64::INFINITY;
    for _ in 0..10 * samples {
        let (x, y): (f64, f64) = (rng.gen_range(-10.0 * eps..10.0 * eps), rng.gen_range(-10.0 * eps..10.0 * eps));
        mono = mono.min((beta_eps(x, eps) - beta_eps(y, eps)) * (x - y));
        let p: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0 * eps..5.0 * eps)).collect();
        let q: Vec<f64> = (0..2).map(|_| rng.gen_range(-5.0 * eps..5.0 * eps)).collect();
        let (ap, aq) = (alpha_eps(&p, eps), alpha_eps(&q, eps));
        mono = mono.min((0..2).map(|i| (ap[i] - aq[i]) * (p[i] - q[i])).sum());
    }
    vec![
        Check::new(
            "dβ_ε by central differences",
            worst_beta.ok(),
            worst_beta.detail("points"),
        ),
        Check::new(
            "∇α_ε by central differences",
            worst_alpha.ok(),
            worst_alpha.detail("entries"),
        ),
        Check::new("β_ε, α_ε monotone", mono >= -1e-12, format!("min (F(x) − F(y))·(x − y) = {mono:.3e}")),
    ]
}

/// Compares the assembled interface tangent with central differences of the
/// interface residual along a random direction.
pub fn tangent_check(model: &Model, u: &[f64], v: &[f64], t: f64, seed: u64) -> Result<Check, DiagnosticsError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = model.n_dofs();
    let scale = u.iter().chain(v).fold(0.0f64, |m, x| m.max(x.abs())).max(1e-3);
    let mut dir: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
    model.dofs.apply_constraints(&mut dir);
    let (cu, cv) = (0.3, 1.0);
    let h = 1e-6 * scale;
    let at = |s: f64| -> Result<Vec<f64>, DiagnosticsError> {
        let us: Vec<f64> = (0..n).map(|i| u[i] + cu * s * dir[i]).collect();
        let vs: Vec<f64> = (0..n).map(|i| v[i] + cv * s * dir[i]).collect();
        Ok(model.interface(&us, &vs, t)?)
    };
    let (plus, minus) = (at(h)?, at(-h)?);
    let fd: Vec<f64> = (0..n).map(|i| (plus[i] - minus[i]) / (2.0 * h)).collect();
    let exact = model.interface_tangent(u, v, t, cu, cv)?.mul_vec(&dir);
    let diff: Vec<f64> = fd.iter().zip(&exact).map(|(a, b)| a - b).collect();
    let rel = norm2(&diff) / (norm2(&exact) + f64::MIN_POSITIVE);
    let ok = norm2(&exact) == 0.0 && norm2(&fd) == 0.0 || rel < 1e-5;
    Ok(Check::new("interface tangent vs finite differences", ok, format!("relative difference {rel:.3e}")))
}

/// Runs the whole suite on `config`.
pub fn verify(config: &Config) -> Result<Vec<Check>, ConfigError> {
    let problem = config.setup()?;
    let model = &problem.model;
    let eps = config.contact.epsilon;
    let mut checks = regularization_checks(eps, 100, SEED);

    let s0 = &problem.initial;
    let tangent = tangent_check(model, &s0.u, &s0.v, 0.0, SEED).and_then(|c| {
        // a point with active contact and slip, where the tangent is nontrivial
        let mut rng = ChaCha8Rng::seed_from_u64(SEED + 1);
        let size = 10.0 * eps;
        let mut u: Vec<f64> = (0..s0.u.len()).map(|_| size * rng.gen_range(-1.0..1.0)).collect();
        let mut v: Vec<f64> = (0..s0.u.len()).map(|_| size * rng.gen_range(-1.0..1.0)).collect();
        model.dofs.apply_constraints(&mut u);
        model.dofs.apply_constraints(&mut v);
        let c2 = tangent_check(model, &u, &v, 0.0, SEED + 2)?;
        Ok(if c2.outcome == Outcome::Fail { c2 } else { c })
    });
    checks.push(tangent.unwrap_or_else(|e| Check::new("interface tangent vs finite differences", false, e.to_string())));

    let compat = problem.compatibility;
    checks.push(Check {
        name: "initial compatibility",
        outcome: if compat.holds() { Outcome::Pass } else { Outcome::Warn },
        detail: format!("max |⟦γu₀ₙ + v₀ₙ⟧| = {:.3e}, max |⟦v₀τ⟧| = {:.3e}", compat.normal, compat.slip),
    });

    let total = problem.time.n_steps().max(1);
    let every = total.div_ceil(VI_STEPS).max(1);
    let mut monitor = Monitor::new(model);
    let mut vi_worst = f64::INFINITY;
    let mut vi_count = 0;
    let mut vi_error = None;
    let mut k = 0usize;
    let outcome = run(model, s0.clone(), &problem.time, |state, report| {
        monitor.observe(state, report)?;
        if k > 0 && (k % every == 0 || k == total) && vi_error.is_none() {
            match sample_vi_residual(model, &report.last_balance().state, VI_TRIALS, SEED + k as u64) {
                Ok(w) => {
                    vi_worst = vi_worst.min(w);
                    vi_count += 1;
                }
                Err(e) => vi_error = Some(e.to_string()),
            }
        }
        k += 1;
        Ok(())
    });
    let summary = monitor.finish();
    checks.push(match &outcome {
        Ok(_) => Check::new(
            "Newton convergence",
            true,
            format!("{} steps, {} iterations, at most {} halvings", total, summary.newton_iters, summary.max_halvings),
        ),
        Err(f) => Check::new("Newton convergence", false, f.to_string()),
    });
    checks.push(Check::new("σ_n ≤ 0", summary.max_sigma_n <= 0.0, format!("max σ_n = {:.3e}", summary.max_sigma_n)));
    checks.push(Check::new(
        "|σ_τ| ≤ g",
        summary.max_friction_gap == 0.0,
        format!("max friction_gap = {:e}", summary.max_friction_gap),
    ));

    let unloaded = config.body.is_zero() && config.traction.is_zero();
    let rise = summary.max_energy_rise();
    checks.push(if unloaded && config.contact.gamma == 0.0 {
        Check::new("energy nonincreasing", rise <= ENERGY_TOL, format!("max step rise {rise:.3e} E(0)"))
    } else {
        Check {
            name: "energy nonincreasing",
            outcome: Outcome::Skip,
            detail: format!("only asserted for γ = 0 without loads; max step rise {rise:.3e} E(0)"),
        }
    });

    let tol = 10.0 * problem.time.newton_tol;
    checks.push(match vi_error {
        Some(e) => Check::new("variational inequality", false, e),
        None if vi_count == 0 => Check {
            name: "variational inequality",
            outcome: Outcome::Skip,
            detail: "no steps taken".into(),
        },
        None => Check::new(
            "variational inequality",
            vi_worst >= -tol,
            format!("min relative residual {vi_worst:.3e} over {vi_count} steps × {VI_TRIALS} trials (bound −{tol:e})"),
        ),
    });
    Ok(checks)
}
