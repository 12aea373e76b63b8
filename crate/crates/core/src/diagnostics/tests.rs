use super::*;
use crate::config::{fixtures, Config, MeshSource};
use crate::expr::{Expr, VectorExpr};
use crate::fem::Material;
use crate::interface::tests::stacked_blocks;
use crate::mesh::RectSpec;
use crate::timestep::{initial_acceleration, trajectory, Scheme, TimeParams};

fn blocks_model(gamma: f64, eps: f64, g: f64) -> Model {
    Model::new(
        stacked_blocks(),
        Material::new(1.0, 1.0, 1.0).unwrap(),
        ContactParams::new(gamma, eps, Expr::constant(g)).unwrap(),
        VectorExpr::zero(2),
        VectorExpr::zero(2),
    )
    .unwrap()
}

/// Nodal field that moves the plus face (vertices 4 and 5) by `value`.
fn plus_face(value: [f64; 2]) -> Vec<f64> {
    let mut w = vec![0.0; 16];
    for v in [4, 5] {
        w[2 * v] = value[0];
        w[2 * v + 1] = value[1];
    }
    w
}

fn state(t: f64, u: Vec<f64>, v: Vec<f64>) -> State {
    let a = vec![0.0; u.len()];
    State { t, u, v, a }
}

/// The impact fixture on a coarser grid and a shorter interval.
fn small_impact(gamma: f64, eps: f64, t_end: f64) -> Config {
    let mut c = fixtures::impact(gamma, eps);
    c.mesh = MeshSource::Builtin(RectSpec::parse("rect(2, 1, 8, 4, 0.25, 0.75)").unwrap());
    c.time.t_end = t_end;
    c.time.dt = 0.02;
    c
}

#[test]
fn zero_state_gives_zero_record() {
    let model = blocks_model(1.0, 0.1, 0.3);
    let s = State::zeros(16);
    let r = record(&model, &s, &StepReport::initial(&s)).unwrap();
    assert_eq!(
        r,
        DiagnosticsRecord {
            t: 0.0,
            kinetic: 0.0,
            strain: 0.0,
            penetration_l3: 0.0,
            comp_residual: 0.0,
            friction_gap: 0.0,
            stick_slip_residual: 0.0,
            newton_iters: 0
        }
    );
}

#[test]
fn opening_crack_has_no_penetration() {
    let model = blocks_model(0.0, 0.01, 0.0);
    let s = state(0.0, vec![0.0; 16], plus_face([0.0, 0.4]));
    let i = interface_sample(&model, &s).unwrap();
    assert_eq!(i.penetration_l3, 0.0);
    assert_eq!(i.comp_residual, 0.0);
    assert_eq!(i.max_sigma_n, 0.0);
}

#[test]
fn uniform_penetration_closed_form() {
    // ⟦v_n⟧ = −p on a crack of length 1: |σ_n x| = (p²/ε)·p integrated over
    // the crack, and the L³ norm of the negative part is p
    let (p, eps) = (0.03, 1e-2);
    let model = blocks_model(0.0, eps, 0.0);
    let s = state(0.0, vec![0.0; 16], plus_face([0.0, -p]));
    let i = interface_sample(&model, &s).unwrap();
    assert!((i.comp_residual - p.powi(3) / eps).abs() < 1e-15);
    assert!((i.penetration_l3 - p).abs() < 1e-15);
    assert!((i.max_sigma_n + p * p / eps).abs() < 1e-15);

    // the same argument reached through the displacement with γ = 2
    let model = blocks_model(2.0, eps, 0.0);
    let s = state(0.0, plus_face([0.0, -p / 2.0]), vec![0.0; 16]);
    let i = interface_sample(&model, &s).unwrap();
    assert!((i.comp_residual - p.powi(3) / eps).abs() < 1e-15);
}

#[test]
fn uniform_slip_stick_slip_closed_form() {
    let (s_rate, eps, g) = (0.05, 1e-2, 0.4);
    let model = blocks_model(0.0, eps, g);
    let st = state(0.0, vec![0.0; 16], plus_face([s_rate, 0.0]));
    let i = interface_sample(&model, &st).unwrap();
    let phi = (s_rate * s_rate + eps * eps).sqrt();
    let expected = g * s_rate * (1.0 - s_rate / phi);
    assert!((i.stick_slip_residual - expected).abs() < 1e-15, "{} vs {expected}", i.stick_slip_residual);
    assert_eq!(i.friction_gap, 0.0);
}

#[test]
fn friction_gap_vanishes_for_any_slip() {
    let model = blocks_model(0.0, 1e-4, 0.7);
    for s in [1e-12, 1e-3, 1.0, 1e8, 1e150] {
        let st = state(0.0, vec![0.0; 16], plus_face([s, 0.0]));
        assert_eq!(interface_sample(&model, &st).unwrap().friction_gap, 0.0, "slip {s}");
    }
}

#[test]
fn vi_residual_equality_case_and_constraints() {
    let model = blocks_model(1.0, 0.05, 0.2);
    let u = plus_face([0.01, -0.02]);
    let v = plus_face([0.1, 0.03]);
    let a = initial_acceleration(&model, &u, &v, 0.0).unwrap();
    let at = State { t: 0.0, u: u.clone(), v: v.clone(), a };
    let w: Vec<f64> = u.iter().zip(&v).map(|(u, v)| u + v).collect();
    assert_eq!(vi_residual(&model, &at, &w).unwrap(), 0.0);

    let mut bad = w.clone();
    bad[0] = 1.0; // vertex 0 is on Γ_D
    assert!(matches!(vi_residual(&model, &at, &bad), Err(DiagnosticsError::DirichletViolation)));
    assert!(matches!(vi_residual(&model, &at, &w[..4]), Err(DiagnosticsError::TrialLength { .. })));

    // an exact balance satisfies the inequality for every trial
    assert!(sample_vi_residual(&model, &at, 200, 7).unwrap() >= -1e-12);
}

#[test]
fn vi_residual_detects_a_wrong_acceleration() {
    let model = blocks_model(0.0, 0.05, 0.0);
    let u = plus_face([0.0, -0.02]);
    let v = plus_face([0.0, -0.01]);
    let mut a = initial_acceleration(&model, &u, &v, 0.0).unwrap();
    a.iter_mut().for_each(|x| *x += 1.0);
    model.dofs.apply_constraints(&mut a);
    let at = State { t: 0.0, u, v, a };
    assert!(sample_vi_residual(&model, &at, 50, 1).unwrap() < -1e-3);
}

#[test]
fn converged_steps_satisfy_the_inequality() {
    for (gamma, scheme) in [(0.0, Scheme::Midpoint), (1.0, Scheme::Midpoint), (10.0, Scheme::Newmark)] {
        let mut c = small_impact(gamma, 1e-3, 0.6);
        c.time.scheme = scheme;
        let p = c.setup().unwrap();
        let traj = trajectory(&p.model, p.initial.clone(), &p.time).unwrap();
        for rep in traj.reports.iter().step_by(5) {
            let worst = sample_vi_residual(&p.model, &rep.last_balance().state, 20, 3).unwrap();
            assert!(worst >= -10.0 * p.time.newton_tol, "γ = {gamma}: {worst:e}");
        }
    }
}

#[test]
fn simulate_records_every_step() {
    let c = small_impact(0.0, 1e-2, 0.2);
    let p = c.setup().unwrap();
    let mut seen = 0;
    let s = simulate(&p, |_, _| {
        seen += 1;
        Ok(())
    })
    .unwrap();
    assert_eq!(seen, 11);
    assert_eq!(s.records.len(), 11);
    assert_eq!(s.records[0].t, 0.0);
    assert!((s.records[10].t - 0.2).abs() < 1e-15);
    assert!(s.records.iter().all(|r| r.friction_gap == 0.0));
    assert!(s.max_sigma_n <= 0.0);

    let mut c0 = c.clone();
    c0.time.t_end = 0.0;
    let s0 = simulate(&c0.setup().unwrap(), |_, _| Ok(())).unwrap();
    assert_eq!(s0.records.len(), 1);
    assert_eq!(s0.max_energy_rise(), f64::NEG_INFINITY);
}

#[test]
fn observer_can_abort_with_partial_summary() {
    let p = small_impact(0.0, 1e-2, 0.2).setup().unwrap();
    let err = simulate(&p, |s, _| if s.t > 0.05 { Err(StepError::Observer("disk full".into())) } else { Ok(()) })
        .unwrap_err();
    assert!(matches!(err.error, StepError::Observer(_)));
    assert_eq!(err.partial.records.len(), 4);
}

#[test]
fn sweep_argument_checks() {
    let c = small_impact(0.0, 1e-2, 0.1);
    let e = epsilon_sweep(&c, &[1e-2]).unwrap_err().to_string();
    assert!(e.contains("need ≥ 3"), "{e}");
    assert!(epsilon_sweep(&c, &[1e-1, 1e-2, 1e-2]).is_err());
    assert!(epsilon_sweep(&c, &[1e-3, 1e-2, 1e-1]).is_err());
    assert!(gamma_sweep(&c, &[]).is_err());
    assert!(stability_probe(&c, &[-1.0]).is_err());
}

#[test]
fn glued_mesh_never_penetrates() {
    let mut c = small_impact(0.0, 1e-2, 0.2);
    c.mesh = MeshSource::Builtin(RectSpec::parse("rect(2, 1, 8, 4)").unwrap());
    let sweep = epsilon_sweep(&c, &[1e-1, 1e-2, 1e-3]).unwrap();
    assert!(sweep.rows.iter().all(|r| r.penetration_cubed == 0.0 && r.sup_penetration == 0.0));
    assert_eq!(sweep.order, None);
    // without a crack ε plays no role at all
    assert!(sweep.rows.iter().all(|r| r.distance_to_finest == 0.0));
}

#[test]
fn epsilon_sweep_is_ordered_and_penetration_shrinks() {
    let c = small_impact(0.0, 1e-2, 0.8);
    let sweep = epsilon_sweep(&c, &[1e-1, 1e-2, 1e-3]).unwrap();
    let eps: Vec<f64> = sweep.rows.iter().map(|r| r.epsilon).collect();
    assert_eq!(eps, vec![1e-1, 1e-2, 1e-3]);
    assert!(sweep.rows.windows(2).all(|w| w[1].penetration_cubed < w[0].penetration_cubed));
    assert_eq!(sweep.rows[2].distance_to_finest, 0.0);
    assert!(sweep.rows[0].distance_to_previous.is_none() && sweep.rows[1].distance_to_previous.is_some());
    assert!(sweep.order.unwrap() > 0.5);
}

#[test]
fn acceleration_stays_bounded_as_epsilon_shrinks() {
    // the step has to resolve the stiffest penalty; at dt = 0.02 the
    // acceleration of the ε = 1e-4 run chatters between steps
    let mut c = small_impact(1.0, 1e-2, 1.0);
    c.time.dt = 0.0025;
    let sweep = epsilon_sweep(&c, &[1e-1, 1e-2, 1e-3, 1e-4]).unwrap();
    let acc: Vec<f64> = sweep.rows.iter().map(|r| r.max_accel_h).collect();
    assert!(acc.iter().all(|a| a.is_finite() && *a > 0.0));
    assert!(acc.iter().all(|a| *a < 2.0 * acc[0]), "{acc:?}");
}

#[test]
fn velocity_contact_ignores_displacement() {
    let model = blocks_model(0.0, 1e-2, 0.2);
    let v = plus_face([0.03, -0.05]);
    let a = model.interface(&plus_face([0.0, 0.0]), &v, 0.0).unwrap();
    let b = model.interface(&plus_face([0.4, -0.7]), &v, 0.0).unwrap();
    assert_eq!(a, b);
    assert!(a.iter().any(|x| *x != 0.0));
}

#[test]
fn zero_perturbation_is_bitwise_identical() {
    let rows = stability_probe(&small_impact(0.0, 1e-2, 0.3), &[0.0, 1e-4]).unwrap();
    assert_eq!(rows[0].sup_distance, 0.0);
    assert_eq!(rows[0].envelope, None);
    assert!(rows[1].sup_distance > 0.0);
    let env = rows[1].envelope.unwrap();
    assert!(env.rate.is_finite());
}

#[test]
fn least_squares_recovers_a_line() {
    let pts: Vec<(f64, f64)> = (0..5).map(|k| (k as f64, 3.0 - 0.5 * k as f64)).collect();
    let (slope, icpt) = least_squares_slope(&pts).unwrap();
    assert!((slope + 0.5).abs() < 1e-14 && (icpt - 3.0).abs() < 1e-14);
    assert_eq!(least_squares_slope(&pts[..1]), None);

    let curve: Vec<(f64, f64)> = (0..20).map(|k| (0.1 * k as f64, 2e-3 * (0.7 * 0.1 * k as f64).exp())).collect();
    let g = Gronwall::fit(&curve).unwrap();
    assert!((g.rate - 0.7).abs() < 1e-10);
    assert!((g.prefactor - 2e-3).abs() < 1e-12);
    assert!(curve.iter().all(|&(t, d)| d <= g.at(t) * (1.0 + 1e-12)));
}

fn one_dof(gamma: f64, eps: f64, g: f64, force: &str, u0: f64, v0: f64) -> OneDofParams {
    OneDofParams { rho: 1.0, stiffness: 1.0, gamma, epsilon: eps, g, force: Expr::parse(force).unwrap(), u0, v0 }
}

#[test]
fn oracle_matches_free_oscillation() {
    // u = sin t keeps u̇ ≥ 0 on a quarter period, so the contact is inactive
    let p = one_dof(0.0, 1e-2, 0.0, "0", 0.0, 1.0);
    let tr = one_dof_oracle(&p, std::f64::consts::FRAC_PI_2, 5e-5).unwrap();
    for k in (0..tr.u.len()).step_by(997) {
        let t = k as f64 * tr.dt;
        assert!((tr.u[k] - t.sin()).abs() < 1e-6);
        assert!((tr.v[k] - t.cos()).abs() < 1e-6);
    }
    assert!((tr.u_at(0.7) - 0.7f64.sin()).abs() < 1e-9);
}

#[test]
fn oracle_energy_decreases_under_penalty() {
    let p = one_dof(0.0, 1e-3, 0.2, "0", 0.0, -1.0);
    let tr = one_dof_oracle(&p, 3.0, 5e-5).unwrap();
    let e: Vec<f64> = tr.u.iter().zip(&tr.v).map(|(u, v)| p.energy(*u, *v)).collect();
    assert!(e.windows(2).all(|w| w[1] <= w[0] * (1.0 + 1e-12)));
    assert!(e[e.len() - 1] < 0.5 * e[0]);
}

#[test]
fn oracle_rejects_coarse_steps() {
    let p = one_dof(0.0, 1e-2, 0.0, "0", 0.0, 1.0);
    assert!(one_dof_oracle(&p, 1.0, 1e-3).is_err());
    let bad = OneDofParams { rho: 0.0, ..p };
    assert!(OneDof::new(bad).is_err());
}

#[test]
fn stepper_converges_to_oracle_at_second_order() {
    let p = one_dof(1.0, 0.1, 0.1, "0.3*sin(2*t)", 1.0, 0.0);
    let t_end = 4.0;
    let reference = one_dof_oracle(&p, t_end, 2e-5).unwrap();
    let sys = OneDof::new(p).unwrap();
    let errors: Vec<f64> = [0.02, 0.01]
        .iter()
        .map(|&dt| {
            let params = TimeParams { t_end, dt, ..TimeParams::default() };
            let traj = trajectory(&sys, sys.initial_state().unwrap(), &params).unwrap();
            traj.states.iter().map(|s| (s.u[0] - reference.u_at(s.t)).abs()).fold(0.0, f64::max)
        })
        .collect();
    let order = (errors[0] / errors[1]).log2();
    assert!(order > 1.8, "errors {errors:?}, order {order}");
}

mod props {
    use super::*;
    use proptest::prelude::*;

    fn field() -> impl Strategy<Value = Vec<f64>> {
        prop::collection::vec(-1.0..1.0f64, 16).prop_map(|mut w| {
            // scale spans several decades so both penalty regimes are hit
            let s = 10f64.powf(3.0 * w[0] - 3.0);
            w.iter_mut().for_each(|x| *x *= s);
            w
        })
    }

    proptest! {
        #![proptest_config(ProptestConfig::with_cases(128))]

        #[test]
        fn records_have_signed_fields(
            u in field(),
            v in field(),
            gamma in 0.0..10.0f64,
            eps in 1e-5..1.0f64,
            g in 0.0..2.0f64,
        ) {
            let model = blocks_model(gamma, eps, g);
            let (mut u, mut v) = (u, v);
            model.dofs.apply_constraints(&mut u);
            model.dofs.apply_constraints(&mut v);
            let s = state(0.3, u, v);
            let r = record(&model, &s, &StepReport::initial(&s)).unwrap();
            prop_assert!(r.kinetic >= 0.0 && r.strain >= 0.0);
            prop_assert!(r.penetration_l3 >= 0.0 && r.comp_residual >= 0.0 && r.stick_slip_residual >= 0.0);
            prop_assert_eq!(r.friction_gap, 0.0);
            let i = interface_sample(&model, &s).unwrap();
            prop_assert!(i.max_sigma_n <= 0.0);
            prop_assert_eq!(i.penetration_l3, r.penetration_l3);
        }
    }
}
