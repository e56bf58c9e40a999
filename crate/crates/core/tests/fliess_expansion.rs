mod common;

use std::sync::Arc;

use bbpc_core::corollary::*;
use bbpc_core::fliess::*;
use bbpc_core::lie::{lie_derivative, lie_derivative2, Field};
use bbpc_core::periodic::{initial_state_expansion, integrate, predict_x0, IntegratorConfig, ScheduleFamily, SecondOrderRule, StepControl};
use bbpc_core::reactor::ControlBounds;
use bbpc_core::schedule::{corollary_schedule_n2, corollary_schedule_n3, corollary_schedule_n4, BangBangSchedule, LevelMode};
use proptest::prelude::*;

fn grid(d: &[f64]) -> SwitchGrid {
    SwitchGrid::from_durations(d).unwrap()
}

#[test]
fn window_integrals_on_two_halves() {
    let g = grid(&[0.5, 0.5]);
    let t = [0.0, 0.5, 1.0];
    assert_eq!(v1(&g, 1, 0.75).unwrap(), 0.25);
    assert!((common::q1(&t, 1, 0.75) - 0.25).abs() < 1e-15);
    assert_eq!(v1(&g, 1, 0.5).unwrap(), 0.0);
    assert!((v2(&g, 1, 0, 0.7).unwrap() - 0.10).abs() < 1e-15);
    assert!((common::q2(&t, 1, 0, 0.7) - 0.10).abs() < 1e-15);
    assert_eq!(v2(&g, 0, 1, 0.9).unwrap(), 0.0);
    assert!((v3(&g, 1, 1, 0, 1.0).unwrap() - 0.0625).abs() < 1e-15);
    assert!((common::q3(&t, 1, 1, 0, 1.0) - 0.0625).abs() < 1e-15);
    assert_eq!(v3(&g, 1, 0, 1, 1.0).unwrap(), 0.0);
}

#[test]
fn saturated_diagonal_integrals() {
    let d = [0.3, 1.1, 0.7];
    let g = grid(&d);
    for (i, &di) in d.iter().enumerate() {
        assert!((v1(&g, i, g.tau()).unwrap() - di).abs() < 1e-15);
        assert!((v2(&g, i, i, g.tau()).unwrap() - di * di / 2.0).abs() < 1e-15);
        assert!((v3(&g, i, i, i, g.tau()).unwrap() - di.powi(3) / 6.0).abs() < 1e-15);
    }
}

fn durations() -> impl Strategy<Value = Vec<f64>> {
    prop::collection::vec(0.05f64..2.0, 1..=5)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(200))]

    #[test]
    fn closed_forms_match_quadrature(d in durations(), frac in prop::collection::vec(0.0f64..=1.0, 2)) {
        let g = grid(&d);
        let times: Vec<f64> = (0..=g.n()).map(|k| if k == 0 { 0.0 } else { g.end(k - 1) }).collect();
        let n = g.n();
        for &f in &frac {
            let t = f * g.tau();
            let sum: f64 = (0..n).map(|i| v1(&g, i, t).unwrap()).sum();
            prop_assert!((sum - t).abs() <= 1e-12 * (1.0 + t));
            for i in 0..n {
                prop_assert!((v1(&g, i, t).unwrap() - common::q1(&times, i, t)).abs() <= 1e-10);
                for j in 0..n {
                    prop_assert!((v2(&g, i, j, t).unwrap() - common::q2(&times, i, j, t)).abs() <= 1e-10);
                    for l in 0..n {
                        prop_assert!((v3(&g, i, j, l, t).unwrap() - common::q3(&times, i, j, l, t)).abs() <= 1e-10);
                    }
                }
            }
        }
    }
}

#[test]
fn single_window_linear_flow_is_its_taylor_cubic() {
    let sys = common::linear([[-0.7, 0.4], [-1.1, 0.2]], &[[1.0, 0.5]], 2.0);
    let u = vec![0.8];
    let x0 = [0.3, -0.2];
    let tau = 0.37;
    let s = BangBangSchedule::from_durations(vec![u.clone()], vec![tau], LevelMode::Interior).unwrap();
    let a = nalgebra::Matrix2::new(-0.7, 0.4, -1.1, 0.2);
    let v = a * nalgebra::Vector2::new(x0[0], x0[1]) + nalgebra::Vector2::new(0.8, 0.4);
    let want = nalgebra::Vector2::new(x0[0], x0[1]) + v * tau + a * v * (tau * tau / 2.0) + a * a * v * (tau.powi(3) / 6.0);
    let got = terminal_state_expansion(&sys, &s, &x0, 3).unwrap();
    assert_eq!((got.order, got.remainder_exponent), (3, 4));
    assert!(common::diff(&got.value, want.as_slice()) < 1e-15);
}

#[test]
fn zero_dynamics_leave_the_state_alone() {
    let sys = common::linear([[0.0, 0.0], [0.0, 0.0]], &[[1.0, 0.0]], 1.0);
    let s = BangBangSchedule::from_durations(vec![vec![0.0], vec![0.0]], vec![0.3, 0.6], LevelMode::Interior).unwrap();
    for order in 1..=3 {
        assert_eq!(terminal_state_expansion(&sys, &s, &[0.4, -0.1], order).unwrap().value, vec![0.4, -0.1]);
        assert_eq!(average_state_expansion(&sys, &s, &[0.4, -0.1], order).unwrap().value, vec![0.4, -0.1]);
    }
    let s = corollary_schedule_n2(vec![1.0], 0.8).unwrap();
    for order in 1..=3 {
        assert_eq!(periodicity_residual(&sys, &s, &[0.4, -0.1], order).unwrap(), vec![0.0, 0.0]);
    }
}

#[test]
fn expansion_error_is_fourth_order_on_the_reactor() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let x0 = [-0.04529, -0.00165];
    let cfg = IntegratorConfig { step: StepControl::Fixed { h_max: Some(1e-5) }, ..Default::default() };
    let err = |tau: f64| {
        let s = corollary_schedule_n2(m.bounds.levels_n2(), tau).unwrap();
        let exact = integrate(&sys, &s, &x0, &cfg).unwrap();
        let approx = terminal_state_expansion(&sys, &s, &x0, 3).unwrap().value;
        common::diff(&approx, exact.final_state())
    };
    let e = [err(0.2), err(0.1), err(0.05)];
    assert!(e[0] / e[1] >= 12.0 && e[1] / e[2] >= 12.0, "{e:?}");
}

#[test]
fn residual_is_small_on_the_predicted_branch() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let fam = ScheduleFamily::n2(m.bounds.levels_n2()).unwrap();
    let e = initial_state_expansion(&sys, &fam, SecondOrderRule::ImplicitFunction).unwrap();
    let tau = 0.1;
    let x0 = predict_x0(&e, tau);
    let s = fam.at(tau).unwrap();
    let r = periodicity_residual(&sys, &s, &x0, 3).unwrap();
    assert!(common::inf_norm(&r) <= 1e-3, "{r:?}");
}

/// `f0 + tau/4 L_g f0 + tau^2/24 (L_f0 L_f0 + L_g L_g) f0`, term by term.
fn residual_in_drift_terms(sys: &bbpc_core::system::ControlAffineSystem, u1: &[f64], x: &[f64], tau: f64) -> Vec<f64> {
    let f0 = sys.drift().as_ref();
    let g: Field = sys.input_field(u1).unwrap();
    let a = f0.eval(x).unwrap();
    let b = lie_derivative(g.as_ref(), f0, x).unwrap();
    let c = lie_derivative2(f0, f0, f0, x).unwrap();
    let d = lie_derivative2(g.as_ref(), g.as_ref(), f0, x).unwrap();
    (0..2).map(|i| a[i] + tau / 4.0 * b[i] + tau * tau / 24.0 * (c[i] + d[i])).collect()
}

#[test]
fn two_window_residual_in_drift_terms() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let u1 = m.bounds.levels_n2();
    let tau = 0.5;
    let s = corollary_schedule_n2(u1.clone(), tau).unwrap();
    let generic = split_periodicity_residual(&sys, &s, &[0.0, 0.0], 3, 1).unwrap();
    let direct = residual_in_drift_terms(&sys, &u1, &[0.0, 0.0], tau);
    assert!(common::inf_norm(&generic) > 1e-3);
    for i in 0..2 {
        assert!((generic[i] / tau - direct[i]).abs() <= 1e-12 * (1.0 + direct[i].abs()), "{generic:?} {direct:?}");
    }
    let x = [0.03, -0.004];
    let generic = split_periodicity_residual(&sys, &s, &x, 3, 1).unwrap();
    let direct = residual_in_drift_terms(&sys, &u1, &x, tau);
    for i in 0..2 {
        assert!((generic[i] / tau - direct[i]).abs() <= 1e-12 * (1.0 + direct[i].abs()));
    }
}

fn close(a: &[f64], b: &[f64]) -> bool {
    a.iter().zip(b).all(|(x, y)| (x - y).abs() <= 1e-12 * (1.0 + x.abs().max(y.abs())))
}

fn scale(v: Vec<f64>, k: f64) -> Vec<f64> {
    v.into_iter().map(|x| x * k).collect()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(50))]

    #[test]
    fn printed_forms_match_the_generic_assembly(
        x in prop::collection::vec(-0.3f64..0.3, 2),
        tau in 0.01f64..1.0,
        a2 in 0.01f64..0.49,
        a4 in 0.01f64..0.49,
    ) {
        let sys = common::cstr();
        let b = ControlBounds::hydrolysis();

        let s2 = corollary_schedule_n2(b.levels_n2(), tau).unwrap();
        let g2 = scale(split_periodicity_residual(&sys, &s2, &x, 3, 1).unwrap(), 2.0 / tau);
        prop_assert!(close(&g2, &periodic_n2(&sys, &b.levels_n2(), &x, tau).unwrap()));

        let s3 = corollary_schedule_n3(b.levels_n3(), a2, tau).unwrap();
        let g3 = scale(periodicity_residual(&sys, &s3, &x, 2).unwrap(), 2.0 / tau);
        prop_assert!(close(&g3, &periodic_n3(&sys, &b.levels_n3(), a2, &x, tau).unwrap()));

        let s4 = corollary_schedule_n4(b.levels_n4(), a2, a4, tau).unwrap();
        let r4 = split_periodicity_residual(&sys, &s4, &x, 2, 2).unwrap();
        prop_assert!(close(&scale(r4.clone(), 2.0 / tau), &periodic_n4(&sys, &b.levels_n4(), a2, a4, &x, tau, false).unwrap()));
        let l = b.levels_n4();
        prop_assert!(close(&scale(r4, 1.0 / tau), &periodic_n4g(&sys, &l[0], &l[1], a2, a4, &x, tau, false).unwrap()));
    }
}

/// Printed averages agree with the generic one only up to multiples of the
/// periodicity residual, so compare them along the predicted orbit family.
#[test]
fn printed_averages_agree_on_the_periodic_branch() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let b = m.bounds;
    let fam = ScheduleFamily::n2(b.levels_n2()).unwrap();
    let e = initial_state_expansion(&sys, &fam, SecondOrderRule::ImplicitFunction).unwrap();
    let gap = |tau: f64| {
        let x0 = predict_x0(&e, tau);
        let s = fam.at(tau).unwrap();
        let generic = average_state_expansion(&sys, &s, &x0, 2).unwrap().value;
        let printed = average_n2(&sys, &b.levels_n2(), &x0, tau).unwrap();
        let drift_form = xbar_n2_at(&sys, &b.levels_n2(), &x0, tau).unwrap();
        (common::diff(&generic, &printed), common::diff(&generic, &drift_form))
    };
    let g = [gap(0.4), gap(0.2), gap(0.1)];
    for k in 0..2 {
        assert!(g[k].0 / g[k + 1].0 >= 6.0, "{g:?}");
        assert!(g[k].1 / g[k + 1].1 >= 6.0, "{g:?}");
    }
}

#[test]
fn generic_expansions_are_reentrant_across_threads() {
    let sys = Arc::new(common::cstr());
    let b = ControlBounds::hydrolysis();
    let s = corollary_schedule_n4(b.levels_n4(), 0.1, 0.3, 0.7).unwrap();
    let want = terminal_state_expansion(&sys, &s, &[0.01, 0.002], 3).unwrap();
    let handles: Vec<_> = (0..4)
        .map(|_| {
            let (sys, s) = (sys.clone(), s.clone());
            std::thread::spawn(move || terminal_state_expansion(&sys, &s, &[0.01, 0.002], 3).unwrap())
        })
        .collect();
    for h in handles {
        assert_eq!(h.join().unwrap(), want);
    }
}
