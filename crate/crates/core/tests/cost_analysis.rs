mod common;

use approx::assert_relative_eq;
use bbpc_core::cost::*;
use bbpc_core::fliess::average_state_expansion;
use bbpc_core::periodic::*;
use bbpc_core::reactor::constant_control_equilibria;
use bbpc_core::reference::reference;
use bbpc_core::schedule::{corollary_schedule_n4, BangBangSchedule, LevelMode};
use proptest::prelude::*;

fn table_orbits() -> Vec<(f64, PeriodicOrbit)> {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let fam = ScheduleFamily::n2(m.bounds.levels_n2()).unwrap();
    let taus: Vec<f64> = (1..=10).map(|k| k as f64 / 10.0).collect();
    continuation_sweep(&sys, &fam, &taus, &ShootingConfig::default(), None)
        .into_iter()
        .map(|it| (it.tau, it.outcome.unwrap()))
        .collect()
}

#[test]
fn constant_orbit_cost_is_its_first_coordinate() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let u = vec![0.0, m.bounds.u2_max];
    let x_minus = constant_control_equilibria(&sys, &u)
        .unwrap()
        .into_iter()
        .find(|x| x[0] < -0.5)
        .unwrap();
    let s = BangBangSchedule::from_durations(vec![u], vec![1.0], LevelMode::Interior).unwrap();
    let o = shoot(&sys, &s, &x_minus, &ShootingConfig::default()).unwrap();
    let j = cost_exact(&o).unwrap();
    assert!((j - x_minus[0]).abs() < 1e-12);
    assert!((j - reference().unwrap().model.j_minus).abs() < 1e-4);
}

/// `x1 + tau/4 u1 + tau^2/24 (L_f0 f0)_1` with the drift Jacobian written out
/// by hand (unit exponent, `g1 = e1`).
fn j2_by_hand(x: [f64; 2], tau: f64) -> f64 {
    let (kappa, k1, k2): (f64, f64, f64) = (17.77, 5.819e7, -8.99e5);
    let e = (-kappa).exp();
    let arr = (-kappa / (x[1] + 1.0)).exp();
    let r = (x[0] + 1.0) * arr;
    let f = [k1 * e - x[0] - k1 * r, k2 * e - x[1] - k2 * r];
    let dr = [arr, r * kappa / (x[1] + 1.0).powi(2)];
    let row0 = [-1.0 - k1 * dr[0], -k1 * dr[1]];
    x[0] + tau / 4.0 * 1.798 + tau * tau / 24.0 * (row0[0] * f[0] + row0[1] * f[1])
}

#[test]
fn two_window_estimate_matches_hand_transcription() {
    let r = reference().unwrap().table_n2;
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let u1 = m.bounds.levels_n2();
    assert_eq!(estimate_j2(&sys, &u1, &[0.0, 0.0], 0.0).unwrap(), 0.0);
    for row in &r.rows {
        let est = estimate_j2(&sys, &u1, &row.x0, row.tau).unwrap();
        let want = j2_by_hand(row.x0, row.tau);
        assert!((est - want).abs() <= 1e-12, "tau {}: {est} vs {want}", row.tau);
    }
}

#[test]
fn estimate_gap_is_third_order_and_costs_are_negative() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let u1 = m.bounds.levels_n2();
    let mut gap = std::collections::BTreeMap::new();
    for (tau, o) in table_orbits() {
        let j = cost_exact(&o).unwrap();
        assert!(j < 0.0, "tau {tau}: {j}");
        let est = estimate_j2(&sys, &u1, &o.x0, tau).unwrap();
        gap.insert((tau * 10.0).round() as i64, (j - est).abs());
    }
    // asymptotic regime only; the ratio falls below 6 by tau = 1
    for (a, b) in [(4, 2), (2, 1)] {
        assert!(gap[&a] / gap[&b] >= 6.5, "{gap:?}");
    }
}

#[test]
fn simpson_converges_on_the_table_orbits() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    for (tau, o) in table_orbits() {
        let half = IntegratorConfig { step: StepControl::Fixed { h_max: Some(default_step(tau) / 2.0) }, ..Default::default() };
        let fine = integrate(&sys, &o.schedule, &o.x0, &half).unwrap();
        let a = cost_exact(&o).unwrap();
        let b = trajectory_mean(&fine, 0).unwrap();
        assert!((a - b).abs() <= 1e-8, "tau {tau}: {a} vs {b}");
    }
}

#[test]
fn cost_decreases_with_the_period() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let fam = ScheduleFamily::n2(m.bounds.levels_n2()).unwrap();
    let taus = [1.0, 2.0, 3.0, 5.0, 10.0, 100.0, 1000.0];
    let mut last = f64::INFINITY;
    let mut guess: Option<Vec<f64>> = None;
    for tau in taus {
        let cfg = ShootingConfig { integrator: IntegratorConfig::coarse(tau), ..Default::default() };
        let items = continuation_sweep(&sys, &fam, &[tau], &cfg, guess.as_deref());
        let o = items.into_iter().next().unwrap().outcome.unwrap();
        let j = cost_exact(&o).unwrap();
        assert!(j < last, "tau {tau}: {j} >= {last}");
        last = j;
        guess = Some(o.x0.to_vec());
    }
}

#[test]
fn linear_leading_coefficient_vanishes() {
    // x0(tau) = -tau/4 b + O(tau^3) and the average is x0 + tau/4 b + O(tau^3)
    let sys = common::linear([[-1.0, 0.5], [-0.3, -2.0]], &[[0.8, -0.6]], 1.0);
    let c = leading_coefficient_cstar(&sys, &[1.0], SecondOrderRule::ImplicitFunction).unwrap();
    assert!(c.value.abs() < 1e-12 && c.linear.abs() < 1e-12, "{c:?}");
    assert!(!c.formal);
}

#[test]
fn leading_coefficient_is_zero_when_channel_one_is_untouched() {
    let sys = common::linear([[-1.0, 0.0], [0.0, -2.0]], &[[0.0, 1.0]], 1.0);
    let c = leading_coefficient_cstar(&sys, &[1.0], SecondOrderRule::ImplicitFunction).unwrap();
    assert_eq!((c.value, c.linear), (0.0, 0.0));
}

#[test]
fn reactor_leading_coefficients() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let u1 = m.bounds.levels_n2();
    let printed = leading_coefficient_cstar(&sys, &u1, SecondOrderRule::AsPrinted).unwrap();
    assert!((printed.value - printed.fitted).abs() <= 1e-4 * printed.value.abs());
    assert!((printed.value + 0.141).abs() < 2e-3);
    let implicit = leading_coefficient_cstar(&sys, &u1, SecondOrderRule::ImplicitFunction).unwrap();
    assert!(implicit.value < 0.0);

    let l = m.bounds.levels_n4();
    let a = cbar_polynomial(&sys, &l, 0.2, 0.3, SecondOrderRule::default()).unwrap();
    let b = cbar_polynomial(&sys, &l, 0.2, 0.3, SecondOrderRule::default()).unwrap();
    assert_eq!(a, b);
    assert!(a.formal);
    assert!(!cbar_polynomial(&sys, &l, 0.2, 0.2, SecondOrderRule::default()).unwrap().formal);
}

#[test]
fn grid_is_row_major_and_thread_count_independent() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let l = m.bounds.levels_n4();
    let grid = cbar_grid(&sys, &l, 3, SecondOrderRule::default()).unwrap();
    let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
    let serial = one.install(|| cbar_grid(&sys, &l, 3, SecondOrderRule::default()).unwrap());
    assert_eq!(grid, serial);
    assert_eq!((grid[1].alpha2, grid[1].alpha4), (0.125, 0.25));
    for p in &grid {
        let direct = cbar_polynomial(&sys, &l, p.alpha2, p.alpha4, SecondOrderRule::default()).unwrap();
        assert_eq!(p.cbar, direct);
    }
}

#[test]
fn four_window_estimate_domain() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let l = m.bounds.levels_n4();
    assert_eq!(estimate_j4(&sys, &l[0], &l[1], 0.2, 0.2, &[0.0, 0.0], 0.0).unwrap(), 0.0);
    assert!(estimate_j4(&sys, &l[0], &l[1], 0.5, 0.2, &[0.0, 0.0], 1.0).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(32))]

    /// The drift-form average agrees with the generic order-2 average along
    /// the predicted branch to third order.
    #[test]
    fn four_window_estimate_matches_generic_average_on_the_branch(a in 0.02f64..0.48) {
        let m = common::hydrolysis();
        let sys = m.system().unwrap();
        let l = m.bounds.levels_n4();
        let fam = ScheduleFamily::n4(l.clone(), a, a).unwrap();
        let e = initial_state_expansion(&sys, &fam, SecondOrderRule::default()).unwrap();
        let gap = |tau: f64| {
            let x0 = predict_x0(&e, tau);
            let s = corollary_schedule_n4(l.clone(), a, a, tau).unwrap();
            let generic = average_state_expansion(&sys, &s, &x0, 2).unwrap().value[0];
            (estimate_j4(&sys, &l[0], &l[1], a, a, &x0, tau).unwrap() - generic).abs()
        };
        let (g1, g2) = (gap(0.02), gap(0.01));
        prop_assert!(g2 <= 1e-10 || g1 / g2 >= 6.0, "{g1} {g2}");
    }
}

#[test]
fn reports_serialize_with_named_fields() {
    let m = common::hydrolysis();
    let sys = m.system().unwrap();
    let design = Design::N2 { u1: m.bounds.levels_n2() };
    let fam = design.family().unwrap();
    let o = shoot(&sys, &fam.at(1.0).unwrap(), &[-0.43, -0.016], &ShootingConfig::default()).unwrap();
    let r = CostReport::for_orbit(&sys, &design, &o).unwrap();
    let v: serde_json::Value = serde_json::from_str(&r.to_json()).unwrap();
    for key in ["tau", "alphas", "x0", "J", "J_est", "kind"] {
        assert!(v.get(key).is_some(), "{key}");
    }
    assert_eq!(v["kind"], "J2_est");
    assert_relative_eq!(v["J"].as_f64().unwrap(), r.j, max_relative = 0.0);
    assert!((r.j + 0.03385).abs() < 1e-3);
}
