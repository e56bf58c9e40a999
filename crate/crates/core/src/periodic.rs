//! Periodic orbits under a bang-bang schedule: integration across switches,
//! Newton shooting on the period map, small-period predictions and
//! continuation in the period.

use std::io::{self, Write};

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::fliess::ResidualExpansion;
use crate::format::sig17;
use crate::lie::{eval_checked, Field, Lift, Point};
use crate::scalar::{real_parts, seed, tangents, Dual, Scalar, D1, D2};
use crate::schedule::{build_schedule, BangBangSchedule, LevelMode};
use crate::system::ControlAffineSystem;

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum StepControl {
    /// Classical RK4. Each window gets an even number of equal steps no
    /// longer than `h_max` (default: see [`default_step`]).
    Fixed { h_max: Option<f64> },
    /// RK4 with its embedded third-order estimate driving the step size.
    Adaptive { rtol: f64, atol: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IntegratorConfig {
    pub step: StepControl,
    /// Abort when `|x|_inf` exceeds this.
    pub divergence_bound: f64,
    /// Fixed-step runs fail if a local error estimate exceeds this times
    /// `max(1, |x|_inf)`.
    pub max_local_error: f64,
}

impl Default for IntegratorConfig {
    fn default() -> Self {
        IntegratorConfig { step: StepControl::Fixed { h_max: None }, divergence_bound: 1e6, max_local_error: 1e-6 }
    }
}

impl IntegratorConfig {
    /// Ten times the default step, for quick large-period runs.
    pub fn coarse(tau: f64) -> Self {
        IntegratorConfig {
            step: StepControl::Fixed { h_max: Some(10.0 * default_step(tau)) },
            max_local_error: 1e-2,
            ..Self::default()
        }
    }
}

/// `1e-3 * max(1, tau)`, capped at 0.01 (the reactor's fast transients need
/// it; see the decisions log).
pub fn default_step(tau: f64) -> f64 {
    (1e-3 * tau.max(1.0)).min(0.01)
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct IntegrationStats {
    pub steps: usize,
    pub rejected: usize,
    pub max_local_error: f64,
}

/// Samples of one period. Every switching instant is a sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    pub times: Vec<f64>,
    pub states: Vec<Vec<f64>>,
    /// Sample index of each switching instant `t_0..t_N`.
    pub window_starts: Vec<usize>,
    pub levels: Vec<Vec<f64>>,
    pub stats: IntegrationStats,
}

impl Trajectory {
    pub fn final_state(&self) -> &[f64] {
        self.states.last().expect("trajectory has samples")
    }

    /// Samples of window `k`, endpoints included.
    pub fn window(&self, k: usize) -> (&[f64], &[Vec<f64>]) {
        let (a, b) = (self.window_starts[k], self.window_starts[k + 1]);
        (&self.times[a..=b], &self.states[a..=b])
    }

    /// Control applied from sample `i` on.
    pub fn control_at_sample(&self, i: usize) -> &[f64] {
        let n = self.levels.len();
        let k = self.window_starts[1..n].partition_point(|&s| s <= i);
        &self.levels[k]
    }

    /// CSV with header `t,x1..xn,u1..um`, 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> io::Result<()> {
        let n = self.states.first().map_or(0, Vec::len);
        let m = self.levels.first().map_or(0, Vec::len);
        let mut header = vec!["t".to_string()];
        header.extend((1..=n).map(|i| format!("x{i}")));
        header.extend((1..=m).map(|i| format!("u{i}")));
        writeln!(w, "{}", header.join(","))?;
        for (i, (t, x)) in self.times.iter().zip(&self.states).enumerate() {
            let mut row = vec![sig17(*t)];
            row.extend(x.iter().map(|v| sig17(*v)));
            row.extend(self.control_at_sample(i).iter().map(|v| sig17(*v)));
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("CSV is UTF-8")
    }
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn axpy<S: Scalar>(x: &[S], h: f64, k: &[S]) -> Vec<S> {
    x.iter().zip(k).map(|(&a, &b)| a + b.scale(h)).collect()
}

struct Step<S> {
    x: Vec<S>,
    k_end: Vec<S>,
    err: Vec<f64>,
}

// RK4 with FSAL slope `k1`; the error estimate is h/6 (k4 - f(x_new)).
fn rk4<S: Lift>(f: &dyn crate::lie::VectorFunction, x: &[S], k1: &[S], h: f64) -> Result<Step<S>> {
    let k2 = eval_checked(f, &axpy(x, 0.5 * h, k1))?;
    let k3 = eval_checked(f, &axpy(x, 0.5 * h, &k2))?;
    let k4 = eval_checked(f, &axpy(x, h, &k3))?;
    let xn: Vec<S> = (0..x.len())
        .map(|i| x[i] + (k1[i] + (k2[i] + k3[i]).scale(2.0) + k4[i]).scale(h / 6.0))
        .collect();
    let k5 = eval_checked(f, &xn)?;
    let err = k4.iter().zip(&k5).map(|(a, b)| h / 6.0 * (a.re() - b.re())).collect();
    Ok(Step { x: xn, k_end: k5, err })
}

fn even_steps(len: f64, h_max: f64) -> usize {
    let m = (len / h_max).ceil().max(2.0) as usize;
    m + (m % 2)
}

struct Recorder {
    times: Vec<f64>,
    states: Vec<Vec<f64>>,
    window_starts: Vec<usize>,
}

fn run<S: Lift>(
    fields: &[Field],
    switch_times: &[f64],
    x0: &[S],
    cfg: &IntegratorConfig,
    mut rec: Option<&mut Recorder>,
) -> Result<(Vec<S>, IntegrationStats)> {
    let tau = *switch_times.last().unwrap();
    let mut stats = IntegrationStats::default();
    let mut x = x0.to_vec();
    if let Some(r) = rec.as_deref_mut() {
        r.times.push(0.0);
        r.states.push(real_parts(&x));
        r.window_starts.push(0);
    }
    let check = |x: &[S], t: f64| -> Result<()> {
        let norm = x.iter().fold(0.0f64, |m, v| m.max(v.re().abs()));
        if !(norm <= cfg.divergence_bound) {
            return Err(Error::Divergence { time: t, norm });
        }
        Ok(())
    };
    for (k, f) in fields.iter().enumerate() {
        let (a, b) = (switch_times[k], switch_times[k + 1]);
        let f = f.as_ref();
        let mut slope = eval_checked(f, &x)?;
        match cfg.step {
            StepControl::Fixed { h_max } => {
                let m = even_steps(b - a, h_max.unwrap_or_else(|| default_step(tau)));
                let h = (b - a) / m as f64;
                for s in 0..m {
                    let st = rk4(f, &x, &slope, h)?;
                    let t = if s + 1 == m { b } else { a + (s + 1) as f64 * h };
                    let e = inf_norm(&st.err);
                    stats.max_local_error = stats.max_local_error.max(e);
                    stats.steps += 1;
                    check(&st.x, t)?;
                    let tol = cfg.max_local_error * inf_norm(&real_parts(&st.x)).max(1.0);
                    if e > tol {
                        return Err(Error::StepTolerance { estimate: e, tolerance: tol });
                    }
                    x = st.x;
                    slope = st.k_end;
                    if let Some(r) = rec.as_deref_mut() {
                        r.times.push(t);
                        r.states.push(real_parts(&x));
                    }
                }
            }
            StepControl::Adaptive { rtol, atol } => {
                let mut t = a;
                let mut h = ((b - a) / 8.0).min(default_step(tau));
                while t < b {
                    let last = t + h >= b;
                    let hh = if last { b - t } else { h };
                    let st = rk4(f, &x, &slope, hh)?;
                    let scaled = st
                        .err
                        .iter()
                        .zip(&x)
                        .map(|(e, xi)| e.abs() / (atol + rtol * xi.re().abs()))
                        .fold(0.0, f64::max);
                    if scaled <= 1.0 {
                        t = if last { b } else { t + hh };
                        stats.steps += 1;
                        stats.max_local_error = stats.max_local_error.max(inf_norm(&st.err));
                        check(&st.x, t)?;
                        x = st.x;
                        slope = st.k_end;
                        if let Some(r) = rec.as_deref_mut() {
                            r.times.push(t);
                            r.states.push(real_parts(&x));
                        }
                    } else {
                        stats.rejected += 1;
                    }
                    let factor = if scaled == 0.0 { 5.0 } else { (0.9 * scaled.powf(-0.25)).clamp(0.2, 5.0) };
                    h = hh * factor;
                    if h < 1e-14 * tau.max(1.0) {
                        return Err(Error::StepUnderflow { time: t });
                    }
                }
            }
        }
        if let Some(r) = rec.as_deref_mut() {
            r.window_starts.push(r.times.len() - 1);
        }
    }
    Ok((x, stats))
}

fn check_state(sys: &ControlAffineSystem, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.state_dim() {
        return Err(Error::Dimension { expected: sys.state_dim(), got: x0.len() });
    }
    if let Some(index) = x0.iter().position(|v| !v.is_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(())
}

/// Integrate one period, sampling every step.
pub fn integrate(
    sys: &ControlAffineSystem,
    s: &BangBangSchedule,
    x0: &[f64],
    cfg: &IntegratorConfig,
) -> Result<Trajectory> {
    check_state(sys, x0)?;
    let fields = sys.window_fields(s)?;
    let mut rec = Recorder { times: vec![], states: vec![], window_starts: vec![] };
    let (_, stats) = run(&fields, s.switch_times(), x0, cfg, Some(&mut rec))?;
    Ok(Trajectory {
        times: rec.times,
        states: rec.states,
        window_starts: rec.window_starts,
        levels: s.levels().to_vec(),
        stats,
    })
}

/// State after one period on any liftable scalar (for derivatives of the
/// period map).
pub fn period_map<S: Lift>(
    sys: &ControlAffineSystem,
    s: &BangBangSchedule,
    x0: &[S],
    cfg: &IntegratorConfig,
) -> Result<Vec<S>> {
    if x0.len() != sys.state_dim() {
        return Err(Error::Dimension { expected: sys.state_dim(), got: x0.len() });
    }
    let fields = sys.window_fields(s)?;
    Ok(run(&fields, s.switch_times(), x0, cfg, None)?.0)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum FlowJacobian {
    /// Forward differences with a relative step.
    ForwardDifference { step: f64 },
    /// Integrate the variational system with dual numbers.
    Dual,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShootingConfig {
    /// On `|x(tau) - x0|_inf`.
    pub tol: f64,
    pub max_iter: usize,
    pub max_halvings: usize,
    pub jacobian: FlowJacobian,
    pub integrator: IntegratorConfig,
}

impl Default for ShootingConfig {
    fn default() -> Self {
        ShootingConfig {
            tol: 1e-10,
            max_iter: 50,
            max_halvings: 8,
            jacobian: FlowJacobian::ForwardDifference { step: 1e-7 },
            integrator: IntegratorConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PeriodicOrbit {
    pub x0: Point,
    pub schedule: BangBangSchedule,
    pub trajectory: Trajectory,
    /// `|x(tau) - x0|_inf`
    pub closure_residual: f64,
    pub iterations: usize,
}

impl PeriodicOrbit {
    pub fn tau(&self) -> f64 {
        self.schedule.tau()
    }
}

/// Newton on `F(x0) = x(tau; x0) - x0` with step halving.
pub fn shoot(
    sys: &ControlAffineSystem,
    s: &BangBangSchedule,
    guess: &[f64],
    cfg: &ShootingConfig,
) -> Result<PeriodicOrbit> {
    check_state(sys, guess)?;
    let n = guess.len();
    let fields = sys.window_fields(s)?;
    let st = s.switch_times();
    let icfg = &cfg.integrator;
    let residual = |x: &[f64]| -> Result<Vec<f64>> {
        let (xt, _) = run(&fields, st, x, icfg, None)?;
        Ok(xt.iter().zip(x).map(|(a, b)| a - b).collect())
    };
    let mut x = guess.to_vec();
    let mut r = residual(&x)?;
    let mut it = 0;
    loop {
        let rn = inf_norm(&r);
        if rn <= cfg.tol {
            let trajectory = integrate(sys, s, &x, icfg)?;
            return Ok(PeriodicOrbit {
                x0: Point::new(x)?,
                schedule: s.clone(),
                trajectory,
                closure_residual: rn,
                iterations: it,
            });
        }
        if it == cfg.max_iter {
            return Err(Error::NonConvergence { iterations: it, residual: rn });
        }
        it += 1;
        let jac = match cfg.jacobian {
            FlowJacobian::ForwardDifference { step } => {
                let mut j = DMatrix::zeros(n, n);
                for k in 0..n {
                    let h = step * x[k].abs().max(1.0);
                    let mut xp = x.clone();
                    xp[k] += h;
                    let rp = residual(&xp)?;
                    for i in 0..n {
                        j[(i, k)] = (rp[i] - r[i]) / h;
                    }
                }
                j
            }
            FlowJacobian::Dual => {
                let mut j = DMatrix::zeros(n, n);
                let mut e = vec![0.0; n];
                for k in 0..n {
                    e[k] = 1.0;
                    let (xt, _) = run::<D1>(&fields, st, &seed(&x, &e), icfg, None)?;
                    for (i, d) in tangents(&xt).into_iter().enumerate() {
                        j[(i, k)] = d - if i == k { 1.0 } else { 0.0 };
                    }
                    e[k] = 0.0;
                }
                j
            }
        };
        let rhs = DVector::from_iterator(n, r.iter().map(|v| -v));
        let dx = jac.lu().solve(&rhs).ok_or(Error::SingularNewton { residual: rn })?;
        let mut lambda = 1.0;
        let mut accepted = false;
        for _ in 0..=cfg.max_halvings {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + lambda * d).collect();
            if let Ok(rt) = residual(&trial) {
                if inf_norm(&rt) < rn {
                    x = trial;
                    r = rt;
                    accepted = true;
                    break;
                }
            }
            lambda *= 0.5;
        }
        if !accepted {
            return Err(Error::NonConvergence { iterations: it, residual: rn });
        }
    }
}

/// A schedule shape with the period left free: levels, window fractions and
/// the split used when expanding the periodicity residual.
#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleFamily {
    pub levels: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub split: usize,
    pub mode: LevelMode,
}

impl ScheduleFamily {
    pub fn new(levels: Vec<Vec<f64>>, alphas: Vec<f64>, split: usize, mode: LevelMode) -> Result<Self> {
        build_schedule(levels.clone(), &alphas, 1.0, mode)?;
        if split > levels.len() {
            return Err(Error::IndexOutOfRange(format!("split {split} with N = {}", levels.len())));
        }
        Ok(ScheduleFamily { levels, alphas, split, mode })
    }

    /// `(u1, -u1)`, equal halves, split after the first window.
    pub fn n2(u1: Vec<f64>) -> Result<Self> {
        let s = crate::schedule::corollary_schedule_n2(u1, 1.0)?;
        Self::new(s.levels().to_vec(), s.alphas(), 1, LevelMode::Vertex)
    }

    /// Three windows, unsplit.
    pub fn n3(levels: [Vec<f64>; 3], alpha2: f64) -> Result<Self> {
        let s = crate::schedule::corollary_schedule_n3(levels, alpha2, 1.0)?;
        Self::new(s.levels().to_vec(), s.alphas(), 3, LevelMode::Vertex)
    }

    /// Four windows, split after the second.
    pub fn n4(levels: [Vec<f64>; 4], alpha2: f64, alpha4: f64) -> Result<Self> {
        let s = crate::schedule::corollary_schedule_n4(levels, alpha2, alpha4, 1.0)?;
        Self::new(s.levels().to_vec(), vec![alpha2, 0.5 - alpha2, alpha4], 2, LevelMode::Vertex)
    }

    pub fn at(&self, tau: f64) -> Result<BangBangSchedule> {
        build_schedule(self.levels.clone(), &self.alphas, tau, self.mode)
    }

    /// Durations for a unit period.
    pub fn fractions(&self) -> Result<Vec<f64>> {
        Ok(self.at(1.0)?.durations().to_vec())
    }

    /// Residual expansion for a unit period. Level k scales with `tau^k`.
    pub fn unit_residual(&self, sys: &ControlAffineSystem) -> Result<ResidualExpansion> {
        ResidualExpansion::new(sys, &self.levels, &self.fractions()?, self.split)
    }
}

/// How the second-order coefficient of `x0(tau)` is assembled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum SecondOrderRule {
    /// Second-order implicit function expansion:
    /// `c2 = -1/2 G_x^-1 (c1' G_xx c1 + 2 G_tx c1 + G_tt)`.
    #[default]
    ImplicitFunction,
    /// Same with the mixed term taken once (`G_tx c1` instead of
    /// `2 G_tx c1`). Kept to reproduce published coefficient tables.
    AsPrinted,
}

/// `x0(tau) = c1 tau + c2 tau^2 + O(tau^3)` from the truncated periodicity
/// condition `G(x0, tau) = residual / tau = 0`.
#[derive(Debug, Clone, PartialEq)]
pub struct InitialStateExpansion {
    pub c1: Vec<f64>,
    pub c2: Vec<f64>,
    pub g_x0: DMatrix<f64>,
    pub det_g_x0: f64,
    pub condition: f64,
    pub rule: SecondOrderRule,
    /// `G(0, 0)`. Nonzero means the origin is not on the solution branch
    /// and the expansion is only formal.
    pub base_residual: Vec<f64>,
}

impl InitialStateExpansion {
    pub fn is_formal(&self) -> bool {
        inf_norm(&self.base_residual) > 1e-12
    }

    pub fn validity_note(&self) -> &'static str {
        if self.is_formal() {
            "formal: G(0,0) != 0, the origin is not on the periodic branch"
        } else {
            "valid for small tau"
        }
    }
}

pub fn initial_state_expansion(
    sys: &ControlAffineSystem,
    family: &ScheduleFamily,
    rule: SecondOrderRule,
) -> Result<InitialStateExpansion> {
    let n = sys.state_dim();
    let res = family.unit_residual(sys)?;
    let zero = vec![0.0; n];

    let base_residual = res.level1_at(&zero)?;
    let mut g_x0 = DMatrix::zeros(n, n);
    let mut e = vec![0.0; n];
    for k in 0..n {
        e[k] = 1.0;
        for (i, d) in tangents(&res.level1_at::<D1>(&seed(&zero, &e))?).into_iter().enumerate() {
            g_x0[(i, k)] = d;
        }
        e[k] = 0.0;
    }
    let det = g_x0.determinant();
    let sv = g_x0.clone().svd(false, false).singular_values;
    let condition = sv.max() / sv.min();
    if !(det.abs() > 1e-12 && condition < 1e12) {
        return Err(Error::SingularExpansion { determinant: det, condition });
    }
    let lu = g_x0.clone().lu();
    let solve = |v: Vec<f64>| -> Result<Vec<f64>> {
        lu.solve(&DVector::from_vec(v))
            .map(|s| s.iter().copied().collect())
            .ok_or(Error::SingularExpansion { determinant: det, condition })
    };

    let g_tau = res.level2_at(&zero)?;
    let c1: Vec<f64> = solve(g_tau)?.into_iter().map(|v| -v).collect();

    // c1' G_xx c1 from a mixed second derivative of level 1 along c1.
    let x2: Vec<D2> = c1.iter().map(|&c| Dual::new(Dual::new(0.0, c), Dual::new(c, 0.0))).collect();
    let hess: Vec<f64> = res.level1_at::<D2>(&x2)?.iter().map(|z| z.d.d).collect();
    let g_tx_c1 = tangents(&res.level2_at::<D1>(&seed(&zero, &c1))?);
    let g_tt: Vec<f64> = res.level3_at(&zero)?.iter().map(|v| 2.0 * v).collect();
    let mixed = match rule {
        SecondOrderRule::ImplicitFunction => 2.0,
        SecondOrderRule::AsPrinted => 1.0,
    };
    let rhs: Vec<f64> = (0..n).map(|i| hess[i] + mixed * g_tx_c1[i] + g_tt[i]).collect();
    let c2: Vec<f64> = solve(rhs)?.into_iter().map(|v| -0.5 * v).collect();

    Ok(InitialStateExpansion { c1, c2, g_x0, det_g_x0: det, condition, rule, base_residual })
}

/// `c1 tau + c2 tau^2`.
pub fn predict_x0(e: &InitialStateExpansion, tau: f64) -> Point {
    Point::new(e.c1.iter().zip(&e.c2).map(|(a, b)| a * tau + b * tau * tau).collect())
        .expect("finite coefficients")
}

/// Beyond this the quadratic prediction is no better than the origin.
pub const PREDICTION_MAX_TAU: f64 = 1.0;

#[derive(Debug, Clone, PartialEq)]
pub struct SweepItem {
    pub tau: f64,
    pub outcome: Result<PeriodicOrbit>,
}

/// Shoot at each period in order, seeding each solve with the previous
/// orbit. A failed step is retried through intermediate periods (bisection,
/// up to `max_bisections` deep). The first guess is `first_guess`, else the
/// small-period prediction when `tau <= PREDICTION_MAX_TAU`, else the origin.
pub fn continuation_sweep(
    sys: &ControlAffineSystem,
    family: &ScheduleFamily,
    taus: &[f64],
    cfg: &ShootingConfig,
    first_guess: Option<&[f64]>,
) -> Vec<SweepItem> {
    let n = sys.state_dim();
    let expansion = initial_state_expansion(sys, family, SecondOrderRule::ImplicitFunction).ok();
    let mut anchor: Option<(f64, Vec<f64>)> = None;
    let mut items = Vec::with_capacity(taus.len());
    for &tau in taus {
        let fresh = || -> Vec<f64> {
            match (first_guess, &expansion) {
                (Some(g), _) => g.to_vec(),
                (None, Some(e)) if !e.is_formal() && tau <= PREDICTION_MAX_TAU => predict_x0(e, tau).into_vec(),
                _ => vec![0.0; n],
            }
        };
        let outcome = match &anchor {
            None => family.at(tau).and_then(|s| shoot(sys, &s, &fresh(), cfg)),
            Some((t0, x0)) => continue_to(sys, family, *t0, x0, tau, cfg, 8)
                .or_else(|_| family.at(tau).and_then(|s| shoot(sys, &s, &fresh(), cfg))),
        };
        if let Ok(orbit) = &outcome {
            anchor = Some((tau, orbit.x0.to_vec()));
        }
        items.push(SweepItem { tau, outcome });
    }
    items
}

fn continue_to(
    sys: &ControlAffineSystem,
    family: &ScheduleFamily,
    from_tau: f64,
    from_x0: &[f64],
    tau: f64,
    cfg: &ShootingConfig,
    depth: usize,
) -> Result<PeriodicOrbit> {
    let s = family.at(tau)?;
    match shoot(sys, &s, from_x0, cfg) {
        Ok(o) => Ok(o),
        Err(e) if depth == 0 => Err(e),
        Err(_) => {
            let mid = 0.5 * (from_tau + tau);
            let half = continue_to(sys, family, from_tau, from_x0, mid, cfg, depth - 1)?;
            continue_to(sys, family, mid, &half.x0, tau, cfg, depth - 1)
        }
    }
}
