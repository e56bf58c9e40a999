//! Time-average cost `J = (1/tau) int_0^tau x1 dt` along periodic orbits,
//! its truncated-expansion estimates and their leading small-period
//! coefficients.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corollary::{xbar_n2_at, xbar_n4_at};
use crate::error::{Error, Result};
use crate::fliess::average_state_expansion;
use crate::format;
use crate::periodic::{initial_state_expansion, PeriodicOrbit, ScheduleFamily, SecondOrderRule, Trajectory};
use crate::scalar::{Dual, D2};
use crate::system::ControlAffineSystem;

/// Composite Simpson on a possibly nonuniform grid. An odd interval count
/// closes with the three-point rule over the last interval.
pub fn simpson(t: &[f64], y: &[f64]) -> Result<f64> {
    let n = t.len();
    if n < 3 || y.len() != n {
        return Err(Error::Quadrature { window: 0, samples: n.min(y.len()) });
    }
    let pair = |i: usize| {
        let (h0, h1) = (t[i + 1] - t[i], t[i + 2] - t[i + 1]);
        let s = h0 + h1;
        s / 6.0 * ((2.0 - h1 / h0) * y[i] + s * s / (h0 * h1) * y[i + 1] + (2.0 - h0 / h1) * y[i + 2])
    };
    let intervals = n - 1;
    let mut acc = 0.0;
    let mut i = 0;
    while i + 2 < n {
        acc += pair(i);
        i += 2;
    }
    if intervals % 2 == 1 {
        // quadratic through the last three points, integrated over the last interval
        let (a, b, c) = (n - 3, n - 2, n - 1);
        let (h0, h1) = (t[b] - t[a], t[c] - t[b]);
        acc += h1 / 6.0
            * ((3.0 - h1 / (h0 + h1)) * y[c] + (3.0 + h1 / h0) * y[b] - h1 * h1 / (h0 * (h0 + h1)) * y[a]);
    }
    Ok(acc)
}

/// Mean of state component `idx` over the period, Simpson per window.
pub fn trajectory_mean(traj: &Trajectory, idx: usize) -> Result<f64> {
    let tau = traj.times.last().copied().unwrap_or(0.0) - traj.times.first().copied().unwrap_or(0.0);
    let mut total = 0.0;
    for k in 0..traj.window_starts.len() - 1 {
        let (ts, xs) = traj.window(k);
        if ts.len() < 3 {
            return Err(Error::Quadrature { window: k, samples: ts.len() });
        }
        let ys: Vec<f64> = xs.iter().map(|x| x[idx]).collect();
        total += simpson(ts, &ys)?;
    }
    Ok(total / tau)
}

/// `J = mean of x1` over the orbit.
pub fn cost_exact(orbit: &PeriodicOrbit) -> Result<f64> {
    trajectory_mean(&orbit.trajectory, 0)
}

fn check_half(a: f64, name: &str) -> Result<()> {
    if a > 0.0 && a < 0.5 {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!("{name} must lie in (0, 1/2), got {a}")))
    }
}

/// First coordinate of the two-window average estimate.
pub fn estimate_j2(sys: &ControlAffineSystem, u1: &[f64], x0: &[f64], tau: f64) -> Result<f64> {
    Ok(xbar_n2_at(sys, u1, x0, tau)?[0])
}

/// First coordinate of the four-window average estimate; `u1`, `u2` are the
/// first two levels.
pub fn estimate_j4(
    sys: &ControlAffineSystem,
    u1: &[f64],
    u2: &[f64],
    alpha2: f64,
    alpha4: f64,
    x0: &[f64],
    tau: f64,
) -> Result<f64> {
    check_half(alpha2, "alpha2")?;
    check_half(alpha4, "alpha4")?;
    Ok(xbar_n4_at(sys, u1, u2, alpha2, alpha4, x0, tau)?[0])
}

/// Taylor data of an estimate along the predicted orbit family
/// `J_est(x0(tau), tau) = linear tau + value tau^2 + O(tau^3)`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeadingCoefficient {
    /// From exact second derivatives in `tau`.
    pub value: f64,
    /// From a quadratic fit of `J_est / tau` at three small periods.
    pub fitted: f64,
    /// `tau^1` coefficient; zero when the expansion is not formal.
    pub linear: f64,
    /// The periodicity expansion did not pass through the origin.
    pub formal: bool,
}

const FIT_TAUS: [f64; 3] = [1e-4, 2e-4, 4e-4];
const FIT_AGREEMENT: f64 = 1e-4;

fn leading<F, G>(eval_d2: F, eval_f64: G, formal: bool) -> Result<LeadingCoefficient>
where
    F: Fn(D2) -> Result<D2>,
    G: Fn(f64) -> Result<f64>,
{
    let t = Dual::new(Dual::new(0.0, 1.0), Dual::new(1.0, 0.0));
    let j = eval_d2(t)?;
    let value = 0.5 * j.d.d;
    let linear = j.v.d;
    // y = J/tau = a + b tau + c tau^2 through three points; b is the tau^2 coefficient of J
    let ys = FIT_TAUS.iter().map(|&h| Ok(eval_f64(h)? / h)).collect::<Result<Vec<f64>>>()?;
    let [t0, t1, t2] = FIT_TAUS;
    let d01 = (ys[1] - ys[0]) / (t1 - t0);
    let d12 = (ys[2] - ys[1]) / (t2 - t1);
    let c = (d12 - d01) / (t2 - t0);
    let fitted = d01 - c * (t0 + t1);
    if (value - fitted).abs() > FIT_AGREEMENT * value.abs().max(1e-12) {
        return Err(Error::CoefficientMismatch { exact: value, fitted });
    }
    Ok(LeadingCoefficient { value, fitted, linear, formal })
}

fn poly_x0<S: crate::scalar::Scalar>(c1: &[f64], c2: &[f64], tau: S) -> Vec<S> {
    c1.iter().zip(c2).map(|(&a, &b)| tau.scale(a) + (tau * tau).scale(b)).collect()
}

/// `c*`: `tau^2` coefficient of the two-window estimate along `x0(tau)`.
pub fn leading_coefficient_cstar(
    sys: &ControlAffineSystem,
    u1: &[f64],
    rule: SecondOrderRule,
) -> Result<LeadingCoefficient> {
    let e = initial_state_expansion(sys, &ScheduleFamily::n2(u1.to_vec())?, rule)?;
    leading(
        |t| Ok(xbar_n2_at::<D2>(sys, u1, &poly_x0(&e.c1, &e.c2, t), t)?[0]),
        |t| estimate_j2(sys, u1, &poly_x0(&e.c1, &e.c2, t), t),
        e.is_formal(),
    )
}

/// `c-bar(alpha2, alpha4)`: the same for the four-window design.
pub fn cbar_polynomial(
    sys: &ControlAffineSystem,
    levels: &[Vec<f64>; 4],
    alpha2: f64,
    alpha4: f64,
    rule: SecondOrderRule,
) -> Result<LeadingCoefficient> {
    let fam = ScheduleFamily::n4(levels.clone(), alpha2, alpha4)?;
    let e = initial_state_expansion(sys, &fam, rule)?;
    let (u1, u2) = (&levels[0], &levels[1]);
    leading(
        |t| Ok(xbar_n4_at::<D2>(sys, u1, u2, alpha2, alpha4, &poly_x0(&e.c1, &e.c2, t), t)?[0]),
        |t| estimate_j4(sys, u1, u2, alpha2, alpha4, &poly_x0(&e.c1, &e.c2, t), t),
        e.is_formal(),
    )
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CbarPoint {
    pub alpha2: f64,
    pub alpha4: f64,
    pub cbar: LeadingCoefficient,
}

/// `c-bar` on the interior grid `alpha = k / (2 (n + 1))`, `k = 1..=n`, in
/// both coordinates. Points are evaluated in parallel and returned in
/// row-major order.
pub fn cbar_grid(
    sys: &ControlAffineSystem,
    levels: &[Vec<f64>; 4],
    n: usize,
    rule: SecondOrderRule,
) -> Result<Vec<CbarPoint>> {
    let alpha = |k: usize| (k + 1) as f64 / (2.0 * (n + 1) as f64);
    (0..n * n)
        .into_par_iter()
        .map(|idx| {
            let (a2, a4) = (alpha(idx / n), alpha(idx % n));
            Ok(CbarPoint { alpha2: a2, alpha4: a4, cbar: cbar_polynomial(sys, levels, a2, a4, rule)? })
        })
        .collect()
}

/// A schedule design with its cost estimate.
#[derive(Debug, Clone, PartialEq)]
pub enum Design {
    N2 { u1: Vec<f64> },
    N3 { levels: [Vec<f64>; 3], alpha2: f64 },
    N4 { levels: [Vec<f64>; 4], alpha2: f64, alpha4: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum EstimateKind {
    #[serde(rename = "J2_est")]
    J2,
    #[serde(rename = "J4_est")]
    J4,
    /// Generic second-order average.
    #[serde(rename = "average")]
    Average,
}

impl Design {
    pub fn family(&self) -> Result<ScheduleFamily> {
        match self {
            Design::N2 { u1 } => ScheduleFamily::n2(u1.clone()),
            Design::N3 { levels, alpha2 } => ScheduleFamily::n3(levels.clone(), *alpha2),
            Design::N4 { levels, alpha2, alpha4 } => ScheduleFamily::n4(levels.clone(), *alpha2, *alpha4),
        }
    }

    pub fn alphas(&self) -> Vec<f64> {
        match self {
            Design::N2 { .. } => vec![0.5],
            Design::N3 { alpha2, .. } => vec![*alpha2, 0.5 - alpha2],
            Design::N4 { alpha2, alpha4, .. } => vec![*alpha2, 0.5 - alpha2, *alpha4],
        }
    }

    pub fn estimate(&self, sys: &ControlAffineSystem, x0: &[f64], tau: f64) -> Result<(f64, EstimateKind)> {
        match self {
            Design::N2 { u1 } => Ok((estimate_j2(sys, u1, x0, tau)?, EstimateKind::J2)),
            Design::N4 { levels, alpha2, alpha4 } => Ok((
                estimate_j4(sys, &levels[0], &levels[1], *alpha2, *alpha4, x0, tau)?,
                EstimateKind::J4,
            )),
            Design::N3 { .. } => {
                let s = self.family()?.at(tau)?;
                Ok((average_state_expansion(sys, &s, x0, 2)?.value[0], EstimateKind::Average))
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CostReport {
    pub tau: f64,
    pub alphas: Vec<f64>,
    pub x0: Vec<f64>,
    #[serde(rename = "J")]
    pub j: f64,
    #[serde(rename = "J_est")]
    pub j_est: f64,
    pub kind: EstimateKind,
    pub closure_residual: f64,
    #[serde(skip_serializing_if = "Option::is_none", default)]
    pub leading_coefficient: Option<f64>,
}

impl CostReport {
    pub fn for_orbit(sys: &ControlAffineSystem, design: &Design, orbit: &PeriodicOrbit) -> Result<Self> {
        let (j_est, kind) = design.estimate(sys, &orbit.x0, orbit.tau())?;
        Ok(CostReport {
            tau: orbit.tau(),
            alphas: design.alphas(),
            x0: orbit.x0.to_vec(),
            j: cost_exact(orbit)?,
            j_est,
            kind,
            closure_residual: orbit.closure_residual,
            leading_coefficient: None,
        })
    }

    pub fn to_json(&self) -> String {
        format::to_json(self)
    }
}
