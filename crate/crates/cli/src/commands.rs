use std::fmt::Write as _;

use bbpc_core::cost::{cbar_polynomial, cost_exact, estimate_j2, leading_coefficient_cstar, CostReport, Design};
use bbpc_core::format::{sig6, to_json};
use bbpc_core::periodic::{
    continuation_sweep, initial_state_expansion, predict_x0, shoot, IntegratorConfig, PeriodicOrbit, ScheduleFamily,
    SecondOrderRule, ShootingConfig,
};
use bbpc_core::reactor::{constant_control_equilibria, discriminant_d, jacobian_at_origin, CstrModel};
use bbpc_core::reference::reference;
use bbpc_core::system::ControlAffineSystem;
use bbpc_core::Error;
use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

use crate::{DesignArgs, Format};

#[derive(Debug)]
pub enum CliError {
    Config(String),
    Numerical(String),
}

impl CliError {
    pub fn code(&self) -> u8 {
        match self {
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
        }
    }
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(m) | CliError::Numerical(m) => f.write_str(m),
        }
    }
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        match e {
            Error::Divergence { .. }
            | Error::StepTolerance { .. }
            | Error::StepUnderflow { .. }
            | Error::NonConvergence { .. }
            | Error::SingularNewton { .. }
            | Error::SingularExpansion { .. }
            | Error::Quadrature { .. }
            | Error::CoefficientMismatch { .. }
            | Error::Domain { .. }
            | Error::TimeOutOfRange { .. } => CliError::Numerical(e.to_string()),
            _ => CliError::Config(e.to_string()),
        }
    }
}

type Result<T> = std::result::Result<T, CliError>;

pub fn load_model(source: &str) -> Result<CstrModel> {
    CstrModel::load(source).map_err(|e| CliError::Config(e.to_string()))
}

fn shooting(tau: f64, coarse: bool) -> ShootingConfig {
    if coarse {
        ShootingConfig { integrator: IntegratorConfig::coarse(tau), ..Default::default() }
    } else {
        ShootingConfig::default()
    }
}

fn pair(v: &[f64]) -> String {
    format!("({})", v.iter().map(|x| sig6(*x)).collect::<Vec<_>>().join(", "))
}

pub fn model_info(name: &str, m: &CstrModel, format: Format) -> Result<String> {
    let sys = m.system()?;
    let p = &m.params;
    let b = &m.bounds;
    let d = discriminant_d(p);
    let jac = jacobian_at_origin(p)?;
    let hot = constant_control_equilibria(&sys, &[0.0, b.u2_max])?;
    let cold = constant_control_equilibria(&sys, &[0.0, b.u2_min])?;
    if format == Format::Json {
        let v = json!({
            "model": name,
            "params": p,
            "bounds": b,
            "D": d,
            "switching_bound_applies": d > 0.0,
            "jacobian_at_origin": [[jac[(0, 0)], jac[(0, 1)]], [jac[(1, 0)], jac[(1, 1)]]],
            "equilibria_u2_max": hot.iter().map(|x| x.to_vec()).collect::<Vec<_>>(),
            "equilibria_u2_min": cold.iter().map(|x| x.to_vec()).collect::<Vec<_>>(),
        });
        return Ok(to_json(&v) + "\n");
    }
    let mut s = String::new();
    let _ = writeln!(s, "model: {name}");
    let _ = writeln!(
        s,
        "kappa = {}  k1 = {}  k2 = {}  phi1 = {}  phi2 = {}  n = {}",
        sig6(p.kappa),
        sig6(p.k1),
        sig6(p.k2),
        sig6(p.phi1),
        sig6(p.phi2),
        sig6(p.n_bar)
    );
    let _ = writeln!(s, "u1 in [{}, {}]  u2 in [{}, {}]", sig6(b.u1_min), sig6(b.u1_max), sig6(b.u2_min), sig6(b.u2_max));
    let verdict = if d > 0.0 { "switching bound (at most 4 per period): applicable" } else { "switching bound: not applicable" };
    let _ = writeln!(s, "D = {}  ({verdict})", sig6(d));
    let _ = writeln!(s, "Jacobian at origin: [{}, {}; {}, {}]", sig6(jac[(0, 0)]), sig6(jac[(0, 1)]), sig6(jac[(1, 0)]), sig6(jac[(1, 1)]));
    for x in &hot {
        let _ = writeln!(s, "x- (u2 = {}): {}  J = {}", sig6(b.u2_max), pair(x), sig6(x[0]));
    }
    for x in &cold {
        let _ = writeln!(s, "x+ (u2 = {}): {}  J = {}", sig6(b.u2_min), pair(x), sig6(x[0]));
    }
    Ok(s)
}

fn design_of(m: &CstrModel, a: &DesignArgs) -> Result<Design> {
    let need = |v: Option<f64>, name: &str| v.ok_or_else(|| CliError::Config(format!("--N {} needs --{name}", a.n)));
    let b = &m.bounds;
    match a.n {
        2 => Ok(Design::N2 { u1: b.levels_n2() }),
        3 => Ok(Design::N3 { levels: b.levels_n3(), alpha2: need(a.alpha2, "alpha2")? }),
        4 => Ok(Design::N4 { levels: b.levels_n4(), alpha2: need(a.alpha2, "alpha2")?, alpha4: need(a.alpha4, "alpha4")? }),
        n => Err(CliError::Config(format!("--N must be 2, 3 or 4, got {n}"))),
    }
}

/// Prediction or origin first, then each equilibrium of the window levels.
fn solve(sys: &ControlAffineSystem, fam: &ScheduleFamily, tau: f64, guess: Option<&[f64]>, cfg: &ShootingConfig) -> Result<PeriodicOrbit> {
    let first = continuation_sweep(sys, fam, &[tau], cfg, guess).remove(0).outcome;
    let err = match first {
        Ok(o) => return Ok(o),
        Err(e) => e,
    };
    if guess.is_none() {
        let s = fam.at(tau)?;
        for u in &fam.levels {
            for g in constant_control_equilibria(sys, u)? {
                if let Ok(o) = shoot(sys, &s, &g, cfg) {
                    return Ok(o);
                }
            }
        }
    }
    Err(err.into())
}

fn leading(sys: &ControlAffineSystem, d: &Design) -> Option<f64> {
    match d {
        Design::N2 { u1 } => leading_coefficient_cstar(sys, u1, SecondOrderRule::ImplicitFunction).ok().map(|c| c.value),
        Design::N4 { levels, alpha2, alpha4 } => {
            cbar_polynomial(sys, levels, *alpha2, *alpha4, SecondOrderRule::ImplicitFunction).ok().map(|c| c.value)
        }
        Design::N3 { .. } => None,
    }
}

fn report(sys: &ControlAffineSystem, d: &Design, tau: f64, guess: Option<&[f64]>, coarse: bool) -> Result<(CostReport, PeriodicOrbit)> {
    if !(tau.is_finite() && tau > 0.0) {
        return Err(CliError::Config(format!("--tau must be positive, got {tau}")));
    }
    let fam = d.family()?;
    let orbit = solve(sys, &fam, tau, guess, &shooting(tau, coarse))?;
    let mut r = CostReport::for_orbit(sys, d, &orbit)?;
    r.leading_coefficient = leading(sys, d);
    Ok((r, orbit))
}

fn guess(a: &DesignArgs) -> Result<Option<&[f64]>> {
    match &a.guess {
        Some(g) if g.len() != 2 => Err(CliError::Config(format!("--guess needs 2 values, got {}", g.len()))),
        // temperature deviation at or below -1 is outside the model
        Some(g) if !(g.iter().all(|v| v.is_finite()) && g[1] > -1.0) => {
            Err(CliError::Config(format!("--guess {g:?} is outside the model domain")))
        }
        Some(g) => Ok(Some(g.as_slice())),
        None => Ok(None),
    }
}

pub fn design(m: &CstrModel, a: &DesignArgs, tau: f64, coarse: bool, format: Format) -> Result<(String, PeriodicOrbit)> {
    let sys = m.system()?;
    let d = design_of(m, a)?;
    let (r, orbit) = report(&sys, &d, tau, guess(a)?, coarse)?;
    if format == Format::Json {
        return Ok((r.to_json() + "\n", orbit));
    }
    let mut s = String::new();
    let alphas: Vec<String> = r.alphas.iter().map(|v| sig6(*v)).collect();
    let _ = writeln!(s, "N = {}  tau = {}  alphas = [{}]", a.n, sig6(tau), alphas.join(", "));
    let _ = writeln!(s, "x0 = {}  closure = {:.2e}  iterations = {}", pair(&r.x0), r.closure_residual, orbit.iterations);
    let _ = writeln!(s, "J = {}", sig6(r.j));
    let kind = serde_json::to_value(r.kind).ok().and_then(|v| v.as_str().map(String::from)).unwrap_or_default();
    let _ = writeln!(s, "{kind} = {}", sig6(r.j_est));
    if let Some(c) = r.leading_coefficient {
        let name = if a.n == 2 { "c*" } else { "c-bar" };
        let _ = writeln!(s, "{name} = {}", sig6(c));
    }
    if let Design::N4 { .. } = d {
        if let Ok(e) = initial_state_expansion(&sys, &d.family()?, SecondOrderRule::ImplicitFunction) {
            let _ = writeln!(s, "expansion: {}", e.validity_note());
        }
    }
    Ok((s, orbit))
}

pub fn trajectory(m: &CstrModel, a: &DesignArgs, tau: f64, coarse: bool) -> Result<String> {
    let sys = m.system()?;
    let d = design_of(m, a)?;
    let (_, orbit) = report(&sys, &d, tau, guess(a)?, coarse)?;
    Ok(orbit.trajectory.to_csv())
}

#[derive(Serialize)]
struct TableRowOut {
    tau: f64,
    x0: Vec<f64>,
    #[serde(rename = "J")]
    j: f64,
    #[serde(rename = "J_est")]
    j_est: f64,
    cstar_tau2: f64,
    published_x0: [f64; 2],
    published_j: f64,
    published_j_est: f64,
    dev_x0: f64,
    dev_j: f64,
    dev_j_est: f64,
    anomalous_j_est: bool,
}

pub fn table1(m: &CstrModel, coarse: bool, format: Format) -> Result<String> {
    let sys = m.system()?;
    let table = reference()?.table_n2;
    let u1 = m.bounds.levels_n2();
    let fam = ScheduleFamily::n2(u1.clone())?;
    let e = initial_state_expansion(&sys, &fam, SecondOrderRule::ImplicitFunction)?;
    let cstar = leading_coefficient_cstar(&sys, &u1, SecondOrderRule::ImplicitFunction)?.value;
    let mut rows = Vec::new();
    for row in &table.rows {
        let tau = row.tau;
        let orbit = shoot(&sys, &fam.at(tau)?, &predict_x0(&e, tau), &shooting(tau, coarse))?;
        let j = cost_exact(&orbit)?;
        let j_est = estimate_j2(&sys, &u1, &orbit.x0, tau)?;
        let dev_x0 = orbit.x0.iter().zip(&row.x0).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
        rows.push(TableRowOut {
            tau,
            x0: orbit.x0.to_vec(),
            j,
            j_est,
            cstar_tau2: cstar * tau * tau,
            published_x0: row.x0,
            published_j: row.j,
            published_j_est: row.j_est,
            dev_x0,
            dev_j: j - row.j,
            dev_j_est: j_est - row.j_est,
            anomalous_j_est: table.is_anomalous(tau),
        });
    }
    if format == Format::Json {
        return Ok(to_json(&rows) + "\n");
    }
    let mut s = String::new();
    let _ = writeln!(
        s,
        "{:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10} {:>12} {:>12}",
        "tau", "x0_1", "x0_2", "J", "J_est", "c*tau^2", "|dx0|", "dJ", "dJ_est"
    );
    for r in &rows {
        let dje = if r.anomalous_j_est { format!("{:>12}", "anomalous") } else { format!("{:>12}", sig6(r.dev_j_est)) };
        let _ = writeln!(
            s,
            "{:>8} {:>12} {:>12} {:>12} {:>12} {:>12} {:>10.2e} {:>12} {dje}",
            sig6(r.tau),
            sig6(r.x0[0]),
            sig6(r.x0[1]),
            sig6(r.j),
            sig6(r.j_est),
            sig6(r.cstar_tau2),
            r.dev_x0,
            sig6(r.dev_j),
        );
    }
    if let Some(r) = rows.iter().find(|r| r.anomalous_j_est) {
        let _ = writeln!(
            s,
            "note: published J_est {} at tau = {} is an outlier and is excluded from comparison",
            sig6(r.published_j_est),
            sig6(r.tau)
        );
    }
    let _ = writeln!(s, "c* = {} (implicit-function second-order rule)", sig6(cstar));
    Ok(s)
}

fn entry(r: std::result::Result<CostReport, CliError>, tau: f64, alphas: Vec<f64>) -> (Value, bool) {
    match r {
        Ok(r) => {
            let mut v = serde_json::to_value(&r).unwrap_or(Value::Null);
            v["status"] = json!("ok");
            (v, true)
        }
        Err(e) => (json!({ "tau": tau, "alphas": alphas, "status": "error", "error": e.to_string() }), false),
    }
}

/// JSON array of per-item reports, and whether any item succeeded.
pub fn sweep(m: &CstrModel, a: &DesignArgs, taus: &[String], alpha_grid: Option<usize>, coarse: bool) -> Result<(String, bool)> {
    let taus: Vec<f64> = taus
        .iter()
        .map(|s| s.trim())
        .filter(|s| !s.is_empty())
        .map(|s| s.parse::<f64>().map_err(|_| CliError::Config(format!("--tau: not a number: '{s}'"))))
        .collect::<Result<_>>()?;
    if let Some(&bad) = taus.iter().find(|t| !(t.is_finite() && **t > 0.0)) {
        return Err(CliError::Config(format!("--tau must be positive, got {bad}")));
    }
    let sys = m.system()?;
    let mut items = Vec::new();
    match alpha_grid {
        Some(k) => {
            if a.n != 4 {
                return Err(CliError::Config("--alpha-grid needs --N 4".into()));
            }
            if k == 0 {
                return Ok(("[]\n".into(), true));
            }
            let [tau] = taus[..] else {
                return Err(CliError::Config("--alpha-grid needs exactly one --tau".into()));
            };
            let levels = m.bounds.levels_n4();
            let cstar = leading_coefficient_cstar(&sys, &m.bounds.levels_n2(), SecondOrderRule::ImplicitFunction)?.value;
            let alpha = |j: usize| (j + 1) as f64 / (2.0 * (k + 1) as f64);
            let out: Vec<(Value, bool)> = (0..k * k)
                .into_par_iter()
                .map(|idx| {
                    let (a2, a4) = (alpha(idx / k), alpha(idx % k));
                    let d = Design::N4 { levels: levels.clone(), alpha2: a2, alpha4: a4 };
                    let (mut v, ok) = entry(report(&sys, &d, tau, None, coarse).map(|r| r.0), tau, d.alphas());
                    v["cstar"] = json!(cstar);
                    if let Some(c) = v.get("leading_coefficient").and_then(Value::as_f64) {
                        v["cbar_exceeds_cstar"] = json!(c > cstar);
                    }
                    (v, ok)
                })
                .collect();
            items = out;
        }
        None => {
            if taus.is_empty() {
                return Ok(("[]\n".into(), true));
            }
            let d = design_of(m, a)?;
            let fam = d.family()?;
            let min_tau = taus.iter().copied().fold(f64::INFINITY, f64::min);
            let cfg = shooting(min_tau, coarse);
            let lead = leading(&sys, &d);
            for it in continuation_sweep(&sys, &fam, &taus, &cfg, guess(a)?) {
                let r = it.outcome.map_err(CliError::from).and_then(|o| {
                    let mut r = CostReport::for_orbit(&sys, &d, &o)?;
                    r.leading_coefficient = lead;
                    Ok(r)
                });
                items.push(entry(r, it.tau, d.alphas()));
            }
        }
    }
    let any = items.iter().any(|(_, ok)| *ok);
    let values: Vec<Value> = items.into_iter().map(|(v, _)| v).collect();
    Ok((to_json(&values) + "\n", any))
}
