//! Non-isothermal CSTR with a single n-th order reaction, in dimensionless
//! deviation variables around the steady state.

use std::collections::BTreeMap;
use std::path::Path;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::lie::{eval_checked, jacobian, ConstantField, Field, Point, SmoothMap, VectorFunction};
use crate::scalar::Scalar;
use crate::schedule::ControlBox;
use crate::system::ControlAffineSystem;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ReactionParameters {
    pub kappa: f64,
    pub k1: f64,
    pub k2: f64,
    pub phi1: f64,
    pub phi2: f64,
    /// Reaction order.
    pub n_bar: f64,
}

impl ReactionParameters {
    pub fn hydrolysis() -> Self {
        ReactionParameters { kappa: 17.77, k1: 5.819e7, k2: -8.99e5, phi1: 1.0, phi2: 1.0, n_bar: 1.0 }
    }

    pub fn validate(&self) -> Result<()> {
        let all = [self.kappa, self.k1, self.k2, self.phi1, self.phi2, self.n_bar];
        if all.iter().any(|v| !v.is_finite()) {
            return Err(Error::Config("reaction parameters must be finite".into()));
        }
        if self.kappa <= 0.0 || self.phi1 <= 0.0 || self.phi2 <= 0.0 {
            return Err(Error::Config("kappa, phi1 and phi2 must be positive".into()));
        }
        if self.n_bar < 1.0 {
            return Err(Error::Config(format!("reaction order must be >= 1, got {}", self.n_bar)));
        }
        Ok(())
    }

    /// `k1 e^-kappa`
    pub fn k1_tilde(&self) -> f64 {
        self.k1 * (-self.kappa).exp()
    }

    /// `k2 e^-kappa`
    pub fn k2_tilde(&self) -> f64 {
        self.k2 * (-self.kappa).exp()
    }
}

/// Rectangular control box for the two inlet modulations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ControlBounds {
    pub u1_min: f64,
    pub u1_max: f64,
    pub u2_min: f64,
    pub u2_max: f64,
}

impl ControlBounds {
    pub fn symmetric(u1_max: f64, u2_max: f64) -> Self {
        ControlBounds { u1_min: -u1_max, u1_max, u2_min: -u2_max, u2_max }
    }

    pub fn hydrolysis() -> Self {
        Self::symmetric(1.798, 0.06663)
    }

    pub fn is_symmetric(&self) -> bool {
        self.u1_min == -self.u1_max && self.u2_min == -self.u2_max
    }

    pub fn control_box(&self) -> Result<ControlBox> {
        ControlBox::new(vec![self.u1_min, self.u2_min], vec![self.u1_max, self.u2_max])
    }

    pub fn vertex(&self, high1: bool, high2: bool) -> Vec<f64> {
        vec![
            if high1 { self.u1_max } else { self.u1_min },
            if high2 { self.u2_max } else { self.u2_min },
        ]
    }

    /// First level of the two-window design; the second is its negative.
    pub fn levels_n2(&self) -> Vec<f64> {
        self.vertex(true, true)
    }

    /// Two windows constraining only the first channel's mean.
    pub fn levels_n2_channel1(&self) -> [Vec<f64>; 2] {
        [self.vertex(true, true), self.vertex(false, true)]
    }

    pub fn levels_n3(&self) -> [Vec<f64>; 3] {
        [self.vertex(true, true), self.vertex(false, true), self.vertex(false, false)]
    }

    pub fn levels_n4(&self) -> [Vec<f64>; 4] {
        [self.vertex(true, true), self.vertex(false, true), self.vertex(false, false), self.vertex(true, false)]
    }
}

/// Drift of the reactor model. Undefined for `x2 <= -1` (absolute
/// temperature at or below zero).
#[derive(Debug, Clone, Copy)]
pub struct CstrDrift {
    pub p: ReactionParameters,
}

impl SmoothMap for CstrDrift {
    fn dim_in(&self) -> usize {
        2
    }
    fn dim_out(&self) -> usize {
        2
    }
    fn apply<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        let p = &self.p;
        if !(x[1].re() > -1.0) {
            return Err(Error::Domain { index: 1, value: x[1].re() });
        }
        let c = x[0] + S::one();
        let conc = if p.n_bar.fract() == 0.0 && p.n_bar <= i32::MAX as f64 {
            c.powi(p.n_bar as i32)
        } else {
            if !(c.re() > 0.0) {
                return Err(Error::Domain { index: 0, value: x[0].re() });
            }
            c.powf(p.n_bar)
        };
        let arrhenius = (S::cst(-p.kappa) / (x[1] + S::one())).exp();
        let rate = conc * arrhenius;
        let e = (-p.kappa).exp();
        Ok(vec![
            S::cst(p.k1 * e) - x[0].scale(p.phi1) - rate.scale(p.k1),
            S::cst(p.k2 * e) - x[1].scale(p.phi2) - rate.scale(p.k2),
        ])
    }
}

pub fn build_cstr(p: &ReactionParameters, bounds: &ControlBounds) -> Result<ControlAffineSystem> {
    p.validate()?;
    let drift: Field = Arc::new(CstrDrift { p: *p });
    let g1: Field = Arc::new(ConstantField::new(2, vec![1.0, 0.0]));
    let g2: Field = Arc::new(ConstantField::new(2, vec![0.0, 1.0]));
    ControlAffineSystem::new(drift, vec![g1, g2], bounds.control_box()?)
}

/// Jacobian of the drift at the steady state.
pub fn jacobian_at_origin(p: &ReactionParameters) -> Result<nalgebra::DMatrix<f64>> {
    jacobian(&CstrDrift { p: *p }, &[0.0, 0.0])
}

/// Discriminant of the linearization at the origin:
/// `(phi1 + phi2 + n k1~ + kappa k2~)^2 - 4 (phi1 phi2 + phi1 kappa k2~ + n phi2 k1~)`.
pub fn discriminant_d(p: &ReactionParameters) -> f64 {
    let (a, b) = (p.k1_tilde(), p.k2_tilde());
    let s = p.phi1 + p.phi2 + p.n_bar * a + p.kappa * b;
    s * s - 4.0 * (p.phi1 * p.phi2 + p.phi1 * p.kappa * b + p.n_bar * p.phi2 * a)
}

/// Plant data in physical units.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PhysicalParameters {
    /// kJ/mol
    pub activation_energy: f64,
    /// 1/s
    pub collision_factor: f64,
    /// kJ/mol, negative when exothermic
    pub reaction_heat: f64,
    /// kJ/(K l)
    pub density_heat_capacity: f64,
    /// l
    pub volume: f64,
    /// l/s
    pub flow_rate: f64,
    /// l/s
    pub steady_flow_rate: f64,
    /// mol/l
    pub steady_outlet_concentration: f64,
    /// K
    pub steady_temperature: f64,
    /// mol/l
    pub steady_inlet_concentration: f64,
    /// K
    pub steady_inlet_temperature: f64,
    /// J/(K mol)
    pub gas_constant: f64,
    /// Inlet concentration swing as a fraction of its steady value.
    pub concentration_swing: f64,
    /// Inlet temperature swing in K.
    pub temperature_swing: f64,
}

impl PhysicalParameters {
    /// Hydrolysis of acetic anhydride.
    pub fn hydrolysis() -> Self {
        PhysicalParameters {
            activation_energy: 44.35,
            collision_factor: 1.4e5,
            reaction_heat: -55.5,
            density_heat_capacity: 4.186,
            volume: 0.298,
            flow_rate: 7.17e-4,
            steady_flow_rate: 7.17e-4,
            steady_outlet_concentration: 0.3498,
            steady_temperature: 300.17,
            steady_inlet_concentration: 0.74,
            steady_inlet_temperature: 295.0,
            gas_constant: 8.3144598,
            concentration_swing: 0.85,
            temperature_swing: 20.0,
        }
    }

    fn validate(&self) -> Result<()> {
        let positive = [
            ("activation_energy", self.activation_energy),
            ("collision_factor", self.collision_factor),
            ("density_heat_capacity", self.density_heat_capacity),
            ("volume", self.volume),
            ("flow_rate", self.flow_rate),
            ("steady_flow_rate", self.steady_flow_rate),
            ("steady_outlet_concentration", self.steady_outlet_concentration),
            ("steady_temperature", self.steady_temperature),
            ("steady_inlet_concentration", self.steady_inlet_concentration),
            ("steady_inlet_temperature", self.steady_inlet_temperature),
            ("gas_constant", self.gas_constant),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        for (name, v) in [
            ("reaction_heat", self.reaction_heat),
            ("concentration_swing", self.concentration_swing),
            ("temperature_swing", self.temperature_swing),
        ] {
            if !v.is_finite() {
                return Err(Error::Config(format!("{name} must be finite")));
            }
        }
        Ok(())
    }
}

/// Dimensionless groups and control bounds. The inlet modulations map
/// affinely to `u1`, `u2`; when the flow equals its steady value the offset
/// vanishes and the box is symmetric.
pub fn dimensionless_from_physical(p: &PhysicalParameters, n_bar: f64) -> Result<(ReactionParameters, ControlBounds)> {
    p.validate()?;
    let kappa = p.activation_energy * 1e3 / (p.gas_constant * p.steady_temperature);
    let vf = p.volume / p.steady_flow_rate;
    let k1 = p.collision_factor * p.steady_outlet_concentration.powf(n_bar - 1.0) * vf;
    let k2 = p.reaction_heat * p.collision_factor * p.steady_outlet_concentration.powf(n_bar) * vf
        / (p.density_heat_capacity * p.steady_temperature);
    let phi = p.flow_rate / p.steady_flow_rate;
    let params = ReactionParameters { kappa, k1, k2, phi1: phi, phi2: phi, n_bar };
    params.validate()?;
    let e = (-kappa).exp();
    let u1_offset = k1 * (phi - 1.0) * e;
    let u2_offset = k2 * (phi - 1.0) * e;
    // (C_Ai - C_Ai_bar) / C_Ai_bar = +-swing, (T_i - T_i_bar) / T_i_bar = +-dT / T_i_bar
    let u1_half = (1.0 + k1 * e) * phi * p.concentration_swing.abs();
    let u2_half = (1.0 + k2 * e) * phi * p.temperature_swing.abs() / p.steady_inlet_temperature;
    let bounds = ControlBounds {
        u1_min: u1_offset - u1_half,
        u1_max: u1_offset + u1_half,
        u2_min: u2_offset - u2_half.abs(),
        u2_max: u2_offset + u2_half.abs(),
    };
    Ok((params, bounds))
}

/// All roots of `f0(x) + sum u_i g_i(x) = 0` reached by Newton from a
/// uniform 21-point-per-axis grid on `[-0.9, 0.9]^n`, deduplicated at 1e-8.
pub fn constant_control_equilibria(sys: &ControlAffineSystem, u: &[f64]) -> Result<Vec<Point>> {
    let field = sys.composite(u)?;
    let n = sys.state_dim();
    let per_axis = 21usize;
    let total = per_axis.pow(n as u32);
    let mut roots: Vec<Vec<f64>> = Vec::new();
    for idx in 0..total {
        let mut start = vec![0.0; n];
        let mut r = idx;
        for s in start.iter_mut() {
            *s = -0.9 + 1.8 * (r % per_axis) as f64 / (per_axis - 1) as f64;
            r /= per_axis;
        }
        if let Some(x) = newton_root(field.as_ref(), start) {
            if !roots.iter().any(|q| max_dist(q, &x) <= 1e-8) {
                roots.push(x);
            }
        }
    }
    roots.sort_by(|a, b| a.partial_cmp(b).unwrap_or(std::cmp::Ordering::Equal));
    roots.into_iter().map(Point::new).collect()
}

fn max_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

fn newton_root(f: &dyn VectorFunction, mut x: Vec<f64>) -> Option<Vec<f64>> {
    let mut fx = eval_checked(f, &x).ok()?;
    let mut converged_at = None;
    for it in 0..60 {
        if inf_norm(&fx) <= 1e-12 {
            // two polishing steps past convergence
            let c = *converged_at.get_or_insert(it);
            if it >= c + 2 {
                break;
            }
        }
        let jac = jacobian(f, &x).ok()?;
        let rhs = nalgebra::DVector::from_iterator(fx.len(), fx.iter().map(|v| -v));
        let dx = jac.lu().solve(&rhs)?;
        let mut step = 1.0;
        loop {
            let trial: Vec<f64> = x.iter().zip(dx.iter()).map(|(a, d)| a + step * d).collect();
            match eval_checked(f, &trial) {
                Ok(ft) if inf_norm(&ft) < inf_norm(&fx) || inf_norm(&fx) <= 1e-12 || step < 1e-3 => {
                    x = trial;
                    fx = ft;
                    break;
                }
                _ if step < 1e-3 => return None,
                _ => step *= 0.5,
            }
        }
    }
    (inf_norm(&fx) <= 1e-10).then_some(x)
}

/// Reactor parameters plus control bounds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CstrModel {
    pub params: ReactionParameters,
    pub bounds: ControlBounds,
}

impl CstrModel {
    pub fn hydrolysis() -> Self {
        CstrModel { params: ReactionParameters::hydrolysis(), bounds: ControlBounds::hydrolysis() }
    }

    pub fn system(&self) -> Result<ControlAffineSystem> {
        build_cstr(&self.params, &self.bounds)
    }

    /// A preset name or a path to a `key = value` file.
    pub fn load(source: &str) -> Result<Self> {
        match source {
            "hydrolysis" => Ok(Self::hydrolysis()),
            path => {
                let text = std::fs::read_to_string(Path::new(path))
                    .map_err(|e| Error::Config(format!("cannot read model file {path}: {e}")))?;
                Self::parse(&text)
            }
        }
    }

    /// Parse a model file. Either the dimensionless keys (`kappa`, `k1`, `k2`,
    /// `phi1`, `phi2`, `n_bar`, `u1_max`, `u2_max`, optional `u1_min`,
    /// `u2_min`) or the physical keys of [`PhysicalParameters`] plus `n_bar`.
    /// `preset = hydrolysis` seeds every value, later keys override.
    pub fn parse(text: &str) -> Result<Self> {
        let kv = parse_key_values(text)?;
        let preset = match kv.get("preset").map(String::as_str) {
            None => None,
            Some("hydrolysis") => Some(()),
            Some(other) => return Err(Error::Config(format!("unknown preset '{other}'"))),
        };
        let num = |k: &str| -> Result<Option<f64>> {
            kv.get(k)
                .map(|v| v.parse::<f64>().map_err(|_| Error::Config(format!("{k}: not a number: '{v}'"))))
                .transpose()
        };
        let physical_keys = [
            "activation_energy",
            "collision_factor",
            "reaction_heat",
            "density_heat_capacity",
            "volume",
            "flow_rate",
            "steady_flow_rate",
            "steady_outlet_concentration",
            "steady_temperature",
            "steady_inlet_concentration",
            "steady_inlet_temperature",
            "gas_constant",
            "concentration_swing",
            "temperature_swing",
        ];
        let dimless_keys = ["kappa", "k1", "k2", "phi1", "phi2", "u1_max", "u2_max", "u1_min", "u2_min"];
        for k in kv.keys() {
            if k != "preset" && k != "n_bar" && !physical_keys.contains(&k.as_str()) && !dimless_keys.contains(&k.as_str()) {
                return Err(Error::Config(format!("unknown key '{k}'")));
            }
        }
        let uses_physical = physical_keys.iter().any(|k| kv.contains_key(*k));
        if uses_physical {
            if dimless_keys.iter().any(|k| kv.contains_key(*k)) {
                return Err(Error::Config("mixing physical and dimensionless keys".into()));
            }
            let base = PhysicalParameters::hydrolysis();
            let get = |k: &str, d: f64| -> Result<f64> {
                match num(k)? {
                    Some(v) => Ok(v),
                    None if preset.is_some() => Ok(d),
                    None => Err(Error::Config(format!("missing key '{k}'"))),
                }
            };
            let p = PhysicalParameters {
                activation_energy: get("activation_energy", base.activation_energy)?,
                collision_factor: get("collision_factor", base.collision_factor)?,
                reaction_heat: get("reaction_heat", base.reaction_heat)?,
                density_heat_capacity: get("density_heat_capacity", base.density_heat_capacity)?,
                volume: get("volume", base.volume)?,
                flow_rate: get("flow_rate", base.flow_rate)?,
                steady_flow_rate: get("steady_flow_rate", base.steady_flow_rate)?,
                steady_outlet_concentration: get("steady_outlet_concentration", base.steady_outlet_concentration)?,
                steady_temperature: get("steady_temperature", base.steady_temperature)?,
                steady_inlet_concentration: get("steady_inlet_concentration", base.steady_inlet_concentration)?,
                steady_inlet_temperature: get("steady_inlet_temperature", base.steady_inlet_temperature)?,
                gas_constant: get("gas_constant", base.gas_constant)?,
                concentration_swing: get("concentration_swing", base.concentration_swing)?,
                temperature_swing: get("temperature_swing", base.temperature_swing)?,
            };
            let n_bar = get("n_bar", 1.0)?;
            let (params, bounds) = dimensionless_from_physical(&p, n_bar)?;
            return Ok(CstrModel { params, bounds });
        }
        let base = Self::hydrolysis();
        let get = |k: &str, d: f64| -> Result<f64> {
            match num(k)? {
                Some(v) => Ok(v),
                None if preset.is_some() => Ok(d),
                None => Err(Error::Config(format!("missing key '{k}'"))),
            }
        };
        let params = ReactionParameters {
            kappa: get("kappa", base.params.kappa)?,
            k1: get("k1", base.params.k1)?,
            k2: get("k2", base.params.k2)?,
            phi1: get("phi1", base.params.phi1)?,
            phi2: get("phi2", base.params.phi2)?,
            n_bar: get("n_bar", base.params.n_bar)?,
        };
        params.validate()?;
        let u1_max = get("u1_max", base.bounds.u1_max)?;
        let u2_max = get("u2_max", base.bounds.u2_max)?;
        let bounds = ControlBounds {
            u1_min: num("u1_min")?.unwrap_or(-u1_max),
            u1_max,
            u2_min: num("u2_min")?.unwrap_or(-u2_max),
            u2_max,
        };
        bounds.control_box()?;
        Ok(CstrModel { params, bounds })
    }
}

/// `key = value` lines; `#` starts a comment; blank lines ignored.
pub fn parse_key_values(text: &str) -> Result<BTreeMap<String, String>> {
    let mut out = BTreeMap::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("line {}: expected 'key = value'", lineno + 1)))?;
        let (k, v) = (k.trim(), v.trim());
        if k.is_empty() || v.is_empty() {
            return Err(Error::Config(format!("line {}: empty key or value", lineno + 1)));
        }
        if out.insert(k.to_string(), v.to_string()).is_some() {
            return Err(Error::Config(format!("line {}: duplicate key '{k}'", lineno + 1)));
        }
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn origin_is_equilibrium() {
        let f = CstrDrift { p: ReactionParameters::hydrolysis() };
        assert_eq!(f.apply(&[0.0f64, 0.0]).unwrap(), vec![0.0, 0.0]);
    }

    #[test]
    fn domain_guard() {
        let f = CstrDrift { p: ReactionParameters::hydrolysis() };
        assert!(f.apply(&[0.0f64, -1.0 + 1e-12]).unwrap().iter().all(|v| v.is_finite()));
        assert!(matches!(f.apply(&[0.0f64, -1.0]), Err(Error::Domain { index: 1, .. })));
    }

    #[test]
    fn zero_swing_gives_zero_bounds() {
        let mut p = PhysicalParameters::hydrolysis();
        p.concentration_swing = 0.0;
        p.temperature_swing = 0.0;
        let (_, b) = dimensionless_from_physical(&p, 1.0).unwrap();
        assert_eq!((b.u1_min, b.u1_max, b.u2_min, b.u2_max), (0.0, 0.0, 0.0, 0.0));
    }

    #[test]
    fn discriminant_reduces_without_reaction() {
        let p = ReactionParameters { kappa: 3.0, k1: 0.0, k2: 0.0, phi1: 1.5, phi2: 0.4, n_bar: 1.0 };
        assert!((discriminant_d(&p) - 1.1f64.powi(2)).abs() < 1e-14);
    }

    #[test]
    fn config_parsing() {
        let m = CstrModel::parse("# reactor\npreset = hydrolysis\nphi2 = 2 # faster\n").unwrap();
        assert_eq!(m.params.phi2, 2.0);
        assert_eq!(m.params.k1, 5.819e7);
        assert!(CstrModel::parse("kappa = 1").is_err());
        assert!(CstrModel::parse("preset = hydrolysis\nbogus = 1").is_err());
        assert!(CstrModel::parse("preset = hydrolysis\nkappa = x").is_err());
        assert!(CstrModel::parse("preset = hydrolysis\nkappa = -1").is_err());
        let phys = CstrModel::parse("preset = hydrolysis\nvolume = 0.298").unwrap();
        assert!((phys.params.kappa - 17.77).abs() < 1e-3);
    }
}
