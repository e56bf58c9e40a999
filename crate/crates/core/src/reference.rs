//! Published reference values shipped in `data/reference.toml`.

use serde::Deserialize;

use crate::error::{Error, Result};

const SOURCE: &str = include_str!("../data/reference.toml");

#[derive(Debug, Clone, Deserialize)]
pub struct Reference {
    pub model: ModelReference,
    pub expansion: ExpansionReference,
    pub table_n2: TableReference,
    pub sweep_n2: SweepReference,
    pub spot: SpotReference,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ModelReference {
    pub sig_digits: u32,
    pub kappa: f64,
    pub k1: f64,
    pub k2: f64,
    pub phi: f64,
    pub u1_max: f64,
    pub u2_max: f64,
    pub discriminant: f64,
    pub discriminant_tol: f64,
    pub x_minus: [f64; 2],
    pub x_plus: [f64; 2],
    pub j_minus: f64,
    pub equilibrium_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct ExpansionReference {
    pub c1: [f64; 2],
    pub c2: [f64; 2],
    pub coefficient_tol: f64,
    pub det_g: f64,
    pub det_tol: f64,
    pub cstar: f64,
    pub cstar_tol: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TableRow {
    pub tau: f64,
    pub x0: [f64; 2],
    pub j: f64,
    pub j_est: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct TableReference {
    pub x0_tol: f64,
    pub j_tol: f64,
    pub anomalous_estimate_tau: f64,
    pub rows: Vec<TableRow>,
}

impl TableReference {
    pub fn row(&self, tau: f64) -> Option<&TableRow> {
        self.rows.iter().find(|r| (r.tau - tau).abs() < 1e-12)
    }

    pub fn is_anomalous(&self, tau: f64) -> bool {
        (tau - self.anomalous_estimate_tau).abs() < 1e-12
    }
}

#[derive(Debug, Clone, Deserialize)]
pub struct SweepReference {
    pub tol: f64,
    pub coarse_tol: f64,
    pub taus: Vec<f64>,
    pub costs: Vec<f64>,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SpotN3 {
    pub alpha2: f64,
    pub j: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SpotN4 {
    pub alpha2: f64,
    pub alpha4: f64,
    pub j: f64,
}

#[derive(Debug, Clone, Deserialize)]
pub struct SpotReference {
    pub tol: f64,
    pub tau: f64,
    pub n3: Vec<SpotN3>,
    pub n4: Vec<SpotN4>,
}

pub fn reference() -> Result<Reference> {
    toml::from_str(SOURCE).map_err(|e| Error::Config(format!("reference data: {e}")))
}

/// Relative agreement to `digits` significant digits: half a unit in the
/// last retained place.
pub fn agrees_to_sig_digits(a: f64, b: f64, digits: u32) -> bool {
    (a - b).abs() <= 0.5 * 10f64.powi(1 - digits as i32) * b.abs()
}
