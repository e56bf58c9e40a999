use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lie::{eval_checked, Field, FieldCombination};
use crate::schedule::{BangBangSchedule, ControlBox};

/// `x' = f0(x) + sum_i u_i g_i(x)` with `u` in a box.
#[derive(Clone)]
pub struct ControlAffineSystem {
    drift: Field,
    controls: Vec<Field>,
    control_box: ControlBox,
}

impl ControlAffineSystem {
    pub fn new(drift: Field, controls: Vec<Field>, control_box: ControlBox) -> Result<Self> {
        let n = drift.dim_in();
        for f in std::iter::once(&drift).chain(&controls) {
            for d in [f.dim_in(), f.dim_out()] {
                if d != n {
                    return Err(Error::Dimension { expected: n, got: d });
                }
            }
        }
        if controls.len() != control_box.dim() {
            return Err(Error::Dimension { expected: controls.len(), got: control_box.dim() });
        }
        Ok(ControlAffineSystem { drift, controls, control_box })
    }

    pub fn state_dim(&self) -> usize {
        self.drift.dim_in()
    }

    pub fn control_dim(&self) -> usize {
        self.controls.len()
    }

    pub fn drift(&self) -> &Field {
        &self.drift
    }

    pub fn controls(&self) -> &[Field] {
        &self.controls
    }

    pub fn control_box(&self) -> &ControlBox {
        &self.control_box
    }

    /// `f0 + sum_i u_i g_i`.
    pub fn composite(&self, u: &[f64]) -> Result<Field> {
        if u.len() != self.control_dim() {
            return Err(Error::Dimension { expected: self.control_dim(), got: u.len() });
        }
        let mut terms = vec![(1.0, self.drift.clone())];
        terms.extend(u.iter().zip(&self.controls).map(|(&c, g)| (c, g.clone())));
        Ok(Arc::new(FieldCombination::new(terms)?))
    }

    /// `sum_i u_i g_i`, without the drift.
    pub fn input_field(&self, u: &[f64]) -> Result<Field> {
        if u.len() != self.control_dim() {
            return Err(Error::Dimension { expected: self.control_dim(), got: u.len() });
        }
        let terms = u.iter().zip(&self.controls).map(|(&c, g)| (c, g.clone())).collect();
        Ok(Arc::new(FieldCombination::new(terms)?))
    }

    /// One composite field per window.
    pub fn window_fields(&self, s: &BangBangSchedule) -> Result<Vec<Field>> {
        s.levels().iter().map(|u| self.composite(u)).collect()
    }

    pub fn rhs(&self, x: &[f64], u: &[f64]) -> Result<Vec<f64>> {
        eval_checked(self.composite(u)?.as_ref(), x)
    }
}
