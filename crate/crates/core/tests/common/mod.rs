#![allow(dead_code)]

use std::sync::Arc;

use bbpc_core::lie::{AffineField, ConstantField, Field};
use bbpc_core::reactor::CstrModel;
use bbpc_core::schedule::ControlBox;
use bbpc_core::system::ControlAffineSystem;
use nalgebra::DMatrix;

pub fn cstr() -> ControlAffineSystem {
    CstrModel::hydrolysis().system().unwrap()
}

pub fn hydrolysis() -> CstrModel {
    CstrModel::hydrolysis()
}

/// `x' = A x + sum_i u_i b_i` with constant input columns.
pub fn linear(a: [[f64; 2]; 2], b: &[[f64; 2]], bound: f64) -> ControlAffineSystem {
    let a = DMatrix::from_row_slice(2, 2, &[a[0][0], a[0][1], a[1][0], a[1][1]]);
    let drift: Field = Arc::new(AffineField { a, b: vec![0.0; 2] });
    let controls: Vec<Field> = b.iter().map(|c| Arc::new(ConstantField::new(2, c.to_vec())) as Field).collect();
    let bx = ControlBox::symmetric(&vec![bound; b.len()]).unwrap();
    ControlAffineSystem::new(drift, controls, bx).unwrap()
}

pub fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |m, x| m.max(x.abs()))
}

pub fn diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).fold(0.0, |m, (x, y)| m.max((x - y).abs()))
}

/// Three-point Gauss-Legendre over `[a, b]`; exact for quintics.
pub fn gauss(a: f64, b: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let (m, h) = (0.5 * (a + b), 0.5 * (b - a));
    let r = (0.6f64).sqrt();
    h * (5.0 * f(m - h * r) + 8.0 * f(m) + 5.0 * f(m + h * r)) / 9.0
}

/// `int_0^t f` split at every switching time so each piece is polynomial.
pub fn piecewise(times: &[f64], t: f64, f: &dyn Fn(f64) -> f64) -> f64 {
    let mut acc = 0.0;
    for w in times.windows(2) {
        let (a, b) = (w[0], w[1].min(t));
        if b > a {
            acc += gauss(a, b, f);
        }
    }
    acc
}

pub fn indicator(times: &[f64], i: usize, s: f64) -> f64 {
    if times[i] <= s && s < times[i + 1] {
        1.0
    } else {
        0.0
    }
}

pub fn q1(times: &[f64], i: usize, t: f64) -> f64 {
    piecewise(times, t, &|s| indicator(times, i, s))
}

pub fn q2(times: &[f64], i: usize, j: usize, t: f64) -> f64 {
    piecewise(times, t, &|s| indicator(times, i, s) * q1(times, j, s))
}

pub fn q3(times: &[f64], i: usize, j: usize, l: usize, t: f64) -> f64 {
    piecewise(times, t, &|s| indicator(times, i, s) * q2(times, j, l, s))
}
