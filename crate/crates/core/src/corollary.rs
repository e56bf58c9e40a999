//! Closed-form residuals and averages for the two-, three- and four-window
//! designs, written term by term in the composite fields `f_i` (or in
//! `f0` and the input fields `g~_i`). They are cross-checks for the generic
//! assembly in [`crate::fliess`] and feed the cost estimates.
//!
//! Which generic form each one equals:
//!
//! | form | generic counterpart |
//! |---|---|
//! | `periodic_n2` | split 1, order 3, divided by `tau/2` |
//! | `periodic_n3` | unsplit, order 2, divided by `tau/2` |
//! | `periodic_n4` (`tau^0`, `tau^1` parts) | split 2, order 2, divided by `tau/2` |
//! | `periodic_n4g` (`tau^0`, `tau^1` parts) | split 2, divided by `tau` |
//!
//! The `tau^2` parts of the four-window residuals do not match any split of
//! the third-order assembly; they are kept for reference only.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::lie::{eval_checked, lie2_at, lie_at, Field, Lift};
use crate::scalar::{Dual, Scalar};
use crate::system::ControlAffineSystem;

type V = DVector<f64>;

struct Ctx<'a> {
    x: &'a [f64],
}

impl Ctx<'_> {
    fn f(&self, a: &Field) -> Result<V> {
        Ok(V::from_vec(eval_checked(a.as_ref(), self.x)?))
    }
    /// `L_a b`
    fn l(&self, a: &Field, b: &Field) -> Result<V> {
        Ok(V::from_vec(lie_at(a.as_ref(), b.as_ref(), self.x)?))
    }
    /// `L_a L_b c`
    fn ll(&self, a: &Field, b: &Field, c: &Field) -> Result<V> {
        Ok(V::from_vec(lie2_at(a.as_ref(), b.as_ref(), c.as_ref(), self.x)?))
    }
}

fn fields<const N: usize>(sys: &ControlAffineSystem, levels: &[Vec<f64>; N]) -> Result<[Field; N]> {
    let v = levels.iter().map(|u| sys.composite(u)).collect::<Result<Vec<_>>>()?;
    Ok(v.try_into().unwrap_or_else(|_| unreachable!()))
}

fn check(sys: &ControlAffineSystem, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.state_dim() {
        return Err(Error::Dimension { expected: sys.state_dim(), got: x0.len() });
    }
    Ok(())
}

fn neg(u: &[f64]) -> Vec<f64> {
    u.iter().map(|v| -v).collect()
}

/// Two windows `(u1, -u1)`.
pub fn periodic_n2(sys: &ControlAffineSystem, u1: &[f64], x0: &[f64], tau: f64) -> Result<Vec<f64>> {
    check(sys, x0)?;
    let [f1, f2] = fields(sys, &[u1.to_vec(), neg(u1)])?;
    let c = Ctx { x: x0 };
    let r = c.f(&f1)? + c.f(&f2)? + (c.l(&f1, &f1)? - c.l(&f2, &f2)?) * (tau / 4.0)
        + (c.ll(&f1, &f1, &f1)? + c.ll(&f2, &f2, &f2)?) * (tau * tau / 24.0);
    Ok(r.as_slice().to_vec())
}

pub fn average_n2(sys: &ControlAffineSystem, u1: &[f64], x0: &[f64], tau: f64) -> Result<Vec<f64>> {
    check(sys, x0)?;
    let [f1, f2] = fields(sys, &[u1.to_vec(), neg(u1)])?;
    let c = Ctx { x: x0 };
    let r = V::from_column_slice(x0)
        + (c.f(&f1)? - c.f(&f2)?) * (tau / 8.0)
        + (c.l(&f1, &f1)? + c.l(&f2, &f2)?) * (tau * tau / 48.0);
    Ok(r.as_slice().to_vec())
}

pub fn periodic_n3(sys: &ControlAffineSystem, levels: &[Vec<f64>; 3], alpha2: f64, x0: &[f64], tau: f64) -> Result<Vec<f64>> {
    check(sys, x0)?;
    let [f1, f2, f3] = fields(sys, levels)?;
    let c = Ctx { x: x0 };
    let a = alpha2;
    let first = c.f(&f1)? + c.f(&f3)? + (c.f(&f2)? - c.f(&f3)?) * (2.0 * a);
    let second = c.l(&f1, &f1)? + c.l(&f1, &f3)? * 2.0 + c.l(&f3, &f3)?
        + (c.l(&f1, &f2)? - c.l(&f1, &f3)? + c.l(&f2, &f3)? - c.l(&f3, &f3)?) * (4.0 * a)
        + (c.l(&f2, &f2)? - c.l(&f2, &f3)? * 2.0 + c.l(&f3, &f3)?) * (4.0 * a * a);
    Ok((first + second * (tau / 4.0)).as_slice().to_vec())
}

pub fn average_n3(sys: &ControlAffineSystem, levels: &[Vec<f64>; 3], alpha2: f64, x0: &[f64], tau: f64) -> Result<Vec<f64>> {
    check(sys, x0)?;
    let [f1, f2, f3] = fields(sys, levels)?;
    let c = Ctx { x: x0 };
    let a = alpha2;
    let first = c.f(&f1)? * 3.0 + c.f(&f3)? + (c.f(&f2)? - c.f(&f3)?) * (4.0 * a * (1.0 - a));
    let second = c.l(&f1, &f1)? * 4.0 + c.l(&f1, &f3)? * 3.0 + c.l(&f3, &f3)?
        + (c.l(&f1, &f2)? * 2.0 - c.l(&f1, &f3)? * 2.0 + c.l(&f2, &f3)? - c.l(&f3, &f3)?) * (6.0 * a)
        + (c.l(&f1, &f3)? - c.l(&f1, &f2)? + c.l(&f2, &f2)? - c.l(&f2, &f3)? * 2.0 + c.l(&f3, &f3)?) * (12.0 * a * a);
    let r = V::from_column_slice(x0) + first * (tau / 8.0) + second * (tau * tau / 48.0);
    Ok(r.as_slice().to_vec())
}

/// Four-window residual, `tau^0` and `tau^1` parts, optionally with the
/// reference `tau^2` part.
pub fn periodic_n4(
    sys: &ControlAffineSystem,
    levels: &[Vec<f64>; 4],
    alpha2: f64,
    alpha4: f64,
    x0: &[f64],
    tau: f64,
    with_tau2: bool,
) -> Result<Vec<f64>> {
    check(sys, x0)?;
    let [f1, f2, f3, f4] = fields(sys, levels)?;
    let c = Ctx { x: x0 };
    let (a2, a4) = (alpha2, alpha4);
    let mut r = c.f(&f1)? + c.f(&f3)?
        + (c.l(&f1, &f1)? - c.l(&f3, &f3)?) * (tau / 4.0)
        + ((c.f(&f2)? - c.f(&f3)?) * 2.0 + (c.l(&f1, &f2)? + c.l(&f3, &f3)?) * tau) * a2
        - ((c.f(&f1)? - c.f(&f4)?) * 2.0 + (c.l(&f1, &f1)? + c.l(&f4, &f3)?) * tau) * a4
        + (c.l(&f2, &f2)? - c.l(&f3, &f3)?) * (a2 * a2 * tau)
        + (c.l(&f4, &f3)? - c.l(&f1, &f2)?) * (2.0 * a2 * a4 * tau)
        + (c.l(&f1, &f1)? - c.l(&f4, &f4)?) * (a4 * a4 * tau);
    if with_tau2 {
        let t2 = tau * tau;
        r += (c.ll(&f1, &f1, &f1)? + c.ll(&f3, &f3, &f3)?) * (t2 / 24.0)
            + (c.ll(&f1, &f1, &f2)? - c.ll(&f3, &f3, &f3)?) * (a2 * t2 / 4.0)
            - (c.ll(&f1, &f1, &f1)? - c.ll(&f4, &f3, &f3)?) * (a4 * t2 / 4.0)
            + (c.ll(&f3, &f3, &f3)? + c.ll(&f1, &f2, &f2)?) * (a2 * a2 * t2 / 2.0)
            - (c.ll(&f1, &f1, &f2)? + c.ll(&f4, &f3, &f3)?) * (a2 * a4 * t2)
            + (c.ll(&f1, &f1, &f1)? + c.ll(&f4, &f4, &f3)?) * (a4 * a4 * t2 / 2.0);
    }
    Ok(r.as_slice().to_vec())
}

pub fn average_n4(
    sys: &ControlAffineSystem,
    levels: &[Vec<f64>; 4],
    alpha2: f64,
    alpha4: f64,
    x0: &[f64],
    tau: f64,
) -> Result<Vec<f64>> {
    check(sys, x0)?;
    let [f1, f2, f3, f4] = fields(sys, levels)?;
    let c = Ctx { x: x0 };
    let (a2, a4) = (alpha2, alpha4);
    let first = (c.f(&f1)? - c.f(&f3)?) * 0.25 + (c.f(&f1)? + c.f(&f3)?) * a2 - (c.f(&f1)? + c.f(&f4)?) * a4
        + (c.f(&f2)? - c.f(&f3)?) * (a2 * a2)
        + (c.f(&f1)? - c.f(&f4)?) * (a4 * (a4 - 2.0 * a2));
    let second = (c.l(&f1, &f1)? + c.l(&f3, &f3)?) / 12.0 + (c.l(&f1, &f1)? - c.l(&f3, &f3)?) * (a2 / 2.0)
        - (c.l(&f1, &f1)? - c.l(&f4, &f3)?) * (a4 / 2.0)
        + (c.l(&f1, &f2)? + c.l(&f3, &f3)?) * (a2 * a2)
        + (c.l(&f1, &f1)? + c.l(&f4, &f4)?) * (a4 * a4)
        - (c.l(&f1, &f1)? + c.l(&f4, &f3)?) * (2.0 * a2 * a4);
    let r = V::from_column_slice(x0) + first * (tau / 2.0) + second * (tau * tau / 4.0);
    Ok(r.as_slice().to_vec())
}

/// Four-window residual in terms of `f0`, `g~1 = sum_i u^1_i g_i` and
/// `g~2 = sum_i u^2_i g_i`.
#[allow(clippy::too_many_arguments)]
pub fn periodic_n4g(
    sys: &ControlAffineSystem,
    u1: &[f64],
    u2: &[f64],
    alpha2: f64,
    alpha4: f64,
    x0: &[f64],
    tau: f64,
    with_tau2: bool,
) -> Result<Vec<f64>> {
    check(sys, x0)?;
    let a = sys.drift().clone();
    let b = sys.input_field(u1)?;
    let g = sys.input_field(u2)?;
    let c = Ctx { x: x0 };
    let (a2, a4) = (alpha2, alpha4);
    // L_p f0 and L_p L_q f0
    let l1 = |p: &Field| c.l(p, &a);
    let l2 = |p: &Field, q: &Field| c.ll(p, q, &a);
    let t1 = l1(&b)? / 2.0 + l1(&a)? * (2.0 * a2) - (l1(&a)? * 2.0 + l1(&b)? - l1(&g)?) * a4
        + (l1(&b)? + l1(&g)?) * ((a2 - a4) * (a2 - a4));
    let mut r = c.f(&a)? + (c.f(&b)? + c.f(&g)?) * (a2 - a4) + t1 * (tau / 2.0);
    if with_tau2 {
        let s = l2(&a, &b)? + l2(&a, &g)? + l2(&b, &a)? + l2(&g, &a)?;
        let t2 = (l2(&a, &a)? + l2(&b, &b)?) / 24.0 + (l2(&a, &b)? + l2(&b, &a)?) * (a2 / 4.0)
            - (l2(&a, &b)? * 2.0 + l2(&b, &a)? + l2(&g, &a)? + l2(&b, &b)? + l2(&g, &b)?) * (a4 / 8.0)
            + (l2(&a, &a)? * 2.0 - l2(&a, &b)? + l2(&a, &g)? + l2(&b, &b)? + l2(&b, &g)?) * (a2 * a2 / 4.0)
            - (l2(&a, &a)? * 2.0 + l2(&b, &a)? - l2(&g, &a)? + l2(&b, &b)? + l2(&g, &b)?) * (a2 * a4 / 2.0)
            + (l2(&a, &a)? * 2.0 + l2(&a, &b)? - l2(&a, &g)? + l2(&b, &a)? - l2(&g, &a)? + l2(&b, &b)? + l2(&g, &g)?)
                * (a4 * a4 / 2.0)
            + (s.clone() - l2(&b, &b)? + l2(&g, &g)?) * (a2.powi(3) / 6.0)
            - s.clone() * (a2 * a2 * a4 / 2.0)
            + (s.clone() - l2(&g, &g)?) * (a2 * a4 * a4 / 2.0)
            - (s + l2(&b, &b)? - l2(&g, &g)?) * (a4.powi(3) / 6.0);
        r += t2 * (tau * tau);
    }
    Ok(r.as_slice().to_vec())
}

fn add_scaled<S: Scalar>(acc: &mut [S], k: S, v: &[S]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += k * *b;
    }
}

/// `x0 + tau/4 g~1 + tau^2/24 L_f0 f0`: the two-window average in terms of
/// the drift and the input field of the first level.
pub fn xbar_n2_at<S>(sys: &ControlAffineSystem, u1: &[f64], x0: &[S], tau: S) -> Result<Vec<S>>
where
    S: Lift,
    Dual<S>: Lift,
{
    let f0 = sys.drift();
    let g1 = sys.input_field(u1)?;
    let mut r = x0.to_vec();
    add_scaled(&mut r, tau.scale(0.25), &eval_checked(g1.as_ref(), x0)?);
    add_scaled(&mut r, (tau * tau).scale(1.0 / 24.0), &lie_at(f0.as_ref(), f0.as_ref(), x0)?);
    Ok(r)
}

/// Four-window average in terms of `f0`, `g~1`, `g~2`.
pub fn xbar_n4_at<S>(
    sys: &ControlAffineSystem,
    u1: &[f64],
    u2: &[f64],
    alpha2: f64,
    alpha4: f64,
    x0: &[S],
    tau: S,
) -> Result<Vec<S>>
where
    S: Lift,
    Dual<S>: Lift,
{
    let a = sys.drift();
    let b = sys.input_field(u1)?;
    let g = sys.input_field(u2)?;
    let (a2, a4) = (alpha2, alpha4);
    let fa = eval_checked(a.as_ref(), x0)?;
    let fb = eval_checked(b.as_ref(), x0)?;
    let fg = eval_checked(g.as_ref(), x0)?;
    let la = lie_at(a.as_ref(), a.as_ref(), x0)?;
    let lb = lie_at(b.as_ref(), a.as_ref(), x0)?;
    let lg = lie_at(g.as_ref(), a.as_ref(), x0)?;
    let n = x0.len();
    let d = (a2 - a4) * (a2 - a4);
    let mut r = x0.to_vec();
    for i in 0..n {
        let first = fb[i].scale(0.5) + fa[i].scale(2.0 * a2) - (fa[i].scale(2.0) + fb[i] - fg[i]).scale(a4)
            + (fb[i] + fg[i]).scale(d);
        let second = la[i].scale(1.0 / 12.0) + lb[i].scale(a2 / 2.0) - (lb[i] + lg[i]).scale(a4 / 4.0)
            + la[i].scale(a2 * a2)
            + (la[i] + lb[i].scale(0.5) - lg[i].scale(0.5)).scale(a4 * (a4 - 2.0 * a2));
        r[i] += tau.scale(0.5) * first + (tau * tau).scale(0.5) * second;
    }
    Ok(r)
}
