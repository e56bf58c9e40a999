//! Scalars for forward-mode differentiation.
//!
//! `Dual<S>` carries one tangent over any scalar, so nesting gives higher
//! directional derivatives: `Dual<Dual<f64>>` holds mixed second order terms.

use std::fmt::Debug;
use std::ops::{Add, AddAssign, Div, Mul, MulAssign, Neg, Sub, SubAssign};

pub trait Scalar:
    Copy
    + Debug
    + PartialEq
    + Send
    + Sync
    + 'static
    + Add<Output = Self>
    + Sub<Output = Self>
    + Mul<Output = Self>
    + Div<Output = Self>
    + Neg<Output = Self>
    + AddAssign
    + SubAssign
    + MulAssign
{
    fn cst(v: f64) -> Self;
    /// Real part (value with all tangents dropped).
    fn re(&self) -> f64;
    fn exp(self) -> Self;
    fn ln(self) -> Self;
    fn sqrt(self) -> Self;
    fn sin(self) -> Self;
    fn cos(self) -> Self;
    fn powi(self, n: i32) -> Self;
    fn powf(self, p: f64) -> Self;
    /// True when every component is finite.
    fn all_finite(&self) -> bool;

    fn zero() -> Self {
        Self::cst(0.0)
    }
    fn one() -> Self {
        Self::cst(1.0)
    }
    fn scale(self, k: f64) -> Self {
        self * Self::cst(k)
    }
}

impl Scalar for f64 {
    fn cst(v: f64) -> Self {
        v
    }
    fn re(&self) -> f64 {
        *self
    }
    fn exp(self) -> Self {
        f64::exp(self)
    }
    fn ln(self) -> Self {
        f64::ln(self)
    }
    fn sqrt(self) -> Self {
        f64::sqrt(self)
    }
    fn sin(self) -> Self {
        f64::sin(self)
    }
    fn cos(self) -> Self {
        f64::cos(self)
    }
    fn powi(self, n: i32) -> Self {
        f64::powi(self, n)
    }
    fn powf(self, p: f64) -> Self {
        f64::powf(self, p)
    }
    fn all_finite(&self) -> bool {
        self.is_finite()
    }
    fn scale(self, k: f64) -> Self {
        self * k
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct Dual<S> {
    pub v: S,
    pub d: S,
}

pub type D1 = Dual<f64>;
pub type D2 = Dual<D1>;
pub type D3 = Dual<D2>;

impl<S: Scalar> Dual<S> {
    pub fn new(v: S, d: S) -> Self {
        Dual { v, d }
    }

    pub fn constant(v: S) -> Self {
        Dual { v, d: S::zero() }
    }

    pub fn variable(v: S) -> Self {
        Dual { v, d: S::one() }
    }
}

impl<S: Scalar> Add for Dual<S> {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Dual::new(self.v + o.v, self.d + o.d)
    }
}

impl<S: Scalar> Sub for Dual<S> {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Dual::new(self.v - o.v, self.d - o.d)
    }
}

impl<S: Scalar> Mul for Dual<S> {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        Dual::new(self.v * o.v, self.v * o.d + self.d * o.v)
    }
}

impl<S: Scalar> Div for Dual<S> {
    type Output = Self;
    fn div(self, o: Self) -> Self {
        let q = self.v / o.v;
        Dual::new(q, (self.d - q * o.d) / o.v)
    }
}

impl<S: Scalar> Neg for Dual<S> {
    type Output = Self;
    fn neg(self) -> Self {
        Dual::new(-self.v, -self.d)
    }
}

impl<S: Scalar> AddAssign for Dual<S> {
    fn add_assign(&mut self, o: Self) {
        *self = *self + o;
    }
}

impl<S: Scalar> SubAssign for Dual<S> {
    fn sub_assign(&mut self, o: Self) {
        *self = *self - o;
    }
}

impl<S: Scalar> MulAssign for Dual<S> {
    fn mul_assign(&mut self, o: Self) {
        *self = *self * o;
    }
}

impl<S: Scalar> Scalar for Dual<S> {
    fn cst(v: f64) -> Self {
        Dual::constant(S::cst(v))
    }
    fn re(&self) -> f64 {
        self.v.re()
    }
    fn exp(self) -> Self {
        let e = self.v.exp();
        Dual::new(e, self.d * e)
    }
    fn ln(self) -> Self {
        Dual::new(self.v.ln(), self.d / self.v)
    }
    fn sqrt(self) -> Self {
        let s = self.v.sqrt();
        Dual::new(s, self.d / s.scale(2.0))
    }
    fn sin(self) -> Self {
        Dual::new(self.v.sin(), self.d * self.v.cos())
    }
    fn cos(self) -> Self {
        Dual::new(self.v.cos(), -(self.d * self.v.sin()))
    }
    fn powi(self, n: i32) -> Self {
        if n == 0 {
            return Self::one();
        }
        Dual::new(self.v.powi(n), self.d * self.v.powi(n - 1).scale(n as f64))
    }
    fn powf(self, p: f64) -> Self {
        Dual::new(self.v.powf(p), self.d * self.v.powf(p - 1.0).scale(p))
    }
    fn all_finite(&self) -> bool {
        self.v.all_finite() && self.d.all_finite()
    }
    fn scale(self, k: f64) -> Self {
        Dual::new(self.v.scale(k), self.d.scale(k))
    }
}

/// Seed `x + eps * dir`.
pub fn seed<S: Scalar>(x: &[S], dir: &[S]) -> Vec<Dual<S>> {
    x.iter().zip(dir).map(|(&v, &d)| Dual::new(v, d)).collect()
}

pub fn values<S: Scalar>(y: &[Dual<S>]) -> Vec<S> {
    y.iter().map(|z| z.v).collect()
}

pub fn tangents<S: Scalar>(y: &[Dual<S>]) -> Vec<S> {
    y.iter().map(|z| z.d).collect()
}

pub fn constants<S: Scalar>(x: &[f64]) -> Vec<S> {
    x.iter().map(|&v| S::cst(v)).collect()
}

pub fn real_parts<S: Scalar>(x: &[S]) -> Vec<f64> {
    x.iter().map(Scalar::re).collect()
}
