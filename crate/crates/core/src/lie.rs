//! Vector fields, Jacobians and Lie derivatives.
//!
//! Derivatives are exact: every field can be evaluated on nested dual
//! numbers, so `L_f h` and `L_f L_g h` come out of one or two seeded
//! evaluations. Fields known only as a black box get a central-difference
//! lift instead (`BlackBoxField`).

use std::ops::Deref;
use std::sync::Arc;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::scalar::{seed, tangents, Dual, Scalar, D1, D2, D3};

/// A finite state vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Point(Vec<f64>);

impl Point {
    pub fn new(coords: Vec<f64>) -> Result<Self> {
        if let Some(index) = coords.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
        Ok(Point(coords))
    }

    pub fn origin(n: usize) -> Self {
        Point(vec![0.0; n])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }
}

impl Deref for Point {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Point {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        Point::new(v)
    }
}

impl From<Point> for Vec<f64> {
    fn from(p: Point) -> Self {
        p.0
    }
}

/// A smooth map R^n -> R^k that can be evaluated on f64 and on up to three
/// levels of nested duals.
pub trait VectorFunction: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>>;
    fn eval_d1(&self, x: &[D1]) -> Result<Vec<D1>>;
    fn eval_d2(&self, x: &[D2]) -> Result<Vec<D2>>;
    fn eval_d3(&self, x: &[D3]) -> Result<Vec<D3>>;

    /// False when derivatives come from finite differences.
    fn exact_derivatives(&self) -> bool {
        true
    }
}

pub type Field = Arc<dyn VectorFunction>;

/// Implement this for maps written once, generically over the scalar type.
/// A blanket impl turns every `SmoothMap` into a `VectorFunction`.
pub trait SmoothMap: Send + Sync {
    fn dim_in(&self) -> usize;
    fn dim_out(&self) -> usize;
    fn apply<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>>;
}

impl<T: SmoothMap> VectorFunction for T {
    fn dim_in(&self) -> usize {
        SmoothMap::dim_in(self)
    }
    fn dim_out(&self) -> usize {
        SmoothMap::dim_out(self)
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.apply(x)
    }
    fn eval_d1(&self, x: &[D1]) -> Result<Vec<D1>> {
        self.apply(x)
    }
    fn eval_d2(&self, x: &[D2]) -> Result<Vec<D2>> {
        self.apply(x)
    }
    fn eval_d3(&self, x: &[D3]) -> Result<Vec<D3>> {
        self.apply(x)
    }
}

/// Scalars a `VectorFunction` can be evaluated on.
pub trait Lift: Scalar {
    fn eval_field(f: &dyn VectorFunction, x: &[Self]) -> Result<Vec<Self>>;
}

impl Lift for f64 {
    fn eval_field(f: &dyn VectorFunction, x: &[Self]) -> Result<Vec<Self>> {
        f.eval(x)
    }
}

impl Lift for D1 {
    fn eval_field(f: &dyn VectorFunction, x: &[Self]) -> Result<Vec<Self>> {
        f.eval_d1(x)
    }
}

impl Lift for D2 {
    fn eval_field(f: &dyn VectorFunction, x: &[Self]) -> Result<Vec<Self>> {
        f.eval_d2(x)
    }
}

impl Lift for D3 {
    fn eval_field(f: &dyn VectorFunction, x: &[Self]) -> Result<Vec<Self>> {
        f.eval_d3(x)
    }
}

/// Evaluate with dimension and finiteness checks.
pub fn eval_checked<S: Lift>(f: &dyn VectorFunction, x: &[S]) -> Result<Vec<S>> {
    if x.len() != f.dim_in() {
        return Err(Error::Dimension { expected: f.dim_in(), got: x.len() });
    }
    let y = S::eval_field(f, x)?;
    if y.len() != f.dim_out() {
        return Err(Error::Dimension { expected: f.dim_out(), got: y.len() });
    }
    if let Some(index) = y.iter().position(|v| !v.all_finite()) {
        return Err(Error::NonFinite { index });
    }
    Ok(y)
}

/// Directional derivative `Dh(x) dir`.
pub fn directional<S>(h: &dyn VectorFunction, x: &[S], dir: &[S]) -> Result<Vec<S>>
where
    S: Scalar,
    Dual<S>: Lift,
{
    Ok(tangents(&eval_checked(h, &seed(x, dir))?))
}

fn check_lie_dims(f: &dyn VectorFunction, h: &dyn VectorFunction, n: usize) -> Result<()> {
    for d in [f.dim_in(), f.dim_out(), h.dim_in()] {
        if d != n {
            return Err(Error::Dimension { expected: n, got: d });
        }
    }
    Ok(())
}

/// `L_f h (x) = Dh(x) f(x)` on any liftable scalar.
pub fn lie_at<S>(f: &dyn VectorFunction, h: &dyn VectorFunction, x: &[S]) -> Result<Vec<S>>
where
    S: Lift,
    Dual<S>: Lift,
{
    check_lie_dims(f, h, x.len())?;
    let fx = eval_checked(f, x)?;
    directional(h, x, &fx)
}

/// `L_f L_g h (x)`.
pub fn lie2_at<S>(
    f: &dyn VectorFunction,
    g: &dyn VectorFunction,
    h: &dyn VectorFunction,
    x: &[S],
) -> Result<Vec<S>>
where
    S: Lift,
    Dual<S>: Lift,
    Dual<Dual<S>>: Lift,
{
    check_lie_dims(f, h, x.len())?;
    check_lie_dims(g, h, x.len())?;
    let fx = eval_checked(f, x)?;
    let inner = lie_at::<Dual<S>>(g, h, &seed(x, &fx))?;
    Ok(tangents(&inner))
}

/// Jacobian as rows of partial derivatives, on any liftable scalar.
pub fn jacobian_rows<S>(f: &dyn VectorFunction, x: &[S]) -> Result<Vec<Vec<S>>>
where
    S: Scalar,
    Dual<S>: Lift,
{
    let n = x.len();
    let mut rows = vec![vec![S::zero(); n]; f.dim_out()];
    let mut e = vec![S::zero(); n];
    for k in 0..n {
        e[k] = S::one();
        let col = directional(f, x, &e)?;
        for (row, c) in rows.iter_mut().zip(col) {
            row[k] = c;
        }
        e[k] = S::zero();
    }
    Ok(rows)
}

pub fn jacobian(f: &dyn VectorFunction, x: &[f64]) -> Result<DMatrix<f64>> {
    let rows = jacobian_rows(f, x)?;
    Ok(DMatrix::from_fn(rows.len(), x.len(), |i, j| rows[i][j]))
}

pub fn lie_derivative(f: &dyn VectorFunction, h: &dyn VectorFunction, x: &[f64]) -> Result<Vec<f64>> {
    lie_at(f, h, x)
}

pub fn lie_derivative2(
    f: &dyn VectorFunction,
    g: &dyn VectorFunction,
    h: &dyn VectorFunction,
    x: &[f64],
) -> Result<Vec<f64>> {
    lie2_at(f, g, h, x)
}

/// Central-difference step for coordinate value `xi`.
pub fn fd_step(xi: f64) -> f64 {
    f64::EPSILON.cbrt() * xi.abs().max(1.0)
}

/// Central-difference Jacobian; the fallback when no derivative is available.
pub fn fd_jacobian(f: &dyn VectorFunction, x: &[f64]) -> Result<DMatrix<f64>> {
    let n = x.len();
    let mut jac = DMatrix::zeros(f.dim_out(), n);
    for k in 0..n {
        let h = fd_step(x[k]);
        let mut xp = x.to_vec();
        let mut xm = x.to_vec();
        xp[k] += h;
        xm[k] -= h;
        let fp = eval_checked(f, &xp)?;
        let fm = eval_checked(f, &xm)?;
        for i in 0..f.dim_out() {
            jac[(i, k)] = (fp[i] - fm[i]) / (2.0 * h);
        }
    }
    Ok(jac)
}

// Lift one dual level through a map known only on the scalar below it.
fn fd_lift<S: Scalar>(
    eval: &dyn Fn(&[S]) -> Result<Vec<S>>,
    x: &[Dual<S>],
) -> Result<Vec<Dual<S>>> {
    let base: Vec<S> = x.iter().map(|z| z.v).collect();
    let f0 = eval(&base)?;
    let mut tang = vec![S::zero(); f0.len()];
    for (k, z) in x.iter().enumerate() {
        if z.d == S::zero() {
            continue;
        }
        let h = fd_step(base[k].re());
        let mut xp = base.clone();
        let mut xm = base.clone();
        xp[k] += S::cst(h);
        xm[k] -= S::cst(h);
        let fp = eval(&xp)?;
        let fm = eval(&xm)?;
        for i in 0..f0.len() {
            tang[i] += (fp[i] - fm[i]) * z.d / S::cst(2.0 * h);
        }
    }
    Ok(f0.into_iter().zip(tang).map(|(v, d)| Dual::new(v, d)).collect())
}

type BoxedMap = Arc<dyn Fn(&[f64]) -> Vec<f64> + Send + Sync>;

/// A field given only as an f64 closure. Derivatives are central differences
/// with step `cbrt(eps) * max(1, |x_i|)`, nested for higher orders.
#[derive(Clone)]
pub struct BlackBoxField {
    dim_in: usize,
    dim_out: usize,
    f: BoxedMap,
}

impl BlackBoxField {
    pub fn new(dim_in: usize, dim_out: usize, f: impl Fn(&[f64]) -> Vec<f64> + Send + Sync + 'static) -> Self {
        BlackBoxField { dim_in, dim_out, f: Arc::new(f) }
    }
}

impl VectorFunction for BlackBoxField {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.dim_out
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        Ok((self.f)(x))
    }
    fn eval_d1(&self, x: &[D1]) -> Result<Vec<D1>> {
        fd_lift(&|y: &[f64]| self.eval(y), x)
    }
    fn eval_d2(&self, x: &[D2]) -> Result<Vec<D2>> {
        fd_lift(&|y: &[D1]| self.eval_d1(y), x)
    }
    fn eval_d3(&self, x: &[D3]) -> Result<Vec<D3>> {
        fd_lift(&|y: &[D2]| self.eval_d2(y), x)
    }
    fn exact_derivatives(&self) -> bool {
        false
    }
}

/// x -> c
#[derive(Debug, Clone)]
pub struct ConstantField {
    pub dim_in: usize,
    pub value: Vec<f64>,
}

impl ConstantField {
    pub fn new(dim_in: usize, value: Vec<f64>) -> Self {
        ConstantField { dim_in, value }
    }
}

impl SmoothMap for ConstantField {
    fn dim_in(&self) -> usize {
        self.dim_in
    }
    fn dim_out(&self) -> usize {
        self.value.len()
    }
    fn apply<S: Scalar>(&self, _x: &[S]) -> Result<Vec<S>> {
        Ok(self.value.iter().map(|&v| S::cst(v)).collect())
    }
}

/// x -> A x + b
#[derive(Debug, Clone)]
pub struct AffineField {
    pub a: DMatrix<f64>,
    pub b: Vec<f64>,
}

impl SmoothMap for AffineField {
    fn dim_in(&self) -> usize {
        self.a.ncols()
    }
    fn dim_out(&self) -> usize {
        self.a.nrows()
    }
    fn apply<S: Scalar>(&self, x: &[S]) -> Result<Vec<S>> {
        Ok((0..self.a.nrows())
            .map(|i| {
                let mut acc = S::cst(self.b[i]);
                for (j, &xj) in x.iter().enumerate() {
                    if self.a[(i, j)] != 0.0 {
                        acc += xj.scale(self.a[(i, j)]);
                    }
                }
                acc
            })
            .collect())
    }
}

/// `sum_k c_k h_k`. Used for composite fields `f0 + sum_i u_i g_i` and for
/// negated or rescaled fields.
#[derive(Clone)]
pub struct FieldCombination {
    terms: Vec<(f64, Field)>,
}

impl FieldCombination {
    pub fn new(terms: Vec<(f64, Field)>) -> Result<Self> {
        let first = terms
            .first()
            .ok_or_else(|| Error::InvalidSchedule("empty field combination".into()))?;
        let (n, k) = (first.1.dim_in(), first.1.dim_out());
        for (_, t) in &terms {
            if t.dim_in() != n {
                return Err(Error::Dimension { expected: n, got: t.dim_in() });
            }
            if t.dim_out() != k {
                return Err(Error::Dimension { expected: k, got: t.dim_out() });
            }
        }
        Ok(FieldCombination { terms })
    }

    pub fn scaled(f: Field, c: f64) -> Self {
        FieldCombination { terms: vec![(c, f)] }
    }

    pub fn terms(&self) -> &[(f64, Field)] {
        &self.terms
    }

    fn eval_generic<S: Lift>(&self, x: &[S]) -> Result<Vec<S>> {
        let mut out = vec![S::zero(); self.dim_out()];
        for (c, f) in &self.terms {
            if *c == 0.0 {
                continue;
            }
            for (o, v) in out.iter_mut().zip(S::eval_field(f.as_ref(), x)?) {
                *o += v.scale(*c);
            }
        }
        Ok(out)
    }
}

impl VectorFunction for FieldCombination {
    fn dim_in(&self) -> usize {
        self.terms[0].1.dim_in()
    }
    fn dim_out(&self) -> usize {
        self.terms[0].1.dim_out()
    }
    fn eval(&self, x: &[f64]) -> Result<Vec<f64>> {
        self.eval_generic(x)
    }
    fn eval_d1(&self, x: &[D1]) -> Result<Vec<D1>> {
        self.eval_generic(x)
    }
    fn eval_d2(&self, x: &[D2]) -> Result<Vec<D2>> {
        self.eval_generic(x)
    }
    fn eval_d3(&self, x: &[D3]) -> Result<Vec<D3>> {
        self.eval_generic(x)
    }
    fn exact_derivatives(&self) -> bool {
        self.terms.iter().all(|(_, f)| f.exact_derivatives())
    }
}
