//! Truncated Chen-Fliess expansions for piecewise-constant schedules.
//!
//! With one composite field `f_i` per window, the state after the schedule is
//!
//! ```text
//! x(t) = x0 + sum_i f_i V_i(t) + sum_{i,j} (L_{f_j} f_i) V_ij(t)
//!           + sum_{i,j,l} (L_{f_l} L_{f_j} f_i) V_ijl(t) + ...
//! ```
//!
//! evaluated at `x0`. The iterated integrals of window indicators are
//! polynomials on each window and are integrated exactly here.

use std::sync::Arc;

use crate::error::{Error, Result};
use crate::lie::{eval_checked, lie2_at, lie_at, Field, FieldCombination, Lift};
use crate::scalar::{Dual, Scalar};
use crate::schedule::BangBangSchedule;
use crate::system::ControlAffineSystem;

/// Switching instants `0 = t_0 < t_1 < ... < t_N = tau`.
#[derive(Debug, Clone, PartialEq)]
pub struct SwitchGrid {
    times: Vec<f64>,
}

impl SwitchGrid {
    pub fn new(times: Vec<f64>) -> Result<Self> {
        if times.len() < 2 || times[0] != 0.0 {
            return Err(Error::InvalidSchedule("switch grid must start at 0 with at least one window".into()));
        }
        if times.windows(2).any(|w| !(w[1] > w[0]) || !w[1].is_finite()) {
            return Err(Error::InvalidSchedule("switch times must increase strictly".into()));
        }
        Ok(SwitchGrid { times })
    }

    pub fn from_durations(durations: &[f64]) -> Result<Self> {
        let mut times = vec![0.0];
        let mut t = 0.0;
        for d in durations {
            t += d;
            times.push(t);
        }
        Self::new(times)
    }

    pub fn from_schedule(s: &BangBangSchedule) -> Self {
        SwitchGrid { times: s.switch_times().to_vec() }
    }

    pub fn n(&self) -> usize {
        self.times.len() - 1
    }

    pub fn tau(&self) -> f64 {
        self.times[self.n()]
    }

    pub fn start(&self, k: usize) -> f64 {
        self.times[k]
    }

    pub fn end(&self, k: usize) -> f64 {
        self.times[k + 1]
    }

    pub fn duration(&self, k: usize) -> f64 {
        self.times[k + 1] - self.times[k]
    }

    fn check(&self, idx: &[usize], t: f64) -> Result<()> {
        if let Some(&i) = idx.iter().find(|&&i| i >= self.n()) {
            return Err(Error::IndexOutOfRange(format!("window {i} with N = {}", self.n())));
        }
        if !(0.0..=self.tau()).contains(&t) {
            return Err(Error::TimeOutOfRange { t, tau: self.tau() });
        }
        Ok(())
    }

    fn locate(&self, t: f64) -> usize {
        self.times[1..self.n()].partition_point(|&s| s <= t)
    }
}

/// `V_i(t)`, the time spent in window `i` up to `t` (zero-based window).
pub fn v1(grid: &SwitchGrid, i: usize, t: f64) -> Result<f64> {
    grid.check(&[i], t)?;
    Ok((t.min(grid.end(i)) - grid.start(i)).max(0.0))
}

/// `V_ij(t) = int_0^t 1_i(s) V_j(s) ds`.
pub fn v2(grid: &SwitchGrid, i: usize, j: usize, t: f64) -> Result<f64> {
    grid.check(&[i, j], t)?;
    if i < j || t <= grid.start(i) {
        return Ok(0.0);
    }
    let s = t.min(grid.end(i)) - grid.start(i);
    Ok(if i == j { 0.5 * s * s } else { s * grid.duration(j) })
}

/// `V_ijl(t) = int_0^t 1_i(s) V_jl(s) ds`.
pub fn v3(grid: &SwitchGrid, i: usize, j: usize, l: usize, t: f64) -> Result<f64> {
    grid.check(&[i, j, l], t)?;
    let pp = PiecewisePoly::indicator(grid, l).integrate(grid);
    let pp = pp.restrict(j).integrate(grid);
    Ok(pp.restrict(i).integrate(grid).eval(grid, t))
}

#[derive(Debug, Clone, PartialEq)]
struct Poly(Vec<f64>);

impl Poly {
    fn eval(&self, s: f64) -> f64 {
        self.0.iter().rev().fold(0.0, |acc, c| acc * s + c)
    }

    fn antiderivative(&self) -> Poly {
        let mut c = vec![0.0];
        c.extend(self.0.iter().enumerate().map(|(k, a)| a / (k + 1) as f64));
        Poly(c)
    }
}

/// A function that is polynomial on each window, in the local offset from
/// the window start.
#[derive(Debug, Clone, PartialEq)]
struct PiecewisePoly(Vec<Poly>);

impl PiecewisePoly {
    fn indicator(grid: &SwitchGrid, i: usize) -> Self {
        PiecewisePoly(
            (0..grid.n())
                .map(|k| Poly(vec![if k == i { 1.0 } else { 0.0 }]))
                .collect(),
        )
    }

    fn restrict(&self, i: usize) -> Self {
        PiecewisePoly(
            self.0
                .iter()
                .enumerate()
                .map(|(k, p)| if k == i { p.clone() } else { Poly(vec![0.0]) })
                .collect(),
        )
    }

    /// `F(t) = int_0^t f`.
    fn integrate(&self, grid: &SwitchGrid) -> Self {
        let mut acc = 0.0;
        let mut out = Vec::with_capacity(self.0.len());
        for (k, p) in self.0.iter().enumerate() {
            let mut q = p.antiderivative();
            q.0[0] = acc;
            acc = q.eval(grid.duration(k));
            out.push(q);
        }
        PiecewisePoly(out)
    }

    fn eval(&self, grid: &SwitchGrid, t: f64) -> f64 {
        let k = grid.locate(t);
        self.0[k].eval(t - grid.start(k))
    }

    fn at_end(&self, grid: &SwitchGrid) -> f64 {
        let k = grid.n() - 1;
        self.0[k].eval(grid.duration(k))
    }

    fn mean(&self, grid: &SwitchGrid) -> f64 {
        self.integrate(grid).at_end(grid) / grid.tau()
    }
}

/// Coefficients of the level-1, level-2 and level-3 Lie terms.
/// `w2[i][j]` multiplies `L_{f_j} f_i` and `w3[i][j][l]` multiplies
/// `L_{f_l} L_{f_j} f_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct LevelWeights {
    pub n: usize,
    pub w1: Vec<f64>,
    pub w2: Vec<Vec<f64>>,
    pub w3: Vec<Vec<Vec<f64>>>,
}

#[derive(Clone, Copy)]
enum Reduce {
    Terminal,
    Mean,
}

impl LevelWeights {
    /// Iterated integrals evaluated at the end of the schedule.
    pub fn terminal(durations: &[f64]) -> Result<Self> {
        Self::build(durations, Reduce::Terminal)
    }

    /// Iterated integrals averaged over the schedule.
    pub fn mean(durations: &[f64]) -> Result<Self> {
        Self::build(durations, Reduce::Mean)
    }

    fn build(durations: &[f64], reduce: Reduce) -> Result<Self> {
        let n = durations.len();
        if n == 0 {
            return Ok(LevelWeights { n, w1: vec![], w2: vec![], w3: vec![] });
        }
        let grid = SwitchGrid::from_durations(durations)?;
        let r = |p: &PiecewisePoly| match reduce {
            Reduce::Terminal => p.at_end(&grid),
            Reduce::Mean => p.mean(&grid),
        };
        let first: Vec<PiecewisePoly> =
            (0..n).map(|i| PiecewisePoly::indicator(&grid, i).integrate(&grid)).collect();
        let mut w2 = vec![vec![0.0; n]; n];
        let mut w3 = vec![vec![vec![0.0; n]; n]; n];
        for j in 0..n {
            for i in j..n {
                let vij = first[j].restrict(i).integrate(&grid);
                w2[i][j] = r(&vij);
                for k in i..n {
                    w3[k][i][j] = r(&vij.restrict(k).integrate(&grid));
                }
            }
        }
        Ok(LevelWeights { n, w1: first.iter().map(r).collect(), w2, w3 })
    }
}

fn axpy<S: Scalar>(acc: &mut [S], c: f64, v: &[S]) {
    for (a, b) in acc.iter_mut().zip(v) {
        *a += b.scale(c);
    }
}

/// `sum_i w1[i] f_i(x)`.
pub fn level1_at<S: Lift>(fields: &[Field], w: &LevelWeights, x: &[S]) -> Result<Vec<S>> {
    let mut acc = vec![S::zero(); x.len()];
    for (f, &c) in fields.iter().zip(&w.w1) {
        if c != 0.0 {
            axpy(&mut acc, c, &eval_checked(f.as_ref(), x)?);
        }
    }
    Ok(acc)
}

/// `sum_{i,j} w2[i][j] L_{f_j} f_i (x)`.
pub fn level2_at<S>(fields: &[Field], w: &LevelWeights, x: &[S]) -> Result<Vec<S>>
where
    S: Lift,
    Dual<S>: Lift,
{
    let mut acc = vec![S::zero(); x.len()];
    for (i, row) in w.w2.iter().enumerate() {
        for (j, &c) in row.iter().enumerate() {
            if c != 0.0 {
                axpy(&mut acc, c, &lie_at(fields[j].as_ref(), fields[i].as_ref(), x)?);
            }
        }
    }
    Ok(acc)
}

/// `sum_{i,j,l} w3[i][j][l] L_{f_l} L_{f_j} f_i (x)`.
pub fn level3_at<S>(fields: &[Field], w: &LevelWeights, x: &[S]) -> Result<Vec<S>>
where
    S: Lift,
    Dual<S>: Lift,
    Dual<Dual<S>>: Lift,
{
    let mut acc = vec![S::zero(); x.len()];
    for (i, plane) in w.w3.iter().enumerate() {
        for (j, row) in plane.iter().enumerate() {
            for (l, &c) in row.iter().enumerate() {
                if c != 0.0 {
                    let t = lie2_at(fields[l].as_ref(), fields[j].as_ref(), fields[i].as_ref(), x)?;
                    axpy(&mut acc, c, &t);
                }
            }
        }
    }
    Ok(acc)
}

/// Result of a truncated expansion. The neglected terms are
/// `O(tau^remainder_exponent)`.
#[derive(Debug, Clone, PartialEq)]
pub struct ExpansionResult {
    pub value: Vec<f64>,
    pub order: usize,
    pub remainder_exponent: usize,
}

fn check_order(order: usize) -> Result<()> {
    if (1..=3).contains(&order) {
        Ok(())
    } else {
        Err(Error::IndexOutOfRange(format!("expansion order {order} (supported: 1..=3)")))
    }
}

fn check_state(sys: &ControlAffineSystem, x0: &[f64]) -> Result<()> {
    if x0.len() != sys.state_dim() {
        return Err(Error::Dimension { expected: sys.state_dim(), got: x0.len() });
    }
    Ok(())
}

fn levels_sum(fields: &[Field], w: &LevelWeights, x0: &[f64], order: usize) -> Result<Vec<f64>> {
    let mut out = level1_at(fields, w, x0)?;
    if order >= 2 {
        axpy(&mut out, 1.0, &level2_at(fields, w, x0)?);
    }
    if order >= 3 {
        axpy(&mut out, 1.0, &level3_at(fields, w, x0)?);
    }
    Ok(out)
}

/// State after one period, truncated after `order` Lie levels.
pub fn terminal_state_expansion(
    sys: &ControlAffineSystem,
    s: &BangBangSchedule,
    x0: &[f64],
    order: usize,
) -> Result<ExpansionResult> {
    check_order(order)?;
    check_state(sys, x0)?;
    let fields = sys.window_fields(s)?;
    let w = LevelWeights::terminal(s.durations())?;
    let mut value = levels_sum(&fields, &w, x0, order)?;
    axpy(&mut value, 1.0, x0);
    Ok(ExpansionResult { value, order, remainder_exponent: order + 1 })
}

/// Time average of the state over one period, truncated after `order` levels.
pub fn average_state_expansion(
    sys: &ControlAffineSystem,
    s: &BangBangSchedule,
    x0: &[f64],
    order: usize,
) -> Result<ExpansionResult> {
    check_order(order)?;
    check_state(sys, x0)?;
    let fields = sys.window_fields(s)?;
    let w = LevelWeights::mean(s.durations())?;
    let mut value = levels_sum(&fields, &w, x0, order)?;
    axpy(&mut value, 1.0, x0);
    Ok(ExpansionResult { value, order, remainder_exponent: order + 1 })
}

/// `x(tau) - x0` from the truncated expansion.
pub fn periodicity_residual(
    sys: &ControlAffineSystem,
    s: &BangBangSchedule,
    x0: &[f64],
    order: usize,
) -> Result<Vec<f64>> {
    let mut r = terminal_state_expansion(sys, s, x0, order)?.value;
    axpy(&mut r, -1.0, x0);
    Ok(r)
}

/// Periodicity residual written as "forward through windows `0..split`"
/// minus "backward through windows `split..N`", each side expanded about
/// the same `x0`. Splitting changes the truncation error but not the exact
/// condition; `split = N` is the plain residual.
#[derive(Clone)]
pub struct ResidualExpansion {
    forward: (Vec<Field>, LevelWeights),
    backward: (Vec<Field>, LevelWeights),
}

impl ResidualExpansion {
    pub fn new(sys: &ControlAffineSystem, levels: &[Vec<f64>], durations: &[f64], split: usize) -> Result<Self> {
        if levels.len() != durations.len() {
            return Err(Error::Dimension { expected: levels.len(), got: durations.len() });
        }
        if split > levels.len() {
            return Err(Error::IndexOutOfRange(format!("split {split} with N = {}", levels.len())));
        }
        let fields = levels.iter().map(|u| sys.composite(u)).collect::<Result<Vec<_>>>()?;
        let fwd_fields = fields[..split].to_vec();
        let fwd_w = LevelWeights::terminal(&durations[..split])?;
        let bwd_fields: Vec<Field> = fields[split..]
            .iter()
            .rev()
            .map(|f| Arc::new(FieldCombination::scaled(f.clone(), -1.0)) as Field)
            .collect();
        let bwd_durations: Vec<f64> = durations[split..].iter().rev().copied().collect();
        let bwd_w = LevelWeights::terminal(&bwd_durations)?;
        Ok(ResidualExpansion { forward: (fwd_fields, fwd_w), backward: (bwd_fields, bwd_w) })
    }

    pub fn for_schedule(sys: &ControlAffineSystem, s: &BangBangSchedule, split: usize) -> Result<Self> {
        Self::new(sys, s.levels(), s.durations(), split)
    }

    pub fn level1_at<S: Lift>(&self, x: &[S]) -> Result<Vec<S>> {
        let mut r = level1_at(&self.forward.0, &self.forward.1, x)?;
        axpy(&mut r, -1.0, &level1_at(&self.backward.0, &self.backward.1, x)?);
        Ok(r)
    }

    pub fn level2_at<S>(&self, x: &[S]) -> Result<Vec<S>>
    where
        S: Lift,
        Dual<S>: Lift,
    {
        let mut r = level2_at(&self.forward.0, &self.forward.1, x)?;
        axpy(&mut r, -1.0, &level2_at(&self.backward.0, &self.backward.1, x)?);
        Ok(r)
    }

    pub fn level3_at<S>(&self, x: &[S]) -> Result<Vec<S>>
    where
        S: Lift,
        Dual<S>: Lift,
        Dual<Dual<S>>: Lift,
    {
        let mut r = level3_at(&self.forward.0, &self.forward.1, x)?;
        axpy(&mut r, -1.0, &level3_at(&self.backward.0, &self.backward.1, x)?);
        Ok(r)
    }

    pub fn eval(&self, x: &[f64], order: usize) -> Result<Vec<f64>> {
        check_order(order)?;
        let mut r = self.level1_at(x)?;
        if order >= 2 {
            axpy(&mut r, 1.0, &self.level2_at(x)?);
        }
        if order >= 3 {
            axpy(&mut r, 1.0, &self.level3_at(x)?);
        }
        Ok(r)
    }
}

/// Split-form residual for a concrete schedule: forward flows `0..split`
/// minus the backward flows of the rest, truncated at `order`. Not normalized.
pub fn split_periodicity_residual(
    sys: &ControlAffineSystem,
    s: &BangBangSchedule,
    x0: &[f64],
    order: usize,
    split: usize,
) -> Result<Vec<f64>> {
    check_state(sys, x0)?;
    ResidualExpansion::for_schedule(sys, s, split)?.eval(x0, order)
}
