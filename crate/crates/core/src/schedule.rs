//! Piecewise-constant control schedules on one period.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::format;

/// Box of admissible control values, `lower <= u <= upper` componentwise.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ControlBox {
    lower: Vec<f64>,
    upper: Vec<f64>,
}

impl ControlBox {
    pub fn new(lower: Vec<f64>, upper: Vec<f64>) -> Result<Self> {
        if lower.len() != upper.len() {
            return Err(Error::Dimension { expected: lower.len(), got: upper.len() });
        }
        if lower.is_empty() {
            return Err(Error::Config("control box needs at least one channel".into()));
        }
        for (i, (l, u)) in lower.iter().zip(&upper).enumerate() {
            if !(l.is_finite() && u.is_finite() && l < u) {
                return Err(Error::Config(format!("control bounds for channel {i}: [{l}, {u}]")));
            }
        }
        Ok(ControlBox { lower, upper })
    }

    pub fn symmetric(half_widths: &[f64]) -> Result<Self> {
        Self::new(half_widths.iter().map(|h| -h).collect(), half_widths.to_vec())
    }

    pub fn dim(&self) -> usize {
        self.lower.len()
    }

    pub fn lower(&self) -> &[f64] {
        &self.lower
    }

    pub fn upper(&self) -> &[f64] {
        &self.upper
    }

    fn slack(&self, i: usize, tol: f64) -> f64 {
        tol * (self.upper[i] - self.lower[i]).abs().max(1.0)
    }

    pub fn contains(&self, u: &[f64], tol: f64) -> bool {
        u.len() == self.dim()
            && u.iter().enumerate().all(|(i, &v)| {
                let s = self.slack(i, tol);
                v >= self.lower[i] - s && v <= self.upper[i] + s
            })
    }

    pub fn is_vertex(&self, u: &[f64], tol: f64) -> bool {
        u.len() == self.dim()
            && u.iter().enumerate().all(|(i, &v)| {
                let s = self.slack(i, tol);
                (v - self.lower[i]).abs() <= s || (v - self.upper[i]).abs() <= s
            })
    }

    /// Vertex picked by `upper[i]` when `high[i]`, else `lower[i]`.
    pub fn vertex(&self, high: &[bool]) -> Vec<f64> {
        (0..self.dim())
            .map(|i| if high[i] { self.upper[i] } else { self.lower[i] })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum LevelMode {
    /// Levels may be anywhere in the box.
    Interior,
    /// Levels must sit on box vertices.
    #[default]
    Vertex,
}

/// N constant control levels held for durations that sum to the period.
#[derive(Debug, Clone, PartialEq)]
pub struct BangBangSchedule {
    levels: Vec<Vec<f64>>,
    durations: Vec<f64>,
    switch_times: Vec<f64>,
    tau: f64,
    mode: LevelMode,
}

fn check_levels(levels: &[Vec<f64>]) -> Result<usize> {
    let m = levels
        .first()
        .ok_or_else(|| Error::InvalidSchedule("no control levels".into()))?
        .len();
    if m == 0 {
        return Err(Error::InvalidSchedule("control levels are empty".into()));
    }
    for u in levels {
        if u.len() != m {
            return Err(Error::Dimension { expected: m, got: u.len() });
        }
        if let Some(index) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite { index });
        }
    }
    Ok(m)
}

/// Schedule with window fractions `alphas` for windows 2..N; window 1 gets
/// what remains. The last duration is stored as `tau` minus the others.
pub fn build_schedule(
    levels: Vec<Vec<f64>>,
    alphas: &[f64],
    tau: f64,
    mode: LevelMode,
) -> Result<BangBangSchedule> {
    check_levels(&levels)?;
    if !(tau.is_finite() && tau > 0.0) {
        return Err(Error::InvalidSchedule(format!("period must be positive, got {tau}")));
    }
    if alphas.len() + 1 != levels.len() {
        return Err(Error::InvalidSchedule(format!(
            "{} levels need {} fractions, got {}",
            levels.len(),
            levels.len() - 1,
            alphas.len()
        )));
    }
    for (k, &a) in alphas.iter().enumerate() {
        if !(a.is_finite() && a > 0.0) {
            return Err(Error::InvalidFraction { index: k + 1, value: a });
        }
    }
    let sum: f64 = alphas.iter().sum();
    if sum >= 1.0 {
        return Err(Error::InfeasiblePartition { sum });
    }
    let n = levels.len();
    let mut durations = Vec::with_capacity(n);
    durations.push((1.0 - sum) * tau);
    durations.extend(alphas.iter().map(|a| a * tau));
    if n > 1 {
        let head: f64 = durations[..n - 1].iter().sum();
        durations[n - 1] = tau - head;
    }
    BangBangSchedule::assemble(levels, durations, tau, mode)
}

impl BangBangSchedule {
    pub fn from_durations(levels: Vec<Vec<f64>>, durations: Vec<f64>, mode: LevelMode) -> Result<Self> {
        check_levels(&levels)?;
        if durations.len() != levels.len() {
            return Err(Error::Dimension { expected: levels.len(), got: durations.len() });
        }
        let tau = durations.iter().sum();
        Self::assemble(levels, durations, tau, mode)
    }

    fn assemble(levels: Vec<Vec<f64>>, durations: Vec<f64>, tau: f64, mode: LevelMode) -> Result<Self> {
        for (k, &d) in durations.iter().enumerate() {
            if !(d.is_finite() && d > 0.0) {
                return Err(Error::InvalidFraction { index: k, value: d / tau });
            }
        }
        let mut switch_times = Vec::with_capacity(durations.len() + 1);
        let mut t = 0.0;
        switch_times.push(t);
        for d in &durations {
            t += d;
            switch_times.push(t);
        }
        *switch_times.last_mut().unwrap() = tau;
        if switch_times.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InfeasiblePartition { sum: 1.0 - durations[0] / tau });
        }
        Ok(BangBangSchedule { levels, durations, switch_times, tau, mode })
    }

    pub fn n_windows(&self) -> usize {
        self.levels.len()
    }

    pub fn control_dim(&self) -> usize {
        self.levels[0].len()
    }

    pub fn levels(&self) -> &[Vec<f64>] {
        &self.levels
    }

    pub fn durations(&self) -> &[f64] {
        &self.durations
    }

    /// `t_0 = 0 < t_1 < ... < t_N = tau`.
    pub fn switch_times(&self) -> &[f64] {
        &self.switch_times
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    pub fn mode(&self) -> LevelMode {
        self.mode
    }

    /// Fractions of windows 2..N.
    pub fn alphas(&self) -> Vec<f64> {
        self.durations[1..].iter().map(|d| d / self.tau).collect()
    }

    /// Window containing `t`, windows closed on the left.
    pub fn window_at(&self, t: f64) -> usize {
        let n = self.n_windows();
        self.switch_times[1..n].partition_point(|&s| s <= t).min(n - 1)
    }

    pub fn control_at(&self, t: f64) -> &[f64] {
        &self.levels[self.window_at(t)]
    }

    /// Mean of each control channel over the period.
    pub fn mean_control(&self) -> Vec<f64> {
        let m = self.control_dim();
        (0..m)
            .map(|c| {
                self.levels.iter().zip(&self.durations).map(|(u, d)| u[c] * d).sum::<f64>() / self.tau
            })
            .collect()
    }

    /// Same levels and fractions on a different period.
    pub fn with_period(&self, tau: f64) -> Result<Self> {
        build_schedule(self.levels.clone(), &self.alphas(), tau, self.mode)
    }

    /// Check every level against the box (and its vertices in vertex mode).
    pub fn validate_against(&self, bx: &ControlBox, tol: f64) -> Result<()> {
        for (k, u) in self.levels.iter().enumerate() {
            if u.len() != bx.dim() {
                return Err(Error::Dimension { expected: bx.dim(), got: u.len() });
            }
            if !bx.contains(u, tol) {
                return Err(Error::InvalidSchedule(format!("level {k} {u:?} outside the control box")));
            }
            if self.mode == LevelMode::Vertex && !bx.is_vertex(u, tol) {
                return Err(Error::InvalidSchedule(format!("level {k} {u:?} is not a box vertex")));
            }
        }
        Ok(())
    }

    pub fn document(&self) -> ScheduleDocument {
        ScheduleDocument {
            levels: self.levels.clone(),
            alphas: self.alphas(),
            tau: self.tau,
            mode: self.mode,
        }
    }

    pub fn to_json(&self) -> String {
        format::to_json(&self.document())
    }

    pub fn from_json(s: &str) -> Result<Self> {
        let doc: ScheduleDocument =
            serde_json::from_str(s).map_err(|e| Error::Config(format!("schedule JSON: {e}")))?;
        doc.build()
    }
}

/// Serialized form of a schedule.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScheduleDocument {
    pub levels: Vec<Vec<f64>>,
    pub alphas: Vec<f64>,
    pub tau: f64,
    pub mode: LevelMode,
}

impl ScheduleDocument {
    pub fn build(self) -> Result<BangBangSchedule> {
        build_schedule(self.levels, &self.alphas, self.tau, self.mode)
    }
}

/// Require that the mean of one channel over the period equals `mean`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IsoperimetricTarget {
    /// Zero-based channel index.
    pub channel: usize,
    pub mean: f64,
}

impl IsoperimetricTarget {
    pub fn new(channel: usize, mean: f64) -> Self {
        IsoperimetricTarget { channel, mean }
    }
}

/// `sum_i tau_i u^i_c - tau * mean`.
pub fn isoperimetric_residual(s: &BangBangSchedule, target: &IsoperimetricTarget) -> Result<f64> {
    let m = s.control_dim();
    if target.channel >= m {
        return Err(Error::ChannelOutOfRange { channel: target.channel, m });
    }
    let integral: f64 = s.levels.iter().zip(&s.durations).map(|(u, d)| u[target.channel] * d).sum();
    Ok(integral - s.tau * target.mean)
}

fn opposite(a: f64, b: f64) -> bool {
    (a + b).abs() <= 1e-12 * a.abs().max(b.abs())
}

fn open_half(name: &str, a: f64) -> Result<()> {
    if a > 0.0 && a < 0.5 {
        Ok(())
    } else {
        Err(Error::Hypothesis(format!("{name} must lie in (0, 1/2), got {a}")))
    }
}

/// Two windows `(u1, -u1)` of length `tau/2` each.
pub fn corollary_schedule_n2(u1: Vec<f64>, tau: f64) -> Result<BangBangSchedule> {
    if u1.first().copied().unwrap_or(0.0) == 0.0 {
        return Err(Error::Hypothesis("first channel of u1 must be nonzero".into()));
    }
    let u2 = u1.iter().map(|v| -v).collect();
    build_schedule(vec![u1, u2], &[0.5], tau, LevelMode::Vertex)
}

/// Durations `(tau/2, alpha2 tau, (1/2 - alpha2) tau)`, first channel
/// `(a, -a, -a)`.
pub fn corollary_schedule_n3(levels: [Vec<f64>; 3], alpha2: f64, tau: f64) -> Result<BangBangSchedule> {
    open_half("alpha2", alpha2)?;
    let a = levels[0][0];
    if a == 0.0 || !opposite(a, levels[1][0]) || !opposite(a, levels[2][0]) {
        return Err(Error::Hypothesis("first channel must read (a, -a, -a) with a != 0".into()));
    }
    build_schedule(levels.to_vec(), &[alpha2, 0.5 - alpha2], tau, LevelMode::Vertex)
}

/// Durations `((1/2 - alpha4) tau, alpha2 tau, (1/2 - alpha2) tau, alpha4 tau)`,
/// first channel `(a, -a, -a, a)`.
pub fn corollary_schedule_n4(
    levels: [Vec<f64>; 4],
    alpha2: f64,
    alpha4: f64,
    tau: f64,
) -> Result<BangBangSchedule> {
    open_half("alpha2", alpha2)?;
    open_half("alpha4", alpha4)?;
    let a = levels[0][0];
    if a == 0.0 || !opposite(a, levels[1][0]) || !opposite(a, levels[2][0]) || !opposite(-a, levels[3][0]) {
        return Err(Error::Hypothesis("first channel must read (a, -a, -a, a) with a != 0".into()));
    }
    build_schedule(levels.to_vec(), &[alpha2, 0.5 - alpha2, alpha4], tau, LevelMode::Vertex)
}
