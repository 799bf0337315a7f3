//! Dense-time evaluation of NNF formulas over piecewise-linear trajectories.
//!
//! Each atom becomes a Boolean signal, stored as an [`IntervalSet`] over the
//! horizon `[t₀, T]`, and the temporal operators are evaluated with interval
//! algebra. Quantifiers are truncated at `T`: `□φ` requires `φ` on all of
//! `[t, T]` and `◇φ`/`U` need a witness no later than `T`.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use nalgebra::DVector;
use thiserror::Error;

use crate::rtl::{Formula, Proposition, PropositionTable, RtlError};

#[derive(Debug, Error)]
pub enum MonitorError {
    #[error("formula is not in negation normal form")]
    NonNnfInput,
    #[error("unknown atom {0:?}")]
    UnknownAtom(String),
    #[error("invalid trajectory: {0}")]
    InvalidTrajectory(String),
    #[error("time grids differ: {0}")]
    GridMismatch(String),
    #[error("atom {atom:?} projects to dimension {found}, region has dimension {expected}")]
    DimensionMismatch { atom: String, expected: usize, found: usize },
    #[error("trajectory csv: {0}")]
    Csv(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl From<RtlError> for MonitorError {
    fn from(e: RtlError) -> Self {
        match e {
            RtlError::UnknownAtom(a) => MonitorError::UnknownAtom(a),
            RtlError::NotNnf => MonitorError::NonNnfInput,
            other => MonitorError::InvalidTrajectory(other.to_string()),
        }
    }
}

/// Time-stamped states, linearly interpolated between samples.
#[derive(Debug, Clone, PartialEq)]
pub struct Trajectory {
    times: Vec<f64>,
    states: Vec<DVector<f64>>,
}

impl Trajectory {
    pub fn new(times: Vec<f64>, states: Vec<DVector<f64>>) -> Result<Self, MonitorError> {
        if times.len() < 2 {
            return Err(MonitorError::InvalidTrajectory("need at least two samples".into()));
        }
        if times.len() != states.len() {
            return Err(MonitorError::InvalidTrajectory(format!(
                "{} times but {} states",
                times.len(),
                states.len()
            )));
        }
        if let Some(w) = times.windows(2).find(|w| !(w[1] > w[0])) {
            return Err(MonitorError::InvalidTrajectory(format!(
                "times not strictly increasing at {}",
                w[1]
            )));
        }
        let dim = states[0].len();
        if dim == 0 || states.iter().any(|s| s.len() != dim) {
            return Err(MonitorError::InvalidTrajectory("non-uniform state dimension".into()));
        }
        Ok(Self { times, states })
    }

    pub fn times(&self) -> &[f64] {
        &self.times
    }

    pub fn states(&self) -> &[DVector<f64>] {
        &self.states
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.states[0].len()
    }

    pub fn start(&self) -> f64 {
        self.times[0]
    }

    pub fn end(&self) -> f64 {
        *self.times.last().unwrap()
    }

    pub fn last_state(&self) -> &DVector<f64> {
        self.states.last().unwrap()
    }

    /// Linear interpolation, clamped to the horizon.
    pub fn state_at(&self, t: f64) -> DVector<f64> {
        if t <= self.start() {
            return self.states[0].clone();
        }
        if t >= self.end() {
            return self.last_state().clone();
        }
        let i = self.times.partition_point(|&s| s <= t) - 1;
        let (t0, t1) = (self.times[i], self.times[i + 1]);
        let s = (t - t0) / (t1 - t0);
        &self.states[i] + (&self.states[i + 1] - &self.states[i]) * s
    }

    /// Writes `t,x1,...,xn` CSV.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let header: Vec<String> =
            std::iter::once("t".to_string()).chain((1..=self.dim()).map(|i| format!("x{i}"))).collect();
        writeln!(w, "{}", header.join(","))?;
        for (t, x) in self.times.iter().zip(&self.states) {
            write!(w, "{t}")?;
            for v in x.iter() {
                write!(w, ",{v}")?;
            }
            writeln!(w)?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self, MonitorError> {
        let mut lines = r.lines();
        let header = lines.next().ok_or_else(|| MonitorError::Csv("empty input".into()))??;
        let cols: Vec<&str> = header.split(',').map(str::trim).collect();
        if cols.first() != Some(&"t") || cols.len() < 2 {
            return Err(MonitorError::Csv(format!("bad header {header:?}")));
        }
        let dim = cols.len() - 1;
        let mut times = Vec::new();
        let mut states = Vec::new();
        for (lineno, line) in lines.enumerate() {
            let line = line?;
            if line.trim().is_empty() {
                continue;
            }
            let vals: Result<Vec<f64>, _> = line.split(',').map(|v| v.trim().parse()).collect();
            let vals = vals.map_err(|e| MonitorError::Csv(format!("line {}: {e}", lineno + 2)))?;
            if vals.len() != dim + 1 {
                return Err(MonitorError::Csv(format!("line {}: expected {} columns", lineno + 2, dim + 1)));
            }
            times.push(vals[0]);
            states.push(DVector::from_column_slice(&vals[1..]));
        }
        Self::new(times, states)
    }
}

/// Interval with per-side closedness.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Interval {
    pub start: f64,
    pub start_closed: bool,
    pub end: f64,
    pub end_closed: bool,
}

impl Interval {
    pub fn closed(start: f64, end: f64) -> Self {
        Self { start, start_closed: true, end, end_closed: true }
    }

    /// `[start, end)`.
    pub fn right_open(start: f64, end: f64) -> Self {
        Self { start, start_closed: true, end, end_closed: false }
    }

    pub fn is_empty(&self) -> bool {
        self.start > self.end || (self.start == self.end && !(self.start_closed && self.end_closed))
    }

    pub fn contains(&self, t: f64) -> bool {
        let after_start = t > self.start || (t == self.start && self.start_closed);
        let before_end = t < self.end || (t == self.end && self.end_closed);
        after_start && before_end
    }

    pub fn length(&self) -> f64 {
        self.end - self.start
    }

    fn intersect(&self, other: &Interval) -> Interval {
        let (start, start_closed) = if self.start > other.start {
            (self.start, self.start_closed)
        } else if other.start > self.start {
            (other.start, other.start_closed)
        } else {
            (self.start, self.start_closed && other.start_closed)
        };
        let (end, end_closed) = if self.end < other.end {
            (self.end, self.end_closed)
        } else if other.end < self.end {
            (other.end, other.end_closed)
        } else {
            (self.end, self.end_closed && other.end_closed)
        };
        Interval { start, start_closed, end, end_closed }
    }
}

/// Sorted, disjoint, non-adjacent, nonempty intervals inside a closed domain.
#[derive(Debug, Clone, PartialEq)]
pub struct IntervalSet {
    domain: (f64, f64),
    intervals: Vec<Interval>,
}

impl IntervalSet {
    pub fn empty(t0: f64, t_end: f64) -> Self {
        Self { domain: (t0, t_end), intervals: Vec::new() }
    }

    pub fn full(t0: f64, t_end: f64) -> Self {
        Self { domain: (t0, t_end), intervals: vec![Interval::closed(t0, t_end)] }
    }

    /// Clips to the domain and normalizes.
    pub fn from_intervals(t0: f64, t_end: f64, intervals: Vec<Interval>) -> Self {
        let dom = Interval::closed(t0, t_end);
        let clipped = intervals.into_iter().map(|i| i.intersect(&dom)).collect();
        Self { domain: (t0, t_end), intervals: normalize(clipped) }
    }

    pub fn domain(&self) -> (f64, f64) {
        self.domain
    }

    pub fn intervals(&self) -> &[Interval] {
        &self.intervals
    }

    pub fn is_empty(&self) -> bool {
        self.intervals.is_empty()
    }

    pub fn contains(&self, t: f64) -> bool {
        self.intervals.iter().any(|i| i.contains(t))
    }

    pub fn complement(&self) -> Self {
        let (t0, t_end) = self.domain;
        let mut out = Vec::with_capacity(self.intervals.len() + 1);
        let mut cursor = (t0, true);
        for iv in &self.intervals {
            out.push(Interval {
                start: cursor.0,
                start_closed: cursor.1,
                end: iv.start,
                end_closed: !iv.start_closed,
            });
            cursor = (iv.end, !iv.end_closed);
        }
        out.push(Interval { start: cursor.0, start_closed: cursor.1, end: t_end, end_closed: true });
        out.retain(|i| !i.is_empty());
        Self { domain: self.domain, intervals: out }
    }

    pub fn union(&self, other: &Self) -> Self {
        let mut all = self.intervals.clone();
        all.extend_from_slice(&other.intervals);
        Self { domain: self.domain, intervals: normalize(all) }
    }

    pub fn intersection(&self, other: &Self) -> Self {
        let mut out = Vec::new();
        let (mut i, mut j) = (0, 0);
        while i < self.intervals.len() && j < other.intervals.len() {
            let a = &self.intervals[i];
            let b = &other.intervals[j];
            let meet = a.intersect(b);
            if !meet.is_empty() {
                out.push(meet);
            }
            let a_first = a.end < b.end || (a.end == b.end && !a.end_closed);
            if a_first {
                i += 1;
            } else {
                j += 1;
            }
        }
        Self { domain: self.domain, intervals: normalize(out) }
    }

    /// `{t : ∃s ∈ [t, T], s ∈ self}`.
    pub fn eventually(&self) -> Self {
        match self.intervals.last() {
            None => self.clone(),
            Some(last) => Self {
                domain: self.domain,
                intervals: vec![Interval {
                    start: self.domain.0,
                    start_closed: true,
                    end: last.end,
                    end_closed: last.end_closed,
                }],
            },
        }
    }

    /// `{t : ∀s ∈ [t, T], s ∈ self}`.
    pub fn always(&self) -> Self {
        self.complement().eventually().complement()
    }

    /// `{t : ∃s ≥ t, s ∈ rhs ∧ [t, s) ⊆ lhs}`.
    pub fn until(lhs: &Self, rhs: &Self) -> Self {
        let mut result = rhs.clone();
        for seg in &lhs.intervals {
            // Witnesses may sit on the right endpoint of a maximal lhs
            // interval even when that endpoint is open.
            let reach = Interval { end_closed: true, ..*seg };
            let window = IntervalSet { domain: rhs.domain, intervals: vec![reach] };
            let witnesses = rhs.intersection(&window);
            let segment = IntervalSet { domain: rhs.domain, intervals: vec![*seg] };
            result = result.union(&segment.intersection(&witnesses.eventually()));
        }
        result
    }

    /// `¬(¬lhs U ¬rhs)`.
    pub fn release(lhs: &Self, rhs: &Self) -> Self {
        Self::until(&lhs.complement(), &rhs.complement()).complement()
    }
}

fn normalize(mut v: Vec<Interval>) -> Vec<Interval> {
    v.retain(|i| !i.is_empty());
    v.sort_by(|a, b| a.start.total_cmp(&b.start).then_with(|| b.start_closed.cmp(&a.start_closed)));
    let mut out: Vec<Interval> = Vec::with_capacity(v.len());
    for iv in v {
        if let Some(last) = out.last_mut() {
            let touches =
                iv.start < last.end || (iv.start == last.end && (last.end_closed || iv.start_closed));
            if touches {
                if iv.end > last.end {
                    last.end = iv.end;
                    last.end_closed = iv.end_closed;
                } else if iv.end == last.end {
                    last.end_closed |= iv.end_closed;
                }
                continue;
            }
        }
        out.push(iv);
    }
    out
}

/// Times at which the (interpolated) trajectory lies in the proposition's
/// region. Regions are convex, so each segment contributes one closed
/// sub-interval at most.
pub fn atom_signal(traj: &Trajectory, prop: &Proposition) -> Result<IntervalSet, MonitorError> {
    let projected: Vec<Vec<f64>> = traj.states().iter().map(|x| prop.project(x.as_slice())).collect();
    let found = projected[0].len();
    if found != prop.region.dim() {
        return Err(MonitorError::DimensionMismatch {
            atom: prop.label.clone(),
            expected: prop.region.dim(),
            found,
        });
    }
    let times = traj.times();
    let mut pieces = Vec::new();
    for k in 0..times.len() - 1 {
        if let Some((lo, hi)) = prop.region.segment_overlap(&projected[k], &projected[k + 1]) {
            let dt = times[k + 1] - times[k];
            let start = if lo == 0.0 { times[k] } else { times[k] + lo * dt };
            let end = if hi == 1.0 { times[k + 1] } else { times[k] + hi * dt };
            pieces.push(Interval::closed(start, end));
        }
    }
    let set = IntervalSet::from_intervals(traj.start(), traj.end(), pieces);
    warn_on_short_intervals(traj, &set, &prop.label);
    Ok(set)
}

fn warn_on_short_intervals(traj: &Trajectory, set: &IntervalSet, label: &str) {
    let min_step = traj.times().windows(2).map(|w| w[1] - w[0]).fold(f64::INFINITY, f64::min);
    let (t0, t_end) = set.domain();
    for iv in set.intervals() {
        let interior = iv.start > t0 && iv.end < t_end;
        if interior && iv.length() < 2.0 * min_step {
            log::warn!(
                "atom {label}: interval [{}, {}] shorter than two steps; crossings may be under-resolved",
                iv.start,
                iv.end
            );
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Evaluation {
    pub satisfied: bool,
    pub sat_set: IntervalSet,
}

/// Evaluates an NNF formula over a trajectory.
pub fn evaluate(
    f: &Formula,
    traj: &Trajectory,
    table: &PropositionTable,
) -> Result<Evaluation, MonitorError> {
    if !f.is_nnf() {
        return Err(MonitorError::NonNnfInput);
    }
    table.resolve(f)?;
    let mut signals = HashMap::new();
    for name in f.atoms() {
        let prop = table.get(name).expect("resolved above");
        signals.insert(name.to_string(), atom_signal(traj, prop)?);
    }
    evaluate_signals(f, &signals, traj.start(), traj.end())
}

/// Evaluates an NNF formula given precomputed atom signals on `[t0, t_end]`.
pub fn evaluate_signals(
    f: &Formula,
    signals: &HashMap<String, IntervalSet>,
    t0: f64,
    t_end: f64,
) -> Result<Evaluation, MonitorError> {
    if !f.is_nnf() {
        return Err(MonitorError::NonNnfInput);
    }
    let sat_set = sat(f, signals, t0, t_end)?;
    Ok(Evaluation { satisfied: sat_set.contains(t0), sat_set })
}

fn sat(
    f: &Formula,
    signals: &HashMap<String, IntervalSet>,
    t0: f64,
    t_end: f64,
) -> Result<IntervalSet, MonitorError> {
    let rec = |g: &Formula| sat(g, signals, t0, t_end);
    Ok(match f {
        Formula::True => IntervalSet::full(t0, t_end),
        Formula::False => IntervalSet::empty(t0, t_end),
        Formula::Atom(name) => {
            signals.get(name).cloned().ok_or_else(|| MonitorError::UnknownAtom(name.clone()))?
        }
        Formula::Not(inner) => match &**inner {
            Formula::Atom(_) => rec(inner)?.complement(),
            _ => return Err(MonitorError::NonNnfInput),
        },
        Formula::And(a, b) => rec(a)?.intersection(&rec(b)?),
        Formula::Or(a, b) => rec(a)?.union(&rec(b)?),
        Formula::Until(a, b) => IntervalSet::until(&rec(a)?, &rec(b)?),
        Formula::Release(a, b) => IntervalSet::release(&rec(a)?, &rec(b)?),
        Formula::Eventually(a) => rec(a)?.eventually(),
        Formula::Always(a) => rec(a)?.always(),
    })
}

/// Sup-norm distance between two trajectories on a shared grid.
pub fn tube_distance(a: &Trajectory, b: &Trajectory) -> Result<f64, MonitorError> {
    Ok(tube_profile(a, b)?.into_iter().fold(0.0, f64::max))
}

/// Pointwise `‖a(t) − b(t)‖₂` on the shared grid.
pub fn tube_profile(a: &Trajectory, b: &Trajectory) -> Result<Vec<f64>, MonitorError> {
    if a.len() != b.len() {
        return Err(MonitorError::GridMismatch(format!("{} vs {} samples", a.len(), b.len())));
    }
    if a.dim() != b.dim() {
        return Err(MonitorError::GridMismatch(format!("state dimension {} vs {}", a.dim(), b.dim())));
    }
    if let Some((ta, tb)) = a.times().iter().zip(b.times()).find(|(x, y)| (*x - *y).abs() > 1e-12) {
        return Err(MonitorError::GridMismatch(format!("time {ta} vs {tb}")));
    }
    Ok(a.states().iter().zip(b.states()).map(|(x, y)| (x - y).norm()).collect())
}
