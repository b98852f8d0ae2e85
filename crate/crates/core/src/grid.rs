//! Periodic space grid on the unit circle, time grid over one period, and
//! grid functions.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Reduces `x` to its representative in `[0, 1)`.
pub fn wrap(x: f64) -> f64 {
    let r = x - x.floor();
    // x slightly below an integer can round up to exactly 1.0
    if r >= 1.0 {
        0.0
    } else {
        r
    }
}

/// Distance on the circle `ℝ/ℤ`, in `[0, ½]`.
pub fn circle_dist(x: f64, y: f64) -> f64 {
    let d = wrap(x - y);
    d.min(1.0 - d)
}

/// `n_x` equispaced nodes `i/n_x` on the circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct CircleGrid {
    pub n_x: usize,
}

impl CircleGrid {
    pub const MIN_NODES: usize = 8;

    pub fn new(n_x: usize) -> Result<Self> {
        if n_x < Self::MIN_NODES {
            return Err(Error::InvalidGrid(format!(
                "n_x = {n_x} is below the minimum of {}",
                Self::MIN_NODES
            )));
        }
        Ok(Self { n_x })
    }

    pub fn dx(&self) -> f64 {
        1.0 / self.n_x as f64
    }

    pub fn node(&self, i: usize) -> f64 {
        i as f64 / self.n_x as f64
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..self.n_x).map(move |i| self.node(i))
    }

    /// Index of the node closest to `x` on the circle.
    pub fn nearest_node(&self, x: f64) -> usize {
        let s = (wrap(x) * self.n_x as f64).round() as usize;
        s % self.n_x
    }

    /// Field of node values of `f`.
    pub fn sample<F: Fn(f64) -> f64>(&self, step_index: u64, f: F) -> ValueField {
        ValueField::new(self.nodes().map(f).collect(), step_index)
    }
}

/// `m_t` steps per unit period. Times are tracked as integer step counts.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TimeGrid {
    pub m_t: usize,
}

impl TimeGrid {
    pub const MIN_STEPS: usize = 4;

    pub fn new(m_t: usize) -> Result<Self> {
        if m_t < Self::MIN_STEPS {
            return Err(Error::InvalidGrid(format!(
                "m_t = {m_t} is below the minimum of {}",
                Self::MIN_STEPS
            )));
        }
        Ok(Self { m_t })
    }

    pub fn dt(&self) -> f64 {
        1.0 / self.m_t as f64
    }

    /// Global time of a step index.
    pub fn time(&self, step_index: u64) -> f64 {
        step_index as f64 / self.m_t as f64
    }

    /// Time within the period, in `[0, 1)`. Exactly periodic in the step index.
    pub fn phase_time(&self, step_index: u64) -> f64 {
        (step_index % self.m_t as u64) as f64 / self.m_t as f64
    }

    /// Midpoint time of the step starting at `step_index`, reduced to the period.
    pub fn midpoint(&self, step_index: u64) -> f64 {
        ((step_index % self.m_t as u64) as f64 + 0.5) / self.m_t as f64
    }
}

/// Snapshot `u(t, ·)` of node values at `t = step_index·dt`.
///
/// Node values are stored as `offset + relative[i]`. Adding a constant only
/// moves the offset, and the operator acts on the relative profile alone, so
/// constant shifts commute with evolution without rounding.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ValueField {
    values: Vec<f64>,
    #[serde(default)]
    offset: f64,
    pub step_index: u64,
}

impl ValueField {
    pub fn new(values: Vec<f64>, step_index: u64) -> Self {
        Self::with_offset(values, 0.0, step_index)
    }

    pub fn with_offset(values: Vec<f64>, offset: f64, step_index: u64) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()) && offset.is_finite());
        Self {
            values,
            offset,
            step_index,
        }
    }

    pub fn constant(n_x: usize, value: f64, step_index: u64) -> Self {
        Self::new(vec![value; n_x], step_index)
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn offset(&self) -> f64 {
        self.offset
    }

    /// Node values minus the offset.
    pub fn relative(&self) -> &[f64] {
        &self.values
    }

    /// Value at node `i`.
    pub fn value(&self, i: usize) -> f64 {
        self.offset + self.values[i]
    }

    pub fn iter(&self) -> impl Iterator<Item = f64> + '_ {
        self.values.iter().map(move |v| self.offset + v)
    }

    /// Node values.
    pub fn values(&self) -> Vec<f64> {
        self.iter().collect()
    }

    pub fn min(&self) -> f64 {
        self.offset + self.values.iter().copied().fold(f64::INFINITY, f64::min)
    }

    pub fn max(&self) -> f64 {
        self.offset + self.values.iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Adds `c` to every node.
    pub fn shifted(&self, c: f64) -> ValueField {
        ValueField::with_offset(self.values.clone(), self.offset + c, self.step_index)
    }

    /// Same function with the offset folded into the node values.
    pub fn materialized(&self) -> ValueField {
        ValueField::new(self.values(), self.step_index)
    }

    /// Periodic piecewise-linear interpolation at a circle position.
    pub fn interp(&self, x: f64) -> f64 {
        self.interp_index(wrap(x) * self.values.len() as f64)
    }

    /// Interpolation at a fractional node index (any real, taken modulo `n_x`).
    ///
    /// Uses the convex form `(1−w)·u_k + w·u_{k+1}`, whose rounded evaluation
    /// is monotone in the node values.
    pub fn interp_index(&self, s: f64) -> f64 {
        let n = self.values.len();
        let (k, w) = split_index(s, n);
        let k1 = if k + 1 == n { 0 } else { k + 1 };
        self.offset + ((1.0 - w) * self.values[k] + w * self.values[k1])
    }

    /// Largest `|u_{i+1} − u_i| / dx` over the periodic grid.
    pub fn lipschitz(&self) -> f64 {
        let n = self.values.len();
        (0..n)
            .map(|i| (self.values[(i + 1) % n] - self.values[i]).abs())
            .fold(0.0, f64::max)
            * n as f64
    }

    /// Writes one CSV row: `step_index, v_0, …, v_{n_x−1}`.
    pub fn write_csv_row<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "{}", self.step_index)?;
        for v in self.iter() {
            write!(out, ",{v:?}")?;
        }
        writeln!(out)?;
        Ok(())
    }

    pub fn parse_csv_row(line: &str) -> Result<ValueField> {
        let mut parts = line.trim().split(',');
        let step_index = parts
            .next()
            .ok_or_else(|| Error::Parse("empty row".into()))?
            .trim()
            .parse::<u64>()
            .map_err(|e| Error::Parse(format!("step index: {e}")))?;
        let values = parts
            .map(|p| {
                p.trim()
                    .parse::<f64>()
                    .map_err(|e| Error::Parse(format!("value {p:?}: {e}")))
            })
            .collect::<Result<Vec<_>>>()?;
        if values.is_empty() {
            return Err(Error::Parse("row has no values".into()));
        }
        Ok(ValueField::new(values, step_index))
    }
}

/// Splits a fractional index into a node and a weight in `[0, 1)`.
pub(crate) fn split_index(s: f64, n: usize) -> (usize, f64) {
    let nf = n as f64;
    let mut r = s - (s / nf).floor() * nf;
    if r >= nf || r < 0.0 {
        r = 0.0;
    }
    let k = r.floor();
    let mut ki = k as usize;
    let w = r - k;
    if ki >= n {
        ki = 0;
    }
    (ki, w)
}

/// Largest nodewise difference `max_i |f_i − g_i|`.
pub fn sup_dist(f: &ValueField, g: &ValueField) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::SizeMismatch {
            left: f.len(),
            right: g.len(),
        });
    }
    let shift = f.offset - g.offset;
    Ok(f.values
        .iter()
        .zip(&g.values)
        .map(|(a, b)| (shift + (a - b)).abs())
        .fold(0.0, f64::max))
}

/// Writes a block of snapshots as CSV rows.
pub fn write_snapshots_csv<'a, W, I>(out: &mut W, fields: I) -> Result<()>
where
    W: Write,
    I: IntoIterator<Item = &'a ValueField>,
{
    for f in fields {
        f.write_csv_row(out)?;
    }
    Ok(())
}

/// Reads CSV rows written by [`write_snapshots_csv`]; blank lines are skipped.
pub fn read_snapshots_csv<R: BufRead>(input: R) -> Result<Vec<ValueField>> {
    let mut fields = Vec::new();
    for line in input.lines() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        fields.push(ValueField::parse_csv_row(&line)?);
    }
    Ok(fields)
}
