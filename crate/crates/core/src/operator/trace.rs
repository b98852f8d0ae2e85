use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use super::{FootTable, Grids};
use crate::error::{Error, Result};
use crate::grid::ValueField;
use crate::hamiltonian::HamiltonianSpec;

/// Output of one step: the minimizing velocities and the resulting field.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub foot: FootTable,
    pub field: ValueField,
}

/// Record of an evolution: every period-boundary snapshot, plus the step
/// records (foot tables and intermediate fields) of the last `window`
/// periods for backtracking.
#[derive(Clone, Debug)]
pub struct EvolutionTrace {
    pub spec: HamiltonianSpec,
    pub grids: Grids,
    pub snapshots: Vec<ValueField>,
    pub n_periods_run: usize,
    window: usize,
    records: VecDeque<StepRecord>,
}

impl EvolutionTrace {
    pub(super) fn start(spec: HamiltonianSpec, grids: Grids, u0: ValueField, window: usize) -> Result<Self> {
        if window == 0 {
            return Err(Error::InvalidConfig("foot-table window must be at least 1".into()));
        }
        if u0.step_index % grids.time.m_t as u64 != 0 {
            return Err(Error::InvalidConfig(format!(
                "initial field must sit at a period boundary, got step {}",
                u0.step_index
            )));
        }
        Ok(Self {
            spec,
            grids,
            snapshots: vec![u0],
            n_periods_run: 0,
            window,
            records: VecDeque::with_capacity(window * grids.time.m_t),
        })
    }

    pub(super) fn push_step(&mut self, record: StepRecord) {
        if self.records.len() == self.window * self.grids.time.m_t {
            self.records.pop_front();
        }
        self.records.push_back(record);
    }

    pub(super) fn close_period(&mut self, field: ValueField) {
        self.snapshots.push(field);
        self.n_periods_run += 1;
    }

    pub fn m_t(&self) -> usize {
        self.grids.time.m_t
    }

    pub fn initial_step(&self) -> u64 {
        self.snapshots[0].step_index
    }

    pub fn final_step(&self) -> u64 {
        self.final_field().step_index
    }

    pub fn final_field(&self) -> &ValueField {
        self.snapshots.last().expect("trace holds its initial field")
    }

    /// Configured window, in periods.
    pub fn window(&self) -> usize {
        self.window
    }

    /// Number of whole periods currently retained in the window.
    pub fn window_periods(&self) -> usize {
        self.records.len() / self.m_t()
    }

    /// Earliest step index whose field and all later foot tables are held.
    pub fn window_start_step(&self) -> u64 {
        self.final_step() - self.records.len() as u64
    }

    /// Snapshot at the start of period `k` (counted from the initial field).
    pub fn snapshot(&self, k: usize) -> &ValueField {
        &self.snapshots[k]
    }

    /// Field at a global step index, if retained.
    pub fn field_at(&self, step_index: u64) -> Option<&ValueField> {
        let m_t = self.m_t() as u64;
        let first = self.initial_step();
        if step_index < first || step_index > self.final_step() {
            return None;
        }
        if (step_index - first) % m_t == 0 {
            return self.snapshots.get(((step_index - first) / m_t) as usize);
        }
        self.record_ending_at(step_index).map(|r| &r.field)
    }

    /// Foot table of the step ending at `step_index`, if retained.
    pub fn foot_at(&self, step_index: u64) -> Option<&FootTable> {
        self.record_ending_at(step_index).map(|r| &r.foot)
    }

    fn record_ending_at(&self, step_index: u64) -> Option<&StepRecord> {
        let start = self.window_start_step();
        if step_index <= start || step_index > self.final_step() {
            return None;
        }
        self.records.get((step_index - start - 1) as usize)
    }

    pub fn foot_tables(&self) -> impl Iterator<Item = &FootTable> {
        self.records.iter().map(|r| &r.foot)
    }

    /// Per-period changes of `min_x u` across the trace.
    pub fn min_increments(&self) -> Vec<f64> {
        self.snapshots
            .windows(2)
            .map(|w| w[1].min() - w[0].min())
            .collect()
    }

    /// Writes period snapshots as CSV rows.
    pub fn write_snapshots_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        crate::grid::write_snapshots_csv(out, &self.snapshots)
    }

    /// Binary dump of the retained foot tables.
    ///
    /// Layout, little endian: `n_x`, `m_t`, `W` as `u64`, then
    /// `W·m_t·n_x` velocities as `f64`, row-major by step then node.
    pub fn write_foot_tables<W: Write>(&self, out: &mut W) -> Result<()> {
        let periods = self.window_periods();
        let skip = self.records.len() - periods * self.m_t();
        out.write_all(&(self.grids.space.n_x as u64).to_le_bytes())?;
        out.write_all(&(self.m_t() as u64).to_le_bytes())?;
        out.write_all(&(periods as u64).to_le_bytes())?;
        for record in self.records.iter().skip(skip) {
            for v in &record.foot.argmin_velocity {
                out.write_all(&v.to_le_bytes())?;
            }
        }
        Ok(())
    }
}

/// Contents of a foot-table dump.
#[derive(Clone, Debug, PartialEq)]
pub struct FootDump {
    pub n_x: usize,
    pub m_t: usize,
    pub window: usize,
    /// One row of `n_x` velocities per step.
    pub rows: Vec<Vec<f64>>,
}

pub fn read_foot_tables<R: Read>(mut input: R) -> Result<FootDump> {
    let mut word = [0u8; 8];
    let mut header = [0usize; 3];
    for h in &mut header {
        input.read_exact(&mut word)?;
        *h = u64::from_le_bytes(word) as usize;
    }
    let [n_x, m_t, window] = header;
    let mut rows = Vec::with_capacity(window * m_t);
    for _ in 0..window * m_t {
        let mut row = Vec::with_capacity(n_x);
        for _ in 0..n_x {
            input.read_exact(&mut word)?;
            row.push(f64::from_le_bytes(word));
        }
        rows.push(row);
    }
    let mut rest = Vec::new();
    input.read_to_end(&mut rest)?;
    if !rest.is_empty() {
        return Err(Error::Parse(format!("{} trailing bytes in foot-table dump", rest.len())));
    }
    Ok(FootDump {
        n_x,
        m_t,
        window,
        rows,
    })
}
