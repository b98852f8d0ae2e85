//! Discrete Lax-Oleinik semigroup.
//!
//! One step of the scheme is a semi-Lagrangian minimization over a finite
//! velocity set,
//!
//! ```text
//! u'(x_i) = min_j [ u(x_i − v_j·dt) + dt·L(t_mid, x_i − v_j·dt, v_j) ],
//! ```
//!
//! with `u` linearly interpolated at the foot point. The map is monotone,
//! commutes with constants and is therefore nonexpansive in the sup norm,
//! as the continuous operator is.

mod invariants;
mod trace;

pub use invariants::{check_invariants, InvariantReport};
pub use trace::{read_foot_tables, EvolutionTrace, FootDump, StepRecord};

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{CircleGrid, TimeGrid, ValueField};
use crate::hamiltonian::HamiltonianSpec;

/// Symmetric velocity set `v_j = −v_max + j·2v_max/(n_v − 1)`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct VelocityGrid {
    pub v_max: f64,
    pub n_v: usize,
}

impl VelocityGrid {
    pub fn new(v_max: f64, n_v: usize) -> Result<Self> {
        if !(v_max.is_finite() && v_max > 0.0) {
            return Err(Error::InvalidGrid(format!("v_max = {v_max} must be positive")));
        }
        if n_v < 9 || n_v % 2 == 0 {
            return Err(Error::InvalidGrid(format!(
                "n_v = {n_v} must be odd and at least 9"
            )));
        }
        Ok(Self { v_max, n_v })
    }

    pub fn spacing(&self) -> f64 {
        2.0 * self.v_max / (self.n_v - 1) as f64
    }

    pub fn velocity(&self, j: usize) -> f64 {
        let mid = (self.n_v - 1) / 2;
        // symmetric construction keeps v = 0 exact and v_{mid±k} = ±k·dv
        if j >= mid {
            (j - mid) as f64 * self.spacing()
        } else {
            -((mid - j) as f64 * self.spacing())
        }
    }

    pub fn velocities(&self) -> Vec<f64> {
        (0..self.n_v).map(|j| self.velocity(j)).collect()
    }

    /// Velocity indices ordered by increasing `|v|`, negative first on ties.
    /// Scanning in this order with a strict comparison implements the
    /// tie-breaking rule of the scheme.
    pub fn search_order(&self) -> Vec<usize> {
        let mid = (self.n_v - 1) / 2;
        let mut order = vec![mid];
        for k in 1..=mid {
            order.push(mid - k);
            order.push(mid + k);
        }
        order
    }

    /// Index of the grid velocity closest to `v`.
    pub fn nearest(&self, v: f64) -> usize {
        let j = ((v + self.v_max) / self.spacing()).round();
        j.clamp(0.0, (self.n_v - 1) as f64) as usize
    }
}

/// Space, time and velocity discretization.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Grids {
    pub space: CircleGrid,
    pub time: TimeGrid,
    pub velocity: VelocityGrid,
}

impl Grids {
    /// Validated grids. The displacement of one step must stay below half
    /// a period so that lifted curves can be rebuilt from raw increments.
    pub fn new(n_x: usize, m_t: usize, v_max: f64, n_v: usize) -> Result<Self> {
        let grids = Self {
            space: CircleGrid::new(n_x)?,
            time: TimeGrid::new(m_t)?,
            velocity: VelocityGrid::new(v_max, n_v)?,
        };
        if v_max * grids.time.dt() >= 0.5 {
            return Err(Error::InvalidGrid(format!(
                "v_max·dt = {} must be below 1/2",
                v_max * grids.time.dt()
            )));
        }
        Ok(grids)
    }

    /// Grids with `v_max` taken from [`HamiltonianSpec::speed_bound`]
    /// unless overridden.
    pub fn for_spec(
        spec: &HamiltonianSpec,
        n_x: usize,
        m_t: usize,
        n_v: usize,
        v_max: Option<f64>,
    ) -> Result<Self> {
        Self::new(n_x, m_t, v_max.unwrap_or_else(|| spec.speed_bound()), n_v)
    }

    pub fn dx(&self) -> f64 {
        self.space.dx()
    }

    pub fn dt(&self) -> f64 {
        self.time.dt()
    }

    pub fn dv(&self) -> f64 {
        self.velocity.spacing()
    }
}

/// Minimizing velocity at every node for the step ending at `step_index`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FootTable {
    pub step_index: u64,
    pub argmin_velocity: Vec<f64>,
}

/// The discrete operator for a fixed Hamiltonian and discretization.
#[derive(Clone, Debug)]
pub struct Scheme {
    spec: HamiltonianSpec,
    grids: Grids,
    velocities: Vec<f64>,
    order: Vec<usize>,
    /// `v_j·dt·n_x`: foot displacement in index units.
    index_shift: Vec<f64>,
    /// `dt·(kinetic(v_j) + lambda_shift)`.
    kinetic_cost: Vec<f64>,
    cos_shift: Vec<f64>,
    sin_shift: Vec<f64>,
    node_cos: Vec<f64>,
    node_sin: Vec<f64>,
}

impl Scheme {
    pub fn new(spec: HamiltonianSpec, grids: Grids) -> Self {
        let dt = grids.dt();
        let n = grids.space.n_x;
        let velocities = grids.velocity.velocities();
        let order = grids.velocity.search_order();
        let slice = spec.lagrangian_slice(0.0);
        let index_shift = velocities.iter().map(|v| v * dt * n as f64).collect();
        let kinetic_cost = velocities
            .iter()
            .map(|&v| dt * (slice.kinetic.eval(v) + slice.shift))
            .collect();
        let cos_shift = velocities.iter().map(|v| (TAU * v * dt).cos()).collect();
        let sin_shift = velocities.iter().map(|v| (TAU * v * dt).sin()).collect();
        let node_cos = grids.space.nodes().map(|x| (TAU * x).cos()).collect();
        let node_sin = grids.space.nodes().map(|x| (TAU * x).sin()).collect();
        Self {
            spec,
            grids,
            velocities,
            order,
            index_shift,
            kinetic_cost,
            cos_shift,
            sin_shift,
            node_cos,
            node_sin,
        }
    }

    pub fn spec(&self) -> &HamiltonianSpec {
        &self.spec
    }

    pub fn grids(&self) -> &Grids {
        &self.grids
    }

    /// `L` at the rectangle-rule time of the step starting at `step_index`.
    pub fn lagrangian(&self, step_index: u64, x: f64, v: f64) -> f64 {
        self.spec
            .lagrangian_slice(self.grids.time.midpoint(step_index))
            .eval(x, v)
    }

    /// Momentum `L_v` conjugate to `v` at the step starting at `step_index`.
    pub fn momentum(&self, step_index: u64, v: f64) -> f64 {
        self.spec
            .lagrangian_slice(self.grids.time.midpoint(step_index))
            .momentum(v)
    }

    /// One step from `u.step_index` to `u.step_index + 1`.
    pub fn step(&self, u: &ValueField) -> (ValueField, FootTable) {
        let n = self.grids.space.n_x;
        assert_eq!(u.len(), n, "field does not match the grid");
        let nf = n as f64;
        let dt = self.grids.dt();
        let slice = self.spec.lagrangian_slice(self.grids.time.midpoint(u.step_index));
        // cos(2π·foot + φ) = cos(θ_i − β_j) with θ_i = 2πx_i + φ, β_j = 2πv_j·dt
        let weight = dt * slice.amplitude;
        let (phase_sin, phase_cos) = slice.phase.sin_cos();
        let vals = u.relative();

        let mut out = Vec::with_capacity(n);
        let mut feet = Vec::with_capacity(n);
        for i in 0..n {
            let (ci, si) = if weight == 0.0 {
                (0.0, 0.0)
            } else {
                let c = self.node_cos[i] * phase_cos - self.node_sin[i] * phase_sin;
                let s = self.node_sin[i] * phase_cos + self.node_cos[i] * phase_sin;
                (weight * c, weight * s)
            };
            let base = i as f64;
            let mut best = f64::INFINITY;
            let mut best_j = self.order[0];
            for &j in &self.order {
                let mut s = base - self.index_shift[j];
                if s < 0.0 {
                    s += nf;
                } else if s >= nf {
                    s -= nf;
                }
                let k = s.floor();
                let w = s - k;
                let mut k = k as usize;
                if k >= n {
                    k = 0;
                }
                let k1 = if k + 1 == n { 0 } else { k + 1 };
                let interp = (1.0 - w) * vals[k] + w * vals[k1];
                let cost = self.kinetic_cost[j] + (ci * self.cos_shift[j] + si * self.sin_shift[j]);
                let candidate = interp + cost;
                if candidate < best {
                    best = candidate;
                    best_j = j;
                }
            }
            out.push(best);
            feet.push(self.velocities[best_j]);
        }
        let next = u.step_index + 1;
        (
            ValueField::with_offset(out, u.offset(), next),
            FootTable {
                step_index: next,
                argmin_velocity: feet,
            },
        )
    }

    /// One full period, `m_t` steps. The field must sit at a period boundary.
    pub fn period_map(&self, u: &ValueField) -> Result<(ValueField, Vec<FootTable>)> {
        let m_t = self.grids.time.m_t as u64;
        if u.step_index % m_t != 0 {
            return Err(Error::InvalidConfig(format!(
                "period map needs a period boundary, got step {}",
                u.step_index
            )));
        }
        let mut current = u.clone();
        let mut tables = Vec::with_capacity(m_t as usize);
        for _ in 0..m_t {
            let (next, feet) = self.step(&current);
            current = next;
            tables.push(feet);
        }
        Ok((current, tables))
    }

    /// Runs `n_periods` periods from `u0`, keeping every period boundary and
    /// the step records of the last `window` periods.
    pub fn evolve(&self, u0: &ValueField, n_periods: usize, window: usize) -> Result<EvolutionTrace> {
        if n_periods == 0 {
            return Err(Error::InvalidConfig("n_periods must be at least 1".into()));
        }
        if u0.len() != self.grids.space.n_x {
            return Err(Error::SizeMismatch {
                left: u0.len(),
                right: self.grids.space.n_x,
            });
        }
        let mut trace = EvolutionTrace::start(self.spec.clone(), self.grids, u0.clone(), window)?;
        let mut current = u0.clone();
        for _ in 0..n_periods {
            for _ in 0..self.grids.time.m_t {
                let (next, feet) = self.step(&current);
                trace.push_step(StepRecord {
                    foot: feet,
                    field: next.clone(),
                });
                current = next;
            }
            trace.close_period(current.clone());
        }
        Ok(trace)
    }

    /// Continues an existing trace by `n_periods` periods.
    pub fn extend(&self, trace: &mut EvolutionTrace, n_periods: usize) -> Result<()> {
        if trace.spec != self.spec || trace.grids != self.grids {
            return Err(Error::GridMismatch);
        }
        let mut current = trace.final_field().clone();
        for _ in 0..n_periods {
            for _ in 0..self.grids.time.m_t {
                let (next, feet) = self.step(&current);
                trace.push_step(StepRecord {
                    foot: feet,
                    field: next.clone(),
                });
                current = next;
            }
            trace.close_period(current.clone());
        }
        Ok(())
    }
}
