//! Critical value, periodic solutions by normalized min-plus power iteration,
//! and the liminf construction along integer time shifts.

use std::io::{BufRead, Write};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{sup_dist, ValueField};
use crate::hamiltonian::HamiltonianSpec;
use crate::operator::{EvolutionTrace, Grids, Scheme};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum LambdaMethod {
    PerPeriodDrift,
    LongTimeAverage,
}

/// Estimate of the critical value of the equation a trace was run with.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LambdaEstimate {
    /// Per-period drift estimate.
    pub value: f64,
    pub method: LambdaMethod,
    pub n_periods_used: usize,
    /// Spread `max − min` of the per-period increments of `min u`.
    pub dispersion: f64,
    /// Long-time average over the same periods.
    pub long_time_average: f64,
}

impl LambdaEstimate {
    pub const AGREEMENT_FLOOR: f64 = 1e-3;

    /// Whether the two estimators agree within `max(1e-3, 2·dispersion)`.
    pub fn methods_agree(&self) -> bool {
        (self.value - self.long_time_average).abs()
            <= Self::AGREEMENT_FLOOR.max(2.0 * self.dispersion)
    }

    pub fn by(&self, method: LambdaMethod) -> f64 {
        match method {
            LambdaMethod::PerPeriodDrift => self.value,
            LambdaMethod::LongTimeAverage => self.long_time_average,
        }
    }
}

pub const MIN_TRACE_PERIODS: usize = 10;
pub const MIN_POST_BURN_IN: usize = 5;

pub(crate) fn median(values: &[f64]) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        0.5 * (sorted[n / 2 - 1] + sorted[n / 2])
    }
}

/// λ from the decrease of `min_x u` per period after discarding the first
/// `burn_in_fraction` of the trace.
pub fn estimate_lambda(trace: &EvolutionTrace, burn_in_fraction: f64) -> Result<LambdaEstimate> {
    if !(0.0..=0.9).contains(&burn_in_fraction) {
        return Err(Error::InvalidConfig(format!(
            "burn-in fraction {burn_in_fraction} outside [0, 0.9]"
        )));
    }
    let periods = trace.n_periods_run;
    if periods < MIN_TRACE_PERIODS {
        return Err(Error::InsufficientData {
            needed: MIN_TRACE_PERIODS,
            available: periods,
        });
    }
    let burn_in = (burn_in_fraction * periods as f64).ceil() as usize;
    let used = periods - burn_in;
    if used < MIN_POST_BURN_IN {
        return Err(Error::InsufficientData {
            needed: MIN_POST_BURN_IN,
            available: used,
        });
    }
    let increments = &trace.min_increments()[burn_in..];
    let lo = increments.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = increments.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let long = -(trace.snapshot(periods).min() - trace.snapshot(burn_in).min()) / used as f64;
    Ok(LambdaEstimate {
        value: -median(increments),
        method: LambdaMethod::PerPeriodDrift,
        n_periods_used: used,
        dispersion: hi - lo,
        long_time_average: long,
    })
}

/// One period of a time-periodic solution `φ`, sampled at every step.
///
/// `snapshots[k]` is `u(k·dt) + λ·k·dt` for the solution `u` generated from
/// `snapshots[0]`, whose minimum is 0.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodicSolution {
    pub spec: HamiltonianSpec,
    pub grids: Grids,
    /// Drift removed per period by the normalization.
    pub lambda: f64,
    pub snapshots: Vec<ValueField>,
    /// `sup_dist(period_map(φ₀) + λ, φ₀)`.
    pub residual: f64,
}

#[derive(Serialize, Deserialize)]
struct Header {
    spec: HamiltonianSpec,
    grids: Grids,
    lambda: f64,
    residual: f64,
}

impl PeriodicSolution {
    /// Field at phase `k ∈ 0..=m_t`.
    pub fn at_phase(&self, k: usize) -> &ValueField {
        &self.snapshots[k]
    }

    /// `φ(t, x)` for `t` at a step of the period grid (taken modulo `m_t`).
    pub fn eval_at_step(&self, step_index: u64, x: f64) -> f64 {
        let m_t = self.grids.time.m_t as u64;
        self.snapshots[(step_index % m_t) as usize].interp(x)
    }

    /// Re-evaluates the fixed-point defect from the stored initial phase.
    pub fn recheck_residual(&self) -> Result<f64> {
        raw_residual(&Scheme::new(self.spec.clone(), self.grids), &self.snapshots[0], self.lambda)
    }

    /// JSON header line followed by CSV rows `phase, v_0, …`.
    pub fn write<W: Write>(&self, out: &mut W) -> Result<()> {
        let header = Header {
            spec: self.spec.clone(),
            grids: self.grids,
            lambda: self.lambda,
            residual: self.residual,
        };
        serde_json::to_writer(&mut *out, &header)?;
        writeln!(out)?;
        crate::grid::write_snapshots_csv(out, &self.snapshots)
    }

    pub fn read<R: BufRead>(mut input: R) -> Result<PeriodicSolution> {
        let mut line = String::new();
        input.read_line(&mut line)?;
        let header: Header = serde_json::from_str(&line)?;
        let snapshots = crate::grid::read_snapshots_csv(input)?;
        let m_t = header.grids.time.m_t;
        if snapshots.len() != m_t + 1 {
            return Err(Error::Parse(format!(
                "expected {} snapshots, found {}",
                m_t + 1,
                snapshots.len()
            )));
        }
        if let Some(bad) = snapshots.iter().find(|s| s.len() != header.grids.space.n_x) {
            return Err(Error::SizeMismatch {
                left: bad.len(),
                right: header.grids.space.n_x,
            });
        }
        Ok(PeriodicSolution {
            spec: header.spec,
            grids: header.grids,
            lambda: header.lambda,
            snapshots,
            residual: header.residual,
        })
    }
}

fn raw_residual(scheme: &Scheme, phi0: &ValueField, lambda: f64) -> Result<f64> {
    let (next, _) = scheme.period_map(phi0)?;
    sup_dist(&next.shifted(lambda), phi0)
}

/// Fills the intra-period phases from a normalized initial field.
fn complete_period(scheme: &Scheme, phi0: ValueField, lambda: f64) -> Result<PeriodicSolution> {
    let m_t = scheme.grids().time.m_t;
    let dt = scheme.grids().dt();
    let mut snapshots = Vec::with_capacity(m_t + 1);
    let mut current = phi0;
    snapshots.push(current.clone());
    for k in 1..=m_t {
        let (next, _) = scheme.step(&current);
        snapshots.push(next.shifted(lambda * k as f64 * dt));
        current = next;
    }
    let residual = sup_dist(&snapshots[m_t], &snapshots[0])?;
    Ok(PeriodicSolution {
        spec: scheme.spec().clone(),
        grids: *scheme.grids(),
        lambda,
        snapshots,
        residual,
    })
}

fn normalized(u: &ValueField) -> ValueField {
    let mut v = u.shifted(-u.min());
    v.step_index = 0;
    v
}

/// Fixed point of the normalized period map `v ← T v − min T v`.
///
/// The working equation should already have its critical value folded into
/// `lambda_shift`; whatever drift remains is measured and reported as
/// `lambda`.
pub fn periodic_solution(
    spec: &HamiltonianSpec,
    grids: &Grids,
    u0: &ValueField,
    tol: f64,
    max_periods: usize,
) -> Result<PeriodicSolution> {
    if u0.len() != grids.space.n_x {
        return Err(Error::SizeMismatch {
            left: u0.len(),
            right: grids.space.n_x,
        });
    }
    let scheme = Scheme::new(spec.clone(), *grids);
    let mut v = normalized(u0);
    let mut residual = f64::INFINITY;
    for _ in 0..max_periods {
        let (next, _) = scheme.period_map(&v)?;
        let drift = next.min();
        let next = normalized(&next);
        residual = sup_dist(&next, &v)?;
        v = next;
        if residual <= tol {
            return complete_period(&scheme, v, -drift);
        }
    }
    Err(Error::NoConvergence {
        iterations: max_periods,
        residual,
    })
}

pub const MIN_LIMINF_PERIODS: usize = 20;

/// Pointwise minimum of the λ-normalized trace fields over the last half of
/// the trace, phase by phase.
///
/// Phase 0 uses every retained period snapshot in that range; the other
/// phases use the step fields retained in the foot-table window.
pub fn liminf_solution(trace: &EvolutionTrace, lambda: f64) -> Result<PeriodicSolution> {
    let periods = trace.n_periods_run;
    if periods < MIN_LIMINF_PERIODS {
        return Err(Error::InsufficientData {
            needed: MIN_LIMINF_PERIODS,
            available: periods,
        });
    }
    let m_t = trace.m_t();
    let first_period = periods - periods / 2;
    let window_first = periods - trace.window_periods();
    let lift = |field: &ValueField| field.shifted(lambda * trace.grids.time.time(field.step_index));

    let mut phases: Vec<ValueField> = Vec::with_capacity(m_t + 1);
    for phase in 0..=m_t {
        let from = if phase == 0 || phase == m_t {
            first_period
        } else {
            first_period.max(window_first)
        };
        let mut acc: Option<Vec<f64>> = None;
        for k in from..periods {
            let step = trace.initial_step() + (k * m_t + phase) as u64;
            let field = trace.field_at(step).ok_or(Error::InsufficientData {
                needed: k + 1,
                available: periods,
            })?;
            let values = lift(field).values();
            acc = Some(match acc {
                None => values,
                Some(a) => a.iter().zip(&values).map(|(x, y)| x.min(*y)).collect(),
            });
        }
        phases.push(ValueField::new(acc.expect("non-empty range"), phase as u64));
    }
    let gauge = -phases[0].min();
    let snapshots: Vec<ValueField> = phases
        .into_iter()
        .map(|p| ValueField::new(p.iter().map(|v| v + gauge).collect(), p.step_index))
        .collect();
    let scheme = Scheme::new(trace.spec.clone(), trace.grids);
    let residual = raw_residual(&scheme, &snapshots[0], lambda)?;
    Ok(PeriodicSolution {
        spec: trace.spec.clone(),
        grids: trace.grids,
        lambda,
        snapshots,
        residual,
    })
}

/// Smallest sup distance between two fields after the best additive
/// constant, `½·osc(f − g)`.
pub fn distance_up_to_constant(f: &ValueField, g: &ValueField) -> Result<f64> {
    if f.len() != g.len() {
        return Err(Error::SizeMismatch {
            left: f.len(),
            right: g.len(),
        });
    }
    let diff: Vec<f64> = f.iter().zip(g.iter()).map(|(a, b)| a - b).collect();
    let lo = diff.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = diff.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(0.5 * (hi - lo))
}
