//! Minimizing curves rebuilt from foot tables, and the diagnostics built on
//! them: rotation number, calibration defect, the gradient identity, the
//! monotone difference of two solutions, and Aubry-set samples.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{circle_dist, split_index, wrap};
use crate::operator::{EvolutionTrace, FootTable, Scheme};
use crate::spectrum::{median, PeriodicSolution};

/// Backtracked discrete minimizer, lifted to the real line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Characteristic {
    pub start_step: u64,
    pub end_step: u64,
    /// `γ̄(t_k)` for every step from `start_step` to `end_step`.
    pub lifted_positions: Vec<f64>,
    /// Velocity of the step from `t_k` to `t_{k+1}`.
    pub velocities: Vec<f64>,
    /// `L_v` at that velocity.
    pub momenta: Vec<f64>,
    /// `Σ dt·L` with the operator's rectangle rule.
    pub action: f64,
    pub span_periods: usize,
}

impl Characteristic {
    pub fn steps(&self) -> usize {
        self.velocities.len()
    }

    pub fn start(&self) -> f64 {
        self.lifted_positions[0]
    }

    pub fn end(&self) -> f64 {
        *self.lifted_positions.last().expect("curve has an end point")
    }

    /// Net displacement per period.
    pub fn mean_speed(&self) -> f64 {
        (self.end() - self.start()) / self.span_periods as f64
    }

    /// CSV with columns `step_index, lifted_position, velocity, momentum`.
    /// Velocity and momentum on row `k` belong to the step leaving `t_k`, so
    /// the last row leaves them empty.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        writeln!(out, "step_index,lifted_position,velocity,momentum")?;
        for (k, x) in self.lifted_positions.iter().enumerate() {
            let step = self.start_step + k as u64;
            match (self.velocities.get(k), self.momenta.get(k)) {
                (Some(v), Some(p)) => writeln!(out, "{step},{x:?},{v:?},{p:?}")?,
                _ => writeln!(out, "{step},{x:?},,")?,
            }
        }
        Ok(())
    }
}

/// Velocity of a foot table at a circle position, blending the two
/// neighbouring nodes linearly.
fn blended_velocity(foot: &FootTable, x: f64) -> f64 {
    let n = foot.argmin_velocity.len();
    let (k, w) = split_index(wrap(x) * n as f64, n);
    let a = foot.argmin_velocity[k];
    if w == 0.0 {
        return a;
    }
    let b = foot.argmin_velocity[(k + 1) % n];
    (1.0 - w) * a + w * b
}

fn check_window(trace: &EvolutionTrace, span_periods: usize) -> Result<()> {
    if span_periods == 0 || span_periods > trace.window_periods() {
        return Err(Error::WindowExceeded {
            requested: span_periods,
            available: trace.window_periods(),
        });
    }
    Ok(())
}

/// Follows the recorded minimizing velocities backwards from `end_x` at the
/// final step for `span_periods` periods.
///
/// The last step uses the velocity of the node nearest to `end_x`; earlier
/// steps blend the two nodes around the current position.
pub fn backtrack(trace: &EvolutionTrace, end_x: f64, span_periods: usize) -> Result<Characteristic> {
    check_window(trace, span_periods)?;
    let scheme = Scheme::new(trace.spec.clone(), trace.grids);
    let dt = trace.grids.dt();
    let end_step = trace.final_step();
    let n_steps = span_periods * trace.m_t();
    let start_step = end_step - n_steps as u64;

    let mut positions = vec![0.0; n_steps + 1];
    let mut velocities = vec![0.0; n_steps];
    positions[n_steps] = end_x;
    for k in (0..n_steps).rev() {
        let foot = trace
            .foot_at(start_step + k as u64 + 1)
            .expect("window checked above");
        let here = positions[k + 1];
        let v = if k + 1 == n_steps {
            foot.argmin_velocity[trace.grids.space.nearest_node(here)]
        } else {
            blended_velocity(foot, here)
        };
        velocities[k] = v;
        positions[k] = here - v * dt;
    }

    let mut action = 0.0;
    let mut momenta = Vec::with_capacity(n_steps);
    for (k, &v) in velocities.iter().enumerate() {
        let step = start_step + k as u64;
        action += dt * scheme.lagrangian(step, positions[k], v);
        momenta.push(scheme.momentum(step, v));
    }
    Ok(Characteristic {
        start_step,
        end_step,
        lifted_positions: positions,
        velocities,
        momenta,
        action,
        span_periods,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RotationEstimate {
    pub rho: f64,
    /// `max − min` over probes.
    pub spread: f64,
    pub probes: Vec<f64>,
}

pub const MIN_ROTATION_SPAN: usize = 8;

/// Evenly spaced end points `i/n_probes` for backtracking probes.
pub fn probe_points(n_probes: usize) -> impl Iterator<Item = f64> {
    (0..n_probes).map(move |i| i as f64 / n_probes as f64)
}

/// Median displacement per period of `n_probes` backtracked curves.
pub fn rotation_number(trace: &EvolutionTrace, n_probes: usize, span_periods: usize) -> Result<RotationEstimate> {
    if span_periods < MIN_ROTATION_SPAN {
        return Err(Error::InvalidConfig(format!(
            "rotation span {span_periods} is below {MIN_ROTATION_SPAN} periods"
        )));
    }
    if n_probes == 0 {
        return Err(Error::InvalidConfig("need at least one probe".into()));
    }
    check_window(trace, span_periods)?;
    let probes = probe_points(n_probes)
        .map(|x| backtrack(trace, x, span_periods).map(|c| c.mean_speed()))
        .collect::<Result<Vec<_>>>()?;
    let lo = probes.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = probes.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    Ok(RotationEstimate {
        rho: median(&probes),
        spread: hi - lo,
        probes,
    })
}

/// Bound on the probe spread: two velocity spacings plus `4/span`.
pub fn rotation_spread_bound(dv: f64, span_periods: usize) -> f64 {
    2.0 * dv + 4.0 / span_periods as f64
}

fn phi_at(solution: &PeriodicSolution, step: u64, x: f64) -> f64 {
    solution.eval_at_step(step, x)
}

/// Largest mismatch, over tails `[t_k, end]` of the curve, between the
/// increment of `φ` and the action of the solution's equation plus the
/// removed drift.
pub fn calibration_defect(curve: &Characteristic, solution: &PeriodicSolution) -> f64 {
    let scheme = Scheme::new(solution.spec.clone(), solution.grids);
    let dt = solution.grids.dt();
    let n = curve.steps();
    let phi_end = phi_at(solution, curve.end_step, curve.end());
    let mut tail_action = 0.0;
    let mut worst: f64 = 0.0;
    for k in (0..n).rev() {
        let step = curve.start_step + k as u64;
        tail_action += dt * scheme.lagrangian(step, curve.lifted_positions[k], curve.velocities[k]);
        let elapsed = (n - k) as f64 * dt;
        let phi_k = phi_at(solution, step, curve.lifted_positions[k]);
        worst = worst.max((phi_end - phi_k - tail_action - solution.lambda * elapsed).abs());
    }
    worst
}

/// Largest `|φ_x − p|` over the curve, with `φ_x` a centred difference of
/// half-width `dx` and `p` the momentum of the step leaving each point.
pub fn gradient_identity_check(curve: &Characteristic, solution: &PeriodicSolution) -> f64 {
    let dx = solution.grids.dx();
    let mut worst: f64 = 0.0;
    for (k, &p) in curve.momenta.iter().enumerate() {
        let step = curve.start_step + k as u64;
        let x = curve.lifted_positions[k];
        let slope = (phi_at(solution, step, x + dx) - phi_at(solution, step, x - dx)) / (2.0 * dx);
        worst = worst.max((slope - p).abs());
    }
    worst
}

/// Along a curve backtracked in `second`, the difference
/// `d_k = u₁(t_k, γ_k) − u₂(t_k, γ_k)` should not increase. Returns the
/// largest increase, or 0.
pub fn monotone_difference(first: &EvolutionTrace, second: &EvolutionTrace, curve: &Characteristic) -> Result<f64> {
    if first.spec != second.spec || first.grids != second.grids {
        return Err(Error::GridMismatch);
    }
    let diffs = curve
        .lifted_positions
        .iter()
        .enumerate()
        .map(|(k, &x)| {
            let step = curve.start_step + k as u64;
            match (first.field_at(step), second.field_at(step)) {
                (Some(a), Some(b)) => Ok(a.interp(x) - b.interp(x)),
                _ => Err(Error::WindowExceeded {
                    requested: curve.span_periods,
                    available: first.window_periods().min(second.window_periods()),
                }),
            }
        })
        .collect::<Result<Vec<f64>>>()?;
    Ok(diffs.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max))
}

/// Oscillation of `u + λt − φ` along a curve.
pub fn difference_oscillation(trace: &EvolutionTrace, solution: &PeriodicSolution, curve: &Characteristic) -> Result<f64> {
    let mut lo = f64::INFINITY;
    let mut hi = f64::NEG_INFINITY;
    for (k, &x) in curve.lifted_positions.iter().enumerate() {
        let step = curve.start_step + k as u64;
        let field = trace.field_at(step).ok_or(Error::WindowExceeded {
            requested: curve.span_periods,
            available: trace.window_periods(),
        })?;
        let d = field.interp(x) + solution.lambda * trace.grids.time.time(step) - phi_at(solution, step, x);
        lo = lo.min(d);
        hi = hi.max(d);
    }
    Ok(hi - lo)
}

/// Approximation of the ω-limit of the time-one flow on calibrated points.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AubrySample {
    /// Cluster representatives on the circle at the earliest period boundary.
    pub points: Vec<f64>,
    /// Step index of the sample, a period boundary.
    pub phase_step: u64,
    pub cluster_tolerance: f64,
    /// Number of probe curves per cluster, parallel to `points`.
    pub cluster_sizes: Vec<usize>,
    pub crossing: CrossingReport,
    /// Probe curve whose start point represents each cluster.
    #[serde(skip)]
    pub orbits: Vec<Characteristic>,
}

/// Order check on simultaneously backtracked curves.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CrossingReport {
    pub curves: usize,
    pub tolerance: f64,
    /// Pairs of neighbouring curves and times where the order reversed by
    /// more than `tolerance`.
    pub violations: usize,
    /// Largest reversal seen.
    pub max_reversal: f64,
}

/// Checks that curves sorted by end point stay sorted, cyclically on the
/// lift, at every earlier time up to `tolerance`.
pub fn crossing_check(curves: &[Characteristic], tolerance: f64) -> CrossingReport {
    let mut order: Vec<usize> = (0..curves.len()).collect();
    order.sort_by(|&a, &b| curves[a].end().total_cmp(&curves[b].end()));
    let mut report = CrossingReport {
        curves: curves.len(),
        tolerance,
        ..Default::default()
    };
    if curves.len() < 2 {
        return report;
    }
    let len = curves[0].lifted_positions.len();
    for k in 0..len {
        for (i, &a) in order.iter().enumerate() {
            let (b, lift) = match order.get(i + 1) {
                Some(&b) => (b, 0.0),
                None => (order[0], 1.0),
            };
            let reversal = curves[a].lifted_positions[k] - (curves[b].lifted_positions[k] + lift);
            report.max_reversal = report.max_reversal.max(reversal);
            if reversal > tolerance {
                report.violations += 1;
            }
        }
    }
    report
}

/// Groups circle points into chains whose neighbours lie within `tolerance`.
/// Returns each cluster as a list of indices into `points`, ordered along
/// the circle.
pub fn cluster_circle(points: &[f64], tolerance: f64) -> Vec<Vec<usize>> {
    if points.is_empty() {
        return Vec::new();
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.sort_by(|&a, &b| wrap(points[a]).total_cmp(&wrap(points[b])));
    let mut clusters: Vec<Vec<usize>> = vec![vec![order[0]]];
    for pair in order.windows(2) {
        if circle_dist(points[pair[0]], points[pair[1]]) <= tolerance {
            clusters.last_mut().expect("non-empty").push(pair[1]);
        } else {
            clusters.push(vec![pair[1]]);
        }
    }
    if clusters.len() > 1 {
        let first = order[0];
        let last = order[order.len() - 1];
        if circle_dist(points[first], points[last]) <= tolerance {
            let head = clusters.remove(0);
            clusters.last_mut().expect("non-empty").extend(head);
        }
    }
    clusters
}

/// Backtracks `n_probes` curves over `span_periods` and clusters their
/// start points.
pub fn aubry_sample(
    trace: &EvolutionTrace,
    n_probes: usize,
    span_periods: usize,
    cluster_tolerance: f64,
) -> Result<AubrySample> {
    check_window(trace, span_periods)?;
    let curves = probe_points(n_probes)
        .map(|x| backtrack(trace, x, span_periods))
        .collect::<Result<Vec<_>>>()?;
    let starts: Vec<f64> = curves.iter().map(|c| wrap(c.start())).collect();
    let clusters = cluster_circle(&starts, cluster_tolerance);
    let crossing = crossing_check(&curves, crossing_tolerance(trace));
    let mut points = Vec::with_capacity(clusters.len());
    let mut sizes = Vec::with_capacity(clusters.len());
    let mut orbits = Vec::with_capacity(clusters.len());
    for cluster in &clusters {
        let rep = cluster[cluster.len() / 2];
        points.push(starts[rep]);
        sizes.push(cluster.len());
        orbits.push(curves[rep].clone());
    }
    Ok(AubrySample {
        points,
        phase_step: trace.final_step() - (span_periods * trace.m_t()) as u64,
        cluster_tolerance,
        cluster_sizes: sizes,
        crossing,
        orbits,
    })
}

/// Default tolerance on order reversals of backtracked curves.
pub fn crossing_tolerance(trace: &EvolutionTrace) -> f64 {
    trace.grids.dv() * trace.grids.dt()
}
