//! Period detection, rational reduction of the rotation number, and the
//! end-to-end check that every solution converges to a time-periodic limit
//! whose period is bounded by the denominator of the rotation number.

use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::characteristics::rotation_number;
use crate::error::{Error, Result};
use crate::grid::{sup_dist, ValueField};
use crate::hamiltonian::HamiltonianSpec;
use crate::operator::{EvolutionTrace, Grids, Scheme};
use crate::rng::{random_lipschitz, Lcg64};
use crate::spectrum::{distance_up_to_constant, estimate_lambda, periodic_solution, LambdaEstimate};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rational {
    pub p: i64,
    pub q: i64,
    pub error: f64,
}

/// Last continued-fraction convergent of `rho` with denominator at most
/// `denominator_cap`, kept only if it lies within
/// `rho_spread + 1/(2·cap²)` of `rho`.
pub fn rational_reduce(rho: f64, denominator_cap: i64, rho_spread: f64) -> Option<Rational> {
    if denominator_cap < 1 || !rho.is_finite() {
        return None;
    }
    // convergents h/k from the recurrence h_n = a_n h_{n−1} + h_{n−2}
    let (mut h_prev, mut h) = (1i64, rho.floor() as i64);
    let (mut k_prev, mut k) = (0i64, 1i64);
    let mut rest = rho - rho.floor();
    for _ in 0..64 {
        if rest.abs() < 1e-15 {
            break;
        }
        let x = 1.0 / rest;
        let a = x.floor();
        if a > 1e15 {
            break;
        }
        let a = a as i64;
        let k_next = a.saturating_mul(k).saturating_add(k_prev);
        if k_next > denominator_cap {
            break;
        }
        let h_next = a * h + h_prev;
        (h_prev, h) = (h, h_next);
        (k_prev, k) = (k, k_next);
        rest = x - x.floor();
    }
    let error = (rho - h as f64 / k as f64).abs();
    let threshold = rho_spread + 0.5 / (denominator_cap as f64).powi(2);
    (error <= threshold).then_some(Rational { p: h, q: k, error })
}

/// Residuals `sup_dist(u(n+T) + λT, u(n))` for `T = 1..=q_max` and every
/// period `n` with `n + T` in the trace.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PeriodDetection {
    pub period: Option<usize>,
    /// `residual_history[T − 1][n]`.
    pub residual_history: Vec<Vec<f64>>,
    /// Largest residual over the final quarter, per candidate.
    pub tail_residuals: Vec<f64>,
    /// First period index of the final quarter.
    pub tail_start: usize,
}

impl PeriodDetection {
    /// CSV with one row per period `n` and one column per candidate `T`;
    /// cells past the end of the trace are empty.
    pub fn write_csv<W: Write>(&self, out: &mut W) -> Result<()> {
        write!(out, "n")?;
        for t in 1..=self.residual_history.len() {
            write!(out, ",T{t}")?;
        }
        writeln!(out)?;
        let rows = self.residual_history.first().map_or(0, Vec::len);
        for n in 0..rows {
            write!(out, "{n}")?;
            for series in &self.residual_history {
                match series.get(n) {
                    Some(r) => write!(out, ",{r:?}")?,
                    None => write!(out, ",")?,
                }
            }
            writeln!(out)?;
        }
        Ok(())
    }
}

/// Smallest `T ≤ q_max` whose residuals over the final quarter of the trace
/// all stay within `tol`.
pub fn detect_period(trace: &EvolutionTrace, lambda: f64, q_max: usize, tol: f64) -> Result<PeriodDetection> {
    let periods = trace.n_periods_run;
    if q_max == 0 || periods < 4 * q_max {
        return Err(Error::InsufficientData {
            needed: 4 * q_max.max(1),
            available: periods,
        });
    }
    let tail_start = periods - periods / 4;
    let mut history = Vec::with_capacity(q_max);
    let mut tails = Vec::with_capacity(q_max);
    for t in 1..=q_max {
        let series = (0..=periods - t)
            .map(|n| sup_dist(&trace.snapshot(n + t).shifted(lambda * t as f64), trace.snapshot(n)))
            .collect::<Result<Vec<f64>>>()?;
        tails.push(series[tail_start..].iter().copied().fold(0.0, f64::max));
        history.push(series);
    }
    let period = tails.iter().position(|&r| r <= tol).map(|i| i + 1);
    Ok(PeriodDetection {
        period,
        residual_history: history,
        tail_residuals: tails,
        tail_start,
    })
}

/// Sup distance between the trace and the `T`-periodic limit built from its
/// last `T` snapshots, over the final quarter.
pub fn final_gap(trace: &EvolutionTrace, lambda: f64, period: usize) -> Result<f64> {
    let periods = trace.n_periods_run;
    let block = periods - period;
    let tail_start = (periods - periods / 4).min(block);
    let mut gap: f64 = 0.0;
    for n in tail_start..=periods {
        let m = block + (n as i64 - block as i64).rem_euclid(period as i64) as usize;
        let limit = trace.snapshot(m).shifted(-lambda * (n as f64 - m as f64));
        gap = gap.max(sup_dist(trace.snapshot(n), &limit)?);
    }
    Ok(gap)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Tolerances {
    pub lambda_tol: f64,
    pub fixedpoint_tol: f64,
    pub period_tol: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Self {
            lambda_tol: 1e-3,
            fixedpoint_tol: 1e-9,
            period_tol: 1e-3,
        }
    }
}

/// Parameters of the verification pipeline.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyConfig {
    pub n_x: usize,
    pub m_t: usize,
    #[serde(default)]
    pub v_max: Option<f64>,
    pub n_v: usize,
    pub n_periods: usize,
    pub q_max: usize,
    #[serde(default)]
    pub tolerances: Tolerances,
    #[serde(default = "default_seed")]
    pub seed: u64,
    #[serde(default = "default_probes")]
    pub n_probes: usize,
    #[serde(default = "default_span")]
    pub span_periods: usize,
    #[serde(default = "default_burn_in")]
    pub burn_in_fraction: f64,
    #[serde(default = "default_power_iterations")]
    pub max_power_iterations: usize,
}

fn default_seed() -> u64 {
    1
}
fn default_probes() -> usize {
    32
}
fn default_span() -> usize {
    16
}
fn default_burn_in() -> f64 {
    0.5
}
fn default_power_iterations() -> usize {
    20_000
}

impl Default for VerifyConfig {
    fn default() -> Self {
        Self {
            n_x: 200,
            m_t: 50,
            v_max: None,
            n_v: 121,
            n_periods: 200,
            q_max: 8,
            tolerances: Tolerances::default(),
            seed: default_seed(),
            n_probes: default_probes(),
            span_periods: default_span(),
            burn_in_fraction: default_burn_in(),
            max_power_iterations: default_power_iterations(),
        }
    }
}

impl VerifyConfig {
    pub fn grids(&self, spec: &HamiltonianSpec) -> Result<Grids> {
        Grids::for_spec(spec, self.n_x, self.m_t, self.n_v, self.v_max)
    }

    pub fn validate(&self) -> Result<()> {
        let t = &self.tolerances;
        for (name, v) in [
            ("lambda_tol", t.lambda_tol),
            ("fixedpoint_tol", t.fixedpoint_tol),
            ("period_tol", t.period_tol),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(Error::InvalidConfig(format!("{name} must be positive, got {v}")));
            }
        }
        if self.q_max == 0 {
            return Err(Error::InvalidConfig("q_max must be at least 1".into()));
        }
        if self.n_periods < 4 * self.q_max {
            return Err(Error::InvalidConfig(format!(
                "n_periods = {} must be at least 4·q_max = {}",
                self.n_periods,
                4 * self.q_max
            )));
        }
        if self.span_periods > self.n_periods {
            return Err(Error::InvalidConfig("span_periods exceeds n_periods".into()));
        }
        if self.n_probes == 0 {
            return Err(Error::InvalidConfig("n_probes must be at least 1".into()));
        }
        Ok(())
    }
}

/// Which arithmetic hypothesis on the rotation number the report applied.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RhoHypothesis {
    /// A convergent with denominator within the cap fits ρ.
    RationalAtResolution,
    /// No convergent fits and periodic solutions agree up to constants.
    IrrationalAtResolution,
    /// No convergent fits, but periodic solutions from different initial
    /// data disagree, so ρ is treated as rational with a denominator beyond
    /// the cap.
    DowngradedToRational,
}

/// Uniqueness symptom for irrational rotation: periodic solutions from
/// several initial fields should agree up to a constant.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniquenessCheck {
    pub solutions: usize,
    /// Largest pairwise distance up to an additive constant.
    pub max_distance: f64,
    pub threshold: f64,
    /// Power iterations that did not reach `fixedpoint_tol`.
    pub unconverged: usize,
    pub passed: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub schema: u32,
    pub spec: HamiltonianSpec,
    pub grids: Grids,
    /// Critical value of the input equation.
    pub lambda: LambdaEstimate,
    /// Drift left after folding `lambda` into the working equation.
    pub residual_lambda: f64,
    pub rho: f64,
    pub rho_spread: f64,
    pub rational: Option<Rational>,
    pub rho_hypothesis: RhoHypothesis,
    pub detected_period: Option<usize>,
    pub tail_residuals: Vec<f64>,
    pub residual_history: Vec<Vec<f64>>,
    pub final_gap: f64,
    pub addendum_ok: bool,
    pub theorem_ok: bool,
    pub uniqueness: Option<UniquenessCheck>,
}

/// Everything a verification run produces.
#[derive(Clone, Debug)]
pub struct Verification {
    pub report: ConvergenceReport,
    pub detection: PeriodDetection,
    /// Trace of the working equation, with `λ` folded in.
    pub trace: EvolutionTrace,
}

pub const REPORT_SCHEMA: u32 = 1;

/// Runs evolve → λ → fold λ → re-evolve → ρ → rational reduction → period
/// detection → periodic limit and gap.
pub fn verify_theorem(spec: &HamiltonianSpec, u0: &ValueField, config: &VerifyConfig) -> Result<Verification> {
    config.validate()?;
    spec.validate()?;
    let grids = config.grids(spec)?;
    let tol = config.tolerances;

    let first = Scheme::new(spec.clone(), grids).evolve(u0, config.n_periods, 1)?;
    let lambda = estimate_lambda(&first, config.burn_in_fraction)?;
    drop(first);

    let working = spec.clone().with_lambda_shift(spec.lambda_shift + lambda.value);
    let scheme = Scheme::new(working.clone(), grids);
    let trace = scheme.evolve(u0, config.n_periods, config.span_periods.max(1))?;
    let residual_lambda = estimate_lambda(&trace, config.burn_in_fraction)?.value;

    let rotation = rotation_number(&trace, config.n_probes, config.span_periods)?;
    let rational = rational_reduce(rotation.rho, config.q_max as i64, rotation.spread);

    let detection = detect_period(&trace, residual_lambda, config.q_max, tol.period_tol)?;
    let gap_period = detection.period.unwrap_or_else(|| {
        // closest candidate, for reporting
        1 + detection
            .tail_residuals
            .iter()
            .enumerate()
            .min_by(|a, b| a.1.total_cmp(b.1))
            .map_or(0, |(i, _)| i)
    });
    let gap = final_gap(&trace, residual_lambda, gap_period)?;

    let (hypothesis, uniqueness) = match rational {
        Some(_) => (RhoHypothesis::RationalAtResolution, None),
        None => {
            let check = uniqueness_check(&working, &grids, config)?;
            let hypothesis = if check.passed {
                RhoHypothesis::IrrationalAtResolution
            } else {
                RhoHypothesis::DowngradedToRational
            };
            (hypothesis, Some(check))
        }
    };
    let addendum_ok = match (detection.period, rational, hypothesis) {
        (Some(t), Some(r), _) => t as i64 <= r.q,
        (Some(t), None, RhoHypothesis::IrrationalAtResolution) => t == 1,
        (Some(_), None, _) => true,
        (None, _, _) => false,
    };
    let theorem_ok = detection.period.is_some() && gap <= tol.period_tol;

    let report = ConvergenceReport {
        schema: REPORT_SCHEMA,
        spec: spec.clone(),
        grids,
        lambda,
        residual_lambda,
        rho: rotation.rho,
        rho_spread: rotation.spread,
        rational,
        rho_hypothesis: hypothesis,
        detected_period: detection.period,
        tail_residuals: detection.tail_residuals.clone(),
        residual_history: detection.residual_history.clone(),
        final_gap: gap,
        addendum_ok,
        theorem_ok,
        uniqueness,
    };
    Ok(Verification {
        report,
        detection,
        trace,
    })
}

pub const UNIQUENESS_SOLUTIONS: usize = 3;

/// Periodic solutions of the working equation from seeded random initial
/// fields, compared up to additive constants against `5·period_tol`.
pub fn uniqueness_check(working: &HamiltonianSpec, grids: &Grids, config: &VerifyConfig) -> Result<UniquenessCheck> {
    let tol = config.tolerances;
    let mut rng = Lcg64::new(config.seed.wrapping_add(1));
    let mut solutions = Vec::with_capacity(UNIQUENESS_SOLUTIONS);
    let mut unconverged = 0;
    for _ in 0..UNIQUENESS_SOLUTIONS {
        let u0 = random_lipschitz(&grids.space, 3.0, &mut rng);
        match periodic_solution(working, grids, &u0, tol.fixedpoint_tol, config.max_power_iterations) {
            Ok(sol) => solutions.push(sol.snapshots[0].clone()),
            Err(Error::NoConvergence { .. }) => unconverged += 1,
            Err(e) => return Err(e),
        }
    }
    let mut max_distance: f64 = 0.0;
    for (i, a) in solutions.iter().enumerate() {
        for b in &solutions[i + 1..] {
            max_distance = max_distance.max(distance_up_to_constant(a, b)?);
        }
    }
    let threshold = 5.0 * tol.period_tol;
    Ok(UniquenessCheck {
        solutions: UNIQUENESS_SOLUTIONS,
        max_distance,
        threshold,
        unconverged,
        passed: unconverged == 0 && max_distance <= threshold,
    })
}

impl ConvergenceReport {
    pub fn to_json(&self) -> Result<String> {
        let mut text = serde_json::to_string_pretty(self)?;
        text.push('\n');
        Ok(text)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::grid::CircleGrid;

    #[test]
    fn rational_examples() {
        assert_eq!(rational_reduce(0.5, 10, 0.0), Some(Rational { p: 1, q: 2, error: 0.0 }));
        assert_eq!(rational_reduce(0.0, 10, 0.0), Some(Rational { p: 0, q: 1, error: 0.0 }));
        assert_eq!(rational_reduce(0.6180339887, 10, 1e-6), None);
        let r = rational_reduce(-0.25, 8, 0.0).unwrap();
        assert_eq!((r.p, r.q), (-1, 4));
        assert_eq!(rational_reduce(0.5, 0, 0.0), None);
        let third = rational_reduce(1.0 / 3.0 + 1e-4, 8, 0.0).unwrap();
        assert_eq!((third.p, third.q), (1, 3));
    }

    #[test]
    fn golden_mean_exhaustive_scan() {
        // every p/q with q ≤ 10 misses by more than the threshold
        let rho = 0.6180339887;
        let threshold = 1e-6 + 0.5 / 100.0;
        for q in 1..=10i64 {
            for p in 0..=q {
                assert!((rho - p as f64 / q as f64).abs() > threshold, "{p}/{q}");
            }
        }
        // the cap matters: 8/13 is accepted with a larger denominator budget
        let r = rational_reduce(rho, 13, 1e-6).unwrap();
        assert_eq!((r.p, r.q), (8, 13));
    }

    #[test]
    fn convergents_match_brute_force_best_approximation() {
        for &rho in &[0.1234, 0.7071, 0.3819, 0.9, 0.45] {
            for cap in 1..=12i64 {
                let Some(r) = rational_reduce(rho, cap, 1.0) else {
                    panic!("generous spread always accepts")
                };
                let best = (1..=cap)
                    .map(|q| ((rho * q as f64).round() / q as f64 - rho).abs())
                    .fold(f64::INFINITY, f64::min);
                // a convergent is at least as good as any fraction with a
                // smaller denominator
                let smaller = (1..r.q)
                    .map(|q| ((rho * q as f64).round() / q as f64 - rho).abs())
                    .fold(f64::INFINITY, f64::min);
                assert!(r.error <= smaller + 1e-15, "{rho} {cap}");
                assert!(r.error >= best - 1e-15);
            }
        }
    }

    fn stationary_trace(periods: usize) -> EvolutionTrace {
        let grids = Grids::new(32, 8, 1.0, 21).unwrap();
        let u0 = CircleGrid::new(32).unwrap().sample(0, |_| 1.5);
        Scheme::new(HamiltonianSpec::mechanical(0.0, 0.0), grids)
            .evolve(&u0, periods, 1)
            .unwrap()
    }

    #[test]
    fn stationary_trace_has_period_one() {
        let trace = stationary_trace(32);
        let d = detect_period(&trace, 0.0, 8, 1e-12).unwrap();
        assert_eq!(d.period, Some(1));
        assert_eq!(d.residual_history.len(), 8);
        assert_eq!(d.residual_history[0].len(), 32);
        assert_eq!(d.residual_history[7].len(), 25);
        assert_eq!(d.tail_start, 24);
        assert_eq!(final_gap(&trace, 0.0, 1).unwrap(), 0.0);
        assert!(matches!(
            detect_period(&stationary_trace(31), 0.0, 8, 1e-12),
            Err(Error::InsufficientData { needed: 32, available: 31 })
        ));
    }

    #[test]
    fn detection_is_invariant_under_constants() {
        let grids = Grids::new(32, 8, 2.5, 41).unwrap();
        let spec = HamiltonianSpec::mechanical(1.0, 0.5).with_lambda_shift(1.0);
        let scheme = Scheme::new(spec, grids);
        let u0 = random_lipschitz(&grids.space, 3.0, &mut Lcg64::new(9));
        let a = detect_period(&scheme.evolve(&u0, 24, 1).unwrap(), 0.0, 4, 1e-6).unwrap();
        let b = detect_period(&scheme.evolve(&u0.shifted(-4.25), 24, 1).unwrap(), 0.0, 4, 1e-6).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn two_cycle_is_detected_as_period_two() {
        // synthetic trace alternating between two fields
        let grids = Grids::new(16, 4, 1.0, 9).unwrap();
        let scheme = Scheme::new(HamiltonianSpec::mechanical(0.0, 0.0), grids);
        let mut trace = scheme.evolve(&ValueField::constant(16, 0.0, 0), 16, 1).unwrap();
        for (k, s) in trace.snapshots.iter_mut().enumerate() {
            let bump = if k % 2 == 0 { 0.0 } else { 0.5 };
            let values = (0..16).map(|i| if i == 3 { bump } else { 0.0 }).collect();
            *s = ValueField::new(values, s.step_index);
        }
        let d = detect_period(&trace, 0.0, 4, 1e-12).unwrap();
        assert_eq!(d.period, Some(2));
        assert_eq!(d.tail_residuals[0], 0.5);
        assert_eq!(final_gap(&trace, 0.0, 2).unwrap(), 0.0);
        assert_eq!(final_gap(&trace, 0.0, 1).unwrap(), 0.5);
        let mut csv = Vec::new();
        d.write_csv(&mut csv).unwrap();
        let text = String::from_utf8(csv).unwrap();
        assert!(text.starts_with("n,T1,T2,T3,T4\n0,0.5,0.0,0.5,0.0\n"));
        assert_eq!(text.lines().count(), 17);
        assert!(text.ends_with("\n15,0.5,,,\n"));
    }

    #[test]
    fn free_particle_verification() {
        let spec = HamiltonianSpec::mechanical(0.0, 0.0);
        let config = VerifyConfig {
            n_x: 64,
            m_t: 16,
            v_max: Some(1.0),
            n_v: 41,
            n_periods: 40,
            q_max: 4,
            span_periods: 8,
            n_probes: 8,
            ..Default::default()
        };
        let u0 = CircleGrid::new(64)
            .unwrap()
            .sample(0, |x| (std::f64::consts::TAU * x).cos());
        let v = verify_theorem(&spec, &u0, &config).unwrap();
        let r = &v.report;
        assert_eq!(r.schema, 1);
        assert_eq!(r.detected_period, Some(1));
        assert!(r.theorem_ok && r.addendum_ok);
        assert_eq!(r.rational.map(|q| (q.p, q.q)), Some((0, 1)));
        assert!(r.lambda.value.abs() < 1e-12);
        let again = verify_theorem(&spec, &u0, &config).unwrap();
        assert_eq!(r.to_json().unwrap(), again.report.to_json().unwrap());
        let json: serde_json::Value = serde_json::from_str(&r.to_json().unwrap()).unwrap();
        assert_eq!(json["schema"], 1);
    }

    #[test]
    fn config_validation() {
        let mut c = VerifyConfig::default();
        assert!(c.validate().is_ok());
        c.tolerances.period_tol = 0.0;
        assert!(c.validate().is_err());
        let c = VerifyConfig {
            n_periods: 20,
            q_max: 8,
            ..Default::default()
        };
        assert!(c.validate().is_err());
    }
}
