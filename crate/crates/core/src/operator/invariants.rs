use serde::{Deserialize, Serialize};

use super::Scheme;
use crate::error::Result;
use crate::grid::{sup_dist, ValueField};
use crate::rng::{random_lipschitz, Lcg64};

/// Outcome of the structural checks on the one-period map.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct InvariantReport {
    pub pairs: usize,
    /// Nodes where `u ≤ v` but `T u > T v`.
    pub monotonicity_violations: usize,
    /// Largest `|T(u + c) − (T u + c)|`, in units in the last place of the
    /// output magnitude.
    pub equivariance_max_ulps: f64,
    /// Same measure when `u + c` is rounded into the node values before the
    /// period map. Rounding then accumulates step by step; reported only.
    pub materialized_equivariance_ulps: f64,
    /// Pairs with `‖T u − T v‖ > ‖u − v‖`.
    pub nonexpansive_violations: usize,
    /// Largest `‖T u − T v‖ / ‖u − v‖` seen.
    pub max_contraction_ratio: f64,
    /// Whether repeated runs on the same input agreed bit for bit.
    pub deterministic: bool,
}

impl InvariantReport {
    /// Tolerance on constant equivariance, in ulps per period.
    pub const EQUIVARIANCE_ULPS: f64 = 2.0;

    pub fn passed(&self) -> bool {
        self.monotonicity_violations == 0
            && self.nonexpansive_violations == 0
            && self.equivariance_max_ulps <= Self::EQUIVARIANCE_ULPS
            && self.deterministic
    }
}

/// Spacing of doubles at the magnitude of `x`.
pub(crate) fn ulp(x: f64) -> f64 {
    let x = x.abs();
    if x < f64::MIN_POSITIVE {
        return f64::MIN_POSITIVE * f64::EPSILON;
    }
    let exponent = x.log2().floor();
    let mut spacing = 2f64.powf(exponent) * f64::EPSILON;
    // guard against log2 rounding at exact powers of two
    if x / spacing >= 2f64.powi(53) {
        spacing *= 2.0;
    }
    spacing
}

/// Runs the monotonicity, constant-equivariance, nonexpansiveness and
/// determinism checks on `pairs` seeded random field pairs, one period each.
pub fn check_invariants(scheme: &Scheme, pairs: usize, seed: u64) -> Result<InvariantReport> {
    let grid = scheme.grids().space;
    let n = grid.n_x;
    let mut rng = Lcg64::new(seed);
    let mut report = InvariantReport {
        pairs,
        deterministic: true,
        ..Default::default()
    };

    for _ in 0..pairs {
        let lipschitz = rng.uniform(0.0, 20.0);
        let u = random_lipschitz(&grid, lipschitz, &mut rng);
        let bump: Vec<f64> = (0..n).map(|_| rng.uniform(0.0, 1.0)).collect();
        let above = ValueField::new(u.iter().zip(&bump).map(|(a, b)| a + b).collect(), 0);
        let other = random_lipschitz(&grid, rng.uniform(0.0, 20.0), &mut rng);
        let c = rng.uniform(-10.0, 10.0);

        let (tu, _) = scheme.period_map(&u)?;
        let (t_above, _) = scheme.period_map(&above)?;
        let (t_other, _) = scheme.period_map(&other)?;
        let (t_shift, _) = scheme.period_map(&u.shifted(c))?;
        let (t_folded, _) = scheme.period_map(&u.shifted(c).materialized())?;
        let (again, _) = scheme.period_map(&u)?;

        report.deterministic &= again == tu;

        report.monotonicity_violations += tu.iter().zip(t_above.iter()).filter(|(a, b)| a > b).count();

        let scale = t_shift.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        let unit = ulp(scale);
        for ((shifted, folded), base) in t_shift.iter().zip(t_folded.iter()).zip(tu.iter()) {
            let expected = base + c;
            report.equivariance_max_ulps = report.equivariance_max_ulps.max((shifted - expected).abs() / unit);
            report.materialized_equivariance_ulps =
                report.materialized_equivariance_ulps.max((folded - expected).abs() / unit);
        }

        let before = sup_dist(&u, &other)?;
        let after = sup_dist(&tu, &t_other)?;
        if after > before {
            report.nonexpansive_violations += 1;
        }
        if before > 0.0 {
            report.max_contraction_ratio = report.max_contraction_ratio.max(after / before);
        }
    }
    Ok(report)
}
