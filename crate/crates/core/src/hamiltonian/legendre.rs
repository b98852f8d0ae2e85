use serde::{Deserialize, Serialize};

use super::{Family, HamiltonianSpec};
use crate::error::{Error, Result};

const MAX_ITERATIONS: usize = 200;
const RESIDUAL_TOL: f64 = 1e-12;

/// `L(t, x, v)` together with the momentum attaining the supremum.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LegendreResult {
    pub value: f64,
    pub argmax_p: f64,
    pub iterations: usize,
}

/// Legendre transform of an unshifted, unrescaled catalog Hamiltonian.
pub(super) fn base_legendre(spec: &HamiltonianSpec, t: f64, x: f64, v: f64) -> Result<LegendreResult> {
    debug_assert!(spec.rescale.is_none());
    let potential = |amplitude: f64, modulation: f64| super::potential(amplitude, modulation, t, x);
    match spec.family {
        Family::Mechanical {
            amplitude,
            modulation,
        } => Ok(LegendreResult {
            value: 0.5 * v * v - potential(amplitude, modulation),
            argmax_p: v,
            iterations: 0,
        }),
        Family::TiltedQuadratic { tilt } => Ok(LegendreResult {
            value: 0.5 * v * v - tilt * v,
            argmax_p: v - tilt,
            iterations: 0,
        }),
        Family::Quartic { .. } => {
            let (p, iterations) = solve_increasing(
                |p| {
                    let d = spec.partials(t, x, p);
                    (d.h_p, d.h_pp)
                },
                v,
                RESIDUAL_TOL * v.abs().max(1.0),
            )?;
            Ok(LegendreResult {
                value: p * v - spec.eval(t, x, p),
                argmax_p: p,
                iterations,
            })
        }
    }
}

/// Solves `g(p) = target` for a non-decreasing, unbounded `g` given as
/// `p ↦ (g(p), g'(p))`. Newton steps are taken when they stay inside the
/// current bracket, bisection otherwise.
fn solve_increasing<F>(g: F, target: f64, tol: f64) -> Result<(f64, usize)>
where
    F: Fn(f64) -> (f64, f64),
{
    let residual = |p: f64| g(p).0 - target;

    let mut width = 1.0;
    let (mut lo, mut hi) = (-width, width);
    while residual(lo) > 0.0 {
        width *= 2.0;
        lo = -width;
        if width > 1e150 {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: f64::INFINITY,
            });
        }
    }
    while residual(hi) < 0.0 {
        width *= 2.0;
        hi = width;
        if width > 1e150 {
            return Err(Error::NoConvergence {
                iterations: 0,
                residual: f64::INFINITY,
            });
        }
    }

    let mut p = 0.5 * (lo + hi);
    let mut last = f64::INFINITY;
    for iteration in 1..=MAX_ITERATIONS {
        let (value, slope) = g(p);
        let r = value - target;
        last = r.abs();
        if last <= tol {
            return Ok((p, iteration));
        }
        if r < 0.0 {
            lo = p;
        } else {
            hi = p;
        }
        let newton = if slope > 0.0 { p - r / slope } else { f64::NAN };
        p = if newton > lo && newton < hi {
            newton
        } else {
            0.5 * (lo + hi)
        };
        if hi - lo <= f64::EPSILON * p.abs().max(1.0) {
            let r = residual(p).abs();
            if r <= tol {
                return Ok((p, iteration));
            }
            return Err(Error::NoConvergence {
                iterations: iteration,
                residual: r,
            });
        }
    }
    Err(Error::NoConvergence {
        iterations: MAX_ITERATIONS,
        residual: last,
    })
}

/// Recovers `H(t, x, p) = sup_v (p·v − L(t, x, v))` from the numerical
/// Lagrangian alone.
///
/// The first-order condition `L_v(v) = p` is solved with `L_v` taken from
/// the maximizing momentum of [`HamiltonianSpec::legendre`] and
/// `L_vv = 1/H_pp` at that momentum.
pub fn hamiltonian_from_lagrangian(spec: &HamiltonianSpec, t: f64, x: f64, p: f64) -> Result<f64> {
    // L_v is non-decreasing in v, so the same bracketed solver applies.
    let derivative = |v: f64| -> (f64, f64) {
        match spec.legendre(t, x, v) {
            Ok(r) => {
                let h_pp = spec.partials(t, x, r.argmax_p).h_pp;
                let slope = if h_pp > 0.0 { 1.0 / h_pp } else { 0.0 };
                (r.argmax_p, slope)
            }
            Err(_) => (f64::NAN, 0.0),
        }
    };
    // The value is stationary in v at the optimum, so a loose first-order
    // tolerance still gives a value accurate to rounding.
    let (v, _) = solve_increasing(derivative, p, 1e-10 * p.abs().max(1.0))?;
    let l = spec.legendre(t, x, v)?;
    Ok(p * v - l.value)
}
