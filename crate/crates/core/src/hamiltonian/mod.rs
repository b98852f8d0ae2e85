//! Catalog of time-periodic convex Hamiltonians on the circle.
//!
//! Every member of the catalog is `C²`, superlinear in `p`, and
//! 1-periodic in both `t` and `x`:
//!
//! * `Mechanical`: `½p² + A·cos(2πx)·(1 + ε·cos(2πt))`
//! * `TiltedQuadratic`: `½(p + c)²`
//! * `Quartic`: `¼p⁴ + A·cos(2πx)·(1 + ε·cos(2πt))` (not strictly convex at `p = 0`)
//!
//! A spec may additionally carry a rational change of frame `(a, b)` which
//! turns a rotation number `a/b` into `0`, see [`HamiltonianSpec::rescale`].

mod legendre;

pub use legendre::{hamiltonian_from_lagrangian, LegendreResult};

use std::f64::consts::TAU;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::wrap;

/// Base Hamiltonian family and its parameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", content = "params")]
pub enum Family {
    Mechanical {
        amplitude: f64,
        #[serde(default)]
        modulation: f64,
    },
    TiltedQuadratic {
        tilt: f64,
    },
    Quartic {
        amplitude: f64,
        #[serde(default)]
        modulation: f64,
    },
}

/// Coarse classification of a spec, with rescaled specs reported as such.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum FamilyKind {
    Mechanical,
    TiltedQuadratic,
    Quartic,
    Rescaled,
}

/// Rational change of frame `(t, x) ↦ (b·t, x + a·t)`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rescale {
    pub a: i64,
    pub b: i64,
}

/// A Hamiltonian from the catalog, possibly rescaled, minus a constant
/// `lambda_shift`.
///
/// With `rescale = Some((a, b))` the represented Hamiltonian is
///
/// ```text
/// H̃(t, x, p) = b·H(b·t, x + a·t, p) − a·p − lambda_shift
/// ```
///
/// so that `ũ(t, x) = u(b·t, x + a·t)` solves the `H̃` equation whenever
/// `u` solves the `H` equation, and curves of rotation number `a/b` become
/// curves of rotation number `0`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HamiltonianSpec {
    #[serde(flatten)]
    pub family: Family,
    #[serde(default)]
    pub lambda_shift: f64,
    #[serde(default)]
    pub rescale: Option<Rescale>,
}

/// First and second partial derivatives of `H`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Partials {
    /// `H_p`, the velocity of the Hamiltonian vector field.
    pub h_p: f64,
    /// `H_x`; the force is `−H_x`.
    pub h_x: f64,
    /// `H_pp`.
    pub h_pp: f64,
}

impl HamiltonianSpec {
    pub fn mechanical(amplitude: f64, modulation: f64) -> Self {
        Self::from_family(Family::Mechanical {
            amplitude,
            modulation,
        })
    }

    pub fn tilted(tilt: f64) -> Self {
        Self::from_family(Family::TiltedQuadratic { tilt })
    }

    pub fn quartic(amplitude: f64, modulation: f64) -> Self {
        Self::from_family(Family::Quartic {
            amplitude,
            modulation,
        })
    }

    pub fn from_family(family: Family) -> Self {
        Self {
            family,
            lambda_shift: 0.0,
            rescale: None,
        }
    }

    pub fn with_lambda_shift(mut self, lambda_shift: f64) -> Self {
        self.lambda_shift = lambda_shift;
        self
    }

    pub fn kind(&self) -> FamilyKind {
        if self.rescale.is_some() {
            return FamilyKind::Rescaled;
        }
        match self.family {
            Family::Mechanical { .. } => FamilyKind::Mechanical,
            Family::TiltedQuadratic { .. } => FamilyKind::TiltedQuadratic,
            Family::Quartic { .. } => FamilyKind::Quartic,
        }
    }

    /// Checks parameter ranges.
    pub fn validate(&self) -> Result<()> {
        let finite = |name: &str, v: f64| {
            if v.is_finite() {
                Ok(())
            } else {
                Err(Error::InvalidConfig(format!("{name} must be finite")))
            }
        };
        finite("lambda_shift", self.lambda_shift)?;
        match self.family {
            Family::Mechanical {
                amplitude,
                modulation,
            }
            | Family::Quartic {
                amplitude,
                modulation,
            } => {
                finite("amplitude", amplitude)?;
                if amplitude < 0.0 {
                    return Err(Error::InvalidConfig("amplitude must be >= 0".into()));
                }
                if !(0.0..1.0).contains(&modulation) {
                    return Err(Error::InvalidConfig("modulation must lie in [0, 1)".into()));
                }
            }
            Family::TiltedQuadratic { tilt } => finite("tilt", tilt)?,
        }
        if let Some(r) = self.rescale {
            if r.b < 1 {
                return Err(Error::InvalidRescale { a: r.a, b: r.b });
            }
        }
        Ok(())
    }

    /// Applies the change of frame `(t, x) ↦ (b·t, x + a·t)`.
    ///
    /// Rescaling an already rescaled spec composes the two frames, and the
    /// constant shift is carried through as `b·lambda_shift`.
    pub fn rescale(&self, a: i64, b: i64) -> Result<HamiltonianSpec> {
        if b < 1 {
            return Err(Error::InvalidRescale { a, b });
        }
        let composed = match self.rescale {
            None => Rescale { a, b },
            Some(inner) => Rescale {
                a: inner.a * b + a,
                b: inner.b * b,
            },
        };
        Ok(HamiltonianSpec {
            family: self.family,
            lambda_shift: self.lambda_shift * b as f64,
            rescale: Some(composed),
        })
    }

    /// `H(t, x, p) − lambda_shift`.
    pub fn eval(&self, t: f64, x: f64, p: f64) -> f64 {
        let raw = match self.rescale {
            None => base_eval(&self.family, t, x, p),
            Some(Rescale { a, b }) => {
                let (a, b) = (a as f64, b as f64);
                b * base_eval(&self.family, b * t, x + a * t, p) - a * p
            }
        };
        raw - self.lambda_shift
    }

    pub fn partials(&self, t: f64, x: f64, p: f64) -> Partials {
        match self.rescale {
            None => base_partials(&self.family, t, x, p),
            Some(Rescale { a, b }) => {
                let (a, b) = (a as f64, b as f64);
                let inner = base_partials(&self.family, b * t, x + a * t, p);
                Partials {
                    h_p: b * inner.h_p - a,
                    h_x: b * inner.h_x,
                    h_pp: b * inner.h_pp,
                }
            }
        }
    }

    /// Closed-form Lagrangian `L(t, x, v) = sup_p (p·v − H(t, x, p))`.
    ///
    /// This is the fast path used by the operator; [`Self::legendre`] is the
    /// solver-backed route with the maximizer attached.
    pub fn lagrangian(&self, t: f64, x: f64, v: f64) -> f64 {
        self.lagrangian_slice(t).eval(x, v)
    }

    /// Lagrangian frozen at time `t`, split as
    /// `kinetic(v) + amplitude·cos(2πx + phase) + shift`.
    pub fn lagrangian_slice(&self, t: f64) -> LagrangianSlice {
        let (a, b) = match self.rescale {
            None => (0.0, 1.0),
            Some(r) => (r.a as f64, r.b as f64),
        };
        let inner_t = b * t;
        let (amplitude, kinetic) = match self.family {
            Family::Mechanical {
                amplitude,
                modulation,
            } => (
                -amplitude * modulation_factor(modulation, inner_t),
                KineticKind::Quadratic { tilt: 0.0 },
            ),
            Family::TiltedQuadratic { tilt } => (0.0, KineticKind::Quadratic { tilt }),
            Family::Quartic {
                amplitude,
                modulation,
            } => (
                -amplitude * modulation_factor(modulation, inner_t),
                KineticKind::Quartic,
            ),
        };
        LagrangianSlice {
            kinetic: Kinetic { kind: kinetic, a, b },
            amplitude: b * amplitude,
            phase: TAU * wrap(a * t),
            shift: self.lambda_shift,
        }
    }

    /// Legendre transform with its maximizing momentum.
    ///
    /// Quadratic families use the closed form. The quartic family solves the
    /// first-order condition `H_p(p) = v` by safeguarded Newton iteration.
    /// Rescaled specs route through the inner family at the transformed
    /// velocity `(v + a)/b`.
    pub fn legendre(&self, t: f64, x: f64, v: f64) -> Result<LegendreResult> {
        let base = self.base_spec();
        let result = match self.rescale {
            None => legendre::base_legendre(&base, t, x, v)?,
            Some(Rescale { a, b }) => {
                let (a, b) = (a as f64, b as f64);
                let inner = legendre::base_legendre(&base, b * t, x + a * t, (v + a) / b)?;
                LegendreResult {
                    value: b * inner.value,
                    argmax_p: inner.argmax_p,
                    iterations: inner.iterations,
                }
            }
        };
        Ok(LegendreResult {
            value: result.value + self.lambda_shift,
            ..result
        })
    }

    /// Minimum of `H_pp` over `n_samples` points of a Halton sequence in
    /// `[0,1) × [0,1) × p_range`. The spec is strictly convex on the sampled
    /// set iff the result is positive.
    pub fn verify_convexity(&self, n_samples: usize, p_range: (f64, f64)) -> f64 {
        let (lo, hi) = p_range;
        (0..n_samples.max(1))
            .map(|i| {
                let p = lo + (hi - lo) * radical_inverse(i as u64, 2);
                let t = radical_inverse(i as u64, 3);
                let x = radical_inverse(i as u64, 5);
                self.partials(t, x, p).h_pp
            })
            .fold(f64::INFINITY, f64::min)
    }

    /// Sampled range of `H(t, x, 0)` over one period cell.
    pub(crate) fn zero_momentum_range(&self) -> (f64, f64) {
        sample_points(256)
            .map(|(t, x)| self.eval(t, x, 0.0))
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), h| {
                (lo.min(h), hi.max(h))
            })
    }

    /// A speed bound enclosing the minimizing velocities of solutions.
    ///
    /// Picks the smallest momentum `P` (on a 1/8 lattice) with
    /// `H(t, x, ±P) ≥ max H(·, ·, 0) + 1` at all samples and returns
    /// `max |H_p|` over `|p| ≤ P`, enlarged by a quarter.
    pub fn speed_bound(&self) -> f64 {
        let (_, h0_max) = self.zero_momentum_range();
        let target = h0_max + 1.0;
        let mut p_bound = 0.125;
        while p_bound < 1e3
            && !sample_points(64).all(|(t, x)| {
                self.eval(t, x, p_bound) >= target && self.eval(t, x, -p_bound) >= target
            })
        {
            p_bound += 0.125;
        }
        let mut v_max: f64 = 0.0;
        for (t, x) in sample_points(64) {
            for k in 0..=32 {
                let p = -p_bound + 2.0 * p_bound * k as f64 / 32.0;
                v_max = v_max.max(self.partials(t, x, p).h_p.abs());
            }
        }
        1.25 * v_max
    }

    fn base_spec(&self) -> HamiltonianSpec {
        HamiltonianSpec::from_family(self.family)
    }
}

fn modulation_factor(modulation: f64, t: f64) -> f64 {
    1.0 + modulation * (TAU * wrap(t)).cos()
}

fn potential(amplitude: f64, modulation: f64, t: f64, x: f64) -> f64 {
    amplitude * (TAU * wrap(x)).cos() * modulation_factor(modulation, t)
}

fn base_eval(family: &Family, t: f64, x: f64, p: f64) -> f64 {
    match *family {
        Family::Mechanical {
            amplitude,
            modulation,
        } => 0.5 * p * p + potential(amplitude, modulation, t, x),
        Family::TiltedQuadratic { tilt } => 0.5 * (p + tilt) * (p + tilt),
        Family::Quartic {
            amplitude,
            modulation,
        } => 0.25 * p.powi(4) + potential(amplitude, modulation, t, x),
    }
}

fn base_partials(family: &Family, t: f64, x: f64, p: f64) -> Partials {
    let force = |amplitude: f64, modulation: f64| {
        -TAU * amplitude * (TAU * wrap(x)).sin() * modulation_factor(modulation, t)
    };
    match *family {
        Family::Mechanical {
            amplitude,
            modulation,
        } => Partials {
            h_p: p,
            h_x: force(amplitude, modulation),
            h_pp: 1.0,
        },
        Family::TiltedQuadratic { tilt } => Partials {
            h_p: p + tilt,
            h_x: 0.0,
            h_pp: 1.0,
        },
        Family::Quartic {
            amplitude,
            modulation,
        } => Partials {
            h_p: p * p * p,
            h_x: force(amplitude, modulation),
            h_pp: 3.0 * p * p,
        },
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
enum KineticKind {
    /// `½v² − tilt·v`
    Quadratic { tilt: f64 },
    /// `¾|v|^{4/3}`
    Quartic,
}

/// Velocity-dependent part of the Lagrangian, `b·K((v + a)/b)`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Kinetic {
    kind: KineticKind,
    a: f64,
    b: f64,
}

impl Kinetic {
    pub fn eval(&self, v: f64) -> f64 {
        let w = (v + self.a) / self.b;
        let k = match self.kind {
            KineticKind::Quadratic { tilt } => 0.5 * w * w - tilt * w,
            KineticKind::Quartic => 0.75 * w.abs().powf(4.0 / 3.0),
        };
        self.b * k
    }

    /// `∂K/∂v`, which is the momentum `L_v` conjugate to `v`.
    pub fn derivative(&self, v: f64) -> f64 {
        let w = (v + self.a) / self.b;
        match self.kind {
            KineticKind::Quadratic { tilt } => w - tilt,
            KineticKind::Quartic => w.cbrt(),
        }
    }
}

/// The Lagrangian at a fixed time:
/// `L(x, v) = kinetic(v) + amplitude·cos(2πx + phase) + shift`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct LagrangianSlice {
    pub kinetic: Kinetic,
    pub amplitude: f64,
    pub phase: f64,
    pub shift: f64,
}

impl LagrangianSlice {
    pub fn eval(&self, x: f64, v: f64) -> f64 {
        let potential = if self.amplitude == 0.0 {
            0.0
        } else {
            self.amplitude * (TAU * wrap(x) + self.phase).cos()
        };
        self.kinetic.eval(v) + potential + self.shift
    }

    pub fn momentum(&self, v: f64) -> f64 {
        self.kinetic.derivative(v)
    }
}

/// Van der Corput radical inverse of `i` in `base`.
pub(crate) fn radical_inverse(mut i: u64, base: u64) -> f64 {
    let inv = 1.0 / base as f64;
    let mut f = inv;
    let mut r = 0.0;
    while i > 0 {
        r += f * (i % base) as f64;
        i /= base;
        f *= inv;
    }
    r
}

fn sample_points(n: usize) -> impl Iterator<Item = (f64, f64)> {
    (0..n as u64).map(|i| (radical_inverse(i, 2), radical_inverse(i, 3)))
}
