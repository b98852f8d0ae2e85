//! Seeded generator for random initial data.
//!
//! A 64-bit linear congruential generator with Knuth's MMIX constants
//! `state ← 6364136223846793005·state + 1442695040888963407 (mod 2⁶⁴)`.
//! Uniform doubles take the top 53 bits of the new state. The generator is
//! fixed so that runs reproduce bit-for-bit from a seed.

use crate::grid::{CircleGrid, ValueField};

const MULTIPLIER: u64 = 6_364_136_223_846_793_005;
const INCREMENT: u64 = 1_442_695_040_888_963_407;

#[derive(Clone, Debug)]
pub struct Lcg64 {
    state: u64,
}

impl Lcg64 {
    pub fn new(seed: u64) -> Self {
        Self { state: seed }
    }

    pub fn next_u64(&mut self) -> u64 {
        self.state = self
            .state
            .wrapping_mul(MULTIPLIER)
            .wrapping_add(INCREMENT);
        self.state
    }

    /// Uniform in `[0, 1)`.
    pub fn next_f64(&mut self) -> f64 {
        (self.next_u64() >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
    }

    /// Uniform in `[lo, hi)`.
    pub fn uniform(&mut self, lo: f64, hi: f64) -> f64 {
        lo + (hi - lo) * self.next_f64()
    }
}

/// Random periodic grid function with discrete Lipschitz constant at most
/// `lipschitz`.
///
/// Increments are drawn uniformly in `[−L·dx, L·dx]`, then recentred so
/// they sum to zero (which keeps every increment within `2·L·dx`, and the
/// rescale below brings it back to `L`).
pub fn random_lipschitz(grid: &CircleGrid, lipschitz: f64, rng: &mut Lcg64) -> ValueField {
    let n = grid.n_x;
    let dx = grid.dx();
    let mut increments: Vec<f64> = (0..n)
        .map(|_| rng.uniform(-lipschitz * dx, lipschitz * dx))
        .collect();
    let mean = increments.iter().sum::<f64>() / n as f64;
    for d in &mut increments {
        *d -= mean;
    }
    let largest = increments.iter().fold(0.0f64, |m, d| m.max(d.abs()));
    if largest > 0.0 {
        let scale = (lipschitz * dx / largest).min(1.0);
        for d in &mut increments {
            *d *= scale;
        }
    }
    let mut values = Vec::with_capacity(n);
    let mut acc = 0.0;
    for d in increments.iter().take(n) {
        values.push(acc);
        acc += d;
    }
    ValueField::new(values, 0)
}
