//! Weak-KAM solver for time-periodic convex Hamilton-Jacobi equations
//! `u_t + H(t, x, u_x) = 0` on the circle.
//!
//! The crate evolves a discrete Lax-Oleinik semigroup on a periodic grid and
//! builds the long-time objects of the equation on top of it: the critical
//! value, periodic solutions, minimizing curves and their rotation number,
//! samples of the Aubry set, and a harness checking that every solution
//! converges to a time-periodic one.

pub mod characteristics;
pub mod cli;
pub mod convergence;
pub mod error;
pub mod grid;
pub mod hamiltonian;
pub mod operator;
pub mod rng;
pub mod spectrum;

pub use error::{Error, Result};
