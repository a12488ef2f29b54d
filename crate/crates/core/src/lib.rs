//! Branching random walk laboratory.
//!
//! A branching random walk starts from a single ancestor; each individual u
//! begets a random point set {(X_i, phi_i)} of displaced children, i.i.d.
//! across individuals, with displacements X_i in R^d and strictly positive
//! marks phi_i. Along a vertex u at generation n the walk accumulates
//! S_n X(u) = sum of the edge displacements and S_n phi(u) = sum of the marks.
//!
//! The library computes the deterministic thermodynamic apparatus of such a
//! walk exactly enough to be testable:
//!
//! * log-moment pressures q -> log E sum_i e^{<q|X_i>}, their concave Legendre
//!   duals, and the compact convex set I_X where the dual is nonnegative;
//! * implicit pressures: for a tilt q and direction alpha, the unique t with
//!   E sum_i exp(<q|X_i - alpha> - t phi_i) = 1, whose stationary value in q
//!   yields multifractal dimension spectra for the random ultrametric
//!   d_phi(s, t) = exp(-S_{|s and t|} phi);
//! * Gibbs cascade measures on the tree boundary, their additive martingales,
//!   and Bernoulli percolation probes of their carrying dimension;
//! * sliding-window large deviation checks along sampled spines, quantifying
//!   which window growth rates make empirical cumulants converge;
//! * the exact convex-geometric decomposition of the boundary of I_X into
//!   faces carrying their own restricted branching laws.
//!
//! All randomness is driven by splittable counter streams ([`rng`]), so every
//! artifact is a pure function of the master seed.

pub mod error;
pub mod geometry;
pub mod law;
pub mod numerics;
pub mod pressure;
pub mod rng;

pub use error::{Error, Result};
