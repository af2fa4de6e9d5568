//! Exact distributions of prime-factor counts of random integers, the
//! Kubilius model of independent prime exponents, and numerical checks of
//! Poisson approximation bounds for `ω(n, T)` and `Ω(n, T)`.
//!
//! The crate is organised bottom-up:
//!
//! - [`primesets`]: segmented sieving, prime sets and their harmonic sums
//!   `H(T) = Σ 1/p`, `H′(T) = Σ 1/(p−1)`, `H″(T) = Σ 1/p²`.
//! - [`dist`]: truncated pmfs with certified tail mass, Poisson and binomial
//!   laws, products and total-variation distance.
//! - [`factorstats`]: exact joint counts of `(f_1(n), …, f_m(n))` over
//!   `1 ≤ n ≤ x`, with a trial-division oracle.
//! - [`kubilius`]: the model variables `X_p`, exact laws of `U_T` and `W_T`,
//!   sampling and the exact distance between `X_y` and `V_{x,y}`.
//! - [`theorems`]: report builders comparing measured quantities with the
//!   right-hand sides of the approximation bounds.

#![forbid(unsafe_code)]

pub mod dist;
mod error;
pub mod factorstats;
pub mod kubilius;
mod numeric;
pub mod primesets;
pub mod theorems;

pub use dist::{JointPmf, Pmf, TvResult};
pub use error::{Error, Result};
pub use factorstats::{CountMode, JointCounts, SetSpec};
pub use primesets::{HarmonicSums, PrimeSet};
pub use theorems::TheoremReport;
