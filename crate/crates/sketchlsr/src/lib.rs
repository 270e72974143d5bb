//! Randomized sketch-and-solve least squares.
//!
//! Replaces an overdetermined problem min ||y - X beta|| (X is n x d,
//! n >> d) by a reduced problem min ||S y - S X beta|| for a realized
//! random embedding S with c rows, solvable in O(c d^2). Four samplers are
//! provided (leverage-score rows, uniform rows, SRHT, sparse embedding),
//! each realized sketch can be certified through a deterministic error
//! chain, and a seeded Monte Carlo harness checks the probabilistic
//! guarantees against the closed-form sample-size and tail calculators.

pub mod bounds;
pub mod error;
pub mod harness;
pub mod io;
pub mod linalg;
pub mod matrix;
pub mod rng;
pub mod sketch;
pub mod solver;

pub use error::{Error, Result};
pub use matrix::DenseMatrix;
pub use rng::SeededRng;
