//! Multivariate Krawtchouk polynomial systems on the multinomial
//! distribution.
//!
//! The crate constructs the polynomial families attached to an orthogonal
//! basis of functions on `d` categories, verifies their algebraic identities
//! (orthogonality, duality, hypergeometric equivalence, three-term recurrence,
//! hypergroup positivity), and builds the Markov chains and bivariate
//! distributions these polynomials diagonalize.
//!
//! Everything runs at "desk scale": state spaces are enumerated explicitly
//! and guarded by a cell-count capacity, and identities can be checked either
//! in exact arithmetic (rationals extended by square roots) or in floating
//! point against a tolerance.

pub mod basis;
pub mod chains;
pub mod comb;
pub mod error;
pub mod exact;
pub mod expand;
pub mod io;
pub mod lancaster;
pub mod poly;
pub mod scalar;

pub use error::{Error, Result};
pub use exact::Exact;
pub use scalar::Scalar;

/// Environment variable overriding the default capacity ceiling.
pub const CAPACITY_ENV: &str = "KRAWTCHOUK_CAPACITY";

/// Shared run parameters: tolerance for float comparisons, capacity ceiling
/// on enumerated cells, and the simulation seed.
#[derive(Clone, Debug)]
pub struct RunConfig {
    pub tol: f64,
    pub capacity: u128,
    pub seed: u64,
}

impl Default for RunConfig {
    fn default() -> Self {
        let capacity = std::env::var(CAPACITY_ENV)
            .ok()
            .and_then(|v| v.parse().ok())
            .unwrap_or(10_000_000);
        RunConfig {
            tol: 1e-10,
            capacity,
            seed: 0,
        }
    }
}

impl RunConfig {
    pub fn with_capacity(mut self, capacity: u128) -> Self {
        self.capacity = capacity;
        self
    }

    pub fn with_tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self
    }
}
