//! Definition files, the bundled catalogue, numeric cross-checks and the
//! command line front end for the `jetcheck_core` engine.

#![allow(clippy::needless_range_loop)]

pub use jetcheck_core as core;

pub mod catalog;
pub mod cli;
pub mod deffile;
pub mod docs;
pub mod error;
pub mod numeric;
pub mod suite;

pub use error::{Error, Result};

/// Deterministic generator used by every randomized check.
pub fn rng(seed: u64) -> rand_chacha::ChaCha8Rng {
    use rand::SeedableRng;
    rand_chacha::ChaCha8Rng::seed_from_u64(seed)
}
