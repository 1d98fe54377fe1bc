//! Generators, fixtures and brute-force oracles shared by the test suites.
//! Oracles here deliberately avoid the library's own helpers.

pub mod arb;
pub mod checks;
pub mod clinic;
pub mod corpus;
pub mod fixture;
pub mod oracle;
#[cfg(feature = "api")]
pub mod server;
pub mod sha;

use std::path::PathBuf;

use cdp_core::model::Timestamp;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// 2024-01-01T00:00:00Z
pub fn t0() -> Timestamp {
    Timestamp::from_unix(1_704_067_200).unwrap()
}

/// Workspace root.
pub fn repo_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../..").canonicalize().unwrap()
}
