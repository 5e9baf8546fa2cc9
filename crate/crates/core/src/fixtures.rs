//! Paths to the bundled fixture repositories used by tests, benchmarks,
//! and the CLI examples.

use std::path::PathBuf;

/// Root of a bundled fixture tree (`mini_repo`, `tiny_repo`).
pub fn fixture_root(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("fixtures")
        .join(name)
}
