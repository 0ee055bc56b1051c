//! Helpers shared across integration test targets.
#![allow(dead_code)]

pub mod corpus;
pub mod oracle;
pub mod props;

use std::path::PathBuf;

pub fn scenario_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../scenarios")
}
