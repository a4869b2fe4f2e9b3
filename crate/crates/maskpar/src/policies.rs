//! Task policy documents and the bundled policies.

use std::path::Path;

use maskpar_core::data::synthetic_policy;
use maskpar_core::TaskPolicy;

use crate::error::{Error, Result};

pub const PETA: &str = include_str!("../policies/peta.json");
pub const RAP: &str = include_str!("../policies/rap.json");

pub fn parse_policy(text: &str) -> Result<TaskPolicy> {
    // the policy's own validation surfaces as a configuration error
    serde_json::from_str(text).map_err(|e| Error::config(format!("task policy: {e}")))
}

/// A bundled policy by name (`peta`, `rap`, `synthetic`) or a JSON file.
pub fn load_policy(name_or_path: &str) -> Result<TaskPolicy> {
    match name_or_path {
        "peta" => parse_policy(PETA),
        "rap" => parse_policy(RAP),
        "synthetic" => Ok(synthetic_policy()),
        path => {
            let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
            parse_policy(&text)
        }
    }
}

pub fn write_policy(path: &Path, policy: &TaskPolicy) -> Result<()> {
    let text = serde_json::to_string_pretty(policy).map_err(|e| Error::json(path, e))?;
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
