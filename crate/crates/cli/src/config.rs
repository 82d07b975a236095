use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Deserialize;

/// JSON job file; every field mirrors a command-line flag of the same name
/// (with `-` written as `_`). Flags given on the command line win.
#[derive(Debug, Clone, Default, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JobConfig {
    #[serde(default, rename = "in")]
    pub inputs: Vec<PathBuf>,
    pub out: Option<PathBuf>,
    pub channels: Option<Vec<String>>,
    pub layout: Option<String>,
    pub method: Option<String>,
    pub workers: Option<usize>,
    pub seed: Option<u64>,
    pub noise: Option<f64>,
    pub descriptor: Option<PathBuf>,
    pub pfm: Option<bool>,
    pub saturation_margin: Option<u16>,
    pub bit_depth: Option<u32>,
}

impl JobConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
    }
}
