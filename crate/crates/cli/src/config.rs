//! Optional JSON run configuration. Command-line flags take precedence over
//! file values, which take precedence over built-in defaults.

use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use serde::Deserialize;

use crate::error::{CliError, CliResult};

/// Every field any subcommand reads. Unknown keys are rejected.
#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub corpus: Option<PathBuf>,
    pub order: Option<usize>,
    pub alpha: Option<f64>,
    pub model_out: Option<PathBuf>,

    pub model: Option<PathBuf>,
    pub prompt: Option<String>,
    pub temperature: Option<f64>,
    pub top_k: Option<usize>,
    pub top_p: Option<f64>,
    pub min_p: Option<f64>,
    pub seed: Option<u64>,
    pub max_len: Option<usize>,
    pub context: Option<usize>,
    pub trace_out: Option<PathBuf>,

    pub temperatures: Option<Vec<f64>>,
    pub top_ks: Option<Vec<usize>>,
    pub top_ps: Option<Vec<f64>>,
    pub min_ps: Option<Vec<f64>>,
    pub csv_out: Option<PathBuf>,

    pub height: Option<usize>,
    pub width: Option<usize>,
    pub vocab: Option<usize>,
    pub stay_mass: Option<f64>,
    pub k_grid: Option<Vec<usize>>,
    pub steps: Option<usize>,
    pub trials: Option<usize>,
    pub frames_out: Option<PathBuf>,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        Self::parse(&text)
    }

    pub fn parse(text: &str) -> CliResult<Self> {
        serde_json::from_str(text).map_err(|e| CliError::usage(format!("config file: {e}")))
    }
}

/// Parses a comma-separated list flag. An empty string is an empty list.
pub fn parse_list<T: FromStr>(field: &str, raw: &str) -> CliResult<Vec<T>> {
    if raw.trim().is_empty() {
        return Ok(Vec::new());
    }
    raw.split(',')
        .map(|item| {
            item.trim()
                .parse()
                .map_err(|_| CliError::usage(format!("invalid {field}: cannot parse {item:?}")))
        })
        .collect()
}

/// Flag value, else config value, else default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

pub fn require<T>(field: &str, flag: Option<T>, file: Option<T>) -> CliResult<T> {
    flag.or(file).ok_or_else(|| {
        CliError::usage(format!(
            "missing {field}: pass the flag or set it in --config"
        ))
    })
}
