//! Flat `key = value` experiment configuration files.
//!
//! One assignment per line; blank lines and everything after `#` are ignored.
//! Keys are those of [`ExperimentConfig::KEYS`]; omitted keys keep their
//! defaults. Lists (`methods`, `sweep_dims`) are comma separated.
//!
//! ```text
//! # desk-scale network setting
//! setting = max
//! runs = 10
//! h = max
//! methods = tsls, t-gb, pe-gb
//! ```

use crate::error::{io_err, Error, Result};
use proemb_core::experiment::ExperimentConfig;
use std::path::Path;

/// Environment variable that overrides the master seed of a config file.
pub const SEED_ENV: &str = "PROEMB_SEED";

/// Applies the assignments in `text` on top of `config`. `origin` names the
/// source in error messages.
pub fn apply_text(config: &mut ExperimentConfig, text: &str, origin: &Path) -> Result<()> {
    for (idx, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let parse_err = |message: String| Error::Parse {
            path: origin.to_path_buf(),
            line: idx + 1,
            message,
        };
        let (key, value) = line
            .split_once('=')
            .ok_or_else(|| parse_err(format!("expected `key = value`, got {line:?}")))?;
        config
            .set(key.trim(), value.trim())
            .map_err(|e| parse_err(e.to_string()))?;
    }
    Ok(())
}

/// Parses a config from text, starting from the defaults.
pub fn parse(text: &str, origin: &Path) -> Result<ExperimentConfig> {
    let mut config = ExperimentConfig::default();
    apply_text(&mut config, text, origin)?;
    Ok(config)
}

pub fn load(path: &Path) -> Result<ExperimentConfig> {
    let text = std::fs::read_to_string(path).map_err(io_err(path))?;
    parse(&text, path)
}

/// Renders every key, one `key = value` line each. Parsing the output
/// reproduces `config` exactly.
pub fn render(config: &ExperimentConfig) -> String {
    let mut out = String::new();
    for (k, v) in config.entries() {
        out.push_str(k);
        out.push_str(" = ");
        out.push_str(&v);
        out.push('\n');
    }
    out
}

/// Builds the effective config: defaults, then the optional file, then
/// `seed_env` (the value of [`SEED_ENV`]), then the command-line overrides
/// in order.
pub fn resolve(
    file: Option<&Path>,
    seed_env: Option<&str>,
    overrides: &[(String, String)],
) -> Result<ExperimentConfig> {
    let mut config = match file {
        Some(p) => load(p)?,
        None => ExperimentConfig::default(),
    };
    if let Some(seed) = seed_env {
        config
            .set("seed", seed)
            .map_err(|e| Error::Usage(format!("{SEED_ENV}: {e}")))?;
    }
    for (k, v) in overrides {
        config
            .set(k, v)
            .map_err(|e| Error::Usage(format!("--{}: {e}", k.replace('_', "-"))))?;
    }
    config.validate()?;
    Ok(config)
}
