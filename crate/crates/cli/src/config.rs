//! Flag/config merging and run manifests.
//!
//! A config file is a TOML table of flag values keyed by long flag name. A
//! manifest written by a previous run is accepted too: its `[params]` table
//! holds the fully resolved flags of that run.

use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::CliError;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Manifest {
    pub command: String,
    pub version: String,
    pub seed: Option<u64>,
    pub started_unix: f64,
    pub finished_unix: f64,
    pub outputs: Vec<String>,
    pub params: toml::Table,
}

fn to_table<T: Serialize>(value: &T) -> Result<toml::Table, CliError> {
    toml::Table::try_from(value).map_err(|e| CliError::Other(e.into()))
}

/// Loads the flag table of a config file for `command`.
fn load_config(path: &Path, command: &str) -> Result<toml::Table, CliError> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
    let mut table: toml::Table =
        text.parse().map_err(|e| CliError::Usage(format!("config {} is not valid TOML: {e}", path.display())))?;
    match table.remove("params") {
        Some(toml::Value::Table(params)) => {
            if let Some(cmd) = table.get("command").and_then(|v| v.as_str()) {
                if cmd != command {
                    return Err(CliError::Usage(format!(
                        "manifest {} was written by `{cmd}`, not `{command}`",
                        path.display()
                    )));
                }
            }
            Ok(params)
        }
        Some(_) => Err(CliError::Usage(format!("`params` in {} must be a table", path.display()))),
        None => Ok(table),
    }
}

/// Overlays the flags that were given on the command line onto the config
/// file, if any. `None` fields are not serialized, so they never shadow
/// config values.
pub fn merge<T: Serialize + DeserializeOwned + Clone>(
    flags: &T,
    config: Option<&Path>,
    command: &str,
) -> Result<T, CliError> {
    let Some(path) = config else {
        return Ok(flags.clone());
    };
    let mut merged = load_config(path, command)?;
    merged.extend(to_table(flags)?);
    toml::Value::Table(merged)
        .try_into()
        .map_err(|e| CliError::Usage(format!("bad config {}: {e}", path.display())))
}

fn unix_now() -> f64 {
    SystemTime::now().duration_since(UNIX_EPOCH).map(|d| d.as_secs_f64()).unwrap_or(0.0)
}

/// Bookkeeping for one command invocation.
pub struct Run {
    manifest: Manifest,
    path: PathBuf,
}

impl Run {
    /// `params` must be the fully resolved flag set so that the manifest
    /// alone reproduces the run.
    pub fn start<T: Serialize>(command: &str, params: &T, seed: Option<u64>, out: &Path) -> Result<Self, CliError> {
        let mut path = out.as_os_str().to_owned();
        path.push(".manifest.toml");
        Ok(Self {
            manifest: Manifest {
                command: command.to_owned(),
                version: env!("CARGO_PKG_VERSION").to_owned(),
                seed,
                started_unix: unix_now(),
                finished_unix: 0.0,
                outputs: Vec::new(),
                params: to_table(params)?,
            },
            path: path.into(),
        })
    }

    pub fn output(&mut self, path: &Path) {
        self.manifest.outputs.push(path.display().to_string());
    }

    pub fn finish(mut self) -> Result<PathBuf, CliError> {
        self.manifest.finished_unix = unix_now();
        let text = toml::to_string(&self.manifest).map_err(|e| CliError::Other(e.into()))?;
        std::fs::write(&self.path, text).map_err(|e| CliError::Other(e.into()))?;
        Ok(self.path)
    }
}
