use std::collections::BTreeMap;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::binio::sha256_hex;
use crate::error::{AdeError, Result};

/// Record written next to every artifact a command produces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// effective configuration; feeding this file back via `--config`
    /// reproduces the run
    pub config: serde_json::Value,
    pub seed: u64,
    pub inputs: BTreeMap<String, String>,
    pub artifacts: BTreeMap<String, String>,
    pub timings_ms: BTreeMap<String, f64>,
    pub version: String,
}

impl RunManifest {
    pub fn new(command: &str, config: &impl Serialize, seed: u64) -> Result<Self> {
        Ok(Self {
            command: command.to_string(),
            config: serde_json::to_value(config).map_err(|e| AdeError::config(e.to_string()))?,
            seed,
            inputs: BTreeMap::new(),
            artifacts: BTreeMap::new(),
            timings_ms: BTreeMap::new(),
            version: env!("CARGO_PKG_VERSION").to_string(),
        })
    }

    pub fn input_bytes(&mut self, name: &str, bytes: &[u8]) {
        self.inputs.insert(name.to_string(), sha256_hex(bytes));
    }

    pub fn input_hash(&mut self, name: &str, hash: String) {
        self.inputs.insert(name.to_string(), hash);
    }

    pub fn artifact(&mut self, path: &Path, bytes: &[u8]) {
        self.artifacts.insert(path.display().to_string(), sha256_hex(bytes));
    }

    pub fn timing(&mut self, name: &str, ms: f64) {
        self.timings_ms.insert(name.to_string(), ms);
    }

    /// Writes `<primary>.manifest.json` and returns its path.
    pub fn write_next_to(&self, primary: &Path) -> Result<std::path::PathBuf> {
        let mut name = primary.as_os_str().to_owned();
        name.push(".manifest.json");
        let path = std::path::PathBuf::from(name);
        let text = serde_json::to_string_pretty(self).map_err(|e| AdeError::config(e.to_string()))?;
        std::fs::write(&path, text)?;
        Ok(path)
    }
}

/// Reads a job configuration from TOML (`.toml`) or JSON. A JSON manifest
/// is accepted too; its `config` field is used.
pub fn load_config<T: DeserializeOwned>(path: &Path) -> Result<T> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| AdeError::config(format!("cannot read config {}: {e}", path.display())))?;
    let value: serde_json::Value = if path.extension().is_some_and(|e| e == "toml") {
        let t: toml::Value = toml::from_str(&text).map_err(|e| AdeError::config(format!("{}: {e}", path.display())))?;
        serde_json::to_value(t).map_err(|e| AdeError::config(e.to_string()))?
    } else {
        serde_json::from_str(&text).map_err(|e| AdeError::config(format!("{}: {e}", path.display())))?
    };
    let value = match value {
        serde_json::Value::Object(mut map) if map.contains_key("command") && map.contains_key("config") => {
            map.remove("config").expect("checked")
        }
        other => other,
    };
    serde_json::from_value(value).map_err(|e| AdeError::config(format!("{}: {e}", path.display())))
}

/// Defaults, then the optional config file.
pub fn base_config<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load_config(p),
        None => Ok(T::default()),
    }
}
