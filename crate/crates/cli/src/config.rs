//! Flag/config-file merging. A config file is a flat TOML table whose keys
//! are long flag names (`t = 10`, `min-desc = 5`, `graph = "g.jsonl"`).
//! Values given on the command line win.

use std::path::Path;

use serde::de::DeserializeOwned;
use toml::Table;

use crate::CliError;

#[derive(Debug, Default)]
pub struct Settings {
    table: Table,
}

impl Settings {
    pub fn load(path: Option<&Path>) -> Result<Self, CliError> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path)
            .map_err(|e| CliError::Usage(format!("cannot read config {}: {e}", path.display())))?;
        let table: Table = text
            .parse()
            .map_err(|e| CliError::Usage(format!("config {}: {e}", path.display())))?;
        Ok(Self { table })
    }

    #[cfg(test)]
    pub fn from_str(text: &str) -> Self {
        Self {
            table: text.parse().unwrap(),
        }
    }

    /// The flag value if given, else the config value, else `None`.
    pub fn opt<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<Option<T>, CliError> {
        if flag.is_some() {
            return Ok(flag);
        }
        match self.table.get(key) {
            None => Ok(None),
            Some(v) => v
                .clone()
                .try_into()
                .map(Some)
                .map_err(|e| CliError::Usage(format!("config key {key:?}: {e}"))),
        }
    }

    pub fn or<T: DeserializeOwned>(&self, flag: Option<T>, key: &str, default: T) -> Result<T, CliError> {
        Ok(self.opt(flag, key)?.unwrap_or(default))
    }

    pub fn req<T: DeserializeOwned>(&self, flag: Option<T>, key: &str) -> Result<T, CliError> {
        self.opt(flag, key)?
            .ok_or_else(|| CliError::Usage(format!("missing required --{key} (flag or config key)")))
    }
}

/// Parses a comma-separated list such as `1,5,10`.
pub fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> Result<Vec<T>, CliError> {
    s.split(',')
        .map(str::trim)
        .filter(|p| !p.is_empty())
        .map(|p| p.parse().map_err(|_| CliError::Usage(format!("invalid {what} {p:?}"))))
        .collect()
}
