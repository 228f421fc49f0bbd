//! Service configuration and its flat `key = value` file format.
//!
//! ```text
//! # comments and blank lines are ignored
//! store_root = /srv/textpond/store
//! bind = 127.0.0.1:8080
//! languages = fr, en
//! cors_origins = http://localhost:5173, https://console.example
//! ui_dir = webui/dist
//! ```
//!
//! Keys are unique; lists are comma-separated. Relative paths are resolved
//! against the directory holding the file.

use std::fs;
use std::net::SocketAddr;
use std::path::{Path, PathBuf};

use textpond_core::engine::DEFAULT_LANGUAGES;
use textpond_core::EngineConfig;
use thiserror::Error;

pub const DEFAULT_BIND: &str = "127.0.0.1:8080";
pub const DEFAULT_STORE_ROOT: &str = "textpond-store";

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("{path}: {source}")]
    Read {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("line {line}: {reason}")]
    Syntax { line: usize, reason: String },
    #[error("{key}: {reason}")]
    BadValue { key: String, reason: String },
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ApiConfig {
    pub bind: SocketAddr,
    pub store_root: PathBuf,
    /// Detection profiles in priority order.
    pub languages: Vec<String>,
    /// Exact origins allowed to call the API from a browser; empty disables CORS.
    pub cors_origins: Vec<String>,
    /// Built console assets served under `/ui`.
    pub ui_dir: Option<PathBuf>,
}

impl Default for ApiConfig {
    fn default() -> Self {
        Self {
            bind: DEFAULT_BIND.parse().expect("valid default address"),
            store_root: PathBuf::from(DEFAULT_STORE_ROOT),
            languages: DEFAULT_LANGUAGES.iter().map(|s| s.to_string()).collect(),
            cors_origins: Vec::new(),
            ui_dir: None,
        }
    }
}

fn list(value: &str) -> Vec<String> {
    value
        .split(',')
        .map(str::trim)
        .filter(|s| !s.is_empty())
        .map(String::from)
        .collect()
}

impl ApiConfig {
    pub fn engine_config(&self) -> EngineConfig {
        EngineConfig {
            store_root: self.store_root.clone(),
            languages: self.languages.clone(),
        }
    }

    /// Applies the settings of `contents` over `self`. `base` anchors
    /// relative paths.
    pub fn apply(&mut self, contents: &str, base: &Path) -> Result<(), ConfigError> {
        let mut seen = std::collections::BTreeSet::new();
        for (i, raw) in contents.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let syntax = |reason: String| ConfigError::Syntax { line: i + 1, reason };
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| syntax(format!("expected key = value, got {line:?}")))?;
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(syntax(format!("duplicate key {key}")));
            }
            let bad = |reason: String| ConfigError::BadValue {
                key: key.to_string(),
                reason,
            };
            match key {
                "bind" => self.bind = value.parse().map_err(|e| bad(format!("{value:?}: {e}")))?,
                "store_root" => self.store_root = base.join(value),
                "languages" => {
                    let langs = list(value);
                    if langs.is_empty() {
                        return Err(bad("at least one language is required".into()));
                    }
                    self.languages = langs;
                }
                "cors_origins" => self.cors_origins = list(value),
                "ui_dir" => self.ui_dir = (!value.is_empty()).then(|| base.join(value)),
                other => return Err(syntax(format!("unknown key {other}"))),
            }
        }
        Ok(())
    }

    pub fn from_file(path: &Path) -> Result<Self, ConfigError> {
        let contents = fs::read_to_string(path).map_err(|source| ConfigError::Read {
            path: path.to_path_buf(),
            source,
        })?;
        let mut config = Self::default();
        config.apply(&contents, path.parent().unwrap_or(Path::new("")))?;
        Ok(config)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_every_key() {
        let mut c = ApiConfig::default();
        let text = "# sample\n\nbind = 0.0.0.0:9000\nstore_root = data/store\nlanguages = en , fr\n\
                    cors_origins = http://a.test, http://b.test\nui_dir = dist\n";
        c.apply(text, Path::new("/etc/tp")).unwrap();
        assert_eq!(c.bind, "0.0.0.0:9000".parse().unwrap());
        assert_eq!(c.store_root, Path::new("/etc/tp/data/store"));
        assert_eq!(c.languages, ["en", "fr"]);
        assert_eq!(c.cors_origins, ["http://a.test", "http://b.test"]);
        assert_eq!(c.ui_dir.as_deref(), Some(Path::new("/etc/tp/dist")));
    }

    #[test]
    fn absolute_paths_stay_absolute() {
        let mut c = ApiConfig::default();
        c.apply("store_root = /var/store", Path::new("/etc")).unwrap();
        assert_eq!(c.store_root, Path::new("/var/store"));
    }

    #[test]
    fn rejects_malformed_files() {
        let base = Path::new(".");
        for (text, line) in [("bind 1", 1), ("# ok\ncolour = red", 2), ("bind = 1.2.3.4:1\nbind = 1.2.3.4:2", 2)] {
            match ApiConfig::default().apply(text, base) {
                Err(ConfigError::Syntax { line: l, .. }) => assert_eq!(l, line, "{text}"),
                other => panic!("{text}: {other:?}"),
            }
        }
        assert!(matches!(
            ApiConfig::default().apply("bind = nowhere", base),
            Err(ConfigError::BadValue { .. })
        ));
        assert!(matches!(
            ApiConfig::default().apply("languages = ,", base),
            Err(ConfigError::BadValue { .. })
        ));
    }
}
