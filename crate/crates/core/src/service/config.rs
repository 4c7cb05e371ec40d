use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Service settings from a TOML file, overridden by `ANNOTKIT_*` variables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub host: String,
    pub port: u16,
    /// `POST /sessions` resolves video paths below this directory.
    pub dataset_root: PathBuf,
    /// Default backend for new sessions: `reference` or `external`.
    pub backend: String,
    /// Adapter socket; when set, the `external` backend is available.
    pub adapter_socket: Option<PathBuf>,
    pub adapter_timeout_ms: u64,
    /// When set, sessions are saved here after every change and reloaded on start.
    pub session_dir: Option<PathBuf>,
    /// Export target; each session writes to `<export_root>/<session_id>/`.
    pub export_root: PathBuf,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            host: "127.0.0.1".into(),
            port: 8080,
            dataset_root: PathBuf::from("data"),
            backend: "reference".into(),
            adapter_socket: None,
            adapter_timeout_ms: 30_000,
            session_dir: None,
            export_root: PathBuf::from("exports"),
        }
    }
}

pub const ENV_PORT: &str = "ANNOTKIT_PORT";
pub const ENV_DATASET_ROOT: &str = "ANNOTKIT_DATASET_ROOT";
pub const ENV_BACKEND: &str = "ANNOTKIT_BACKEND";
pub const ENV_ADAPTER_SOCKET: &str = "ANNOTKIT_ADAPTER_SOCKET";
pub const ENV_SESSION_DIR: &str = "ANNOTKIT_SESSION_DIR";
pub const ENV_EXPORT_ROOT: &str = "ANNOTKIT_EXPORT_ROOT";

impl ServiceConfig {
    pub fn from_toml(text: &str, origin: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| {
            let line = e.span().map_or(0, |s| text[..s.start].lines().count().max(1));
            Error::parse(origin, line, e.message().to_string())
        })
    }

    /// Reads `path` if given (defaults otherwise), then applies the process environment.
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let mut cfg = match path {
            Some(p) => {
                let text = std::fs::read_to_string(p).map_err(|e| Error::io(p, e))?;
                Self::from_toml(&text, &p.display().to_string())?
            }
            None => Self::default(),
        };
        cfg.apply_env(|k| std::env::var(k).ok())?;
        Ok(cfg)
    }

    pub fn apply_env(&mut self, lookup: impl Fn(&str) -> Option<String>) -> Result<()> {
        if let Some(p) = lookup(ENV_PORT) {
            self.port = p
                .parse()
                .map_err(|_| Error::validation("invalid_config", format!("{ENV_PORT}={p:?} is not a port")))?;
        }
        if let Some(v) = lookup(ENV_DATASET_ROOT) {
            self.dataset_root = v.into();
        }
        if let Some(v) = lookup(ENV_BACKEND) {
            self.backend = v;
        }
        if let Some(v) = lookup(ENV_ADAPTER_SOCKET) {
            self.adapter_socket = Some(v.into());
        }
        if let Some(v) = lookup(ENV_SESSION_DIR) {
            self.session_dir = Some(v.into());
        }
        if let Some(v) = lookup(ENV_EXPORT_ROOT) {
            self.export_root = v.into();
        }
        Ok(())
    }
}
