use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use radioplan::agent::BackendConfig;
use radioplan::geodata::{FixtureTransport, HttpTransport, MapTransport};
use serde::{Deserialize, Serialize};

use crate::ServiceError;

pub const BIND_ENV: &str = "RADIOPLAN_BIND";
pub const PROJECT_ROOT_ENV: &str = "RADIOPLAN_PROJECT_ROOT";
pub const WORKERS_ENV: &str = "RADIOPLAN_WORKERS";

/// Where `import_osm` gets map data.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "snake_case")]
pub enum OsmSource {
    /// `.osm` files on disk, each answering requests inside its bounds.
    Fixtures { dir: PathBuf },
    /// The OSM v0.6 API.
    Http {
        #[serde(default = "default_osm_url")]
        base_url: String,
        #[serde(default = "default_timeout")]
        timeout_secs: u64,
    },
}

fn default_osm_url() -> String {
    HttpTransport::default().base_url
}

fn default_timeout() -> u64 {
    60
}

impl Default for OsmSource {
    fn default() -> Self {
        Self::Http { base_url: default_osm_url(), timeout_secs: default_timeout() }
    }
}

impl OsmSource {
    pub fn transport(&self) -> Result<Arc<dyn MapTransport>, ServiceError> {
        Ok(match self {
            Self::Fixtures { dir } => Arc::new(
                FixtureTransport::from_dir(dir)
                    .map_err(|e| ServiceError::Config(format!("OSM fixtures {}: {e}", dir.display())))?,
            ),
            Self::Http { base_url, timeout_secs } => {
                Arc::new(HttpTransport { base_url: base_url.clone(), timeout: Duration::from_secs(*timeout_secs) })
            }
        })
    }
}

/// Service configuration file.
///
/// ```json
/// {
///   "bind": "127.0.0.1:8080",
///   "project_root": "project",
///   "workers": 4,
///   "backend": {"kind": "mock", "fixtures": "crates/core/fixtures/mock/scripted_session.json"},
///   "osm": {"source": "fixtures", "dir": "crates/core/fixtures/osm"},
///   "default_area": "HITSZ"
/// }
/// ```
///
/// Relative paths resolve against the directory holding the file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ServiceConfig {
    pub bind: String,
    pub project_root: PathBuf,
    /// Sessions allowed to run a turn at the same time.
    pub workers: usize,
    /// Backend for sessions created without one.
    pub backend: Option<BackendConfig>,
    pub osm: OsmSource,
    pub default_area: Option<String>,
}

impl Default for ServiceConfig {
    fn default() -> Self {
        Self {
            bind: "127.0.0.1:8080".into(),
            project_root: PathBuf::from("radioplan-project"),
            workers: 4,
            backend: None,
            osm: OsmSource::default(),
            default_area: None,
        }
    }
}

impl ServiceConfig {
    pub fn load(path: &Path) -> Result<Self, ServiceError> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        let mut config: Self =
            serde_json::from_str(&text).map_err(|e| ServiceError::Config(format!("{}: {e}", path.display())))?;
        if let Some(base) = path.parent() {
            config.rebase(base);
        }
        Ok(config)
    }

    fn rebase(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        fix(&mut self.project_root);
        if let OsmSource::Fixtures { dir } = &mut self.osm {
            fix(dir);
        }
        if let Some(BackendConfig::Mock { fixtures }) = &mut self.backend {
            fix(fixtures);
        }
    }

    /// Applies environment overrides, which take precedence over the file.
    pub fn with_env(mut self, env: impl Fn(&str) -> Option<String>) -> Result<Self, ServiceError> {
        if let Some(bind) = env(BIND_ENV) {
            self.bind = bind;
        }
        if let Some(root) = env(PROJECT_ROOT_ENV) {
            self.project_root = root.into();
        }
        if let Some(w) = env(WORKERS_ENV) {
            self.workers = w.parse().map_err(|_| ServiceError::Config(format!("{WORKERS_ENV}={w} is not a count")))?;
        }
        if self.workers == 0 {
            return Err(ServiceError::Config("workers must be at least 1".into()));
        }
        Ok(self)
    }
}
