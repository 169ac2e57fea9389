//! On-disk project layout and artifact references.
//!
//! ```text
//! <root>/cache/osm/<bbox-hash>.osm
//! <root>/scenes/<session>/<artifact>.json
//! <root>/plans/<session>/<artifact>.json
//! <root>/artifacts/<session>/<artifact>.<ext>
//! <root>/sessions/<session>/{session.json, transcript.jsonl}
//! ```
//!
//! Artifact paths are stored relative to the root so a project directory can
//! be moved.

use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::geodata::{write_atomic, OsmCache};

#[derive(Debug, Error)]
pub enum ProjectError {
    #[error("project directory {path} is not writable: {message}")]
    Unwritable { path: PathBuf, message: String },
    #[error("invalid session id {0:?}")]
    BadSessionId(String),
    #[error("I/O error: {0}")]
    Io(#[from] std::io::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArtifactKind {
    Osm,
    Scene,
    RadioMapJson,
    RadioMapPng,
    SinrMapJson,
    SinrMapPng,
    PlanJson,
    ReportJson,
}

impl ArtifactKind {
    pub fn content_type(self) -> &'static str {
        match self {
            Self::Osm => "application/xml",
            Self::RadioMapPng | Self::SinrMapPng => "image/png",
            _ => "application/json",
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Self::Osm => "osm",
            Self::RadioMapPng | Self::SinrMapPng => "png",
            _ => "json",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ArtifactId(pub String);

impl ArtifactId {
    pub fn numbered(n: u64) -> Self {
        Self(format!("a{n:04}"))
    }
}

impl fmt::Display for ArtifactId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

/// A file produced by a tool.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ArtifactRef {
    pub id: ArtifactId,
    pub kind: ArtifactKind,
    /// Relative to the project root, `/`-separated.
    pub path: String,
    /// Sequence number of the last session event before creation. A logical
    /// clock keeps replayed sessions byte-identical.
    pub created_at: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(String);

impl SessionId {
    /// Accepts 1–64 characters from `[A-Za-z0-9_-]`.
    pub fn parse(s: &str) -> Result<Self, ProjectError> {
        let ok = !s.is_empty() && s.len() <= 64 && s.chars().all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-');
        if ok {
            Ok(Self(s.to_string()))
        } else {
            Err(ProjectError::BadSessionId(s.to_string()))
        }
    }

    pub fn numbered(n: u64) -> Self {
        Self(format!("s{n:04}"))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for SessionId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

pub const TRANSCRIPT_FILE: &str = "transcript.jsonl";
pub const SESSION_FILE: &str = "session.json";

#[derive(Debug, Clone)]
pub struct ProjectDir {
    root: PathBuf,
}

impl ProjectDir {
    /// Opens `root`, creating the standard subdirectories.
    pub fn open(root: impl Into<PathBuf>) -> Result<Self, ProjectError> {
        let root = root.into();
        let unwritable = |e: std::io::Error| ProjectError::Unwritable { path: root.clone(), message: e.to_string() };
        for sub in ["cache/osm", "scenes", "plans", "sessions", "artifacts"] {
            fs::create_dir_all(root.join(sub)).map_err(unwritable)?;
        }
        let probe = root.join(".write-probe");
        write_atomic(&probe, b"ok").map_err(unwritable)?;
        fs::remove_file(&probe).map_err(unwritable)?;
        Ok(Self { root })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn osm_cache(&self) -> OsmCache {
        OsmCache::new(self.root.join("cache/osm"))
    }

    pub fn sessions_dir(&self) -> PathBuf {
        self.root.join("sessions")
    }

    pub fn session_dir(&self, id: &SessionId) -> PathBuf {
        self.sessions_dir().join(id.as_str())
    }

    /// Relative path for a new artifact of `kind`.
    pub fn artifact_rel_path(&self, session: &SessionId, id: &ArtifactId, kind: ArtifactKind) -> String {
        let dir = match kind {
            ArtifactKind::Scene => "scenes",
            ArtifactKind::PlanJson => "plans",
            _ => "artifacts",
        };
        format!("{dir}/{session}/{id}.{}", kind.extension())
    }

    pub fn resolve(&self, rel: &str) -> PathBuf {
        self.root.join(rel)
    }

    /// Writes an artifact atomically and returns its reference.
    pub fn write_artifact(
        &self,
        session: &SessionId,
        id: ArtifactId,
        kind: ArtifactKind,
        bytes: &[u8],
        created_at: u64,
    ) -> Result<ArtifactRef, ProjectError> {
        let path = self.artifact_rel_path(session, &id, kind);
        let abs = self.resolve(&path);
        if let Some(parent) = abs.parent() {
            fs::create_dir_all(parent)?;
        }
        write_atomic(&abs, bytes)?;
        Ok(ArtifactRef { id, kind, path, created_at })
    }

    /// Session ids with a directory under `sessions/`, sorted.
    pub fn list_sessions(&self) -> Result<Vec<SessionId>, ProjectError> {
        let mut ids: Vec<SessionId> = fs::read_dir(self.sessions_dir())?
            .filter_map(|e| e.ok())
            .filter(|e| e.path().is_dir())
            .filter_map(|e| e.file_name().to_str().and_then(|s| SessionId::parse(s).ok()))
            .collect();
        ids.sort();
        Ok(ids)
    }

    /// First `sNNNN` id not yet on disk.
    pub fn next_session_id(&self) -> Result<SessionId, ProjectError> {
        let existing = self.list_sessions()?;
        let n = (1..).find(|n| !existing.contains(&SessionId::numbered(*n))).expect("unbounded range");
        Ok(SessionId::numbered(n))
    }
}
