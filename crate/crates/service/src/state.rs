use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::io::Write;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex, MutexGuard};

use radioplan::agent::{
    model_backend, AgentEvent, AgentSession, BackendConfig, EventKind, ModelBackend, SessionOptions, TaskStatus,
    ToolEnv, UnavailableBackend,
};
use radioplan::project::{ArtifactId, ArtifactRef, ProjectDir, SessionId, SESSION_FILE};
use serde::{Deserialize, Serialize};
use tokio::sync::{watch, Semaphore};

use crate::config::ServiceConfig;
use crate::ServiceError;

/// Service-owned files inside a session directory.
const EVENTS_FILE: &str = "events.jsonl";
const BACKEND_FILE: &str = "backend.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Queued,
    Running,
    Succeeded,
    Failed,
}

impl JobState {
    fn is_terminal(self) -> bool {
        matches!(self, Self::Succeeded | Self::Failed)
    }
}

/// Lifecycle of one task, folded from the event stream.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct JobRecord {
    pub id: u64,
    pub session: SessionId,
    pub turn: u64,
    pub task: String,
    pub state: JobState,
    pub percent: f64,
    pub log: Vec<String>,
    pub error: Option<String>,
    pub artifacts: Vec<ArtifactId>,
}

impl JobRecord {
    /// Applies one event. Percent never decreases and terminal states stick.
    fn apply(&mut self, kind: &EventKind) {
        if self.state.is_terminal() {
            return;
        }
        match kind {
            EventKind::TaskStarted { .. } => self.state = JobState::Running,
            EventKind::TaskProgress { percent, .. } => self.percent = self.percent.max(percent.clamp(0.0, 100.0)),
            EventKind::TaskFinished { status, error, log, artifacts, .. } => {
                self.state = if *status == TaskStatus::Succeeded { JobState::Succeeded } else { JobState::Failed };
                if self.state == JobState::Succeeded {
                    self.percent = 100.0;
                }
                self.error = error.clone();
                self.log = log.clone();
                self.artifacts = artifacts.iter().map(|a| a.id.clone()).collect();
            }
            _ => {}
        }
    }
}

/// Everything clients read about a session without touching the agent.
#[derive(Debug, Default)]
pub struct Feed {
    pub events: Vec<AgentEvent>,
    pub jobs: BTreeMap<u64, JobRecord>,
    pub artifacts: Vec<ArtifactRef>,
}

impl Feed {
    fn absorb(&mut self, event: &AgentEvent) {
        match &event.kind {
            EventKind::TaskQueued { task, tool } => {
                self.jobs.insert(
                    *task,
                    JobRecord {
                        id: *task,
                        session: event.session.clone(),
                        turn: event.turn,
                        task: tool.clone(),
                        state: JobState::Queued,
                        percent: 0.0,
                        log: Vec::new(),
                        error: None,
                        artifacts: Vec::new(),
                    },
                );
            }
            EventKind::TaskStarted { task, .. } | EventKind::TaskProgress { task, .. } => {
                if let Some(j) = self.jobs.get_mut(task) {
                    j.apply(&event.kind);
                }
            }
            EventKind::TaskFinished { task, artifacts, .. } => {
                if let Some(j) = self.jobs.get_mut(task) {
                    j.apply(&event.kind);
                }
                for a in artifacts {
                    if !self.artifacts.iter().any(|b| b.id == a.id) {
                        self.artifacts.push(a.clone());
                    }
                }
            }
            _ => {}
        }
        self.events.push(event.clone());
    }

    pub fn last_seq(&self) -> u64 {
        self.events.last().map_or(0, |e| e.seq)
    }

    /// Events strictly after `since`, in order.
    pub fn since(&self, since: u64) -> &[AgentEvent] {
        let k = self.events.partition_point(|e| e.seq <= since);
        &self.events[k..]
    }
}

/// A loaded session plus its client-facing state.
pub struct Slot {
    pub id: SessionId,
    pub agent: Mutex<AgentSession>,
    pub busy: AtomicBool,
    pub feed: Mutex<Feed>,
    pub seq: watch::Sender<u64>,
    pub degraded: bool,
    pub backend: &'static str,
    pub default_area: Option<String>,
}

pub fn lock<T>(m: &Mutex<T>) -> MutexGuard<'_, T> {
    m.lock().unwrap_or_else(|e| e.into_inner())
}

impl Slot {
    fn new(agent: AgentSession, events_path: PathBuf) -> Arc<Self> {
        let mut feed = Feed::default();
        for a in agent.artifacts() {
            feed.artifacts.push(a);
        }
        let text = fs::read_to_string(&events_path).unwrap_or_default();
        for line in text.lines() {
            match serde_json::from_str::<AgentEvent>(line) {
                Ok(e) if e.seq > feed.last_seq() => feed.absorb(&e),
                _ => log::warn!("{}: skipping unreadable event line", events_path.display()),
            }
        }
        let last = feed.last_seq();
        let (seq, _) = watch::channel(last);
        let slot = Arc::new(Self {
            id: agent.id().clone(),
            degraded: agent.is_degraded(),
            backend: agent.backend_kind(),
            default_area: agent.options().default_area.clone(),
            busy: AtomicBool::new(false),
            feed: Mutex::new(feed),
            seq,
            agent: Mutex::new(agent),
        });
        let weak = Arc::downgrade(&slot);
        let mut agent = lock(&slot.agent);
        agent.resume_events_after(last);
        agent.set_event_sink(Box::new(move |event| {
            if let Some(slot) = weak.upgrade() {
                slot.publish(event, &events_path);
            }
        }));
        drop(agent);
        slot
    }

    /// Records an event: disk first, then the in-memory feed, then wakes
    /// pollers. The busy flag drops before the final event of a turn becomes
    /// visible, so a client reacting to it can submit at once.
    fn publish(&self, event: &AgentEvent, events_path: &PathBuf) {
        let line = serde_json::to_string(event).expect("event serializes");
        let written = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(events_path)
            .and_then(|mut f| writeln!(f, "{line}"));
        if let Err(e) = written {
            log::error!("{}: {e}", events_path.display());
        }
        if matches!(event.kind, EventKind::TurnFinished { .. }) {
            self.busy.store(false, Ordering::SeqCst);
        }
        lock(&self.feed).absorb(event);
        self.seq.send_replace(event.seq);
    }

    pub fn try_begin_turn(&self) -> bool {
        self.busy.compare_exchange(false, true, Ordering::SeqCst, Ordering::SeqCst).is_ok()
    }
}

pub struct Inner {
    pub config: ServiceConfig,
    pub project: ProjectDir,
    pub tools: Arc<ToolEnv>,
    pub pool: Arc<Semaphore>,
    sessions: Mutex<HashMap<SessionId, Arc<Slot>>>,
    create: Mutex<()>,
}

/// Shared service state.
#[derive(Clone)]
pub struct AppState(pub Arc<Inner>);

/// Backend description persisted with a session; keys stay out of it.
fn redacted(config: &BackendConfig) -> BackendConfig {
    match config {
        BackendConfig::Remote { endpoint, model, timeout_secs, .. } => BackendConfig::Remote {
            endpoint: endpoint.clone(),
            model: model.clone(),
            api_key: None,
            timeout_secs: *timeout_secs,
        },
        other => other.clone(),
    }
}

impl AppState {
    /// Opens the project directory; an unwritable root is a fatal error.
    pub fn new(config: ServiceConfig) -> Result<Self, ServiceError> {
        let project = ProjectDir::open(&config.project_root)?;
        let tools = Arc::new(ToolEnv::new(config.osm.transport()?));
        let pool = Arc::new(Semaphore::new(config.workers));
        Ok(Self(Arc::new(Inner {
            config,
            project,
            tools,
            pool,
            sessions: Mutex::new(HashMap::new()),
            create: Mutex::new(()),
        })))
    }

    pub fn session_ids(&self) -> Result<Vec<SessionId>, ServiceError> {
        Ok(self.0.project.list_sessions()?)
    }

    /// Creates a session with `backend` (or the configured default).
    pub fn create_session(
        &self,
        backend: Option<BackendConfig>,
        mut options: SessionOptions,
    ) -> Result<Arc<Slot>, ServiceError> {
        let backend_config = backend
            .or_else(|| self.0.config.backend.clone())
            .ok_or_else(|| ServiceError::BadRequest("no backend given and none configured".into()))?;
        let backend = model_backend(&backend_config).map_err(|e| ServiceError::BadRequest(e.to_string()))?;
        if options.default_area.is_none() {
            options.default_area = self.0.config.default_area.clone();
        }
        let _guard = lock(&self.0.create);
        let id = self.0.project.next_session_id()?;
        let agent = AgentSession::create(self.0.project.clone(), id.clone(), backend, Arc::clone(&self.0.tools), options)
            .map_err(|e| match e {
                radioplan::agent::AgentError::Profile(m) => ServiceError::BadRequest(format!("invalid profile: {m}")),
                other => ServiceError::Agent(other),
            })?;
        let dir = self.0.project.session_dir(&id);
        let stored = serde_json::to_vec_pretty(&redacted(&backend_config)).expect("config serializes");
        radioplan::geodata::write_atomic(&dir.join(BACKEND_FILE), &stored).map_err(radioplan::project::ProjectError::Io)?;
        let slot = Slot::new(agent, dir.join(EVENTS_FILE));
        lock(&self.0.sessions).insert(id, Arc::clone(&slot));
        Ok(slot)
    }

    fn backend_for(&self, id: &SessionId) -> Box<dyn ModelBackend> {
        let path = self.0.project.session_dir(id).join(BACKEND_FILE);
        let config = fs::read_to_string(&path)
            .ok()
            .and_then(|t| serde_json::from_str::<BackendConfig>(&t).ok())
            .or_else(|| self.0.config.backend.clone());
        match config.map(|c| model_backend(&c)) {
            Some(Ok(b)) => b,
            Some(Err(e)) => Box::new(UnavailableBackend { reason: e.to_string() }),
            None => Box::new(UnavailableBackend { reason: "no backend configured".into() }),
        }
    }

    /// The loaded session, loading it from disk on first use.
    pub fn slot(&self, raw_id: &str) -> Result<Arc<Slot>, ServiceError> {
        let id = SessionId::parse(raw_id).map_err(|_| ServiceError::NotFound(format!("session {raw_id}")))?;
        let mut sessions = lock(&self.0.sessions);
        if let Some(s) = sessions.get(&id) {
            return Ok(Arc::clone(s));
        }
        let dir = self.0.project.session_dir(&id);
        if !dir.join(SESSION_FILE).is_file() {
            return Err(ServiceError::NotFound(format!("session {raw_id}")));
        }
        let agent = AgentSession::open(self.0.project.clone(), id.clone(), self.backend_for(&id), Arc::clone(&self.0.tools))?;
        let slot = Slot::new(agent, dir.join(EVENTS_FILE));
        sessions.insert(id, Arc::clone(&slot));
        Ok(slot)
    }
}
