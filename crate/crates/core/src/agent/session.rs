use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use super::backend::{BackendError, ModelBackend, PROMPT_MARKER};
use super::exec::{execute, Call, ToolEnv};
use super::memory::{Memory, TaskRecord, TaskStatus};
use super::parse::{parse_tool_calls, ParseError};
use super::planning::{plan_tasks, PlanDefaults, TaskInput};
use super::profile::{default_profile, Profile};
use super::registry::Registry;
use crate::project::{ArtifactId, ArtifactRef, ProjectDir, ProjectError, SessionId, SESSION_FILE, TRANSCRIPT_FILE};

#[derive(Debug, Error)]
pub enum AgentError {
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error(transparent)]
    Project(#[from] ProjectError),
    #[error("session {0} does not exist")]
    NoSuchSession(String),
    #[error("session {0} already exists")]
    SessionExists(String),
    #[error("session metadata is unreadable: {0}")]
    Metadata(String),
    #[error("invalid profile: {0}")]
    Profile(String),
}

impl From<std::io::Error> for AgentError {
    fn from(e: std::io::Error) -> Self {
        Self::Project(ProjectError::Io(e))
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct SessionOptions {
    /// Area imported when a request needs a map and none has been loaded.
    pub default_area: Option<String>,
    /// Replaces the default profile.
    pub profile: Option<Profile>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct SessionMeta {
    id: SessionId,
    backend: String,
    #[serde(default)]
    options: SessionOptions,
}

/// Callback receiving session events.
pub type EventSink = Box<dyn FnMut(&AgentEvent) + Send>;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    TurnStarted { prompt: String },
    TaskQueued { task: u64, tool: String },
    TurnPlanned { tasks: Vec<u64>, reused: Vec<u64> },
    TaskStarted { task: u64, tool: String },
    TaskProgress { task: u64, percent: f64 },
    TaskFinished {
        task: u64,
        tool: String,
        status: TaskStatus,
        error: Option<String>,
        log: Vec<String>,
        artifacts: Vec<ArtifactRef>,
    },
    TurnFinished { outcome: Outcome, message: String },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentEvent {
    pub session: SessionId,
    pub seq: u64,
    pub turn: u64,
    #[serde(flatten)]
    pub kind: EventKind,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Outcome {
    /// At least one task ran and every task succeeded.
    Completed,
    /// Every requested result was already in memory.
    Reused,
    /// Some task failed; its dependents were aborted.
    Failed,
    /// The model asked for clarification; nothing ran.
    Clarification,
    /// The tool calls were malformed or could not be planned; nothing ran.
    Rejected,
    /// The model backend failed; nothing ran.
    BackendError,
    /// Results could not be persisted.
    Error,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskReport {
    pub id: u64,
    pub tool: String,
    pub args: serde_json::Map<String, Value>,
    pub status: TaskStatus,
    pub error: Option<String>,
    pub log: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AgentResponse {
    pub turn: u64,
    pub outcome: Outcome,
    pub message: String,
    pub tasks: Vec<TaskReport>,
    /// Records that satisfied requested calls without re-running.
    pub reused: Vec<u64>,
    /// Artifacts written during this turn.
    pub artifacts: Vec<ArtifactRef>,
    /// Artifacts of reused records.
    pub cited: Vec<ArtifactRef>,
}

/// One conversation: profile, memory, backend and persisted transcript.
pub struct AgentSession {
    id: SessionId,
    profile: Profile,
    registry: Registry,
    memory: Memory,
    backend: Box<dyn ModelBackend>,
    project: ProjectDir,
    tools: Arc<ToolEnv>,
    options: SessionOptions,
    sink: Option<EventSink>,
    seq: u64,
    turn: u64,
    next_artifact: u64,
    degraded: bool,
    invocations: BTreeMap<String, usize>,
    pending: Vec<u64>,
}

impl AgentSession {
    /// Starts a new, empty session and writes its metadata.
    pub fn create(
        project: ProjectDir,
        id: SessionId,
        backend: Box<dyn ModelBackend>,
        tools: Arc<ToolEnv>,
        options: SessionOptions,
    ) -> Result<Self, AgentError> {
        if let Some(p) = &options.profile {
            p.validate(&Registry::standard()).map_err(AgentError::Profile)?;
        }
        let dir = project.session_dir(&id);
        if dir.join(SESSION_FILE).exists() {
            return Err(AgentError::SessionExists(id.to_string()));
        }
        fs::create_dir_all(&dir)?;
        let meta = SessionMeta { id: id.clone(), backend: backend.kind().into(), options: options.clone() };
        crate::geodata::write_atomic(&dir.join(SESSION_FILE), &serde_json::to_vec_pretty(&meta).expect("meta"))?;
        fs::File::create(dir.join(TRANSCRIPT_FILE))?;
        Self::assemble(project, id, backend, tools, options, Vec::new(), false)
    }

    /// Reloads a session from disk. Unparseable transcript lines are skipped
    /// and the session is flagged as degraded.
    pub fn open(
        project: ProjectDir,
        id: SessionId,
        backend: Box<dyn ModelBackend>,
        tools: Arc<ToolEnv>,
    ) -> Result<Self, AgentError> {
        let dir = project.session_dir(&id);
        let meta_text = fs::read_to_string(dir.join(SESSION_FILE))
            .map_err(|_| AgentError::NoSuchSession(id.to_string()))?;
        let meta: SessionMeta = serde_json::from_str(&meta_text).map_err(|e| AgentError::Metadata(e.to_string()))?;
        let (records, degraded) = read_transcript(&fs::read_to_string(dir.join(TRANSCRIPT_FILE)).unwrap_or_default());
        if degraded {
            log::warn!("session {id}: transcript has unreadable lines; continuing degraded");
        }
        Self::assemble(project, id, backend, tools, meta.options, records, degraded)
    }

    fn assemble(
        project: ProjectDir,
        id: SessionId,
        backend: Box<dyn ModelBackend>,
        tools: Arc<ToolEnv>,
        options: SessionOptions,
        records: Vec<TaskRecord>,
        degraded: bool,
    ) -> Result<Self, AgentError> {
        let registry = Registry::standard();
        let profile = options.profile.clone().unwrap_or_else(default_profile);
        profile.validate(&registry).map_err(AgentError::Profile)?;
        let turn = records.iter().map(|r| r.turn).max().unwrap_or(0);
        let artifacts = records.iter().flat_map(|r| &r.artifacts);
        let next_artifact = artifacts.clone().count() as u64 + 1;
        let seq = artifacts.map(|a| a.created_at).max().unwrap_or(0);
        Ok(Self {
            id,
            profile,
            registry,
            memory: Memory::from_records(records),
            backend,
            project,
            tools,
            options,
            sink: None,
            seq,
            turn,
            next_artifact,
            degraded,
            invocations: BTreeMap::new(),
            pending: Vec::new(),
        })
    }

    pub fn id(&self) -> &SessionId {
        &self.id
    }

    pub fn profile(&self) -> &Profile {
        &self.profile
    }

    pub fn registry(&self) -> &Registry {
        &self.registry
    }

    pub fn memory(&self) -> &Memory {
        &self.memory
    }

    pub fn options(&self) -> &SessionOptions {
        &self.options
    }

    pub fn is_degraded(&self) -> bool {
        self.degraded
    }

    pub fn backend_kind(&self) -> &'static str {
        self.backend.kind()
    }

    /// Tool executions per tool name since this session object was built.
    pub fn invocations(&self) -> &BTreeMap<String, usize> {
        &self.invocations
    }

    /// Task ids queued but not yet finished in the running turn.
    pub fn pending(&self) -> &[u64] {
        &self.pending
    }

    /// Receives every event synchronously, in sequence order.
    pub fn set_event_sink(&mut self, sink: EventSink) {
        self.sink = Some(sink);
    }

    /// Last event sequence number issued.
    pub fn last_seq(&self) -> u64 {
        self.seq
    }

    /// Continues numbering events after `seq` (used when events issued by an
    /// earlier process were persisted elsewhere).
    pub fn resume_events_after(&mut self, seq: u64) {
        self.seq = self.seq.max(seq);
    }

    /// Every artifact produced in this session, oldest first.
    pub fn artifacts(&self) -> Vec<ArtifactRef> {
        self.memory.long_term().iter().flat_map(|r| r.artifacts.iter().cloned()).collect()
    }

    pub fn find_artifact(&self, id: &str) -> Option<ArtifactRef> {
        self.memory.long_term().iter().flat_map(|r| &r.artifacts).find(|a| a.id.0 == id).cloned()
    }

    /// Full text handed to the model for `prompt`.
    pub fn context(&self, prompt: &str) -> String {
        let mut ctx = self.profile.render();
        ctx.push_str("\nAvailable tools:\n");
        for spec in self.registry.specs() {
            let params: Vec<String> = spec
                .params
                .iter()
                .map(|p| match &p.default {
                    Some(d) => format!("{}={d}", p.name),
                    None => p.name.clone(),
                })
                .collect();
            ctx.push_str(&format!("- {}({}): {}\n", spec.name, params.join(", "), spec.description));
        }
        ctx.push_str("\nSession memory:\n");
        ctx.push_str(&self.memory.summary());
        for note in self.memory.short_term() {
            ctx.push_str(note);
            ctx.push('\n');
        }
        ctx.push_str(&format!("\n{PROMPT_MARKER} {prompt}\n"));
        ctx
    }

    fn emit(&mut self, turn: u64, kind: EventKind) -> u64 {
        self.seq += 1;
        if let Some(sink) = &mut self.sink {
            sink(&AgentEvent { session: self.id.clone(), seq: self.seq, turn, kind });
        }
        self.seq
    }

    fn finish(&mut self, turn: u64, outcome: Outcome, message: String) -> AgentResponse {
        self.memory.clear_short_term();
        self.emit(turn, EventKind::TurnFinished { outcome, message: message.clone() });
        AgentResponse { turn, outcome, message, tasks: Vec::new(), reused: Vec::new(), artifacts: Vec::new(), cited: Vec::new() }
    }

    /// Runs one prompt to completion: model call, tool-call parsing, dependency
    /// planning and execution. Only backend and persistence failures are
    /// errors; tool failures are reported in the response.
    ///
    /// Every turn ends with a `turn_finished` event, including failed ones.
    pub fn step(&mut self, prompt: &str) -> Result<AgentResponse, AgentError> {
        let turn = self.turn + 1;
        self.emit(turn, EventKind::TurnStarted { prompt: prompt.to_string() });
        let result = self.run_turn(turn, prompt);
        if let Err(e) = &result {
            let outcome = if matches!(e, AgentError::Backend(_)) { Outcome::BackendError } else { Outcome::Error };
            self.pending.clear();
            self.finish(turn, outcome, e.to_string());
        }
        result
    }

    fn run_turn(&mut self, turn: u64, prompt: &str) -> Result<AgentResponse, AgentError> {
        let context = self.context(prompt);
        let completion = self.backend.complete(&context)?;
        self.memory.note(format!("model: {}", completion.trim()));

        let calls = match parse_tool_calls(&completion, &self.registry) {
            Ok(calls) => calls,
            Err(ParseError::NoToolCall) => {
                let text = completion.trim();
                let message = if text.is_empty() {
                    "Could you say which area to import or which map or plan you need?".to_string()
                } else {
                    text.to_string()
                };
                return Ok(self.finish(turn, Outcome::Clarification, message));
            }
            Err(e) => return Ok(self.finish(turn, Outcome::Rejected, e.to_string())),
        };
        let defaults = PlanDefaults { area: self.options.default_area.clone() };
        let plan = match plan_tasks(&calls, &self.registry, &self.memory, &defaults) {
            Ok(p) => p,
            Err(e) => return Ok(self.finish(turn, Outcome::Rejected, e.to_string())),
        };

        let base = self.memory.long_term().last().map_or(1, |r| r.id + 1);
        let ids: Vec<u64> = (0..plan.tasks.len() as u64).map(|k| base + k).collect();
        for (task, &id) in plan.tasks.iter().zip(&ids) {
            self.emit(turn, EventKind::TaskQueued { task: id, tool: task.tool.clone() });
        }
        self.pending = ids.clone();
        self.emit(turn, EventKind::TurnPlanned { tasks: ids.clone(), reused: plan.reused.clone() });
        if !plan.tasks.is_empty() {
            self.turn = turn;
        }

        let mut reports = Vec::new();
        let mut written = Vec::new();
        for (task, &id) in plan.tasks.iter().zip(&ids) {
            let inputs: Vec<u64> = task
                .inputs
                .iter()
                .map(|i| match *i {
                    TaskInput::Existing(r) => r,
                    TaskInput::Planned(k) => ids[k],
                })
                .collect();
            let blocked = inputs.iter().find(|&&i| self.memory.record(i).is_none_or(|r| !r.succeeded()));
            let mut record = TaskRecord {
                id,
                turn,
                prompt: prompt.to_string(),
                tool: task.tool.clone(),
                args: task.args.clone(),
                inputs: inputs.clone(),
                status: TaskStatus::Succeeded,
                error: None,
                artifacts: Vec::new(),
                result: Value::Null,
                log: Vec::new(),
            };
            if let Some(&b) = blocked {
                record.status = TaskStatus::Aborted;
                record.error = Some(format!("prerequisite task #{b} did not succeed"));
            } else {
                self.emit(turn, EventKind::TaskStarted { task: id, tool: task.tool.clone() });
                *self.invocations.entry(task.tool.clone()).or_default() += 1;
                let outcome = self.run_tool(turn, id, &task.tool, &task.args, &inputs);
                match outcome {
                    Ok(out) => {
                        record.result = out.result;
                        record.log = out.log;
                        for (kind, bytes) in out.files {
                            // Ids lost with an unreadable transcript line must not be reused.
                            while self.project.resolve(&self.project.artifact_rel_path(
                                &self.id,
                                &ArtifactId::numbered(self.next_artifact),
                                kind,
                            )).exists()
                            {
                                self.next_artifact += 1;
                            }
                            let aid = ArtifactId::numbered(self.next_artifact);
                            self.next_artifact += 1;
                            let a = self.project.write_artifact(&self.id, aid, kind, &bytes, self.seq)?;
                            record.artifacts.push(a);
                        }
                        written.extend(record.artifacts.iter().cloned());
                    }
                    Err(e) => {
                        record.status = TaskStatus::Failed;
                        record.error = Some(e.to_string());
                    }
                }
            }
            self.persist(&record)?;
            self.pending.retain(|&p| p != id);
            self.emit(
                turn,
                EventKind::TaskFinished {
                    task: id,
                    tool: record.tool.clone(),
                    status: record.status,
                    error: record.error.clone(),
                    log: record.log.clone(),
                    artifacts: record.artifacts.clone(),
                },
            );
            reports.push(TaskReport {
                id,
                tool: record.tool.clone(),
                args: record.args.clone(),
                status: record.status,
                error: record.error.clone(),
                log: record.log.clone(),
            });
            self.memory.append(record);
        }

        let cited: Vec<ArtifactRef> = plan
            .reused
            .iter()
            .filter_map(|&r| self.memory.record(r))
            .flat_map(|r| r.artifacts.iter().cloned())
            .collect();
        let outcome = if reports.is_empty() {
            Outcome::Reused
        } else if reports.iter().all(|r| r.status == TaskStatus::Succeeded) {
            Outcome::Completed
        } else {
            Outcome::Failed
        };
        let message = summarize(&reports, &plan.reused, &cited);
        let mut response = self.finish(turn, outcome, message);
        response.tasks = reports;
        response.reused = plan.reused;
        response.artifacts = written;
        response.cited = cited;
        Ok(response)
    }

    fn run_tool(
        &mut self,
        turn: u64,
        id: u64,
        tool: &str,
        args: &serde_json::Map<String, Value>,
        inputs: &[u64],
    ) -> Result<super::exec::ToolOutput, super::exec::ToolError> {
        let tools = Arc::clone(&self.tools);
        let project = self.project.clone();
        let memory = std::mem::take(&mut self.memory);
        let mut last = -1.0_f64;
        let result = {
            let call = Call { env: &tools, project: &project, memory: &memory, args, inputs };
            let mut progress = |p: f64| {
                let p = p.clamp(0.0, 100.0);
                if p > last {
                    last = p;
                    self.emit(turn, EventKind::TaskProgress { task: id, percent: p });
                }
            };
            execute(&call, tool, &mut progress)
        };
        self.memory = memory;
        result
    }

    fn persist(&self, record: &TaskRecord) -> Result<(), AgentError> {
        let path = self.project.session_dir(&self.id).join(TRANSCRIPT_FILE);
        let mut f = fs::OpenOptions::new().create(true).append(true).open(path)?;
        let mut line = serde_json::to_string(record).expect("record serializes");
        line.push('\n');
        f.write_all(line.as_bytes())?;
        f.sync_data()?;
        Ok(())
    }
}

/// Parses transcript text, returning the readable records and whether any
/// line was skipped.
pub fn read_transcript(text: &str) -> (Vec<TaskRecord>, bool) {
    let mut records: Vec<TaskRecord> = Vec::new();
    let mut degraded = false;
    for line in text.lines().filter(|l| !l.trim().is_empty()) {
        match serde_json::from_str::<TaskRecord>(line) {
            Ok(r) if records.last().is_none_or(|p| p.id < r.id) => records.push(r),
            _ => degraded = true,
        }
    }
    (records, degraded)
}

fn summarize(reports: &[TaskReport], reused: &[u64], cited: &[ArtifactRef]) -> String {
    let mut lines = Vec::new();
    for r in reports {
        match r.status {
            TaskStatus::Succeeded => {
                let detail = r.log.last().map(|l| format!(": {l}")).unwrap_or_default();
                lines.push(format!("#{} {} done{detail}", r.id, r.tool));
            }
            _ => lines.push(format!(
                "#{} {} {}: {}",
                r.id,
                r.tool,
                if r.status == TaskStatus::Failed { "failed" } else { "aborted" },
                r.error.as_deref().unwrap_or("")
            )),
        }
    }
    if !reused.is_empty() {
        let ids: Vec<String> = reused.iter().map(|r| format!("#{r}")).collect();
        let arts: Vec<&str> = cited.iter().map(|a| a.path.as_str()).collect();
        lines.push(format!("Already available from task {}: {}", ids.join(", "), arts.join(", ")));
    }
    lines.join("\n")
}
