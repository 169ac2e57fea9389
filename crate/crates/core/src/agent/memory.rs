use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::project::ArtifactRef;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskStatus {
    Succeeded,
    Failed,
    /// Skipped because a prerequisite in the same turn failed.
    Aborted,
}

/// Long-term memory entry for one task.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TaskRecord {
    pub id: u64,
    pub turn: u64,
    pub prompt: String,
    pub tool: String,
    pub args: Map<String, Value>,
    /// Records whose outputs this task consumed, one per dependency.
    pub inputs: Vec<u64>,
    pub status: TaskStatus,
    pub error: Option<String>,
    pub artifacts: Vec<ArtifactRef>,
    pub result: Value,
    pub log: Vec<String>,
}

impl TaskRecord {
    pub fn succeeded(&self) -> bool {
        self.status == TaskStatus::Succeeded
    }
}

/// Short-term scratch for the running turn and the append-only transcript.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Memory {
    short_term: Vec<String>,
    long_term: Vec<TaskRecord>,
}

impl Memory {
    pub fn from_records(long_term: Vec<TaskRecord>) -> Self {
        Self { short_term: Vec::new(), long_term }
    }

    pub fn short_term(&self) -> &[String] {
        &self.short_term
    }

    pub fn long_term(&self) -> &[TaskRecord] {
        &self.long_term
    }

    pub fn note(&mut self, entry: impl Into<String>) {
        self.short_term.push(entry.into());
    }

    pub fn clear_short_term(&mut self) {
        self.short_term.clear();
    }

    pub fn append(&mut self, record: TaskRecord) {
        debug_assert!(self.long_term.last().is_none_or(|r| r.id < record.id));
        self.long_term.push(record);
    }

    pub fn record(&self, id: u64) -> Option<&TaskRecord> {
        self.long_term.binary_search_by_key(&id, |r| r.id).ok().map(|k| &self.long_term[k])
    }

    /// Latest successful record of `tool`.
    pub fn latest(&self, tool: &str) -> Option<&TaskRecord> {
        self.long_term.iter().rev().find(|r| r.tool == tool && r.succeeded())
    }

    /// Latest successful record with this tool, arguments and inputs.
    pub fn find(&self, tool: &str, args: &Map<String, Value>, inputs: &[u64]) -> Option<&TaskRecord> {
        self.long_term.iter().rev().find(|r| r.succeeded() && r.tool == tool && &r.args == args && r.inputs == inputs)
    }

    /// Nearest upstream successful record of `tool`, following `inputs` from `start`.
    pub fn upstream(&self, start: u64, tool: &str) -> Option<&TaskRecord> {
        let mut queue = std::collections::VecDeque::from([start]);
        let mut seen = std::collections::BTreeSet::new();
        while let Some(id) = queue.pop_front() {
            if !seen.insert(id) {
                continue;
            }
            let r = self.record(id)?;
            if r.tool == tool && r.succeeded() {
                return Some(r);
            }
            queue.extend(r.inputs.iter().copied());
        }
        None
    }

    /// One line per record, for the model context.
    pub fn summary(&self) -> String {
        if self.long_term.is_empty() {
            return "(no tasks yet)\n".into();
        }
        let mut s = String::new();
        for r in &self.long_term {
            let args = serde_json::to_string(&r.args).unwrap_or_default();
            let ids: Vec<&str> = r.artifacts.iter().map(|a| a.id.0.as_str()).collect();
            s.push_str(&format!("#{} {} {} -> {:?} [{}]\n", r.id, r.tool, args, r.status, ids.join(", ")));
        }
        s
    }
}
