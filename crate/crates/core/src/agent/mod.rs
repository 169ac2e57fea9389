//! Prompt-driven orchestration of the planning tools.
//!
//! A session sends the profile, tool catalogue, memory summary and user
//! prompt to a [`ModelBackend`], extracts `TOOL <name> ARGS <json>` calls,
//! expands them into a dependency-ordered task list that skips work already
//! recorded in memory, and executes the remaining tasks.

pub mod backend;
pub mod exec;
pub mod gazetteer;
pub mod memory;
pub mod parse;
pub mod planning;
pub mod profile;
pub mod registry;
pub mod session;

pub use backend::{model_backend, BackendConfig, BackendError, MockBackend, ModelBackend, UnavailableBackend};
pub use exec::{ToolEnv, ToolError};
pub use gazetteer::Gazetteer;
pub use memory::{Memory, TaskRecord, TaskStatus};
pub use parse::{parse_tool_calls, ParseError, ToolCall};
pub use planning::{plan_tasks, PlanDefaults, TaskPlan};
pub use profile::{default_profile, Profile};
pub use registry::Registry;
pub use session::{AgentError, AgentEvent, AgentResponse, AgentSession, EventKind, EventSink, Outcome, SessionOptions, TaskReport};
