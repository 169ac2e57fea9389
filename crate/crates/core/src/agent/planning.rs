use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::memory::Memory;
use super::parse::ToolCall;
use super::registry::{Registry, IMPORT_OSM};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PlanError {
    #[error("dependency cycle through {0}")]
    Cycle(String),
    #[error("tool {0} is not registered")]
    UnknownTool(String),
    #[error("{tool} needs arguments that cannot be inferred: {message}")]
    MissingArguments { tool: String, message: String },
}

/// Where a task's prerequisite comes from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TaskInput {
    /// A successful record already in long-term memory.
    Existing(u64),
    /// An earlier task of the same plan, by index.
    Planned(usize),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlannedTask {
    pub tool: String,
    pub args: Map<String, Value>,
    pub inputs: Vec<TaskInput>,
    /// Requested by the model rather than added as a prerequisite.
    pub explicit: bool,
}

/// Ordered tasks to run plus the records that satisfied requested calls outright.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct TaskPlan {
    pub tasks: Vec<PlannedTask>,
    pub reused: Vec<u64>,
}

impl TaskPlan {
    pub fn tools(&self) -> Vec<&str> {
        self.tasks.iter().map(|t| t.tool.as_str()).collect()
    }
}

/// Context for filling arguments of prerequisites nobody asked for.
#[derive(Debug, Clone, Default)]
pub struct PlanDefaults {
    /// Area imported when a pipeline starts from scratch.
    pub area: Option<String>,
}

struct Planner<'a> {
    registry: &'a Registry,
    memory: &'a Memory,
    defaults: &'a PlanDefaults,
    plan: TaskPlan,
    depth: usize,
}

const MAX_DEPTH: usize = 64;

/// Expands `calls` against tool dependencies into a topologically ordered
/// task list, skipping any task whose result with identical arguments and
/// identical (current) inputs is already in `memory`.
pub fn plan_tasks(
    calls: &[ToolCall],
    registry: &Registry,
    memory: &Memory,
    defaults: &PlanDefaults,
) -> Result<TaskPlan, PlanError> {
    let mut p = Planner { registry, memory, defaults, plan: TaskPlan::default(), depth: 0 };
    for call in calls {
        match p.ensure(&call.name, &call.args, true)? {
            TaskInput::Existing(id) => {
                if !p.plan.reused.contains(&id) {
                    p.plan.reused.push(id);
                }
            }
            TaskInput::Planned(k) => p.plan.tasks[k].explicit = true,
        }
    }
    Ok(p.plan)
}

impl Planner<'_> {
    fn ensure(&mut self, tool: &str, args: &Map<String, Value>, explicit: bool) -> Result<TaskInput, PlanError> {
        self.depth += 1;
        if self.depth > MAX_DEPTH {
            return Err(PlanError::Cycle(tool.to_string()));
        }
        let spec = self.registry.get(tool).ok_or_else(|| PlanError::UnknownTool(tool.to_string()))?;
        let mut inputs = Vec::new();
        for dep in spec.dependencies_for(args) {
            let input = match &dep.args {
                Some(fixed) => {
                    let dep_spec =
                        self.registry.get(&dep.tool).ok_or_else(|| PlanError::UnknownTool(dep.tool.clone()))?;
                    let canonical = dep_spec
                        .canonical_args(fixed)
                        .map_err(|message| PlanError::MissingArguments { tool: dep.tool.clone(), message })?;
                    self.ensure(&dep.tool, &canonical, false)?
                }
                None => self.ensure_any(&dep.tool)?,
            };
            inputs.push(input);
        }
        self.depth -= 1;

        if let Some(k) = self.plan.tasks.iter().position(|t| t.tool == tool && &t.args == args && t.inputs == inputs) {
            return Ok(TaskInput::Planned(k));
        }
        if let Some(ids) = existing_ids(&inputs) {
            if let Some(r) = self.memory.find(tool, args, &ids) {
                return Ok(TaskInput::Existing(r.id));
            }
        }
        self.plan.tasks.push(PlannedTask { tool: tool.to_string(), args: args.clone(), inputs, explicit });
        Ok(TaskInput::Planned(self.plan.tasks.len() - 1))
    }

    /// Resolves a dependency that accepts any arguments: this plan's latest
    /// task of that tool, else memory's latest run, else default arguments.
    fn ensure_any(&mut self, tool: &str) -> Result<TaskInput, PlanError> {
        if let Some(k) = self.plan.tasks.iter().rposition(|t| t.tool == tool) {
            return Ok(TaskInput::Planned(k));
        }
        let args = match self.memory.latest(tool) {
            Some(r) => r.args.clone(),
            None => self.default_args(tool)?,
        };
        self.ensure(tool, &args, false)
    }

    fn default_args(&self, tool: &str) -> Result<Map<String, Value>, PlanError> {
        let spec = self.registry.get(tool).ok_or_else(|| PlanError::UnknownTool(tool.to_string()))?;
        let mut given = Map::new();
        if tool == IMPORT_OSM {
            match &self.defaults.area {
                Some(area) => {
                    given.insert("area".into(), Value::String(area.clone()));
                }
                None => {
                    return Err(PlanError::MissingArguments {
                        tool: tool.to_string(),
                        message: "no map has been imported yet; name an area or bounding box".into(),
                    })
                }
            }
        }
        spec.canonical_args(&given).map_err(|message| PlanError::MissingArguments { tool: tool.to_string(), message })
    }
}

fn existing_ids(inputs: &[TaskInput]) -> Option<Vec<u64>> {
    inputs
        .iter()
        .map(|i| match i {
            TaskInput::Existing(id) => Some(*id),
            TaskInput::Planned(_) => None,
        })
        .collect()
}
