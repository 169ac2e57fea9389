use serde::{Deserialize, Serialize};

use super::parse::parse_tool_calls;
use super::registry::Registry;

/// Mission definition handed to the model ahead of every request.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Profile {
    pub character_text: String,
    pub task_objective_text: String,
    pub constraints_text: String,
    pub output_format_spec: String,
    pub file_path_root: String,
    pub tool_usage_constraints: String,
}

/// Sample call embedded in the output-format section.
pub const FORMAT_EXAMPLE: &str = r#"TOOL import_osm ARGS {"area": "HITSZ"}"#;

pub fn default_profile() -> Profile {
    Profile {
        character_text: "You are a powerful radio map generation and wireless network planning assistant. \
            You operate a simulation platform on behalf of a radio engineer."
            .into(),
        task_objective_text: "Turn each request into the smallest sequence of tool calls that produces the \
            requested OSM import, outdoor environment, radio map or optimized network plan."
            .into(),
        constraints_text: "Only call tools from the registry. Reuse results recorded in session memory \
            instead of repeating work. Ask a clarifying question when the request names no task."
            .into(),
        output_format_spec: format!(
            "Emit each tool call on its own line as `TOOL <name> ARGS <json-object>`, for example:\n{FORMAT_EXAMPLE}\n\
             Arguments must be a single JSON object. Prose around the calls is ignored."
        ),
        file_path_root: ".".into(),
        tool_usage_constraints: "import_osm precedes create_environment; create_environment precedes \
            create_simulation_area; a radio map of the initial stations precedes optimize_network."
            .into(),
    }
}

impl Profile {
    /// Checks the invariants: non-empty character text and an output format
    /// whose embedded example parses against `registry`.
    pub fn validate(&self, registry: &Registry) -> Result<(), String> {
        if self.character_text.trim().is_empty() {
            return Err("character_text is empty".into());
        }
        match parse_tool_calls(&self.output_format_spec, registry) {
            Ok(calls) if !calls.is_empty() => Ok(()),
            Ok(_) => Err("output_format_spec contains no sample call".into()),
            Err(e) => Err(format!("output_format_spec sample does not parse: {e}")),
        }
    }

    /// Text block placed at the top of every model context.
    pub fn render(&self) -> String {
        format!(
            "{}\n\nObjective: {}\n\nConstraints: {}\n\nOutput format: {}\n\nFile path root: {}\n\nTool usage: {}\n",
            self.character_text,
            self.task_objective_text,
            self.constraints_text,
            self.output_format_spec,
            self.file_path_root,
            self.tool_usage_constraints
        )
    }
}
