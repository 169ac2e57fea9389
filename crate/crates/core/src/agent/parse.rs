use std::ops::Range;
use std::sync::OnceLock;

use regex::Regex;
use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};
use thiserror::Error;

use super::registry::Registry;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum ParseError {
    #[error("the reply contains no tool call")]
    NoToolCall,
    #[error("unknown tool {name:?} at bytes {span:?}")]
    UnknownTool { name: String, span: Range<usize> },
    #[error("bad arguments for {tool} at bytes {span:?}: {message}")]
    BadArguments { tool: String, span: Range<usize>, message: String },
}

/// One `TOOL <name> ARGS <json>` block extracted from model output.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolCall {
    pub name: String,
    /// Schema-checked arguments with defaults filled in.
    pub args: Map<String, Value>,
    pub raw: String,
    pub span: Range<usize>,
}

fn header() -> &'static Regex {
    static RE: OnceLock<Regex> = OnceLock::new();
    RE.get_or_init(|| Regex::new(r"\bTOOL\s+([A-Za-z_][A-Za-z0-9_]*)\s+ARGS\s*").expect("valid regex"))
}

/// Extracts every tool call in document order.
pub fn parse_tool_calls(text: &str, registry: &Registry) -> Result<Vec<ToolCall>, ParseError> {
    let mut calls = Vec::new();
    let mut pos = 0;
    while let Some(caps) = header().captures_at(text, pos) {
        let whole = caps.get(0).expect("group 0");
        let name = caps[1].to_string();
        let start = whole.start();
        let json_start = whole.end();
        let spec = registry
            .get(&name)
            .ok_or_else(|| ParseError::UnknownTool { name: name.clone(), span: start..json_start })?;
        let mut stream = serde_json::Deserializer::from_str(&text[json_start..]).into_iter::<Value>();
        let bad = |end: usize, message: String| ParseError::BadArguments { tool: name.clone(), span: start..end, message };
        let value = match stream.next() {
            Some(Ok(v)) => v,
            Some(Err(e)) => {
                let rest = &text[json_start..];
                let line_start: usize = rest.split_inclusive('\n').take(e.line().saturating_sub(1)).map(str::len).sum();
                let end = (json_start + line_start + e.column()).min(text.len());
                return Err(bad(end, e.to_string()));
            }
            None => return Err(bad(json_start, "missing argument object".into())),
        };
        let end = json_start + stream.byte_offset();
        let Value::Object(obj) = value else {
            return Err(bad(end, "arguments must be a JSON object".into()));
        };
        let args = spec.canonical_args(&obj).map_err(|m| bad(end, m))?;
        calls.push(ToolCall { name, args, raw: text[start..end].to_string(), span: start..end });
        pos = end;
    }
    if calls.is_empty() {
        return Err(ParseError::NoToolCall);
    }
    Ok(calls)
}
