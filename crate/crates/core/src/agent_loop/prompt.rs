use serde_json::{json, Value};

use super::action::ParsedCall;
use crate::repo_tools::{Entry, Observation, ObservationStatus};

pub const SYSTEM_PROMPT: &str = include_str!("../../assets/system_prompt.md");

/// Sent once when the turn budget runs out.
pub const FORCED_ANSWER_PROMPT: &str = "The exploration budget is exhausted. Do not call any more tools. \
Reply now with your final answer in the required format, starting with \"## Locations to Modify\".";

/// Chat-completion tool definitions for the three repository tools.
pub fn tool_definitions() -> Value {
    let function = |name: &str, description: &str, parameters: Value| json!({"type": "function", "function": {"name": name, "description": description, "parameters": parameters}});
    json!([
        function(
            "grep",
            "Search file contents with a regular expression.",
            json!({
                "type": "object",
                "properties": {
                    "pattern": {"type": "string"},
                    "path": {"type": "string"},
                    "glob": {"type": "string"},
                    "output_mode": {"type": "string", "enum": ["files_with_matches", "content", "count"]}
                },
                "required": ["pattern"],
                "additionalProperties": false
            }),
        ),
        function(
            "glob",
            "List repository files matching a glob pattern.",
            json!({
                "type": "object",
                "properties": {"pattern": {"type": "string"}, "path": {"type": "string"}},
                "required": ["pattern"],
                "additionalProperties": false
            }),
        ),
        function(
            "read_file",
            "Read a file, optionally restricted to an inclusive 1-based line range.",
            json!({
                "type": "object",
                "properties": {
                    "path": {"type": "string"},
                    "start_line": {"type": "integer", "minimum": 1},
                    "end_line": {"type": "integer", "minimum": 1}
                },
                "required": ["path"],
                "additionalProperties": false
            }),
        ),
    ])
}

fn render_entry(entry: &Entry, out: &mut String) {
    match (entry.line, &entry.text, entry.count) {
        (Some(line), Some(text), _) => out.push_str(&format!("{}:{}:{}\n", entry.path, line, text)),
        (Some(line), None, _) => out.push_str(&format!("{}:{}\n", entry.path, line)),
        (None, _, Some(count)) => out.push_str(&format!("{}:{}\n", entry.path, count)),
        _ => out.push_str(&format!("{}\n", entry.path)),
    }
}

fn render_body(obs: &Observation, out: &mut String) {
    match obs.status {
        ObservationStatus::Error => {
            out.push_str(&format!("error: {}\n", obs.error.as_deref().unwrap_or("unknown error")));
        }
        ObservationStatus::Empty => out.push_str("(no results)\n"),
        ObservationStatus::Ok => {
            for entry in &obs.entries {
                render_entry(entry, out);
            }
        }
    }
    if obs.truncated {
        out.push_str("(output truncated)\n");
    }
}

fn fence_for(body: &str) -> String {
    let mut fence = "```".to_string();
    while body.contains(&fence) {
        fence.push('`');
    }
    fence
}

/// Renders a turn's results as one fenced block per call, in call order,
/// each headed by the tool name and its arguments.
pub fn render_observations(calls: &[ParsedCall], observations: &[Observation]) -> String {
    let mut order: Vec<usize> = (0..calls.len().min(observations.len())).collect();
    order.sort_by_key(|&i| calls[i].call_index());
    let mut out = String::new();
    for i in order {
        let header = match &calls[i] {
            ParsedCall::Valid(c) => {
                format!("[{}] {} {}", c.call_index, c.request.name().as_str(), c.request.args_json())
            }
            ParsedCall::Invalid { call_index, raw, .. } => format!("[{call_index}] invalid {}", raw.replace('\n', " ")),
        };
        let mut body = String::new();
        render_body(&observations[i], &mut body);
        let fence = fence_for(&body);
        if !out.is_empty() {
            out.push('\n');
        }
        out.push_str(&format!("{header}\n{fence}\n{body}{fence}\n"));
    }
    out
}
