use serde::{Deserialize, Serialize};

use crate::repo_tools::{ToolCall, ToolRequest};

pub const CALL_OPEN: &str = "<tool_call>";
pub const CALL_CLOSE: &str = "</tool_call>";

/// One `<tool_call>` block: either a validated call or the reason it was rejected.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum ParsedCall {
    Valid(ToolCall),
    Invalid { call_index: usize, raw: String, reason: String },
}

impl ParsedCall {
    pub fn call_index(&self) -> usize {
        match self {
            ParsedCall::Valid(c) => c.call_index,
            ParsedCall::Invalid { call_index, .. } => *call_index,
        }
    }

    pub fn valid(&self) -> Option<&ToolCall> {
        match self {
            ParsedCall::Valid(c) => Some(c),
            ParsedCall::Invalid { .. } => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Action {
    /// No well-formed tool call: the text is the final answer.
    Final,
    Calls(Vec<ParsedCall>),
}

#[derive(Deserialize)]
struct WireCall {
    name: String,
    #[serde(default)]
    arguments: Option<serde_json::Value>,
}

/// Validates one `{"name": ..., "arguments": ...}` object. `arguments` may
/// also be a JSON-encoded string.
pub fn parse_call(index: usize, body: &str) -> ParsedCall {
    let invalid = |reason: String| ParsedCall::Invalid { call_index: index, raw: body.to_string(), reason };
    let wire: WireCall = match serde_json::from_str(body) {
        Ok(w) => w,
        Err(e) => return invalid(format!("malformed JSON: {e}")),
    };
    let args = match wire.arguments {
        None => serde_json::Value::Object(Default::default()),
        Some(serde_json::Value::String(s)) => match serde_json::from_str(&s) {
            Ok(v) => v,
            Err(e) => return invalid(format!("arguments string is not JSON: {e}")),
        },
        Some(v) => v,
    };
    match ToolRequest::from_parts(&wire.name, args) {
        Ok(request) => ParsedCall::Valid(ToolCall::new(index, request)),
        Err(reason) => invalid(reason),
    }
}

/// Splits a model action into tool calls. Each `<tool_call>{...}</tool_call>`
/// block holds `{"name": ..., "arguments": {...}}`; blocks are indexed in
/// text order, and a malformed block keeps its index as an invalid call.
/// An action with no well-formed call at all is final.
pub fn parse_action(action_text: &str) -> Action {
    let mut calls = Vec::new();
    let mut rest = action_text;
    while let Some(start) = rest.find(CALL_OPEN) {
        let after = &rest[start + CALL_OPEN.len()..];
        let (body, next) = match after.find(CALL_CLOSE) {
            Some(end) => (&after[..end], &after[end + CALL_CLOSE.len()..]),
            None => (after, ""),
        };
        calls.push(parse_call(calls.len(), body.trim()));
        rest = next;
    }
    if calls.iter().all(|c| c.valid().is_none()) {
        Action::Final
    } else {
        Action::Calls(calls)
    }
}

/// Renders a call the way [`parse_action`] reads it back.
pub fn format_call(call: &ToolCall) -> String {
    let body = serde_json::json!({
        "name": call.request.name().as_str(),
        "arguments": call.request.args_json(),
    });
    format!("{CALL_OPEN}{body}{CALL_CLOSE}")
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::repo_tools::{GlobArgs, ToolName};

    #[test]
    fn three_valid_calls() {
        let text = r#"Let me look.
<tool_call>{"name": "grep", "arguments": {"pattern": "def apply"}}</tool_call>
<tool_call>{"name": "glob", "arguments": {"pattern": "**/*.py"}}</tool_call>
<tool_call>{"name": "read_file", "arguments": "{\"path\": \"a.py\", \"start_line\": 1, \"end_line\": 5}"}</tool_call>"#;
        let Action::Calls(calls) = parse_action(text) else { panic!() };
        let got: Vec<_> = calls.iter().map(|c| (c.call_index(), c.valid().unwrap().request.name())).collect();
        assert_eq!(got, vec![(0, ToolName::Grep), (1, ToolName::Glob), (2, ToolName::ReadFile)]);
    }

    #[test]
    fn prose_is_final() {
        assert_eq!(parse_action("## Locations to Modify\n- a.py\n"), Action::Final);
    }

    #[test]
    fn malformed_call_keeps_its_slot() {
        let text = r#"<tool_call>{"name": "glob", "arguments": {"pattern": "*.py"}}</tool_call>
<tool_call>{"name": "glob", "arguments": {"pattern": </tool_call>"#;
        let Action::Calls(calls) = parse_action(text) else { panic!() };
        assert_eq!(calls.len(), 2);
        assert!(calls[0].valid().is_some());
        match &calls[1] {
            ParsedCall::Invalid { call_index, reason, .. } => {
                assert_eq!(*call_index, 1);
                assert!(reason.contains("malformed JSON"));
            }
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn schema_violations_are_invalid() {
        let ok = r#"<tool_call>{"name": "glob", "arguments": {"pattern": "*"}}</tool_call>"#;
        for body in [
            r#"{"name": "find", "arguments": {"pattern": "x"}}"#,
            r#"{"name": "grep", "arguments": {}}"#,
            r#"{"name": "grep", "arguments": {"pattern": "x", "extra": 1}}"#,
            r#"{"name": "read_file", "arguments": [1]}"#,
        ] {
            let text = format!("{ok}<tool_call>{body}</tool_call>");
            let Action::Calls(calls) = parse_action(&text) else { panic!() };
            assert!(calls[1].valid().is_none(), "{body}");
        }
    }

    #[test]
    fn only_malformed_calls_is_final() {
        assert_eq!(parse_action("<tool_call>{\"name\": \"grep\"}</tool_call>"), Action::Final);
    }

    #[test]
    fn format_round_trips() {
        let call = ToolCall::new(0, ToolRequest::Glob(GlobArgs { pattern: "*.py".into(), path: Some("src".into()) }));
        let Action::Calls(calls) = parse_action(&format_call(&call)) else { panic!() };
        assert_eq!(calls, vec![ParsedCall::Valid(call)]);
    }

    #[test]
    fn call_record_serialization() {
        let invalid = ParsedCall::Invalid { call_index: 1, raw: "{".into(), reason: "bad".into() };
        let json = serde_json::to_string(&invalid).unwrap();
        assert_eq!(serde_json::from_str::<ParsedCall>(&json).unwrap(), invalid);
        let valid =
            ParsedCall::Valid(ToolCall::new(0, ToolRequest::Glob(GlobArgs { pattern: "*".into(), path: None })));
        let json = serde_json::to_string(&valid).unwrap();
        assert_eq!(serde_json::from_str::<ParsedCall>(&json).unwrap(), valid);
    }
}
