//! Read-only repository tools (`grep`, `glob`, `read_file`) and the
//! concurrent executor that runs one turn's worth of calls.
//!
//! Every result entry references a repository-relative, `/`-separated path.
//! Entries are ordered by path and then by line number, so a call against a
//! fixed snapshot always produces the same [`Observation`].

mod read;
mod root;
mod search;
mod turn;

use serde::{Deserialize, Deserializer, Serialize};

pub use read::read_file;
pub use root::{RepoRoot, ToolError};
pub use search::{glob, grep};
pub use turn::{execute_turn, run_call};

/// Output caps and knobs shared by all three tools.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct ToolLimits {
    pub glob_max_paths: usize,
    pub read_max_lines: usize,
    pub grep_max_entries: usize,
    pub grep_context_lines: usize,
}

impl Default for ToolLimits {
    fn default() -> Self {
        Self { glob_max_paths: 100, read_max_lines: 1000, grep_max_entries: 200, grep_context_lines: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ToolName {
    Grep,
    Glob,
    ReadFile,
}

impl ToolName {
    pub fn as_str(self) -> &'static str {
        match self {
            ToolName::Grep => "grep",
            ToolName::Glob => "glob",
            ToolName::ReadFile => "read_file",
        }
    }

    pub fn parse(name: &str) -> Option<Self> {
        match name {
            "grep" => Some(ToolName::Grep),
            "glob" => Some(ToolName::Glob),
            "read_file" => Some(ToolName::ReadFile),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GrepMode {
    #[default]
    FilesWithMatches,
    Content,
    Count,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GrepArgs {
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub glob: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output_mode: Option<GrepMode>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GlobArgs {
    pub pattern: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub path: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ReadFileArgs {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "lenient_line")]
    pub start_line: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none", deserialize_with = "lenient_line")]
    pub end_line: Option<u64>,
}

/// Line numbers arrive as integers or as numeric strings depending on the model.
fn lenient_line<'de, D: Deserializer<'de>>(d: D) -> Result<Option<u64>, D::Error> {
    #[derive(Deserialize)]
    #[serde(untagged)]
    enum Raw {
        Int(u64),
        Text(String),
    }
    match Option::<Raw>::deserialize(d)? {
        None => Ok(None),
        Some(Raw::Int(n)) => Ok(Some(n)),
        Some(Raw::Text(s)) => s
            .trim()
            .parse()
            .map(Some)
            .map_err(|_| serde::de::Error::custom(format!("expected a line number, got {s:?}"))),
    }
}

/// A validated tool request. Serialized as `{"tool": ..., "args": {...}}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "tool", content = "args", rename_all = "snake_case")]
pub enum ToolRequest {
    Grep(GrepArgs),
    Glob(GlobArgs),
    ReadFile(ReadFileArgs),
}

impl ToolRequest {
    pub fn name(&self) -> ToolName {
        match self {
            ToolRequest::Grep(_) => ToolName::Grep,
            ToolRequest::Glob(_) => ToolName::Glob,
            ToolRequest::ReadFile(_) => ToolName::ReadFile,
        }
    }

    /// Builds a request from a tool name and its JSON argument object,
    /// enforcing the per-tool parameter table.
    pub fn from_parts(name: &str, args: serde_json::Value) -> Result<Self, String> {
        let tool = ToolName::parse(name).ok_or_else(|| format!("unknown tool {name:?}"))?;
        if !args.is_object() {
            return Err(format!("arguments for {name} must be a JSON object"));
        }
        let parsed = match tool {
            ToolName::Grep => serde_json::from_value(args).map(ToolRequest::Grep),
            ToolName::Glob => serde_json::from_value(args).map(ToolRequest::Glob),
            ToolName::ReadFile => serde_json::from_value(args).map(ToolRequest::ReadFile),
        };
        let request = parsed.map_err(|e| format!("bad arguments for {name}: {e}"))?;
        match &request {
            ToolRequest::Grep(a) if a.pattern.is_empty() => Err("grep pattern is empty".into()),
            ToolRequest::Glob(a) if a.pattern.is_empty() => Err("glob pattern is empty".into()),
            ToolRequest::ReadFile(a) if a.path.is_empty() => Err("read_file path is empty".into()),
            _ => Ok(request),
        }
    }

    pub fn args_json(&self) -> serde_json::Value {
        match self {
            ToolRequest::Grep(a) => serde_json::to_value(a),
            ToolRequest::Glob(a) => serde_json::to_value(a),
            ToolRequest::ReadFile(a) => serde_json::to_value(a),
        }
        .expect("tool args serialize")
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    #[serde(default)]
    pub call_index: usize,
    #[serde(flatten)]
    pub request: ToolRequest,
}

impl ToolCall {
    pub fn new(call_index: usize, request: ToolRequest) -> Self {
        Self { call_index, request }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ObservationStatus {
    Ok,
    Empty,
    Error,
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct Entry {
    pub path: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub line: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub text: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub count: Option<u64>,
}

impl Entry {
    pub fn file(path: impl Into<String>) -> Self {
        Self { path: path.into(), line: None, text: None, count: None }
    }

    pub fn line(path: impl Into<String>, line: u64, text: impl Into<String>) -> Self {
        Self { path: path.into(), line: Some(line), text: Some(text.into()), count: None }
    }

    pub fn count(path: impl Into<String>, count: u64) -> Self {
        Self { path: path.into(), line: None, text: None, count: Some(count) }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub call_index: usize,
    pub status: ObservationStatus,
    pub truncated: bool,
    pub entries: Vec<Entry>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

impl Observation {
    /// Wraps a result list; an empty list becomes `status=empty`.
    pub fn from_entries(call_index: usize, entries: Vec<Entry>, truncated: bool) -> Self {
        let status = if entries.is_empty() { ObservationStatus::Empty } else { ObservationStatus::Ok };
        Self { call_index, status, truncated: truncated && !entries.is_empty(), entries, error: None }
    }

    pub fn error(call_index: usize, message: impl Into<String>) -> Self {
        Self {
            call_index,
            status: ObservationStatus::Error,
            truncated: false,
            entries: Vec::new(),
            error: Some(message.into()),
        }
    }

    pub fn with_index(mut self, call_index: usize) -> Self {
        self.call_index = call_index;
        self
    }
}
