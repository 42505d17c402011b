use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::loc_metrics::EntityId;

pub const LOCATIONS_HEADER: &str = "## Locations to Modify";
pub const RELATED_HEADER: &str = "## Related Context";

/// The two-section final answer. `locations` is ranked by position.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ParsedAnswer {
    pub locations: Vec<EntityId>,
    #[serde(rename = "related")]
    pub related_context: Vec<EntityId>,
    #[serde(rename = "raw")]
    pub raw_text: String,
}

impl ParsedAnswer {
    /// Rewrites absolute or `./`-prefixed entry paths relative to `root`.
    pub fn relativize(mut self, root: &Path) -> Self {
        let fix = |id: &EntityId| id.with_path(relative_path(id.path(), root));
        self.locations = self.locations.iter().map(fix).collect();
        self.related_context = self.related_context.iter().map(fix).collect();
        self
    }
}

fn relative_path(path: &str, root: &Path) -> String {
    let p = Path::new(path);
    let rel = p.strip_prefix(root).map(|r| r.to_string_lossy().into_owned());
    let rel = rel.unwrap_or_else(|_| path.to_string());
    rel.trim_start_matches("./").to_string()
}

/// A final answer, or the reason none could be extracted.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum AnswerOutcome {
    Parsed(ParsedAnswer),
    Failed { raw_text: String, reason: String },
}

impl AnswerOutcome {
    pub fn parsed(&self) -> Option<&ParsedAnswer> {
        match self {
            AnswerOutcome::Parsed(a) => Some(a),
            AnswerOutcome::Failed { .. } => None,
        }
    }

    pub fn is_failed(&self) -> bool {
        matches!(self, AnswerOutcome::Failed { .. })
    }

    pub fn raw_text(&self) -> &str {
        match self {
            AnswerOutcome::Parsed(a) => &a.raw_text,
            AnswerOutcome::Failed { raw_text, .. } => raw_text,
        }
    }
}

fn section_entries(lines: &[&str], header: &str) -> Option<Vec<EntityId>> {
    let start = lines.iter().position(|l| l.trim_end() == header)?;
    let mut out = Vec::new();
    for line in &lines[start + 1..] {
        if line.starts_with('#') {
            break;
        }
        if let Some(entry) = line.trim().strip_prefix("- ") {
            if let Ok(id) = entry.trim().parse::<EntityId>() {
                out.push(id);
            }
        }
    }
    Some(out)
}

/// Parses `## Locations to Modify` (required) and `## Related Context`
/// (optional). Entries are `- <path>` or `- <path>::<QualifiedName>`, one
/// per line; other lines inside a section are ignored. Duplicates are kept.
pub fn parse_answer(action_text: &str) -> AnswerOutcome {
    let lines: Vec<&str> = action_text.lines().collect();
    let Some(locations) = section_entries(&lines, LOCATIONS_HEADER) else {
        return AnswerOutcome::Failed {
            raw_text: action_text.to_string(),
            reason: format!("missing required section {LOCATIONS_HEADER:?}"),
        };
    };
    let related_context = section_entries(&lines, RELATED_HEADER).unwrap_or_default();
    AnswerOutcome::Parsed(ParsedAnswer { locations, related_context, raw_text: action_text.to_string() })
}
