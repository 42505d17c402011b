//! Hand-off bundle for a downstream repair agent: the localized entities plus
//! the file chunks the localizer actually read in those files.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use super::trajectory::Trajectory;
use crate::entity_gain::{entities_of, Entity};
use crate::loc_metrics::EntityId;
use crate::repo_tools::ToolRequest;

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct SpanRef {
    pub path: String,
    pub chunk_index: u64,
    pub start_line: u64,
    pub end_line: u64,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocationEvidence {
    pub location: EntityId,
    pub spans: Vec<SpanRef>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct PresearchBundle {
    pub instance_id: String,
    pub locations: Vec<LocationEvidence>,
    pub related_context: Vec<EntityId>,
    /// Every read chunk in a location file, sorted.
    pub evidence: Vec<SpanRef>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
}

impl PresearchBundle {
    /// Markdown block suitable for prepending to another agent's prompt.
    pub fn render(&self) -> String {
        let mut out = String::from("## Pre-located code\n");
        for loc in &self.locations {
            out.push_str(&format!("- {}", loc.location));
            if !loc.spans.is_empty() {
                let ranges: Vec<String> =
                    loc.spans.iter().map(|s| format!("{}-{}", s.start_line, s.end_line)).collect();
                out.push_str(&format!(" (read lines {})", ranges.join(", ")));
            }
            out.push('\n');
        }
        if !self.related_context.is_empty() {
            out.push_str("\n## Related context\n");
            for id in &self.related_context {
                out.push_str(&format!("- {id}\n"));
            }
        }
        out
    }
}

/// Builds the bundle for a finished trajectory. A failed trajectory yields an
/// empty bundle carrying the failure reason.
pub fn presearch_artifact(trajectory: &Trajectory) -> PresearchBundle {
    let Some(answer) = trajectory.answer.parsed() else {
        let reason = match &trajectory.answer {
            super::answer::AnswerOutcome::Failed { reason, .. } => reason.clone(),
            _ => String::new(),
        };
        return PresearchBundle {
            instance_id: trajectory.instance_id.clone(),
            diagnostic: Some(format!("no parsed answer: {reason}")),
            ..PresearchBundle::default()
        };
    };
    let chunk = trajectory.config.gain.chunk_size.max(1);
    let answer_files: BTreeSet<&str> = answer.locations.iter().map(|l| l.path()).collect();
    let mut evidence = BTreeSet::new();
    for turn in &trajectory.turns {
        for (call, obs) in turn.calls.iter().zip(&turn.observations) {
            let Some(call) = call.valid() else { continue };
            if !matches!(call.request, ToolRequest::ReadFile(_)) {
                continue;
            }
            for entity in entities_of(obs, call, chunk) {
                if let Entity::Span { path, chunk_index } = entity {
                    if answer_files.contains(path.as_str()) {
                        evidence.insert(SpanRef {
                            start_line: chunk_index * chunk + 1,
                            end_line: (chunk_index + 1) * chunk,
                            path,
                            chunk_index,
                        });
                    }
                }
            }
        }
    }
    let locations = answer
        .locations
        .iter()
        .map(|loc| LocationEvidence {
            location: loc.clone(),
            spans: evidence.iter().filter(|s| s.path == loc.path()).cloned().collect(),
        })
        .collect();
    PresearchBundle {
        instance_id: trajectory.instance_id.clone(),
        locations,
        related_context: answer.related_context.clone(),
        evidence: evidence.into_iter().collect(),
        diagnostic: None,
    }
}
