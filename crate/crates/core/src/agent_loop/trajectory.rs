use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::action::ParsedCall;
use super::answer::AnswerOutcome;
use crate::entity_gain::{score_turns, GainConfig, GainRecord, GainReport};
use crate::rational::{self, Ratio};
use crate::repo_tools::{Observation, ToolLimits};

/// Per-episode limits. The forced-answer turn is not counted against
/// `max_turns`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct Budget {
    pub max_turns: usize,
    pub max_total_calls: usize,
    pub wall_seconds: Option<f64>,
    /// Extra attempts after a retryable driver failure.
    pub max_retries: usize,
}

impl Default for Budget {
    fn default() -> Self {
        Self { max_turns: 25, max_total_calls: 200, wall_seconds: Some(1800.0), max_retries: 2 }
    }
}

/// Every knob that can change an episode's recorded output.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeConfig {
    pub gain: GainConfig,
    pub limits: ToolLimits,
    pub budget: Budget,
}

impl EpisodeConfig {
    pub fn fingerprint(&self) -> String {
        fingerprint(self)
    }
}

/// SHA-256 of the value's JSON serialization, hex encoded.
pub fn fingerprint<T: Serialize>(value: &T) -> String {
    let json = serde_json::to_vec(value).expect("config serializes");
    hex::encode(Sha256::digest(&json))
}

/// One model action and the results of all calls it issued. A terminal turn
/// has no calls.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    /// 1-based.
    pub index: usize,
    pub action_text: String,
    pub calls: Vec<ParsedCall>,
    pub observations: Vec<Observation>,
    pub gains: Vec<GainRecord>,
    pub started_at: f64,
    pub ended_at: f64,
}

impl Turn {
    pub fn is_terminal(&self) -> bool {
        self.calls.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct CostRecord {
    pub n_turns: usize,
    pub n_tool_calls: usize,
    #[serde(with = "rational::as_f64")]
    pub wall_seconds: Ratio,
    pub tokens_prompt: u64,
    pub tokens_completion: u64,
    pub tokens_total: u64,
    pub tokens_estimated: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub instance_id: String,
    #[serde(default)]
    pub run: usize,
    pub query: String,
    pub config_fingerprint: String,
    #[serde(default)]
    pub config: EpisodeConfig,
    pub turns: Vec<Turn>,
    pub answer: AnswerOutcome,
    #[serde(with = "rational::as_f64")]
    pub efficiency: Ratio,
    pub cost: CostRecord,
    /// Set when the driver failed and the episode stopped early.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub driver_error: Option<String>,
}

impl Trajectory {
    /// Re-derives every gain from the stored observations.
    pub fn gain_report(&self, cfg: &GainConfig) -> GainReport {
        score_turns(
            self.turns
                .iter()
                .map(|t| t.calls.iter().zip(&t.observations).map(|(c, o)| (c.valid(), o)).collect::<Vec<_>>()),
            cfg,
        )
    }

    pub fn recorded_gains(&self) -> Vec<GainRecord> {
        self.turns.iter().flat_map(|t| t.gains.iter().cloned()).collect()
    }

    /// The final action text, or the empty string when the episode never
    /// produced one.
    pub fn final_action(&self) -> &str {
        self.turns.last().filter(|t| t.is_terminal()).map(|t| t.action_text.as_str()).unwrap_or("")
    }

    pub fn to_json_line(&self) -> String {
        serde_json::to_string(self).expect("trajectory serializes")
    }
}

/// Reads one trajectory per non-blank line.
pub fn read_trajectories(text: &str) -> Result<Vec<Trajectory>, String> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("line {}: {e}", i + 1)))
        .collect()
}
