//! Turns scored trajectories into training artifacts: dual-threshold SFT
//! filtering, conversation-format export, and per-group reward advantages.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;

use crate::agent_loop::{parse_action, render_observations, Action, Trajectory, SYSTEM_PROMPT};
use crate::loc_metrics::{reward, LocalizationScore, RewardConfig, ScoreReport};
use crate::rational::{self, Ratio};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum PipelineError {
    #[error("threshold {name} must lie in [0, 1]")]
    ThresholdRange { name: &'static str },
}

/// Separate floors for localization quality and exploration efficiency.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default)]
pub struct FilterThresholds {
    #[serde(with = "rational::as_f64")]
    pub rho_f: Ratio,
    #[serde(with = "rational::as_f64")]
    pub rho_e: Ratio,
}

impl Default for FilterThresholds {
    fn default() -> Self {
        Self { rho_f: rational::ratio(4, 5), rho_e: rational::ratio(3, 5) }
    }
}

impl FilterThresholds {
    pub fn validate(&self) -> Result<(), PipelineError> {
        let unit = |r: &Ratio| *r >= rational::zero() && *r <= rational::one();
        if !unit(&self.rho_f) {
            return Err(PipelineError::ThresholdRange { name: "rho_f" });
        }
        if !unit(&self.rho_e) {
            return Err(PipelineError::ThresholdRange { name: "rho_e" });
        }
        Ok(())
    }

    /// `None` when both floors are met, otherwise the failed predicate.
    pub fn check(&self, weighted_f1: &Ratio, efficiency: &Ratio) -> Option<RejectReason> {
        match (weighted_f1 >= &self.rho_f, efficiency >= &self.rho_e) {
            (true, true) => None,
            (true, false) => Some(RejectReason::Efficiency),
            (false, true) => Some(RejectReason::F1),
            (false, false) => Some(RejectReason::Both),
        }
    }
}

/// A trajectory line with its score attached under `score`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredTrajectory {
    #[serde(flatten)]
    pub trajectory: Trajectory,
    pub score: ScoreReport,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RejectReason {
    Efficiency,
    F1,
    Both,
    MissingScore,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Rejection {
    /// 1-based input line.
    pub line: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub id: Option<String>,
    pub reason: RejectReason,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weighted_f1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub efficiency: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct FilterOutcome {
    /// Retained input lines, unchanged and in input order.
    pub retained: Vec<String>,
    pub rejections: Vec<Rejection>,
}

fn ratio_field(v: &Value, pointer: &str) -> Option<Ratio> {
    v.pointer(pointer).and_then(Value::as_f64).and_then(rational::from_f64_decimal)
}

/// Keeps lines with `score.weighted_f1 >= rho_f` and `efficiency >= rho_e`.
/// Lines that do not parse or lack either field are logged as
/// `missing_score` and the stream continues.
pub fn filter_sft<'a, I>(lines: I, thresholds: &FilterThresholds) -> FilterOutcome
where
    I: IntoIterator<Item = &'a str>,
{
    let mut out = FilterOutcome::default();
    for (i, line) in lines.into_iter().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Result<Value, _> = serde_json::from_str(line);
        let value = match parsed {
            Ok(v) => v,
            Err(e) => {
                out.rejections.push(Rejection {
                    line: i + 1,
                    id: None,
                    reason: RejectReason::MissingScore,
                    weighted_f1: None,
                    efficiency: None,
                    detail: Some(format!("unparseable record: {e}")),
                });
                continue;
            }
        };
        let id = value.get("instance_id").and_then(Value::as_str).map(str::to_string);
        let f1 = ratio_field(&value, "/score/weighted_f1");
        let e = ratio_field(&value, "/efficiency");
        let (Some(f1), Some(e)) = (f1, e) else {
            out.rejections.push(Rejection {
                line: i + 1,
                id,
                reason: RejectReason::MissingScore,
                weighted_f1: None,
                efficiency: None,
                detail: Some("record lacks score.weighted_f1 or efficiency".into()),
            });
            continue;
        };
        match thresholds.check(&f1, &e) {
            None => out.retained.push(line.to_string()),
            Some(reason) => out.rejections.push(Rejection {
                line: i + 1,
                id,
                reason,
                weighted_f1: Some(rational::to_f64(&f1)),
                efficiency: Some(rational::to_f64(&e)),
                detail: None,
            }),
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftMessage {
    pub role: String,
    pub content: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub id: String,
    pub run: usize,
    pub messages: Vec<SftMessage>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkipEntry {
    pub id: String,
    pub run: usize,
    pub reason: String,
}

fn message(role: &str, content: impl Into<String>) -> SftMessage {
    SftMessage { role: role.to_string(), content: content.into() }
}

/// Linearizes each successful trajectory into `system, user, (assistant,
/// tool)*, assistant`. Tool messages hold the observations exactly as the
/// model saw them. Failed trajectories are skipped and logged.
pub fn export_sft(trajectories: &[Trajectory]) -> (Vec<SftRecord>, Vec<SkipEntry>) {
    let mut records = Vec::new();
    let mut skipped = Vec::new();
    for t in trajectories {
        let skip = |reason: &str| SkipEntry { id: t.instance_id.clone(), run: t.run, reason: reason.to_string() };
        if t.answer.is_failed() {
            skipped.push(skip("trajectory has no parsed answer"));
            continue;
        }
        if !t.turns.last().is_some_and(|turn| turn.is_terminal()) {
            skipped.push(skip("trajectory has no terminal turn"));
            continue;
        }
        let mut messages = vec![message("system", SYSTEM_PROMPT), message("user", t.query.clone())];
        for turn in &t.turns {
            messages.push(message("assistant", turn.action_text.clone()));
            if !turn.is_terminal() {
                messages.push(message("tool", render_observations(&turn.calls, &turn.observations)));
            }
        }
        records.push(SftRecord { id: t.instance_id.clone(), run: t.run, messages });
    }
    (records, skipped)
}

/// What can be recovered from an exported record alone.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SftSummary {
    pub n_turns: usize,
    pub n_tool_calls: usize,
    pub answer_text: String,
}

pub fn summarize_sft(record: &SftRecord) -> SftSummary {
    let actions: Vec<&str> =
        record.messages.iter().filter(|m| m.role == "assistant").map(|m| m.content.as_str()).collect();
    let n_tool_calls = actions
        .iter()
        .map(|a| match parse_action(a) {
            Action::Calls(c) => c.len(),
            Action::Final => 0,
        })
        .sum();
    SftSummary {
        n_turns: actions.len(),
        n_tool_calls,
        answer_text: actions.last().map(|a| a.to_string()).unwrap_or_default(),
    }
}

/// One rollout entering reward annotation.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RewardInput {
    pub id: String,
    pub run: usize,
    pub group_id: String,
    pub score: LocalizationScore,
    pub efficiency: Ratio,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RewardRecord {
    pub id: String,
    pub run: usize,
    pub group_id: String,
    #[serde(with = "rational::as_f64")]
    pub reward: Ratio,
    pub advantage: f64,
    pub score: LocalizationScore,
}

pub const ADVANTAGE_EPSILON: f64 = 1e-8;

/// `(r - mean) / std` with the population standard deviation; 0 for every
/// member when `std < ADVANTAGE_EPSILON`.
pub fn group_advantages(rewards: &[Ratio]) -> Vec<f64> {
    if rewards.is_empty() {
        return Vec::new();
    }
    let n = rational::int(rewards.len() as i64);
    let mean: Ratio = rewards.iter().cloned().sum::<Ratio>() / &n;
    let variance: Ratio = rewards.iter().map(|r| (r - &mean) * (r - &mean)).sum::<Ratio>() / &n;
    let std = rational::to_f64(&variance).sqrt();
    if std < ADVANTAGE_EPSILON {
        return vec![0.0; rewards.len()];
    }
    rewards.iter().map(|r| rational::to_f64(&(r - &mean)) / std).collect()
}

/// Scores every member and normalizes rewards within its group. Output keeps
/// input order.
pub fn annotate_rewards(inputs: &[RewardInput], cfg: &RewardConfig) -> Vec<RewardRecord> {
    let rewards: Vec<Ratio> = inputs.iter().map(|i| reward(&i.score.weighted_f1, &i.efficiency, cfg)).collect();
    let mut groups: BTreeMap<&str, Vec<usize>> = BTreeMap::new();
    for (i, input) in inputs.iter().enumerate() {
        groups.entry(input.group_id.as_str()).or_default().push(i);
    }
    let mut advantages = vec![0.0; inputs.len()];
    for members in groups.values() {
        let group_rewards: Vec<Ratio> = members.iter().map(|&i| rewards[i].clone()).collect();
        for (&i, a) in members.iter().zip(group_advantages(&group_rewards)) {
            advantages[i] = a;
        }
    }
    inputs
        .iter()
        .zip(rewards)
        .zip(advantages)
        .map(|((input, reward), advantage)| RewardRecord {
            id: input.id.clone(),
            run: input.run,
            group_id: input.group_id.clone(),
            reward,
            advantage,
            score: input.score.clone(),
        })
        .collect()
}
