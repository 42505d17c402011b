//! Localization quality and the quality/efficiency reward.

use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agent_loop::AnswerOutcome;
use crate::ground_truth::GroundTruth;
use crate::rational::{self, Ratio};

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum MetricsError {
    #[error("entity sets mix file-level and function-level ids")]
    MixedLevels,
    #[error("invalid reward config: {0}")]
    BadConfig(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Level {
    File,
    Function,
}

/// A localization target: a file (`path`) or a function (`path::Qualified.Name`).
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum EntityId {
    File(String),
    Function { path: String, name: String },
}

impl EntityId {
    pub fn file(path: impl Into<String>) -> Self {
        EntityId::File(path.into())
    }

    pub fn function(path: impl Into<String>, name: impl Into<String>) -> Self {
        EntityId::Function { path: path.into(), name: name.into() }
    }

    pub fn level(&self) -> Level {
        match self {
            EntityId::File(_) => Level::File,
            EntityId::Function { .. } => Level::Function,
        }
    }

    pub fn path(&self) -> &str {
        match self {
            EntityId::File(p) | EntityId::Function { path: p, .. } => p,
        }
    }

    pub fn with_path(&self, path: String) -> Self {
        match self {
            EntityId::File(_) => EntityId::File(path),
            EntityId::Function { name, .. } => EntityId::Function { path, name: name.clone() },
        }
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EntityId::File(p) => f.write_str(p),
            EntityId::Function { path, name } => write!(f, "{path}::{name}"),
        }
    }
}

impl FromStr for EntityId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        match s.split_once("::") {
            Some((path, name)) if !path.is_empty() && !name.is_empty() => Ok(EntityId::function(path, name)),
            Some(_) => Err(format!("malformed entity id {s:?}")),
            None if s.is_empty() => Err("empty entity id".into()),
            None => Ok(EntityId::file(s)),
        }
    }
}

impl Serialize for EntityId {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        s.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for EntityId {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prf1 {
    #[serde(rename = "p", with = "rational::as_f64")]
    pub precision: Ratio,
    #[serde(rename = "r", with = "rational::as_f64")]
    pub recall: Ratio,
    #[serde(with = "rational::as_f64")]
    pub f1: Ratio,
}

impl Prf1 {
    pub fn zero() -> Self {
        Self { precision: rational::zero(), recall: rational::zero(), f1: rational::zero() }
    }

    pub fn from_counts(hits: usize, predicted: usize, truth: usize) -> Self {
        let frac = |n: usize, d: usize| {
            if d == 0 {
                rational::zero()
            } else {
                rational::ratio(n as i64, d as i64)
            }
        };
        let precision = frac(hits, predicted);
        let recall = frac(hits, truth);
        let sum = &precision + &recall;
        let f1 = if sum == rational::zero() { rational::zero() } else { rational::int(2) * &precision * &recall / sum };
        Self { precision, recall, f1 }
    }
}

fn single_level(set: &BTreeSet<EntityId>) -> Result<Option<Level>, MetricsError> {
    let mut levels = set.iter().map(EntityId::level);
    let Some(first) = levels.next() else {
        return Ok(None);
    };
    if levels.all(|l| l == first) {
        Ok(Some(first))
    } else {
        Err(MetricsError::MixedLevels)
    }
}

/// Set precision, recall, and F1.
///
/// An empty prediction has precision 0; an empty truth has recall 0; F1 is 0
/// when precision and recall are both 0.
pub fn prf1(predicted: &BTreeSet<EntityId>, truth: &BTreeSet<EntityId>) -> Result<Prf1, MetricsError> {
    let p_level = single_level(predicted)?;
    let t_level = single_level(truth)?;
    if let (Some(a), Some(b)) = (p_level, t_level) {
        if a != b {
            return Err(MetricsError::MixedLevels);
        }
    }
    let hits = predicted.intersection(truth).count();
    Ok(Prf1::from_counts(hits, predicted.len(), truth.len()))
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RewardConfig {
    #[serde(with = "rational::as_f64")]
    pub alpha: Ratio,
    #[serde(with = "rational::as_f64")]
    pub beta: Ratio,
    #[serde(with = "rational::as_f64")]
    pub gamma: Ratio,
    #[serde(with = "rational::as_f64")]
    pub lambda_file: Ratio,
    #[serde(with = "rational::as_f64")]
    pub lambda_func: Ratio,
}

impl Default for RewardConfig {
    fn default() -> Self {
        Self {
            alpha: rational::ratio(4, 5),
            beta: rational::zero(),
            gamma: rational::ratio(1, 5),
            lambda_file: rational::ratio(7, 10),
            lambda_func: rational::ratio(3, 10),
        }
    }
}

impl RewardConfig {
    pub fn validate(&self) -> Result<(), MetricsError> {
        let zero = rational::zero();
        if self.alpha < zero || self.gamma < zero {
            return Err(MetricsError::BadConfig("alpha and gamma must be non-negative".into()));
        }
        if self.beta != zero {
            return Err(MetricsError::BadConfig("beta must be 0: a trajectory with zero F1 earns no reward".into()));
        }
        if self.lambda_file < zero || self.lambda_func < zero {
            return Err(MetricsError::BadConfig("granularity weights must be non-negative".into()));
        }
        if &self.lambda_file + &self.lambda_func != rational::one() {
            return Err(MetricsError::BadConfig("lambda_file + lambda_func must equal 1".into()));
        }
        Ok(())
    }
}

pub fn weighted_f1(file_f1: &Ratio, func_f1: &Ratio, cfg: &RewardConfig) -> Ratio {
    &cfg.lambda_file * file_f1 + &cfg.lambda_func * func_f1
}

/// `alpha*f1 + beta*e + gamma*f1*e`, with `beta` pinned to 0 by validation.
pub fn reward(f1: &Ratio, e: &Ratio, cfg: &RewardConfig) -> Ratio {
    &cfg.alpha * f1 + &cfg.beta * e + &cfg.gamma * f1 * e
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LocalizationScore {
    pub file: Prf1,
    pub func: Prf1,
    #[serde(with = "rational::as_f64")]
    pub weighted_f1: Ratio,
}

impl LocalizationScore {
    pub fn zero() -> Self {
        Self { file: Prf1::zero(), func: Prf1::zero(), weighted_f1: rational::zero() }
    }
}

/// Raw overlap counts kept alongside a score so batches can be micro-averaged.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct OverlapCounts {
    pub file_hits: usize,
    pub file_predicted: usize,
    pub file_truth: usize,
    pub func_hits: usize,
    pub func_predicted: usize,
    pub func_truth: usize,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub instance_id: String,
    pub file: Prf1,
    pub func: Prf1,
    #[serde(with = "rational::as_f64")]
    pub weighted_f1: Ratio,
    #[serde(with = "rational::as_f64")]
    pub e: Ratio,
    #[serde(with = "rational::as_f64")]
    pub reward: Ratio,
    pub cfg: RewardConfig,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    #[serde(default)]
    pub counts: OverlapCounts,
}

impl ScoreReport {
    pub fn score(&self) -> LocalizationScore {
        LocalizationScore { file: self.file.clone(), func: self.func.clone(), weighted_f1: self.weighted_f1.clone() }
    }
}

/// Predicted sets from the "Locations to Modify" entries only: every entry
/// contributes its file, and function entries also contribute themselves.
pub fn predicted_sets(locations: &[EntityId]) -> (BTreeSet<EntityId>, BTreeSet<EntityId>) {
    let files = locations.iter().map(|l| EntityId::file(l.path())).collect();
    let funcs = locations.iter().filter(|l| l.level() == Level::Function).cloned().collect();
    (files, funcs)
}

/// Scores a final answer against ground truth. Related-context entries never
/// contribute; a failed answer scores zero with reward 0.
pub fn score_trajectory(
    instance_id: &str,
    answer: &AnswerOutcome,
    truth: &GroundTruth,
    e: &Ratio,
    cfg: &RewardConfig,
) -> ScoreReport {
    let parsed = match answer {
        AnswerOutcome::Parsed(a) => a,
        AnswerOutcome::Failed { reason, .. } => {
            return ScoreReport {
                instance_id: instance_id.to_string(),
                file: Prf1::zero(),
                func: Prf1::zero(),
                weighted_f1: rational::zero(),
                e: e.clone(),
                reward: rational::zero(),
                cfg: cfg.clone(),
                failed: true,
                diagnostic: Some(reason.clone()),
                counts: OverlapCounts {
                    file_truth: truth.files.len(),
                    func_truth: truth.functions.len(),
                    ..OverlapCounts::default()
                },
            }
        }
    };
    let (pred_files, pred_funcs) = predicted_sets(&parsed.locations);
    let file_hits = pred_files.intersection(&truth.files).count();
    let func_hits = pred_funcs.intersection(&truth.functions).count();
    let file = Prf1::from_counts(file_hits, pred_files.len(), truth.files.len());
    let func = Prf1::from_counts(func_hits, pred_funcs.len(), truth.functions.len());
    let wf1 = weighted_f1(&file.f1, &func.f1, cfg);
    ScoreReport {
        instance_id: instance_id.to_string(),
        reward: reward(&wf1, e, cfg),
        file,
        func,
        weighted_f1: wf1,
        e: e.clone(),
        cfg: cfg.clone(),
        failed: false,
        diagnostic: None,
        counts: OverlapCounts {
            file_hits,
            file_predicted: pred_files.len(),
            file_truth: truth.files.len(),
            func_hits,
            func_predicted: pred_funcs.len(),
            func_truth: truth.functions.len(),
        },
    }
}
