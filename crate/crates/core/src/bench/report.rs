use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::agent_loop::Trajectory;
use crate::entity_gain::redundancy_rate;
use crate::loc_metrics::{OverlapCounts, Prf1, ScoreReport};
use crate::rational::{self, Ratio};

/// One (instance, run) result.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BenchRow {
    pub instance_id: String,
    pub run: usize,
    pub failed: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub diagnostic: Option<String>,
    pub file: Prf1,
    pub func: Prf1,
    #[serde(with = "rational::as_f64")]
    pub weighted_f1: Ratio,
    #[serde(with = "rational::as_f64")]
    pub e: Ratio,
    #[serde(with = "rational::as_f64")]
    pub reward: Ratio,
    #[serde(with = "rational::as_f64")]
    pub redundancy_rate: Ratio,
    pub n_turns: usize,
    pub n_tool_calls: usize,
    #[serde(with = "rational::as_f64")]
    pub wall_seconds: Ratio,
    pub tokens_total: u64,
    pub tokens_estimated: bool,
    pub counts: OverlapCounts,
}

impl BenchRow {
    pub fn new(t: &Trajectory, score: &ScoreReport) -> Self {
        let diagnostic = t.driver_error.clone().or_else(|| score.diagnostic.clone());
        Self {
            instance_id: t.instance_id.clone(),
            run: t.run,
            failed: score.failed,
            diagnostic,
            file: score.file.clone(),
            func: score.func.clone(),
            weighted_f1: score.weighted_f1.clone(),
            e: score.e.clone(),
            reward: score.reward.clone(),
            redundancy_rate: redundancy_rate(&t.recorded_gains(), &rational::zero()),
            n_turns: t.cost.n_turns,
            n_tool_calls: t.cost.n_tool_calls,
            wall_seconds: t.cost.wall_seconds.clone(),
            tokens_total: t.cost.tokens_total,
            tokens_estimated: t.cost.tokens_estimated,
            counts: score.counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MeanPrf1 {
    pub p: f64,
    pub r: f64,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MicroScores {
    pub file: MeanPrf1,
    pub func: MeanPrf1,
}

/// Arithmetic means over rows, with micro-averaged P/R/F1 alongside.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub n_rows: usize,
    pub n_failed: usize,
    pub file: MeanPrf1,
    pub func: MeanPrf1,
    pub weighted_f1: f64,
    pub e: f64,
    pub reward: f64,
    pub redundancy_rate: f64,
    pub n_turns: f64,
    pub n_tool_calls: f64,
    pub wall_seconds: f64,
    pub tokens_k: f64,
    pub micro: MicroScores,
    pub config_fingerprint: String,
    pub notes: Vec<String>,
}

fn mean<'a>(values: impl Iterator<Item = &'a Ratio>, n: usize) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let sum: Ratio = values.cloned().sum();
    rational::to_f64(&(sum / rational::int(n as i64)))
}

fn mean_int(values: impl Iterator<Item = u64>, n: usize) -> Ratio {
    if n == 0 {
        return rational::zero();
    }
    let sum: u64 = values.sum();
    rational::ratio(sum as i64, n as i64)
}

fn mean_prf1<'a>(items: impl Iterator<Item = &'a Prf1> + Clone, n: usize) -> MeanPrf1 {
    MeanPrf1 {
        p: mean(items.clone().map(|s| &s.precision), n),
        r: mean(items.clone().map(|s| &s.recall), n),
        f1: mean(items.map(|s| &s.f1), n),
    }
}

fn micro(hits: usize, predicted: usize, truth: usize) -> MeanPrf1 {
    let s = Prf1::from_counts(hits, predicted, truth);
    MeanPrf1 { p: rational::to_f64(&s.precision), r: rational::to_f64(&s.recall), f1: rational::to_f64(&s.f1) }
}

pub fn aggregate(rows: &[BenchRow], config_fingerprint: &str) -> Aggregate {
    let n = rows.len();
    let sum = |f: fn(&OverlapCounts) -> usize| rows.iter().map(|r| f(&r.counts)).sum::<usize>();
    Aggregate {
        n_rows: n,
        n_failed: rows.iter().filter(|r| r.failed).count(),
        file: mean_prf1(rows.iter().map(|r| &r.file), n),
        func: mean_prf1(rows.iter().map(|r| &r.func), n),
        weighted_f1: mean(rows.iter().map(|r| &r.weighted_f1), n),
        e: mean(rows.iter().map(|r| &r.e), n),
        reward: mean(rows.iter().map(|r| &r.reward), n),
        redundancy_rate: mean(rows.iter().map(|r| &r.redundancy_rate), n),
        n_turns: rational::to_f64(&mean_int(rows.iter().map(|r| r.n_turns as u64), n)),
        n_tool_calls: rational::to_f64(&mean_int(rows.iter().map(|r| r.n_tool_calls as u64), n)),
        wall_seconds: mean(rows.iter().map(|r| &r.wall_seconds), n),
        tokens_k: rational::to_f64(&(mean_int(rows.iter().map(|r| r.tokens_total), n) / rational::int(1000))),
        micro: MicroScores {
            file: micro(sum(|c| c.file_hits), sum(|c| c.file_predicted), sum(|c| c.file_truth)),
            func: micro(sum(|c| c.func_hits), sum(|c| c.func_predicted), sum(|c| c.func_truth)),
        },
        config_fingerprint: config_fingerprint.to_string(),
        notes: vec!["wall_seconds covers the episode loop only and includes any provider queueing time".into()],
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompareReport {
    pub par: Aggregate,
    pub seq: Aggregate,
    /// `par - seq` for every numeric aggregate column, keyed by dotted path.
    pub delta: BTreeMap<String, f64>,
}

fn numeric_leaves(prefix: &str, value: &Value, out: &mut BTreeMap<String, f64>) {
    match value {
        Value::Object(map) => {
            for (k, v) in map {
                let key = if prefix.is_empty() { k.clone() } else { format!("{prefix}.{k}") };
                numeric_leaves(&key, v, out);
            }
        }
        Value::Number(n) => {
            if let Some(f) = n.as_f64() {
                out.insert(prefix.to_string(), f);
            }
        }
        _ => {}
    }
}

pub fn compare_reports(par: &Aggregate, seq: &Aggregate) -> CompareReport {
    let mut p = BTreeMap::new();
    let mut s = BTreeMap::new();
    numeric_leaves("", &serde_json::to_value(par).expect("aggregate serializes"), &mut p);
    numeric_leaves("", &serde_json::to_value(seq).expect("aggregate serializes"), &mut s);
    let delta = p.iter().filter_map(|(k, pv)| s.get(k).map(|sv| (k.clone(), pv - sv))).collect();
    CompareReport { par: par.clone(), seq: seq.clone(), delta }
}
