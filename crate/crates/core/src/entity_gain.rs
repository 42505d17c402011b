//! Discovered-information bookkeeping: entities, the cumulative history, and
//! per-call information gain.
//!
//! A call's gain is the fraction of the entities it returned that were not
//! already in the history; trajectory efficiency is the mean gain over every
//! call, with a trajectory of zero calls scoring 0. Entities are either a
//! file identity (from `glob` and non-content `grep`) or an aligned line
//! chunk of a file (from `read_file` and content `grep`). Chunk `j` covers
//! lines `chunk_size*j + 1 ..= chunk_size*(j+1)`.
//!
//! File entities and span entities of the same path never cover each other.

use std::collections::BTreeSet;

use serde::{Deserialize, Serialize};

use crate::rational::{self, Ratio};
use crate::repo_tools::{GrepMode, Observation, ObservationStatus, ToolCall, ToolRequest};

pub const DEFAULT_CHUNK_SIZE: u64 = 50;

#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Entity {
    File { path: String },
    Span { path: String, chunk_index: u64 },
}

impl Entity {
    pub fn file(path: impl Into<String>) -> Self {
        Entity::File { path: path.into() }
    }

    pub fn span(path: impl Into<String>, chunk_index: u64) -> Self {
        Entity::Span { path: path.into(), chunk_index }
    }

    pub fn path(&self) -> &str {
        match self {
            Entity::File { path } | Entity::Span { path, .. } => path,
        }
    }
}

pub type EntitySet = BTreeSet<Entity>;

/// How calls inside the same turn see each other.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GainMode {
    /// Every call is measured against the history frozen at turn start.
    #[default]
    Snapshot,
    /// Call `i` also sees the entities of calls `0..i` of the same turn.
    Strict,
}

impl GainMode {
    pub fn as_str(self) -> &'static str {
        match self {
            GainMode::Snapshot => "snapshot",
            GainMode::Strict => "strict",
        }
    }
}

impl std::str::FromStr for GainMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "snapshot" => Ok(GainMode::Snapshot),
            "strict" => Ok(GainMode::Strict),
            other => Err(format!("unknown gain mode {other:?} (expected snapshot or strict)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(default)]
pub struct GainConfig {
    pub mode: GainMode,
    pub chunk_size: u64,
}

impl Default for GainConfig {
    fn default() -> Self {
        Self { mode: GainMode::Snapshot, chunk_size: DEFAULT_CHUNK_SIZE }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GainRecord {
    pub call_index: usize,
    pub gain: Ratio,
    pub novel_count: usize,
    pub total_count: usize,
}

impl GainRecord {
    pub fn new(call_index: usize, novel_count: usize, total_count: usize) -> Self {
        let gain =
            if total_count == 0 { rational::zero() } else { rational::ratio(novel_count as i64, total_count as i64) };
        Self { call_index, gain, novel_count, total_count }
    }
}

#[derive(Serialize, Deserialize)]
struct GainRecordWire {
    call_index: usize,
    gain: f64,
    novel: usize,
    total: usize,
}

impl Serialize for GainRecord {
    fn serialize<S: serde::Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        GainRecordWire {
            call_index: self.call_index,
            gain: rational::to_f64(&self.gain),
            novel: self.novel_count,
            total: self.total_count,
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for GainRecord {
    /// The exact gain is rebuilt from the counts; the decimal is informational.
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        let w = GainRecordWire::deserialize(d)?;
        if w.novel > w.total {
            return Err(serde::de::Error::custom("novel count exceeds total"));
        }
        Ok(GainRecord::new(w.call_index, w.novel, w.total))
    }
}

fn chunk_of(line: u64, chunk_size: u64) -> u64 {
    (line.max(1) - 1) / chunk_size.max(1)
}

/// Entities returned by one call. Empty and error observations return none.
pub fn entities_of(observation: &Observation, call: &ToolCall, chunk_size: u64) -> EntitySet {
    if observation.status != ObservationStatus::Ok {
        return EntitySet::new();
    }
    let spans = match &call.request {
        ToolRequest::ReadFile(_) => true,
        ToolRequest::Grep(a) => a.output_mode.unwrap_or_default() == GrepMode::Content,
        ToolRequest::Glob(_) => false,
    };
    observation
        .entries
        .iter()
        .filter_map(|entry| {
            if spans {
                entry.line.map(|l| Entity::span(&entry.path, chunk_of(l, chunk_size)))
            } else {
                Some(Entity::file(&entry.path))
            }
        })
        .collect()
}

/// `|E \ H| / |E|`, or 0 when `E` is empty.
pub fn information_gain(returned: &EntitySet, history: &EntitySet) -> Ratio {
    let (novel, total) = novelty(returned, history);
    GainRecord::new(0, novel, total).gain
}

fn novelty(returned: &EntitySet, history: &EntitySet) -> (usize, usize) {
    let novel = returned.iter().filter(|e| !history.contains(e)).count();
    (novel, returned.len())
}

/// Mean gain over all calls; 0 for a trajectory with no calls.
pub fn trajectory_efficiency(gains: &[GainRecord]) -> Ratio {
    if gains.is_empty() {
        return rational::zero();
    }
    let sum: Ratio = gains.iter().map(|g| g.gain.clone()).sum();
    sum / rational::int(gains.len() as i64)
}

/// Fraction of calls whose gain is at most `threshold`; 0 for no calls.
pub fn redundancy_rate(gains: &[GainRecord], threshold: &Ratio) -> Ratio {
    if gains.is_empty() {
        return rational::zero();
    }
    let redundant = gains.iter().filter(|g| &g.gain <= threshold).count();
    rational::ratio(redundant as i64, gains.len() as i64)
}

/// Cumulative set of discovered entities. Single writer per trajectory.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct History {
    discovered: EntitySet,
    turn_sizes: Vec<usize>,
}

impl History {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn discovered(&self) -> &EntitySet {
        &self.discovered
    }

    /// `|discovered|` after each completed turn.
    pub fn turn_sizes(&self) -> &[usize] {
        &self.turn_sizes
    }

    /// Scores one turn's calls (ordered by call index) and absorbs their
    /// entities into the history.
    pub fn apply_turn(&mut self, per_call: &[EntitySet], mode: GainMode) -> Vec<GainRecord> {
        let mut records = Vec::with_capacity(per_call.len());
        let mut absorbed: EntitySet = EntitySet::new();
        for (i, entities) in per_call.iter().enumerate() {
            let (novel, total) = match mode {
                GainMode::Snapshot => novelty(entities, &self.discovered),
                GainMode::Strict => {
                    let novel =
                        entities.iter().filter(|e| !self.discovered.contains(e) && !absorbed.contains(e)).count();
                    (novel, entities.len())
                }
            };
            records.push(GainRecord::new(i, novel, total));
            absorbed.extend(entities.iter().cloned());
        }
        self.discovered.extend(absorbed);
        self.turn_sizes.push(self.discovered.len());
        records
    }
}

/// Gains and efficiency re-derived from raw observations.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GainReport {
    pub per_call_gains: Vec<Vec<GainRecord>>,
    #[serde(with = "rational::as_f64")]
    pub e: Ratio,
    #[serde(with = "rational::as_f64")]
    pub redundancy_rate: Ratio,
    pub mode: GainMode,
    pub chunk_size: u64,
}

impl GainReport {
    pub fn flat_gains(&self) -> Vec<GainRecord> {
        self.per_call_gains.iter().flatten().cloned().collect()
    }
}

/// Replays a sequence of turns through a fresh history. Each turn lists its
/// observations with the originating call, or `None` for a call that failed
/// validation (which always contributes an empty entity set).
pub fn score_turns<'a, T>(turns: T, cfg: &GainConfig) -> GainReport
where
    T: IntoIterator<Item = Vec<(Option<&'a ToolCall>, &'a Observation)>>,
{
    let mut history = History::new();
    let mut per_call_gains = Vec::new();
    for turn in turns {
        if turn.is_empty() {
            continue;
        }
        let sets: Vec<EntitySet> = turn
            .iter()
            .map(|(call, obs)| match call {
                Some(c) => entities_of(obs, c, cfg.chunk_size),
                None => EntitySet::new(),
            })
            .collect();
        let mut gains = history.apply_turn(&sets, cfg.mode);
        for (g, (_, obs)) in gains.iter_mut().zip(&turn) {
            g.call_index = obs.call_index;
        }
        per_call_gains.push(gains);
    }
    let flat: Vec<GainRecord> = per_call_gains.iter().flatten().cloned().collect();
    GainReport {
        e: trajectory_efficiency(&flat),
        redundancy_rate: redundancy_rate(&flat, &rational::zero()),
        per_call_gains,
        mode: cfg.mode,
        chunk_size: cfg.chunk_size,
    }
}
