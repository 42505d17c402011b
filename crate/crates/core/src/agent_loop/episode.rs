use std::sync::atomic::{AtomicU64, Ordering};
use std::time::Instant;

use super::action::{parse_action, Action, ParsedCall};
use super::answer::{parse_answer, AnswerOutcome};
use super::driver::{ChatMessage, DriverError, DriverReply, ModelDriver, Role};
use super::prompt::{render_observations, FORCED_ANSWER_PROMPT, SYSTEM_PROMPT};
use super::trajectory::{CostRecord, EpisodeConfig, Trajectory, Turn};
use crate::entity_gain::{entities_of, trajectory_efficiency, EntitySet, History};
use crate::rational::{self, Ratio};
use crate::repo_tools::{execute_turn, Observation, RepoRoot, ToolCall};

/// Source of episode timestamps, in seconds.
pub trait Clock: Send + Sync {
    fn now(&self) -> f64;
}

/// Monotonic seconds since construction.
#[derive(Debug)]
pub struct SystemClock(Instant);

impl SystemClock {
    pub fn new() -> Self {
        Self(Instant::now())
    }
}

impl Default for SystemClock {
    fn default() -> Self {
        Self::new()
    }
}

impl Clock for SystemClock {
    fn now(&self) -> f64 {
        self.0.elapsed().as_secs_f64()
    }
}

/// Deterministic clock: the n-th reading is `n * step`.
#[derive(Debug)]
pub struct FixedClock {
    readings: AtomicU64,
    step: f64,
}

impl FixedClock {
    pub fn new(step: f64) -> Self {
        Self { readings: AtomicU64::new(0), step }
    }
}

impl Default for FixedClock {
    fn default() -> Self {
        Self::new(1.0)
    }
}

impl Clock for FixedClock {
    fn now(&self) -> f64 {
        self.readings.fetch_add(1, Ordering::SeqCst) as f64 * self.step
    }
}

/// Token fallback: `ceil(utf8_bytes / 4)`.
pub fn estimate_tokens(text: &str) -> u64 {
    (text.len() as u64).div_ceil(4)
}

#[derive(Default)]
struct TokenTally {
    prompt: u64,
    completion: u64,
    estimated: bool,
}

impl TokenTally {
    fn record(&mut self, messages: &[ChatMessage], reply: &DriverReply) {
        match reply.usage {
            Some(u) => {
                self.prompt += u.prompt_tokens;
                self.completion += u.completion_tokens;
            }
            None => {
                self.prompt += messages.iter().map(|m| estimate_tokens(&m.content)).sum::<u64>();
                self.completion += estimate_tokens(&reply.text);
                self.estimated = true;
            }
        }
    }
}

/// Identifies the episode inside a batch.
#[derive(Debug, Clone, Default)]
pub struct EpisodeMeta {
    pub instance_id: String,
    pub run: usize,
}

struct Episode<'a> {
    driver: &'a mut dyn ModelDriver,
    root: &'a RepoRoot,
    cfg: &'a EpisodeConfig,
    clock: &'a dyn Clock,
    messages: Vec<ChatMessage>,
    turns: Vec<Turn>,
    history: History,
    tokens: TokenTally,
    n_calls: usize,
}

impl Episode<'_> {
    fn ask(&mut self) -> Result<DriverReply, DriverError> {
        let mut attempt = 0;
        loop {
            match self.driver.complete(&self.messages) {
                Ok(reply) => {
                    self.tokens.record(&self.messages, &reply);
                    return Ok(reply);
                }
                Err(e) if e.is_retryable() && attempt < self.cfg.budget.max_retries => attempt += 1,
                Err(e) => return Err(e),
            }
        }
    }

    fn exhausted(&self, started: f64) -> bool {
        let b = &self.cfg.budget;
        let tool_turns = self.turns.len();
        tool_turns >= b.max_turns
            || self.n_calls >= b.max_total_calls
            || b.wall_seconds.is_some_and(|w| self.clock.now() - started >= w)
    }

    fn terminal_turn(&mut self, text: String, started_at: f64) -> AnswerOutcome {
        let answer = match parse_answer(&text) {
            AnswerOutcome::Parsed(a) => AnswerOutcome::Parsed(a.relativize(self.root.path())),
            failed => failed,
        };
        self.messages.push(ChatMessage::new(Role::Assistant, text.clone()));
        self.turns.push(Turn {
            index: self.turns.len() + 1,
            action_text: text,
            calls: Vec::new(),
            observations: Vec::new(),
            gains: Vec::new(),
            started_at,
            ended_at: self.clock.now(),
        });
        answer
    }

    fn tool_turn(&mut self, text: String, calls: Vec<ParsedCall>, started_at: f64) {
        let valid: Vec<ToolCall> = calls.iter().filter_map(|c| c.valid().cloned()).collect();
        let mut executed = execute_turn(self.root, &valid, &self.cfg.limits).into_iter();
        let observations: Vec<Observation> = calls
            .iter()
            .map(|c| match c {
                ParsedCall::Valid(_) => executed.next().expect("one observation per valid call"),
                ParsedCall::Invalid { call_index, reason, .. } => {
                    Observation::error(*call_index, format!("invalid tool call: {reason}"))
                }
            })
            .collect();
        let sets: Vec<EntitySet> = calls
            .iter()
            .zip(&observations)
            .map(|(c, o)| match c.valid() {
                Some(call) => entities_of(o, call, self.cfg.gain.chunk_size),
                None => EntitySet::new(),
            })
            .collect();
        let mut gains = self.history.apply_turn(&sets, self.cfg.gain.mode);
        for (g, c) in gains.iter_mut().zip(&calls) {
            g.call_index = c.call_index();
        }
        self.n_calls += calls.len();
        self.messages.push(ChatMessage::new(Role::Assistant, text.clone()));
        self.messages.push(ChatMessage::new(Role::Tool, render_observations(&calls, &observations)));
        self.turns.push(Turn {
            index: self.turns.len() + 1,
            action_text: text,
            calls,
            observations,
            gains,
            started_at,
            ended_at: self.clock.now(),
        });
    }
}

/// Runs one localization episode to completion. Always returns a trajectory;
/// driver failures are recorded in it rather than returned.
pub fn run_episode(
    driver: &mut dyn ModelDriver,
    root: &RepoRoot,
    query: &str,
    cfg: &EpisodeConfig,
    clock: &dyn Clock,
    meta: &EpisodeMeta,
) -> Trajectory {
    let started = clock.now();
    let mut ep = Episode {
        driver,
        root,
        cfg,
        clock,
        messages: vec![ChatMessage::new(Role::System, SYSTEM_PROMPT), ChatMessage::new(Role::User, query)],
        turns: Vec::new(),
        history: History::new(),
        tokens: TokenTally::default(),
        n_calls: 0,
    };
    let mut driver_error = None;
    let answer = loop {
        if ep.exhausted(started) {
            ep.messages.push(ChatMessage::new(Role::User, FORCED_ANSWER_PROMPT));
            let turn_start = clock.now();
            match ep.ask() {
                Ok(reply) => {
                    let forced_calls = matches!(parse_action(&reply.text), Action::Calls(_));
                    let answer = ep.terminal_turn(reply.text, turn_start);
                    break match answer {
                        AnswerOutcome::Parsed(_) if !forced_calls => answer,
                        other => AnswerOutcome::Failed {
                            raw_text: other.raw_text().to_string(),
                            reason: "budget exhausted without a final answer".into(),
                        },
                    };
                }
                Err(e) => {
                    driver_error = Some(e.to_string());
                    break AnswerOutcome::Failed { raw_text: String::new(), reason: e.to_string() };
                }
            }
        }
        let turn_start = clock.now();
        let reply = match ep.ask() {
            Ok(r) => r,
            Err(e) => {
                driver_error = Some(e.to_string());
                break AnswerOutcome::Failed { raw_text: String::new(), reason: e.to_string() };
            }
        };
        match parse_action(&reply.text) {
            Action::Final => break ep.terminal_turn(reply.text, turn_start),
            Action::Calls(calls) => ep.tool_turn(reply.text, calls, turn_start),
        }
    };
    let finished = clock.now();
    let gains: Vec<_> = ep.turns.iter().flat_map(|t| t.gains.iter().cloned()).collect();
    let efficiency = trajectory_efficiency(&gains);
    let span_start = ep.turns.first().map_or(started, |t| t.started_at);
    let span_end = ep.turns.last().map_or(finished, |t| t.ended_at);
    let cost = CostRecord {
        n_turns: ep.turns.len(),
        n_tool_calls: ep.n_calls,
        wall_seconds: seconds(span_end - span_start),
        tokens_prompt: ep.tokens.prompt,
        tokens_completion: ep.tokens.completion,
        tokens_total: ep.tokens.prompt + ep.tokens.completion,
        tokens_estimated: ep.tokens.estimated,
    };
    Trajectory {
        instance_id: meta.instance_id.clone(),
        run: meta.run,
        query: query.to_string(),
        config_fingerprint: cfg.fingerprint(),
        config: cfg.clone(),
        turns: ep.turns,
        answer,
        efficiency,
        cost,
        driver_error,
    }
}

fn seconds(value: f64) -> Ratio {
    rational::from_f64_decimal(value.max(0.0)).unwrap_or_else(rational::zero)
}
