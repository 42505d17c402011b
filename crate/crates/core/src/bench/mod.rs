//! Benchmark orchestration: dataset ingestion, concurrent episodes over the
//! admitted instances, per-episode scoring, and aggregate reports.

mod config;
mod ingest;
mod report;

use std::path::{Path, PathBuf};
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use crate::agent_loop::{
    run_episode, Clock, DriverError, EpisodeMeta, FixedClock, HttpChatConfig, HttpChatDriver, ModelDriver,
    ScriptedDriver, SystemClock, Trajectory,
};
use crate::ground_truth::{IndentDetector, InstanceRecord};
use crate::loc_metrics::score_trajectory;
use crate::repo_tools::RepoRoot;

pub use config::{BenchmarkConfig, DriverSettings};
pub use ingest::{ingest_dataset, read_dataset, resolve_repo, AdmittedInstance, Ingested, ManifestEntry, RepoSnapshot};
pub use report::{aggregate, compare_reports, Aggregate, BenchRow, CompareReport, MeanPrf1};

#[derive(Debug, Error)]
pub enum BenchError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("driver: {0}")]
    Driver(#[from] DriverError),
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
}

/// Builds a fresh driver for each episode.
pub trait DriverFactory: Sync {
    fn make(&self, instance: &InstanceRecord, run: usize) -> Result<Box<dyn ModelDriver>, DriverError>;
}

pub struct ScriptDirFactory {
    pub dir: PathBuf,
}

impl DriverFactory for ScriptDirFactory {
    fn make(&self, instance: &InstanceRecord, run: usize) -> Result<Box<dyn ModelDriver>, DriverError> {
        let per_run = self.dir.join(format!("{}.{run}.json", instance.id));
        let path = if per_run.is_file() { per_run } else { self.dir.join(format!("{}.json", instance.id)) };
        let text =
            std::fs::read_to_string(&path).map_err(|e| DriverError::Config(format!("{}: {e}", path.display())))?;
        Ok(Box::new(ScriptedDriver::from_json(&text)?))
    }
}

pub struct HttpFactory {
    pub cfg: HttpChatConfig,
}

impl DriverFactory for HttpFactory {
    fn make(&self, _: &InstanceRecord, _: usize) -> Result<Box<dyn ModelDriver>, DriverError> {
        Ok(Box::new(HttpChatDriver::new(self.cfg.clone())?))
    }
}

/// The factory described by the config's `[driver]` table.
pub fn factory_for(settings: &DriverSettings) -> Result<Box<dyn DriverFactory>, DriverError> {
    match settings {
        DriverSettings::Scripted { script_dir } => Ok(Box::new(ScriptDirFactory { dir: script_dir.clone() })),
        DriverSettings::Http { endpoint, model, temperature, timeout_seconds } => {
            let env = HttpChatConfig::from_env();
            let endpoint = match (endpoint, &env) {
                (Some(e), _) => e.clone(),
                (None, Ok(env)) => env.endpoint.clone(),
                (None, Err(e)) => return Err(e.clone()),
            };
            let model = match (model, &env) {
                (Some(m), _) => m.clone(),
                (None, Ok(env)) => env.model.clone(),
                (None, Err(e)) => return Err(e.clone()),
            };
            Ok(Box::new(HttpFactory {
                cfg: HttpChatConfig {
                    endpoint,
                    model,
                    api_key: std::env::var(crate::agent_loop::http::ENV_API_KEY).ok(),
                    temperature: temperature.unwrap_or(0.0),
                    timeout: Duration::from_secs(timeout_seconds.unwrap_or(300)),
                },
            }))
        }
    }
}

#[derive(Debug, Clone)]
pub struct BenchOutput {
    pub config_fingerprint: String,
    pub manifest: Vec<ManifestEntry>,
    pub truths: Vec<crate::ground_truth::TruthRecord>,
    pub trajectories: Vec<Trajectory>,
    pub rows: Vec<BenchRow>,
    pub aggregate: Aggregate,
}

fn failed_trajectory(instance: &InstanceRecord, run: usize, cfg: &BenchmarkConfig, reason: String) -> Trajectory {
    let episode = cfg.episode_config();
    Trajectory {
        instance_id: instance.id.clone(),
        run,
        query: instance.issue.clone(),
        config_fingerprint: episode.fingerprint(),
        config: episode,
        turns: Vec::new(),
        answer: crate::agent_loop::AnswerOutcome::Failed { raw_text: String::new(), reason: reason.clone() },
        efficiency: crate::rational::zero(),
        cost: crate::agent_loop::CostRecord {
            n_turns: 0,
            n_tool_calls: 0,
            wall_seconds: crate::rational::zero(),
            tokens_prompt: 0,
            tokens_completion: 0,
            tokens_total: 0,
            tokens_estimated: false,
        },
        driver_error: Some(reason),
    }
}

fn run_one(
    instance: &AdmittedInstance,
    run: usize,
    cfg: &BenchmarkConfig,
    store: &Path,
    factory: &dyn DriverFactory,
) -> Trajectory {
    let record = &instance.record;
    let snapshot = match resolve_repo(store, &record.repo) {
        Ok(s) => s,
        Err(e) => return failed_trajectory(record, run, cfg, e),
    };
    let root = match RepoRoot::open(snapshot.path(), &record.repo) {
        Ok(r) => r,
        Err(e) => return failed_trajectory(record, run, cfg, e.to_string()),
    };
    let mut driver = match factory.make(record, run) {
        Ok(d) => d,
        Err(e) => return failed_trajectory(record, run, cfg, e.to_string()),
    };
    let clock: Box<dyn Clock> =
        if cfg.fixed_clock { Box::new(FixedClock::default()) } else { Box::new(SystemClock::new()) };
    let meta = EpisodeMeta { instance_id: record.id.clone(), run };
    let episode = cfg.episode_config();
    let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
        run_episode(driver.as_mut(), &root, &record.issue, &episode, clock.as_ref(), &meta)
    }));
    outcome.unwrap_or_else(|_| failed_trajectory(record, run, cfg, "episode panicked".into()))
}

/// Runs every admitted instance `runs_per_instance` times with up to
/// `parallelism` concurrent episodes. Rows come back in (instance, run)
/// order regardless of scheduling.
pub fn run_admitted(
    cfg: &BenchmarkConfig,
    instances: &[AdmittedInstance],
    factory: &dyn DriverFactory,
) -> Result<(Vec<Trajectory>, Vec<BenchRow>), BenchError> {
    let jobs: Vec<(usize, usize)> =
        (0..instances.len()).flat_map(|i| (0..cfg.runs_per_instance).map(move |r| (i, r))).collect();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.parallelism.max(1))
        .build()
        .map_err(|e| BenchError::Config(e.to_string()))?;
    let trajectories: Vec<Trajectory> = pool.install(|| {
        jobs.par_iter().map(|&(i, run)| run_one(&instances[i], run, cfg, &cfg.repo_store_path, factory)).collect()
    });
    let rows = trajectories
        .iter()
        .zip(&jobs)
        .map(|(t, &(i, _))| {
            let score = score_trajectory(&t.instance_id, &t.answer, &instances[i].truth, &t.efficiency, &cfg.reward);
            BenchRow::new(t, &score)
        })
        .collect();
    Ok((trajectories, rows))
}

/// Ingests the dataset and runs the full benchmark.
pub fn run_benchmark(cfg: &BenchmarkConfig, factory: &dyn DriverFactory) -> Result<BenchOutput, BenchError> {
    cfg.validate()?;
    let records = read_dataset(&cfg.dataset_path)?;
    let ingested = ingest_dataset(&records, &cfg.repo_store_path, &IndentDetector, &cfg.admission);
    let (trajectories, rows) = run_admitted(cfg, &ingested.instances, factory)?;
    let fingerprint = cfg.fingerprint();
    let aggregate = aggregate(&rows, &fingerprint);
    Ok(BenchOutput {
        config_fingerprint: fingerprint,
        manifest: ingested.manifest,
        truths: ingested.truths,
        trajectories,
        rows,
        aggregate,
    })
}

fn write_jsonl<T: serde::Serialize>(path: &Path, items: &[T]) -> Result<(), BenchError> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).map_err(|e| BenchError::Data(e.to_string()))?);
        text.push('\n');
    }
    std::fs::write(path, text)?;
    Ok(())
}

impl BenchOutput {
    /// Writes `rows.jsonl`, `aggregate.json`, `manifest.jsonl`,
    /// `truth.jsonl`, and `trajectories.jsonl` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<(), BenchError> {
        std::fs::create_dir_all(dir)?;
        write_jsonl(&dir.join("rows.jsonl"), &self.rows)?;
        write_jsonl(&dir.join("manifest.jsonl"), &self.manifest)?;
        write_jsonl(&dir.join("truth.jsonl"), &self.truths)?;
        write_jsonl(&dir.join("trajectories.jsonl"), &self.trajectories)?;
        let agg = serde_json::to_string_pretty(&self.aggregate).map_err(|e| BenchError::Data(e.to_string()))?;
        std::fs::write(dir.join("aggregate.json"), agg + "\n")?;
        Ok(())
    }
}
