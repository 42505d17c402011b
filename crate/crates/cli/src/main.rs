//! `locfuse`: run localization episodes, benchmarks, and training-data
//! curation from the command line.
//!
//! Exit codes: 0 success, 1 usage error, 2 data error, 3 driver or
//! transport error.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Args, Parser, Subcommand};
use serde_json::{json, Value};

use locfuse_core::agent_loop::{
    parse_call, presearch_artifact, read_trajectories, run_episode, Budget, EpisodeConfig, EpisodeMeta, FixedClock,
    HttpChatConfig, HttpChatDriver, ModelDriver, ParsedCall, ScriptedDriver, SystemClock, Trajectory,
};
use locfuse_core::bench::{
    compare_reports, factory_for, ingest_dataset, read_dataset, run_benchmark, BenchError, BenchmarkConfig,
};
use locfuse_core::data_pipeline::{
    annotate_rewards, export_sft, filter_sft, FilterThresholds, RewardInput, ScoredTrajectory,
};
use locfuse_core::entity_gain::{GainConfig, GainMode};
use locfuse_core::ground_truth::{AdmissionConfig, IndentDetector, TruthRecord};
use locfuse_core::loc_metrics::{score_trajectory, RewardConfig};
use locfuse_core::rational;
use locfuse_core::repo_tools::{execute_turn, Observation, RepoRoot, ToolCall, ToolLimits};

#[derive(Parser)]
#[command(name = "locfuse", version, about = "Parallel-tool code localization harness")]
struct Cli {
    #[command(flatten)]
    global: GlobalOpts,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct GlobalOpts {
    /// Lines per span entity when scoring information gain.
    #[arg(long, global = true, value_parser = clap::value_parser!(u64).range(1..))]
    chunk_size: Option<u64>,
    /// How calls in the same turn see each other when scoring gain.
    #[arg(long, global = true, value_parser = ["snapshot", "strict"])]
    gain_mode: Option<String>,
}

impl GlobalOpts {
    fn apply(&self, base: GainConfig) -> GainConfig {
        GainConfig {
            chunk_size: self.chunk_size.unwrap_or(base.chunk_size),
            mode: self.gain_mode.as_deref().map_or(base.mode, |m| m.parse::<GainMode>().expect("validated by clap")),
        }
    }
}

#[derive(Subcommand)]
enum Command {
    /// Repository tool operations.
    Tools {
        #[command(subcommand)]
        command: ToolsCommand,
    },
    /// Run one localization episode.
    Run(RunArgs),
    /// Run a benchmark described by a TOML config.
    Bench(BenchArgs),
    /// Score trajectories against ground truth, or re-derive their gains.
    Score(ScoreArgs),
    /// Keep trajectories meeting both the F1 and efficiency floors.
    Filter(FilterArgs),
    /// Compute rewards and group-relative advantages.
    Rewards(RewardsArgs),
    /// Derive ground truth and admission decisions for a dataset.
    ExtractTruth(ExtractArgs),
    /// Run two benchmark configs over the same instances and diff them.
    Compare(CompareArgs),
}

#[derive(Subcommand)]
enum ToolsCommand {
    /// Execute one turn of tool calls and print the observations.
    Exec {
        #[arg(long)]
        repo: PathBuf,
        /// JSON array of {"name": ..., "arguments": {...}} objects.
        #[arg(long)]
        calls: PathBuf,
    },
}

#[derive(Args)]
struct RunArgs {
    #[arg(long)]
    repo: PathBuf,
    /// File holding the issue text.
    #[arg(long)]
    issue: PathBuf,
    #[arg(long, default_value = "http", value_parser = ["http", "scripted"])]
    driver: String,
    /// Action script for the scripted driver.
    #[arg(long)]
    script: Option<PathBuf>,
    #[arg(long, default_value = "local")]
    instance_id: String,
    #[arg(long)]
    max_turns: Option<usize>,
    /// Deterministic timestamps.
    #[arg(long)]
    fixed_clock: bool,
    /// Trajectory output file; stdout when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Also write the pre-search bundle here.
    #[arg(long)]
    bundle: Option<PathBuf>,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, default_value = "bench-out")]
    out: PathBuf,
}

#[derive(Args)]
struct ScoreArgs {
    #[arg(long)]
    trajectories: PathBuf,
    /// Ground-truth JSONL; without it only gains are re-derived.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct FilterArgs {
    /// Scored trajectory JSONL.
    #[arg(long = "in")]
    input: PathBuf,
    /// Minimum weighted F1.
    #[arg(long, default_value_t = 0.8)]
    rho_f: f64,
    /// Minimum tool efficiency.
    #[arg(long, default_value_t = 0.6)]
    rho_e: f64,
    /// Directory for retained.jsonl, rejections.jsonl, sft.jsonl and
    /// filter_meta.json.
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct RewardsArgs {
    /// Scored trajectory JSONL.
    #[arg(long = "in")]
    input: PathBuf,
    /// JSON object mapping instance id to group id; defaults to one group
    /// per instance.
    #[arg(long)]
    groups: Option<PathBuf>,
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct ExtractArgs {
    #[arg(long)]
    dataset: PathBuf,
    /// Repository store; defaults to `repos/` next to the dataset.
    #[arg(long)]
    repos: Option<PathBuf>,
    #[arg(long, default_value_t = 100)]
    min_issue_chars: usize,
    #[arg(long, default_value = ".")]
    out_dir: PathBuf,
}

#[derive(Args)]
struct CompareArgs {
    /// Benchmark config for the parallel-call setup.
    #[arg(long)]
    par: PathBuf,
    /// Benchmark config for the sequential-call setup.
    #[arg(long)]
    seq: PathBuf,
    #[arg(long, default_value = "compare-out")]
    out: PathBuf,
}

/// A failure tagged with its exit code.
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CmdResult = Result<(), Failure>;

trait Classify<T> {
    fn usage(self) -> Result<T, Failure>;
    fn data(self) -> Result<T, Failure>;
    fn driver(self) -> Result<T, Failure>;
}

impl<T, E: Into<anyhow::Error>> Classify<T> for Result<T, E> {
    fn usage(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 1, error: e.into() })
    }

    fn data(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 2, error: e.into() })
    }

    fn driver(self) -> Result<T, Failure> {
        self.map_err(|e| Failure { code: 3, error: e.into() })
    }
}

fn bench_failure(e: BenchError) -> Failure {
    let code = match e {
        BenchError::Config(_) => 1,
        BenchError::Data(_) | BenchError::Io(_) => 2,
        BenchError::Driver(_) => 3,
    };
    Failure { code, error: e.into() }
}

fn read_text(path: &Path) -> Result<String, Failure> {
    std::fs::read_to_string(path).with_context(|| format!("reading {}", path.display())).data()
}

fn write_text(path: Option<&Path>, text: &str) -> CmdResult {
    match path {
        Some(p) => std::fs::write(p, text).with_context(|| format!("writing {}", p.display())).data(),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn jsonl<T: serde::Serialize>(items: &[T]) -> String {
    items.iter().map(|i| serde_json::to_string(i).expect("serializable") + "\n").collect()
}

fn ratio_arg(name: &str, value: f64) -> Result<rational::Ratio, Failure> {
    rational::from_f64_decimal(value).ok_or_else(|| anyhow!("{name} must be a finite number")).usage()
}

fn announce(fingerprint: &str) {
    eprintln!("config_fingerprint: {fingerprint}");
}

fn tools_exec(global: &GlobalOpts, repo: &Path, calls_path: &Path) -> CmdResult {
    let root = RepoRoot::open(repo, repo.display().to_string()).data()?;
    let raw: Value = serde_json::from_str(&read_text(calls_path)?)
        .with_context(|| format!("parsing {}", calls_path.display()))
        .data()?;
    let items = raw.as_array().ok_or_else(|| anyhow!("calls file must hold a JSON array")).data()?;
    let parsed: Vec<ParsedCall> = items.iter().enumerate().map(|(i, v)| parse_call(i, &v.to_string())).collect();
    let valid: Vec<ToolCall> = parsed.iter().filter_map(|c| c.valid().cloned()).collect();
    let limits = ToolLimits::default();
    let mut executed = execute_turn(&root, &valid, &limits).into_iter();
    let observations: Vec<Observation> = parsed
        .iter()
        .map(|c| match c {
            ParsedCall::Valid(_) => executed.next().expect("one observation per valid call"),
            ParsedCall::Invalid { call_index, reason, .. } => {
                Observation::error(*call_index, format!("invalid tool call: {reason}"))
            }
        })
        .collect();
    let cfg = EpisodeConfig { gain: global.apply(GainConfig::default()), limits, budget: Budget::default() };
    announce(&cfg.fingerprint());
    println!("{}", serde_json::to_string_pretty(&observations).expect("serializable"));
    Ok(())
}

fn run_cmd(global: &GlobalOpts, args: &RunArgs) -> CmdResult {
    let root = RepoRoot::open(&args.repo, args.repo.display().to_string()).data()?;
    let issue = read_text(&args.issue)?;
    let mut cfg = EpisodeConfig::default();
    cfg.gain = global.apply(cfg.gain);
    if let Some(n) = args.max_turns {
        cfg.budget.max_turns = n;
    }
    let mut driver: Box<dyn ModelDriver> = match args.driver.as_str() {
        "scripted" => {
            let path =
                args.script.as_ref().ok_or_else(|| anyhow!("--script is required with --driver scripted")).usage()?;
            Box::new(ScriptedDriver::from_json(&read_text(path)?).data()?)
        }
        _ => Box::new(HttpChatDriver::new(HttpChatConfig::from_env().driver()?).driver()?),
    };
    announce(&cfg.fingerprint());
    let meta = EpisodeMeta { instance_id: args.instance_id.clone(), run: 0 };
    let trajectory = if args.fixed_clock {
        run_episode(driver.as_mut(), &root, &issue, &cfg, &FixedClock::default(), &meta)
    } else {
        run_episode(driver.as_mut(), &root, &issue, &cfg, &SystemClock::new(), &meta)
    };
    write_text(args.out.as_deref(), &(trajectory.to_json_line() + "\n"))?;
    if let Some(path) = &args.bundle {
        let bundle = presearch_artifact(&trajectory);
        write_text(Some(path), &(serde_json::to_string_pretty(&bundle).expect("serializable") + "\n"))?;
    }
    match &trajectory.driver_error {
        Some(e) => Err(anyhow!("episode stopped: {e}")).driver(),
        None => Ok(()),
    }
}

fn load_bench_config(global: &GlobalOpts, path: &Path) -> Result<BenchmarkConfig, Failure> {
    let mut cfg = BenchmarkConfig::load(path).map_err(bench_failure)?;
    cfg.gain = global.apply(cfg.gain);
    cfg.validate().map_err(bench_failure)?;
    Ok(cfg)
}

fn bench_once(cfg: &BenchmarkConfig, out: &Path) -> Result<locfuse_core::bench::BenchOutput, Failure> {
    let factory = factory_for(&cfg.driver).driver()?;
    let output = run_benchmark(cfg, factory.as_ref()).map_err(bench_failure)?;
    output.write(out).map_err(bench_failure)?;
    Ok(output)
}

fn bench_cmd(global: &GlobalOpts, args: &BenchArgs) -> CmdResult {
    let cfg = load_bench_config(global, &args.config)?;
    announce(&cfg.fingerprint());
    let output = bench_once(&cfg, &args.out)?;
    println!("{}", serde_json::to_string_pretty(&output.aggregate).expect("serializable"));
    Ok(())
}

fn compare_cmd(global: &GlobalOpts, args: &CompareArgs) -> CmdResult {
    let par = load_bench_config(global, &args.par)?;
    let seq = load_bench_config(global, &args.seq)?;
    announce(&par.fingerprint());
    announce(&seq.fingerprint());
    let par_out = bench_once(&par, &args.out.join("par"))?;
    let seq_out = bench_once(&seq, &args.out.join("seq"))?;
    let report = compare_reports(&par_out.aggregate, &seq_out.aggregate);
    let text = serde_json::to_string_pretty(&report).expect("serializable") + "\n";
    write_text(Some(&args.out.join("compare.json")), &text)?;
    print!("{text}");
    Ok(())
}

fn score_cmd(global: &GlobalOpts, args: &ScoreArgs) -> CmdResult {
    let trajectories = read_trajectories(&read_text(&args.trajectories)?).map_err(|e| anyhow!(e)).data()?;
    let reward_cfg = RewardConfig::default();
    let Some(truth_path) = &args.truth else {
        let reports: Vec<_> = trajectories.iter().map(|t| t.gain_report(&global.apply(t.config.gain))).collect();
        return write_text(args.out.as_deref(), &jsonl(&reports));
    };
    let truths: BTreeMap<String, TruthRecord> = read_text(truth_path)?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str::<TruthRecord>(l).map(|t| (t.id.clone(), t)))
        .collect::<Result<_, _>>()
        .with_context(|| format!("parsing {}", truth_path.display()))
        .data()?;
    let mut scored = Vec::new();
    let mut missing = Vec::new();
    for t in trajectories {
        let Some(truth) = truths.get(&t.instance_id) else {
            missing.push(t.instance_id.clone());
            continue;
        };
        let gain_cfg = global.apply(t.config.gain);
        announce(&EpisodeConfig { gain: gain_cfg, ..t.config.clone() }.fingerprint());
        let e = t.gain_report(&gain_cfg).e;
        let score = score_trajectory(&t.instance_id, &t.answer, &truth.truth(), &e, &reward_cfg);
        scored.push(ScoredTrajectory { trajectory: t, score });
    }
    write_text(args.out.as_deref(), &jsonl(&scored))?;
    if missing.is_empty() {
        Ok(())
    } else {
        Err(anyhow!("no ground truth for: {}", missing.join(", "))).data()
    }
}

fn filter_cmd(args: &FilterArgs) -> CmdResult {
    let thresholds =
        FilterThresholds { rho_f: ratio_arg("--rho-f", args.rho_f)?, rho_e: ratio_arg("--rho-e", args.rho_e)? };
    thresholds.validate().usage()?;
    let text = read_text(&args.input)?;
    let outcome = filter_sft(text.lines(), &thresholds);
    let mut retained: Vec<Trajectory> = Vec::new();
    for line in &outcome.retained {
        let t: ScoredTrajectory = serde_json::from_str(line).context("retained record is not a trajectory").data()?;
        retained.push(t.trajectory);
    }
    let (sft, skipped) = export_sft(&retained);
    std::fs::create_dir_all(&args.out_dir).data()?;
    let retained_text: String = outcome.retained.iter().map(|l| format!("{l}\n")).collect();
    write_text(Some(&args.out_dir.join("retained.jsonl")), &retained_text)?;
    write_text(Some(&args.out_dir.join("rejections.jsonl")), &jsonl(&outcome.rejections))?;
    write_text(Some(&args.out_dir.join("sft.jsonl")), &jsonl(&sft))?;
    write_text(Some(&args.out_dir.join("sft_skipped.jsonl")), &jsonl(&skipped))?;
    let defaults = FilterThresholds::default();
    let meta = json!({
        "thresholds": thresholds,
        "thresholds_are_defaults": thresholds == defaults,
        "config_fingerprint": locfuse_core::agent_loop::fingerprint(&thresholds),
        "n_input": outcome.retained.len() + outcome.rejections.len(),
        "n_retained": outcome.retained.len(),
        "n_rejected": outcome.rejections.len(),
        "n_sft": sft.len(),
        "n_sft_skipped": skipped.len(),
    });
    let meta_text = serde_json::to_string_pretty(&meta).expect("serializable") + "\n";
    write_text(Some(&args.out_dir.join("filter_meta.json")), &meta_text)?;
    announce(meta["config_fingerprint"].as_str().unwrap_or_default());
    print!("{meta_text}");
    Ok(())
}

fn rewards_cmd(args: &RewardsArgs) -> CmdResult {
    let groups: BTreeMap<String, String> = match &args.groups {
        Some(p) => serde_json::from_str(&read_text(p)?).with_context(|| format!("parsing {}", p.display())).data()?,
        None => BTreeMap::new(),
    };
    let mut inputs = Vec::new();
    for (i, line) in read_text(&args.input)?.lines().enumerate().filter(|(_, l)| !l.trim().is_empty()) {
        let t: ScoredTrajectory =
            serde_json::from_str(line).with_context(|| format!("line {}: not a scored trajectory", i + 1)).data()?;
        let id = t.trajectory.instance_id.clone();
        inputs.push(RewardInput {
            group_id: groups.get(&id).cloned().unwrap_or_else(|| id.clone()),
            id,
            run: t.trajectory.run,
            score: t.score.score(),
            efficiency: t.trajectory.efficiency,
        });
    }
    let cfg = RewardConfig::default();
    announce(&locfuse_core::agent_loop::fingerprint(&cfg));
    write_text(args.out.as_deref(), &jsonl(&annotate_rewards(&inputs, &cfg)))
}

fn extract_cmd(args: &ExtractArgs) -> CmdResult {
    let records = read_dataset(&args.dataset).map_err(bench_failure)?;
    let store = args.repos.clone().unwrap_or_else(|| args.dataset.parent().unwrap_or(Path::new(".")).join("repos"));
    let cfg = AdmissionConfig { min_issue_chars: args.min_issue_chars };
    announce(&locfuse_core::agent_loop::fingerprint(&cfg));
    let ingested = ingest_dataset(&records, &store, &IndentDetector, &cfg);
    std::fs::create_dir_all(&args.out_dir).data()?;
    write_text(Some(&args.out_dir.join("truth.jsonl")), &jsonl(&ingested.truths))?;
    write_text(Some(&args.out_dir.join("manifest.jsonl")), &jsonl(&ingested.manifest))?;
    let mut excluded: BTreeMap<&str, usize> = BTreeMap::new();
    for entry in &ingested.manifest {
        if let Some(r) = entry.reason {
            *excluded.entry(r.as_str()).or_default() += 1;
        }
    }
    let summary = json!({
        "n_records": records.len(),
        "n_admissible": ingested.instances.len(),
        "excluded": excluded,
        "n_errors": ingested.manifest.iter().filter(|m| m.error.is_some()).count(),
    });
    println!("{}", serde_json::to_string_pretty(&summary).expect("serializable"));
    Ok(())
}

fn dispatch(cli: Cli) -> CmdResult {
    let g = &cli.global;
    match &cli.command {
        Command::Tools { command: ToolsCommand::Exec { repo, calls } } => tools_exec(g, repo, calls),
        Command::Run(a) => run_cmd(g, a),
        Command::Bench(a) => bench_cmd(g, a),
        Command::Score(a) => score_cmd(g, a),
        Command::Filter(a) => filter_cmd(a),
        Command::Rewards(a) => rewards_cmd(a),
        Command::ExtractTruth(a) => extract_cmd(a),
        Command::Compare(a) => compare_cmd(g, a),
    }
}

fn report(code: u8, error: impl Display) -> ExitCode {
    eprintln!("error: {error:#}");
    ExitCode::from(code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            let _ = e.print();
            return ExitCode::SUCCESS;
        }
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(1);
        }
    };
    match dispatch(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure { code, error }) => report(code, format!("{error:#}")),
    }
}
