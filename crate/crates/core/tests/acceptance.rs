//! Acceptance suite: one PASS/FAIL line per criterion, nonzero exit on any
//! failure.

mod common;

use std::collections::{BTreeMap, BTreeSet};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::{Duration, Instant};

use common::fuzz::{random_call, random_repo};
use common::*;
use locfuse_core::agent_loop::{run_episode, EpisodeConfig, EpisodeMeta, FixedClock, ScriptedDriver, Trajectory};
use locfuse_core::bench::ingest_dataset;
use locfuse_core::data_pipeline::{filter_sft, FilterThresholds, RejectReason};
use locfuse_core::entity_gain::{
    entities_of, redundancy_rate, trajectory_efficiency, Entity, EntitySet, GainMode, History,
};
use locfuse_core::ground_truth::TruthRecord;
use locfuse_core::ground_truth::{
    apply_file_patch, derive_ground_truth, load_images, parse_patch, AdmissionConfig, FileChange, IndentDetector,
};
use locfuse_core::loc_metrics::{prf1, reward, score_trajectory, weighted_f1, EntityId, RewardConfig};
use locfuse_core::rational::{int, ratio, zero, Ratio};
use locfuse_core::repo_tools::{
    execute_turn, glob, read_file, run_call, GlobArgs, ReadFileArgs, RepoRoot, ToolCall, ToolLimits,
};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

type Outcome = Result<(), String>;
type Criterion = (&'static str, fn() -> Outcome);

macro_rules! ensure {
    ($cond:expr, $($msg:tt)+) => {
        if !$cond {
            return Err(format!($($msg)+));
        }
    };
}

fn within(start: Instant, limit: Duration, what: &str) -> Outcome {
    let took = start.elapsed();
    ensure!(took < limit, "{what} took {took:?}, limit {limit:?}");
    Ok(())
}

fn metric_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(1);
    let start = Instant::now();
    let pool: Vec<String> = (0..12).map(|i| format!("src/m{i}.py")).collect();
    let pick = |rng: &mut StdRng| -> Vec<String> {
        (0..rng.gen_range(0..8)).map(|_| pool[rng.gen_range(0..pool.len())].clone()).collect()
    };
    for case in 0..10_000 {
        let (pred, truth) = (pick(&mut rng), pick(&mut rng));
        let as_set = |v: &[String]| v.iter().map(|p| EntityId::file(p.as_str())).collect::<BTreeSet<_>>();
        let got = prf1(&as_set(&pred), &as_set(&truth)).map_err(|e| e.to_string())?;
        let want = prf1_oracle(&pred, &truth);
        ensure!(
            (got.precision.clone(), got.recall.clone(), got.f1.clone()) == want,
            "case {case}: {pred:?} vs {truth:?}"
        );
    }
    within(start, Duration::from_secs(5), "10,000 prf1 pairs")
}

fn gain_oracle() -> Outcome {
    let mut rng = StdRng::seed_from_u64(2);
    for case in 0..1000 {
        let turns: Vec<Vec<Vec<String>>> = (0..rng.gen_range(1..=10))
            .map(|_| {
                (0..rng.gen_range(1..=8))
                    .map(|_| (0..rng.gen_range(0..6)).map(|_| format!("e{}", rng.gen_range(0..30))).collect())
                    .collect()
            })
            .collect();
        let mut by_mode = BTreeMap::new();
        for (mode, strict) in [(GainMode::Snapshot, false), (GainMode::Strict, true)] {
            let mut history = History::new();
            let mut recorded = Vec::new();
            for turn in &turns {
                let sets: Vec<EntitySet> =
                    turn.iter().map(|c| c.iter().map(|e| Entity::file(e.as_str())).collect()).collect();
                recorded.push(history.apply_turn(&sets, mode));
            }
            let gains: Vec<Vec<Ratio>> = recorded.iter().map(|t| t.iter().map(|g| g.gain.clone()).collect()).collect();
            let want = gains_oracle(&turns, strict);
            ensure!(gains == want, "case {case} {mode:?}: gains differ");
            let flat: Vec<_> = recorded.into_iter().flatten().collect();
            let flat_want: Vec<Ratio> = want.into_iter().flatten().collect();
            ensure!(
                trajectory_efficiency(&flat) == mean_oracle(&flat_want),
                "case {case} {mode:?}: efficiency differs"
            );
            by_mode.insert(strict, flat_want);
        }
        ensure!(
            by_mode[&true].iter().zip(&by_mode[&false]).all(|(s, p)| s <= p),
            "case {case}: strict gain exceeds snapshot"
        );
    }
    Ok(())
}

fn reward_law() -> Outcome {
    let cfg = RewardConfig::default();
    ensure!(reward(&int(1), &int(1), &cfg) == int(1), "reward(1,1) != 1");
    for q in 0..=4 {
        ensure!(reward(&zero(), &ratio(q, 4), &cfg) == zero(), "reward(0,{q}/4) != 0");
    }
    ensure!(reward(&ratio(1, 2), &zero(), &cfg) == ratio(2, 5), "reward(0.5,0) != 0.4");
    let grid: Vec<Vec<Ratio>> =
        (0..=100).map(|f| (0..=100).map(|e| reward(&ratio(f, 100), &ratio(e, 100), &cfg)).collect()).collect();
    for f in 0..=100 {
        for e in 0..=100 {
            if f < 100 {
                ensure!(grid[f + 1][e] >= grid[f][e], "not monotone in f1 at ({f},{e})");
            }
            if e < 100 {
                ensure!(grid[f][e + 1] >= grid[f][e], "not monotone in e at ({f},{e})");
            }
        }
    }
    Ok(())
}

fn weighted_granularity() -> Outcome {
    let cfg = RewardConfig::default();
    ensure!(weighted_f1(&int(1), &zero(), &cfg) == ratio(7, 10), "weighted_f1(1,0) != 0.7");
    ensure!(weighted_f1(&zero(), &int(1), &cfg) == ratio(3, 10), "weighted_f1(0,1) != 0.3");
    Ok(())
}

fn coverage(t: &Trajectory) -> BTreeSet<Entity> {
    let mut all = BTreeSet::new();
    for turn in &t.turns {
        for (c, o) in turn.calls.iter().zip(&turn.observations) {
            if let Some(call) = c.valid() {
                all.extend(entities_of(o, call, t.config.gain.chunk_size));
            }
        }
    }
    all
}

fn tool_equivalence() -> Outcome {
    let mut rng = StdRng::seed_from_u64(0x5eed);
    let limits = ToolLimits::default();
    for repo in 0..25 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        random_repo(&mut rng, dir.path());
        let root = RepoRoot::open(dir.path(), "fuzz").map_err(|e| e.to_string())?;
        for batch in 0..20 {
            let calls: Vec<ToolCall> = (0..rng.gen_range(1..9)).map(|i| random_call(&mut rng, i)).collect();
            let parallel = serde_json::to_string(&execute_turn(&root, &calls, &limits)).unwrap();
            let sequential: Vec<_> = calls.iter().map(|c| run_call(&root, c, &limits)).collect();
            ensure!(parallel == serde_json::to_string(&sequential).unwrap(), "repo {repo} batch {batch} differs");
        }
    }
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    proj_repo(dir.path());
    let root = RepoRoot::open(dir.path(), "proj").map_err(|e| e.to_string())?;
    let episode = |script: Vec<String>| {
        run_episode(
            &mut ScriptedDriver::new(script),
            &root,
            "q",
            &EpisodeConfig::default(),
            &FixedClock::default(),
            &EpisodeMeta::default(),
        )
    };
    let (par, seq) = (episode(par_script()), episode(seq_script()));
    ensure!(coverage(&par) == coverage(&seq), "entity coverage differs");
    ensure!(!coverage(&par).is_empty(), "fixture discovered nothing");
    let tool_turns = |t: &Trajectory| t.turns.iter().filter(|t| !t.is_terminal()).count();
    ensure!(
        2 * tool_turns(&par) == tool_turns(&seq),
        "par {} vs seq {} tool turns",
        tool_turns(&par),
        tool_turns(&seq)
    );
    Ok(())
}

fn output_caps() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let names: Vec<String> = (0..150).map(|i| format!("pkg/m{i:03}.py")).collect();
    let long: String = (1..=1500).map(|i| format!("line {i}\n")).collect();
    let mut files: Vec<(&str, &str)> = names.iter().map(|n| (n.as_str(), "x = 1\n")).collect();
    files.push(("big.txt", &long));
    write_tree(dir.path(), &files);
    let root = RepoRoot::open(dir.path(), "caps").map_err(|e| e.to_string())?;
    let limits = ToolLimits::default();
    let g = glob(&root, &GlobArgs { pattern: "**/*.py".into(), path: None }, &limits);
    ensure!(g.entries.len() == 100 && g.truncated, "glob returned {} truncated={}", g.entries.len(), g.truncated);
    let r = read_file(&root, &ReadFileArgs { path: "big.txt".into(), start_line: None, end_line: None }, &limits);
    ensure!(r.entries.len() == 1000 && r.truncated, "read_file returned {} truncated={}", r.entries.len(), r.truncated);
    ensure!(r.entries.last().and_then(|e| e.line) == Some(1000), "read_file did not stop at line 1000");
    Ok(())
}

fn ground_truth_fixture() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    write_tree(dir.path(), &gt_pre_files());
    let patch = parse_patch(GT_PATCH).map_err(|e| e.to_string())?;
    let (pre, post) = load_images(dir.path(), &patch).map_err(|e| e.to_string())?;
    let truth = derive_ground_truth(&patch, &pre, &post, &IndentDetector).map_err(|e| e.to_string())?;
    let ann = gt_annotation();
    let files: BTreeSet<EntityId> = ann.files.iter().map(|f| EntityId::file(*f)).collect();
    let functions: BTreeSet<EntityId> = ann.functions.iter().map(|f| f.parse().unwrap()).collect();
    let ranges: BTreeMap<String, Vec<[u64; 2]>> =
        ann.line_ranges.into_iter().map(|(p, r)| (p.to_string(), r)).collect();
    ensure!(truth.files == files, "files differ: {:?}", truth.files);
    ensure!(truth.functions == functions, "functions differ: {:?}", truth.functions);
    ensure!(truth.line_ranges == ranges, "line ranges differ: {:?}", truth.line_ranges);

    let pre_text: BTreeMap<&str, &str> = gt_pre_files().into_iter().collect();
    let mut rebuilt = BTreeMap::new();
    for file in patch.files.iter().filter(|f| f.change != FileChange::Deleted) {
        let before = pre_text[file.old_path.as_deref().unwrap()];
        rebuilt.insert(file.new_path.clone().unwrap(), apply_file_patch(before, file).map_err(|e| e.to_string())?);
    }
    ensure!(rebuilt == gt_post_files(), "post-image round trip differs");
    Ok(())
}

fn exclusion_pipeline() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    proj_repo(&dir.path().join("base"));
    let labelled = admission_dataset("base");
    let records: Vec<_> = labelled.iter().map(|(r, _)| r.clone()).collect();
    let got = ingest_dataset(&records, dir.path(), &IndentDetector, &AdmissionConfig::default());
    ensure!(got.instances.len() == 6, "retained {}", got.instances.len());
    for ((rec, want), entry) in labelled.iter().zip(&got.manifest) {
        let reason = entry.reason.map(|r| r.as_str());
        ensure!(entry.id == rec.id && reason == *want, "{}: got {reason:?}, want {want:?}", rec.id);
    }
    Ok(())
}

fn end_to_end_replay() -> Outcome {
    let start = Instant::now();
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    replay_repo(dir.path());
    let root = RepoRoot::open(dir.path(), "replay").map_err(|e| e.to_string())?;
    let run = || {
        let meta = EpisodeMeta { instance_id: "replay".into(), run: 0 };
        run_episode(
            &mut ScriptedDriver::new(replay_script()),
            &root,
            REPLAY_QUERY,
            &EpisodeConfig::default(),
            &FixedClock::default(),
            &meta,
        )
    };
    let t = run();
    ensure!((t.cost.n_turns, t.cost.n_tool_calls) == (3, 5), "turns/calls {:?}", (t.cost.n_turns, t.cost.n_tool_calls));
    let gains: Vec<Vec<Ratio>> =
        t.turns.iter().filter(|t| !t.is_terminal()).map(|t| t.gains.iter().map(|g| g.gain.clone()).collect()).collect();
    ensure!(gains == replay_gains_snapshot(), "gains {gains:?}");
    ensure!(t.efficiency == ratio(4, 5), "e = {}", t.efficiency);
    let truth: TruthRecord = serde_json::from_str(replay_truth_json()).map_err(|e| e.to_string())?;
    let score = score_trajectory("replay", &t.answer, &truth.truth(), &t.efficiency, &RewardConfig::default());
    ensure!(
        score.file.f1 == ratio(2, 3) && score.func.f1 == ratio(1, 1),
        "f1 file {} func {}",
        score.file.f1,
        score.func.f1
    );
    ensure!(score.weighted_f1 == ratio(23, 30), "weighted {}", score.weighted_f1);
    ensure!(score.reward == ratio(92, 125), "reward {}", score.reward);
    ensure!(t.to_json_line() == run().to_json_line(), "serialization differs across runs");
    within(start, Duration::from_secs(1), "replay")
}

fn scored_line(id: &str, f1: f64, e: f64) -> String {
    serde_json::json!({"instance_id": id, "efficiency": e, "score": {"weighted_f1": f1}}).to_string()
}

fn filter_truth_table() -> Outcome {
    let th = FilterThresholds::default();
    let fixture = [
        scored_line("both", 0.9, 0.7),
        scored_line("f1_only", 0.9, 0.5),
        scored_line("e_only", 0.5, 0.7),
        scored_line("neither", 0.5, 0.5),
    ];
    let out = filter_sft(fixture.iter().map(String::as_str), &th);
    ensure!(out.retained == [fixture[0].clone()], "retained {:?}", out.retained);
    let reasons: Vec<RejectReason> = out.rejections.iter().map(|r| r.reason).collect();
    ensure!(reasons == [RejectReason::Efficiency, RejectReason::F1, RejectReason::Both], "reasons {reasons:?}");

    let mut rng = StdRng::seed_from_u64(10);
    for round in 0..10 {
        let (rf, re) = (rng.gen_range(0..=100i64), rng.gen_range(0..=100i64));
        let th = FilterThresholds { rho_f: ratio(rf, 100), rho_e: ratio(re, 100) };
        let cases: Vec<(i64, i64)> = (0..100).map(|_| (rng.gen_range(0..=100), rng.gen_range(0..=100))).collect();
        let lines: Vec<String> = cases
            .iter()
            .enumerate()
            .map(|(i, (f, e))| scored_line(&format!("t{i}"), *f as f64 / 100.0, *e as f64 / 100.0))
            .collect();
        let want: Vec<String> =
            cases.iter().zip(&lines).filter(|((f, e), _)| *f >= rf && *e >= re).map(|(_, l)| l.clone()).collect();
        let got = filter_sft(lines.iter().map(String::as_str), &th);
        ensure!(got.retained == want, "round {round}: retained set differs");
        ensure!(got.retained.len() + got.rejections.len() == lines.len(), "round {round}: lines lost");
    }
    Ok(())
}

fn redundancy_measurement() -> Outcome {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    replay_repo(dir.path());
    let root = RepoRoot::open(dir.path(), "replay").map_err(|e| e.to_string())?;
    let dup = |path: &str| {
        let c = format!(r#"<tool_call>{{"name": "read_file", "arguments": {{"path": "{path}"}}}}</tool_call>"#);
        format!("{c}\n{c}")
    };
    let script =
        vec![dup("src/app.py"), dup("src/util.py"), dup("README.md"), "## Locations to Modify\n- src/app.py\n".into()];
    let mut cfg = EpisodeConfig::default();
    cfg.gain.mode = GainMode::Strict;
    let t = run_episode(
        &mut ScriptedDriver::new(script),
        &root,
        "q",
        &cfg,
        &FixedClock::default(),
        &EpisodeMeta::default(),
    );
    let rate = redundancy_rate(&t.recorded_gains(), &zero());
    ensure!(rate == ratio(1, 2), "redundancy {rate}");
    Ok(())
}

fn main() {
    let criteria: [Criterion; 11] = [
        ("metric oracle equivalence", metric_oracle),
        ("gain and efficiency oracle equivalence", gain_oracle),
        ("reward law", reward_law),
        ("weighted F1 granularity weights", weighted_granularity),
        ("parallel and sequential tool equivalence", tool_equivalence),
        ("glob and read_file output caps", output_caps),
        ("ground-truth extraction", ground_truth_fixture),
        ("admission exclusion pipeline", exclusion_pipeline),
        ("end-to-end scripted replay", end_to_end_replay),
        ("dual-threshold filter", filter_truth_table),
        ("redundancy measurement", redundancy_measurement),
    ];
    let mut failed = 0;
    for (i, (name, check)) in criteria.iter().enumerate() {
        let outcome = catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        match outcome {
            Ok(()) => println!("PASS {:>2} {name}", i + 1),
            Err(why) => {
                failed += 1;
                println!("FAIL {:>2} {name}: {why}", i + 1);
            }
        }
    }
    println!("{} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
