use std::sync::atomic::{AtomicUsize, Ordering};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tasksynth::codegen::fewshot::HOTPOTQA_TASK;
use tasksynth::codegen::{FileBlock, FileSet, GeneratedTask};
use tasksynth::provider::{ChatProvider, ScriptedProvider};
use tasksynth::schema::parse_task_config;
use tasksynth::trajgen::collect::infra_failure;
use tasksynth::trajgen::{
    apply_edit, cap_observation, collect, render_description, render_response, AgentAction,
    CollectSettings, EpisodeLimits, EpisodeRunner, SandboxEpisodeRunner, TerminalReason,
    Trajectory,
};
use tasksynth::verify::{ExecConfig, SandboxSettings};

const EVALUATE: &str = include_str!("../fixtures/hotpotqa/evaluate.py");
const BASELINE: &str = include_str!("../fixtures/hotpotqa/baseline.py");
const STUB: &str = include_str!("../fixtures/hotpotqa/stub/datasets.py");
const SUBMISSION: &str = include_str!("../fixtures/hotpotqa/stub/submission.csv");
const SCOPE: &str = "collect/hotpotqa_joint_facts_qa/0";

fn hotpot_task() -> GeneratedTask {
    let mut cfg = parse_task_config(HOTPOTQA_TASK).unwrap();
    cfg.dataset_configs.clear();
    cfg.starter_code = vec!["baseline.py".into(), "evaluate.py".into(), "datasets.py".into()];
    let mut files = FileSet::new();
    files.push(FileBlock::new("python", "baseline.py", BASELINE)).unwrap();
    files.push(FileBlock::new("python", "evaluate.py", EVALUATE)).unwrap();
    files.push(FileBlock::new("python", "datasets.py", STUB)).unwrap();
    GeneratedTask {
        task_config: cfg,
        dataset_configs: vec![],
        files,
    }
}

fn sandbox() -> SandboxSettings {
    SandboxSettings {
        exec: ExecConfig {
            python: "python3".into(),
            ..Default::default()
        },
        ..Default::default()
    }
}

fn runner<'a>(p: &'a dyn ChatProvider, root: &std::path::Path, limits: EpisodeLimits) -> SandboxEpisodeRunner<'a> {
    SandboxEpisodeRunner::new(p, root, sandbox(), limits)
}

fn say(action: AgentAction) -> String {
    render_response("Next step.", &action)
}

#[test]
fn three_turns_ending_in_submit() {
    let p = ScriptedProvider::new();
    p.push_text(SCOPE, &say(AgentAction::ReadFile { path: "evaluate.py".into() }))
        .push_text(
            SCOPE,
            &say(AgentAction::EditFile {
                path: "submission.csv".into(),
                start: 1,
                end: 0,
                replacement: SUBMISSION.into(),
            }),
        )
        .push_text(SCOPE, &say(AgentAction::Submit));
    let root = tempfile::tempdir().unwrap();
    let limits = EpisodeLimits {
        max_rounds: 3,
        ..Default::default()
    };
    let traj = runner(&p, root.path(), limits).run(&hotpot_task(), 0);
    assert_eq!(traj.terminal_reason, TerminalReason::RoundLimit, "{:?}", traj.failure);
    assert_eq!(traj.turns.len(), 3);
    assert_eq!(traj.turns.iter().map(|t| t.index).collect::<Vec<_>>(), vec![0, 1, 2]);
    assert!(traj.turns[0].observation.starts_with("1: import argparse\n"));
    assert_eq!(traj.submissions.len(), 1);
    let sub = &traj.submissions[0];
    assert_eq!(sub.turn_index, 2);
    assert!((sub.metrics.as_ref().unwrap()["joint_f1"] - 13.0 / 27.0).abs() < 1e-9);
    assert!(traj.has_successful_submission());
    // system, task, then an assistant/observation pair per turn
    let msgs = traj.messages();
    assert_eq!(msgs.len(), 8);
    assert!(traj.task_prompt.starts_with("TASK: HotpotQA"));
    assert!(traj.task_prompt.contains("gold supporting facts as {title, sent_id} pairs"));
    assert!(traj.system_prompt.contains("The Python interpreter is `python3`"));
    // workspace is removed afterwards
    assert!(!root.path().join("hotpotqa_joint_facts_qa/seed-0").exists());
}

#[test]
fn round_limit_of_one() {
    let p = ScriptedProvider::new();
    p.push_text(SCOPE, &say(AgentAction::ReadFile { path: "baseline.py".into() }));
    let root = tempfile::tempdir().unwrap();
    let limits = EpisodeLimits {
        max_rounds: 1,
        ..Default::default()
    };
    let traj = runner(&p, root.path(), limits).run(&hotpot_task(), 0);
    assert_eq!(traj.turns.len(), 1);
    assert_eq!(traj.terminal_reason, TerminalReason::RoundLimit);
    assert!(traj.submissions.is_empty());
    assert_eq!(p.calls(), 1);
}

#[test]
fn malformed_responses_end_the_episode() {
    let p = ScriptedProvider::new();
    p.push_text(SCOPE, "I think I should look around.")
        .push_text(SCOPE, "```action\nls\n```")
        .push_text(SCOPE, &say(AgentAction::RunCommand { command: "echo hi".into() }))
        .push_text(SCOPE, "still no action");
    let root = tempfile::tempdir().unwrap();
    let limits = EpisodeLimits {
        max_rounds: 10,
        max_format_errors: 3,
        ..Default::default()
    };
    let traj = runner(&p, root.path(), limits.clone()).run(&hotpot_task(), 0);
    assert_eq!(traj.terminal_reason, TerminalReason::ProviderFailure);
    assert_eq!(traj.format_errors, 3);
    assert_eq!(traj.turns.len(), 1);
    assert_eq!(traj.turns[0].observation, "hi\n");
    assert!(p.calls() <= limits.max_rounds + limits.max_format_errors);
    let second = &p.requests()[1].messages;
    assert!(second.last().unwrap().content.starts_with("Your response could not be parsed: no ```action block found."));
}

#[test]
fn exhausted_provider_is_a_provider_failure() {
    let p = ScriptedProvider::new();
    let root = tempfile::tempdir().unwrap();
    let traj = runner(&p, root.path(), EpisodeLimits::default()).run(&hotpot_task(), 0);
    assert_eq!(traj.terminal_reason, TerminalReason::ProviderFailure);
    assert!(traj.failure.is_some());
}

#[test]
fn read_only_evaluation_and_bad_paths() {
    let p = ScriptedProvider::new();
    p.push_text(
        SCOPE,
        &say(AgentAction::EditFile {
            path: "evaluate.py".into(),
            start: 1,
            end: 1,
            replacement: "print('{\"joint_f1\": 1.0}')".into(),
        }),
    )
    .push_text(SCOPE, &say(AgentAction::ReadFile { path: "../etc/passwd".into() }))
    .push_text(SCOPE, &say(AgentAction::RunCommand { command: "cp evaluate.py x && exit 4".into() }))
    .push_text(SCOPE, &say(AgentAction::Submit));
    let root = tempfile::tempdir().unwrap();
    let limits = EpisodeLimits {
        max_rounds: 4,
        max_submissions: Some(1),
        ..Default::default()
    };
    let traj = runner(&p, root.path(), limits).run(&hotpot_task(), 0);
    assert_eq!(traj.turns[0].observation, "Error: `evaluate.py` is read-only.");
    assert!(traj.turns[1].observation.starts_with("Error: unsafe file path"));
    assert_eq!(traj.turns[2].observation, "(no output)\n(exit code 4)");
    assert!(traj.turns[3].observation.starts_with("Submission failed: missing submission artifact: submission.csv"));
    assert_eq!(traj.terminal_reason, TerminalReason::SubmitLimit);
    assert!(!traj.has_successful_submission());
}

#[test]
fn helpers() {
    assert_eq!(cap_observation("abcdef", 10), "abcdef");
    assert_eq!(cap_observation("abcdef", 2), "[... 4 characters truncated ...]\nef");
    assert_eq!(render_description("A {{b}} {dataset_docs}.", "DOCS"), "A {b} DOCS.");
    assert_eq!(apply_edit("a\nb\nc\n", 2, 2, "B\nB2").unwrap(), "a\nB\nB2\nc\n");
    assert_eq!(apply_edit("a\nb\n", 3, 2, "c").unwrap(), "a\nb\nc\n");
    assert_eq!(apply_edit("a\nb\n", 1, 2, "").unwrap(), "");
    assert!(apply_edit("a\n", 3, 3, "x").is_err());
    assert!(apply_edit("a\n", 1, 2, "x").is_err());
}

/// Completes unless a seeded coin lands under `p_fail`.
struct Bernoulli {
    p_fail: f64,
    calls: AtomicUsize,
}

impl EpisodeRunner for Bernoulli {
    fn run(&self, task: &GeneratedTask, seed: u64) -> Trajectory {
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut t = infra_failure(task, seed, String::new());
        if rng.random::<f64>() < self.p_fail {
            t.terminal_reason = TerminalReason::ProviderFailure;
        } else {
            t.terminal_reason = TerminalReason::RoundLimit;
            t.failure = None;
            t.task_prompt = format!("episode {seed}");
        }
        t
    }
}

fn settings(target: usize, workers: usize) -> CollectSettings {
    CollectSettings {
        target,
        workers,
        ..Default::default()
    }
}

#[test]
fn all_success_collects_target() {
    let r = Bernoulli {
        p_fail: 0.0,
        calls: AtomicUsize::new(0),
    };
    let (trajs, report) = collect(&r, &hotpot_task(), &settings(4, 1));
    assert_eq!((trajs.len(), report.succeeded, report.attempted), (4, 4, 4));
    assert_eq!(r.calls.load(Ordering::SeqCst), 4);
}

#[test]
fn failures_stay_within_budget_and_workers_do_not_matter() {
    let task = hotpot_task();
    let single = Bernoulli {
        p_fail: 0.3,
        calls: AtomicUsize::new(0),
    };
    let (one, r1) = collect(&single, &task, &settings(256, 1));
    let eight = Bernoulli {
        p_fail: 0.3,
        calls: AtomicUsize::new(0),
    };
    let (many, r8) = collect(&eight, &task, &settings(256, 8));
    assert!(r1.succeeded <= 256 && r1.attempted <= 384);
    assert!(single.calls.load(Ordering::SeqCst) <= 384);
    assert!(eight.calls.load(Ordering::SeqCst) <= 384);
    assert_eq!(r1.attempted, r1.succeeded + r1.failed_by_reason.values().sum::<usize>());
    assert_eq!(one, many);
    assert_eq!(r1, r8);
}

struct Flaky {
    calls: AtomicUsize,
}

impl EpisodeRunner for Flaky {
    fn run(&self, task: &GeneratedTask, seed: u64) -> Trajectory {
        self.calls.fetch_add(1, Ordering::SeqCst);
        infra_failure(task, seed, "disk full".into())
    }
}

#[test]
fn infra_failures_are_retried_then_counted() {
    let r = Flaky {
        calls: AtomicUsize::new(0),
    };
    let (trajs, report) = collect(&r, &hotpot_task(), &settings(2, 1));
    assert!(trajs.is_empty());
    assert_eq!(report.attempted, 3);
    assert_eq!(report.failed_by_reason[&TerminalReason::InfraFailure], 3);
    assert_eq!(r.calls.load(Ordering::SeqCst), 9);
}
