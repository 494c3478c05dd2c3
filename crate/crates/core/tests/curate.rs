use std::collections::BTreeMap;

use proptest::prelude::*;
use tasksynth::curate::{
    dataset_stats, digest_path, export_sft, filter_and_truncate, is_success, read_sft,
    write_stats, CurateError, CurationPolicy, SftMessage, SftRecord, TokenCounter, Tokenizer,
};
use tasksynth::schema::MetricMap;
use tasksynth::trajgen::{AgentAction, Submission, TerminalReason, Trajectory, Turn};

/// A trajectory whose observations have the given character lengths.
fn traj(task: &str, seed: u64, obs_lens: &[usize], submissions: &[bool]) -> Trajectory {
    let turns = obs_lens
        .iter()
        .enumerate()
        .map(|(i, &n)| Turn {
            index: i,
            rationale: String::new(),
            action: AgentAction::RunCommand { command: "ls".into() },
            response: format!("r{i}"),
            observation: "x".repeat(n),
        })
        .collect::<Vec<_>>();
    let subs = submissions
        .iter()
        .map(|&ok| Submission {
            turn_index: 0,
            metrics: ok.then(|| MetricMap::from_iter([("score".to_string(), 1.0)])),
            error: (!ok).then(|| "crash".to_string()),
        })
        .collect();
    Trajectory {
        schema_version: 1,
        task_id: task.into(),
        episode_seed: seed,
        system_prompt: "sys".into(),
        task_prompt: "task".into(),
        turns,
        submissions: subs,
        terminal_reason: TerminalReason::RoundLimit,
        format_errors: 0,
        failure: None,
    }
}

/// Independent count of the rendered transcript under chars/4.
fn oracle_tokens(t: &Trajectory) -> usize {
    let mut chars = "system\nsys\n".len() + "user\ntask\n".len();
    for turn in &t.turns {
        chars += "assistant\n".len() + turn.response.len() + 1;
        chars += "user\n".len() + turn.observation.len() + 1;
    }
    chars.div_ceil(4)
}

#[test]
fn success_means_one_parsed_submission() {
    assert!(is_success(&traj("t", 0, &[1], &[false, true])));
    assert!(!is_success(&traj("t", 0, &[1], &[])));
    assert!(!is_success(&traj("t", 0, &[1], &[false, false])));
}

#[test]
fn length_filter_and_truncation() {
    let counter = TokenCounter::CharsOver4;
    let policy = CurationPolicy::default();
    // 50,000 tokens: dropped
    let big = traj("t", 0, &[100_000, 99_941], &[true]);
    assert_eq!(oracle_tokens(&big), 50_000);
    // 40,000 tokens: kept and cut back
    let mid = traj("t", 1, &[40_000, 40_000, 79_922], &[true]);
    assert_eq!(oracle_tokens(&mid), 40_000);
    let small = traj("t", 2, &[0], &[true]);
    assert_eq!(oracle_tokens(&small), 10);
    let out = filter_and_truncate(&[big, mid.clone(), small], &policy, &counter).unwrap();
    assert_eq!(out.len(), 2);
    assert!(out[0].truncated && out[0].token_count <= 32_000);
    let full: Vec<SftMessage> = mid.messages().iter().map(SftMessage::from).collect();
    assert_eq!(out[0].messages[..], full[..out[0].messages.len()]);
    assert_eq!(out[0].messages.len(), 7);
    assert!(!out[1].truncated);
    assert_eq!(out[1].token_count, 10);
    assert_eq!(out[1].messages.len(), 4);
}

#[test]
fn protected_prefix_too_long() {
    let mut t = traj("t", 0, &[1], &[true]);
    t.task_prompt = "y".repeat(400);
    let policy = CurationPolicy {
        require_success: true,
        max_tokens_filter: 1000,
        truncate_to: 50,
    };
    assert!(matches!(
        filter_and_truncate(&[t], &policy, &TokenCounter::CharsOver4),
        Err(CurateError::EmptyAfterTruncation { .. })
    ));
    let bad = CurationPolicy {
        truncate_to: 10,
        max_tokens_filter: 5,
        ..Default::default()
    };
    assert!(matches!(filter_and_truncate(&[], &bad, &TokenCounter::CharsOver4), Err(CurateError::InvalidPolicy(_))));
}

#[test]
fn counters() {
    assert_eq!(TokenCounter::CharsOver4.count("abcde"), 2);
    assert_eq!(TokenCounter::CharsOver4.count(""), 0);
    assert_eq!(TokenCounter::Whitespace.count(" a  b\nc "), 3);
    assert_eq!(TokenCounter::CharsOver4.name(), "chars_over_4");
}

fn record(task: &str, tokens: usize, turns: usize, truncated: bool) -> SftRecord {
    let mut messages = vec![
        SftMessage { role: "system".into(), content: "s".into() },
        SftMessage { role: "user".into(), content: "u".into() },
    ];
    for _ in 0..turns {
        messages.push(SftMessage { role: "assistant".into(), content: "a".into() });
        messages.push(SftMessage { role: "user".into(), content: "o".into() });
    }
    SftRecord {
        task_id: task.into(),
        messages,
        token_count: tokens,
        truncated,
    }
}

#[test]
fn empty_stats_are_zero() {
    let s = dataset_stats(&[], &[]);
    assert_eq!((s.trajectories, s.records, s.truncated), (0, 0, 0));
    assert!(s.token_histogram.counts.is_empty() && s.turn_histogram.counts.is_empty());
}

#[test]
fn ten_record_histograms() {
    let specs = [
        (500, 3), (3_999, 4), (4_000, 5), (7_500, 9), (12_000, 10),
        (15_999, 12), (16_000, 20), (31_000, 31), (32_000, 49), (8_000, 0),
    ];
    let records: Vec<_> = specs
        .iter()
        .enumerate()
        .map(|(i, &(tok, turns))| record(if i % 2 == 0 { "a" } else { "b" }, tok, turns, tok > 30_000))
        .collect();
    let s = dataset_stats(&records, &[traj("a", 0, &[1], &[true]), traj("b", 1, &[1], &[false])]);
    // token bins of 4,000: [0,4k) 2, [4k,8k) 2, [8k,12k) 1, [12k,16k) 2, [16k,20k) 1, ..., [28k,32k) 1, [32k,36k) 1
    assert_eq!(s.token_histogram.counts, vec![2, 2, 1, 2, 1, 0, 0, 1, 1]);
    // turn bins of 5: [0,5) 3, [5,10) 2, [10,15) 2, [15,20) 0, [20,25) 1, [25,30) 0, [30,35) 1, ..., [45,50) 1
    assert_eq!(s.turn_histogram.counts, vec![3, 2, 2, 0, 1, 0, 1, 0, 0, 1]);
    assert_eq!(s.token_histogram.total(), 10);
    assert_eq!(s.turn_histogram.total(), 10);
    assert_eq!(s.truncated, 2);
    assert_eq!(s.records_per_task, BTreeMap::from([("a".into(), 5), ("b".into(), 5)]));
    assert_eq!(s.successes_per_task, BTreeMap::from([("a".into(), 1)]));
    assert_eq!((s.trajectories, s.successful_trajectories), (2, 1));

    let dir = tempfile::tempdir().unwrap();
    let files = write_stats(&s, dir.path()).unwrap();
    assert_eq!(files.len(), 3);
    let svg = std::fs::read_to_string(dir.path().join("token_lengths.svg")).unwrap();
    assert!(svg.starts_with("<svg"));
}

#[test]
fn export_round_trip_and_digest() {
    let dir = tempfile::tempdir().unwrap();
    let records = vec![record("a", 1, 1, false), record("b", 2, 2, true), record("a", 3, 0, false)];
    let out = dir.path().join("sft/train.jsonl");
    let d1 = export_sft(&records, &out).unwrap();
    let text = std::fs::read_to_string(&out).unwrap();
    assert_eq!(text.lines().count(), 3);
    assert!(text.starts_with("{\"task_id\":\"a\",\"messages\":[{\"role\":\"system\""));
    assert_eq!(read_sft(&out).unwrap(), records);
    let d2 = export_sft(&records, &out).unwrap();
    assert_eq!(d1, d2);
    assert_eq!(d1.records, 3);
    let on_disk: serde_json::Value = serde_json::from_str(&std::fs::read_to_string(digest_path(&out)).unwrap()).unwrap();
    assert_eq!(on_disk["sha256"], d1.sha256);
    assert!(matches!(export_sft(&[], &out), Err(CurateError::EmptyExport)));

    std::fs::write(&out, format!("{}\nnot json\n", text.lines().next().unwrap())).unwrap();
    match read_sft(&out) {
        Err(CurateError::Malformed { line, .. }) => assert_eq!(line, 2),
        other => panic!("{other:?}"),
    }
}

fn arb_record() -> impl Strategy<Value = SftRecord> {
    (
        "[a-z_]{1,12}",
        prop::collection::vec((prop::sample::select(vec!["system", "user", "assistant"]), any::<String>()), 0..6),
        any::<u32>(),
        any::<bool>(),
    )
        .prop_map(|(task_id, msgs, tokens, truncated)| SftRecord {
            task_id,
            messages: msgs
                .into_iter()
                .map(|(role, content)| SftMessage { role: role.into(), content })
                .collect(),
            token_count: tokens as usize,
            truncated,
        })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(8))]

    #[test]
    fn thousand_records_reimport(records in prop::collection::vec(arb_record(), 1000)) {
        let dir = tempfile::tempdir().unwrap();
        let out = dir.path().join("x.jsonl");
        export_sft(&records, &out).unwrap();
        prop_assert_eq!(read_sft(&out).unwrap(), records);
    }
}

proptest! {
    #[test]
    fn success_matches_a_scan(subs in prop::collection::vec(any::<bool>(), 0..5)) {
        let t = traj("t", 0, &[1], &subs);
        prop_assert_eq!(is_success(&t), subs.iter().any(|&ok| ok));
    }

    #[test]
    fn counter_is_monotone_under_concat(a in ".{0,50}", b in ".{0,50}") {
        for c in [TokenCounter::CharsOver4, TokenCounter::Whitespace] {
            let ab = format!("{a}{b}");
            prop_assert!(c.count(&ab) >= c.count(&a).max(c.count(&b)));
            prop_assert_eq!(c.count(&a), c.count(&a));
        }
    }
}
