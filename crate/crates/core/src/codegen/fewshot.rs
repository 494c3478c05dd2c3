//! Worked examples for the two codegen prompts, built from the bundled
//! hotpotqa task and a dataset-free prisoner's dilemma task.

use serde_json::json;

use super::blocks::{language_for, write_file_blocks, FileBlock, FileSet};
use crate::prompts::FewShot;
use crate::schema::{parse_task_config, serialize_task_config, TaskConfig};

pub const HOTPOTQA_TASK: &str = include_str!("../../fixtures/hotpotqa/task.yaml");
pub const HOTPOTQA_DATASET: &str = include_str!("../../fixtures/hotpotqa/dataset.yaml");
pub const HOTPOTQA_BASELINE: &str = include_str!("../../fixtures/hotpotqa/baseline.py");
pub const HOTPOTQA_EVALUATE: &str = include_str!("../../fixtures/hotpotqa/evaluate.py");
pub const HOTPOTQA_DATASET_PATH: &str = "datasets/hotpotqa_joint_facts_qa/hotpotqa_hotpot_qa.yaml";

pub const PD_TASK: &str = include_str!("../../fixtures/prisoners_dilemma/task.yaml");
pub const PD_TARGET: &str = include_str!("../../fixtures/prisoners_dilemma/target.py");
pub const PD_EVALUATE: &str = include_str!("../../fixtures/prisoners_dilemma/evaluate.py");

/// The config as stage 1 should emit it: every later-filled list empty.
pub fn stage1_form(cfg: &TaskConfig) -> TaskConfig {
    TaskConfig {
        starter_code: Vec::new(),
        baseline_paths: Vec::new(),
        baseline_scores: Vec::new(),
        evaluation_paths: Vec::new(),
        ..cfg.clone()
    }
}

/// The config as stage 2 should emit it: baseline and evaluation named.
pub fn stage2_form(cfg: &TaskConfig) -> TaskConfig {
    TaskConfig {
        starter_code: Vec::new(),
        baseline_scores: Vec::new(),
        ..cfg.clone()
    }
}

fn block(path: &str, content: &str) -> FileBlock {
    FileBlock::new(language_for(path), path, content.trim_end_matches('\n'))
}

fn render(blocks: Vec<FileBlock>) -> String {
    let set: FileSet = blocks.try_into().expect("fixture paths are distinct and safe");
    write_file_blocks(&set).trim_end().to_string()
}

fn fixture(text: &str) -> TaskConfig {
    parse_task_config(text).expect("bundled fixture parses")
}

fn stage1_pair(input: serde_json::Value, cfg: &TaskConfig, datasets: &[(&str, &str)]) -> FewShot {
    let mut blocks = vec![block(&cfg.file_path(), &serialize_task_config(&stage1_form(cfg)))];
    blocks.extend(datasets.iter().map(|(p, c)| block(p, c)));
    let input = serde_json::to_string_pretty(&input).expect("json");
    FewShot {
        input: format!("```json\n# input.json\n{input}\n```"),
        output: render(blocks),
    }
}

fn stage2_pair(cfg: &TaskConfig, datasets: &[(&str, &str)], code: &[(&str, &str)]) -> FewShot {
    let mut input = vec![block(&cfg.file_path(), &serialize_task_config(&stage1_form(cfg)))];
    input.extend(datasets.iter().map(|(p, c)| block(p, c)));
    let mut output = vec![block(&cfg.file_path(), &serialize_task_config(&stage2_form(cfg)))];
    output.extend(code.iter().map(|(p, c)| block(p, c)));
    FewShot {
        input: render(input),
        output: render(output),
    }
}

pub fn stage1_examples() -> [FewShot; 2] {
    let hotpot = fixture(HOTPOTQA_TASK);
    let pd = fixture(PD_TASK);
    [
        stage1_pair(
            json!({
                "topic": "Multi-hop Question Answering",
                "metric": "Joint F1",
                "description": "Answer multi-hop questions and identify the supporting sentences used to derive each answer.",
                "dataset": {
                    "id": "hotpotqa/hotpot_qa",
                    "features": [
                        {"name": "id", "dtype": "string"},
                        {"name": "question", "dtype": "string"},
                        {"name": "answer", "dtype": "string"},
                        {"name": "type", "dtype": "string"},
                        {"name": "level", "dtype": "string"},
                        {"name": "supporting_facts", "dtype": "struct"},
                        {"name": "context", "dtype": "struct"}
                    ],
                    "examples": [{
                        "id": "5a7a06935542990198eaf050",
                        "question": "Which magazine was started first Arthur's Magazine or First for Women?",
                        "answer": "Arthur's Magazine",
                        "type": "comparison",
                        "level": "medium",
                        "supporting_facts": {"title": ["Arthur's Magazine", "First for Women"], "sent_id": [0, 0]},
                        "context": {"title": ["Radio City (Indian radio station)", "History of Albanian football", "..."], "sentences": [["Radio City is India's first private FM radio station and was started on 3 July 2001.", "..."], ["..."]]}
                    }]
                }
            }),
            &hotpot,
            &[(HOTPOTQA_DATASET_PATH, HOTPOTQA_DATASET)],
        ),
        stage1_pair(
            json!({
                "topic": "Game Theory",
                "metric": "Average payoff per round",
                "description": "Design a strategy for the iterated prisoner's dilemma that scores well against a pool of classic opponents."
            }),
            &pd,
            &[],
        ),
    ]
}

pub fn stage2_examples() -> [FewShot; 2] {
    let hotpot = fixture(HOTPOTQA_TASK);
    let pd = fixture(PD_TASK);
    [
        stage2_pair(
            &hotpot,
            &[(HOTPOTQA_DATASET_PATH, HOTPOTQA_DATASET)],
            &[("baseline.py", HOTPOTQA_BASELINE), ("evaluate.py", HOTPOTQA_EVALUATE)],
        ),
        stage2_pair(&pd, &[], &[("target.py", PD_TARGET), ("evaluate.py", PD_EVALUATE)]),
    ]
}
