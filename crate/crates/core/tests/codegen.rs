use tasksynth::codegen::fewshot::{self, HOTPOTQA_DATASET, HOTPOTQA_DATASET_PATH, HOTPOTQA_TASK};
use tasksynth::codegen::{
    parse_stage2, write_file_blocks, Codegen, CodegenError, CodegenSettings, FileBlock, FileSet,
    GeneratedTask, Stage,
};
use tasksynth::hfhub::{DatasetSample, Feature};
use tasksynth::provider::{ChatMessage, ScriptedProvider};
use tasksynth::schema::{
    parse_dataset_config, parse_task_config, serialize_task_config, PlaceholderBlacklist,
    TaskProposal,
};
use tasksynth::synth::EnrichedProposal;

const STAGE1: &str = "codegen/multi_hop_question_answering/configs";
const STAGE2: &str = "codegen/hotpotqa_joint_facts_qa/code";

fn hotpot_enriched() -> EnrichedProposal {
    EnrichedProposal {
        original_topic: "Multi-hop Question Answering".into(),
        proposal: Some(TaskProposal {
            topic: "Multi-hop Question Answering".into(),
            metric: "Joint F1".into(),
            description: "Answer multi-hop questions with supporting facts.".into(),
            dataset: Some("hotpot_qa".into()),
        }),
        resolved_dataset: Some(DatasetSample {
            id: "hotpotqa/hotpot_qa".into(),
            features: vec![Feature {
                name: "question".into(),
                dtype: "string".into(),
            }],
            example_rows: vec![serde_json::json!({"question": "q?"})],
        }),
        discard_reason: None,
    }
}

fn stage1_reply() -> String {
    fewshot::stage1_examples()[0].output.clone()
}

fn stage2_reply() -> String {
    fewshot::stage2_examples()[0].output.clone()
}

#[test]
fn hotpotqa_configs_from_transcript() {
    let p = ScriptedProvider::new();
    p.push_text(STAGE1, &stage1_reply());
    let cg = Codegen::new(&p, CodegenSettings::default());
    let bundle = cg.generate_configs(&hotpot_enriched()).unwrap();
    let golden = parse_task_config(HOTPOTQA_TASK).unwrap();
    assert_eq!(bundle.task_config, fewshot::stage1_form(&golden));
    assert_eq!(bundle.task_config.id, "hotpotqa_joint_facts_qa");
    assert_eq!(bundle.dataset_configs.len(), 1);
    assert_eq!(bundle.dataset_configs[0].path, HOTPOTQA_DATASET_PATH);
    assert_eq!(bundle.dataset_configs[0].config, parse_dataset_config(HOTPOTQA_DATASET).unwrap());
    let prompt = &p.requests()[0].messages[0].content;
    assert!(prompt.contains("\"id\": \"hotpotqa/hotpot_qa\""));
    assert!(prompt.contains("Here is the format for the input JSON."));
}

#[test]
fn two_task_configs_are_rejected() {
    let twice = format!(
        "{}\n\n```yaml\n# tasks/other.yaml\n{}```",
        stage1_reply(),
        serialize_task_config(&parse_task_config(HOTPOTQA_TASK).unwrap()).replace("hotpotqa_joint_facts_qa\n", "other\n")
    );
    let p = ScriptedProvider::new();
    p.push_text(STAGE1, &twice).push_text(STAGE1, &stage1_reply());
    let cg = Codegen::new(&p, CodegenSettings::default());
    cg.generate_configs(&hotpot_enriched()).unwrap();
    let retry = p.requests()[1].messages.clone();
    assert_eq!(retry.len(), 3);
    assert_eq!(
        retry[2].content,
        "Error encountered: Only one task config file.\n\nPlease try again. Return the revised output in whole."
    );
}

#[test]
fn placeholder_data_path_is_rejected() {
    let bad = stage1_reply().replace("data_path: hotpotqa/hotpot_qa", "data_path: path/to/dataset");
    let p = ScriptedProvider::new();
    for _ in 0..3 {
        p.push_text(STAGE1, &bad);
    }
    let cg = Codegen::new(&p, CodegenSettings::default());
    match cg.generate_configs(&hotpot_enriched()) {
        Err(CodegenError::StageOutputInvalid { stage, message }) => {
            assert_eq!(stage, Stage::Configs);
            assert!(message.contains("placeholder"), "{message}");
        }
        other => panic!("{other:?}"),
    }
    // initial call plus the two-retry budget, then the stage fails upward
    assert_eq!(p.calls(), 3);
}

#[test]
fn data_path_must_match_resolved_id() {
    let wrong = stage1_reply().replace("data_path: hotpotqa/hotpot_qa", "data_path: hotpot_qa");
    let p = ScriptedProvider::new();
    p.push_text(STAGE1, &wrong).push_text(STAGE1, &stage1_reply());
    let cg = Codegen::new(&p, CodegenSettings::default());
    cg.generate_configs(&hotpot_enriched()).unwrap();
    assert!(p.requests()[1].messages[2]
        .content
        .contains("data_path must be exactly \"hotpotqa/hotpot_qa\""));
}

fn hotpot_bundle() -> tasksynth::codegen::ConfigBundle {
    let p = ScriptedProvider::new();
    p.push_text(STAGE1, &stage1_reply());
    Codegen::new(&p, CodegenSettings::default())
        .generate_configs(&hotpot_enriched())
        .unwrap()
}

#[test]
fn hotpotqa_starter_code_from_transcript() {
    let bundle = hotpot_bundle();
    let p = ScriptedProvider::new();
    p.push_text(STAGE2, &stage2_reply());
    let cg = Codegen::new(&p, CodegenSettings::default());
    let (task, conv) = cg.generate_starter_code(&bundle).unwrap();
    assert_eq!(task.files.paths().collect::<Vec<_>>(), vec!["baseline.py", "evaluate.py"]);
    assert_eq!(task.task_config.baseline_paths, vec!["baseline.py"]);
    assert_eq!(task.task_config.evaluation_paths, vec!["evaluate.py"]);
    assert_eq!(task.task_config.starter_code, vec!["baseline.py", "evaluate.py"]);
    assert!(task.task_config.baseline_scores.is_empty());
    assert_eq!(conv.messages.len(), 2);
    assert!(conv.messages[0].content.contains("# tasks/hotpotqa_joint_facts_qa.yaml"));
}

#[test]
fn missing_evaluation_file() {
    let bundle = hotpot_bundle();
    let text = stage2_reply();
    let cut = text.find("```python\n# evaluate.py").unwrap();
    let err = parse_stage2(&text[..cut], &bundle, &PlaceholderBlacklist::default()).unwrap_err();
    assert!(err.contains("evaluation file `evaluate.py` is not among the generated files"), "{err}");
    let no_eval = text.replace("evaluation_paths:\n- evaluate.py", "evaluation_paths: []");
    let err = parse_stage2(&no_eval, &bundle, &PlaceholderBlacklist::default()).unwrap_err();
    assert!(err.contains("exactly one evaluation file"), "{err}");
}

#[test]
fn requirements_need_generic_conda_off() {
    let bundle = hotpot_bundle();
    let with_req = format!("{}\n\n```text\n# requirements.txt\nrank-bm25>=0.2\n```", stage2_reply());
    let err = parse_stage2(&with_req, &bundle, &PlaceholderBlacklist::default()).unwrap_err();
    assert!(err.contains("use_generic_conda is true"), "{err}");

    let fixed = with_req.replace(
        "use_generic_conda: true",
        "use_generic_conda: false\nrequirements_path: requirements.txt",
    );
    let task = parse_stage2(&fixed, &bundle, &PlaceholderBlacklist::default()).unwrap();
    assert_eq!(task.task_config.starter_code, vec!["baseline.py", "evaluate.py"]);
    assert!(task.files.contains("requirements.txt"));

    let missing = stage2_reply().replace(
        "use_generic_conda: true",
        "use_generic_conda: false\nrequirements_path: requirements.txt",
    );
    let err = parse_stage2(&missing, &bundle, &PlaceholderBlacklist::default()).unwrap_err();
    assert!(err.contains("requirements_path `requirements.txt`"), "{err}");
}

#[test]
fn retry_stage_requires_error_text() {
    let p = ScriptedProvider::new();
    let cg = Codegen::new(&p, CodegenSettings::default());
    let mut conv = tasksynth::codegen::Conversation {
        scope: "x".into(),
        messages: vec![ChatMessage::user("hi")],
    };
    assert!(matches!(cg.retry_stage(&mut conv, "  "), Err(CodegenError::InvalidArgument(_))));
    assert_eq!(p.calls(), 0);
}

#[test]
fn revision_replaces_previous_output() {
    let bundle = hotpot_bundle();
    let p = ScriptedProvider::new();
    let revised = stage2_reply().replace("import csv\n", "import csv\nimport os\n");
    p.push_text(STAGE2, &stage2_reply()).push_text(STAGE2, &revised);
    let cg = Codegen::new(&p, CodegenSettings::default());
    let (_, mut conv) = cg.generate_starter_code(&bundle).unwrap();
    let task = cg.revise_starter_code(&mut conv, &bundle, "Traceback: boom").unwrap();
    assert!(task.files.get("baseline.py").unwrap().content.contains("import os"));
    assert_eq!(task.files.len(), 2);
    assert_eq!(conv.messages.len(), 4);
}

#[test]
fn materialize_and_load_round_trip() {
    let bundle = hotpot_bundle();
    let task = parse_stage2(&stage2_reply(), &bundle, &PlaceholderBlacklist::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    task.materialize(dir.path()).unwrap();
    assert!(dir.path().join("tasks/hotpotqa_joint_facts_qa.yaml").is_file());
    assert!(dir.path().join(HOTPOTQA_DATASET_PATH).is_file());
    let back = GeneratedTask::load(dir.path(), "hotpotqa_joint_facts_qa").unwrap();
    assert_eq!(back.task_config, task.task_config);
    assert_eq!(back.dataset_configs, task.dataset_configs);
    assert_eq!(back.files.len(), 2);

    let mut unsafe_set = FileSet::new();
    assert!(unsafe_set.push(FileBlock::new("", "../x.py", "")).is_err());
    assert!(write_file_blocks(&unsafe_set).is_empty());
}
