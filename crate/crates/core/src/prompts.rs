//! Prompt templates, stored as text assets next to the crate sources.
//!
//! Templates use `{{name}}` slots for values filled in here. Single-brace
//! tokens such as `{dataset_docs}` belong to the generated task and are left
//! untouched.

/// Bumped whenever any template text changes; recorded in the manifest.
pub const PROMPT_VERSION: &str = "1";

pub const TOPIC_SAMPLING: &str = include_str!("../prompts/topic_sampling.txt");
pub const TASK_PROPOSAL: &str = include_str!("../prompts/task_proposal.txt");
pub const DATASET_VALIDATION: &str = include_str!("../prompts/dataset_validation.txt");
pub const TOOL_RESULT_FOLLOWUP: &str = include_str!("../prompts/tool_result_followup.txt");
pub const JSON_NUDGE: &str = include_str!("../prompts/json_nudge.txt");
pub const CODEGEN_STAGE1: &str = include_str!("../prompts/codegen_stage1.txt");
pub const CODEGEN_STAGE2: &str = include_str!("../prompts/codegen_stage2.txt");
pub const ERROR_RECOVERY: &str = include_str!("../prompts/error_recovery.txt");
pub const AGENT_SYSTEM: &str = include_str!("../prompts/agent_system.txt");

const OUTPUT_MARKER: &str = "\n\nYour output:";

/// Topic-sampling prompt; topics from earlier rounds are listed before the
/// output marker so the model can avoid them.
pub fn topic_sampling(previous: &[String]) -> String {
    let template = TOPIC_SAMPLING.trim_end();
    if previous.is_empty() {
        return template.to_string();
    }
    let (head, tail) = template
        .rsplit_once(OUTPUT_MARKER)
        .unwrap_or((template, ""));
    let listed = serde_json::to_string(previous).expect("strings serialize");
    format!("{head}\n\nPrevious examples:\n{listed}{OUTPUT_MARKER}{tail}")
}

/// Proposal prompt for `topic` followed by the dataset validation rules.
pub fn task_proposal(topic: &str) -> String {
    format!(
        "{}\n\n{}",
        TASK_PROPOSAL.trim_end().replace("{{topic}}", topic),
        DATASET_VALIDATION.trim_end()
    )
}

pub fn tool_result_followup(query: &str, results_json: &str) -> String {
    TOOL_RESULT_FOLLOWUP
        .trim_end()
        .replace("{query}", query)
        .replace("{json.dumps(results, ensure_ascii=False)}", results_json)
}

pub fn json_nudge() -> String {
    JSON_NUDGE.trim_end().to_string()
}

pub fn error_recovery(error_text: &str) -> String {
    ERROR_RECOVERY
        .trim_end()
        .replace("{self.stage_1_err}", error_text)
}

/// A worked example pair placed in the codegen prompts.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FewShot {
    pub input: String,
    pub output: String,
}

pub fn codegen_stage1(examples: &[FewShot; 2], input_json: &str) -> String {
    CODEGEN_STAGE1
        .trim_end()
        .replace("{{example_input_1}}", &examples[0].input)
        .replace("{{example_1}}", &examples[0].output)
        .replace("{{example_input_2}}", &examples[1].input)
        .replace("{{example_2}}", &examples[1].output)
        .replace("{{task_description}}", input_json)
}

pub fn codegen_stage2(examples: &[FewShot; 2], task_config: &str) -> String {
    CODEGEN_STAGE2
        .trim_end()
        .replace("{{example_input_1}}", &examples[0].input)
        .replace("{{example_output_1}}", &examples[0].output)
        .replace("{{example_input_2}}", &examples[1].input)
        .replace("{{example_output_2}}", &examples[1].output)
        .replace("{{task_config}}", task_config)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn topic_prompt_lists_previous_topics() {
        let fresh = topic_sampling(&[]);
        assert!(fresh.starts_with("You are an expert in machine learning research."));
        assert!(fresh.ends_with("Your output:"));
        let again = topic_sampling(&["GANs".into()]);
        assert!(again.contains("Previous examples:\n[\"GANs\"]\n\nYour output:"));
    }

    #[test]
    fn proposal_prompt_fills_topic() {
        let p = task_proposal("Graph Neural Networks");
        assert!(p.contains("Topic: Graph Neural Networks\nOutput:"));
        assert!(!p.contains("{{topic}}"));
        assert!(p.ends_with("You can modify the topic slightly to fit the available datasets."));
    }

    #[test]
    fn followup_and_recovery_texts() {
        assert_eq!(
            tool_result_followup("imdb", "[]"),
            "Search results for query 'imdb': []\nSelect one dataset id (or refine by calling the tool again) and output final JSON when ready."
        );
        assert_eq!(
            error_recovery("Only one task config file."),
            "Error encountered: Only one task config file.\n\nPlease try again. Return the revised output in whole."
        );
        assert_eq!(
            json_nudge(),
            "I did not receive a valid JSON. Please either call the search tool or output the final JSON object now."
        );
    }

    #[test]
    fn codegen_slots_are_all_filled() {
        let ex = FewShot {
            input: "IN".into(),
            output: "OUT".into(),
        };
        let s1 = codegen_stage1(&[ex.clone(), ex.clone()], "{\"topic\": 1}");
        let s2 = codegen_stage2(&[ex.clone(), ex], "CFG");
        for s in [&s1, &s2] {
            assert!(!s.contains("{{example"), "unfilled slot");
            assert!(!s.contains("{{task_"), "unfilled slot");
            assert!(s.contains("{dataset_docs}"));
        }
        assert!(s1.contains("{\"topic\": 1}"));
        assert!(s2.contains("Here is your task config:\nCFG"));
    }
}
