//! A scripted teacher for a fixed five-topic corpus. It answers every model
//! role in the pipeline without a network, and is what the bundled replay
//! transcript was recorded from.
//!
//! Of the five topics one never yields a proposal, one yields code that no
//! repair fixes, and three validate. Episodes vary by seed: some submit an
//! improvement, one never submits, one slips a malformed reply, and one
//! gives up after repeated malformed replies.

use std::collections::HashMap;
use std::sync::Mutex;

use serde_json::json;

use crate::codegen::fewshot::{stage1_form, stage2_form};
use crate::codegen::{write_file_blocks, FileBlock, FileSet};
use crate::provider::{ChatMessage, ChatProvider, CompletionRequest, ProviderError, Role, ToolCall};
use crate::schema::{parse_task_config, serialize_task_config};
use crate::synth::{topic_slug, SEARCH_TOOL};
use crate::trajgen::{render_response, AgentAction};

macro_rules! asset {
    ($path:literal) => {
        include_str!(concat!("../fixtures/demo/teacher/", $path))
    };
}

pub const TOPICS: [&str; 5] = [
    "Exploration Strategies for Multi-Armed Bandits",
    "Sentiment Analysis of Movie Reviews",
    "Optimizer Hyperparameters for Linear Models",
    "Time Series Forecasting for Energy Systems",
    "Quantum Error Correction Decoders",
];

#[derive(Clone, Copy, PartialEq, Eq)]
enum Demo {
    Bandit,
    Sentiment,
    Regression,
    Forecast,
    Quantum,
}

const ALL: [Demo; 5] = [Demo::Bandit, Demo::Sentiment, Demo::Regression, Demo::Forecast, Demo::Quantum];

impl Demo {
    fn topic(self) -> &'static str {
        TOPICS[ALL.iter().position(|d| *d == self).expect("listed")]
    }

    fn from_slug(slug: &str) -> Option<Self> {
        ALL.into_iter().find(|d| topic_slug(d.topic()) == slug)
    }

    fn from_task_id(id: &str) -> Option<Self> {
        ALL.into_iter().find(|d| d.task_yaml().is_some_and(|y| y.contains(&format!("id: {id}\n"))))
    }

    fn task_yaml(self) -> Option<&'static str> {
        match self {
            Demo::Bandit => Some(asset!("bandit/task.yaml")),
            Demo::Sentiment => Some(asset!("sentiment/task.yaml")),
            Demo::Regression => Some(asset!("regression/task.yaml")),
            Demo::Forecast => Some(asset!("forecast/task.yaml")),
            Demo::Quantum => None,
        }
    }

    fn dataset(self) -> Option<(&'static str, &'static str)> {
        match self {
            Demo::Sentiment => Some((
                "datasets/imdb_lexicon_sentiment/stanfordnlp_imdb.yaml",
                asset!("sentiment/dataset.yaml"),
            )),
            Demo::Forecast => Some((
                "datasets/ett_oil_temperature_forecast/etdataset_ett.yaml",
                asset!("forecast/dataset.yaml"),
            )),
            _ => None,
        }
    }
}

const BANDIT_TARGET: &str = asset!("bandit/target.py");
const BANDIT_EVALUATE: &str = asset!("bandit/evaluate.py");
const SENTIMENT_BASELINE: &str = asset!("sentiment/baseline.py");
const SENTIMENT_EVALUATE: &str = asset!("sentiment/evaluate.py");
const SENTIMENT_REVIEWS: &str = asset!("sentiment/reviews.py");
const REGRESSION_DATA: &str = asset!("regression/data.py");
const REGRESSION_BASELINE: &str = asset!("regression/baseline.py");
const REGRESSION_EVALUATE: &str = asset!("regression/evaluate.py");
const FORECAST_SERIES: &str = asset!("forecast/series.py");
const FORECAST_METRICS: &str = asset!("forecast/metrics_utils.py");
const FORECAST_BASELINE: &str = asset!("forecast/baseline.py");
const FORECAST_EVALUATE: &str = asset!("forecast/evaluate.py");

/// Scripted stand-in for the teacher model.
#[derive(Default)]
pub struct DemoTeacher {
    calls: Mutex<HashMap<String, usize>>,
}

impl DemoTeacher {
    pub fn new() -> Self {
        Self::default()
    }

    /// Calls seen so far for `scope`, counting this one.
    fn bump(&self, scope: &str) -> usize {
        let mut calls = self.calls.lock().expect("teacher lock");
        let n = calls.entry(scope.to_string()).or_insert(0);
        *n += 1;
        *n - 1
    }
}

fn assistant_turns(request: &CompletionRequest) -> usize {
    request.messages.iter().filter(|m| m.role == Role::Assistant).count()
}

fn no_script(scope: &str) -> ProviderError {
    ProviderError::Rejected(format!("the demo teacher has no script for scope `{scope}`"))
}

impl ChatProvider for DemoTeacher {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        request.validate()?;
        let scope = request.scope.as_str();
        let parts: Vec<&str> = scope.split('/').collect();
        match parts.as_slice() {
            ["topics"] => Ok(ChatMessage::assistant(
                serde_json::to_string_pretty(&TOPICS).expect("strings"),
            )),
            ["propose", slug] => {
                let demo = Demo::from_slug(slug).ok_or_else(|| no_script(scope))?;
                Ok(propose(demo, assistant_turns(request)))
            }
            ["codegen", slug, "configs"] => {
                let demo = Demo::from_slug(slug).ok_or_else(|| no_script(scope))?;
                Ok(ChatMessage::assistant(configs_reply(demo, self.bump(scope))))
            }
            ["codegen", id, "code"] => {
                let demo = Demo::from_task_id(id).ok_or_else(|| no_script(scope))?;
                Ok(ChatMessage::assistant(code_reply(demo, self.bump(scope))))
            }
            // repairs continue the revision count after the codegen reply
            ["verify", id, "code"] => {
                let demo = Demo::from_task_id(id).ok_or_else(|| no_script(scope))?;
                Ok(ChatMessage::assistant(code_reply(demo, self.bump(scope) + 1)))
            }
            ["collect", id, seed] => {
                let demo = Demo::from_task_id(id).ok_or_else(|| no_script(scope))?;
                let seed: u64 = seed.parse().map_err(|_| no_script(scope))?;
                let script = episode(demo, seed);
                let k = assistant_turns(request);
                Ok(ChatMessage::assistant(
                    script
                        .get(k)
                        .cloned()
                        .unwrap_or_else(|| render_response("Submitting the current state.", &AgentAction::Submit)),
                ))
            }
            _ => Err(no_script(scope)),
        }
    }
}

fn search(query: &str) -> ChatMessage {
    ChatMessage::assistant_tool_calls(
        "",
        vec![ToolCall {
            id: "call_0".into(),
            name: SEARCH_TOOL.into(),
            arguments: json!({ "query": query }).to_string(),
        }],
    )
}

fn proposal(topic: &str, metric: &str, description: &str, dataset: Option<&str>) -> ChatMessage {
    let mut v = json!({"topic": topic, "metric": metric, "description": description});
    if let Some(d) = dataset {
        v["dataset"] = json!(d);
    }
    ChatMessage::assistant(format!(
        "Here is the task.\n\n```json\n{}\n```",
        serde_json::to_string_pretty(&v).expect("json")
    ))
}

fn propose(demo: Demo, turn: usize) -> ChatMessage {
    match (demo, turn) {
        (Demo::Bandit, _) => proposal(
            demo.topic(),
            "Regret (lower is better)",
            "Design an exploration policy for 10-armed Bernoulli bandits, evaluated by mean per-step regret over seeded runs. No dataset is needed; the environment is simulated.",
            None,
        ),
        (Demo::Sentiment, 0) => search("imdb"),
        (Demo::Sentiment, _) => proposal(
            demo.topic(),
            "Accuracy",
            "Binary sentiment classification of IMDB movie reviews, starting from a word-lexicon baseline.",
            Some("stanfordnlp/imdb"),
        ),
        (Demo::Regression, 0) => search("synthetic linear regression"),
        (Demo::Regression, _) => proposal(
            demo.topic(),
            "MSE (lower is better)",
            "Tune stochastic gradient descent for a three-feature linear model on deterministic synthetic data. The search found no suitable hub dataset, so the data is generated.",
            None,
        ),
        (Demo::Forecast, 0) => search("ETTh1"),
        (Demo::Forecast, _) => proposal(
            "Time Series Forecasting of Transformer Oil Temperature",
            "sMAPE (lower is better)",
            "Forecast 24 hours of oil temperature on the ETTh1 electricity transformer series.",
            Some("ETDataset/ett"),
        ),
        (Demo::Quantum, _) => ChatMessage::assistant(
            "Decoding surface codes well needs a stabilizer simulator and many hours of sampling. I would start from minimum-weight perfect matching and compare against a learned decoder, but I cannot think of a hub dataset that fits.",
        ),
    }
}

fn blocks(files: &[(&str, String)]) -> String {
    let set: FileSet = files
        .iter()
        .map(|(p, c)| FileBlock::new(crate::codegen::blocks::language_for(p), *p, c.trim_end()))
        .collect::<Vec<_>>()
        .try_into()
        .expect("demo paths are distinct and safe");
    write_file_blocks(&set).trim_end().to_string()
}

fn task_config_text(demo: Demo, stage2: bool) -> (String, String) {
    let cfg = parse_task_config(demo.task_yaml().expect("has a task")).expect("demo task config parses");
    let form = if stage2 { stage2_form(&cfg) } else { stage1_form(&cfg) };
    (cfg.file_path(), serialize_task_config(&form))
}

fn configs_reply(demo: Demo, call: usize) -> String {
    let (path, text) = task_config_text(demo, false);
    let mut files = vec![(path.as_str(), text.clone())];
    if demo == Demo::Bandit && call == 0 {
        let variant = text.replace("id: bernoulli_bandit_exploration", "id: bernoulli_bandit_ucb");
        files.push(("tasks/bernoulli_bandit_ucb.yaml", variant));
    }
    if let Some((p, y)) = demo.dataset() {
        files.push((p, y.to_string()));
    }
    format!("Here are the configuration files.\n\n{}", blocks(&files))
}

fn code_reply(demo: Demo, call: usize) -> String {
    let (path, cfg) = task_config_text(demo, true);
    let mut files: Vec<(&str, String)> = vec![(path.as_str(), cfg)];
    let s = |t: &str| t.to_string();
    match demo {
        Demo::Bandit => {
            files.push(("target.py", s(BANDIT_TARGET)));
            files.push(("evaluate.py", s(BANDIT_EVALUATE)));
        }
        Demo::Sentiment => {
            let baseline = if call == 0 {
                SENTIMENT_BASELINE.replace("\"submission.csv\"", "\"predictions.csv\"").replace("to submission.csv", "to predictions.csv")
            } else {
                s(SENTIMENT_BASELINE)
            };
            files.push(("reviews.py", s(SENTIMENT_REVIEWS)));
            files.push(("baseline.py", baseline));
            files.push(("evaluate.py", s(SENTIMENT_EVALUATE)));
        }
        Demo::Regression => {
            files.push(("data.py", s(REGRESSION_DATA)));
            files.push(("baseline.py", s(REGRESSION_BASELINE)));
            files.push(("evaluate.py", s(REGRESSION_EVALUATE)));
        }
        Demo::Forecast => {
            // Every revision fixes the last error and introduces another.
            files.push(("series.py", s(FORECAST_SERIES)));
            let mut baseline = s(FORECAST_BASELINE);
            let mut evaluate = s(FORECAST_EVALUATE);
            match call {
                0 => {}
                1 => baseline = baseline.replace("\"forecast\"]", "\"prediction\"]"),
                2 => baseline = baseline.replace("SEASON = 24", "SEASON = 168"),
                _ => {
                    evaluate = evaluate.replace(
                        "print(json.dumps({\"smape\": smape(HELD_OUT, forecast)}))",
                        "print(f\"sMAPE: {smape(HELD_OUT, forecast):.4f}\")",
                    )
                }
            }
            if call > 0 {
                files.push(("metrics_utils.py", s(FORECAST_METRICS)));
            }
            files.push(("baseline.py", baseline));
            files.push(("evaluate.py", evaluate));
        }
        Demo::Quantum => unreachable!("no task"),
    }
    let intro = if call == 0 {
        "Here is the starter code."
    } else {
        "Fixed. Here is the revised starter code."
    };
    format!("{intro}\n\n{}", blocks(&files))
}

/// 1-based number of the first line of `text` containing `needle`.
fn line_of(text: &str, needle: &str) -> usize {
    text.lines()
        .position(|l| l.contains(needle))
        .map(|i| i + 1)
        .unwrap_or_else(|| panic!("`{needle}` not in demo asset"))
}

fn say(rationale: &str, action: AgentAction) -> String {
    render_response(rationale, &action)
}

fn read(path: &str) -> AgentAction {
    AgentAction::ReadFile { path: path.into() }
}

fn run(command: &str) -> AgentAction {
    AgentAction::RunCommand { command: command.into() }
}

fn edit(path: &str, start: usize, end: usize, replacement: String) -> AgentAction {
    AgentAction::EditFile {
        path: path.into(),
        start,
        end,
        replacement,
    }
}

fn episode(demo: Demo, seed: u64) -> Vec<String> {
    let i = (seed % 5) as usize;
    match demo {
        Demo::Bandit => {
            let bonus = [1.0, 0.5, 2.0, 0.25, 1.5][i];
            let start = line_of(BANDIT_TARGET, "if t % 10 == 0:");
            let end = line_of(BANDIT_TARGET, "return max(range(n)");
            let ucb = format!(
                "    import math\n\n    bonus = {bonus}\n    scores = [\n        rewards[i] / counts[i] + bonus * math.sqrt(math.log(t + 1) / counts[i])\n        for i in range(n)\n    ]\n    return max(range(n), key=lambda i: scores[i])"
            );
            let mut s = vec![say("Let me read the current policy before changing anything.", read("target.py"))];
            if seed == 1 {
                s.push("I will run the evaluator next to get the baseline regret.".to_string());
            }
            s.extend([
                say("The policy explores on a fixed schedule. I will measure its regret first.", run("python3 evaluate.py")),
                say(
                    &format!("Fixed-schedule exploration wastes pulls on bad arms. An upper confidence bound explores only where uncertainty is high. I will try UCB1 with an exploration bonus of {bonus}."),
                    edit("target.py", start, end, ucb),
                ),
                say("Checking the regret of the UCB policy.", run("python3 evaluate.py")),
                say("Regret went down against the baseline. Submitting.", AgentAction::Submit),
            ]);
            s
        }
        Demo::Sentiment => {
            let extra: [(&str, &str); 5] = [
                ("loved wonderful brilliant superb fantastic delightful enjoyable masterpiece", "terrible worst dull poorly stupid waste forgettable pointless"),
                ("loved wonderful", "terrible worst"),
                ("loved brilliant superb fantastic", "terrible dull bland"),
                ("wonderful masterpiece enjoyable", "worst waste awful"),
                ("loved superb delightful funny", "dull poorly lazy"),
            ];
            let (pos, neg) = extra[i];
            let set = |base: &str, more: &str| {
                let mut words: Vec<&str> = base.split(' ').chain(more.split(' ')).collect();
                words.sort_unstable();
                words.dedup();
                words.iter().map(|w| format!("\"{w}\"")).collect::<Vec<_>>().join(", ")
            };
            let lexicon = format!(
                "POSITIVE = {{{}}}\nNEGATIVE = {{{}}}",
                set("good great excellent", pos),
                set("bad awful boring", neg)
            );
            let start = line_of(SENTIMENT_BASELINE, "POSITIVE = ");
            let check = "python3 baseline.py && python3 evaluate.py --submission_file submission.csv";
            let mut s = vec![
                say("Reading the baseline classifier.", read("baseline.py")),
                say("Scoring the baseline as is.", run(check)),
            ];
            if seed == 1 {
                s.push(say("Let me see which reviews the lexicon misses.", read("reviews.py")));
            }
            s.extend([
                say(
                    "The word lists are tiny, so most reviews score zero and default to positive. I will add common sentiment words to both lists.",
                    edit("baseline.py", start, start + 1, lexicon),
                ),
                say("Re-running the baseline with the larger lexicon.", run(check)),
            ]);
            if seed == 1 {
                s.push(say("Counting positive reviews to check the class balance.", run("grep -c ', 1)' reviews.py")));
            } else {
                s.push(say("Accuracy improved. Submitting.", AgentAction::Submit));
            }
            s
        }
        Demo::Regression => {
            if seed == 2 {
                return vec![
                    "The baseline clearly underfits; I would raise the epoch count.".to_string(),
                    "Raising EPOCHS should lower the error.".to_string(),
                ];
            }
            let epochs = [60, 100, 40, 80, 150][i];
            let start = line_of(REGRESSION_BASELINE, "LEARNING_RATE = ");
            vec![
                say("Reading the training script.", read("baseline.py")),
                say("Training the baseline to see where it starts.", run("python3 baseline.py")),
                say(
                    &format!("Three epochs at a learning rate of 0.01 cannot converge. I will use a learning rate of 0.05 and {epochs} epochs."),
                    edit("baseline.py", start, start + 1, format!("LEARNING_RATE = 0.05\nEPOCHS = {epochs}")),
                ),
                say("Retraining with the new schedule.", run("python3 baseline.py")),
                say("Scoring the saved model locally.", run("python3 evaluate.py --config_fname model.yaml")),
                say("The error is near the noise floor. Submitting.", AgentAction::Submit),
            ]
        }
        Demo::Forecast | Demo::Quantum => Vec::new(),
    }
}
