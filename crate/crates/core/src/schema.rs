//! Pipeline data types: the task and dataset YAML configs, task proposals and
//! the metrics JSON printed by evaluation scripts.
//!
//! Both YAML formats are parsed strictly. Unknown keys are rejected so that a
//! drifting model output fails at parse time rather than at execution time.

use std::collections::BTreeSet;
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use indexmap::IndexMap;
use serde::{Deserialize, Deserializer, Serialize};
use thiserror::Error;

/// Literal placeholder that a task description must carry when the task uses
/// at least one dataset config.
pub const DATASET_DOCS_PLACEHOLDER: &str = "{dataset_docs}";

/// Metric name to value, in the order the evaluator printed them.
pub type MetricMap = IndexMap<String, f64>;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("YAML syntax error: {0}")]
    Syntax(String),
    #[error("schema error in field `{field}`: {message}")]
    Schema { field: String, message: String },
}

impl ConfigError {
    fn schema(field: impl Into<String>, message: impl Into<String>) -> Self {
        ConfigError::Schema {
            field: field.into(),
            message: message.into(),
        }
    }

    /// Name of the offending field, when the error is a schema error.
    pub fn field(&self) -> Option<&str> {
        match self {
            ConfigError::Schema { field, .. } => Some(field),
            ConfigError::Syntax(_) => None,
        }
    }
}

/// Checks that `path` is relative and never climbs out of its root.
pub fn check_relative_path(path: &str) -> Result<(), String> {
    if path.trim().is_empty() {
        return Err("path is empty".to_string());
    }
    if path.starts_with('/') || path.starts_with('\\') || path.starts_with('~') {
        return Err(format!("`{path}` is absolute"));
    }
    let bytes = path.as_bytes();
    if bytes.len() >= 2 && bytes[1] == b':' && bytes[0].is_ascii_alphabetic() {
        return Err(format!("`{path}` is absolute"));
    }
    if path.split(['/', '\\']).any(|seg| seg == "..") {
        return Err(format!("`{path}` contains a parent-directory segment"));
    }
    Ok(())
}

/// How a task is executed and evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum TaskEntrypoint {
    /// Agent writes `submission.csv` to the workspace root.
    #[serde(rename = "CSVSubmissionTasks")]
    CsvSubmission,
    /// Agent submits a model artifact plus a YAML config.
    #[serde(rename = "ModelSubmissionTasks")]
    ModelSubmission,
    /// Language-model training run under the distributed launcher.
    #[serde(rename = "LMSubmissionTasks")]
    LmSubmission,
    /// Evaluator imports `target.py` directly.
    #[serde(rename = "PythonSubmissionTasks")]
    PythonSubmission,
}

impl TaskEntrypoint {
    pub const ALL: [TaskEntrypoint; 4] = [
        TaskEntrypoint::CsvSubmission,
        TaskEntrypoint::ModelSubmission,
        TaskEntrypoint::LmSubmission,
        TaskEntrypoint::PythonSubmission,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            TaskEntrypoint::CsvSubmission => "CSVSubmissionTasks",
            TaskEntrypoint::ModelSubmission => "ModelSubmissionTasks",
            TaskEntrypoint::LmSubmission => "LMSubmissionTasks",
            TaskEntrypoint::PythonSubmission => "PythonSubmissionTasks",
        }
    }

    /// How the evaluator's stdout is scanned for the metrics object.
    pub fn metrics_mode(self) -> MetricsMode {
        match self {
            TaskEntrypoint::LmSubmission | TaskEntrypoint::ModelSubmission => {
                MetricsMode::FirstJsonLine
            }
            TaskEntrypoint::CsvSubmission | TaskEntrypoint::PythonSubmission => {
                MetricsMode::EntireStdout
            }
        }
    }
}

impl fmt::Display for TaskEntrypoint {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("unknown task entrypoint `{0}`")]
pub struct UnknownEntrypoint(pub String);

impl FromStr for TaskEntrypoint {
    type Err = UnknownEntrypoint;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        TaskEntrypoint::ALL
            .into_iter()
            .find(|e| e.as_str() == s)
            .ok_or_else(|| UnknownEntrypoint(s.to_string()))
    }
}

fn null_as_default<'de, D, T>(de: D) -> Result<T, D::Error>
where
    D: Deserializer<'de>,
    T: Default + Deserialize<'de>,
{
    Ok(Option::<T>::deserialize(de)?.unwrap_or_default())
}

fn blank_as_none<'de, D>(de: D) -> Result<Option<String>, D::Error>
where
    D: Deserializer<'de>,
{
    Ok(Option::<String>::deserialize(de)?.filter(|s| !s.trim().is_empty()))
}

/// `tasks/<id>.yaml`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub id: String,
    pub name: String,
    pub description: String,
    #[serde(default, deserialize_with = "null_as_default")]
    pub dataset_configs: Vec<String>,
    pub task_entrypoint: TaskEntrypoint,
    pub training_timeout: u64,
    pub use_generic_conda: bool,
    #[serde(
        default,
        deserialize_with = "blank_as_none",
        skip_serializing_if = "Option::is_none"
    )]
    pub requirements_path: Option<String>,
    #[serde(default, deserialize_with = "null_as_default")]
    pub starter_code: Vec<String>,
    #[serde(default, deserialize_with = "null_as_default")]
    pub baseline_paths: Vec<String>,
    #[serde(default, deserialize_with = "null_as_default")]
    pub baseline_scores: Vec<MetricMap>,
    #[serde(default, deserialize_with = "null_as_default")]
    pub evaluation_paths: Vec<String>,
    pub evaluation_read_only: bool,
    pub memory_path: String,
}

const TASK_CONFIG_FIELDS: &[&str] = &[
    "id",
    "name",
    "description",
    "dataset_configs",
    "task_entrypoint",
    "training_timeout",
    "use_generic_conda",
    "requirements_path",
    "starter_code",
    "baseline_paths",
    "baseline_scores",
    "evaluation_paths",
    "evaluation_read_only",
    "memory_path",
];

const DATASET_CONFIG_FIELDS: &[&str] = &["data_path", "description", "is_local", "name"];

impl TaskConfig {
    /// Checks every invariant that holds for a config at any pipeline stage.
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.id.is_empty()
            || !self
                .id
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '_' || c == '-')
        {
            return Err(ConfigError::schema(
                "id",
                format!("`{}` is not a snake_case identifier", self.id),
            ));
        }
        if self.name.trim().is_empty() {
            return Err(ConfigError::schema("name", "must not be empty"));
        }
        if !self.dataset_configs.is_empty() && !self.description.contains(DATASET_DOCS_PLACEHOLDER)
        {
            return Err(ConfigError::schema(
                "description",
                format!("must contain {DATASET_DOCS_PLACEHOLDER} when dataset_configs is set"),
            ));
        }
        if self.training_timeout == 0 {
            return Err(ConfigError::schema("training_timeout", "must be positive"));
        }
        match (self.use_generic_conda, &self.requirements_path) {
            (false, None) => {
                return Err(ConfigError::schema(
                    "requirements_path",
                    "required when use_generic_conda is false",
                ))
            }
            (true, Some(_)) => {
                return Err(ConfigError::schema(
                    "requirements_path",
                    "must be empty when use_generic_conda is true",
                ))
            }
            _ => {}
        }
        let path_lists: [(&str, &[String]); 5] = [
            ("dataset_configs", &self.dataset_configs),
            ("starter_code", &self.starter_code),
            ("baseline_paths", &self.baseline_paths),
            ("evaluation_paths", &self.evaluation_paths),
            ("requirements_path", self.requirements_path.as_slice()),
        ];
        for (field, paths) in path_lists {
            for p in paths {
                check_relative_path(p).map_err(|m| ConfigError::schema(field, m))?;
            }
        }
        check_relative_path(&self.memory_path).map_err(|m| ConfigError::schema("memory_path", m))?;
        for scores in &self.baseline_scores {
            if let Some((k, v)) = scores.iter().find(|(_, v)| !v.is_finite()) {
                return Err(ConfigError::schema(
                    "baseline_scores",
                    format!("`{k}` is not finite ({v})"),
                ));
            }
        }
        Ok(())
    }

    /// Invariants that must hold once starter code has been generated.
    pub fn validate_complete(&self) -> Result<(), ConfigError> {
        self.validate()?;
        if self.baseline_paths.len() != 1 {
            return Err(ConfigError::schema(
                "baseline_paths",
                format!("expected exactly one baseline file, found {}", self.baseline_paths.len()),
            ));
        }
        if self.evaluation_paths.len() != 1 {
            return Err(ConfigError::schema(
                "evaluation_paths",
                format!(
                    "expected exactly one evaluation file, found {}",
                    self.evaluation_paths.len()
                ),
            ));
        }
        Ok(())
    }

    /// The config file must be named after the task id.
    pub fn check_file_stem(&self, path: &Path) -> Result<(), ConfigError> {
        let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or_default();
        if stem != self.id {
            return Err(ConfigError::schema(
                "id",
                format!("`{}` does not match the config filename `{stem}`", self.id),
            ));
        }
        Ok(())
    }

    pub fn baseline_path(&self) -> Option<&str> {
        self.baseline_paths.first().map(String::as_str)
    }

    pub fn evaluation_path(&self) -> Option<&str> {
        self.evaluation_paths.first().map(String::as_str)
    }

    /// Canonical on-disk location relative to a task directory.
    pub fn file_path(&self) -> String {
        format!("tasks/{}.yaml", self.id)
    }
}

/// Dataset identifiers a model tends to emit when it has nothing real to say.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PlaceholderBlacklist(BTreeSet<String>);

impl Default for PlaceholderBlacklist {
    fn default() -> Self {
        Self(
            ["path/to/dataset", "placeholder", "<dataset>"]
                .into_iter()
                .map(String::from)
                .collect(),
        )
    }
}

impl PlaceholderBlacklist {
    pub fn with_extra<I, S>(mut self, extra: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        self.0
            .extend(extra.into_iter().map(|s| s.as_ref().trim().to_lowercase()));
        self
    }

    pub fn contains(&self, value: &str) -> bool {
        self.0.contains(&value.trim().to_lowercase())
    }
}

/// `datasets/<task id>/<name>.yaml`
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DatasetConfig {
    pub data_path: String,
    pub description: String,
    pub is_local: bool,
    pub name: String,
}

impl DatasetConfig {
    pub fn validate(&self, blacklist: &PlaceholderBlacklist) -> Result<(), ConfigError> {
        if self.data_path.trim().is_empty() {
            return Err(ConfigError::schema("data_path", "must not be empty"));
        }
        if blacklist.contains(&self.data_path) {
            return Err(ConfigError::schema(
                "data_path",
                format!("`{}` is a placeholder, not a hub dataset", self.data_path),
            ));
        }
        if self.is_local {
            return Err(ConfigError::schema("is_local", "must be false"));
        }
        Ok(())
    }
}

fn parse_strict<T: serde::de::DeserializeOwned>(
    text: &str,
    known: &[&str],
) -> Result<T, ConfigError> {
    let value: serde_yaml::Value =
        serde_yaml::from_str(text).map_err(|e| ConfigError::Syntax(e.to_string()))?;
    let mapping = value
        .as_mapping()
        .ok_or_else(|| ConfigError::schema("<root>", "document is not a mapping"))?;
    for key in mapping.keys() {
        let name = key
            .as_str()
            .ok_or_else(|| ConfigError::schema("<root>", format!("non-string key {key:?}")))?;
        if !known.contains(&name) {
            return Err(ConfigError::schema(name, "unknown field"));
        }
    }
    serde_path_to_error::deserialize(value).map_err(|err| {
        let path = err.path().to_string();
        let inner = err.into_inner().to_string();
        let field = if path == "." {
            backticked(&inner).unwrap_or("<root>").to_string()
        } else {
            path.split(['.', '['])
                .find(|s| !s.is_empty())
                .unwrap_or(&path)
                .to_string()
        };
        ConfigError::schema(field, inner)
    })
}

fn backticked(msg: &str) -> Option<&str> {
    let start = msg.find('`')? + 1;
    let len = msg[start..].find('`')?;
    Some(&msg[start..start + len])
}

pub fn parse_task_config(text: &str) -> Result<TaskConfig, ConfigError> {
    let cfg: TaskConfig = parse_strict(text, TASK_CONFIG_FIELDS)?;
    cfg.validate()?;
    Ok(cfg)
}

pub fn serialize_task_config(cfg: &TaskConfig) -> String {
    serde_yaml::to_string(cfg).expect("task config is always representable as YAML")
}

pub fn parse_dataset_config(text: &str) -> Result<DatasetConfig, ConfigError> {
    parse_dataset_config_with(text, &PlaceholderBlacklist::default())
}

pub fn parse_dataset_config_with(
    text: &str,
    blacklist: &PlaceholderBlacklist,
) -> Result<DatasetConfig, ConfigError> {
    let cfg: DatasetConfig = parse_strict(text, DATASET_CONFIG_FIELDS)?;
    cfg.validate(blacklist)?;
    Ok(cfg)
}

pub fn serialize_dataset_config(cfg: &DatasetConfig) -> String {
    serde_yaml::to_string(cfg).expect("dataset config is always representable as YAML")
}

/// Phase-2 proposal produced by the teacher for one topic.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskProposal {
    pub topic: String,
    pub metric: String,
    pub description: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dataset: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
#[error("invalid task proposal: {0}")]
pub struct ProposalError(pub String);

impl TaskProposal {
    /// Builds a proposal from a JSON object, ignoring extra keys.
    pub fn from_json(value: &serde_json::Value) -> Result<Self, ProposalError> {
        let obj = value
            .as_object()
            .ok_or_else(|| ProposalError("not a JSON object".into()))?;
        let required = |key: &str| -> Result<String, ProposalError> {
            match obj.get(key) {
                Some(serde_json::Value::String(s)) if !s.trim().is_empty() => {
                    Ok(s.trim().to_string())
                }
                Some(_) => Err(ProposalError(format!("`{key}` must be a non-empty string"))),
                None => Err(ProposalError(format!("missing `{key}`"))),
            }
        };
        let dataset = match obj.get("dataset") {
            None | Some(serde_json::Value::Null) => None,
            Some(serde_json::Value::String(s)) if s.trim().is_empty() => None,
            Some(serde_json::Value::String(s)) => Some(s.trim().to_string()),
            Some(_) => return Err(ProposalError("`dataset` must be a string".into())),
        };
        Ok(TaskProposal {
            topic: required("topic")?,
            metric: required("metric")?,
            description: required("description")?,
            dataset,
        })
    }
}

/// Where the metrics object is found in an evaluator's stdout.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MetricsMode {
    /// The whole trimmed stdout is one JSON object.
    EntireStdout,
    /// The first line starting with `{` that parses as a JSON object.
    FirstJsonLine,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricsError {
    #[error("no JSON metrics object found in stdout")]
    NoJsonFound,
    #[error("stdout has content after the metrics object")]
    TrailingContent,
    #[error("metric `{0}` is not a finite number")]
    NonNumericValue(String),
    #[error("metrics object is empty")]
    Empty,
}

/// Non-empty ordered metrics, all finite. The first key is treated as primary.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "MetricMap", into = "MetricMap")]
pub struct MetricsReport {
    metrics: MetricMap,
}

impl MetricsReport {
    pub fn new(metrics: MetricMap) -> Result<Self, MetricsError> {
        if metrics.is_empty() {
            return Err(MetricsError::Empty);
        }
        if let Some((k, _)) = metrics.iter().find(|(_, v)| !v.is_finite()) {
            return Err(MetricsError::NonNumericValue(k.clone()));
        }
        Ok(Self { metrics })
    }

    pub fn metrics(&self) -> &MetricMap {
        &self.metrics
    }

    pub fn get(&self, key: &str) -> Option<f64> {
        self.metrics.get(key).copied()
    }

    pub fn primary(&self) -> (&str, f64) {
        let (k, v) = self.metrics.first().expect("report is never empty");
        (k.as_str(), *v)
    }

    pub fn into_inner(self) -> MetricMap {
        self.metrics
    }
}

impl TryFrom<MetricMap> for MetricsReport {
    type Error = MetricsError;

    fn try_from(value: MetricMap) -> Result<Self, Self::Error> {
        MetricsReport::new(value)
    }
}

impl From<MetricsReport> for MetricMap {
    fn from(value: MetricsReport) -> Self {
        value.metrics
    }
}

fn report_from_object(
    obj: serde_json::Map<String, serde_json::Value>,
) -> Result<MetricsReport, MetricsError> {
    let mut metrics = MetricMap::with_capacity(obj.len());
    for (k, v) in obj {
        let x = v
            .as_f64()
            .filter(|x| x.is_finite())
            .ok_or_else(|| MetricsError::NonNumericValue(k.clone()))?;
        metrics.insert(k, x);
    }
    MetricsReport::new(metrics)
}

pub fn parse_metrics_stdout(text: &str, mode: MetricsMode) -> Result<MetricsReport, MetricsError> {
    match mode {
        MetricsMode::EntireStdout => {
            let trimmed = text.trim();
            if !trimmed.starts_with('{') {
                return Err(MetricsError::NoJsonFound);
            }
            let mut stream =
                serde_json::Deserializer::from_str(trimmed).into_iter::<serde_json::Value>();
            let value = match stream.next() {
                Some(Ok(v)) => v,
                _ => return Err(MetricsError::NoJsonFound),
            };
            if !trimmed[stream.byte_offset()..].trim().is_empty() {
                return Err(MetricsError::TrailingContent);
            }
            match value {
                serde_json::Value::Object(obj) => report_from_object(obj),
                _ => Err(MetricsError::NoJsonFound),
            }
        }
        MetricsMode::FirstJsonLine => {
            for line in text.lines() {
                let line = line.trim();
                if !line.starts_with('{') {
                    continue;
                }
                if let Ok(serde_json::Value::Object(obj)) = serde_json::from_str(line) {
                    return report_from_object(obj);
                }
            }
            Err(MetricsError::NoJsonFound)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const HOTPOT_TASK: &str = include_str!("../fixtures/hotpotqa/task.yaml");
    const HOTPOT_DATASET: &str = include_str!("../fixtures/hotpotqa/dataset.yaml");

    fn minimal() -> String {
        "id: demo\nname: Demo\ndescription: d\ntask_entrypoint: CSVSubmissionTasks\n\
         training_timeout: 60\nuse_generic_conda: true\nevaluation_read_only: true\n\
         memory_path: memory.json\n"
            .to_string()
    }

    #[test]
    fn hotpotqa_task_config_parses() {
        let cfg = parse_task_config(HOTPOT_TASK).unwrap();
        assert_eq!(cfg.id, "hotpotqa_joint_facts_qa");
        assert_eq!(cfg.task_entrypoint, TaskEntrypoint::CsvSubmission);
        assert_eq!(cfg.training_timeout, 18000);
        assert_eq!(cfg.baseline_scores[0]["joint_f1"], 0.022210986997935424);
        assert_eq!(cfg.baseline_scores[0]["ans_em"], 0.052532072923700206);
        assert_eq!(cfg.baseline_scores[0].len(), 6);
        assert!(cfg.requirements_path.is_none());
        cfg.validate_complete().unwrap();
        cfg.check_file_stem(Path::new("tasks/hotpotqa_joint_facts_qa.yaml"))
            .unwrap();
    }

    #[test]
    fn hotpotqa_round_trips() {
        let cfg = parse_task_config(HOTPOT_TASK).unwrap();
        let again = parse_task_config(&serialize_task_config(&cfg)).unwrap();
        assert_eq!(cfg, again);
        let ds = parse_dataset_config(HOTPOT_DATASET).unwrap();
        assert_eq!(ds.data_path, "hotpotqa/hotpot_qa");
        assert!(!ds.is_local);
        assert_eq!(parse_dataset_config(&serialize_dataset_config(&ds)).unwrap(), ds);
    }

    #[test]
    fn requirements_path_required_without_generic_conda() {
        let text = minimal().replace("use_generic_conda: true", "use_generic_conda: false");
        let err = parse_task_config(&text).unwrap_err();
        assert_eq!(err.field(), Some("requirements_path"));
    }

    #[test]
    fn requirements_path_rejected_with_generic_conda() {
        let text = minimal() + "requirements_path: requirements.txt\n";
        let err = parse_task_config(&text).unwrap_err();
        assert_eq!(err.field(), Some("requirements_path"));
    }

    #[test]
    fn blank_requirements_path_is_absent() {
        let text = minimal() + "requirements_path:\n";
        assert!(parse_task_config(&text).unwrap().requirements_path.is_none());
    }

    #[test]
    fn empty_starter_code_serializes_as_flow_list() {
        let cfg = parse_task_config(&minimal()).unwrap();
        assert!(serialize_task_config(&cfg).contains("starter_code: []"));
    }

    #[test]
    fn unknown_and_missing_fields_are_named() {
        let err = parse_task_config(&(minimal() + "extra_knob: 3\n")).unwrap_err();
        assert_eq!(err.field(), Some("extra_knob"));
        let err = parse_task_config(&minimal().replace("name: Demo\n", "")).unwrap_err();
        assert_eq!(err.field(), Some("name"));
        let err =
            parse_task_config(&minimal().replace("training_timeout: 60", "training_timeout: soon"))
                .unwrap_err();
        assert_eq!(err.field(), Some("training_timeout"));
    }

    #[test]
    fn malformed_yaml_is_a_syntax_error() {
        assert!(matches!(
            parse_task_config("id: [unclosed\n"),
            Err(ConfigError::Syntax(_))
        ));
    }

    #[test]
    fn unknown_entrypoint_is_rejected() {
        let text = minimal().replace("CSVSubmissionTasks", "RLSubmissionTasks");
        assert_eq!(parse_task_config(&text).unwrap_err().field(), Some("task_entrypoint"));
        assert!("CsvSubmission".parse::<TaskEntrypoint>().is_err());
        for e in TaskEntrypoint::ALL {
            assert_eq!(e.as_str().parse::<TaskEntrypoint>().unwrap(), e);
        }
    }

    #[test]
    fn dataset_docs_required_with_dataset_configs() {
        let text = minimal() + "dataset_configs:\n- datasets/demo/d.yaml\n";
        assert_eq!(parse_task_config(&text).unwrap_err().field(), Some("description"));
        let ok = text.replace("description: d", "description: see {dataset_docs}");
        parse_task_config(&ok).unwrap();
    }

    #[test]
    fn unsafe_paths_are_rejected() {
        for bad in ["../evil.py", "/abs/evaluate.py", "a/../../b.py", "C:\\x.py"] {
            let text = minimal() + &format!("evaluation_paths:\n- '{bad}'\n");
            assert_eq!(
                parse_task_config(&text).unwrap_err().field(),
                Some("evaluation_paths"),
                "{bad}"
            );
        }
        check_relative_path("src/model.py").unwrap();
        check_relative_path("a..b/c.py").unwrap();
    }

    #[test]
    fn id_must_match_file_stem() {
        let cfg = parse_task_config(&minimal()).unwrap();
        assert!(cfg.check_file_stem(Path::new("tasks/other.yaml")).is_err());
    }

    #[test]
    fn placeholder_data_paths_are_rejected() {
        let text = "data_path: path/to/dataset\ndescription: x\nis_local: false\nname: x\n";
        assert_eq!(parse_dataset_config(text).unwrap_err().field(), Some("data_path"));
        let custom = PlaceholderBlacklist::default().with_extra(["Owner/Name"]);
        let text = text.replace("path/to/dataset", "owner/name");
        assert!(parse_dataset_config(&text).is_ok());
        assert!(parse_dataset_config_with(&text, &custom).is_err());
        let local = "data_path: imdb\ndescription: x\nis_local: true\nname: x\n";
        assert_eq!(parse_dataset_config(local).unwrap_err().field(), Some("is_local"));
    }

    #[test]
    fn entire_stdout_metrics() {
        let r = parse_metrics_stdout(
            r#"{"joint_f1": 0.0222, "ans_em": 0.0525}"#,
            MetricsMode::EntireStdout,
        )
        .unwrap();
        assert_eq!(r.get("joint_f1"), Some(0.0222));
        assert_eq!(r.get("ans_em"), Some(0.0525));
        assert_eq!(r.primary(), ("joint_f1", 0.0222));
        assert_eq!(
            parse_metrics_stdout("{\"acc\": 1.0}\nextra", MetricsMode::EntireStdout),
            Err(MetricsError::TrailingContent)
        );
        assert_eq!(
            parse_metrics_stdout("  {\"acc\": 1}\n\n", MetricsMode::EntireStdout)
                .unwrap()
                .get("acc"),
            Some(1.0)
        );
    }

    #[test]
    fn first_json_line_metrics() {
        let r = parse_metrics_stdout("loading data...\n{\"bleu\": 0.5}", MetricsMode::FirstJsonLine)
            .unwrap();
        assert_eq!(r.get("bleu"), Some(0.5));
        assert_eq!(
            parse_metrics_stdout("loading data...\n{\"bleu\": 0.5}", MetricsMode::EntireStdout),
            Err(MetricsError::NoJsonFound)
        );
        assert_eq!(
            parse_metrics_stdout("{broken\nno json here", MetricsMode::FirstJsonLine),
            Err(MetricsError::NoJsonFound)
        );
        assert_eq!(
            parse_metrics_stdout("{\"acc\": \"high\"}", MetricsMode::FirstJsonLine),
            Err(MetricsError::NonNumericValue("acc".into()))
        );
    }

    #[test]
    fn metrics_report_rejects_empty_and_non_finite() {
        assert_eq!(
            parse_metrics_stdout("{}", MetricsMode::EntireStdout),
            Err(MetricsError::Empty)
        );
        let mut m = MetricMap::new();
        m.insert("loss".into(), f64::NAN);
        assert!(MetricsReport::new(m).is_err());
    }

    #[test]
    fn proposal_from_json() {
        let v: serde_json::Value = serde_json::from_str(
            r#"{"topic": "Sentiment Analysis", "metric": "Accuracy", "description": "Predict the sentiment (positive/negative) of movie reviews.", "dataset": "imdb"}"#,
        )
        .unwrap();
        let p = TaskProposal::from_json(&v).unwrap();
        assert_eq!(p.metric, "Accuracy");
        assert_eq!(p.dataset.as_deref(), Some("imdb"));
        let v = serde_json::json!({"topic": "t", "metric": "m", "description": "", "dataset": "x"});
        assert!(TaskProposal::from_json(&v).is_err());
    }
}
