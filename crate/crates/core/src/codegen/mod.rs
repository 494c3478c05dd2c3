//! Config generation (stage 1) and starter-code generation (stage 2).

pub mod blocks;
pub mod fewshot;

use std::collections::BTreeSet;
use std::fs;
use std::io;
use std::path::Path;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

pub use blocks::{extract_file_blocks, write_file_blocks, BlockError, FileBlock, FileSet};

use crate::prompts::{self, FewShot};
use crate::provider::{ChatMessage, ChatProvider, CompletionRequest, ProviderError, SamplingParams};
use crate::schema::{
    parse_dataset_config_with, parse_task_config, serialize_dataset_config, serialize_task_config,
    DatasetConfig, PlaceholderBlacklist, TaskConfig,
};
use crate::synth::{topic_slug, EnrichedProposal};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Configs,
    Code,
}

#[derive(Debug, Error)]
pub enum CodegenError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("{stage:?} stage output invalid: {message}")]
    StageOutputInvalid { stage: Stage, message: String },
    #[error(transparent)]
    Provider(#[from] ProviderError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetFile {
    pub path: String,
    pub config: DatasetConfig,
}

/// Stage-1 result.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfigBundle {
    pub task_config: TaskConfig,
    pub dataset_configs: Vec<DatasetFile>,
}

impl ConfigBundle {
    /// The configs as file blocks, the form the stage-2 prompt embeds.
    pub fn to_markdown(&self) -> String {
        let mut set = FileSet::new();
        let mut push = |path: &str, text: String| {
            set.push(FileBlock::new("yaml", path, text.trim_end()))
                .expect("bundle paths are validated");
        };
        push(&self.task_config.file_path(), serialize_task_config(&self.task_config));
        for d in &self.dataset_configs {
            push(&d.path, serialize_dataset_config(&d.config));
        }
        write_file_blocks(&set).trim_end().to_string()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedTask {
    pub task_config: TaskConfig,
    pub dataset_configs: Vec<DatasetFile>,
    /// Code files plus the requirements manifest when there is one.
    pub files: FileSet,
}

impl GeneratedTask {
    pub fn configs(&self) -> ConfigBundle {
        ConfigBundle {
            task_config: self.task_config.clone(),
            dataset_configs: self.dataset_configs.clone(),
        }
    }

    pub fn validate(&self) -> Result<(), String> {
        let cfg = &self.task_config;
        cfg.validate_complete().map_err(|e| e.to_string())?;
        for (kind, path) in [
            ("baseline", cfg.baseline_path()),
            ("evaluation", cfg.evaluation_path()),
        ] {
            let path = path.unwrap_or_default();
            if !self.files.contains(path) {
                return Err(format!("{kind} file `{path}` is not among the generated files"));
            }
        }
        let listed: BTreeSet<&str> = cfg.starter_code.iter().map(String::as_str).collect();
        let code: BTreeSet<&str> = self.code_paths().collect();
        if listed != code {
            return Err("starter_code does not list exactly the generated code files".into());
        }
        match (&cfg.requirements_path, cfg.use_generic_conda) {
            (Some(req), false) if !self.files.contains(req) => {
                Err(format!("requirements_path `{req}` is not among the generated files"))
            }
            _ => Ok(()),
        }
    }

    /// Generated files other than the requirements manifest.
    pub fn code_paths(&self) -> impl Iterator<Item = &str> {
        let req = self.task_config.requirements_path.as_deref();
        self.files.paths().filter(move |p| Some(*p) != req)
    }

    /// Writes configs and files under `root`.
    pub fn materialize(&self, root: &Path) -> io::Result<()> {
        write_file(root, &self.task_config.file_path(), &serialize_task_config(&self.task_config))?;
        for d in &self.dataset_configs {
            write_file(root, &d.path, &serialize_dataset_config(&d.config))?;
        }
        self.write_code(root)
    }

    /// Writes only `files`, the layout an execution workspace starts from.
    pub fn write_code(&self, root: &Path) -> io::Result<()> {
        for f in &self.files {
            write_file(root, &f.path, &f.content)?;
        }
        Ok(())
    }

    /// Reads back what `materialize` wrote.
    pub fn load(root: &Path, task_id: &str) -> io::Result<Self> {
        let invalid = |e: String| io::Error::new(io::ErrorKind::InvalidData, e);
        let task_config = parse_task_config(&fs::read_to_string(
            root.join("tasks").join(format!("{task_id}.yaml")),
        )?)
        .map_err(|e| invalid(e.to_string()))?;
        let mut dataset_configs = Vec::new();
        for path in &task_config.dataset_configs {
            let text = fs::read_to_string(root.join(path))?;
            let config = parse_dataset_config_with(&text, &PlaceholderBlacklist::default())
                .map_err(|e| invalid(e.to_string()))?;
            dataset_configs.push(DatasetFile {
                path: path.clone(),
                config,
            });
        }
        let mut files = FileSet::new();
        for path in task_config.starter_code.iter().chain(&task_config.requirements_path) {
            let content = fs::read_to_string(root.join(path))?;
            files
                .push(FileBlock::new(blocks::language_for(path), path, content))
                .map_err(|e| invalid(e.to_string()))?;
        }
        Ok(Self {
            task_config,
            dataset_configs,
            files,
        })
    }
}

fn write_file(root: &Path, rel: &str, content: &str) -> io::Result<()> {
    blocks::check_file_path(rel)
        .map_err(|e| io::Error::new(io::ErrorKind::InvalidInput, e.to_string()))?;
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let mut text = content.to_string();
    if !text.is_empty() && !text.ends_with('\n') {
        text.push('\n');
    }
    fs::write(path, text)
}

/// A stage conversation kept so later repairs continue in context.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Conversation {
    pub scope: String,
    pub messages: Vec<ChatMessage>,
}

impl Conversation {
    pub fn last_reply(&self) -> Option<&ChatMessage> {
        self.messages.last()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodegenSettings {
    /// Same-conversation retries per stage before giving up.
    pub stage_retries: usize,
    pub params: SamplingParams,
    /// Extra `data_path` values rejected as placeholders.
    pub extra_placeholders: Vec<String>,
}

impl Default for CodegenSettings {
    fn default() -> Self {
        Self {
            stage_retries: 2,
            params: SamplingParams::default(),
            extra_placeholders: Vec::new(),
        }
    }
}

/// The stage-1 input JSON; `dataset` is omitted for dataset-free tasks.
pub fn stage1_input(enriched: &EnrichedProposal) -> Result<String, CodegenError> {
    let proposal = enriched
        .proposal
        .as_ref()
        .filter(|_| !enriched.is_discarded())
        .ok_or_else(|| CodegenError::InvalidArgument("proposal was discarded".into()))?;
    let mut input = json!({
        "topic": proposal.topic,
        "metric": proposal.metric,
        "description": proposal.description,
    });
    if let Some(sample) = &enriched.resolved_dataset {
        input["dataset"] = json!({
            "id": sample.id,
            "features": sample.features.iter()
                .map(|f| json!({"name": f.name, "dtype": f.dtype}))
                .collect::<Vec<Value>>(),
            "examples": sample.example_rows,
        });
    } else if proposal.dataset.is_some() {
        return Err(CodegenError::InvalidArgument(
            "proposal names a dataset that was never resolved".into(),
        ));
    }
    Ok(format!(
        "```json\n# input.json\n{}\n```",
        serde_json::to_string_pretty(&input).expect("json")
    ))
}

fn is_yaml_under(path: &str, dir: &str) -> bool {
    path.starts_with(dir) && (path.ends_with(".yaml") || path.ends_with(".yml"))
}

fn parse_files(text: &str) -> Result<FileSet, String> {
    extract_file_blocks(text).map_err(|e| e.to_string())
}

fn parse_datasets(
    files: &FileSet,
    listed: &[String],
    blacklist: &PlaceholderBlacklist,
    expected_id: Option<&str>,
) -> Result<Vec<DatasetFile>, String> {
    let emitted: BTreeSet<&str> = files.paths().filter(|p| is_yaml_under(p, "datasets/")).collect();
    let wanted: BTreeSet<&str> = listed.iter().map(String::as_str).collect();
    if emitted != wanted {
        return Err(format!(
            "dataset_configs lists {wanted:?} but the dataset config files are {emitted:?}"
        ));
    }
    let mut out = Vec::new();
    for path in listed {
        let text = &files.get(path).expect("checked above").content;
        let config = parse_dataset_config_with(text, blacklist).map_err(|e| format!("{path}: {e}"))?;
        match expected_id {
            None => return Err("this task has no dataset, so dataset_configs must be empty".into()),
            Some(id) if config.data_path != id => {
                return Err(format!(
                    "{path}: data_path must be exactly \"{id}\", got \"{}\"",
                    config.data_path
                ))
            }
            Some(_) => {}
        }
        out.push(DatasetFile {
            path: path.clone(),
            config,
        });
    }
    Ok(out)
}

fn single_task_config(files: &FileSet) -> Result<Option<TaskConfig>, String> {
    let paths: Vec<&str> = files.paths().filter(|p| is_yaml_under(p, "tasks/")).collect();
    match paths.as_slice() {
        [] => Ok(None),
        [path] => {
            let cfg = parse_task_config(&files.get(path).expect("listed").content)
                .map_err(|e| format!("{path}: {e}"))?;
            cfg.check_file_stem(Path::new(path)).map_err(|e| e.to_string())?;
            Ok(Some(cfg))
        }
        _ => Err("Only one task config file.".into()),
    }
}

/// Validates a stage-1 reply against the proposal it was generated for.
pub fn parse_stage1(
    text: &str,
    resolved_id: Option<&str>,
    blacklist: &PlaceholderBlacklist,
) -> Result<ConfigBundle, String> {
    let files = parse_files(text)?;
    let cfg = single_task_config(&files)?
        .ok_or("Exactly one task config file under tasks/ is required.")?;
    for other in files
        .paths()
        .filter(|p| !is_yaml_under(p, "tasks/") && !is_yaml_under(p, "datasets/"))
    {
        tracing::warn!(path = other, "ignoring non-config file in stage-1 output");
    }
    let dataset_configs = parse_datasets(&files, &cfg.dataset_configs, blacklist, resolved_id)?;
    Ok(ConfigBundle {
        task_config: fewshot::stage1_form(&cfg),
        dataset_configs,
    })
}

/// Validates a stage-2 reply. A revised task config replaces the stage-1
/// one; revised dataset configs replace theirs.
pub fn parse_stage2(
    text: &str,
    configs: &ConfigBundle,
    blacklist: &PlaceholderBlacklist,
) -> Result<GeneratedTask, String> {
    let files = parse_files(text)?;
    let mut cfg = single_task_config(&files)?.unwrap_or_else(|| configs.task_config.clone());
    if cfg.id != configs.task_config.id {
        return Err(format!("the task id must stay `{}`", configs.task_config.id));
    }
    let listed: BTreeSet<&str> = cfg.dataset_configs.iter().map(String::as_str).collect();
    let before: BTreeSet<&str> = configs.dataset_configs.iter().map(|d| d.path.as_str()).collect();
    if listed != before {
        return Err(format!("dataset_configs must stay {before:?}"));
    }
    let mut dataset_configs = Vec::new();
    for d in &configs.dataset_configs {
        let config = match files.get(&d.path) {
            None => d.config.clone(),
            Some(f) => {
                let revised = parse_dataset_config_with(&f.content, blacklist)
                    .map_err(|e| format!("{}: {e}", d.path))?;
                if revised.data_path != d.config.data_path {
                    return Err(format!(
                        "{}: data_path must stay \"{}\"",
                        d.path, d.config.data_path
                    ));
                }
                revised
            }
        };
        dataset_configs.push(DatasetFile {
            path: d.path.clone(),
            config,
        });
    }
    if let Some(extra) = files
        .paths()
        .find(|p| is_yaml_under(p, "datasets/") && !before.contains(p))
    {
        return Err(format!("`{extra}` is not one of the task's dataset configs"));
    }
    let mut available = FileSet::new();
    for f in &files {
        if !is_yaml_under(&f.path, "tasks/") && !is_yaml_under(&f.path, "datasets/") {
            available.push(f.clone()).map_err(|e| e.to_string())?;
        }
    }
    let has_requirements = available
        .paths()
        .any(|p| p.rsplit('/').next() == Some("requirements.txt"));
    if cfg.use_generic_conda && has_requirements {
        return Err(
            "requirements.txt was provided but use_generic_conda is true; set use_generic_conda to false and requirements_path to the file"
                .into(),
        );
    }
    cfg.baseline_scores.clear();
    let req = cfg.requirements_path.clone();
    cfg.starter_code = available
        .paths()
        .filter(|p| Some(*p) != req.as_deref())
        .map(str::to_string)
        .collect();
    let task = GeneratedTask {
        task_config: cfg,
        dataset_configs,
        files: available,
    };
    task.validate()?;
    Ok(task)
}

pub struct Codegen<'a, P: ?Sized> {
    provider: &'a P,
    settings: CodegenSettings,
    blacklist: PlaceholderBlacklist,
    stage1_examples: [FewShot; 2],
    stage2_examples: [FewShot; 2],
}

impl<'a, P: ChatProvider + ?Sized> Codegen<'a, P> {
    pub fn new(provider: &'a P, settings: CodegenSettings) -> Self {
        let blacklist = PlaceholderBlacklist::default().with_extra(settings.extra_placeholders.clone());
        Self {
            provider,
            settings,
            blacklist,
            stage1_examples: fewshot::stage1_examples(),
            stage2_examples: fewshot::stage2_examples(),
        }
    }

    fn call(&self, conv: &mut Conversation) -> Result<ChatMessage, CodegenError> {
        let request = CompletionRequest::new(conv.scope.clone(), conv.messages.clone())
            .with_params(self.settings.params);
        let reply = self.provider.complete(&request)?;
        conv.messages.push(reply.clone());
        Ok(reply)
    }

    /// Appends the error-recovery prompt and returns the model's new reply.
    pub fn retry_stage(
        &self,
        conv: &mut Conversation,
        error_text: &str,
    ) -> Result<ChatMessage, CodegenError> {
        if error_text.trim().is_empty() {
            return Err(CodegenError::InvalidArgument("error text is empty".into()));
        }
        conv.messages.push(ChatMessage::user(prompts::error_recovery(error_text)));
        self.call(conv)
    }

    fn settle<T>(
        &self,
        stage: Stage,
        conv: &mut Conversation,
        mut reply: ChatMessage,
        parse: impl Fn(&str) -> Result<T, String>,
    ) -> Result<T, CodegenError> {
        let mut retries = 0;
        loop {
            match parse(&reply.content) {
                Ok(v) => return Ok(v),
                Err(message) if retries >= self.settings.stage_retries => {
                    return Err(CodegenError::StageOutputInvalid { stage, message })
                }
                Err(message) => {
                    tracing::debug!(?stage, %message, "stage output rejected; retrying");
                    retries += 1;
                    reply = self.retry_stage(conv, &message)?;
                }
            }
        }
    }

    pub fn generate_configs(&self, enriched: &EnrichedProposal) -> Result<ConfigBundle, CodegenError> {
        let input = stage1_input(enriched)?;
        let mut conv = Conversation {
            scope: format!("codegen/{}/configs", topic_slug(&enriched.original_topic)),
            messages: vec![ChatMessage::user(prompts::codegen_stage1(&self.stage1_examples, &input))],
        };
        let reply = self.call(&mut conv)?;
        let resolved = enriched.resolved_dataset.as_ref().map(|d| d.id.as_str());
        self.settle(Stage::Configs, &mut conv, reply, |t| {
            parse_stage1(t, resolved, &self.blacklist)
        })
    }

    /// Fresh stage-2 conversation.
    pub fn generate_starter_code(
        &self,
        configs: &ConfigBundle,
    ) -> Result<(GeneratedTask, Conversation), CodegenError> {
        self.generate_starter_code_in(configs, format!("codegen/{}/code", configs.task_config.id))
    }

    /// [`Self::generate_starter_code`] under another scope; restarts use this.
    pub fn generate_starter_code_in(
        &self,
        configs: &ConfigBundle,
        scope: String,
    ) -> Result<(GeneratedTask, Conversation), CodegenError> {
        let mut conv = Conversation {
            scope,
            messages: vec![ChatMessage::user(prompts::codegen_stage2(
                &self.stage2_examples,
                &configs.to_markdown(),
            ))],
        };
        let reply = self.call(&mut conv)?;
        let task = self.settle(Stage::Code, &mut conv, reply, |t| {
            parse_stage2(t, configs, &self.blacklist)
        })?;
        Ok((task, conv))
    }

    /// Feeds an execution error back into an existing stage-2 conversation.
    pub fn revise_starter_code(
        &self,
        conv: &mut Conversation,
        configs: &ConfigBundle,
        error_text: &str,
    ) -> Result<GeneratedTask, CodegenError> {
        let reply = self.retry_stage(conv, error_text)?;
        self.settle(Stage::Code, conv, reply, |t| parse_stage2(t, configs, &self.blacklist))
    }
}
