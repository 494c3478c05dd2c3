use std::fs;
use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::{Deserialize, Serialize};

use super::action::{parse_response, AgentAction};
use crate::codegen::blocks::check_file_path;
use crate::codegen::GeneratedTask;
use crate::prompts;
use crate::provider::{ChatMessage, ChatProvider, CompletionRequest, SamplingParams};
use crate::schema::{parse_metrics_stdout, MetricMap, DATASET_DOCS_PLACEHOLDER};
use crate::verify::{build_eval_command, relativize, run_sandboxed, CommandLine, SandboxSettings};

pub const TRAJECTORY_SCHEMA_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EpisodeLimits {
    pub max_rounds: usize,
    pub max_format_errors: usize,
    /// The episode ends after this many submissions, if set.
    pub max_submissions: Option<usize>,
    pub observation_cap: usize,
    pub command_timeout_secs: u64,
}

impl Default for EpisodeLimits {
    fn default() -> Self {
        Self {
            max_rounds: 50,
            max_format_errors: 3,
            max_submissions: None,
            observation_cap: 10_000,
            command_timeout_secs: 600,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Turn {
    pub index: usize,
    pub rationale: String,
    pub action: AgentAction,
    /// The assistant message exactly as received.
    pub response: String,
    pub observation: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Submission {
    pub turn_index: usize,
    pub metrics: Option<MetricMap>,
    pub error: Option<String>,
}

impl Submission {
    pub fn succeeded(&self) -> bool {
        self.metrics.is_some()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum TerminalReason {
    SubmitLimit,
    RoundLimit,
    ProviderFailure,
    InfraFailure,
}

impl TerminalReason {
    /// Whether the episode ran to one of its limits rather than breaking.
    pub fn is_completed(self) -> bool {
        matches!(self, Self::SubmitLimit | Self::RoundLimit)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub schema_version: u32,
    pub task_id: String,
    pub episode_seed: u64,
    pub system_prompt: String,
    pub task_prompt: String,
    pub turns: Vec<Turn>,
    pub submissions: Vec<Submission>,
    pub terminal_reason: TerminalReason,
    pub format_errors: usize,
    /// Why the episode broke, for provider and infrastructure failures.
    pub failure: Option<String>,
}

impl Trajectory {
    pub fn has_successful_submission(&self) -> bool {
        self.submissions.iter().any(Submission::succeeded)
    }

    /// The chat transcript: system, task, then each response and its
    /// observation.
    pub fn messages(&self) -> Vec<ChatMessage> {
        let mut out = vec![
            ChatMessage::system(self.system_prompt.clone()),
            ChatMessage::user(self.task_prompt.clone()),
        ];
        for t in &self.turns {
            out.push(ChatMessage::assistant(t.response.clone()));
            out.push(ChatMessage::user(t.observation.clone()));
        }
        out
    }
}

/// Keeps the last `cap` characters, prefixed by a marker when cut.
pub fn cap_observation(text: &str, cap: usize) -> String {
    let total = text.chars().count();
    if total <= cap {
        return text.to_string();
    }
    let cut = total - cap;
    let tail: String = text.chars().skip(cut).collect();
    format!("[... {cut} characters truncated ...]\n{tail}")
}

/// Substitutes `{dataset_docs}` and unescapes doubled braces, following
/// Python `str.format` for this one field.
pub fn render_description(description: &str, dataset_docs: &str) -> String {
    let mut out = String::with_capacity(description.len() + dataset_docs.len());
    let mut rest = description;
    while !rest.is_empty() {
        if let Some(r) = rest.strip_prefix(DATASET_DOCS_PLACEHOLDER) {
            out.push_str(dataset_docs);
            rest = r;
        } else if let Some(r) = rest.strip_prefix("{{") {
            out.push('{');
            rest = r;
        } else if let Some(r) = rest.strip_prefix("}}") {
            out.push('}');
            rest = r;
        } else {
            let c = rest.chars().next().expect("non-empty");
            out.push(c);
            rest = &rest[c.len_utf8()..];
        }
    }
    out
}

pub fn task_prompt(task: &GeneratedTask) -> String {
    let cfg = &task.task_config;
    let docs = task
        .dataset_configs
        .iter()
        .map(|d| format!("Dataset `{}` ({}):\n{}", d.config.name, d.config.data_path, d.config.description.trim_end()))
        .collect::<Vec<_>>()
        .join("\n\n");
    let mut prompt = format!(
        "TASK: {}\n\n{}\n\nFiles in the workspace:\n",
        cfg.name,
        render_description(cfg.description.trim_end(), &docs)
    );
    for p in task.files.paths() {
        prompt.push_str(&format!("- {p}\n"));
    }
    if let Some(scores) = cfg.baseline_scores.first() {
        let json = serde_json::to_string(scores).expect("finite floats");
        prompt.push_str(&format!("\nBaseline scores: {json}\n"));
    }
    if cfg.evaluation_read_only {
        if let Some(eval) = cfg.evaluation_path() {
            prompt.push_str(&format!("\n`{eval}` is read-only.\n"));
        }
    }
    prompt
}

pub fn system_prompt(python: &str, limits: &EpisodeLimits) -> String {
    prompts::AGENT_SYSTEM
        .trim_end()
        .replace("{{python}}", python)
        .replace("{{max_rounds}}", &limits.max_rounds.to_string())
        .replace("{{command_timeout}}", &limits.command_timeout_secs.to_string())
}

fn read_numbered(path: &Path) -> Result<String, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("cannot read file: {e}"))?;
    if text.is_empty() {
        return Ok("(empty file)".into());
    }
    Ok(text
        .lines()
        .enumerate()
        .map(|(i, l)| format!("{}: {l}", i + 1))
        .collect::<Vec<_>>()
        .join("\n"))
}

/// Applies a line-range edit, returning the file's new text.
pub fn apply_edit(original: &str, start: usize, end: usize, replacement: &str) -> Result<String, String> {
    let mut lines: Vec<&str> = original.lines().collect();
    let n = lines.len();
    if start == 0 || start > n + 1 || end + 1 < start || end > n {
        return Err(format!("line range {start}:{end} is outside the file ({n} lines)"));
    }
    lines.splice(start - 1..end, replacement.lines());
    let mut text = lines.join("\n");
    if !text.is_empty() {
        text.push('\n');
    }
    Ok(text)
}

/// Why an action could not be carried out by the harness itself.
struct InfraError(String);

pub struct EpisodeEnv<'a> {
    pub workspace: PathBuf,
    pub sandbox: &'a SandboxSettings,
    pub limits: &'a EpisodeLimits,
}

impl EpisodeEnv<'_> {
    fn resolve(&self, path: &str) -> Result<PathBuf, String> {
        check_file_path(path).map_err(|e| e.to_string())?;
        Ok(self.workspace.join(path))
    }

    fn timeout(&self) -> Duration {
        Duration::from_secs(self.limits.command_timeout_secs.max(1))
    }

    fn run_shell(&self, command: &str) -> Result<String, InfraError> {
        let cmd = CommandLine::new("sh", ["-c", command]);
        let r = run_sandboxed(&cmd, &self.workspace, self.timeout(), &self.sandbox.env)
            .map_err(|e| InfraError(e.to_string()))?;
        let mut out = r.stdout;
        out.push_str(&r.stderr);
        if out.trim().is_empty() {
            out = "(no output)".into();
        }
        if r.timed_out {
            out.push_str(&format!("\n(command timed out after {} seconds)", self.limits.command_timeout_secs));
        } else if r.exit_code != 0 {
            out.push_str(&format!("\n(exit code {})", r.exit_code));
        }
        Ok(relativize(&out, &self.workspace))
    }

    fn submit(&self, task: &GeneratedTask, original_eval: Option<&str>) -> Result<(String, Submission), InfraError> {
        let (obs, mut sub) = self.submit_raw(task, original_eval)?;
        sub.error = sub.error.map(|e| relativize(&e, &self.workspace));
        Ok((relativize(&obs, &self.workspace), sub))
    }

    fn submit_raw(&self, task: &GeneratedTask, original_eval: Option<&str>) -> Result<(String, Submission), InfraError> {
        let cfg = &task.task_config;
        let eval = cfg.evaluation_path().unwrap_or_default();
        if let Some(content) = original_eval {
            fs::write(self.workspace.join(eval), content).map_err(|e| InfraError(e.to_string()))?;
        }
        let exec = &self.sandbox.exec;
        let failed = |error: String| Submission {
            turn_index: 0,
            metrics: None,
            error: Some(error),
        };
        let cmd = match build_eval_command(cfg.task_entrypoint, eval, &self.workspace, exec.gpu_count, exec) {
            Ok(cmd) => cmd,
            Err(e) => {
                let msg = e.to_string();
                return Ok((format!("Submission failed: {msg}"), failed(msg)));
            }
        };
        let timeout = Duration::from_secs(self.sandbox.eval_timeout_secs.max(1));
        let r = run_sandboxed(&cmd, &self.workspace, timeout, &self.sandbox.env)
            .map_err(|e| InfraError(e.to_string()))?;
        if !r.success() {
            let msg = crate::verify::error_summary(&cmd, &r, timeout);
            return Ok((format!("Submission failed.\n{msg}"), failed(msg)));
        }
        Ok(match parse_metrics_stdout(&r.stdout, cfg.task_entrypoint.metrics_mode()) {
            Ok(m) => {
                let json = serde_json::to_string(m.metrics()).expect("finite floats");
                let sub = Submission {
                    turn_index: 0,
                    metrics: Some(m.into_inner()),
                    error: None,
                };
                (format!("Submission evaluated: {json}"), sub)
            }
            Err(e) => {
                let msg = format!("evaluation output is not valid metrics JSON: {e}\n{}", r.stdout);
                (format!("Submission failed: {msg}"), failed(msg))
            }
        })
    }
}

/// One episode in `env.workspace`, which must already hold the task files.
pub fn run_episode_in(
    provider: &dyn ChatProvider,
    task: &GeneratedTask,
    seed: u64,
    env: &EpisodeEnv<'_>,
    params: SamplingParams,
) -> Trajectory {
    let limits = env.limits;
    let cfg = &task.task_config;
    let mut traj = Trajectory {
        schema_version: TRAJECTORY_SCHEMA_VERSION,
        task_id: cfg.id.clone(),
        episode_seed: seed,
        system_prompt: system_prompt(&env.sandbox.exec.python, limits),
        task_prompt: task_prompt(task),
        turns: Vec::new(),
        submissions: Vec::new(),
        terminal_reason: TerminalReason::RoundLimit,
        format_errors: 0,
        failure: None,
    };
    let read_only = cfg
        .evaluation_path()
        .filter(|_| cfg.evaluation_read_only)
        .map(str::to_string);
    let original_eval = read_only
        .as_deref()
        .and_then(|p| task.files.get(p))
        .map(|f| f.content.clone());
    let mut messages = vec![
        ChatMessage::system(traj.system_prompt.clone()),
        ChatMessage::user(traj.task_prompt.clone()),
    ];
    let scope = format!("collect/{}/{seed}", cfg.id);
    let params = SamplingParams {
        seed: Some(seed),
        ..params
    };
    while traj.turns.len() < limits.max_rounds {
        let request = CompletionRequest::new(scope.clone(), messages.clone()).with_params(params);
        let reply = match provider.complete(&request) {
            Ok(r) => r,
            Err(e) => {
                traj.terminal_reason = TerminalReason::ProviderFailure;
                traj.failure = Some(e.to_string());
                return traj;
            }
        };
        messages.push(ChatMessage::assistant(reply.content.clone()));
        let parsed = match parse_response(&reply.content) {
            Ok(p) => p,
            Err(e) => {
                traj.format_errors += 1;
                if traj.format_errors >= limits.max_format_errors {
                    traj.terminal_reason = TerminalReason::ProviderFailure;
                    traj.failure = Some(format!("too many malformed responses; last: {e}"));
                    return traj;
                }
                messages.push(ChatMessage::user(format!(
                    "Your response could not be parsed: {e}. Reply with a DISCUSSION and exactly one ```action block."
                )));
                continue;
            }
        };
        let index = traj.turns.len();
        let outcome = match &parsed.action {
            AgentAction::ReadFile { path } => Ok(env
                .resolve(path)
                .and_then(|p| read_numbered(&p))
                .unwrap_or_else(|e| format!("Error: {e}"))),
            AgentAction::EditFile {
                path,
                start,
                end,
                replacement,
            } => Ok(if read_only.as_deref() == Some(path) {
                format!("Error: `{path}` is read-only.")
            } else {
                env.resolve(path)
                    .and_then(|p| {
                        let old = if p.exists() {
                            fs::read_to_string(&p).map_err(|e| e.to_string())?
                        } else {
                            String::new()
                        };
                        let new = apply_edit(&old, *start, *end, replacement)?;
                        if let Some(parent) = p.parent() {
                            fs::create_dir_all(parent).map_err(|e| e.to_string())?;
                        }
                        fs::write(&p, &new).map_err(|e| e.to_string())?;
                        let added = replacement.lines().count();
                        Ok(format!(
                            "Edited {path}: replaced lines {start}-{end} with {added} line(s). The file now has {} lines.",
                            new.lines().count()
                        ))
                    })
                    .unwrap_or_else(|e| format!("Error: {e}"))
            }),
            AgentAction::RunCommand { command } => env.run_shell(command),
            AgentAction::Submit => env.submit(task, original_eval.as_deref()).map(|(obs, mut sub)| {
                sub.turn_index = index;
                traj.submissions.push(sub);
                obs
            }),
        };
        let observation = match outcome {
            Ok(o) => cap_observation(&o, limits.observation_cap),
            Err(InfraError(e)) => {
                traj.terminal_reason = TerminalReason::InfraFailure;
                traj.failure = Some(e);
                return traj;
            }
        };
        messages.push(ChatMessage::user(observation.clone()));
        traj.turns.push(Turn {
            index,
            rationale: parsed.rationale,
            action: parsed.action,
            response: reply.content,
            observation,
        });
        if limits
            .max_submissions
            .is_some_and(|m| traj.submissions.len() >= m)
        {
            traj.terminal_reason = TerminalReason::SubmitLimit;
            return traj;
        }
    }
    traj
}
