//! Running generated tasks and the self-debug loop that repairs them.

pub mod command;
pub mod sandbox;

use std::fs;
use std::path::PathBuf;
use std::time::Duration;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub use command::{build_baseline_command, build_eval_command, first_yaml, CommandLine, ExecConfig};
pub use sandbox::{relativize, run_sandboxed, EnvironmentSpec, ExecutionResult, SandboxError};

use crate::codegen::{Codegen, CodegenError, ConfigBundle, Conversation, GeneratedTask};
use crate::provider::ChatProvider;
use crate::schema::{parse_metrics_stdout, MetricsReport};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct DebugPolicy {
    pub p_debug: f64,
    pub k_max: usize,
    pub rng_seed: u64,
}

impl Default for DebugPolicy {
    fn default() -> Self {
        Self {
            p_debug: 0.8,
            k_max: 4,
            rng_seed: 0,
        }
    }
}

impl DebugPolicy {
    pub fn validate(&self) -> Result<(), String> {
        if !(0.0..=1.0).contains(&self.p_debug) {
            return Err(format!("p_debug must be in [0, 1], got {}", self.p_debug));
        }
        if self.k_max == 0 {
            return Err("k_max must be at least 1".into());
        }
        Ok(())
    }

    /// Independent stream per task so concurrent verification stays
    /// reproducible.
    pub fn rng_for(&self, task_id: &str) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.rng_seed.to_le_bytes());
        h.update(task_id.as_bytes());
        let digest: [u8; 32] = h.finalize().into();
        ChaCha8Rng::from_seed(digest)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RepairAction {
    Feedback,
    Restart,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Attempt {
    pub action: RepairAction,
    pub error_summary: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VerificationStatus {
    Validated,
    Discarded,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VerificationOutcome {
    pub status: VerificationStatus,
    pub baseline_scores: Option<MetricsReport>,
    pub attempts: Vec<Attempt>,
    pub iterations_used: usize,
    /// The final task, with `baseline_scores` written back when validated.
    pub task: Option<GeneratedTask>,
    /// Set when discarded before the iteration budget ran out.
    pub fatal_error: Option<String>,
}

/// A failed run of a task; `fatal` failures end verification at once.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RunFailure {
    pub summary: String,
    pub fatal: bool,
}

impl RunFailure {
    pub fn new(summary: impl Into<String>) -> Self {
        Self {
            summary: summary.into(),
            fatal: false,
        }
    }

    pub fn fatal(summary: impl Into<String>) -> Self {
        Self {
            summary: summary.into(),
            fatal: true,
        }
    }
}

/// Runs baseline then evaluation for one candidate.
pub trait TaskExecutor: Send + Sync {
    fn execute(&self, task: &GeneratedTask) -> Result<MetricsReport, RunFailure>;
}

/// Produces replacement code after a failure.
pub trait CodeSource {
    fn feedback(&mut self, error_text: &str) -> Result<GeneratedTask, RunFailure>;
    fn restart(&mut self) -> Result<GeneratedTask, RunFailure>;
}

/// The loop: run; on success validate; otherwise repair by feedback with
/// probability `p_debug` or by restart, for at most `k_max` runs.
pub fn verify_task(
    task: GeneratedTask,
    source: &mut dyn CodeSource,
    executor: &dyn TaskExecutor,
    policy: &DebugPolicy,
) -> VerificationOutcome {
    let mut rng = policy.rng_for(&task.task_config.id);
    let mut attempts = Vec::new();
    let mut candidate = Ok(task);
    let discard = |attempts, iterations_used, task, fatal_error| VerificationOutcome {
        status: VerificationStatus::Discarded,
        baseline_scores: None,
        attempts,
        iterations_used,
        task,
        fatal_error,
    };
    let mut last_task = None;
    for iteration in 1..=policy.k_max.max(1) {
        let failure = match candidate {
            Ok(mut task) => match executor.execute(&task) {
                Ok(scores) => {
                    task.task_config.baseline_scores = vec![scores.metrics().clone()];
                    return VerificationOutcome {
                        status: VerificationStatus::Validated,
                        baseline_scores: Some(scores),
                        attempts,
                        iterations_used: iteration,
                        task: Some(task),
                        fatal_error: None,
                    };
                }
                Err(f) => {
                    last_task = Some(task);
                    f
                }
            },
            Err(f) => f,
        };
        if failure.fatal {
            return discard(attempts, iteration, last_task, Some(failure.summary));
        }
        if iteration == policy.k_max {
            break;
        }
        let u: f64 = rng.random();
        let action = if u < policy.p_debug {
            RepairAction::Feedback
        } else {
            RepairAction::Restart
        };
        candidate = match action {
            RepairAction::Feedback => source.feedback(&failure.summary),
            RepairAction::Restart => source.restart(),
        };
        attempts.push(Attempt {
            action,
            error_summary: failure.summary,
        });
        if let Err(f) = &candidate {
            if f.fatal {
                return discard(attempts, iteration, last_task, Some(f.summary.clone()));
            }
        }
    }
    discard(attempts, policy.k_max, last_task, None)
}

/// Repairs through the codegen stage-2 conversation. Repair calls go out
/// under `verify/<task_id>/code`, so each provider scope belongs to a
/// single stage.
pub struct CodegenSource<'a, P: ?Sized> {
    codegen: &'a Codegen<'a, P>,
    configs: ConfigBundle,
    conversation: Conversation,
}

pub fn repair_scope(task_id: &str) -> String {
    format!("verify/{task_id}/code")
}

impl<'a, P: ChatProvider + ?Sized> CodegenSource<'a, P> {
    pub fn new(codegen: &'a Codegen<'a, P>, configs: ConfigBundle, mut conversation: Conversation) -> Self {
        conversation.scope = repair_scope(&configs.task_config.id);
        Self {
            codegen,
            configs,
            conversation,
        }
    }
}

fn codegen_failure(e: CodegenError) -> RunFailure {
    match e {
        CodegenError::StageOutputInvalid { message, .. } => RunFailure::new(message),
        other => RunFailure::fatal(other.to_string()),
    }
}

impl<P: ChatProvider + ?Sized> CodeSource for CodegenSource<'_, P> {
    fn feedback(&mut self, error_text: &str) -> Result<GeneratedTask, RunFailure> {
        self.codegen
            .revise_starter_code(&mut self.conversation, &self.configs, error_text)
            .map_err(codegen_failure)
    }

    fn restart(&mut self) -> Result<GeneratedTask, RunFailure> {
        let (task, conv) = self
            .codegen
            .generate_starter_code_in(&self.configs, repair_scope(&self.configs.task_config.id))
            .map_err(codegen_failure)?;
        self.conversation = conv;
        Ok(task)
    }
}

fn last_lines(text: &str, n: usize) -> String {
    let lines: Vec<&str> = text.lines().collect();
    lines[lines.len().saturating_sub(n)..].join("\n")
}

/// The text fed back to the generator for a failed command.
pub fn error_summary(cmd: &CommandLine, result: &ExecutionResult, timeout: Duration) -> String {
    let status = if result.timed_out {
        format!("Timed out after {} seconds.", timeout.as_secs())
    } else {
        format!("Exit code: {}", result.exit_code)
    };
    format!(
        "Command: {cmd}\n{status}\n--- stderr (last 200 lines) ---\n{}\n--- stdout (last 50 lines) ---\n{}",
        last_lines(&result.stderr, 200),
        last_lines(&result.stdout, 50)
    )
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SandboxSettings {
    pub exec: ExecConfig,
    pub env: EnvironmentSpec,
    /// Caps `training_timeout` for the baseline run.
    pub max_baseline_secs: Option<u64>,
    pub eval_timeout_secs: u64,
}

impl Default for SandboxSettings {
    fn default() -> Self {
        Self {
            exec: ExecConfig::default(),
            env: EnvironmentSpec::default(),
            max_baseline_secs: None,
            eval_timeout_secs: 1800,
        }
    }
}

/// Executes candidates in a fresh directory holding only the task's files.
pub struct SandboxExecutor {
    root: PathBuf,
    settings: SandboxSettings,
}

impl SandboxExecutor {
    pub fn new(root: impl Into<PathBuf>, settings: SandboxSettings) -> Self {
        let root = root.into();
        Self {
            root: std::path::absolute(&root).unwrap_or(root),
            settings,
        }
    }

    fn run(&self, cmd: &CommandLine, ws: &std::path::Path, timeout: Duration) -> Result<(), RunFailure> {
        let result = run_sandboxed(cmd, ws, timeout, &self.settings.env)
            .map_err(|e| RunFailure::fatal(e.to_string()))?;
        if result.success() {
            Ok(())
        } else {
            Err(RunFailure::new(error_summary(cmd, &result, timeout)))
        }
    }
}

impl TaskExecutor for SandboxExecutor {
    fn execute(&self, task: &GeneratedTask) -> Result<MetricsReport, RunFailure> {
        let cfg = &task.task_config;
        let ws = self.root.join(&cfg.id);
        let setup = |e: std::io::Error| RunFailure::fatal(format!("workspace setup: {e}"));
        if ws.exists() {
            fs::remove_dir_all(&ws).map_err(setup)?;
        }
        fs::create_dir_all(&ws).map_err(setup)?;
        task.write_code(&ws).map_err(setup)?;
        self.execute_in(task, &ws).map_err(|f| RunFailure {
            summary: relativize(&f.summary, &ws),
            fatal: f.fatal,
        })
    }
}

impl SandboxExecutor {
    fn execute_in(&self, task: &GeneratedTask, ws: &std::path::Path) -> Result<MetricsReport, RunFailure> {
        let cfg = &task.task_config;
        let s = &self.settings;
        let baseline = cfg.baseline_path().ok_or_else(|| RunFailure::new("no baseline path"))?;
        let eval = cfg.evaluation_path().ok_or_else(|| RunFailure::new("no evaluation path"))?;
        let baseline_secs = s.max_baseline_secs.map_or(cfg.training_timeout, |m| m.min(cfg.training_timeout));
        let cmd = build_baseline_command(cfg.task_entrypoint, baseline, s.exec.gpu_count, &s.exec);
        self.run(&cmd, ws, Duration::from_secs(baseline_secs.max(1)))?;

        let cmd = build_eval_command(cfg.task_entrypoint, eval, ws, s.exec.gpu_count, &s.exec)
            .map_err(|e| RunFailure::new(format!("The baseline ran but left no submission artifact: {}", e.0)))?;
        let timeout = Duration::from_secs(s.eval_timeout_secs.max(1));
        let result = run_sandboxed(&cmd, ws, timeout, &s.env).map_err(|e| RunFailure::fatal(e.to_string()))?;
        if !result.success() {
            return Err(RunFailure::new(error_summary(&cmd, &result, timeout)));
        }
        parse_metrics_stdout(&result.stdout, cfg.task_entrypoint.metrics_mode()).map_err(|e| {
            RunFailure::new(format!(
                "The evaluation output is not a valid metrics JSON ({e}).\n{}",
                error_summary(&cmd, &result, timeout)
            ))
        })
    }
}
