use std::collections::BTreeMap;
use std::fs;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::episode::{run_episode_in, EpisodeEnv, EpisodeLimits, TerminalReason, Trajectory};
use crate::codegen::GeneratedTask;
use crate::provider::{ChatProvider, SamplingParams};
use crate::verify::SandboxSettings;

/// Runs one episode of a task for a seed.
pub trait EpisodeRunner: Send + Sync {
    fn run(&self, task: &GeneratedTask, seed: u64) -> Trajectory;
}

/// Episodes against a provider, each in its own fresh workspace.
pub struct SandboxEpisodeRunner<'a> {
    provider: &'a dyn ChatProvider,
    root: PathBuf,
    sandbox: SandboxSettings,
    limits: EpisodeLimits,
    params: SamplingParams,
    keep_workspaces: bool,
}

impl<'a> SandboxEpisodeRunner<'a> {
    pub fn new(
        provider: &'a dyn ChatProvider,
        root: impl Into<PathBuf>,
        sandbox: SandboxSettings,
        limits: EpisodeLimits,
    ) -> Self {
        let root = root.into();
        Self {
            provider,
            root: std::path::absolute(&root).unwrap_or(root),
            sandbox,
            limits,
            params: SamplingParams::default(),
            keep_workspaces: false,
        }
    }

    pub fn with_params(mut self, params: SamplingParams) -> Self {
        self.params = params;
        self
    }

    pub fn keep_workspaces(mut self, keep: bool) -> Self {
        self.keep_workspaces = keep;
        self
    }
}

impl EpisodeRunner for SandboxEpisodeRunner<'_> {
    fn run(&self, task: &GeneratedTask, seed: u64) -> Trajectory {
        let ws = self.root.join(&task.task_config.id).join(format!("seed-{seed}"));
        let setup = (|| {
            if ws.exists() {
                fs::remove_dir_all(&ws)?;
            }
            fs::create_dir_all(&ws)?;
            task.write_code(&ws)
        })();
        let env = EpisodeEnv {
            workspace: ws.clone(),
            sandbox: &self.sandbox,
            limits: &self.limits,
        };
        let traj = match setup {
            Ok(()) => run_episode_in(self.provider, task, seed, &env, self.params),
            Err(e) => infra_failure(task, seed, format!("workspace setup: {e}")),
        };
        if !self.keep_workspaces {
            let _ = fs::remove_dir_all(&ws);
        }
        traj
    }
}

pub fn infra_failure(task: &GeneratedTask, seed: u64, failure: String) -> Trajectory {
    Trajectory {
        schema_version: super::episode::TRAJECTORY_SCHEMA_VERSION,
        task_id: task.task_config.id.clone(),
        episode_seed: seed,
        system_prompt: String::new(),
        task_prompt: String::new(),
        turns: Vec::new(),
        submissions: Vec::new(),
        terminal_reason: TerminalReason::InfraFailure,
        format_errors: 0,
        failure: Some(failure),
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectSettings {
    pub target: usize,
    pub workers: usize,
    pub overcommit: f64,
    /// Reruns of the same seed after an infrastructure failure.
    pub infra_retries: usize,
    pub first_seed: u64,
}

impl Default for CollectSettings {
    fn default() -> Self {
        Self {
            target: 256,
            workers: 1,
            overcommit: 1.5,
            infra_retries: 2,
            first_seed: 0,
        }
    }
}

impl CollectSettings {
    /// Most episodes a collection may count.
    pub fn attempt_budget(&self) -> usize {
        (self.target as f64 * self.overcommit.max(1.0)).ceil() as usize
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CollectionReport {
    pub task_id: String,
    pub attempted: usize,
    pub succeeded: usize,
    pub failed_by_reason: BTreeMap<TerminalReason, usize>,
}

fn run_with_retries(runner: &dyn EpisodeRunner, task: &GeneratedTask, seed: u64, retries: usize) -> Trajectory {
    let mut traj = runner.run(task, seed);
    for attempt in 0..retries {
        if traj.terminal_reason != TerminalReason::InfraFailure {
            break;
        }
        tracing::warn!(task = %task.task_config.id, seed, attempt, failure = ?traj.failure, "infrastructure failure; retrying episode");
        traj = runner.run(task, seed);
    }
    traj
}

/// Runs episodes on consecutive seeds until `target` complete or the
/// attempt budget is spent. The counted episodes are always the shortest
/// seed prefix that reaches the target, so results do not depend on the
/// number of workers.
pub fn collect(
    runner: &dyn EpisodeRunner,
    task: &GeneratedTask,
    settings: &CollectSettings,
) -> (Vec<Trajectory>, CollectionReport) {
    let budget = settings.attempt_budget() as u64;
    let next = AtomicU64::new(0);
    let stop = AtomicBool::new(settings.target == 0);
    let done: Mutex<BTreeMap<u64, Trajectory>> = Mutex::new(BTreeMap::new());

    let prefix_complete = |done: &BTreeMap<u64, Trajectory>| {
        let mut ok = 0;
        for (i, (&k, t)) in done.iter().enumerate() {
            if k != i as u64 {
                break;
            }
            ok += usize::from(t.terminal_reason.is_completed());
            if ok >= settings.target {
                return true;
            }
        }
        false
    };

    std::thread::scope(|s| {
        for _ in 0..settings.workers.max(1) {
            s.spawn(|| loop {
                if stop.load(Ordering::SeqCst) {
                    break;
                }
                let offset = next.fetch_add(1, Ordering::SeqCst);
                if offset >= budget {
                    break;
                }
                let traj = run_with_retries(runner, task, settings.first_seed + offset, settings.infra_retries);
                let mut map = done.lock().expect("no panics while holding the lock");
                map.insert(offset, traj);
                if prefix_complete(&map) {
                    stop.store(true, Ordering::SeqCst);
                }
            });
        }
    });

    let done = done.into_inner().expect("workers joined");
    let mut kept = Vec::new();
    let mut report = CollectionReport {
        task_id: task.task_config.id.clone(),
        attempted: 0,
        succeeded: 0,
        failed_by_reason: BTreeMap::new(),
    };
    for (_, traj) in done {
        if report.succeeded >= settings.target {
            break;
        }
        report.attempted += 1;
        if traj.terminal_reason.is_completed() {
            report.succeeded += 1;
            kept.push(traj);
        } else {
            *report.failed_by_reason.entry(traj.terminal_reason).or_default() += 1;
        }
    }
    (kept, report)
}
