//! End-to-end orchestration: topics → propose → codegen → verify → collect
//! → curate over one workspace directory, resumable through the manifest.
//!
//! Layout under `workspace_root`:
//!
//! | path | written by |
//! |---|---|
//! | `manifest.jsonl` | every stage |
//! | `topics.json` | topics |
//! | `proposals/<slug>.json` | propose |
//! | `generated/<slug>.json` | codegen |
//! | `verify/<task_id>.json`, `validated/<task_id>/` | verify |
//! | `trajectories/<task_id>.jsonl`, `.report.json` | collect |
//! | `sft/train.jsonl`, `sft/stats/` | curate |

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::codegen::{Codegen, CodegenError, CodegenSettings, ConfigBundle, Conversation, GeneratedTask};
use crate::curate::{self, CurationPolicy, TokenCounter};
use crate::demo::DemoTeacher;
use crate::hfhub::{CachedTransport, HttpReply, HubClient, HubError, HubSettings, HubTransport, LiveTransport};
use crate::manifest::{Manifest, Stage, Status};
use crate::provider::{
    ChatMessage, ChatProvider, CompletionRequest, LiveConfig, OpenAiCompatible, ProviderError,
    RecordingProvider, ReplayProvider, Retrying, SamplingParams,
};
use crate::retry::RetryPolicy;
use crate::synth::{topic_slug, EnrichedProposal, SynthSettings, Synthesizer};
use crate::trajgen::{collect, CollectSettings, EpisodeLimits, EpisodeRunner, SandboxEpisodeRunner, TerminalReason, Trajectory};
use crate::verify::{verify_task, CodegenSource, DebugPolicy, SandboxExecutor, SandboxSettings, VerificationStatus};

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("config error: {0}")]
    Config(String),
    #[error("stage `{stage}` aborted: {message}")]
    StageAbort { stage: Stage, message: String },
}

impl PipelineError {
    fn abort(stage: Stage, message: impl Into<String>) -> Self {
        Self::StageAbort {
            stage,
            message: message.into(),
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            Self::StageAbort { stage, .. } => Some(*stage),
            Self::Config(_) => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveProvider {
    #[serde(flatten)]
    pub endpoint: LiveConfig,
    #[serde(default)]
    pub retry: RetryPolicy,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ProviderConfig {
    /// An OpenAI-compatible chat endpoint.
    Live(LiveProvider),
    /// Serves a recorded transcript.
    Replay { transcript: PathBuf },
    /// The built-in scripted teacher behind the bundled demo corpus.
    Demo,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum HubMode {
    /// Cache only; a miss fails.
    Offline,
    /// Misses are fetched and appended to the cache.
    ReadThrough,
    /// No cache.
    Live,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HubConfig {
    pub mode: HubMode,
    pub cache: PathBuf,
    pub token_env: String,
    pub timeout_secs: u64,
    pub settings: HubSettings,
}

impl Default for HubConfig {
    fn default() -> Self {
        Self {
            mode: HubMode::ReadThrough,
            cache: PathBuf::from("hub_cache.jsonl"),
            token_env: "HF_TOKEN".into(),
            timeout_secs: 60,
            settings: HubSettings::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CollectOptions {
    pub overcommit: f64,
    pub infra_retries: usize,
    pub keep_workspaces: bool,
    pub params: SamplingParams,
}

impl Default for CollectOptions {
    fn default() -> Self {
        let d = CollectSettings::default();
        Self {
            overcommit: d.overcommit,
            infra_retries: d.infra_retries,
            keep_workspaces: false,
            params: SamplingParams::default(),
        }
    }
}

/// The YAML run configuration. Relative paths inside it resolve against
/// `workspace_root`, which itself resolves against the config file's
/// directory.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PipelineConfig {
    pub workspace_root: PathBuf,
    pub n_topics: usize,
    pub target_trajectories: usize,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "one")]
    pub workers: usize,
    pub provider: ProviderConfig,
    /// Per-stage overrides of `provider`. Verification repairs use the
    /// codegen provider.
    #[serde(default)]
    pub stage_providers: BTreeMap<Stage, ProviderConfig>,
    #[serde(default)]
    pub hub: HubConfig,
    #[serde(default)]
    pub synth: SynthSettings,
    #[serde(default)]
    pub codegen: CodegenSettings,
    /// `rng_seed` is replaced by `seed`.
    #[serde(default)]
    pub debug_policy: DebugPolicy,
    #[serde(default)]
    pub sandbox: SandboxSettings,
    /// Run one short episode per validated task and discard tasks whose
    /// episode cannot even start.
    #[serde(default)]
    pub smoke_episode: bool,
    #[serde(default)]
    pub episode: EpisodeLimits,
    #[serde(default)]
    pub collect: CollectOptions,
    #[serde(default)]
    pub curation: CurationPolicy,
    #[serde(default)]
    pub token_counter: TokenCounter,
}

fn one() -> usize {
    1
}

impl PipelineConfig {
    pub fn from_yaml(text: &str) -> Result<Self, PipelineError> {
        let de = serde_yaml::Deserializer::from_str(text);
        serde_path_to_error::deserialize(de).map_err(|e| PipelineError::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, PipelineError> {
        let text = fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_yaml(&text)?;
        if cfg.workspace_root.is_relative() {
            let base = path.parent().unwrap_or(Path::new("."));
            cfg.workspace_root = base.join(&cfg.workspace_root);
        }
        if let Ok(abs) = std::path::absolute(&cfg.workspace_root) {
            cfg.workspace_root = abs;
        }
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let err = |m: String| Err(PipelineError::Config(m));
        for (name, v) in [
            ("n_topics", self.n_topics),
            ("target_trajectories", self.target_trajectories),
            ("workers", self.workers),
        ] {
            if v == 0 {
                return err(format!("{name} must be positive"));
            }
        }
        self.debug_policy.validate().map_err(PipelineError::Config)?;
        self.curation.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        if self.episode.max_rounds == 0 {
            return err("episode.max_rounds must be positive".into());
        }
        Ok(())
    }

    pub fn resolve(&self, path: &Path) -> PathBuf {
        if path.is_absolute() {
            path.to_path_buf()
        } else {
            self.workspace_root.join(path)
        }
    }
}

#[derive(Debug, Clone, Default)]
pub struct RunOptions {
    /// Stages to run, in pipeline order; empty means all.
    pub stages: Vec<Stage>,
    pub resume: bool,
    /// Serve every completion from this transcript and keep the hub offline.
    pub replay: Option<PathBuf>,
    /// Append every completion to this transcript.
    pub record: Option<PathBuf>,
    pub seed: Option<u64>,
    pub workers: Option<usize>,
}

/// Entity counts at each stage boundary.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Funnel {
    pub topics: usize,
    pub proposals: usize,
    pub generated: usize,
    pub validated: usize,
    pub trajectories: usize,
    pub successful_trajectories: usize,
    pub sft_records: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub stages: Vec<Stage>,
    pub funnel: Funnel,
    pub provider_calls: usize,
    /// Requests that reached the live hub.
    pub hub_requests: usize,
    pub sft_path: Option<PathBuf>,
}

/// Layout of a workspace.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub root: PathBuf,
}

impl Workspace {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        Self { root: root.into() }
    }

    pub fn manifest(&self) -> PathBuf {
        self.root.join("manifest.jsonl")
    }

    pub fn topics(&self) -> PathBuf {
        self.root.join("topics.json")
    }

    pub fn proposal(&self, slug: &str) -> PathBuf {
        self.root.join("proposals").join(format!("{slug}.json"))
    }

    pub fn generated(&self, slug: &str) -> PathBuf {
        self.root.join("generated").join(format!("{slug}.json"))
    }

    pub fn verification(&self, task_id: &str) -> PathBuf {
        self.root.join("verify").join(format!("{task_id}.json"))
    }

    pub fn task_bundle(&self, task_id: &str) -> PathBuf {
        self.root.join("validated").join(task_id)
    }

    pub fn trajectories_dir(&self) -> PathBuf {
        self.root.join("trajectories")
    }

    pub fn trajectories(&self, task_id: &str) -> PathBuf {
        self.trajectories_dir().join(format!("{task_id}.jsonl"))
    }

    pub fn collection_report(&self, task_id: &str) -> PathBuf {
        self.trajectories_dir().join(format!("{task_id}.report.json"))
    }

    pub fn sft(&self) -> PathBuf {
        self.root.join("sft").join("train.jsonl")
    }

    pub fn stats_dir(&self) -> PathBuf {
        self.root.join("sft").join("stats")
    }

    pub fn exec(&self, stage: Stage) -> PathBuf {
        self.root.join("exec").join(stage.as_str())
    }
}

/// What codegen leaves for verification.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratedRecord {
    pub topic_slug: String,
    pub configs: ConfigBundle,
    pub task: GeneratedTask,
    pub conversation: Conversation,
}

struct CountingProvider {
    inner: Arc<dyn ChatProvider>,
    calls: AtomicUsize,
}

impl ChatProvider for CountingProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.complete(request)
    }
}

/// Dispatches on the request scope to the provider configured for the
/// stage that owns it.
struct StageRouter {
    default: Arc<dyn ChatProvider>,
    by_stage: BTreeMap<Stage, Arc<dyn ChatProvider>>,
}

fn scope_stage(scope: &str) -> Option<Stage> {
    let head = scope.split('/').next().unwrap_or_default();
    match head {
        "topics" => Some(Stage::Topics),
        "propose" => Some(Stage::Propose),
        // verification repairs are codegen calls
        "codegen" | "verify" => Some(Stage::Codegen),
        "collect" => Some(Stage::Collect),
        _ => None,
    }
}

impl ChatProvider for StageRouter {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        scope_stage(&request.scope)
            .and_then(|s| self.by_stage.get(&s))
            .unwrap_or(&self.default)
            .complete(request)
    }
}

struct CountingTransport {
    inner: Box<dyn HubTransport>,
    calls: Arc<AtomicUsize>,
}

impl HubTransport for CountingTransport {
    fn get(&self, url: &str) -> Result<HttpReply, HubError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        self.inner.get(url)
    }
}

fn build_provider(cfg: &ProviderConfig, pc: &PipelineConfig) -> Result<Arc<dyn ChatProvider>, PipelineError> {
    Ok(match cfg {
        ProviderConfig::Live(l) => Arc::new(Retrying::new(OpenAiCompatible::new(l.endpoint.clone()), l.retry)),
        ProviderConfig::Replay { transcript } => Arc::new(
            ReplayProvider::open(&pc.resolve(transcript)).map_err(|e| PipelineError::Config(e.to_string()))?,
        ),
        ProviderConfig::Demo => Arc::new(DemoTeacher::new()),
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent)?;
    }
    let tmp = path.with_extension("tmp");
    fs::write(&tmp, bytes)?;
    fs::File::open(&tmp)?.sync_all()?;
    fs::rename(tmp, path)
}

/// Writes pretty JSON atomically and returns its digest.
fn write_json<T: Serialize>(path: &Path, value: &T) -> io::Result<String> {
    let text = serde_json::to_string_pretty(value).expect("plain data") + "\n";
    write_atomic(path, text.as_bytes())?;
    Ok(sha256_hex(text.as_bytes()))
}

fn read_json<T: DeserializeOwned>(path: &Path) -> Result<T, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    serde_json::from_str(&text).map_err(|e| format!("{}: {e}", path.display()))
}

/// Reads trajectories from a JSON-lines file.
pub fn read_trajectories(path: &Path) -> Result<Vec<Trajectory>, String> {
    let text = fs::read_to_string(path).map_err(|e| format!("{}: {e}", path.display()))?;
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, l)| serde_json::from_str(l).map_err(|e| format!("{}:{}: {e}", path.display(), i + 1)))
        .collect()
}

/// Topic slugs, made unique by numeric suffixes in topic order.
pub fn unique_slugs(topics: &[String]) -> Vec<String> {
    let mut seen = BTreeSet::new();
    topics
        .iter()
        .map(|t| {
            let base = topic_slug(t);
            let mut slug = base.clone();
            let mut n = 2;
            while !seen.insert(slug.clone()) {
                slug = format!("{base}_{n}");
                n += 1;
            }
            slug
        })
        .collect()
}

enum Outcome {
    Done { status: Status, digest: Option<String>, detail: Option<String> },
    Failed(String),
}

struct Runner<'a> {
    cfg: &'a PipelineConfig,
    ws: Workspace,
    manifest: Manifest,
    provider: &'a dyn ChatProvider,
    hub: HubClient,
    pool: rayon::ThreadPool,
}

impl Runner<'_> {
    fn record(&self, stage: Stage, id: &str, outcome: Outcome) -> Result<bool, PipelineError> {
        let (status, digest, detail, failed) = match outcome {
            Outcome::Done { status, digest, detail } => (status, digest, detail, false),
            Outcome::Failed(msg) => (Status::FailedPermanent, None, Some(msg), true),
        };
        tracing::info!(%stage, entity = id, ?status, detail = detail.as_deref().unwrap_or(""), "entity finished");
        self.manifest
            .append(stage, id, status, digest, detail)
            .map_err(|e| PipelineError::abort(stage, format!("manifest write failed: {e}")))?;
        Ok(failed)
    }

    /// Runs `work` over the pending entities in parallel, recording each
    /// outcome as it lands. Permanent failures abort the stage afterwards.
    fn run_entities<T: Sync>(
        &self,
        stage: Stage,
        items: &[(String, T)],
        work: impl Fn(&str, &T) -> Outcome + Sync + Send,
    ) -> Result<(), PipelineError> {
        let pending: Vec<&(String, T)> = items
            .iter()
            .filter(|(id, _)| !self.manifest.is_terminal(stage, id))
            .collect();
        tracing::info!(%stage, pending = pending.len(), total = items.len(), "stage start");
        let results: Vec<Result<bool, PipelineError>> = self.pool.install(|| {
            pending
                .par_iter()
                .map(|(id, item)| self.record(stage, id, work(id, item)))
                .collect()
        });
        let mut failed = 0;
        for r in results {
            failed += usize::from(r?);
        }
        if failed > 0 {
            return Err(PipelineError::abort(
                stage,
                format!("{failed} entit{} failed permanently; see the manifest", if failed == 1 { "y" } else { "ies" }),
            ));
        }
        Ok(())
    }

    fn topics(&self) -> Result<(), PipelineError> {
        let stage = Stage::Topics;
        if self.manifest.is_terminal(stage, "topics") {
            return Ok(());
        }
        let synth = Synthesizer::new(self.provider, &self.hub, self.cfg.synth.clone());
        let outcome = match synth.sample_topics(self.cfg.n_topics) {
            Ok(t) if t.is_empty() => Outcome::Failed("no topics were produced".into()),
            Ok(topics) => match write_json(&self.ws.topics(), &topics) {
                Ok(d) => Outcome::Done {
                    status: Status::Completed,
                    digest: Some(d),
                    detail: Some(format!("{} topics", topics.len())),
                },
                Err(e) => return Err(PipelineError::abort(stage, e.to_string())),
            },
            Err(e) => Outcome::Failed(e.to_string()),
        };
        if self.record(stage, "topics", outcome)? {
            return Err(PipelineError::abort(stage, "topic sampling failed; see the manifest"));
        }
        Ok(())
    }

    fn propose(&self) -> Result<(), PipelineError> {
        let stage = Stage::Propose;
        let topics: Vec<String> = read_json(&self.ws.topics())
            .map_err(|e| PipelineError::abort(stage, format!("missing input {e}; run the topics stage first")))?;
        let items: Vec<(String, String)> = unique_slugs(&topics).into_iter().zip(topics).collect();
        let synth = Synthesizer::new(self.provider, &self.hub, self.cfg.synth.clone());
        self.run_entities(stage, &items, |slug, topic| match synth.propose_and_enrich(topic) {
            Ok(p) => {
                let (status, detail) = match p.discard_reason {
                    Some(r) => (Status::Discarded, Some(format!("{r:?}"))),
                    None => (Status::Completed, p.resolved_dataset.as_ref().map(|d| d.id.clone())),
                };
                match write_json(&self.ws.proposal(slug), &p) {
                    Ok(d) => Outcome::Done { status, digest: Some(d), detail },
                    Err(e) => Outcome::Failed(e.to_string()),
                }
            }
            Err(e) => Outcome::Failed(e.to_string()),
        })
    }

    fn codegen(&self) -> Result<(), PipelineError> {
        let stage = Stage::Codegen;
        let items = self.completed(stage, Stage::Propose, Status::Completed)?;
        let codegen = Codegen::new(self.provider, self.cfg.codegen.clone());
        self.run_entities(stage, &items, |slug, _| {
            let proposal: EnrichedProposal = match read_json(&self.ws.proposal(slug)) {
                Ok(p) => p,
                Err(e) => return Outcome::Failed(e),
            };
            let generated = codegen.generate_configs(&proposal).and_then(|configs| {
                let (task, conversation) = codegen.generate_starter_code(&configs)?;
                Ok(GeneratedRecord {
                    topic_slug: slug.to_string(),
                    configs,
                    task,
                    conversation,
                })
            });
            match generated {
                Ok(g) => match write_json(&self.ws.generated(slug), &g) {
                    Ok(d) => Outcome::Done {
                        status: Status::Completed,
                        digest: Some(d),
                        detail: Some(g.task.task_config.id.clone()),
                    },
                    Err(e) => Outcome::Failed(e.to_string()),
                },
                Err(e @ CodegenError::StageOutputInvalid { .. }) => Outcome::Done {
                    status: Status::Discarded,
                    digest: None,
                    detail: Some(e.to_string()),
                },
                Err(e) => Outcome::Failed(e.to_string()),
            }
        })
    }

    /// Entities of `source` that ended in `status`, sorted by id. Fails
    /// with an abort of `consumer` when `source` has never run.
    fn completed(&self, consumer: Stage, source: Stage, status: Status) -> Result<Vec<(String, ())>, PipelineError> {
        let records = self.manifest.stage_records(source);
        if records.is_empty() {
            return Err(PipelineError::abort(
                consumer,
                format!("missing input: no {source} results in the manifest; run the {source} stage first"),
            ));
        }
        Ok(records
            .into_iter()
            .filter(|r| r.status == status)
            .map(|r| (r.entity_id, ()))
            .collect())
    }

    fn verify(&self) -> Result<(), PipelineError> {
        let stage = Stage::Verify;
        let slugs = self.completed(stage, Stage::Codegen, Status::Completed)?;
        let mut seen = BTreeSet::new();
        let mut items = Vec::new();
        for (slug, _) in slugs {
            let g: GeneratedRecord = read_json(&self.ws.generated(&slug)).map_err(|e| PipelineError::abort(stage, e))?;
            let id = g.task.task_config.id.clone();
            if seen.insert(id.clone()) {
                items.push((id, g));
            } else {
                tracing::warn!(task = %id, topic = %slug, "duplicate task id; keeping the first");
            }
        }
        let codegen = Codegen::new(self.provider, self.cfg.codegen.clone());
        let policy = DebugPolicy {
            rng_seed: self.cfg.seed,
            ..self.cfg.debug_policy.clone()
        };
        let exec_root = self.ws.exec(stage);
        let executor = SandboxExecutor::new(&exec_root, self.cfg.sandbox.clone());
        let result = self.run_entities(stage, &items, |id, g| {
            let mut source = CodegenSource::new(&codegen, g.configs.clone(), g.conversation.clone());
            let outcome = verify_task(g.task.clone(), &mut source, &executor, &policy);
            let mut status = match outcome.status {
                VerificationStatus::Validated => Status::Validated,
                VerificationStatus::Discarded => Status::Discarded,
            };
            let mut detail = outcome
                .fatal_error
                .clone()
                .or_else(|| Some(format!("{} iteration(s)", outcome.iterations_used)));
            if let (Status::Validated, Some(task)) = (status, &outcome.task) {
                let bundle = self.ws.task_bundle(id);
                let written = (|| {
                    if bundle.exists() {
                        fs::remove_dir_all(&bundle)?;
                    }
                    task.materialize(&bundle)
                })();
                if let Err(e) = written {
                    return Outcome::Failed(format!("writing task bundle: {e}"));
                }
                if self.cfg.smoke_episode {
                    if let Some(reason) = self.smoke(task) {
                        status = Status::Discarded;
                        detail = Some(format!("smoke episode failed: {reason}"));
                        let _ = fs::remove_dir_all(&bundle);
                    }
                }
            }
            match write_json(&self.ws.verification(id), &outcome) {
                Ok(d) => Outcome::Done { status, digest: Some(d), detail },
                Err(e) => Outcome::Failed(e.to_string()),
            }
        });
        let _ = fs::remove_dir_all(&exec_root);
        result
    }

    /// One short episode; returns why it could not run, if it could not.
    fn smoke(&self, task: &GeneratedTask) -> Option<String> {
        let limits = EpisodeLimits {
            max_rounds: self.cfg.episode.max_rounds.min(5),
            ..self.cfg.episode.clone()
        };
        let runner = SandboxEpisodeRunner::new(self.provider, self.ws.exec(Stage::Verify).join("smoke"), self.cfg.sandbox.clone(), limits)
            .with_params(self.cfg.collect.params);
        let t = runner.run(task, u64::MAX);
        (t.terminal_reason == TerminalReason::InfraFailure).then(|| t.failure.unwrap_or_default())
    }

    fn collect(&self) -> Result<(), PipelineError> {
        let stage = Stage::Collect;
        let items = self.completed(stage, Stage::Verify, Status::Validated)?;
        let exec_root = self.ws.exec(stage);
        let runner = SandboxEpisodeRunner::new(self.provider, &exec_root, self.cfg.sandbox.clone(), self.cfg.episode.clone())
            .with_params(self.cfg.collect.params)
            .keep_workspaces(self.cfg.collect.keep_workspaces);
        let settings = CollectSettings {
            target: self.cfg.target_trajectories,
            workers: self.cfg.workers,
            overcommit: self.cfg.collect.overcommit,
            infra_retries: self.cfg.collect.infra_retries,
            first_seed: self.cfg.seed,
        };
        // Tasks run one after another; the episode workers provide the
        // parallelism.
        let mut failed = 0;
        for (id, _) in &items {
            if self.manifest.is_terminal(stage, id) {
                continue;
            }
            let outcome = match GeneratedTask::load(&self.ws.task_bundle(id), id) {
                Err(e) => Outcome::Failed(format!("loading task bundle: {e}")),
                Ok(task) => {
                    let (trajs, report) = collect(&runner, &task, &settings);
                    let mut body = String::new();
                    for t in &trajs {
                        body.push_str(&serde_json::to_string(t).expect("plain data"));
                        body.push('\n');
                    }
                    let written = write_json(&self.ws.collection_report(id), &report)
                        .and_then(|_| write_atomic(&self.ws.trajectories(id), body.as_bytes()));
                    match written {
                        Ok(()) => Outcome::Done {
                            status: Status::Completed,
                            digest: Some(sha256_hex(body.as_bytes())),
                            detail: Some(format!("{}/{} episodes completed", report.succeeded, report.attempted)),
                        },
                        Err(e) => Outcome::Failed(e.to_string()),
                    }
                }
            };
            failed += usize::from(self.record(stage, id, outcome)?);
        }
        let _ = fs::remove_dir_all(&exec_root);
        if failed > 0 {
            return Err(PipelineError::abort(stage, format!("{failed} task(s) failed permanently; see the manifest")));
        }
        Ok(())
    }

    fn curate(&self) -> Result<(), PipelineError> {
        let stage = Stage::Curate;
        if self.manifest.is_terminal(stage, "sft") {
            return Ok(());
        }
        let trajs = load_all_trajectories(&self.ws).map_err(|e| PipelineError::abort(stage, e))?;
        let records = curate::filter_and_truncate(&trajs, &self.cfg.curation, &self.cfg.token_counter)
            .map_err(|e| PipelineError::abort(stage, e.to_string()))?;
        let digest = curate::export_sft(&records, &self.ws.sft())
            .map_err(|e| PipelineError::abort(stage, e.to_string()))?;
        let report = curate::dataset_stats(&records, &trajs);
        curate::write_stats(&report, &self.ws.stats_dir()).map_err(|e| PipelineError::abort(stage, e.to_string()))?;
        self.record(
            stage,
            "sft",
            Outcome::Done {
                status: Status::Exported,
                digest: Some(digest.sha256),
                detail: Some(format!("{} records from {} trajectories", digest.records, trajs.len())),
            },
        )?;
        Ok(())
    }
}

/// Every trajectory under `trajectories/`, files in name order.
pub fn load_all_trajectories(ws: &Workspace) -> Result<Vec<Trajectory>, String> {
    let dir = ws.trajectories_dir();
    let missing = || format!("missing input: no trajectories on disk under {}; run the collect stage first", dir.display());
    let entries = fs::read_dir(&dir).map_err(|_| missing())?;
    let mut files: Vec<PathBuf> = entries
        .filter_map(Result::ok)
        .map(|e| e.path())
        .filter(|p| p.extension().is_some_and(|x| x == "jsonl"))
        .collect();
    if files.is_empty() {
        return Err(missing());
    }
    files.sort();
    let mut out = Vec::new();
    for f in files {
        out.extend(read_trajectories(&f)?);
    }
    Ok(out)
}

/// Counts at each stage boundary, read back from the workspace.
pub fn funnel(ws: &Workspace) -> Funnel {
    let mut f = Funnel::default();
    let Ok(manifest) = Manifest::open(&ws.manifest()) else {
        return f;
    };
    let count = |stage, status| {
        manifest
            .stage_records(stage)
            .iter()
            .filter(|r| r.status == status)
            .count()
    };
    f.topics = read_json::<Vec<String>>(&ws.topics()).map_or(0, |t| t.len());
    f.proposals = count(Stage::Propose, Status::Completed);
    f.generated = count(Stage::Codegen, Status::Completed);
    f.validated = count(Stage::Verify, Status::Validated);
    if let Ok(trajs) = load_all_trajectories(ws) {
        f.trajectories = trajs.len();
        f.successful_trajectories = trajs.iter().filter(|t| curate::is_success(t)).count();
    }
    f.sft_records = curate::read_sft(&ws.sft()).map_or(0, |r| r.len());
    f
}

/// Runs the selected stages in order.
pub fn run_pipeline(config: &PipelineConfig, opts: &RunOptions) -> Result<RunSummary, PipelineError> {
    let mut cfg = config.clone();
    if let Some(seed) = opts.seed {
        cfg.seed = seed;
    }
    if let Some(w) = opts.workers {
        cfg.workers = w;
    }
    cfg.validate()?;
    fs::create_dir_all(&cfg.workspace_root)
        .and_then(|_| {
            let probe = cfg.workspace_root.join(".write-probe");
            fs::write(&probe, b"")?;
            fs::remove_file(probe)
        })
        .map_err(|e| PipelineError::Config(format!("workspace_root {} is not writable: {e}", cfg.workspace_root.display())))?;
    let ws = Workspace::new(cfg.workspace_root.clone());
    let manifest_path = ws.manifest();
    if !opts.resume && fs::metadata(&manifest_path).is_ok_and(|m| m.len() > 0) {
        return Err(PipelineError::Config(format!(
            "{} already records a run; pass --resume to continue it or choose an empty workspace_root",
            manifest_path.display()
        )));
    }
    let manifest = Manifest::open(&manifest_path).map_err(|e| PipelineError::Config(format!("{}: {e}", manifest_path.display())))?;

    let base: Arc<dyn ChatProvider> = match &opts.replay {
        Some(t) => Arc::new(ReplayProvider::open(t).map_err(|e| PipelineError::Config(e.to_string()))?),
        None => {
            let mut by_stage = BTreeMap::new();
            for (stage, p) in &cfg.stage_providers {
                by_stage.insert(*stage, build_provider(p, &cfg)?);
            }
            Arc::new(StageRouter {
                default: build_provider(&cfg.provider, &cfg)?,
                by_stage,
            })
        }
    };
    let base: Arc<dyn ChatProvider> = match &opts.record {
        Some(path) => Arc::new(RecordingProvider::create(base, path).map_err(|e| PipelineError::Config(e.to_string()))?),
        None => base,
    };
    let provider = CountingProvider {
        inner: base,
        calls: AtomicUsize::new(0),
    };

    let hub_requests = Arc::new(AtomicUsize::new(0));
    let live = || -> Box<dyn HubTransport> {
        let token = std::env::var(&cfg.hub.token_env).ok();
        Box::new(CountingTransport {
            inner: Box::new(LiveTransport::new(Duration::from_secs(cfg.hub.timeout_secs), token)),
            calls: hub_requests.clone(),
        })
    };
    let cache = cfg.resolve(&cfg.hub.cache);
    let mode = if opts.replay.is_some() { HubMode::Offline } else { cfg.hub.mode };
    let transport: Arc<dyn HubTransport> = match mode {
        HubMode::Offline => Arc::new(CachedTransport::offline(&cache).map_err(|e| PipelineError::Config(e.to_string()))?),
        HubMode::ReadThrough => Arc::new(CachedTransport::read_through(live(), &cache).map_err(|e| PipelineError::Config(e.to_string()))?),
        HubMode::Live => Arc::from(live()),
    };
    let hub = HubClient::new(transport, cfg.hub.settings.clone());
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| PipelineError::Config(e.to_string()))?;

    let runner = Runner {
        cfg: &cfg,
        ws: ws.clone(),
        manifest,
        provider: &provider,
        hub,
        pool,
    };
    let stages: Vec<Stage> = Stage::ALL
        .into_iter()
        .filter(|s| opts.stages.is_empty() || opts.stages.contains(s))
        .collect();
    for stage in &stages {
        match stage {
            Stage::Topics => runner.topics(),
            Stage::Propose => runner.propose(),
            Stage::Codegen => runner.codegen(),
            Stage::Verify => runner.verify(),
            Stage::Collect => runner.collect(),
            Stage::Curate => runner.curate(),
        }?;
    }
    let sft = ws.sft();
    Ok(RunSummary {
        stages,
        funnel: funnel(&ws),
        provider_calls: provider.calls.load(Ordering::SeqCst),
        hub_requests: hub_requests.load(Ordering::SeqCst),
        sft_path: sft.exists().then_some(sft),
    })
}
