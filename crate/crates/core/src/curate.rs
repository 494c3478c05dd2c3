//! Turning trajectories into SFT records: success and length filtering,
//! truncation, statistics and JSON-lines export.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::provider::ChatMessage;
use crate::trajgen::Trajectory;

#[derive(Debug, Error)]
pub enum CurateError {
    #[error("invalid policy: {0}")]
    InvalidPolicy(String),
    #[error("trajectory {task_id}/{seed}: the system and task messages alone take {tokens} tokens, over the {limit}-token limit")]
    EmptyAfterTruncation {
        task_id: String,
        seed: u64,
        tokens: usize,
        limit: usize,
    },
    #[error("nothing to export")]
    EmptyExport,
    #[error("{path}:{line}: {message}")]
    Malformed {
        path: String,
        line: usize,
        message: String,
    },
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub trait Tokenizer: Send + Sync {
    fn name(&self) -> &str;
    fn count(&self, text: &str) -> usize;
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub enum TokenCounter {
    Whitespace,
    /// `ceil(chars / 4)`.
    #[default]
    CharsOver4,
}

impl Tokenizer for TokenCounter {
    fn name(&self) -> &str {
        match self {
            Self::Whitespace => "whitespace",
            Self::CharsOver4 => "chars_over_4",
        }
    }

    fn count(&self, text: &str) -> usize {
        match self {
            Self::Whitespace => text.split_whitespace().count(),
            Self::CharsOver4 => text.chars().count().div_ceil(4),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CurationPolicy {
    pub require_success: bool,
    pub max_tokens_filter: usize,
    pub truncate_to: usize,
}

impl Default for CurationPolicy {
    fn default() -> Self {
        Self {
            require_success: true,
            max_tokens_filter: 48_000,
            truncate_to: 32_000,
        }
    }
}

impl CurationPolicy {
    pub fn validate(&self) -> Result<(), CurateError> {
        if self.truncate_to > self.max_tokens_filter {
            return Err(CurateError::InvalidPolicy(format!(
                "truncate_to ({}) exceeds max_tokens_filter ({})",
                self.truncate_to, self.max_tokens_filter
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftMessage {
    pub role: String,
    pub content: String,
}

impl From<&ChatMessage> for SftMessage {
    fn from(m: &ChatMessage) -> Self {
        Self {
            role: m.role.as_str().to_string(),
            content: m.content.clone(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SftRecord {
    pub task_id: String,
    pub messages: Vec<SftMessage>,
    pub token_count: usize,
    pub truncated: bool,
}

impl SftRecord {
    pub fn turns(&self) -> usize {
        self.messages.iter().filter(|m| m.role == "assistant").count()
    }
}

pub fn is_success(traj: &Trajectory) -> bool {
    traj.has_successful_submission()
}

/// The text whose tokens are counted: `role\ncontent\n` per message.
pub fn render_messages(messages: &[SftMessage]) -> String {
    let mut out = String::new();
    for m in messages {
        out.push_str(&m.role);
        out.push('\n');
        out.push_str(&m.content);
        out.push('\n');
    }
    out
}

pub fn count_messages(messages: &[SftMessage], counter: &dyn Tokenizer) -> usize {
    counter.count(&render_messages(messages))
}

/// Messages that truncation may never drop.
pub const PROTECTED_PREFIX: usize = 2;

pub fn filter_and_truncate(
    trajs: &[Trajectory],
    policy: &CurationPolicy,
    counter: &dyn Tokenizer,
) -> Result<Vec<SftRecord>, CurateError> {
    policy.validate()?;
    let mut out = Vec::new();
    for t in trajs {
        if policy.require_success && !is_success(t) {
            continue;
        }
        let mut messages: Vec<SftMessage> = t.messages().iter().map(SftMessage::from).collect();
        let full = count_messages(&messages, counter);
        if full > policy.max_tokens_filter {
            continue;
        }
        let mut tokens = full;
        while tokens > policy.truncate_to && messages.len() > PROTECTED_PREFIX {
            messages.pop();
            tokens = count_messages(&messages, counter);
        }
        if tokens > policy.truncate_to {
            return Err(CurateError::EmptyAfterTruncation {
                task_id: t.task_id.clone(),
                seed: t.episode_seed,
                tokens,
                limit: policy.truncate_to,
            });
        }
        out.push(SftRecord {
            task_id: t.task_id.clone(),
            messages,
            token_count: tokens,
            truncated: tokens != full,
        });
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Histogram {
    pub bin_width: usize,
    /// `counts[i]` holds values in `[i * bin_width, (i + 1) * bin_width)`.
    pub counts: Vec<usize>,
}

impl Histogram {
    pub fn build(values: impl IntoIterator<Item = usize>, bin_width: usize) -> Self {
        let bin_width = bin_width.max(1);
        let mut counts = Vec::new();
        for v in values {
            let bin = v / bin_width;
            if counts.len() <= bin {
                counts.resize(bin + 1, 0);
            }
            counts[bin] += 1;
        }
        Self { bin_width, counts }
    }

    pub fn total(&self) -> usize {
        self.counts.iter().sum()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StatsReport {
    pub trajectories: usize,
    pub successful_trajectories: usize,
    pub records: usize,
    pub truncated: usize,
    pub records_per_task: BTreeMap<String, usize>,
    pub successes_per_task: BTreeMap<String, usize>,
    pub token_histogram: Histogram,
    pub turn_histogram: Histogram,
}

pub const TOKEN_BIN_WIDTH: usize = 4_000;
pub const TURN_BIN_WIDTH: usize = 5;

pub fn dataset_stats(records: &[SftRecord], trajs: &[Trajectory]) -> StatsReport {
    let mut records_per_task = BTreeMap::new();
    for r in records {
        *records_per_task.entry(r.task_id.clone()).or_default() += 1;
    }
    let mut successes_per_task = BTreeMap::new();
    for t in trajs.iter().filter(|t| is_success(t)) {
        *successes_per_task.entry(t.task_id.clone()).or_default() += 1;
    }
    StatsReport {
        trajectories: trajs.len(),
        successful_trajectories: successes_per_task.values().sum(),
        records: records.len(),
        truncated: records.iter().filter(|r| r.truncated).count(),
        records_per_task,
        successes_per_task,
        token_histogram: Histogram::build(records.iter().map(|r| r.token_count), TOKEN_BIN_WIDTH),
        turn_histogram: Histogram::build(records.iter().map(SftRecord::turns), TURN_BIN_WIDTH),
    }
}

fn plot_histogram(h: &Histogram, path: &Path, title: &str, x_label: &str) -> io::Result<()> {
    use plotters::prelude::*;
    let to_io = |e: &dyn std::fmt::Display| io::Error::other(e.to_string());
    let bins = h.counts.len().max(1);
    let y_max = h.counts.iter().copied().max().unwrap_or(0).max(1);
    let root = SVGBackend::new(path, (800, 480)).into_drawing_area();
    root.fill(&WHITE).map_err(|e| to_io(&e))?;
    let mut chart = ChartBuilder::on(&root)
        .caption(title, ("sans-serif", 24))
        .margin(12)
        .x_label_area_size(40)
        .y_label_area_size(50)
        .build_cartesian_2d(0..bins * h.bin_width, 0..y_max + y_max / 10 + 1)
        .map_err(|e| to_io(&e))?;
    chart
        .configure_mesh()
        .disable_x_mesh()
        .x_desc(x_label)
        .y_desc("count")
        .draw()
        .map_err(|e| to_io(&e))?;
    chart
        .draw_series(h.counts.iter().enumerate().map(|(i, &c)| {
            let x = i * h.bin_width;
            Rectangle::new([(x, 0), (x + h.bin_width, c)], BLUE.mix(0.6).filled())
        }))
        .map_err(|e| to_io(&e))?;
    root.present().map_err(|e| to_io(&e))?;
    Ok(())
}

/// Writes `stats.json`, `token_lengths.svg` and `turns.svg` into `dir`.
pub fn write_stats(report: &StatsReport, dir: &Path) -> io::Result<Vec<PathBuf>> {
    fs::create_dir_all(dir)?;
    let json = dir.join("stats.json");
    fs::write(&json, serde_json::to_string_pretty(report).expect("plain data") + "\n")?;
    let tokens = dir.join("token_lengths.svg");
    plot_histogram(&report.token_histogram, &tokens, "Trajectory length", "tokens")?;
    let turns = dir.join("turns.svg");
    plot_histogram(&report.turn_histogram, &turns, "Turns per trajectory", "turns")?;
    Ok(vec![json, tokens, turns])
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExportDigest {
    pub records: usize,
    /// SHA-256 of the exported file's bytes.
    pub sha256: String,
}

pub fn digest_path(out: &Path) -> PathBuf {
    let mut name = out.file_name().unwrap_or_default().to_os_string();
    name.push(".digest.json");
    out.with_file_name(name)
}

fn write_atomic(path: &Path, bytes: &[u8]) -> io::Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        fs::create_dir_all(parent)?;
    }
    let mut tmp_name = path.file_name().unwrap_or_default().to_os_string();
    tmp_name.push(".tmp");
    let tmp = path.with_file_name(tmp_name);
    let mut f = fs::File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(tmp, path)
}

/// Writes one JSON record per line plus `<out>.digest.json`.
pub fn export_sft(records: &[SftRecord], out: &Path) -> Result<ExportDigest, CurateError> {
    if records.is_empty() {
        return Err(CurateError::EmptyExport);
    }
    let mut body = String::new();
    for r in records {
        body.push_str(&serde_json::to_string(r).expect("plain data"));
        body.push('\n');
    }
    write_atomic(out, body.as_bytes())?;
    let digest = ExportDigest {
        records: records.len(),
        sha256: hex::encode(Sha256::digest(body.as_bytes())),
    };
    let text = serde_json::to_string_pretty(&digest).expect("plain data") + "\n";
    write_atomic(&digest_path(out), text.as_bytes())?;
    Ok(digest)
}

/// Reads an SFT JSON-lines file; blank lines are skipped.
pub fn read_sft(path: &Path) -> Result<Vec<SftRecord>, CurateError> {
    let text = fs::read_to_string(path)?;
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let record = serde_json::from_str(line).map_err(|e| CurateError::Malformed {
            path: path.display().to_string(),
            line: i + 1,
            message: e.to_string(),
        })?;
        out.push(record);
    }
    Ok(out)
}
