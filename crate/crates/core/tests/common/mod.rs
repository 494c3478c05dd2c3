#![allow(dead_code)]

use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};
use tasksynth::manifest::ManifestRecord;
use tasksynth::pipeline::{PipelineConfig, RunOptions};

pub fn demo_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/demo")
}

/// The demo config, rooted at `root`.
pub fn demo_config(root: &Path) -> PipelineConfig {
    let demo = demo_dir();
    let mut cfg = PipelineConfig::load(&demo.join("pipeline.yaml")).unwrap();
    cfg.workspace_root = root.to_path_buf();
    cfg.hub.cache = demo.join("hub_cache.jsonl");
    cfg
}

pub fn replay() -> RunOptions {
    RunOptions {
        replay: Some(demo_dir().join("transcript.jsonl")),
        ..Default::default()
    }
}

/// SHA-256 over every file's relative path and bytes, manifest excluded.
pub fn content_hash(root: &Path) -> String {
    let mut h = Sha256::new();
    let mut files: Vec<PathBuf> = walkdir::WalkDir::new(root)
        .into_iter()
        .filter_map(Result::ok)
        .filter(|e| e.file_type().is_file())
        .map(|e| e.into_path())
        .filter(|p| p.file_name().is_some_and(|n| n != "manifest.jsonl"))
        .collect();
    files.sort();
    for f in files {
        h.update(f.strip_prefix(root).unwrap().to_string_lossy().as_bytes());
        h.update([0]);
        h.update(std::fs::read(&f).unwrap());
    }
    hex::encode(h.finalize())
}

pub fn manifest_records(root: &Path) -> Vec<ManifestRecord> {
    std::fs::read_to_string(root.join("manifest.jsonl"))
        .unwrap_or_default()
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).unwrap())
        .collect()
}

/// The manifest without wall-clock timestamps, in a canonical order.
pub fn manifest_content(root: &Path) -> Vec<String> {
    let mut lines: Vec<String> = manifest_records(root)
        .into_iter()
        .map(|mut r| {
            r.timestamp_ms = 0;
            serde_json::to_string(&r).unwrap()
        })
        .collect();
    lines.sort();
    lines
}
