//! Append-only JSON-lines ledger of per-entity stage outcomes, used to skip
//! finished work when a run is resumed.

use std::collections::HashMap;
use std::fmt;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Topics,
    Propose,
    Codegen,
    Verify,
    Collect,
    Curate,
}

impl Stage {
    pub const ALL: [Stage; 6] = [
        Stage::Topics,
        Stage::Propose,
        Stage::Codegen,
        Stage::Verify,
        Stage::Collect,
        Stage::Curate,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Stage::Topics => "topics",
            Stage::Propose => "propose",
            Stage::Codegen => "codegen",
            Stage::Verify => "verify",
            Stage::Collect => "collect",
            Stage::Curate => "curate",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Stage {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Stage::ALL
            .into_iter()
            .find(|st| st.as_str() == s)
            .ok_or_else(|| format!("unknown stage `{s}`"))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Status {
    Completed,
    Validated,
    Discarded,
    Exported,
    FailedPermanent,
}

impl Status {
    /// Every status is written once an entity is finished; none is retried.
    pub fn is_terminal(self) -> bool {
        true
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestRecord {
    pub stage: Stage,
    pub entity_id: String,
    pub status: Status,
    /// SHA-256 of the stage output written for this entity.
    pub digest: Option<String>,
    pub timestamp_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub detail: Option<String>,
}

pub struct Manifest {
    path: PathBuf,
    file: Mutex<File>,
    latest: Mutex<HashMap<(Stage, String), ManifestRecord>>,
}

fn now_ms() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map_or(0, |d| d.as_millis() as u64)
}

impl Manifest {
    /// Opens or creates the manifest. A torn final line, left by a crash
    /// mid-write, is ignored.
    pub fn open(path: &Path) -> io::Result<Self> {
        if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent)?;
        }
        let mut latest = HashMap::new();
        if path.exists() {
            let text = fs::read_to_string(path)?;
            let lines: Vec<&str> = text.lines().collect();
            for (i, line) in lines.iter().enumerate() {
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<ManifestRecord>(line) {
                    Ok(r) => {
                        latest.insert((r.stage, r.entity_id.clone()), r);
                    }
                    Err(e) if i + 1 == lines.len() && !text.ends_with('\n') => {
                        tracing::warn!(error = %e, "ignoring torn final manifest line");
                    }
                    Err(e) => {
                        return Err(io::Error::new(
                            io::ErrorKind::InvalidData,
                            format!("{}:{}: {e}", path.display(), i + 1),
                        ))
                    }
                }
            }
            if !text.is_empty() && !text.ends_with('\n') {
                let keep = text.rfind('\n').map_or(0, |i| i + 1);
                OpenOptions::new().write(true).open(path)?.set_len(keep as u64)?;
            }
        }
        let file = OpenOptions::new().create(true).append(true).open(path)?;
        Ok(Self {
            path: path.to_path_buf(),
            file: Mutex::new(file),
            latest: Mutex::new(latest),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn append(
        &self,
        stage: Stage,
        entity_id: &str,
        status: Status,
        digest: Option<String>,
        detail: Option<String>,
    ) -> io::Result<ManifestRecord> {
        let record = ManifestRecord {
            stage,
            entity_id: entity_id.to_string(),
            status,
            digest,
            timestamp_ms: now_ms(),
            detail,
        };
        let mut line = serde_json::to_string(&record).expect("plain data");
        line.push('\n');
        {
            let mut f = self.file.lock().expect("manifest lock");
            f.write_all(line.as_bytes())?;
            f.sync_data()?;
        }
        self.latest
            .lock()
            .expect("manifest lock")
            .insert((stage, entity_id.to_string()), record.clone());
        Ok(record)
    }

    pub fn get(&self, stage: Stage, entity_id: &str) -> Option<ManifestRecord> {
        self.latest
            .lock()
            .expect("manifest lock")
            .get(&(stage, entity_id.to_string()))
            .cloned()
    }

    pub fn is_terminal(&self, stage: Stage, entity_id: &str) -> bool {
        self.get(stage, entity_id).is_some_and(|r| r.status.is_terminal())
    }

    /// Latest record per entity for one stage, sorted by entity id.
    pub fn stage_records(&self, stage: Stage) -> Vec<ManifestRecord> {
        let mut out: Vec<_> = self
            .latest
            .lock()
            .expect("manifest lock")
            .values()
            .filter(|r| r.stage == stage)
            .cloned()
            .collect();
        out.sort_by(|a, b| a.entity_id.cmp(&b.entity_id));
        out
    }
}
