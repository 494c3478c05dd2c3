use std::collections::{HashMap, VecDeque};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use super::{ChatMessage, ChatProvider, CompletionRequest, ProviderError};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TranscriptMode {
    Record,
    Replay,
    Live,
}

/// One line of a transcript file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub digest: String,
    pub request: CompletionRequest,
    pub response: ChatMessage,
}

/// Serves responses from a recorded transcript; never touches the network.
pub struct ReplayProvider {
    scopes: Mutex<HashMap<String, VecDeque<TranscriptRecord>>>,
    calls: AtomicUsize,
}

impl ReplayProvider {
    pub fn from_records(records: impl IntoIterator<Item = TranscriptRecord>) -> Self {
        let mut scopes: HashMap<String, VecDeque<TranscriptRecord>> = HashMap::new();
        for r in records {
            scopes.entry(r.request.scope.clone()).or_default().push_back(r);
        }
        Self {
            scopes: Mutex::new(scopes),
            calls: AtomicUsize::new(0),
        }
    }

    pub fn open(path: &Path) -> Result<Self, ProviderError> {
        let file = File::open(path)
            .map_err(|e| ProviderError::Io(format!("{}: {e}", path.display())))?;
        let mut records = Vec::new();
        for (n, line) in BufReader::new(file).lines().enumerate() {
            let line = line.map_err(|e| ProviderError::Io(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: TranscriptRecord = serde_json::from_str(&line).map_err(|e| {
                ProviderError::Io(format!("{}:{}: {e}", path.display(), n + 1))
            })?;
            records.push(record);
        }
        Ok(Self::from_records(records))
    }

    /// Number of completions served so far.
    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }

    /// Entries not yet consumed, across all scopes.
    pub fn remaining(&self) -> usize {
        self.scopes.lock().unwrap().values().map(VecDeque::len).sum()
    }
}

impl ChatProvider for ReplayProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        request.validate()?;
        self.calls.fetch_add(1, Ordering::SeqCst);
        let mut scopes = self.scopes.lock().unwrap();
        let record = scopes
            .get_mut(&request.scope)
            .and_then(VecDeque::pop_front)
            .ok_or_else(|| ProviderError::ReplayExhausted(request.scope.clone()))?;
        let actual = request.digest();
        if record.digest != actual {
            return Err(ProviderError::ReplayMismatch {
                scope: request.scope.clone(),
                expected: record.digest,
                actual,
            });
        }
        Ok(record.response)
    }
}

/// Forwards to `inner` and appends every completed exchange to a JSON-lines
/// transcript, syncing after each record.
pub struct RecordingProvider<P> {
    inner: P,
    out: Mutex<File>,
}

impl<P: ChatProvider> RecordingProvider<P> {
    pub fn create(inner: P, path: &Path) -> Result<Self, ProviderError> {
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| ProviderError::Io(e.to_string()))?;
        }
        let out = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| ProviderError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner,
            out: Mutex::new(out),
        })
    }
}

impl<P: ChatProvider> ChatProvider for RecordingProvider<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        let response = self.inner.complete(request)?;
        let record = TranscriptRecord {
            digest: request.digest(),
            request: request.clone(),
            response: response.clone(),
        };
        let mut line = serde_json::to_string(&record).map_err(|e| ProviderError::Io(e.to_string()))?;
        line.push('\n');
        let mut out = self.out.lock().unwrap();
        out.write_all(line.as_bytes())
            .and_then(|_| out.sync_data())
            .map_err(|e| ProviderError::Io(e.to_string()))?;
        Ok(response)
    }
}
