//! Dataset hub client: search, closest-match resolution and row samples for
//! enriching proposals.
//!
//! All HTTP goes through a [`HubTransport`]. [`CachedTransport`] keeps every
//! response in a JSON-lines file keyed by URL, so a replayed run issues no
//! live requests at all.

use std::collections::{BTreeSet, HashMap};
use std::fs::{File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::Value;
use thiserror::Error;
use url::Url;

use crate::retry::RetryPolicy;

pub const DEFAULT_API_BASE: &str = "https://huggingface.co";
pub const DEFAULT_ROWS_BASE: &str = "https://datasets-server.huggingface.co";

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum HubError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("hub transport error: {0}")]
    Transport(String),
    #[error("malformed hub response: {0}")]
    MalformedResponse(String),
    #[error("dataset `{0}` not found")]
    NotFound(String),
    #[error("dataset `{0}` is gated; rows are not accessible")]
    GatedDataset(String),
    #[error("offline and no cached response for {0}")]
    NotCached(String),
    #[error("hub cache I/O: {0}")]
    Io(String),
}

impl HubError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, HubError::Transport(_))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HttpReply {
    pub status: u16,
    pub body: String,
}

pub trait HubTransport: Send + Sync {
    fn get(&self, url: &str) -> Result<HttpReply, HubError>;
}

pub struct LiveTransport {
    agent: ureq::Agent,
    token: Option<String>,
}

impl LiveTransport {
    pub fn new(timeout: Duration, token: Option<String>) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self { agent, token }
    }
}

impl HubTransport for LiveTransport {
    fn get(&self, url: &str) -> Result<HttpReply, HubError> {
        let mut req = self.agent.get(url);
        if let Some(t) = &self.token {
            req = req.header("Authorization", &format!("Bearer {t}"));
        }
        let mut resp = req.call().map_err(|e| HubError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let body = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| HubError::Transport(e.to_string()))?;
        Ok(HttpReply { status, body })
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
struct CacheLine {
    url: String,
    status: u16,
    body: String,
}

/// URL-keyed response cache in front of an optional live transport.
pub struct CachedTransport {
    inner: Option<Box<dyn HubTransport>>,
    cache: Mutex<HashMap<String, HttpReply>>,
    sink: Option<Mutex<File>>,
    live_calls: AtomicUsize,
}

impl CachedTransport {
    /// Cache-only: a miss is an error.
    pub fn offline(path: &Path) -> Result<Self, HubError> {
        Ok(Self {
            inner: None,
            cache: Mutex::new(load_cache(path)?),
            sink: None,
            live_calls: AtomicUsize::new(0),
        })
    }

    /// Misses go to `inner` and are appended to the cache file.
    pub fn read_through(inner: Box<dyn HubTransport>, path: &Path) -> Result<Self, HubError> {
        let cache = load_cache(path)?;
        if let Some(parent) = path.parent() {
            std::fs::create_dir_all(parent).map_err(|e| HubError::Io(e.to_string()))?;
        }
        let sink = OpenOptions::new()
            .create(true)
            .append(true)
            .open(path)
            .map_err(|e| HubError::Io(format!("{}: {e}", path.display())))?;
        Ok(Self {
            inner: Some(inner),
            cache: Mutex::new(cache),
            sink: Some(Mutex::new(sink)),
            live_calls: AtomicUsize::new(0),
        })
    }

    pub fn live_calls(&self) -> usize {
        self.live_calls.load(Ordering::SeqCst)
    }
}

fn load_cache(path: &Path) -> Result<HashMap<String, HttpReply>, HubError> {
    let mut map = HashMap::new();
    let file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(map),
        Err(e) => return Err(HubError::Io(format!("{}: {e}", path.display()))),
    };
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line.map_err(|e| HubError::Io(e.to_string()))?;
        if line.trim().is_empty() {
            continue;
        }
        let entry: CacheLine = serde_json::from_str(&line)
            .map_err(|e| HubError::Io(format!("{}:{}: {e}", path.display(), n + 1)))?;
        map.insert(
            entry.url,
            HttpReply {
                status: entry.status,
                body: entry.body,
            },
        );
    }
    Ok(map)
}

impl HubTransport for CachedTransport {
    fn get(&self, url: &str) -> Result<HttpReply, HubError> {
        if let Some(hit) = self.cache.lock().unwrap().get(url) {
            return Ok(hit.clone());
        }
        let inner = self
            .inner
            .as_ref()
            .ok_or_else(|| HubError::NotCached(url.to_string()))?;
        self.live_calls.fetch_add(1, Ordering::SeqCst);
        let reply = inner.get(url)?;
        let transient = reply.status == 429 || reply.status >= 500;
        if !transient {
            if let Some(sink) = &self.sink {
                let line = serde_json::to_string(&CacheLine {
                    url: url.to_string(),
                    status: reply.status,
                    body: reply.body.clone(),
                })
                .map_err(|e| HubError::Io(e.to_string()))?;
                let mut f = sink.lock().unwrap();
                writeln!(f, "{line}").map_err(|e| HubError::Io(e.to_string()))?;
            }
            self.cache
                .lock()
                .unwrap()
                .insert(url.to_string(), reply.clone());
        }
        Ok(reply)
    }
}

/// In-memory transport; unknown URLs answer 404. Counts every request.
#[derive(Default)]
pub struct StaticTransport {
    replies: Mutex<HashMap<String, HttpReply>>,
    calls: AtomicUsize,
}

impl StaticTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&self, url: impl Into<String>, status: u16, body: impl Into<String>) -> &Self {
        self.replies.lock().unwrap().insert(
            url.into(),
            HttpReply {
                status,
                body: body.into(),
            },
        );
        self
    }

    pub fn calls(&self) -> usize {
        self.calls.load(Ordering::SeqCst)
    }
}

impl HubTransport for StaticTransport {
    fn get(&self, url: &str) -> Result<HttpReply, HubError> {
        self.calls.fetch_add(1, Ordering::SeqCst);
        Ok(self.replies.lock().unwrap().get(url).cloned().unwrap_or(HttpReply {
            status: 404,
            body: "{\"error\": \"not found\"}".into(),
        }))
    }
}

/// Spaces requests at least `min_interval` apart across all threads.
struct RateLimiter {
    min_interval: Duration,
    next: Mutex<Instant>,
}

impl RateLimiter {
    fn new(requests_per_second: Option<f64>) -> Self {
        let min_interval = requests_per_second
            .filter(|r| *r > 0.0)
            .map(|r| Duration::from_secs_f64(1.0 / r))
            .unwrap_or_default();
        Self {
            min_interval,
            next: Mutex::new(Instant::now()),
        }
    }

    fn acquire(&self) {
        if self.min_interval.is_zero() {
            return;
        }
        let wait = {
            let mut next = self.next.lock().unwrap();
            let now = Instant::now();
            let slot = (*next).max(now);
            *next = slot + self.min_interval;
            slot - now
        };
        if !wait.is_zero() {
            std::thread::sleep(wait);
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetHit {
    pub id: String,
    #[serde(default)]
    pub downloads: u64,
    #[serde(default)]
    pub likes: u64,
    #[serde(default)]
    pub tags: Vec<String>,
}

impl DatasetHit {
    /// Part after the owner prefix.
    pub fn name(&self) -> &str {
        self.id.rsplit('/').next().unwrap_or(&self.id)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Feature {
    pub name: String,
    pub dtype: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSample {
    pub id: String,
    pub features: Vec<Feature>,
    pub example_rows: Vec<Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HubSettings {
    pub api_base: String,
    pub rows_base: String,
    pub search_limit: usize,
    pub max_cell_chars: usize,
    pub requests_per_second: Option<f64>,
    pub retry: RetryPolicy,
}

impl Default for HubSettings {
    fn default() -> Self {
        Self {
            api_base: DEFAULT_API_BASE.to_string(),
            rows_base: DEFAULT_ROWS_BASE.to_string(),
            search_limit: 5,
            max_cell_chars: 500,
            requests_per_second: None,
            retry: RetryPolicy::default(),
        }
    }
}

pub const ELISION: &str = "...";

#[derive(Clone)]
pub struct HubClient {
    transport: Arc<dyn HubTransport>,
    settings: HubSettings,
    limiter: Arc<RateLimiter>,
}

impl HubClient {
    pub fn new(transport: Arc<dyn HubTransport>, settings: HubSettings) -> Self {
        let limiter = Arc::new(RateLimiter::new(settings.requests_per_second));
        Self {
            transport,
            settings,
            limiter,
        }
    }

    pub fn settings(&self) -> &HubSettings {
        &self.settings
    }

    pub fn search_url(&self, query: &str, limit: usize) -> String {
        let limit = limit.to_string();
        build_url(
            &self.settings.api_base,
            "/api/datasets",
            &[("search", query.trim()), ("limit", &limit)],
        )
    }

    pub fn splits_url(&self, id: &str) -> String {
        build_url(&self.settings.rows_base, "/splits", &[("dataset", id)])
    }

    pub fn first_rows_url(&self, id: &str, config: &str, split: &str) -> String {
        build_url(
            &self.settings.rows_base,
            "/first-rows",
            &[("dataset", id), ("config", config), ("split", split)],
        )
    }

    fn fetch_json(&self, url: &str, dataset: &str) -> Result<Value, HubError> {
        let reply = self.settings.retry.run(
            || {
                self.limiter.acquire();
                let reply = self.transport.get(url)?;
                if reply.status == 429 || reply.status >= 500 {
                    return Err(HubError::Transport(format!("HTTP {} from {url}", reply.status)));
                }
                Ok(reply)
            },
            HubError::is_retryable,
        )?;
        let gated = reply.body.to_lowercase().contains("gated");
        match reply.status {
            200..=299 => {}
            401 | 403 => return Err(HubError::GatedDataset(dataset.to_string())),
            404 if gated => return Err(HubError::GatedDataset(dataset.to_string())),
            404 => return Err(HubError::NotFound(dataset.to_string())),
            s if gated => {
                tracing::debug!(status = s, "gated response");
                return Err(HubError::GatedDataset(dataset.to_string()));
            }
            s => return Err(HubError::MalformedResponse(format!("HTTP {s} from {url}"))),
        }
        serde_json::from_str(&reply.body).map_err(|e| HubError::MalformedResponse(e.to_string()))
    }

    pub fn search_datasets(&self, query: &str, limit: usize) -> Result<Vec<DatasetHit>, HubError> {
        if query.trim().is_empty() {
            return Err(HubError::InvalidArgument("search query is empty".into()));
        }
        if limit == 0 {
            return Err(HubError::InvalidArgument("limit must be positive".into()));
        }
        let url = self.search_url(query, limit);
        let value = match self.fetch_json(&url, query) {
            Err(HubError::NotFound(_)) => return Ok(Vec::new()),
            other => other?,
        };
        let items = value
            .as_array()
            .ok_or_else(|| HubError::MalformedResponse("search result is not an array".into()))?;
        let mut hits = Vec::with_capacity(items.len().min(limit));
        for item in items.iter().take(limit) {
            let hit: DatasetHit = serde_json::from_value(item.clone())
                .map_err(|e| HubError::MalformedResponse(format!("search hit: {e}")))?;
            if hit.id.is_empty() {
                return Err(HubError::MalformedResponse("search hit with empty id".into()));
            }
            hits.push(hit);
        }
        Ok(hits)
    }

    /// Top search hit, if it is similar enough to what the model proposed.
    pub fn resolve_closest_match(&self, proposed: &str) -> Result<Option<DatasetHit>, HubError> {
        if proposed.trim().is_empty() {
            return Err(HubError::InvalidArgument("proposed dataset is empty".into()));
        }
        let hits = self.search_datasets(proposed, self.settings.search_limit.max(1))?;
        Ok(hits.into_iter().next().filter(|top| is_close_match(top, proposed)))
    }

    pub fn fetch_sample(&self, id: &str, max_rows: usize) -> Result<DatasetSample, HubError> {
        if id.trim().is_empty() {
            return Err(HubError::InvalidArgument("dataset id is empty".into()));
        }
        if max_rows == 0 {
            return Err(HubError::InvalidArgument("max_rows must be positive".into()));
        }
        let splits_url = self.splits_url(id);
        let splits = self.fetch_json(&splits_url, id)?;
        let entries = splits
            .get("splits")
            .and_then(Value::as_array)
            .filter(|s| !s.is_empty())
            .ok_or_else(|| HubError::MalformedResponse(format!("no splits listed for `{id}`")))?;
        let chosen = entries
            .iter()
            .find(|s| s.get("split").and_then(Value::as_str) == Some("train"))
            .unwrap_or(&entries[0]);
        let field = |k: &str| {
            chosen
                .get(k)
                .and_then(Value::as_str)
                .ok_or_else(|| HubError::MalformedResponse(format!("split entry without `{k}`")))
        };
        let (config, split) = (field("config")?, field("split")?);
        let rows_url = self.first_rows_url(id, config, split);
        let body = self.fetch_json(&rows_url, id)?;
        let features = body
            .get("features")
            .and_then(Value::as_array)
            .map(|fs| {
                fs.iter()
                    .filter_map(|f| {
                        Some(Feature {
                            name: f.get("name")?.as_str()?.to_string(),
                            dtype: type_label(f.get("type").unwrap_or(&Value::Null)),
                        })
                    })
                    .collect()
            })
            .unwrap_or_default();
        let example_rows = body
            .get("rows")
            .and_then(Value::as_array)
            .map(|rows| {
                rows.iter()
                    .filter_map(|r| r.get("row"))
                    .take(max_rows)
                    .map(|row| truncate_row(row, self.settings.max_cell_chars))
                    .collect()
            })
            .unwrap_or_default();
        Ok(DatasetSample {
            id: id.to_string(),
            features,
            example_rows,
        })
    }
}

fn build_url(base: &str, path: &str, params: &[(&str, &str)]) -> String {
    let base = format!("{}{}", base.trim_end_matches('/'), path);
    Url::parse_with_params(&base, params)
        .map(String::from)
        .unwrap_or(base)
}

fn type_label(t: &Value) -> String {
    match t {
        Value::Object(o) => {
            if let Some(d) = o.get("dtype").and_then(Value::as_str) {
                d.to_string()
            } else if let Some(k) = o.get("_type").and_then(Value::as_str) {
                k.to_string()
            } else {
                "struct".to_string()
            }
        }
        Value::Array(_) => "list".to_string(),
        _ => "unknown".to_string(),
    }
}

fn cap_chars(s: &str, cap: usize) -> Option<String> {
    if s.chars().count() <= cap {
        return None;
    }
    let mut out: String = s.chars().take(cap).collect();
    out.push_str(ELISION);
    Some(out)
}

/// Caps every top-level cell of a row at `cap` characters.
pub fn truncate_row(row: &Value, cap: usize) -> Value {
    let Some(obj) = row.as_object() else {
        return row.clone();
    };
    let capped = obj
        .iter()
        .map(|(k, v)| {
            let v = match v {
                Value::String(s) => cap_chars(s, cap).map(Value::String).unwrap_or_else(|| v.clone()),
                Value::Array(_) | Value::Object(_) => cap_chars(&v.to_string(), cap)
                    .map(Value::String)
                    .unwrap_or_else(|| v.clone()),
                _ => v.clone(),
            };
            (k.clone(), v)
        })
        .collect();
    Value::Object(capped)
}

fn normalize(s: &str) -> String {
    s.to_lowercase()
        .chars()
        .map(|c| if c.is_alphanumeric() { c } else { ' ' })
        .collect::<String>()
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
}

fn jaccard(a: &str, b: &str) -> f64 {
    let ta: BTreeSet<&str> = a.split(' ').filter(|t| !t.is_empty()).collect();
    let tb: BTreeSet<&str> = b.split(' ').filter(|t| !t.is_empty()).collect();
    let union = ta.union(&tb).count();
    if union == 0 {
        return 0.0;
    }
    ta.intersection(&tb).count() as f64 / union as f64
}

/// Exact normalized match, containment, or token Jaccard >= 0.5 against
/// either the bare name or the full id.
pub fn is_close_match(hit: &DatasetHit, proposed: &str) -> bool {
    let p = normalize(proposed);
    let p_compact = p.replace(' ', "");
    if p_compact.is_empty() {
        return false;
    }
    [hit.name(), hit.id.as_str()].into_iter().any(|candidate| {
        let c = normalize(candidate);
        let c_compact = c.replace(' ', "");
        !c_compact.is_empty()
            && (c == p
                || c_compact == p_compact
                || c_compact.contains(&p_compact)
                || p_compact.contains(&c_compact)
                || jaccard(&c, &p) >= 0.5)
    })
}
