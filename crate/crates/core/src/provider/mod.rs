//! Chat-completion abstraction used for every model interaction.
//!
//! Requests carry a `scope` (pipeline stage plus entity id). Replay keeps one
//! cursor per scope, so workers running different tasks never contend for the
//! same position in a transcript.

mod live;
mod transcript;

use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::retry::RetryPolicy;

pub use live::{LiveConfig, OpenAiCompatible};
pub use transcript::{RecordingProvider, ReplayProvider, TranscriptMode, TranscriptRecord};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Role {
    System,
    User,
    Assistant,
    Tool,
}

impl Role {
    pub fn as_str(self) -> &'static str {
        match self {
            Role::System => "system",
            Role::User => "user",
            Role::Assistant => "assistant",
            Role::Tool => "tool",
        }
    }
}

impl fmt::Display for Role {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ToolCall {
    pub id: String,
    pub name: String,
    /// JSON-encoded arguments, as emitted by the model.
    pub arguments: String,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: Role,
    pub content: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tool_calls: Vec<ToolCall>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tool_call_id: Option<String>,
}

impl ChatMessage {
    fn plain(role: Role, content: impl Into<String>) -> Self {
        Self {
            role,
            content: content.into(),
            tool_calls: Vec::new(),
            tool_call_id: None,
        }
    }

    pub fn system(content: impl Into<String>) -> Self {
        Self::plain(Role::System, content)
    }

    pub fn user(content: impl Into<String>) -> Self {
        Self::plain(Role::User, content)
    }

    pub fn assistant(content: impl Into<String>) -> Self {
        Self::plain(Role::Assistant, content)
    }

    pub fn assistant_tool_calls(content: impl Into<String>, calls: Vec<ToolCall>) -> Self {
        Self {
            tool_calls: calls,
            ..Self::plain(Role::Assistant, content)
        }
    }

    pub fn tool(call_id: impl Into<String>, content: impl Into<String>) -> Self {
        Self {
            tool_call_id: Some(call_id.into()),
            ..Self::plain(Role::Tool, content)
        }
    }
}

/// Function-style tool offered to the model.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ToolSpec {
    pub name: String,
    pub description: String,
    pub parameters: Value,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct SamplingParams {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub temperature: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub max_tokens: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CompletionRequest {
    /// Replay partition key, e.g. `propose/image_classification`.
    pub scope: String,
    pub messages: Vec<ChatMessage>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tools: Vec<ToolSpec>,
    #[serde(default)]
    pub params: SamplingParams,
}

impl CompletionRequest {
    pub fn new(scope: impl Into<String>, messages: Vec<ChatMessage>) -> Self {
        Self {
            scope: scope.into(),
            messages,
            tools: Vec::new(),
            params: SamplingParams::default(),
        }
    }

    pub fn with_tools(mut self, tools: Vec<ToolSpec>) -> Self {
        self.tools = tools;
        self
    }

    pub fn with_params(mut self, params: SamplingParams) -> Self {
        self.params = params;
        self
    }

    /// Stable replay key over message roles and contents, tool names and
    /// sampling parameters. The scope is not part of the digest.
    pub fn digest(&self) -> String {
        let canonical = json!({
            "messages": self
                .messages
                .iter()
                .map(|m| json!([m.role.as_str(), m.content]))
                .collect::<Vec<_>>(),
            "tools": self.tools.iter().map(|t| t.name.as_str()).collect::<Vec<_>>(),
            "params": self.params,
        });
        let bytes = serde_json::to_vec(&canonical).expect("canonical request serializes");
        hex::encode(Sha256::digest(bytes))
    }

    pub fn validate(&self) -> Result<(), ProviderError> {
        if self.messages.is_empty() {
            return Err(ProviderError::InvalidRequest("messages must not be empty".into()));
        }
        for (i, m) in self.messages.iter().enumerate() {
            if m.role == Role::System && i != 0 {
                return Err(ProviderError::InvalidRequest(format!(
                    "system message at position {i}; only the first message may be system"
                )));
            }
            if m.role == Role::Tool && m.tool_call_id.is_none() {
                return Err(ProviderError::InvalidRequest(format!(
                    "tool message at position {i} has no tool_call_id"
                )));
            }
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum ProviderError {
    #[error("invalid request: {0}")]
    InvalidRequest(String),
    #[error("transport error: {0}")]
    Transport(String),
    #[error("rate limited: {0}")]
    RateLimited(String),
    #[error("provider rejected the request: {0}")]
    Rejected(String),
    #[error("malformed provider response: {0}")]
    Malformed(String),
    #[error("replay mismatch in scope `{scope}`: expected digest {expected}, got {actual}")]
    ReplayMismatch {
        scope: String,
        expected: String,
        actual: String,
    },
    #[error("replay transcript has no more entries for scope `{0}`")]
    ReplayExhausted(String),
    #[error("transcript I/O: {0}")]
    Io(String),
}

impl ProviderError {
    pub fn is_retryable(&self) -> bool {
        matches!(self, ProviderError::Transport(_) | ProviderError::RateLimited(_))
    }

    /// Errors that mean the run itself is broken, not just this one call.
    pub fn is_fatal(&self) -> bool {
        matches!(
            self,
            ProviderError::ReplayMismatch { .. }
                | ProviderError::ReplayExhausted(_)
                | ProviderError::Io(_)
        )
    }
}

pub trait ChatProvider: Send + Sync {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError>;
}

impl<P: ChatProvider + ?Sized> ChatProvider for &P {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for std::sync::Arc<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        (**self).complete(request)
    }
}

impl<P: ChatProvider + ?Sized> ChatProvider for Box<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        (**self).complete(request)
    }
}

/// Retries transport failures and rate limits with bounded backoff.
pub struct Retrying<P> {
    inner: P,
    policy: RetryPolicy,
}

impl<P: ChatProvider> Retrying<P> {
    pub fn new(inner: P, policy: RetryPolicy) -> Self {
        Self { inner, policy }
    }
}

impl<P: ChatProvider> ChatProvider for Retrying<P> {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        request.validate()?;
        self.policy
            .run(|| self.inner.complete(request), ProviderError::is_retryable)
    }
}

/// Hands out canned responses per scope, in order, and keeps every request.
/// Meant for tests that do not care about digests.
#[derive(Default)]
pub struct ScriptedProvider {
    queues: Mutex<HashMap<String, VecDeque<Result<ChatMessage, ProviderError>>>>,
    log: Mutex<Vec<CompletionRequest>>,
}

impl ScriptedProvider {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, scope: &str, response: ChatMessage) -> &Self {
        self.push_result(scope, Ok(response))
    }

    pub fn push_text(&self, scope: &str, text: &str) -> &Self {
        self.push(scope, ChatMessage::assistant(text))
    }

    pub fn push_result(&self, scope: &str, response: Result<ChatMessage, ProviderError>) -> &Self {
        self.queues
            .lock()
            .unwrap()
            .entry(scope.to_string())
            .or_default()
            .push_back(response);
        self
    }

    pub fn requests(&self) -> Vec<CompletionRequest> {
        self.log.lock().unwrap().clone()
    }

    pub fn calls(&self) -> usize {
        self.log.lock().unwrap().len()
    }
}

impl ChatProvider for ScriptedProvider {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        request.validate()?;
        self.log.lock().unwrap().push(request.clone());
        self.queues
            .lock()
            .unwrap()
            .get_mut(&request.scope)
            .and_then(VecDeque::pop_front)
            .unwrap_or_else(|| Err(ProviderError::ReplayExhausted(request.scope.clone())))
    }
}
