use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use super::{ChatMessage, ChatProvider, CompletionRequest, ProviderError, Role, ToolCall};

/// Where to reach an OpenAI-compatible chat endpoint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LiveConfig {
    /// Base URL, e.g. `https://api.example.com/v1`.
    pub endpoint: String,
    pub model: String,
    /// Environment variable holding the bearer token.
    #[serde(default = "default_key_env")]
    pub api_key_env: String,
    #[serde(default = "default_timeout")]
    pub timeout_secs: u64,
}

fn default_key_env() -> String {
    "TASKSYNTH_API_KEY".to_string()
}

fn default_timeout() -> u64 {
    600
}

pub struct OpenAiCompatible {
    config: LiveConfig,
    api_key: Option<String>,
    agent: ureq::Agent,
}

impl OpenAiCompatible {
    pub fn new(config: LiveConfig) -> Self {
        let api_key = std::env::var(&config.api_key_env).ok();
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(Duration::from_secs(config.timeout_secs)))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            config,
            api_key,
            agent,
        }
    }
}

pub(crate) fn request_body(model: &str, request: &CompletionRequest) -> Value {
    let messages: Vec<Value> = request
        .messages
        .iter()
        .map(|m| {
            let mut v = json!({"role": m.role.as_str(), "content": m.content});
            if !m.tool_calls.is_empty() {
                v["tool_calls"] = m
                    .tool_calls
                    .iter()
                    .map(|c| {
                        json!({
                            "id": c.id,
                            "type": "function",
                            "function": {"name": c.name, "arguments": c.arguments},
                        })
                    })
                    .collect();
            }
            if let Some(id) = &m.tool_call_id {
                v["tool_call_id"] = json!(id);
            }
            v
        })
        .collect();
    let mut body = json!({"model": model, "messages": messages});
    if !request.tools.is_empty() {
        body["tools"] = request
            .tools
            .iter()
            .map(|t| {
                json!({
                    "type": "function",
                    "function": {
                        "name": t.name,
                        "description": t.description,
                        "parameters": t.parameters,
                    },
                })
            })
            .collect();
    }
    if let Some(t) = request.params.temperature {
        body["temperature"] = json!(t);
    }
    if let Some(n) = request.params.max_tokens {
        body["max_tokens"] = json!(n);
    }
    if let Some(s) = request.params.seed {
        body["seed"] = json!(s);
    }
    body
}

pub(crate) fn parse_response(body: &Value) -> Result<ChatMessage, ProviderError> {
    let message = body
        .pointer("/choices/0/message")
        .ok_or_else(|| ProviderError::Malformed("no choices[0].message".into()))?;
    let content = message
        .get("content")
        .and_then(Value::as_str)
        .unwrap_or_default()
        .to_string();
    let mut calls = Vec::new();
    if let Some(raw) = message.get("tool_calls").and_then(Value::as_array) {
        for c in raw {
            let name = c
                .pointer("/function/name")
                .and_then(Value::as_str)
                .filter(|n| !n.is_empty())
                .ok_or_else(|| ProviderError::Malformed("tool call without a name".into()))?;
            calls.push(ToolCall {
                id: c.get("id").and_then(Value::as_str).unwrap_or_default().to_string(),
                name: name.to_string(),
                arguments: c
                    .pointer("/function/arguments")
                    .and_then(Value::as_str)
                    .unwrap_or("{}")
                    .to_string(),
            });
        }
    }
    Ok(ChatMessage {
        role: Role::Assistant,
        content,
        tool_calls: calls,
        tool_call_id: None,
    })
}

impl ChatProvider for OpenAiCompatible {
    fn complete(&self, request: &CompletionRequest) -> Result<ChatMessage, ProviderError> {
        request.validate()?;
        let url = format!("{}/chat/completions", self.config.endpoint.trim_end_matches('/'));
        let mut call = self.agent.post(&url).header("Content-Type", "application/json");
        if let Some(key) = &self.api_key {
            call = call.header("Authorization", &format!("Bearer {key}"));
        }
        let body = request_body(&self.config.model, request).to_string();
        let mut resp = call
            .send(body.as_str())
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        let status = resp.status().as_u16();
        let text = resp
            .body_mut()
            .read_to_string()
            .map_err(|e| ProviderError::Transport(e.to_string()))?;
        match status {
            200..=299 => {}
            429 => return Err(ProviderError::RateLimited(text)),
            500..=599 => return Err(ProviderError::Transport(format!("HTTP {status}: {text}"))),
            _ => return Err(ProviderError::Rejected(format!("HTTP {status}: {text}"))),
        }
        let value: Value =
            serde_json::from_str(&text).map_err(|e| ProviderError::Malformed(e.to_string()))?;
        parse_response(&value)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::provider::{SamplingParams, ToolSpec};

    #[test]
    fn wire_request_shape() {
        let req = CompletionRequest::new(
            "propose/x",
            vec![
                ChatMessage::user("hi"),
                ChatMessage::assistant_tool_calls(
                    "",
                    vec![ToolCall {
                        id: "c1".into(),
                        name: "search_datasets".into(),
                        arguments: "{\"query\":\"imdb\"}".into(),
                    }],
                ),
                ChatMessage::tool("c1", "results"),
            ],
        )
        .with_tools(vec![ToolSpec {
            name: "search_datasets".into(),
            description: "d".into(),
            parameters: json!({"type": "object"}),
        }])
        .with_params(SamplingParams {
            temperature: Some(1.0),
            ..Default::default()
        });
        let body = request_body("m", &req);
        assert_eq!(body["messages"][1]["tool_calls"][0]["function"]["name"], "search_datasets");
        assert_eq!(body["messages"][2]["tool_call_id"], "c1");
        assert_eq!(body["tools"][0]["type"], "function");
        assert_eq!(body["temperature"], 1.0);
        assert!(body.get("seed").is_none());
    }

    #[test]
    fn wire_response_parsing() {
        let body = json!({"choices": [{"message": {"role": "assistant", "content": null,
            "tool_calls": [{"id": "c9", "type": "function",
                "function": {"name": "search_datasets", "arguments": "{\"query\": \"cifar10\"}"}}]}}]});
        let m = parse_response(&body).unwrap();
        assert_eq!(m.content, "");
        assert_eq!(m.tool_calls[0].id, "c9");
        assert!(parse_response(&json!({"choices": []})).is_err());
    }
}
