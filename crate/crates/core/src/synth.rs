//! Topic sampling and the proposal tool-loop that turns a topic into a
//! dataset-grounded task proposal, or a discard.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::hfhub::{DatasetSample, HubClient, HubError};
use crate::jsonx::{find_json_array, find_json_object, python_dumps};
use crate::prompts;
use crate::provider::{
    ChatMessage, ChatProvider, CompletionRequest, ProviderError, SamplingParams, ToolCall, ToolSpec,
};
use crate::schema::TaskProposal;

pub const SEARCH_TOOL: &str = "search_datasets";

#[derive(Debug, Error)]
pub enum SynthError {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error(transparent)]
    Provider(#[from] ProviderError),
    #[error(transparent)]
    Hub(#[from] HubError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SynthSettings {
    pub topics_per_round: usize,
    /// Defaults to `2 * ceil(n / topics_per_round) + 1` when unset.
    pub max_topic_rounds: Option<usize>,
    pub max_tool_calls: usize,
    pub max_nudges: usize,
    pub sample_rows: usize,
    pub params: SamplingParams,
}

impl Default for SynthSettings {
    fn default() -> Self {
        Self {
            topics_per_round: 20,
            max_topic_rounds: None,
            max_tool_calls: 4,
            max_nudges: 2,
            sample_rows: 3,
            params: SamplingParams::default(),
        }
    }
}

/// Lowercase with whitespace collapsed; the key topics are deduplicated on.
pub fn normalize_topic(topic: &str) -> String {
    topic
        .split_whitespace()
        .collect::<Vec<_>>()
        .join(" ")
        .to_lowercase()
}

/// Filesystem- and scope-safe identifier for a topic.
pub fn topic_slug(topic: &str) -> String {
    let mut slug = String::new();
    for c in normalize_topic(topic).chars() {
        if c.is_ascii_alphanumeric() {
            slug.push(c);
        } else if !slug.ends_with('_') {
            slug.push('_');
        }
    }
    let slug = slug.trim_matches('_');
    let slug: String = slug.chars().take(64).collect();
    if slug.is_empty() {
        "topic".to_string()
    } else {
        slug
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TopicBatch {
    pub topics: Vec<String>,
    pub source_round: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum DiscardReason {
    NoDatasetMatch,
    NoValidJson,
    ToolLoopExhausted,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EnrichedProposal {
    /// Topic as sampled; the proposal's own topic may differ slightly.
    pub original_topic: String,
    pub proposal: Option<TaskProposal>,
    pub resolved_dataset: Option<DatasetSample>,
    pub discard_reason: Option<DiscardReason>,
}

impl EnrichedProposal {
    fn discarded(topic: &str, proposal: Option<TaskProposal>, reason: DiscardReason) -> Self {
        Self {
            original_topic: topic.to_string(),
            proposal,
            resolved_dataset: None,
            discard_reason: Some(reason),
        }
    }

    pub fn is_discarded(&self) -> bool {
        self.discard_reason.is_some()
    }

    pub fn is_dataset_free(&self) -> bool {
        self.proposal.as_ref().is_some_and(|p| p.dataset.is_none())
    }

    /// Either discarded, or a proposal whose dataset is resolved or absent.
    pub fn is_sound(&self) -> bool {
        match (&self.discard_reason, &self.proposal) {
            (Some(_), _) => true,
            (None, None) => false,
            (None, Some(p)) => p.dataset.is_none() || self.resolved_dataset.is_some(),
        }
    }
}

pub fn search_tool_spec() -> ToolSpec {
    ToolSpec {
        name: SEARCH_TOOL.to_string(),
        description: "Search the HuggingFace datasets API. Returns matching dataset ids.".to_string(),
        parameters: json!({
            "type": "object",
            "properties": {
                "query": {"type": "string", "description": "Dataset name or short search query."}
            },
            "required": ["query"],
        }),
    }
}

fn parse_topic_list(text: &str) -> Option<Vec<String>> {
    let Value::Array(items) = find_json_array(text)? else {
        return None;
    };
    items
        .into_iter()
        .map(|v| match v {
            Value::String(s) if !s.trim().is_empty() => Some(s.trim().to_string()),
            _ => None,
        })
        .collect()
}

pub struct Synthesizer<'a, P: ?Sized> {
    provider: &'a P,
    hub: &'a HubClient,
    settings: SynthSettings,
}

impl<'a, P: ChatProvider + ?Sized> Synthesizer<'a, P> {
    pub fn new(provider: &'a P, hub: &'a HubClient, settings: SynthSettings) -> Self {
        Self {
            provider,
            hub,
            settings,
        }
    }

    pub fn sample_topics(&self, n: usize) -> Result<Vec<String>, SynthError> {
        Ok(self
            .sample_topic_batches(n)?
            .into_iter()
            .flat_map(|b| b.topics)
            .take(n)
            .collect())
    }

    /// New distinct topics per round. Rounds whose reply is not a JSON array
    /// of strings are skipped but still count against the round budget.
    pub fn sample_topic_batches(&self, n: usize) -> Result<Vec<TopicBatch>, SynthError> {
        if n == 0 {
            return Err(SynthError::InvalidArgument("n must be at least 1".into()));
        }
        let per_round = self.settings.topics_per_round.max(1);
        let max_rounds = self
            .settings
            .max_topic_rounds
            .unwrap_or(2 * n.div_ceil(per_round) + 1);
        let mut seen = HashSet::new();
        let mut all: Vec<String> = Vec::new();
        let mut batches = Vec::new();
        for round in 0..max_rounds {
            if all.len() >= n {
                break;
            }
            let request = CompletionRequest::new(
                "topics",
                vec![ChatMessage::user(prompts::topic_sampling(&all))],
            )
            .with_params(self.settings.params);
            let reply = self.provider.complete(&request)?;
            let Some(list) = parse_topic_list(&reply.content) else {
                tracing::warn!(round, "topic reply is not a JSON array of strings; skipping");
                continue;
            };
            let fresh: Vec<String> = list
                .into_iter()
                .filter(|t| seen.insert(normalize_topic(t)))
                .collect();
            all.extend(fresh.iter().cloned());
            batches.push(TopicBatch {
                topics: fresh,
                source_round: round,
            });
        }
        if all.len() < n {
            tracing::warn!(wanted = n, got = all.len(), "topic sampling saturated");
        }
        Ok(batches)
    }

    fn run_search(&self, call: &ToolCall) -> ChatMessage {
        let query = serde_json::from_str::<Value>(&call.arguments)
            .ok()
            .and_then(|v| v.get("query").and_then(Value::as_str).map(str::to_string));
        let content = match query {
            None => prompts::tool_result_followup(
                "",
                &python_dumps(&json!({"error": "arguments must be a JSON object with a `query` string"})),
            ),
            Some(q) => {
                let results = match self.hub.search_datasets(&q, self.hub.settings().search_limit) {
                    Ok(hits) => Value::Array(
                        hits.iter()
                            .map(|h| json!({"id": h.id, "downloads": h.downloads, "likes": h.likes}))
                            .collect(),
                    ),
                    Err(e) => json!({"error": e.to_string()}),
                };
                prompts::tool_result_followup(&q, &python_dumps(&results))
            }
        };
        ChatMessage::tool(call.id.clone(), content)
    }

    /// Runs the proposal tool-loop for one topic. Model misbehaviour becomes
    /// a discard; only provider failures are returned as errors.
    pub fn propose_task(&self, topic: &str) -> Result<EnrichedProposal, SynthError> {
        if topic.trim().is_empty() {
            return Err(SynthError::InvalidArgument("topic is empty".into()));
        }
        let scope = format!("propose/{}", topic_slug(topic));
        let tools = vec![search_tool_spec()];
        let mut messages = vec![ChatMessage::user(prompts::task_proposal(topic))];
        let (mut tool_rounds, mut nudges) = (0, 0);
        loop {
            let request = CompletionRequest::new(scope.clone(), messages.clone())
                .with_tools(tools.clone())
                .with_params(self.settings.params);
            let reply = self.provider.complete(&request)?;
            messages.push(reply.clone());

            if !reply.tool_calls.is_empty() {
                if tool_rounds >= self.settings.max_tool_calls {
                    return Ok(EnrichedProposal::discarded(
                        topic,
                        None,
                        DiscardReason::ToolLoopExhausted,
                    ));
                }
                tool_rounds += 1;
                for call in &reply.tool_calls {
                    messages.push(self.run_search(call));
                }
                continue;
            }

            if let Some(proposal) =
                find_json_object(&reply.content).and_then(|v| TaskProposal::from_json(&v).ok())
            {
                return Ok(EnrichedProposal {
                    original_topic: topic.to_string(),
                    proposal: Some(proposal),
                    resolved_dataset: None,
                    discard_reason: None,
                });
            }
            if nudges >= self.settings.max_nudges {
                return Ok(EnrichedProposal::discarded(topic, None, DiscardReason::NoValidJson));
            }
            nudges += 1;
            messages.push(ChatMessage::user(prompts::json_nudge()));
        }
    }

    /// Resolves the proposed dataset against the hub and attaches a sample.
    pub fn enrich(
        &self,
        original_topic: &str,
        proposal: TaskProposal,
    ) -> Result<EnrichedProposal, SynthError> {
        let Some(wanted) = proposal.dataset.clone() else {
            return Ok(EnrichedProposal {
                original_topic: original_topic.to_string(),
                proposal: Some(proposal),
                resolved_dataset: None,
                discard_reason: None,
            });
        };
        let Some(hit) = self.hub.resolve_closest_match(&wanted)? else {
            return Ok(EnrichedProposal::discarded(
                original_topic,
                Some(proposal),
                DiscardReason::NoDatasetMatch,
            ));
        };
        let sample = match self.hub.fetch_sample(&hit.id, self.settings.sample_rows.max(1)) {
            Ok(s) => s,
            Err(HubError::GatedDataset(_)) => {
                tracing::info!(dataset = %hit.id, "gated dataset; keeping it without rows");
                DatasetSample {
                    id: hit.id.clone(),
                    features: Vec::new(),
                    example_rows: Vec::new(),
                }
            }
            Err(HubError::NotFound(_)) => {
                return Ok(EnrichedProposal::discarded(
                    original_topic,
                    Some(proposal),
                    DiscardReason::NoDatasetMatch,
                ))
            }
            Err(e) => return Err(e.into()),
        };
        Ok(EnrichedProposal {
            original_topic: original_topic.to_string(),
            proposal: Some(proposal),
            resolved_dataset: Some(sample),
            discard_reason: None,
        })
    }

    /// `propose_task` followed by `enrich` when a proposal came back.
    pub fn propose_and_enrich(&self, topic: &str) -> Result<EnrichedProposal, SynthError> {
        let proposed = self.propose_task(topic)?;
        match proposed.proposal {
            Some(p) if proposed.discard_reason.is_none() => self.enrich(topic, p),
            _ => Ok(proposed),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hfhub::{HubSettings, StaticTransport};
    use crate::provider::ScriptedProvider;
    use crate::retry::RetryPolicy;
    use std::sync::Arc;

    fn hub() -> (Arc<StaticTransport>, HubClient) {
        let t = Arc::new(StaticTransport::new());
        let c = HubClient::new(
            t.clone(),
            HubSettings {
                retry: RetryPolicy::immediate(1),
                ..Default::default()
            },
        );
        (t, c)
    }

    fn topics_json(range: std::ops::Range<usize>) -> String {
        serde_json::to_string(&range.map(|i| format!("Topic {i}")).collect::<Vec<_>>()).unwrap()
    }

    #[test]
    fn twenty_distinct_topics_in_one_round() {
        let (_, hub) = hub();
        let p = ScriptedProvider::new();
        p.push_text("topics", &topics_json(0..20));
        let s = Synthesizer::new(&p, &hub, SynthSettings::default());
        let topics = s.sample_topics(20).unwrap();
        assert_eq!(topics, (0..20).map(|i| format!("Topic {i}")).collect::<Vec<_>>());
        assert_eq!(p.calls(), 1);
    }

    #[test]
    fn single_topic_uses_one_call() {
        let (_, hub) = hub();
        let p = ScriptedProvider::new();
        p.push_text("topics", &topics_json(0..20));
        let s = Synthesizer::new(&p, &hub, SynthSettings::default());
        assert_eq!(s.sample_topics(1).unwrap().len(), 1);
        assert_eq!(p.calls(), 1);
    }

    #[test]
    fn overlapping_rounds_reach_fifty_in_three() {
        let (_, hub) = hub();
        let p = ScriptedProvider::new();
        // each round repeats 5 topics from the previous one
        p.push_text("topics", &topics_json(0..20))
            .push_text("topics", &topics_json(15..35))
            .push_text("topics", &topics_json(30..50));
        let s = Synthesizer::new(&p, &hub, SynthSettings::default());
        let batches = s.sample_topic_batches(50).unwrap();
        let topics: Vec<_> = batches.iter().flat_map(|b| b.topics.clone()).collect();
        let oracle: HashSet<String> = (0..20).chain(15..35).chain(30..50).map(|i| format!("topic {i}")).collect();
        assert_eq!(topics.len(), 50);
        assert_eq!(topics.iter().map(|t| normalize_topic(t)).collect::<HashSet<_>>(), oracle);
        assert_eq!(p.calls(), 3);
        assert_eq!(batches[1].topics.len(), 15);
        // later prompts carry the topics already seen
        let third = &p.requests()[2].messages[0].content;
        assert!(third.contains("Previous examples:") && third.contains("Topic 34"));
    }

    #[test]
    fn unparseable_round_is_skipped_and_dedup_is_normalized() {
        let (_, hub) = hub();
        let p = ScriptedProvider::new();
        p.push_text("topics", "Sorry, here are some ideas: GANs, VAEs")
            .push_text("topics", r#"["Graph  Neural Networks", "graph neural networks", "Diffusion"]"#);
        let s = Synthesizer::new(
            &p,
            &hub,
            SynthSettings {
                max_topic_rounds: Some(2),
                ..Default::default()
            },
        );
        let topics = s.sample_topics(5).unwrap();
        assert_eq!(topics, vec!["Graph  Neural Networks", "Diffusion"]);
        assert!(matches!(s.sample_topics(0), Err(SynthError::InvalidArgument(_))));
    }

    const IMDB_JSON: &str = r#"{"topic": "Sentiment Analysis", "metric": "Accuracy", "description": "Predict the sentiment (positive/negative) of movie reviews.", "dataset": "imdb"}"#;

    #[test]
    fn proposal_from_final_json() {
        let (_, hub) = hub();
        let p = ScriptedProvider::new();
        p.push_text("propose/sentiment_analysis", IMDB_JSON);
        let s = Synthesizer::new(&p, &hub, SynthSettings::default());
        let out = s.propose_task("Sentiment Analysis").unwrap();
        let prop = out.proposal.unwrap();
        assert_eq!(prop.metric, "Accuracy");
        assert_eq!(prop.dataset.as_deref(), Some("imdb"));
        assert!(out.discard_reason.is_none());
        assert_eq!(p.requests()[0].tools[0].name, SEARCH_TOOL);
    }

    #[test]
    fn nudges_then_discard() {
        let (_, hub) = hub();
        let p = ScriptedProvider::new();
        for _ in 0..3 {
            p.push_text("propose/x", "Let me think about it.");
        }
        let s = Synthesizer::new(&p, &hub, SynthSettings::default());
        let out = s.propose_task("x").unwrap();
        assert_eq!(out.discard_reason, Some(DiscardReason::NoValidJson));
        assert_eq!(p.calls(), 3);
        let last = p.requests().pop().unwrap();
        assert_eq!(last.messages.last().unwrap().content, prompts::json_nudge());
    }

    #[test]
    fn tool_loop_relays_search_results() {
        let (t, hub) = hub();
        t.insert(hub.search_url("imdb", 5), 200, r#"[{"id": "stanfordnlp/imdb", "downloads": 9, "likes": 1}]"#);
        let p = ScriptedProvider::new();
        let call = ToolCall {
            id: "c1".into(),
            name: SEARCH_TOOL.into(),
            arguments: r#"{"query": "imdb"}"#.into(),
        };
        p.push("propose/sentiment_analysis", ChatMessage::assistant_tool_calls("", vec![call]))
            .push_text("propose/sentiment_analysis", IMDB_JSON);
        let s = Synthesizer::new(&p, &hub, SynthSettings::default());
        s.propose_task("Sentiment Analysis").unwrap();
        let second = &p.requests()[1];
        let tool_msg = second.messages.last().unwrap();
        assert_eq!(tool_msg.tool_call_id.as_deref(), Some("c1"));
        assert_eq!(
            tool_msg.content,
            "Search results for query 'imdb': [{\"id\": \"stanfordnlp/imdb\", \"downloads\": 9, \"likes\": 1}]\nSelect one dataset id (or refine by calling the tool again) and output final JSON when ready."
        );
    }

    #[test]
    fn tool_loop_is_bounded() {
        let (_, hub) = hub();
        let p = ScriptedProvider::new();
        let settings = SynthSettings::default();
        for i in 0..10 {
            let call = ToolCall {
                id: format!("c{i}"),
                name: SEARCH_TOOL.into(),
                arguments: r#"{"query": "q"}"#.into(),
            };
            p.push("propose/t", ChatMessage::assistant_tool_calls("", vec![call]));
        }
        let s = Synthesizer::new(&p, &hub, settings.clone());
        let out = s.propose_task("t").unwrap();
        assert_eq!(out.discard_reason, Some(DiscardReason::ToolLoopExhausted));
        assert!(p.calls() <= 1 + settings.max_tool_calls + settings.max_nudges);
        assert_eq!(p.calls(), settings.max_tool_calls + 1);
    }

    #[test]
    fn dataset_free_proposal_passes_through() {
        let (t, hub) = hub();
        let p = ScriptedProvider::new();
        p.push_text(
            "propose/game_theory",
            r#"{"topic": "Game Theory", "metric": "Average payoff", "description": "Design a strategy for the iterated prisoner's dilemma."}"#,
        );
        let s = Synthesizer::new(&p, &hub, SynthSettings::default());
        let out = s.propose_and_enrich("Game Theory").unwrap();
        assert!(out.discard_reason.is_none());
        assert!(out.resolved_dataset.is_none());
        assert!(out.is_dataset_free() && out.is_sound());
        assert_eq!(t.calls(), 0);
    }

    #[test]
    fn enrich_resolves_or_discards() {
        let (t, hub) = hub();
        t.insert(hub.search_url("hotpot_qa", 5), 200, r#"[{"id": "hotpotqa/hotpot_qa"}]"#)
            .insert(hub.search_url("zzqq_nonexistent", 5), 200, "[]")
            .insert(
                hub.splits_url("hotpotqa/hotpot_qa"),
                200,
                r#"{"splits": [{"dataset": "hotpotqa/hotpot_qa", "config": "distractor", "split": "train"}]}"#,
            )
            .insert(
                hub.first_rows_url("hotpotqa/hotpot_qa", "distractor", "train"),
                200,
                r#"{"features": [{"name": "question", "type": {"dtype": "string"}}], "rows": [{"row": {"question": "q?"}}]}"#,
            );
        let p = ScriptedProvider::new();
        let s = Synthesizer::new(&p, &hub, SynthSettings::default());
        let base = TaskProposal {
            topic: "Multi-hop QA".into(),
            metric: "Joint F1".into(),
            description: "d".into(),
            dataset: Some("hotpot_qa".into()),
        };
        let ok = s.enrich("Multi-hop QA", base.clone()).unwrap();
        assert_eq!(ok.resolved_dataset.as_ref().unwrap().id, "hotpotqa/hotpot_qa");
        assert_eq!(ok.resolved_dataset.as_ref().unwrap().features[0].name, "question");
        assert!(ok.is_sound());
        let missing = s
            .enrich(
                "Multi-hop QA",
                TaskProposal {
                    dataset: Some("zzqq_nonexistent".into()),
                    ..base
                },
            )
            .unwrap();
        assert_eq!(missing.discard_reason, Some(DiscardReason::NoDatasetMatch));
    }

    #[test]
    fn gated_dataset_keeps_schema_only() {
        let (t, hub) = hub();
        t.insert(hub.search_url("gated_corpus", 5), 200, r#"[{"id": "org/gated_corpus"}]"#)
            .insert(hub.splits_url("org/gated_corpus"), 401, r#"{"error": "gated"}"#);
        let p = ScriptedProvider::new();
        let s = Synthesizer::new(&p, &hub, SynthSettings::default());
        let out = s
            .enrich(
                "x",
                TaskProposal {
                    topic: "x".into(),
                    metric: "m".into(),
                    description: "d".into(),
                    dataset: Some("gated_corpus".into()),
                },
            )
            .unwrap();
        assert!(out.discard_reason.is_none());
        let sample = out.resolved_dataset.unwrap();
        assert_eq!(sample.id, "org/gated_corpus");
        assert!(sample.example_rows.is_empty());
    }

    #[test]
    fn slugs_are_safe() {
        assert_eq!(topic_slug("Sentiment  Analysis"), "sentiment_analysis");
        assert_eq!(topic_slug("Self-supervised (SSL) / vision!"), "self_supervised_ssl_vision");
        assert_eq!(topic_slug("???"), "topic");
    }
}
