use std::collections::{HashMap, VecDeque};
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Condvar, Mutex};
use std::time::Duration;

use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use super::prompts;
use super::{
    validate_analysis, validate_extraction, EducationLevel, ExplanationRequest, ExtractionResult,
    Health, Oracle, OracleError, OracleMode, OracleRequestContext, Prerequisite, QuestionAnalysis,
};
use crate::concept::{Concept, ConceptId};

const TUTOR_SYSTEM: &str = include_str!("../../prompts/system_tutor.v1.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ChatMessage {
    pub role: String,
    pub content: String,
}

impl ChatMessage {
    fn new(role: &str, content: impl Into<String>) -> Self {
        Self {
            role: role.to_string(),
            content: content.into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ChatRequest {
    pub model: String,
    pub messages: Vec<ChatMessage>,
    pub temperature: f32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub response_format: Option<Value>,
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum TransportError {
    #[error("request timed out")]
    Timeout,
    #[error("authentication failed (HTTP {0})")]
    Auth(u16),
    #[error("rate limited")]
    RateLimited { retry_after: Option<Duration> },
    #[error("HTTP {code}: {body}")]
    Status { code: u16, body: String },
    #[error("undecodable response envelope: {0}")]
    Decode(String),
    #[error("network error: {0}")]
    Network(String),
}

/// Moves one chat-completion request over the wire and returns the
/// assistant message content.
pub trait Transport: Send + Sync {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError>;

    /// Cheap reachability check used by health reporting.
    fn probe(&self) -> Result<(), TransportError> {
        Ok(())
    }
}

/// Blocking HTTP transport for OpenAI-compatible `/chat/completions`.
pub struct HttpTransport {
    agent: ureq::Agent,
    base_url: String,
    api_key: Option<String>,
}

impl HttpTransport {
    pub fn new(base_url: &str, api_key: Option<String>, timeout: Duration) -> Self {
        let agent: ureq::Agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .http_status_as_error(false)
            .build()
            .into();
        Self {
            agent,
            base_url: base_url.trim_end_matches('/').to_string(),
            api_key,
        }
    }

    fn map_error(err: ureq::Error) -> TransportError {
        match err {
            ureq::Error::Timeout(_) => TransportError::Timeout,
            other => TransportError::Network(other.to_string()),
        }
    }
}

#[derive(Deserialize)]
struct Envelope {
    choices: Vec<Choice>,
}

#[derive(Deserialize)]
struct Choice {
    message: EnvelopeMessage,
}

#[derive(Deserialize)]
struct EnvelopeMessage {
    content: Option<String>,
}

impl Transport for HttpTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let url = format!("{}/chat/completions", self.base_url);
        let mut req = self.agent.post(&url);
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        let mut resp = req.send_json(request).map_err(Self::map_error)?;
        let code = resp.status().as_u16();
        let retry_after = resp
            .headers()
            .get("retry-after")
            .and_then(|v| v.to_str().ok())
            .and_then(|v| v.trim().parse::<u64>().ok())
            .map(Duration::from_secs);
        let body = resp.body_mut().read_to_string().map_err(Self::map_error)?;
        match code {
            200..=299 => {}
            401 | 403 => return Err(TransportError::Auth(code)),
            429 => return Err(TransportError::RateLimited { retry_after }),
            _ => return Err(TransportError::Status { code, body }),
        }
        let envelope: Envelope =
            serde_json::from_str(&body).map_err(|_| TransportError::Decode(body.clone()))?;
        envelope
            .choices
            .into_iter()
            .next()
            .and_then(|c| c.message.content)
            .ok_or(TransportError::Decode(body))
    }

    fn probe(&self) -> Result<(), TransportError> {
        let mut req = self.agent.get(&format!("{}/models", self.base_url));
        if let Some(key) = &self.api_key {
            req = req.header("Authorization", &format!("Bearer {key}"));
        }
        req.call().map(|_| ()).map_err(Self::map_error)
    }
}

/// In-process transport that replays scripted responses and records every
/// request it sees. Clones share state.
#[derive(Clone, Default)]
pub struct ScriptedTransport {
    inner: Arc<Mutex<Scripted>>,
}

#[derive(Default)]
struct Scripted {
    queue: VecDeque<Result<String, TransportError>>,
    fallback: Option<Result<String, TransportError>>,
    requests: Vec<ChatRequest>,
    probe: Option<TransportError>,
}

impl ScriptedTransport {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn push(&self, content: impl Into<String>) -> &Self {
        self.lock().queue.push_back(Ok(content.into()));
        self
    }

    pub fn push_json(&self, value: &Value) -> &Self {
        self.push(value.to_string())
    }

    pub fn push_err(&self, err: TransportError) -> &Self {
        self.lock().queue.push_back(Err(err));
        self
    }

    /// Response returned whenever the queue is empty.
    pub fn set_fallback(&self, response: Result<String, TransportError>) -> &Self {
        self.lock().fallback = Some(response);
        self
    }

    pub fn set_unreachable(&self, unreachable: bool) -> &Self {
        self.lock().probe =
            unreachable.then(|| TransportError::Network("connection refused".into()));
        self
    }

    pub fn requests(&self) -> Vec<ChatRequest> {
        self.lock().requests.clone()
    }

    pub fn call_count(&self) -> usize {
        self.lock().requests.len()
    }

    fn lock(&self) -> std::sync::MutexGuard<'_, Scripted> {
        self.inner.lock().expect("scripted transport lock")
    }
}

impl Transport for ScriptedTransport {
    fn complete(&self, request: &ChatRequest) -> Result<String, TransportError> {
        let mut inner = self.lock();
        inner.requests.push(request.clone());
        match inner.queue.pop_front() {
            Some(r) => r,
            None => inner
                .fallback
                .clone()
                .unwrap_or_else(|| Err(TransportError::Network("script exhausted".into()))),
        }
    }

    fn probe(&self) -> Result<(), TransportError> {
        match &self.lock().probe {
            Some(e) => Err(e.clone()),
            None => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RemoteConfig {
    pub base_url: String,
    pub model: String,
    #[serde(skip)]
    pub api_key: Option<String>,
    #[serde(with = "secs")]
    pub timeout: Duration,
    /// Repair attempts after a response fails to parse.
    pub max_repair_retries: u32,
    pub max_rate_limit_retries: u32,
    #[serde(with = "millis")]
    pub backoff_base: Duration,
    pub max_inflight: usize,
}

impl Default for RemoteConfig {
    fn default() -> Self {
        Self {
            base_url: "https://api.openai.com/v1".into(),
            model: "gpt-4o".into(),
            api_key: None,
            timeout: Duration::from_secs(30),
            max_repair_retries: 2,
            max_rate_limit_retries: 3,
            backoff_base: Duration::from_millis(500),
            max_inflight: 4,
        }
    }
}

mod secs {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_secs())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_secs(u64::deserialize(d)?))
    }
}

mod millis {
    use serde::{Deserialize, Deserializer, Serializer};
    use std::time::Duration;

    pub fn serialize<S: Serializer>(d: &Duration, s: S) -> Result<S::Ok, S::Error> {
        s.serialize_u64(d.as_millis() as u64)
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Duration, D::Error> {
        Ok(Duration::from_millis(u64::deserialize(d)?))
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RemoteStats {
    pub transport_calls: usize,
    pub repair_retries: usize,
    pub rate_limit_retries: usize,
    pub cache_hits: usize,
}

#[derive(Default)]
struct Counters {
    transport_calls: AtomicUsize,
    repair_retries: AtomicUsize,
    rate_limit_retries: AtomicUsize,
    cache_hits: AtomicUsize,
}

struct InflightGate {
    max: usize,
    active: Mutex<usize>,
    cv: Condvar,
}

impl InflightGate {
    fn enter(&self) -> InflightPermit<'_> {
        let mut active = self.active.lock().expect("gate lock");
        while *active >= self.max {
            active = self.cv.wait(active).expect("gate lock");
        }
        *active += 1;
        InflightPermit { gate: self }
    }
}

struct InflightPermit<'a> {
    gate: &'a InflightGate,
}

impl Drop for InflightPermit<'_> {
    fn drop(&mut self) {
        *self.gate.active.lock().expect("gate lock") -= 1;
        self.gate.cv.notify_one();
    }
}

type MemoKey = (String, EducationLevel, ConceptId);

/// Oracle backed by an OpenAI-compatible chat-completion endpoint.
pub struct RemoteOracle {
    config: RemoteConfig,
    transport: Arc<dyn Transport>,
    counters: Counters,
    gate: InflightGate,
    memo: Mutex<HashMap<MemoKey, (Vec<Prerequisite>, bool)>>,
}

/// Reads one list item, either a bare string or an object with a `label`.
/// Anything else is skipped so one odd item does not sink the whole reply.
fn label_item(item: Value) -> Option<Prerequisite> {
    match item {
        Value::String(label) => Some(Prerequisite {
            label,
            rationale: None,
        }),
        Value::Object(mut map) => {
            let Some(Value::String(label)) = map.remove("label") else {
                return None;
            };
            let rationale = match map.remove("rationale") {
                Some(Value::String(r)) => Some(r),
                _ => None,
            };
            Some(Prerequisite { label, rationale })
        }
        _ => None,
    }
}

#[derive(Deserialize)]
struct AnalysisDoc {
    understanding: String,
    importance: String,
    key_concepts: Vec<Value>,
}

#[derive(Deserialize)]
struct ExtractionDoc {
    prerequisites: Vec<Value>,
    #[serde(default)]
    fundamental: bool,
}

fn strip_fences(content: &str) -> &str {
    let trimmed = content.trim();
    let Some(rest) = trimmed.strip_prefix("```") else {
        return trimmed;
    };
    let body = rest.split_once('\n').map(|(_, b)| b).unwrap_or("");
    body.trim_end().strip_suffix("```").unwrap_or(body).trim()
}

fn parse_doc<T: serde::de::DeserializeOwned>(content: &str) -> Result<T, String> {
    serde_json::from_str(strip_fences(content)).map_err(|e| e.to_string())
}

impl RemoteOracle {
    pub fn new(config: RemoteConfig, transport: Arc<dyn Transport>) -> Self {
        let max = config.max_inflight.max(1);
        Self {
            config,
            transport,
            counters: Counters::default(),
            gate: InflightGate {
                max,
                active: Mutex::new(0),
                cv: Condvar::new(),
            },
            memo: Mutex::new(HashMap::new()),
        }
    }

    /// Builds an oracle that talks HTTP to `config.base_url`.
    pub fn http(config: RemoteConfig) -> Self {
        let transport =
            HttpTransport::new(&config.base_url, config.api_key.clone(), config.timeout);
        Self::new(config, Arc::new(transport))
    }

    pub fn config(&self) -> &RemoteConfig {
        &self.config
    }

    pub fn stats(&self) -> RemoteStats {
        RemoteStats {
            transport_calls: self.counters.transport_calls.load(Ordering::Relaxed),
            repair_retries: self.counters.repair_retries.load(Ordering::Relaxed),
            rate_limit_retries: self.counters.rate_limit_retries.load(Ordering::Relaxed),
            cache_hits: self.counters.cache_hits.load(Ordering::Relaxed),
        }
    }

    fn send(&self, messages: &[ChatMessage], json_mode: bool) -> Result<String, TransportError> {
        let request = ChatRequest {
            model: self.config.model.clone(),
            messages: messages.to_vec(),
            temperature: 0.0,
            response_format: json_mode.then(|| json!({"type": "json_object"})),
        };
        let _permit = self.gate.enter();
        self.counters
            .transport_calls
            .fetch_add(1, Ordering::Relaxed);
        self.transport.complete(&request)
    }

    /// Sends `prompt` and runs `accept` on the reply. A rejected reply is sent
    /// back with a repair instruction, up to `max_repair_retries` times.
    pub fn remote_call<R>(
        &self,
        system: &str,
        prompt: String,
        json_mode: bool,
        accept: impl Fn(&str) -> Result<R, String>,
    ) -> Result<R, OracleError> {
        let mut messages = vec![
            ChatMessage::new("system", system),
            ChatMessage::new("user", prompt),
        ];
        let mut rejected: Vec<String> = Vec::new();
        let mut rate_limited = 0u32;
        loop {
            let (content, verdict) = match self.send(&messages, json_mode) {
                Ok(content) => {
                    let verdict = accept(&content);
                    (content, verdict)
                }
                Err(TransportError::Decode(body)) => (
                    body,
                    Err("response envelope has no message content".to_string()),
                ),
                Err(TransportError::RateLimited { retry_after }) => {
                    if rate_limited >= self.config.max_rate_limit_retries {
                        return Err(OracleError::RateLimited);
                    }
                    let wait = retry_after
                        .unwrap_or(self.config.backoff_base * 2u32.saturating_pow(rate_limited));
                    rate_limited += 1;
                    self.counters
                        .rate_limit_retries
                        .fetch_add(1, Ordering::Relaxed);
                    tracing::warn!(attempt = rate_limited, ?wait, "rate limited; backing off");
                    std::thread::sleep(wait);
                    continue;
                }
                Err(TransportError::Timeout) => return Err(OracleError::Timeout),
                Err(TransportError::Auth(_)) => return Err(OracleError::AuthFailure),
                Err(TransportError::Status { code, body }) => {
                    return Err(OracleError::Failure {
                        message: format!("HTTP {code}: {body}"),
                        retryable: code >= 500,
                    })
                }
                Err(TransportError::Network(message)) => {
                    return Err(OracleError::Failure {
                        message,
                        retryable: true,
                    })
                }
            };
            let reason = match verdict {
                Ok(value) => return Ok(value),
                Err(reason) => reason,
            };
            rejected.push(content.clone());
            if rejected.len() as u32 > self.config.max_repair_retries {
                tracing::error!(attempts = rejected.len(), %reason, "giving up on malformed responses");
                return Err(OracleError::MalformedResponse {
                    reason,
                    raw: rejected,
                });
            }
            self.counters.repair_retries.fetch_add(1, Ordering::Relaxed);
            tracing::warn!(%reason, "malformed response; asking for a repair");
            messages.push(ChatMessage::new("assistant", content));
            messages.push(ChatMessage::new(
                "user",
                format!(
                    "Your previous reply could not be used: {reason}. \
                     Reply again with only a JSON object that matches the requested schema."
                ),
            ));
        }
    }

    fn raw_extraction(
        &self,
        concept: &Concept,
        ctx: &OracleRequestContext,
    ) -> Result<(Vec<Prerequisite>, bool), OracleError> {
        let key = (
            ctx.question.clone(),
            ctx.education_level,
            concept.id.clone(),
        );
        if let Some(hit) = self.memo.lock().expect("memo lock").get(&key) {
            self.counters.cache_hits.fetch_add(1, Ordering::Relaxed);
            return Ok(hit.clone());
        }
        let prompt = prompts::render_extraction(&concept.display_label, ctx);
        let raw = self.remote_call(prompts::SYSTEM, prompt, true, |content| {
            let doc: ExtractionDoc = parse_doc(content)?;
            Ok((
                doc.prerequisites
                    .into_iter()
                    .filter_map(label_item)
                    .collect::<Vec<_>>(),
                doc.fundamental,
            ))
        })?;
        self.memo
            .lock()
            .expect("memo lock")
            .insert(key, raw.clone());
        Ok(raw)
    }
}

impl Oracle for RemoteOracle {
    fn mode(&self) -> OracleMode {
        OracleMode::Remote
    }

    fn analyze_question(
        &self,
        question: &str,
        level: EducationLevel,
    ) -> Result<QuestionAnalysis, OracleError> {
        let prompt = prompts::render_analysis(question, level);
        self.remote_call(prompts::SYSTEM, prompt, true, |content| {
            let doc: AnalysisDoc = parse_doc(content)?;
            let labels: Vec<String> = doc
                .key_concepts
                .into_iter()
                .filter_map(|i| label_item(i).map(|p| p.label))
                .collect();
            validate_analysis(question, doc.understanding, doc.importance, &labels)
        })
    }

    fn extract_prereqs(
        &self,
        concept: &Concept,
        ctx: &OracleRequestContext,
    ) -> Result<ExtractionResult, OracleError> {
        let (raw, fundamental) = self.raw_extraction(concept, ctx)?;
        Ok(validate_extraction(concept, ctx, raw, fundamental))
    }

    fn generate_explanation(&self, request: &ExplanationRequest) -> Result<String, OracleError> {
        let prompt = prompts::render_explanation(request);
        self.remote_call(TUTOR_SYSTEM, prompt, false, |content| {
            let text = content.trim();
            if text.is_empty() {
                Err("empty explanation".to_string())
            } else {
                Ok(text.to_string())
            }
        })
    }

    fn health(&self) -> Health {
        match self.transport.probe() {
            Ok(()) => Health::Ok,
            Err(e) => Health::Degraded(e.to_string()),
        }
    }
}
