//! Prerequisite knowledge sources.
//!
//! An [`Oracle`] answers the three questions the tracer asks: what the key
//! concepts of a question are, what the immediate prerequisites of a concept
//! are (and whether it is fundamental), and how to explain the target given a
//! learner's known and unknown concepts.
//!
//! Two implementations ship: [`FixtureOracle`] replays a JSON prerequisite
//! graph deterministically, and [`RemoteOracle`] talks to an OpenAI-compatible
//! chat-completion endpoint. Both run their output through the same
//! validation so that the engine only ever sees in-contract values.

mod fixture;
pub mod prompts;
mod remote;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::concept::{normalize_label, Concept, ConceptId};

pub use fixture::{FixtureAnalysis, FixtureError, FixtureExplanation, FixtureGraph, FixtureOracle};
pub use remote::{
    ChatMessage, ChatRequest, HttpTransport, RemoteConfig, RemoteOracle, RemoteStats,
    ScriptedTransport, Transport, TransportError,
};

/// Most key concepts kept from a question analysis.
pub const MAX_KEY_CONCEPTS: usize = 6;
/// Most prerequisites kept per extraction.
pub const MAX_PREREQUISITES: usize = 4;
/// Labels longer than this are treated as garbage and dropped.
pub const MAX_LABEL_CHARS: usize = 200;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EducationLevel {
    MiddleSchool,
    HighSchool,
    Undergraduate,
    Graduate,
}

impl EducationLevel {
    pub fn as_str(self) -> &'static str {
        match self {
            EducationLevel::MiddleSchool => "middle_school",
            EducationLevel::HighSchool => "high_school",
            EducationLevel::Undergraduate => "undergraduate",
            EducationLevel::Graduate => "graduate",
        }
    }

    fn describe(self) -> &'static str {
        match self {
            EducationLevel::MiddleSchool => "middle school",
            EducationLevel::HighSchool => "high school",
            EducationLevel::Undergraduate => "undergraduate",
            EducationLevel::Graduate => "graduate",
        }
    }
}

impl fmt::Display for EducationLevel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.describe())
    }
}

impl FromStr for EducationLevel {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_lowercase().replace(['-', ' '], "_").as_str() {
            "middle_school" | "middle" => Ok(EducationLevel::MiddleSchool),
            "high_school" | "high" => Ok(EducationLevel::HighSchool),
            "undergraduate" | "undergrad" => Ok(EducationLevel::Undergraduate),
            "graduate" | "grad" => Ok(EducationLevel::Graduate),
            other => Err(format!(
                "unknown education level {other:?} (expected middle_school, high_school, undergraduate or graduate)"
            )),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct QuestionAnalysis {
    pub understanding: String,
    pub importance: String,
    pub key_concepts: Vec<Concept>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct OracleRequestContext {
    pub question: String,
    pub education_level: EducationLevel,
    /// Concept labels from the target down to the parent of the concept
    /// being expanded.
    pub ancestor_chain: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Prerequisite {
    pub label: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub rationale: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExtractionResult {
    pub prerequisites: Vec<Prerequisite>,
    pub fundamental: bool,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExplanationRequest {
    pub question: String,
    pub education_level: EducationLevel,
    pub known: Vec<String>,
    /// Unknown concepts with prerequisites before their dependents.
    pub unknown_ordered: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OracleMode {
    Fixture,
    Remote,
}

impl fmt::Display for OracleMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OracleMode::Fixture => "fixture",
            OracleMode::Remote => "remote",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Health {
    Ok,
    Degraded(String),
}

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum OracleError {
    #[error("oracle failure: {message}")]
    Failure { message: String, retryable: bool },
    #[error("oracle call timed out")]
    Timeout,
    #[error("malformed oracle response: {reason}")]
    MalformedResponse { reason: String, raw: Vec<String> },
    #[error("oracle rejected the credentials")]
    AuthFailure,
    #[error("oracle rate limit exhausted")]
    RateLimited,
}

impl OracleError {
    pub fn failure(message: impl Into<String>) -> Self {
        OracleError::Failure {
            message: message.into(),
            retryable: false,
        }
    }

    pub fn retryable(&self) -> bool {
        match self {
            OracleError::Failure { retryable, .. } => *retryable,
            OracleError::Timeout
            | OracleError::RateLimited
            | OracleError::MalformedResponse { .. } => true,
            OracleError::AuthFailure => false,
        }
    }
}

pub trait Oracle: Send + Sync {
    fn mode(&self) -> OracleMode;

    fn analyze_question(
        &self,
        question: &str,
        level: EducationLevel,
    ) -> Result<QuestionAnalysis, OracleError>;

    /// Immediate prerequisites of `concept`, or `fundamental` when it needs
    /// none. One call answers both questions.
    fn extract_prereqs(
        &self,
        concept: &Concept,
        ctx: &OracleRequestContext,
    ) -> Result<ExtractionResult, OracleError>;

    fn generate_explanation(&self, request: &ExplanationRequest) -> Result<String, OracleError>;

    fn health(&self) -> Health {
        Health::Ok
    }
}

impl<T: Oracle + ?Sized> Oracle for std::sync::Arc<T> {
    fn mode(&self) -> OracleMode {
        (**self).mode()
    }

    fn analyze_question(
        &self,
        question: &str,
        level: EducationLevel,
    ) -> Result<QuestionAnalysis, OracleError> {
        (**self).analyze_question(question, level)
    }

    fn extract_prereqs(
        &self,
        concept: &Concept,
        ctx: &OracleRequestContext,
    ) -> Result<ExtractionResult, OracleError> {
        (**self).extract_prereqs(concept, ctx)
    }

    fn generate_explanation(&self, request: &ExplanationRequest) -> Result<String, OracleError> {
        (**self).generate_explanation(request)
    }

    fn health(&self) -> Health {
        (**self).health()
    }
}

/// Wraps an oracle and counts the calls that reach it.
pub struct CountingOracle<O> {
    inner: O,
    counts: Mutex<CallCounts>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CallCounts {
    pub analyze: usize,
    pub extract: BTreeMap<ConceptId, usize>,
    pub explain: usize,
}

impl CallCounts {
    pub fn total_extractions(&self) -> usize {
        self.extract.values().sum()
    }
}

impl<O: Oracle> CountingOracle<O> {
    pub fn new(inner: O) -> Self {
        Self {
            inner,
            counts: Mutex::new(CallCounts::default()),
        }
    }

    pub fn counts(&self) -> CallCounts {
        self.counts.lock().expect("counter lock").clone()
    }

    pub fn inner(&self) -> &O {
        &self.inner
    }
}

impl<O: Oracle> Oracle for CountingOracle<O> {
    fn mode(&self) -> OracleMode {
        self.inner.mode()
    }

    fn analyze_question(
        &self,
        question: &str,
        level: EducationLevel,
    ) -> Result<QuestionAnalysis, OracleError> {
        self.counts.lock().expect("counter lock").analyze += 1;
        self.inner.analyze_question(question, level)
    }

    fn extract_prereqs(
        &self,
        concept: &Concept,
        ctx: &OracleRequestContext,
    ) -> Result<ExtractionResult, OracleError> {
        *self
            .counts
            .lock()
            .expect("counter lock")
            .extract
            .entry(concept.id.clone())
            .or_default() += 1;
        self.inner.extract_prereqs(concept, ctx)
    }

    fn generate_explanation(&self, request: &ExplanationRequest) -> Result<String, OracleError> {
        self.counts.lock().expect("counter lock").explain += 1;
        self.inner.generate_explanation(request)
    }

    fn health(&self) -> Health {
        self.inner.health()
    }
}

fn usable_label(raw: &str) -> Option<(ConceptId, String)> {
    if raw.chars().count() > MAX_LABEL_CHARS {
        return None;
    }
    let id = normalize_label(raw).ok()?;
    let label = raw.split_whitespace().collect::<Vec<_>>().join(" ");
    Some((id, label))
}

/// Cleans raw analysis output: drops unusable and repeated labels and the
/// question's own label, then keeps at most [`MAX_KEY_CONCEPTS`].
pub fn validate_analysis(
    question: &str,
    understanding: String,
    importance: String,
    labels: &[String],
) -> Result<QuestionAnalysis, String> {
    let target = normalize_label(question).ok();
    let mut seen = BTreeSet::new();
    let mut key_concepts = Vec::new();
    for raw in labels {
        let Some((id, label)) = usable_label(raw) else {
            continue;
        };
        if Some(&id) == target.as_ref() || !seen.insert(id.clone()) {
            continue;
        }
        key_concepts.push(Concept {
            id,
            display_label: label,
            fundamental: false,
        });
    }
    if key_concepts.is_empty() {
        return Err("analysis contains no usable key concepts".into());
    }
    if key_concepts.len() > MAX_KEY_CONCEPTS {
        tracing::warn!(
            count = key_concepts.len(),
            "analysis returned more than {MAX_KEY_CONCEPTS} key concepts; truncating"
        );
        key_concepts.truncate(MAX_KEY_CONCEPTS);
    }
    Ok(QuestionAnalysis {
        understanding,
        importance,
        key_concepts,
    })
}

/// Cleans raw extraction output against the concept and its ancestors.
///
/// Self references, ancestors, unusable labels and repeats are dropped, the
/// rest is clamped to [`MAX_PREREQUISITES`]. A non-fundamental answer with no
/// usable prerequisites is coerced to fundamental.
pub fn validate_extraction(
    concept: &Concept,
    ctx: &OracleRequestContext,
    raw: Vec<Prerequisite>,
    fundamental: bool,
) -> ExtractionResult {
    if fundamental {
        return ExtractionResult {
            prerequisites: Vec::new(),
            fundamental: true,
        };
    }
    let mut excluded: BTreeSet<ConceptId> = ctx
        .ancestor_chain
        .iter()
        .filter_map(|l| normalize_label(l).ok())
        .collect();
    excluded.insert(concept.id.clone());
    let mut seen = BTreeSet::new();
    let mut prerequisites = Vec::new();
    for p in raw {
        let Some((id, label)) = usable_label(&p.label) else {
            continue;
        };
        if excluded.contains(&id) {
            tracing::debug!(concept = %concept.id, dropped = %id, "dropping self or ancestor prerequisite");
            continue;
        }
        if !seen.insert(id) {
            continue;
        }
        prerequisites.push(Prerequisite {
            label,
            rationale: p.rationale.filter(|r| !r.trim().is_empty()),
        });
    }
    if prerequisites.len() > MAX_PREREQUISITES {
        tracing::warn!(
            concept = %concept.id,
            count = prerequisites.len(),
            "more than {MAX_PREREQUISITES} prerequisites; truncating"
        );
        prerequisites.truncate(MAX_PREREQUISITES);
    }
    if prerequisites.is_empty() {
        tracing::warn!(concept = %concept.id, "no usable prerequisites; treating as fundamental");
        return ExtractionResult {
            prerequisites,
            fundamental: true,
        };
    }
    ExtractionResult {
        prerequisites,
        fundamental: false,
    }
}
