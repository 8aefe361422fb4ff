use std::collections::{BTreeMap, BTreeSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use super::{
    validate_analysis, validate_extraction, EducationLevel, ExplanationRequest, ExtractionResult,
    Oracle, OracleError, OracleMode, OracleRequestContext, Prerequisite, QuestionAnalysis,
};
use crate::concept::{normalize_label, Concept, ConceptId};

pub const FIXTURE_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum FixtureError {
    #[error("cannot read fixture {path}: {source}")]
    Io {
        path: String,
        source: std::io::Error,
    },
    #[error("fixture is not valid JSON: {0}")]
    Parse(#[from] serde_json::Error),
    #[error("fixture version {0} is not supported")]
    Version(u32),
    #[error("invalid fixture: {0}")]
    Invalid(String),
}

/// On-disk prerequisite graph used by [`FixtureOracle`].
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureGraph {
    pub version: u32,
    /// When set, concepts missing from `prerequisites` count as fundamental.
    #[serde(default = "default_open_mode")]
    pub open_mode: bool,
    pub analyses: Vec<FixtureAnalysis>,
    #[serde(default)]
    pub prerequisites: BTreeMap<String, Vec<String>>,
    #[serde(default)]
    pub fundamentals: Vec<String>,
    #[serde(default)]
    pub explanations: Vec<FixtureExplanation>,
}

fn default_open_mode() -> bool {
    true
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureAnalysis {
    /// Matched against the normalized question as a substring; `*` matches
    /// every question.
    pub pattern: String,
    #[serde(default)]
    pub understanding: String,
    #[serde(default)]
    pub importance: String,
    pub key_concepts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixtureExplanation {
    pub question: String,
    pub unknown: Vec<String>,
    pub text: String,
}

/// Deterministic oracle backed by a [`FixtureGraph`].
#[derive(Debug, Clone)]
pub struct FixtureOracle {
    graph: FixtureGraph,
    prereqs: BTreeMap<ConceptId, Vec<String>>,
    fundamentals: BTreeSet<ConceptId>,
}

impl FixtureOracle {
    pub fn load(path: impl AsRef<Path>) -> Result<Self, FixtureError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|source| FixtureError::Io {
            path: path.display().to_string(),
            source,
        })?;
        Self::from_json(&text)
    }

    pub fn from_json(text: &str) -> Result<Self, FixtureError> {
        Self::new(serde_json::from_str(text)?)
    }

    pub fn new(graph: FixtureGraph) -> Result<Self, FixtureError> {
        if graph.version != FIXTURE_VERSION {
            return Err(FixtureError::Version(graph.version));
        }
        if graph.analyses.is_empty() {
            return Err(FixtureError::Invalid("no analyses".into()));
        }
        let key = |label: &str| {
            normalize_label(label)
                .map_err(|_| FixtureError::Invalid(format!("empty concept label {label:?}")))
        };
        let mut prereqs = BTreeMap::new();
        for (concept, list) in &graph.prerequisites {
            if prereqs.insert(key(concept)?, list.clone()).is_some() {
                return Err(FixtureError::Invalid(format!(
                    "concept {concept:?} listed twice"
                )));
            }
            for label in list {
                key(label)?;
            }
        }
        let fundamentals = graph
            .fundamentals
            .iter()
            .map(|l| key(l))
            .collect::<Result<BTreeSet<_>, _>>()?;
        if !graph.open_mode {
            let referenced = graph
                .prerequisites
                .values()
                .flatten()
                .chain(graph.analyses.iter().flat_map(|a| a.key_concepts.iter()));
            for label in referenced {
                let id = key(label)?;
                if !prereqs.contains_key(&id) && !fundamentals.contains(&id) {
                    return Err(FixtureError::Invalid(format!(
                        "closed fixture has no entry for {label:?}"
                    )));
                }
            }
        }
        Ok(Self {
            graph,
            prereqs,
            fundamentals,
        })
    }

    pub fn graph(&self) -> &FixtureGraph {
        &self.graph
    }

    fn matches_question(pattern: &str, question: &str) -> bool {
        if pattern.trim() == "*" {
            return true;
        }
        match (normalize_label(pattern), normalize_label(question)) {
            (Ok(p), Ok(q)) => q.as_str().contains(p.as_str()),
            _ => false,
        }
    }

    /// Deterministic explanation used when no canned text matches.
    fn compose_explanation(request: &ExplanationRequest) -> String {
        let mut out = String::new();
        if !request.known.is_empty() {
            let known = request
                .known
                .iter()
                .map(|k| k.to_lowercase())
                .collect::<Vec<_>>();
            out.push_str(&format!(
                "You already know {}, so we start from there.\n",
                join_natural(&known)
            ));
        }
        if request.unknown_ordered.is_empty() {
            out.push_str(&format!(
                "You have every prerequisite for \"{}\", so here is the direct answer.\n",
                request.question
            ));
            return out;
        }
        for (i, concept) in request.unknown_ordered.iter().enumerate() {
            if !out.is_empty() {
                out.push('\n');
            }
            out.push_str(&format!("{}. {concept}\n", i + 1));
            if i == 0 {
                out.push_str(&format!("Start with {concept}.\n"));
            } else {
                out.push_str(&format!(
                    "{concept} builds on {}.\n",
                    request.unknown_ordered[i - 1]
                ));
            }
        }
        let verb = if request.unknown_ordered.len() == 1 {
            "leads"
        } else {
            "lead"
        };
        out.push_str(&format!(
            "\nPutting it together: {} {verb} to \"{}\".\n",
            join_natural(&request.unknown_ordered),
            request.question
        ));
        out
    }
}

fn join_natural(items: &[String]) -> String {
    match items {
        [] => String::new(),
        [one] => one.clone(),
        [a, b] => format!("{a} and {b}"),
        [init @ .., last] => format!("{}, and {last}", init.join(", ")),
    }
}

impl Oracle for FixtureOracle {
    fn mode(&self) -> OracleMode {
        OracleMode::Fixture
    }

    fn analyze_question(
        &self,
        question: &str,
        _level: EducationLevel,
    ) -> Result<QuestionAnalysis, OracleError> {
        let analysis = self
            .graph
            .analyses
            .iter()
            .find(|a| Self::matches_question(&a.pattern, question))
            .ok_or_else(|| {
                OracleError::failure(format!("fixture has no analysis for {question:?}"))
            })?;
        validate_analysis(
            question,
            analysis.understanding.clone(),
            analysis.importance.clone(),
            &analysis.key_concepts,
        )
        .map_err(|reason| OracleError::MalformedResponse {
            reason,
            raw: Vec::new(),
        })
    }

    fn extract_prereqs(
        &self,
        concept: &Concept,
        ctx: &OracleRequestContext,
    ) -> Result<ExtractionResult, OracleError> {
        if self.fundamentals.contains(&concept.id) {
            return Ok(validate_extraction(concept, ctx, Vec::new(), true));
        }
        match self.prereqs.get(&concept.id) {
            Some(list) => {
                let raw = list
                    .iter()
                    .map(|label| Prerequisite {
                        label: label.clone(),
                        rationale: None,
                    })
                    .collect();
                Ok(validate_extraction(concept, ctx, raw, false))
            }
            None if self.graph.open_mode => Ok(validate_extraction(concept, ctx, Vec::new(), true)),
            None => Err(OracleError::failure(format!(
                "closed fixture has no entry for {}",
                concept.id
            ))),
        }
    }

    fn generate_explanation(&self, request: &ExplanationRequest) -> Result<String, OracleError> {
        let unknown: BTreeSet<ConceptId> = request
            .unknown_ordered
            .iter()
            .filter_map(|l| normalize_label(l).ok())
            .collect();
        let canned = self.graph.explanations.iter().find(|e| {
            Self::matches_question(&e.question, &request.question)
                && e.unknown
                    .iter()
                    .filter_map(|l| normalize_label(l).ok())
                    .collect::<BTreeSet<_>>()
                    == unknown
        });
        Ok(match canned {
            Some(e) => e.text.clone(),
            None => Self::compose_explanation(request),
        })
    }
}
