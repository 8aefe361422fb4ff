//! Resumable recursive prerequisite tracing.
//!
//! A [`Session`] is driven by assessments: the learner marks a surfaced
//! concept as known or unknown, and an unknown concept below the depth limit
//! is expanded into its prerequisites, which become the next concepts to
//! assess. Known concepts prune their branch; fundamental and depth-capped
//! concepts end it. The session completes once nothing is left to assess.
//!
//! Every state change is an [`EventKind`] appended to the session's log and
//! applied by one pure function, so [`Session::replay`] rebuilds the exact
//! live state from the log without consulting the oracle.
//!
//! A concept expands at most once per session. When a concept is surfaced
//! again on a shallower branch, that occurrence takes over as the primary
//! one and the expansion moves with it, so the depth at which a concept is
//! expanded (and therefore the final concept graph) does not depend on the
//! order in which the learner answers.

use std::collections::{BTreeMap, BTreeSet};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Arc;

use chrono::{DateTime, SubsecRound, TimeZone, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::concept::{
    normalize_label, Concept, ConceptId, Expansion, KnowledgeStatus, NodeId, Occurrence, Status,
    TraceNode, TraceTree,
};
use crate::oracle::{
    validate_analysis, EducationLevel, Oracle, OracleError, OracleRequestContext, Prerequisite,
    QuestionAnalysis,
};

pub const DEFAULT_MAX_DEPTH: u32 = 3;
pub const MAX_DEPTH_LIMIT: u32 = 6;

#[derive(Debug, Error)]
pub enum EngineError {
    #[error("question is empty")]
    EmptyQuestion,
    #[error("max depth {0} is outside 1..={MAX_DEPTH_LIMIT}")]
    InvalidMaxDepth(u32),
    #[error("concept {0:?} has not been surfaced in this session")]
    UnknownConcept(String),
    #[error("concept {concept} is already marked {}", if *.known { "known" } else { "unknown" })]
    ConflictingAssessment { concept: ConceptId, known: bool },
    #[error("oracle failed: {0}")]
    OracleFailure(#[from] OracleError),
    #[error("corrupt event log: {0}")]
    CorruptLog(String),
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct SessionId(String);

impl SessionId {
    pub fn random() -> Self {
        Self(uuid::Uuid::new_v4().simple().to_string())
    }

    /// Content-derived id for reproducible runs.
    pub fn derive(parts: &[&[u8]]) -> Self {
        let mut hasher = Sha256::new();
        for part in parts {
            hasher.update((part.len() as u64).to_le_bytes());
            hasher.update(part);
        }
        Self(hex::encode(&hasher.finalize()[..16]))
    }

    /// Accepts ids made of ASCII alphanumerics, `-` and `_` only, so that
    /// they are safe to use as file names.
    pub fn parse(raw: &str) -> Option<Self> {
        let ok = !raw.is_empty()
            && raw.len() <= 128
            && raw
                .chars()
                .all(|c| c.is_ascii_alphanumeric() || c == '-' || c == '_');
        ok.then(|| Self(raw.to_string()))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl std::fmt::Display for SessionId {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

pub trait Clock: Send + Sync {
    fn now(&self) -> DateTime<Utc>;
}

#[derive(Debug, Default, Clone, Copy)]
pub struct SystemClock;

impl Clock for SystemClock {
    fn now(&self) -> DateTime<Utc> {
        Utc::now().trunc_subsecs(3)
    }
}

/// Clock that starts at a fixed instant and advances one second per reading.
#[derive(Debug)]
pub struct LogicalClock {
    start: DateTime<Utc>,
    ticks: AtomicU64,
}

impl LogicalClock {
    pub fn new(start: DateTime<Utc>) -> Self {
        Self {
            start,
            ticks: AtomicU64::new(0),
        }
    }
}

impl Default for LogicalClock {
    fn default() -> Self {
        Self::new(Utc.timestamp_opt(0, 0).unwrap())
    }
}

impl Clock for LogicalClock {
    fn now(&self) -> DateTime<Utc> {
        let t = self.ticks.fetch_add(1, Ordering::Relaxed);
        self.start + chrono::Duration::seconds(t as i64)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Phase {
    Assessing,
    Complete,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CapReason {
    Depth,
    Fundamental,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum EventKind {
    Started {
        session_id: SessionId,
        question: String,
        education_level: EducationLevel,
        max_depth: u32,
    },
    Analyzed {
        analysis: QuestionAnalysis,
    },
    Assessed {
        concept: ConceptId,
        known: bool,
        #[serde(default, skip_serializing_if = "std::ops::Not::not")]
        forced: bool,
    },
    Expanded {
        concept: ConceptId,
        prereqs: Vec<Prerequisite>,
    },
    Capped {
        concept: ConceptId,
        reason: CapReason,
    },
    Completed,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SessionEvent {
    pub seq: u64,
    pub at: DateTime<Utc>,
    #[serde(flatten)]
    pub kind: EventKind,
}

/// What an earlier extraction said about a concept.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum KnownExtraction {
    Prerequisites { prereqs: Vec<Prerequisite> },
    Fundamental,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PendingAssessment {
    pub node_id: NodeId,
    pub concept: Concept,
    pub depth: u32,
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct AssessmentOutcome {
    pub new_nodes: Vec<TraceNode>,
    pub duplicate_nodes: Vec<TraceNode>,
    pub cap_reason: Option<CapReason>,
    pub session_complete: bool,
}

impl AssessmentOutcome {
    pub fn is_empty(&self) -> bool {
        self.new_nodes.is_empty() && self.duplicate_nodes.is_empty() && self.cap_reason.is_none()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Session {
    pub session_id: SessionId,
    pub question: String,
    pub education_level: EducationLevel,
    pub max_depth: u32,
    pub analysis: QuestionAnalysis,
    pub tree: TraceTree,
    pub status: KnowledgeStatus,
    pub expanded: BTreeSet<ConceptId>,
    pub extractions: BTreeMap<ConceptId, KnownExtraction>,
    pub phase: Phase,
    pub event_log: Vec<SessionEvent>,
    pub created_at: DateTime<Utc>,
    pub updated_at: DateTime<Utc>,
}

impl Session {
    fn from_started(event: &SessionEvent) -> Result<Self, String> {
        let EventKind::Started {
            session_id,
            question,
            education_level,
            max_depth,
        } = &event.kind
        else {
            return Err("log does not begin with a start event".into());
        };
        if event.seq != 0 {
            return Err(format!("start event has sequence {}", event.seq));
        }
        if !(1..=MAX_DEPTH_LIMIT).contains(max_depth) {
            return Err(format!("max depth {max_depth} out of range"));
        }
        let tree = TraceTree::new(question).map_err(|e| e.to_string())?;
        Ok(Self {
            session_id: session_id.clone(),
            question: question.clone(),
            education_level: *education_level,
            max_depth: *max_depth,
            analysis: QuestionAnalysis {
                understanding: String::new(),
                importance: String::new(),
                key_concepts: Vec::new(),
            },
            tree,
            status: KnowledgeStatus::default(),
            expanded: BTreeSet::new(),
            extractions: BTreeMap::new(),
            phase: Phase::Assessing,
            event_log: vec![event.clone()],
            created_at: event.at,
            updated_at: event.at,
        })
    }

    /// Rebuilds a session from its event log alone.
    pub fn replay(events: &[SessionEvent]) -> Result<Session, EngineError> {
        let first = events
            .first()
            .ok_or_else(|| EngineError::CorruptLog("empty log".into()))?;
        let mut session = Session::from_started(first).map_err(EngineError::CorruptLog)?;
        for event in &events[1..] {
            session
                .push(event.clone())
                .map_err(|e| EngineError::CorruptLog(format!("event {}: {e}", event.seq)))?;
        }
        session
            .check_invariants()
            .map_err(|e| EngineError::CorruptLog(format!("replayed state: {e}")))?;
        Ok(session)
    }

    pub fn status_of(&self, concept: &ConceptId) -> Status {
        self.status.get(concept)
    }

    pub fn is_complete(&self) -> bool {
        self.phase == Phase::Complete
    }

    /// Surfaced concepts still waiting for a know / don't-know answer,
    /// ordered by node id.
    pub fn pending_assessments(&self) -> Vec<PendingAssessment> {
        let root = self.tree.root_id();
        self.tree
            .nodes()
            .filter(|n| {
                n.node_id != root
                    && n.occurrence == Occurrence::Primary
                    && self.status.get(&n.concept) == Status::Unassessed
            })
            .map(|n| PendingAssessment {
                node_id: n.node_id,
                concept: self
                    .tree
                    .concept(&n.concept)
                    .cloned()
                    .expect("registered concept"),
                depth: n.depth,
            })
            .collect()
    }

    /// Primary unknown nodes whose expansion has not been decided yet,
    /// typically because an oracle call failed.
    fn unsettled(&self) -> Option<&TraceNode> {
        let root = self.tree.root_id();
        self.tree.nodes().find(|n| {
            n.node_id != root
                && n.occurrence == Occurrence::Primary
                && n.expansion == Expansion::Unexpanded
                && self.status.get(&n.concept) == Status::Unknown
        })
    }

    pub fn has_stalled_expansions(&self) -> bool {
        self.unsettled().is_some()
    }

    fn computed_phase(&self) -> Phase {
        if self.pending_assessments().is_empty() && self.unsettled().is_none() {
            Phase::Complete
        } else {
            Phase::Assessing
        }
    }

    fn primary_id(&self, concept: &ConceptId) -> Option<NodeId> {
        self.tree.primary_of(concept).map(|n| n.node_id)
    }

    /// Appends and applies one event.
    fn push(&mut self, event: SessionEvent) -> Result<Vec<NodeId>, String> {
        let expected = self.event_log.len() as u64;
        if event.seq != expected {
            return Err(format!("expected sequence {expected}, found {}", event.seq));
        }
        let created = self.apply(&event.kind)?;
        self.phase = self.computed_phase();
        if matches!(event.kind, EventKind::Completed) && self.phase != Phase::Complete {
            return Err("completion recorded while assessments remain".into());
        }
        self.updated_at = event.at;
        self.event_log.push(event);
        Ok(created)
    }

    fn apply(&mut self, kind: &EventKind) -> Result<Vec<NodeId>, String> {
        match kind {
            EventKind::Started { .. } => Err("duplicate start event".into()),
            EventKind::Analyzed { analysis } => {
                if self.event_log.len() != 1 {
                    return Err("analysis must directly follow the start event".into());
                }
                let root = self.tree.root_id();
                let mut created = Vec::new();
                for concept in &analysis.key_concepts {
                    if self.tree.would_cycle(root, &concept.id) {
                        continue;
                    }
                    let (id, _) = self
                        .tree
                        .add_child(root, concept.clone(), self.max_depth)
                        .map_err(|e| e.to_string())?;
                    created.push(id);
                }
                if created.is_empty() {
                    return Err("analysis surfaced no concepts".into());
                }
                self.tree.set_expansion(root, Expansion::Expanded);
                self.analysis = analysis.clone();
                Ok(created)
            }
            EventKind::Assessed {
                concept,
                known,
                forced,
            } => {
                let node = self
                    .primary_id(concept)
                    .filter(|&n| n != self.tree.root_id())
                    .ok_or_else(|| format!("{concept} has no assessable node"))?;
                match self.status.get(concept) {
                    Status::Unassessed => {}
                    current if current == Status::from_known(*known) => {
                        return Err(format!("{concept} assessed twice with the same answer"));
                    }
                    _ if !forced => {
                        return Err(format!("{concept} flipped without force"));
                    }
                    Status::Unknown => self.discard_expansion(node),
                    _ => {}
                }
                self.status.set(concept.clone(), *known);
                Ok(Vec::new())
            }
            EventKind::Expanded { concept, prereqs } => {
                let node = self.settleable(concept)?;
                if self.tree.node(node).expect("primary").depth >= self.max_depth {
                    return Err(format!("{concept} expanded at the depth limit"));
                }
                let mut created = Vec::new();
                for prereq in prereqs {
                    let Ok(child) = Concept::new(&prereq.label) else {
                        continue;
                    };
                    if self.tree.would_cycle(node, &child.id) {
                        tracing::debug!(%concept, dropped = %child.id, "dropping cyclic prerequisite");
                        continue;
                    }
                    let (id, _) = self
                        .tree
                        .add_child(node, child, self.max_depth)
                        .map_err(|e| e.to_string())?;
                    created.push(id);
                }
                self.tree.set_expansion(node, Expansion::Expanded);
                self.expanded.insert(concept.clone());
                self.extractions.insert(
                    concept.clone(),
                    KnownExtraction::Prerequisites {
                        prereqs: prereqs.clone(),
                    },
                );
                self.normalize_primaries();
                Ok(created)
            }
            EventKind::Capped { concept, reason } => {
                let node = self.settleable(concept)?;
                match reason {
                    CapReason::Depth => {
                        if self.tree.node(node).expect("primary").depth < self.max_depth {
                            return Err(format!("{concept} depth-capped above the limit"));
                        }
                        self.tree.set_expansion(node, Expansion::DepthCapped);
                    }
                    CapReason::Fundamental => {
                        self.tree.set_expansion(node, Expansion::Fundamental);
                        if let Some(c) = self.tree.concept_mut(concept) {
                            c.fundamental = true;
                        }
                        self.extractions
                            .insert(concept.clone(), KnownExtraction::Fundamental);
                    }
                }
                Ok(Vec::new())
            }
            EventKind::Completed => Ok(Vec::new()),
        }
    }

    fn settleable(&self, concept: &ConceptId) -> Result<NodeId, String> {
        let node = self
            .primary_id(concept)
            .ok_or_else(|| format!("{concept} is not surfaced"))?;
        let n = self.tree.node(node).expect("primary");
        if self.status.get(concept) != Status::Unknown {
            return Err(format!("{concept} is not unknown"));
        }
        if n.expansion != Expansion::Unexpanded || n.node_id == self.tree.root_id() {
            return Err(format!("{concept} is already settled"));
        }
        Ok(node)
    }

    /// Drops everything below `node` after its concept flips to known.
    fn discard_expansion(&mut self, node: NodeId) {
        let concept = self.tree.node(node).expect("node").concept.clone();
        let removed = self.tree.prune_children(node);
        self.tree.set_expansion(node, Expansion::Unexpanded);
        self.expanded.remove(&concept);
        for n in &removed {
            if n.occurrence == Occurrence::Primary {
                self.expanded.remove(&n.concept);
            }
        }
        self.normalize_primaries();
    }

    /// Makes the shallowest occurrence of every concept its primary one.
    fn normalize_primaries(&mut self) {
        loop {
            let mut best: BTreeMap<&ConceptId, &TraceNode> = BTreeMap::new();
            for n in self.tree.nodes() {
                best.entry(&n.concept)
                    .and_modify(|b| {
                        if (n.depth, n.node_id) < (b.depth, b.node_id) {
                            *b = n;
                        }
                    })
                    .or_insert(n);
            }
            let candidate = best
                .values()
                .filter(|b| b.occurrence == Occurrence::DuplicateReference)
                .find(|b| {
                    self.tree
                        .primary_of(&b.concept)
                        .is_none_or(|p| p.depth > b.depth)
                })
                .map(|b| b.node_id);
            let Some(dup) = candidate else {
                break;
            };
            let moved = self.tree.promote(dup);
            for id in std::iter::once(dup).chain(moved) {
                let n = self.tree.node(id).expect("moved node");
                if n.expansion == Expansion::DepthCapped && n.depth < self.max_depth {
                    self.tree.set_expansion(id, Expansion::Unexpanded);
                }
            }
        }
    }

    /// Checks every structural invariant of the session.
    pub fn check_invariants(&self) -> Result<(), String> {
        self.tree.check(self.max_depth)?;
        for (i, e) in self.event_log.iter().enumerate() {
            if e.seq != i as u64 {
                return Err(format!("event {i} carries sequence {}", e.seq));
            }
        }
        for c in &self.expanded {
            if self.status.get(c) != Status::Unknown {
                return Err(format!("{c} is expanded but not unknown"));
            }
            match self.tree.primary_of(c) {
                Some(n) if n.expansion == Expansion::Expanded => {}
                _ => return Err(format!("{c} is expanded without an expanded node")),
            }
        }
        for n in self.tree.nodes() {
            if n.node_id == self.tree.root_id() {
                continue;
            }
            let status = self.status.get(&n.concept);
            if n.expansion == Expansion::Expanded && !self.expanded.contains(&n.concept) {
                return Err(format!("{} expanded but not recorded", n.concept));
            }
            if status == Status::Known && !n.children.is_empty() {
                return Err(format!("known concept {} has children", n.concept));
            }
            if n.occurrence == Occurrence::DuplicateReference {
                let p = self.tree.primary_of(&n.concept).expect("checked by tree");
                if p.depth > n.depth {
                    return Err(format!("{} has a shallower duplicate", n.concept));
                }
            }
        }
        if self.phase != self.computed_phase() {
            return Err("phase disagrees with pending assessments".into());
        }
        Ok(())
    }
}

/// Drives sessions against an oracle.
#[derive(Clone)]
pub struct Engine {
    oracle: Arc<dyn Oracle>,
    clock: Arc<dyn Clock>,
}

struct Effects {
    created: Vec<NodeId>,
    cap: Option<CapReason>,
}

impl Engine {
    pub fn new(oracle: Arc<dyn Oracle>) -> Self {
        Self::with_clock(oracle, Arc::new(SystemClock))
    }

    pub fn with_clock(oracle: Arc<dyn Oracle>, clock: Arc<dyn Clock>) -> Self {
        Self { oracle, clock }
    }

    pub fn oracle(&self) -> &Arc<dyn Oracle> {
        &self.oracle
    }

    pub fn start_session(
        &self,
        question: &str,
        education_level: EducationLevel,
        max_depth: Option<u32>,
    ) -> Result<Session, EngineError> {
        self.start_session_with_id(SessionId::random(), question, education_level, max_depth)
    }

    pub fn start_session_with_id(
        &self,
        session_id: SessionId,
        question: &str,
        education_level: EducationLevel,
        max_depth: Option<u32>,
    ) -> Result<Session, EngineError> {
        let question = question.trim();
        if normalize_label(question).is_err() {
            return Err(EngineError::EmptyQuestion);
        }
        let max_depth = max_depth.unwrap_or(DEFAULT_MAX_DEPTH);
        if !(1..=MAX_DEPTH_LIMIT).contains(&max_depth) {
            return Err(EngineError::InvalidMaxDepth(max_depth));
        }
        let raw = self.oracle.analyze_question(question, education_level)?;
        let labels: Vec<String> = raw
            .key_concepts
            .iter()
            .map(|c| c.display_label.clone())
            .collect();
        let analysis = validate_analysis(question, raw.understanding, raw.importance, &labels)
            .map_err(|reason| {
                EngineError::OracleFailure(OracleError::MalformedResponse {
                    reason,
                    raw: Vec::new(),
                })
            })?;
        let started = SessionEvent {
            seq: 0,
            at: self.clock.now(),
            kind: EventKind::Started {
                session_id,
                question: question.to_string(),
                education_level,
                max_depth,
            },
        };
        let mut session = Session::from_started(&started).map_err(EngineError::CorruptLog)?;
        self.record(&mut session, EventKind::Analyzed { analysis })?;
        Ok(session)
    }

    fn record(&self, session: &mut Session, kind: EventKind) -> Result<Vec<NodeId>, EngineError> {
        let event = SessionEvent {
            seq: session.event_log.len() as u64,
            at: self.clock.now(),
            kind,
        };
        session.push(event).map_err(EngineError::CorruptLog)
    }

    /// Records a know / don't-know answer and expands as far as the answer
    /// allows.
    ///
    /// Repeating an answer is a no-op apart from retrying expansions that an
    /// earlier oracle failure left pending. Changing an answer requires
    /// `force`; flipping unknown to known discards the concept's subtree.
    pub fn submit_assessment(
        &self,
        session: &mut Session,
        concept: &ConceptId,
        known: bool,
        force: bool,
    ) -> Result<AssessmentOutcome, EngineError> {
        let assessable = session
            .primary_id(concept)
            .is_some_and(|n| n != session.tree.root_id());
        if !assessable {
            return Err(EngineError::UnknownConcept(concept.to_string()));
        }
        let was_complete = session.is_complete();
        let mut effects = Effects {
            created: Vec::new(),
            cap: None,
        };
        match session.status.get(concept) {
            Status::Unassessed => {
                self.record(
                    session,
                    EventKind::Assessed {
                        concept: concept.clone(),
                        known,
                        forced: false,
                    },
                )?;
            }
            current if current == Status::from_known(known) => {}
            _ if !force => {
                return Err(EngineError::ConflictingAssessment {
                    concept: concept.clone(),
                    known: !known,
                })
            }
            _ => {
                tracing::info!(%concept, known, "assessment changed");
                self.record(
                    session,
                    EventKind::Assessed {
                        concept: concept.clone(),
                        known,
                        forced: true,
                    },
                )?;
            }
        }
        self.settle(session, concept, &mut effects)?;
        if session.is_complete() && !was_complete {
            self.record(session, EventKind::Completed)?;
        }
        Ok(self.outcome(session, effects))
    }

    /// Retries expansions left pending by an earlier oracle failure.
    pub fn retry_expansions(
        &self,
        session: &mut Session,
    ) -> Result<AssessmentOutcome, EngineError> {
        let was_complete = session.is_complete();
        let mut effects = Effects {
            created: Vec::new(),
            cap: None,
        };
        let root = session.tree.root().concept.clone();
        self.settle(session, &root, &mut effects)?;
        if session.is_complete() && !was_complete {
            self.record(session, EventKind::Completed)?;
        }
        Ok(self.outcome(session, effects))
    }

    fn outcome(&self, session: &Session, effects: Effects) -> AssessmentOutcome {
        let mut outcome = AssessmentOutcome {
            cap_reason: effects.cap,
            session_complete: session.is_complete(),
            ..Default::default()
        };
        for id in effects.created {
            let Some(node) = session.tree.node(id) else {
                continue;
            };
            match node.occurrence {
                Occurrence::Primary => outcome.new_nodes.push(node.clone()),
                Occurrence::DuplicateReference => outcome.duplicate_nodes.push(node.clone()),
            }
        }
        outcome
    }

    /// Decides every unknown, undecided primary node: cap it, or expand it
    /// from an earlier extraction or a fresh oracle call.
    fn settle(
        &self,
        session: &mut Session,
        assessed: &ConceptId,
        effects: &mut Effects,
    ) -> Result<(), EngineError> {
        while let Some(node) = session.unsettled() {
            let concept_id = node.concept.clone();
            let depth = node.depth;
            let node_id = node.node_id;
            let kind = if depth >= session.max_depth {
                EventKind::Capped {
                    concept: concept_id.clone(),
                    reason: CapReason::Depth,
                }
            } else if let Some(known) = session.extractions.get(&concept_id) {
                match known {
                    KnownExtraction::Fundamental => EventKind::Capped {
                        concept: concept_id.clone(),
                        reason: CapReason::Fundamental,
                    },
                    KnownExtraction::Prerequisites { prereqs } => EventKind::Expanded {
                        concept: concept_id.clone(),
                        prereqs: prereqs.clone(),
                    },
                }
            } else {
                let concept = session
                    .tree
                    .concept(&concept_id)
                    .cloned()
                    .expect("registered concept");
                let ctx = OracleRequestContext {
                    question: session.question.clone(),
                    education_level: session.education_level,
                    ancestor_chain: session
                        .tree
                        .ancestor_chain(node_id)
                        .iter()
                        .take(depth as usize)
                        .map(|c| session.tree.label(c).to_string())
                        .collect(),
                };
                let result = self.oracle.extract_prereqs(&concept, &ctx).map_err(|e| {
                    tracing::warn!(concept = %concept_id, error = %e, "expansion failed; retryable");
                    EngineError::OracleFailure(e)
                })?;
                if result.fundamental {
                    EventKind::Capped {
                        concept: concept_id.clone(),
                        reason: CapReason::Fundamental,
                    }
                } else {
                    EventKind::Expanded {
                        concept: concept_id.clone(),
                        prereqs: result.prerequisites,
                    }
                }
            };
            if let EventKind::Capped { reason, .. } = &kind {
                if &concept_id == assessed {
                    effects.cap = Some(*reason);
                }
            }
            let created = self.record(session, kind)?;
            effects.created.extend(created);
        }
        Ok(())
    }
}
