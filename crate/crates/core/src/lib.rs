//! Recursive prerequisite tracing for personalized learning paths.
//!
//! Start a [`Session`] for a question, answer know / don't-know for each
//! surfaced concept, and get back a tree of the gaps behind the question, an
//! ordered study sequence and a colored concept graph.
//!
//! ```
//! use std::sync::Arc;
//! use rpkt::{normalize_label, EducationLevel, Engine};
//! use rpkt::oracle::FixtureOracle;
//!
//! let oracle = FixtureOracle::from_json(r#"{
//!     "version": 1,
//!     "analyses": [{"pattern": "*", "key_concepts": ["Gradient Descent"]}],
//!     "prerequisites": {"Gradient Descent": ["Derivative"]}
//! }"#).unwrap();
//! let engine = Engine::new(Arc::new(oracle));
//! let mut session = engine
//!     .start_session("How does training work?", EducationLevel::Undergraduate, None)
//!     .unwrap();
//! let gd = normalize_label("Gradient Descent").unwrap();
//! let outcome = engine.submit_assessment(&mut session, &gd, false, false).unwrap();
//! assert_eq!(outcome.new_nodes[0].concept.as_str(), "derivative");
//! ```

pub mod api;
pub mod cli;
pub mod concept;
pub mod config;
pub mod engine;
pub mod explain;
pub mod graph;
pub mod oracle;
pub mod path;
pub mod store;

pub use concept::{
    normalize_label, Concept, ConceptError, ConceptId, Expansion, KnowledgeStatus, NodeId,
    Occurrence, Status, TraceNode, TraceTree,
};
pub use engine::{
    AssessmentOutcome, CapReason, Clock, Engine, EngineError, EventKind, LogicalClock,
    PendingAssessment, Phase, Session, SessionEvent, SessionId, SystemClock,
};
pub use oracle::{EducationLevel, Oracle, OracleError, OracleMode};
