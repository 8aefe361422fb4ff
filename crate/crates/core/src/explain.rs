//! Assembling explanation requests from a session.

use sha2::{Digest, Sha256};

use crate::concept::{Occurrence, Status};
use crate::engine::Session;
use crate::oracle::ExplanationRequest;
use crate::path::{build_path, flatten_sequence, Marker};

/// The learner's known concepts in surfacing order and unknown concepts in
/// study order. `None` while nothing has been assessed.
pub fn explanation_request(session: &Session) -> Option<ExplanationRequest> {
    if session.status.is_empty() {
        return None;
    }
    let known = session
        .tree
        .nodes()
        .filter(|n| {
            n.occurrence == Occurrence::Primary && session.status_of(&n.concept) == Status::Known
        })
        .map(|n| session.tree.label(&n.concept).to_string())
        .collect();
    let unknown_ordered = flatten_sequence(&build_path(session))
        .into_iter()
        .filter(|item| item.marker == Marker::Unknown)
        .map(|item| item.label)
        .collect();
    Some(ExplanationRequest {
        question: session.question.clone(),
        education_level: session.education_level,
        known,
        unknown_ordered,
    })
}

/// Hash of everything an explanation depends on; equal fingerprints can share
/// a cached explanation.
pub fn status_fingerprint(session: &Session) -> String {
    let mut hasher = Sha256::new();
    hasher.update(session.session_id.as_str().as_bytes());
    hasher.update([0]);
    for (concept, status) in session.status.iter() {
        hasher.update(concept.as_str().as_bytes());
        hasher.update([0, status as u8]);
    }
    hex::encode(hasher.finalize())
}
