#![allow(dead_code)]

pub mod fuzz;

use std::collections::hash_map::DefaultHasher;
use std::collections::{BTreeMap, BTreeSet};
use std::hash::{Hash, Hasher};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rand::seq::SliceRandom;
use rand::Rng;
use rpkt::concept::{ConceptId, Status};
use rpkt::engine::{Engine, LogicalClock, Session, SessionId};
use rpkt::normalize_label;
use rpkt::oracle::{CountingOracle, EducationLevel, FixtureAnalysis, FixtureGraph, FixtureOracle};
use rpkt::path::{build_path, flatten_sequence};

pub const BACKPROP_QUESTION: &str = "How does backpropagation work in neural networks?";

pub fn crate_dir() -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
}

pub fn fixture_path() -> PathBuf {
    crate_dir().join("fixtures/backprop.json")
}

pub fn answers_path() -> PathBuf {
    crate_dir().join("fixtures/backprop_answers.json")
}

pub fn golden_dir() -> PathBuf {
    crate_dir().join("tests/golden")
}

pub fn id(label: &str) -> ConceptId {
    normalize_label(label).unwrap()
}

/// Compares `actual` with the golden file at `rel`, or rewrites the file
/// when `RPKT_BLESS` is set.
pub fn check_golden(rel: &str, actual: &[u8]) -> Result<(), String> {
    let path = golden_dir().join(rel);
    if std::env::var_os("RPKT_BLESS").is_some() {
        std::fs::create_dir_all(path.parent().unwrap()).unwrap();
        std::fs::write(&path, actual).unwrap();
        return Ok(());
    }
    let expected = std::fs::read(&path)
        .map_err(|e| format!("{}: {e} (run with RPKT_BLESS=1 to create)", path.display()))?;
    if expected == actual {
        return Ok(());
    }
    let exp = String::from_utf8_lossy(&expected);
    let act = String::from_utf8_lossy(actual);
    let line = exp
        .lines()
        .zip(act.lines())
        .position(|(a, b)| a != b)
        .map(|i| i + 1)
        .unwrap_or_else(|| exp.lines().count().min(act.lines().count()) + 1);
    Err(format!(
        "{} differs from output at line {line}",
        path.display()
    ))
}

pub fn backprop_engine() -> (Engine, Arc<CountingOracle<FixtureOracle>>) {
    let oracle = Arc::new(CountingOracle::new(
        FixtureOracle::load(fixture_path()).unwrap(),
    ));
    let engine = Engine::with_clock(oracle.clone(), Arc::new(LogicalClock::default()));
    (engine, oracle)
}

pub fn golden_answers() -> BTreeMap<ConceptId, bool> {
    let raw: BTreeMap<String, bool> =
        serde_json::from_str(&std::fs::read_to_string(answers_path()).unwrap()).unwrap();
    raw.into_iter().map(|(k, v)| (id(&k), v)).collect()
}

pub struct GoldenRun {
    /// State once only the L3 concepts remain to be assessed.
    pub midpoint: Session,
    pub complete: Session,
    /// Pending concepts right after the session started.
    pub initial_pending: Vec<String>,
    /// Concepts added when Gradient Descent was marked unknown.
    pub gradient_descent_children: Vec<String>,
    pub oracle_calls: usize,
}

/// Plays the demonstration script: answers the lowest-numbered pending
/// concept each time, unlisted concepts count as known.
pub fn run_golden() -> GoldenRun {
    let (engine, oracle) = backprop_engine();
    let answers = golden_answers();
    let mut session = engine
        .start_session_with_id(
            SessionId::derive(&[b"backprop-golden"]),
            BACKPROP_QUESTION,
            EducationLevel::Undergraduate,
            Some(3),
        )
        .unwrap();
    let initial_pending = session
        .pending_assessments()
        .iter()
        .map(|p| p.concept.display_label.clone())
        .collect();
    let mut midpoint = None;
    let mut gradient_descent_children = Vec::new();
    while let Some(next) = session.pending_assessments().into_iter().next() {
        if next.depth == 3 && midpoint.is_none() {
            midpoint = Some(session.clone());
        }
        let known = answers.get(&next.concept.id).copied().unwrap_or(true);
        let outcome = engine
            .submit_assessment(&mut session, &next.concept.id, known, false)
            .unwrap();
        if next.concept.id == id("gradient descent") {
            gradient_descent_children = outcome
                .new_nodes
                .iter()
                .map(|n| session.tree.label(&n.concept).to_string())
                .collect();
        }
    }
    let counts = oracle.counts();
    GoldenRun {
        midpoint: midpoint.expect("golden run reaches L3"),
        complete: session,
        initial_pending,
        gradient_descent_children,
        oracle_calls: counts.analyze + counts.total_extractions() + counts.explain,
    }
}

fn label(i: usize) -> String {
    format!("Concept {i}")
}

/// Random prerequisite graph over at most `max_concepts` concepts with at
/// most four prerequisites each. Edges point from lower to higher indices;
/// with `cycle_prob > 0`, each concept additionally gets a back edge (to
/// itself or an earlier concept) with that probability.
pub fn random_fixture(rng: &mut impl Rng, max_concepts: usize, cycle_prob: f64) -> FixtureGraph {
    let n = rng.gen_range(2..=max_concepts);
    let keys = rng.gen_range(1..=n.min(6));
    let mut prerequisites = BTreeMap::new();
    let mut fundamentals = Vec::new();
    for i in 0..n {
        let mut list = Vec::new();
        let later: Vec<usize> = (i + 1..n).collect();
        let count = rng.gen_range(0..=4usize).min(later.len());
        for &j in later.choose_multiple(rng, count) {
            // vary case and spacing; normalization must merge them
            let l = if rng.gen_bool(0.1) {
                format!("  concept   {j} ")
            } else {
                label(j)
            };
            list.push(l);
        }
        if cycle_prob > 0.0 && rng.gen_bool(cycle_prob) {
            list.push(label(rng.gen_range(0..=i)));
        }
        if list.is_empty() && rng.gen_bool(0.5) {
            fundamentals.push(label(i));
        } else if !list.is_empty() || rng.gen_bool(0.5) {
            prerequisites.insert(label(i), list);
        }
    }
    FixtureGraph {
        version: 1,
        open_mode: true,
        analyses: vec![FixtureAnalysis {
            pattern: "*".into(),
            understanding: String::new(),
            importance: String::new(),
            key_concepts: (0..keys).map(label).collect(),
        }],
        prerequisites,
        fundamentals,
        explanations: Vec::new(),
    }
}

/// Deterministic answer for a concept, known for about a third of them.
pub fn answer_of(concept: &ConceptId, salt: u64) -> bool {
    let mut h = DefaultHasher::new();
    salt.hash(&mut h);
    concept.as_str().hash(&mut h);
    h.finish().is_multiple_of(3)
}

pub fn random_engine(graph: FixtureGraph) -> (Engine, Arc<CountingOracle<FixtureOracle>>) {
    let oracle = Arc::new(CountingOracle::new(FixtureOracle::new(graph).unwrap()));
    let engine = Engine::with_clock(oracle.clone(), Arc::new(LogicalClock::default()));
    (engine, oracle)
}

pub struct DriveReport {
    pub steps: usize,
}

/// Answers pending concepts in random order until the session completes.
/// With `flip_prob > 0`, occasionally forces an earlier answer to flip.
pub fn drive(
    engine: &Engine,
    session: &mut Session,
    rng: &mut impl Rng,
    answer: &dyn Fn(&ConceptId) -> bool,
    flip_prob: f64,
) -> Result<DriveReport, String> {
    const STEP_LIMIT: usize = 10_000;
    let mut steps = 0;
    loop {
        let pending = session.pending_assessments();
        if pending.is_empty() {
            break;
        }
        steps += 1;
        if steps > STEP_LIMIT {
            return Err("session did not terminate".into());
        }
        if flip_prob > 0.0 && rng.gen_bool(flip_prob) {
            let assessed: Vec<(ConceptId, Status)> = session
                .status
                .iter()
                .filter(|(c, _)| session.tree.primary_of(c).is_some())
                .map(|(c, s)| (c.clone(), s))
                .collect();
            if let Some((c, s)) = assessed.choose(rng) {
                engine
                    .submit_assessment(session, c, *s != Status::Known, true)
                    .map_err(|e| e.to_string())?;
                session.check_invariants()?;
                continue;
            }
        }
        let pick = pending.choose(rng).unwrap();
        engine
            .submit_assessment(session, &pick.concept.id, answer(&pick.concept.id), false)
            .map_err(|e| e.to_string())?;
        session.check_invariants()?;
    }
    if !session.is_complete() {
        return Err("no pending assessments but session is not complete".into());
    }
    Ok(DriveReport { steps })
}

pub fn start_random(engine: &Engine, max_depth: u32, n: u64) -> Session {
    engine
        .start_session_with_id(
            SessionId::derive(&[&n.to_le_bytes()]),
            &format!("Random question {n}"),
            EducationLevel::Undergraduate,
            Some(max_depth),
        )
        .unwrap()
}

/// Everything that must not depend on answer order.
#[derive(Debug, PartialEq, Eq)]
pub struct Signature {
    pub concepts: BTreeSet<ConceptId>,
    pub edges: BTreeSet<(ConceptId, ConceptId)>,
    pub status: Vec<(ConceptId, Status)>,
    pub sequence: Vec<ConceptId>,
}

pub fn signature(session: &Session) -> Signature {
    Signature {
        concepts: session.tree.surfaced_concepts(),
        edges: session.tree.concept_edges(),
        status: session.status.iter().map(|(c, s)| (c.clone(), s)).collect(),
        sequence: flatten_sequence(&build_path(session))
            .into_iter()
            .map(|i| i.concept)
            .collect(),
    }
}

/// Checks that no concept in the study sequence comes after a surfaced
/// concept that depends on it.
pub fn check_topological(session: &Session) -> Result<(), String> {
    let seq = flatten_sequence(&build_path(session));
    let pos: BTreeMap<&ConceptId, usize> = seq
        .iter()
        .enumerate()
        .map(|(i, s)| (&s.concept, i))
        .collect();
    let root = &session.tree.root().concept;
    if seq.last().map(|s| &s.concept) != Some(root) {
        return Err("target is not last".into());
    }
    if pos.len() != seq.len() {
        return Err("a concept appears twice".into());
    }
    for (dependent, prereq) in session.tree.concept_edges() {
        if let (Some(d), Some(p)) = (pos.get(&dependent), pos.get(&prereq)) {
            if p > d {
                return Err(format!(
                    "{prereq} is sequenced after its dependent {dependent}"
                ));
            }
        }
    }
    for (c, s) in session.status.iter() {
        if s == Status::Unknown && session.tree.primary_of(c).is_some() && !pos.contains_key(c) {
            return Err(format!("unknown concept {c} missing from the sequence"));
        }
    }
    Ok(())
}

pub fn read(path: &Path) -> Vec<u8> {
    std::fs::read(path).unwrap_or_else(|e| panic!("{}: {e}", path.display()))
}

/// Saves `session`, reloads it and checks that damaged copies are refused:
/// a log with a gap, a reordered log and a snapshot that disagrees.
pub fn check_storage(store: &rpkt::store::FsStore, session: &Session) -> Result<(), String> {
    use rpkt::store::{decode, encode, SessionStore, StoreError};
    store.save(session).map_err(|e| e.to_string())?;
    let loaded = store.load(&session.session_id).map_err(|e| e.to_string())?;
    if &loaded != session {
        return Err("reloaded session differs".into());
    }
    let bytes = encode(session).map_err(|e| e.to_string())?;
    if encode(&loaded).map_err(|e| e.to_string())? != bytes {
        return Err("encoding is not stable across a round trip".into());
    }
    let doc: serde_json::Value = serde_json::from_slice(&bytes).unwrap();
    let refused = |doc: &serde_json::Value, what: &str| -> Result<(), String> {
        match decode(&serde_json::to_vec(doc).unwrap()) {
            Err(StoreError::CorruptLog(_)) => Ok(()),
            Err(e) => Err(format!("{what}: unexpected error {e}")),
            Ok(_) => Err(format!("{what} was accepted")),
        }
    };
    let events = doc["event_log"].as_array().unwrap().len();
    if events >= 3 {
        let mut gap = doc.clone();
        gap["event_log"].as_array_mut().unwrap().remove(events / 2);
        refused(&gap, "log with a gap")?;
        let mut swapped = doc.clone();
        swapped["event_log"].as_array_mut().unwrap().swap(1, 2);
        refused(&swapped, "reordered log")?;
    }
    let mut drift = doc.clone();
    drift["snapshot"]["question"] = serde_json::json!("something else");
    refused(&drift, "drifted snapshot")?;
    let mut phase = doc.clone();
    phase["snapshot"]["phase"] = serde_json::json!(if session.is_complete() {
        "assessing"
    } else {
        "complete"
    });
    refused(&phase, "snapshot with the wrong phase")
}
