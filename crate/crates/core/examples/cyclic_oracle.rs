//! An oracle whose prerequisites loop back on themselves. The session still
//! finishes: each concept is expanded once and edges that would close a
//! cycle are dropped.
//!
//! cargo run --example cyclic_oracle

use std::sync::Arc;

use rpkt::engine::EventKind;
use rpkt::oracle::FixtureOracle;
use rpkt::path::{build_path, flatten_sequence};
use rpkt::{EducationLevel, Engine};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let oracle = FixtureOracle::from_json(
        r#"{
            "version": 1,
            "analyses": [{"pattern": "*", "key_concepts": ["Eggs"]}],
            "prerequisites": {
                "Eggs": ["Chickens"],
                "Chickens": ["Eggs", "Feed"],
                "Feed": ["Chickens", "Feed", "Farming"]
            },
            "fundamentals": ["Farming"]
        }"#,
    )?;
    let engine = Engine::new(Arc::new(oracle));
    let mut session =
        engine.start_session("Which came first?", EducationLevel::HighSchool, Some(6))?;

    let mut answered = 0;
    while let Some(next) = session.pending_assessments().into_iter().next() {
        engine.submit_assessment(&mut session, &next.concept.id, false, false)?;
        answered += 1;
    }
    let expansions = session
        .event_log
        .iter()
        .filter(|e| matches!(e.kind, EventKind::Expanded { .. }))
        .count();
    println!("complete after {answered} answers and {expansions} expansions");
    for edge in session.tree.concept_edges() {
        println!("  {} -> {}", edge.0, edge.1);
    }
    let order: Vec<_> = flatten_sequence(&build_path(&session))
        .into_iter()
        .map(|i| i.label)
        .collect();
    println!("study order: {}", order.join(", "));
    Ok(())
}
