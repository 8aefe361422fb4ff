//! Traces the backpropagation question against the shipped fixture with a
//! fixed set of answers, printing each step and the final learning path.
//!
//! cargo run --example trace_backprop

use std::sync::Arc;

use rpkt::oracle::FixtureOracle;
use rpkt::path::{build_path, render_text};
use rpkt::{normalize_label, EducationLevel, Engine};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/backprop.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::new(Arc::new(FixtureOracle::load(FIXTURE)?));
    let mut session = engine.start_session(
        "How does backpropagation work in neural networks?",
        EducationLevel::Undergraduate,
        Some(3),
    )?;
    println!("{}\n", session.analysis.understanding);

    let unknown = ["gradient descent", "derivative", "limits"];
    while let Some(next) = session.pending_assessments().into_iter().next() {
        let known = !unknown.contains(&next.concept.id.as_str());
        let outcome = engine.submit_assessment(&mut session, &next.concept.id, known, false)?;
        println!(
            "L{} {:<20} {}",
            next.depth,
            next.concept.display_label,
            if known { "know" } else { "don't know" }
        );
        for node in &outcome.new_nodes {
            println!(
                "   + {} [L{}]",
                session.tree.label(&node.concept),
                node.depth
            );
        }
        if let Some(reason) = outcome.cap_reason {
            println!("   stopped here: {reason:?}");
        }
    }

    println!("\n{}", render_text(&build_path(&session)));
    let limits = normalize_label("Limits")?;
    println!("Limits is {:?}", session.status_of(&limits));
    Ok(())
}
