//! Exports the merged concept graph of a finished session as Graphviz DOT
//! and JSON. Pipe the DOT into `dot -Tsvg` to draw it.
//!
//! cargo run --example graph_export > graph.dot

use std::sync::Arc;

use rpkt::graph::{export_graph, render_dot, render_json};
use rpkt::oracle::FixtureOracle;
use rpkt::{EducationLevel, Engine};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/backprop.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let engine = Engine::new(Arc::new(FixtureOracle::load(FIXTURE)?));
    let mut session = engine.start_session(
        "How does backpropagation work in neural networks?",
        EducationLevel::Undergraduate,
        Some(4),
    )?;
    // everything is unknown until the fixture runs out of prerequisites
    while let Some(next) = session.pending_assessments().into_iter().next() {
        engine.submit_assessment(&mut session, &next.concept.id, false, false)?;
    }
    let doc = export_graph(&session);
    eprintln!("{} concepts, {} edges", doc.nodes.len(), doc.edges.len());
    for node in &doc.nodes {
        eprintln!(
            "  L{} {:<24} {}",
            node.min_depth,
            node.label,
            node.color.as_str()
        );
    }
    eprintln!(
        "{}",
        render_json(&doc)
            .lines()
            .take(12)
            .collect::<Vec<_>>()
            .join("\n")
    );
    print!("{}", render_dot(&doc));
    Ok(())
}
