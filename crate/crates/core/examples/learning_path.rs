//! A prerequisite shared by two branches is assessed once. The second
//! occurrence is marked as already confirmed and the study sequence lists
//! it once, before everything that needs it.
//!
//! cargo run --example learning_path

use std::sync::Arc;

use rpkt::oracle::FixtureOracle;
use rpkt::path::{
    build_path, build_path_with, flatten_sequence, render_json, render_text, PathOptions,
};
use rpkt::{normalize_label, EducationLevel, Engine};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let oracle = FixtureOracle::from_json(
        r#"{
            "version": 1,
            "analyses": [{"pattern": "*", "key_concepts": ["Bayes' Theorem", "Markov Chains"]}],
            "prerequisites": {
                "Bayes' Theorem": ["Conditional Probability", "Fractions"],
                "Markov Chains": ["Conditional Probability", "Matrices"],
                "Conditional Probability": ["Sets"]
            },
            "fundamentals": ["Fractions", "Matrices", "Sets"]
        }"#,
    )?;
    let engine = Engine::new(Arc::new(oracle));
    let mut session = engine.start_session(
        "How do hidden Markov models work?",
        EducationLevel::Graduate,
        None,
    )?;
    let answers = [
        ("Bayes' Theorem", false),
        ("Markov Chains", false),
        ("Conditional Probability", false),
        ("Fractions", true),
        ("Matrices", false),
        ("Sets", true),
    ];
    for (label, known) in answers {
        let id = normalize_label(label)?;
        let outcome = engine.submit_assessment(&mut session, &id, known, false)?;
        for dup in &outcome.duplicate_nodes {
            println!(
                "{} appears again at L{}",
                session.tree.label(&dup.concept),
                dup.depth
            );
        }
    }

    let path = build_path(&session);
    print!("{}", render_text(&path));
    println!("\nWith known concepts:");
    print!(
        "{}",
        render_text(&build_path_with(
            &session,
            PathOptions {
                include_known: true
            }
        ))
    );

    let sequence = flatten_sequence(&path);
    println!("\n{} items to study", sequence.len());
    println!("\nJSON form:\n{}", render_json(&path));
    Ok(())
}
