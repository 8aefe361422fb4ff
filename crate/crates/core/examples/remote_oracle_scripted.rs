//! Drives the chat-completion oracle through an in-process transport: one
//! unusable reply is repaired, an oversized list is clamped and labels that
//! point back up the chain are dropped.
//!
//! With `RPKT_API_KEY` set and `--live` given, the same calls go to the
//! configured endpoint instead.
//!
//! cargo run --example remote_oracle_scripted

use std::sync::Arc;

use rpkt::config::Config;
use rpkt::oracle::{OracleRequestContext, RemoteConfig, RemoteOracle, ScriptedTransport};
use rpkt::{Concept, EducationLevel, Oracle};
use serde_json::json;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let question = "How does backpropagation work?";
    let live = std::env::args().any(|a| a == "--live");
    let transport = ScriptedTransport::new();
    let oracle = if live {
        RemoteOracle::http(Config::default().remote())
    } else {
        transport.push_json(&json!({
            "understanding": "Backpropagation computes gradients layer by layer.",
            "importance": "It is how networks learn.",
            "key_concepts": ["Gradient Descent", "Chain Rule"]
        }));
        transport.push("Sure! Derivative needs limits and slopes.");
        transport.push_json(&json!({"prerequisites": [
            {"label": "Limits", "rationale": "derivatives are limits"},
            "Gradient Descent", "Derivative", "Slopes", "Functions", "Graphs", "Algebra"
        ]}));
        RemoteOracle::new(RemoteConfig::default(), Arc::new(transport.clone()))
    };

    let analysis = oracle.analyze_question(question, EducationLevel::Undergraduate)?;
    let keys: Vec<_> = analysis
        .key_concepts
        .iter()
        .map(|c| c.display_label.as_str())
        .collect();
    println!("key concepts: {}", keys.join(", "));

    let ctx = OracleRequestContext {
        question: question.into(),
        education_level: EducationLevel::Undergraduate,
        ancestor_chain: vec![question.into(), "Gradient Descent".into()],
    };
    let result = oracle.extract_prereqs(&Concept::new("Derivative")?, &ctx)?;
    for p in &result.prerequisites {
        println!("  {} {}", p.label, p.rationale.as_deref().unwrap_or(""));
    }
    println!("{:?}", oracle.stats());
    if !live {
        println!("{} requests sent", transport.call_count());
    }
    Ok(())
}
