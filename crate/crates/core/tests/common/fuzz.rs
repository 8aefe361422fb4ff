//! Hostile chat-completion payloads for the extraction parser.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::Rng;
use rpkt::normalize_label;
use rpkt::oracle::{ExtractionResult, OracleRequestContext, MAX_LABEL_CHARS, MAX_PREREQUISITES};
use rpkt::Concept;
use serde_json::{json, Value};

pub const CONCEPT: &str = "Derivative";

pub fn context() -> OracleRequestContext {
    OracleRequestContext {
        question: "How does backpropagation work?".into(),
        education_level: rpkt::EducationLevel::Undergraduate,
        ancestor_chain: vec![
            "How does backpropagation work?".into(),
            "Gradient Descent".into(),
        ],
    }
}

fn label(rng: &mut impl Rng) -> Value {
    let pool = [
        "Limits",
        "Function Notation",
        "Slopes",
        "Rates of Change",
        "derivative",
        "  DERIVATIVE.  ",
        "Gradient Descent",
        "how does backpropagation work",
        "",
        "   ",
        "!!!",
        "微分",
        "Δx → 0",
        "🙂 emoji",
        "tab\tand\nnewline",
        "\u{0}nul",
        "C++",
        "limits",
        "Limits!",
    ];
    match rng.gen_range(0..10) {
        0 => Value::String("x".repeat(rng.gen_range(150..260))),
        1 => json!(rng.gen::<i64>()),
        2 => Value::Null,
        3 => json!({"label": pool.choose(rng).unwrap(), "rationale": "because"}),
        4 => json!({"label": rng.gen::<f64>()}),
        5 => json!({"rationale": "no label"}),
        6 => json!([pool.choose(rng).unwrap()]),
        _ => Value::String(pool.choose(rng).unwrap().to_string()),
    }
}

fn document(rng: &mut impl Rng) -> Value {
    let n = rng.gen_range(0..10);
    let items: Vec<Value> = (0..n).map(|_| label(rng)).collect();
    let mut doc = serde_json::Map::new();
    match rng.gen_range(0..8) {
        0 => {}
        1 => {
            doc.insert("prerequisites".into(), Value::String("Limits".into()));
        }
        2 => {
            doc.insert("prerequisites".into(), Value::Null);
        }
        _ => {
            doc.insert("prerequisites".into(), Value::Array(items));
        }
    }
    match rng.gen_range(0..6) {
        0 => {}
        1 => {
            doc.insert("fundamental".into(), json!("yes"));
        }
        2 => {
            doc.insert("fundamental".into(), json!(1));
        }
        _ => {
            doc.insert("fundamental".into(), json!(rng.gen_bool(0.3)));
        }
    }
    if rng.gen_bool(0.2) {
        doc.insert("extra".into(), json!({"nested": [1, 2, {"deep": null}]}));
    }
    Value::Object(doc)
}

/// One payload; the mix covers raw bytes, broken and truncated JSON,
/// wrong shapes and valid documents full of bad labels.
pub fn payload(rng: &mut impl Rng) -> String {
    match rng.gen_range(0..12) {
        0 => {
            let bytes: Vec<u8> = (0..rng.gen_range(0..200)).map(|_| rng.gen()).collect();
            String::from_utf8_lossy(&bytes).into_owned()
        }
        1 => {
            let text = document(rng).to_string();
            let cut = rng.gen_range(0..=text.len());
            text.get(..cut).unwrap_or("").to_string()
        }
        2 => format!("```json\n{}\n```", document(rng)),
        3 => ["null", "[]", "42", "\"text\"", "true", "{}", ""]
            .choose(rng)
            .unwrap()
            .to_string(),
        4 => {
            let depth = rng.gen_range(100..400);
            format!("{}{}", "[".repeat(depth), "]".repeat(depth))
        }
        5 => format!("Here you go: {}", document(rng)),
        6 => r#"{"prerequisites": [{"label": "Limits", "rationale": 1e400}], "fundamental": 123456789012345678901234567890}"#
            .to_string(),
        _ => document(rng).to_string(),
    }
}

/// Checks an accepted extraction against the output contract.
pub fn check_contract(
    concept: &Concept,
    ctx: &OracleRequestContext,
    r: &ExtractionResult,
) -> Result<(), String> {
    if r.prerequisites.len() > MAX_PREREQUISITES {
        return Err(format!("{} prerequisites", r.prerequisites.len()));
    }
    if r.fundamental != r.prerequisites.is_empty() {
        return Err("fundamental flag disagrees with the prerequisite list".into());
    }
    let excluded: BTreeSet<_> = ctx
        .ancestor_chain
        .iter()
        .filter_map(|l| normalize_label(l).ok())
        .chain([concept.id.clone()])
        .collect();
    let mut seen = BTreeSet::new();
    for p in &r.prerequisites {
        if p.label.chars().count() > MAX_LABEL_CHARS {
            return Err("over-long label".into());
        }
        let id = normalize_label(&p.label).map_err(|_| format!("unusable label {:?}", p.label))?;
        if excluded.contains(&id) {
            return Err(format!("self or ancestor label {:?}", p.label));
        }
        if !seen.insert(id) {
            return Err(format!("repeated label {:?}", p.label));
        }
    }
    Ok(())
}

pub struct FuzzReport {
    pub accepted: usize,
    pub rejected: usize,
}

/// Feeds `cases` payloads through the remote extraction path. Every payload
/// must either yield an in-contract result or a `MalformedResponse`.
pub fn run(cases: usize, seed: u64) -> Result<FuzzReport, String> {
    use rand::SeedableRng;
    use rpkt::oracle::{Oracle, OracleError, RemoteConfig, RemoteOracle, ScriptedTransport};
    use std::sync::Arc;
    use std::time::Duration;

    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let concept = Concept::new(CONCEPT).unwrap();
    let ctx = context();
    let mut report = FuzzReport {
        accepted: 0,
        rejected: 0,
    };
    for case in 0..cases {
        let raw = payload(&mut rng);
        let transport = ScriptedTransport::new();
        transport.set_fallback(Ok(raw.clone()));
        let oracle = RemoteOracle::new(
            RemoteConfig {
                backoff_base: Duration::ZERO,
                ..RemoteConfig::default()
            },
            Arc::new(transport),
        );
        let outcome = std::panic::catch_unwind(std::panic::AssertUnwindSafe(|| {
            oracle.extract_prereqs(&concept, &ctx)
        }))
        .map_err(|_| format!("case {case} panicked on {raw:?}"))?;
        match outcome {
            Ok(result) => {
                check_contract(&concept, &ctx, &result)
                    .map_err(|e| format!("case {case}: {e} for {raw:?}"))?;
                report.accepted += 1;
            }
            Err(OracleError::MalformedResponse { .. }) => report.rejected += 1,
            Err(other) => return Err(format!("case {case}: unexpected error {other}")),
        }
    }
    Ok(report)
}
