//! Saves a half-finished session, loads it back from disk and finishes it.
//! A copy with a damaged event log is refused on load.
//!
//! cargo run --example session_store

use std::sync::Arc;

use rpkt::oracle::FixtureOracle;
use rpkt::store::{decode, encode, FsStore, SessionStore};
use rpkt::{EducationLevel, Engine, Session};

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/backprop.json");

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("rpkt-example-{}", std::process::id()));
    let store = FsStore::open(&dir)?;
    let engine = Engine::new(Arc::new(FixtureOracle::load(FIXTURE)?));

    let mut session = engine.start_session(
        "How does backpropagation work in neural networks?",
        EducationLevel::Undergraduate,
        None,
    )?;
    let first = session.pending_assessments()[1].concept.id.clone();
    engine.submit_assessment(&mut session, &first, false, false)?;
    store.save(&session)?;
    println!(
        "saved {} to {}",
        session.session_id,
        store.path_of(&session.session_id).display()
    );

    let mut resumed = store.load(&session.session_id)?;
    assert_eq!(resumed, session);
    while let Some(next) = resumed.pending_assessments().into_iter().next() {
        engine.submit_assessment(&mut resumed, &next.concept.id, true, false)?;
        store.save(&resumed)?;
    }
    for summary in store.list()? {
        println!(
            "{}  {:?}  {}",
            summary.session_id, summary.phase, summary.question
        );
    }

    let replayed = Session::replay(&resumed.event_log)?;
    println!(
        "replayed {} events, identical: {}",
        resumed.event_log.len(),
        replayed == resumed
    );

    let mut doc: serde_json::Value = serde_json::from_slice(&encode(&resumed)?)?;
    doc["event_log"].as_array_mut().unwrap().remove(2);
    match decode(&serde_json::to_vec(&doc)?) {
        Err(e) => println!("damaged copy refused: {e}"),
        Ok(_) => println!("damaged copy accepted"),
    }

    store.delete(&resumed.session_id)?;
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
