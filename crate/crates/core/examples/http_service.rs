//! Calls the HTTP API in process. Pass `--serve ADDR` to listen on a socket
//! instead, e.g. `--serve 127.0.0.1:8080`.
//!
//! cargo run --example http_service

use std::sync::Arc;

use axum::body::Body;
use axum::http::{header, Request};
use axum::Router;
use http_body_util::BodyExt;
use rpkt::api::{router, serve, AppState};
use rpkt::oracle::FixtureOracle;
use rpkt::store::FsStore;
use rpkt::Engine;
use serde_json::{json, Value};
use tower::ServiceExt;

const FIXTURE: &str = concat!(env!("CARGO_MANIFEST_DIR"), "/fixtures/backprop.json");

async fn send(app: &Router, method: &str, uri: &str, body: Option<Value>) -> Value {
    let mut req = Request::builder().method(method).uri(uri);
    if body.is_some() {
        req = req.header(header::CONTENT_TYPE, "application/json");
    }
    let req = req
        .body(
            body.map(|b| Body::from(b.to_string()))
                .unwrap_or_else(Body::empty),
        )
        .unwrap();
    let res = app.clone().oneshot(req).await.unwrap();
    let status = res.status();
    let bytes = res.into_body().collect().await.unwrap().to_bytes();
    println!("{method} {uri} -> {status}");
    serde_json::from_slice(&bytes)
        .unwrap_or_else(|_| Value::String(String::from_utf8_lossy(&bytes).into()))
}

#[tokio::main]
async fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dir = std::env::temp_dir().join(format!("rpkt-http-{}", std::process::id()));
    let engine = Engine::new(Arc::new(FixtureOracle::load(FIXTURE)?));
    let state = Arc::new(AppState::new(engine, Arc::new(FsStore::open(&dir)?)));

    let args: Vec<String> = std::env::args().collect();
    if let Some(addr) = args
        .iter()
        .position(|a| a == "--serve")
        .and_then(|i| args.get(i + 1))
    {
        println!("listening on {addr}, sessions in {}", dir.display());
        serve(state, addr, &["http://localhost:5173".to_string()]).await?;
        return Ok(());
    }

    let app = router(state, &[]);
    let created = send(
        &app,
        "POST",
        "/api/v1/sessions",
        Some(json!({"question": "How does backpropagation work in neural networks?", "education_level": "undergraduate"})),
    )
    .await;
    let id = created["session_id"].as_str().unwrap().to_string();
    let answer = json!({"concept_id": "gradient descent", "known": false});
    let assessed = send(
        &app,
        "POST",
        &format!("/api/v1/sessions/{id}/assessments"),
        Some(answer.clone()),
    )
    .await;
    println!("  new nodes: {}", assessed["outcome"]["new_nodes"]);
    send(
        &app,
        "POST",
        &format!("/api/v1/sessions/{id}/assessments"),
        Some(answer),
    )
    .await;
    let conflict = send(
        &app,
        "POST",
        &format!("/api/v1/sessions/{id}/assessments"),
        Some(json!({"concept_id": "gradient descent", "known": true})),
    )
    .await;
    println!("  {}", conflict["message"]);
    let path = send(
        &app,
        "GET",
        &format!("/api/v1/sessions/{id}/path.txt"),
        None,
    )
    .await;
    println!("{}", path.as_str().unwrap_or_default());
    let explanation = send(
        &app,
        "POST",
        &format!("/api/v1/sessions/{id}/explanation"),
        None,
    )
    .await;
    println!("{}", explanation["explanation"]);
    send(&app, "GET", "/healthz", None).await;
    std::fs::remove_dir_all(&dir)?;
    Ok(())
}
