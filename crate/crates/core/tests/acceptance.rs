//! One line per acceptance criterion. Exits non-zero when any fails.

mod common;

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::sync::Arc;
use std::time::{Duration, Instant};

use common::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rpkt::engine::EventKind;
use rpkt::graph::{export_graph, Color};
use rpkt::path::{build_path, Marker, PathEntry};
use rpkt::store::FsStore;
use rpkt::{EngineError, Session};

const GOLDEN_BUDGET: Duration = Duration::from_secs(1);
const TERMINATION_FIXTURES: u64 = 1_000;
const TERMINATION_BUDGET: Duration = Duration::from_secs(30);
const MAX_CONCEPTS: usize = 50;
const CYCLE_PROB: f64 = 0.3;
const ORDER_FIXTURES: u64 = 200;
const ORDERS: u64 = 5;
const REPLAY_SESSIONS: u64 = 500;
const FUZZ_CASES: usize = 10_000;

type Check = fn() -> Result<String, String>;

fn ensure(cond: bool, msg: impl FnOnce() -> String) -> Result<(), String> {
    if cond {
        Ok(())
    } else {
        Err(msg())
    }
}

fn child<'a>(entry: &'a PathEntry, label: &str) -> Result<&'a PathEntry, String> {
    entry
        .children
        .iter()
        .find(|c| c.label == label)
        .ok_or_else(|| format!("{label} missing under {}", entry.label))
}

fn golden_replay() -> Result<String, String> {
    let start = Instant::now();
    let run = run_golden();
    ensure(
        run.initial_pending
            == [
                "Forward Propagation",
                "Gradient Descent",
                "Loss Functions",
                "Chain Rule",
            ],
        || format!("initial concepts {:?}", run.initial_pending),
    )?;
    ensure(
        run.gradient_descent_children == ["Derivative", "Cost Function"],
        || format!("L2 expansion {:?}", run.gradient_descent_children),
    )?;
    let mid = build_path(&run.midpoint);
    let gd = child(&mid, "Gradient Descent")?;
    let derivative = child(gd, "Derivative")?;
    let limits = child(derivative, "Limits")?;
    ensure(
        (gd.marker, derivative.marker, limits.marker)
            == (Marker::Unknown, Marker::Unknown, Marker::Unassessed),
        || "path chain markers".into(),
    )?;
    let done = build_path(&run.complete);
    let limits = child(
        child(child(&done, "Gradient Descent")?, "Derivative")?,
        "Limits",
    )?;
    ensure(limits.marker == Marker::Unknown, || {
        "Limits not unknown at the cap".into()
    })?;
    let graph = export_graph(&run.complete);
    let depths: std::collections::BTreeSet<u32> = graph.nodes.iter().map(|n| n.min_depth).collect();
    ensure(depths.into_iter().eq(0..=3), || {
        "graph does not span L0-L3".into()
    })?;
    for n in &graph.nodes {
        ensure(
            n.color == Color::of(run.complete.status_of(&n.concept)),
            || format!("{} colored {:?}", n.concept, n.color),
        )?;
    }
    let mid_limits = export_graph(&run.midpoint)
        .nodes
        .into_iter()
        .find(|n| n.concept == id("limits"))
        .ok_or("limits missing from the midpoint graph")?;
    ensure(
        (mid_limits.min_depth, mid_limits.color) == (3, Color::Blue),
        || "midpoint Limits is not blue at L3".into(),
    )?;
    for (prefix, session) in [("midpoint", &run.midpoint), ("final", &run.complete)] {
        let path = build_path(session);
        let doc = export_graph(session);
        let files = [
            ("path.txt", rpkt::path::render_text(&path)),
            ("path.json", rpkt::path::render_json(&path)),
            ("graph.dot", rpkt::graph::render_dot(&doc)),
            ("graph.json", rpkt::graph::render_json(&doc)),
        ];
        for (name, bytes) in files {
            check_golden(&format!("backprop/{prefix}_{name}"), bytes.as_bytes())?;
        }
    }
    check_golden(
        "backprop/final_session.json",
        &rpkt::store::encode(&run.complete).map_err(|e| e.to_string())?,
    )?;
    let elapsed = start.elapsed();
    ensure(elapsed < GOLDEN_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "9 golden files identical, {} oracle calls",
        run.oracle_calls
    ))
}

fn termination() -> Result<String, String> {
    let start = Instant::now();
    let mut steps = 0;
    let mut expansions = 0;
    for seed in 0..TERMINATION_FIXTURES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let max_depth = rng.gen_range(1..=6);
        let (engine, oracle) = random_engine(random_fixture(&mut rng, MAX_CONCEPTS, CYCLE_PROB));
        let mut session = start_random(&engine, max_depth, seed);
        let report = drive(
            &engine,
            &mut session,
            &mut rng,
            &|c| answer_of(c, seed),
            0.0,
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        steps += report.steps;
        let distinct = session.tree.surfaced_concepts().len();
        let expanded = session
            .event_log
            .iter()
            .filter(|e| matches!(e.kind, EventKind::Expanded { .. }))
            .count();
        expansions += expanded;
        ensure(expanded <= distinct, || {
            format!("seed {seed}: {expanded} expansions, {distinct} concepts")
        })?;
        ensure(session.tree.nodes().all(|n| n.depth <= max_depth), || {
            format!("seed {seed}: node deeper than {max_depth}")
        })?;
        ensure(oracle.counts().extract.values().all(|&n| n == 1), || {
            format!("seed {seed}: concept extracted twice")
        })?;
    }
    let elapsed = start.elapsed();
    ensure(elapsed < TERMINATION_BUDGET, || format!("took {elapsed:?}"))?;
    Ok(format!(
        "{TERMINATION_FIXTURES} sessions complete, {steps} assessments, {expansions} expansions"
    ))
}

fn order_independence() -> Result<String, String> {
    for seed in 0..ORDER_FIXTURES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xA11CE);
        let max_depth = rng.gen_range(1..=6);
        let graph = random_fixture(&mut rng, MAX_CONCEPTS, 0.0);
        let mut first = None;
        for order in 0..ORDERS {
            let (engine, _) = random_engine(graph.clone());
            let mut session = start_random(&engine, max_depth, seed);
            let mut order_rng =
                ChaCha8Rng::seed_from_u64(seed.wrapping_mul(31).wrapping_add(order));
            drive(
                &engine,
                &mut session,
                &mut order_rng,
                &|c| answer_of(c, seed),
                0.0,
            )
            .map_err(|e| format!("seed {seed}: {e}"))?;
            let sig = signature(&session);
            match &first {
                None => first = Some(sig),
                Some(f) => ensure(*f == sig, || format!("seed {seed}: order {order} diverges"))?,
            }
        }
    }
    Ok(format!("{ORDER_FIXTURES} fixtures x {ORDERS} orders agree"))
}

fn topological_soundness() -> Result<String, String> {
    let mut checked = 0;
    for seed in 0..TERMINATION_FIXTURES {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x70905);
        let max_depth = rng.gen_range(1..=6);
        let cycles = if seed % 2 == 0 { CYCLE_PROB } else { 0.0 };
        let (engine, _) = random_engine(random_fixture(&mut rng, MAX_CONCEPTS, cycles));
        let mut session = start_random(&engine, max_depth, seed);
        loop {
            check_topological(&session).map_err(|e| format!("seed {seed}: {e}"))?;
            checked += 1;
            let pending = session.pending_assessments();
            if pending.is_empty() {
                break;
            }
            let pick = &pending[rng.gen_range(0..pending.len())];
            engine
                .submit_assessment(
                    &mut session,
                    &pick.concept.id,
                    answer_of(&pick.concept.id, seed),
                    false,
                )
                .map_err(|e| e.to_string())?;
        }
    }
    Ok(format!("{checked} session states checked"))
}

fn event_sourcing() -> Result<String, String> {
    let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
    let store = FsStore::open(dir.path()).map_err(|e| e.to_string())?;
    let mut events = 0;
    for seed in 0..REPLAY_SESSIONS {
        let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xE7E47);
        let max_depth = rng.gen_range(1..=6);
        let (engine, _) = random_engine(random_fixture(&mut rng, 30, CYCLE_PROB));
        let mut session = start_random(&engine, max_depth, seed);
        drive(
            &engine,
            &mut session,
            &mut rng,
            &|c| answer_of(c, seed),
            0.1,
        )
        .map_err(|e| format!("seed {seed}: {e}"))?;
        let replayed = Session::replay(&session.event_log).map_err(|e| e.to_string())?;
        ensure(replayed == session, || {
            format!("seed {seed}: replay differs")
        })?;
        events += session.event_log.len();
        let mut gap = session.event_log.clone();
        if gap.len() >= 3 {
            gap.remove(rng.gen_range(1..gap.len() - 1));
            ensure(
                matches!(Session::replay(&gap), Err(EngineError::CorruptLog(_))),
                || format!("seed {seed}: gap not detected"),
            )?;
        }
        check_storage(&store, &session).map_err(|e| format!("seed {seed}: {e}"))?;
    }
    Ok(format!(
        "{REPLAY_SESSIONS} replays over {events} events, every tampered copy refused"
    ))
}

fn remote_robustness() -> Result<String, String> {
    use rpkt::oracle::{Oracle, OracleError, RemoteConfig, RemoteOracle, ScriptedTransport};
    use serde_json::json;

    let oracle = |t: &ScriptedTransport| {
        RemoteOracle::new(
            RemoteConfig {
                backoff_base: Duration::ZERO,
                ..RemoteConfig::default()
            },
            Arc::new(t.clone()),
        )
    };
    let concept = rpkt::Concept::new(fuzz::CONCEPT).map_err(|e| e.to_string())?;
    let ctx = fuzz::context();
    let labels = |r: &rpkt::oracle::ExtractionResult| -> Vec<String> {
        r.prerequisites.iter().map(|p| p.label.clone()).collect()
    };

    let t = ScriptedTransport::new();
    t.push("not json")
        .push_json(&json!({"prerequisites": ["Limits"]}));
    let o = oracle(&t);
    let r = o
        .extract_prereqs(&concept, &ctx)
        .map_err(|e| e.to_string())?;
    ensure(
        labels(&r) == ["Limits"] && o.stats().repair_retries == 1 && t.call_count() == 2,
        || "malformed-then-valid did not take exactly one retry".into(),
    )?;

    let t = ScriptedTransport::new();
    t.push("a").push("b").push("c");
    match oracle(&t).extract_prereqs(&concept, &ctx) {
        Err(OracleError::MalformedResponse { raw, .. }) if raw.len() == 3 => {}
        other => return Err(format!("three malformed replies gave {other:?}")),
    }

    let t = ScriptedTransport::new();
    t.push_json(&json!({"prerequisites": [
        "Derivative", "Gradient Descent", "A", "B", "C", "D", "E"
    ]}));
    let r = oracle(&t)
        .extract_prereqs(&concept, &ctx)
        .map_err(|e| e.to_string())?;
    ensure(labels(&r) == ["A", "B", "C", "D"], || {
        format!("clamp and filter gave {:?}", labels(&r))
    })?;

    let report = fuzz::run(FUZZ_CASES, 0xF022)?;
    Ok(format!(
        "scripted cases hold; fuzz {FUZZ_CASES}: {} accepted in contract, {} rejected",
        report.accepted, report.rejected
    ))
}

mod api_contract {
    use super::*;
    use axum::body::Body;
    use axum::http::{header, Request, StatusCode};
    use axum::Router;
    use http_body_util::BodyExt;
    use rpkt::api::{router, AppState};
    use rpkt::oracle::{CountingOracle, FixtureOracle};
    use rpkt::{Engine, LogicalClock};
    use serde_json::{json, Value};
    use tower::ServiceExt;

    async fn call(
        app: &Router,
        method: &str,
        uri: &str,
        body: Option<Value>,
    ) -> (StatusCode, Value) {
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
        (
            status,
            serde_json::from_slice(&bytes).unwrap_or(Value::Null),
        )
    }

    fn app(dir: &std::path::Path) -> (Router, Arc<CountingOracle<FixtureOracle>>) {
        let oracle = Arc::new(CountingOracle::new(
            FixtureOracle::load(fixture_path()).unwrap(),
        ));
        let engine = Engine::with_clock(oracle.clone(), Arc::new(LogicalClock::default()));
        let store = Arc::new(FsStore::open(dir).unwrap());
        (router(Arc::new(AppState::new(engine, store)), &[]), oracle)
    }

    fn expect(got: StatusCode, want: StatusCode, what: &str) -> Result<(), String> {
        ensure(got == want, || format!("{what}: {got}, expected {want}"))
    }

    pub async fn scenario() -> Result<String, String> {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let (app, oracle) = app(dir.path());
        let mut checks = 0;
        let mut check = |r: Result<(), String>| {
            checks += 1;
            r
        };

        let create = json!({"question": BACKPROP_QUESTION, "education_level": "undergraduate"});
        let (s, body) = call(&app, "POST", "/api/v1/sessions", Some(create)).await;
        check(expect(s, StatusCode::CREATED, "create"))?;
        check(ensure(
            body["pending"].as_array().map(Vec::len) == Some(4),
            || "4 pending".into(),
        ))?;
        let id = body["session_id"].as_str().unwrap().to_string();
        let base = format!("/api/v1/sessions/{id}");

        for bad in [
            json!({"question": "", "education_level": "undergraduate"}),
            json!({"question": "q", "education_level": "undergraduate", "max_depth": 0}),
        ] {
            let (s, _) = call(&app, "POST", "/api/v1/sessions", Some(bad)).await;
            check(expect(s, StatusCode::UNPROCESSABLE_ENTITY, "invalid body"))?;
        }

        let (s, path) = call(&app, "GET", &format!("{base}/path"), None).await;
        check(expect(s, StatusCode::OK, "fresh path"))?;
        check(ensure(path.get("children").is_none(), || {
            "fresh path is not target-only".into()
        }))?;
        let (s, _) = call(&app, "POST", &format!("{base}/explanation"), None).await;
        check(expect(
            s,
            StatusCode::CONFLICT,
            "explanation before any answer",
        ))?;

        let assess = |concept: &str, known: bool, force: bool| json!({"concept_id": concept, "known": known, "force": force});
        let uri = format!("{base}/assessments");
        let (s, body) = call(
            &app,
            "POST",
            &uri,
            Some(assess("gradient descent", false, false)),
        )
        .await;
        check(expect(s, StatusCode::OK, "assessment"))?;
        check(ensure(
            body["outcome"]["new_nodes"].as_array().map(Vec::len) == Some(2),
            || "two new nodes".into(),
        ))?;
        let (s, body) = call(
            &app,
            "POST",
            &uri,
            Some(assess("gradient descent", false, false)),
        )
        .await;
        check(expect(s, StatusCode::OK, "repeat"))?;
        check(ensure(
            body["outcome"]["new_nodes"].as_array().map(Vec::len) == Some(0),
            || "repeat is not empty".into(),
        ))?;
        let (s, _) = call(
            &app,
            "POST",
            &uri,
            Some(assess("gradient descent", true, false)),
        )
        .await;
        check(expect(s, StatusCode::CONFLICT, "flip without force"))?;
        let (s, _) = call(&app, "POST", &uri, Some(assess("topology", true, false))).await;
        check(expect(s, StatusCode::NOT_FOUND, "unknown concept"))?;
        let (s, _) = call(&app, "GET", "/api/v1/sessions/nosuchsession", None).await;
        check(expect(s, StatusCode::NOT_FOUND, "unknown session"))?;

        let answers = golden_answers();
        loop {
            let (_, session) = call(&app, "GET", &base, None).await;
            let Some(next) = session["pending"]
                .as_array()
                .and_then(|p| p.first())
                .cloned()
            else {
                break;
            };
            let concept = next["concept"]["id"].as_str().unwrap().to_string();
            let known = answers.get(&id_of(&concept)).copied().unwrap_or(true);
            let (s, _) = call(&app, "POST", &uri, Some(assess(&concept, known, false))).await;
            check(expect(s, StatusCode::OK, "golden answer"))?;
        }
        let (_, graph) = call(&app, "GET", &format!("{base}/graph"), None).await;
        let pinned: Value =
            serde_json::from_slice(&read(&golden_dir().join("backprop/final_graph.json"))).unwrap();
        check(ensure(graph == pinned, || {
            "graph differs from the golden JSON".into()
        }))?;

        let (s, first) = call(&app, "POST", &format!("{base}/explanation"), None).await;
        check(expect(s, StatusCode::OK, "explanation"))?;
        let (_, second) = call(&app, "POST", &format!("{base}/explanation"), None).await;
        check(ensure(
            first == second && oracle.counts().explain == 1,
            || "explanation was not served from the cache".into(),
        ))?;

        let (s, health) = call(&app, "GET", "/healthz", None).await;
        check(expect(s, StatusCode::OK, "health"))?;
        check(ensure(
            health["oracle_mode"] == "fixture" && health["status"] == "ok",
            || format!("health {health}"),
        ))?;

        // a new process on the same directory sees every acknowledged write
        let (_, before) = call(&app, "GET", &base, None).await;
        drop(app);
        let (restarted, _) = self::app(dir.path());
        let (s, after) = call(&restarted, "GET", &base, None).await;
        check(expect(s, StatusCode::OK, "reload"))?;
        check(ensure(
            before == after && after["phase"] == "complete",
            || "state lost across a restart".into(),
        ))?;
        Ok(format!("{checks} endpoint checks"))
    }

    fn id_of(key: &str) -> rpkt::ConceptId {
        rpkt::normalize_label(key).unwrap()
    }
}

fn api_contract() -> Result<String, String> {
    tokio::runtime::Builder::new_multi_thread()
        .enable_all()
        .build()
        .map_err(|e| e.to_string())?
        .block_on(api_contract::scenario())
}

fn cli_determinism() -> Result<String, String> {
    let fixture = format!("fixture:{}", fixture_path().display());
    let answers = answers_path();
    let mut runs = Vec::new();
    for _ in 0..2 {
        let dir = tempfile::tempdir().map_err(|e| e.to_string())?;
        let data = dir.path().join("data");
        let out = dir.path().join("out");
        let args = [
            "rpkt",
            "--data-dir",
            data.to_str().unwrap(),
            "ask",
            BACKPROP_QUESTION,
            "--oracle",
            &fixture,
            "--script",
            answers.to_str().unwrap(),
            "--out",
            out.to_str().unwrap(),
        ];
        let mut stdout = Vec::new();
        let mut stderr = Vec::new();
        let code = rpkt::cli::run(args, &mut std::io::empty(), &mut stdout, &mut stderr);
        ensure(code == 0, || {
            format!("exit {code}: {}", String::from_utf8_lossy(&stderr))
        })?;
        runs.push((dir, out, stdout));
    }
    let names = [
        "path.txt",
        "path.json",
        "graph.dot",
        "graph.json",
        "session.json",
    ];
    for name in names {
        let a = read(&runs[0].1.join(name));
        let b = read(&runs[1].1.join(name));
        ensure(a == b, || format!("{name} differs between runs"))?;
        check_golden(&format!("cli/{name}"), &a)?;
    }
    ensure(runs[0].2 == runs[1].2, || {
        "stdout differs between runs".into()
    })?;
    Ok(format!(
        "{} output files identical across working directories",
        names.len()
    ))
}

fn main() {
    let criteria: [(&str, Check); 8] = [
        ("golden demonstration replay", golden_replay),
        ("termination under adversarial oracles", termination),
        ("order independence", order_independence),
        ("topological soundness", topological_soundness),
        ("event sourcing fidelity", event_sourcing),
        ("remote oracle robustness", remote_robustness),
        ("api contract", api_contract),
        ("cli determinism", cli_determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let start = Instant::now();
        let result =
            catch_unwind(AssertUnwindSafe(check)).unwrap_or_else(|_| Err("panicked".into()));
        let secs = start.elapsed().as_secs_f64();
        match result {
            Ok(detail) => println!("PASS  {name} ({secs:.2}s): {detail}"),
            Err(reason) => {
                failed += 1;
                println!("FAIL  {name} ({secs:.2}s): {reason}");
            }
        }
    }
    println!("{} of 8 criteria passed", 8 - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
