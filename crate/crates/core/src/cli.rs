//! The `rpkt` command line.
//!
//! Exit codes: 0 success, 1 unexpected failure, 2 bad arguments or unknown
//! session, 3 oracle failure, 4 answer script names a concept that never
//! surfaced.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::{BufRead, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand, ValueEnum};

use crate::api::{self, AppState};
use crate::concept::ConceptId;
use crate::config::{Config, OracleSpec};
use crate::engine::{
    Clock, Engine, EngineError, LogicalClock, Session, SessionId, SystemClock, DEFAULT_MAX_DEPTH,
};
use crate::graph::{export_graph, render_dot, render_json as graph_json};
use crate::normalize_label;
use crate::oracle::EducationLevel;
use crate::path::{build_path, render_json as path_json, render_text};
use crate::store::{encode, FsStore, SessionStore, StoreError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_ORACLE: i32 = 3;
pub const EXIT_SCRIPT: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "rpkt",
    version,
    about = "Trace the prerequisite gaps behind a question"
)]
pub struct Cli {
    /// Directory holding saved sessions.
    #[arg(long, global = true)]
    pub data_dir: Option<PathBuf>,
    /// TOML configuration file.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Start a session and assess concepts until the path is complete.
    Ask {
        question: String,
        #[arg(long, default_value = "undergraduate")]
        level: EducationLevel,
        #[arg(long, default_value_t = DEFAULT_MAX_DEPTH)]
        max_depth: u32,
        /// `fixture:PATH` or `remote`; defaults to the configured oracle.
        #[arg(long)]
        oracle: Option<OracleSpec>,
        /// JSON object of concept keys to booleans (true = known).
        #[arg(long)]
        script: Option<PathBuf>,
        /// Directory for path and graph outputs.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Continue an unfinished session interactively.
    Resume {
        session_id: String,
        #[arg(long)]
        oracle: Option<OracleSpec>,
    },
    /// List saved sessions.
    Sessions,
    /// Print a session's concept graph.
    Export {
        session_id: String,
        #[arg(long, value_enum, default_value_t = ExportFormat::Dot)]
        format: ExportFormat,
    },
    /// Run the HTTP service.
    Serve {
        #[arg(long)]
        listen: Option<String>,
        #[arg(long)]
        oracle: Option<OracleSpec>,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ExportFormat {
    Dot,
    Json,
}

struct Failure {
    code: i32,
    message: String,
}

fn fail(code: i32, message: impl Into<String>) -> Failure {
    Failure {
        code,
        message: message.into(),
    }
}

impl From<EngineError> for Failure {
    fn from(e: EngineError) -> Self {
        let code = match e {
            EngineError::EmptyQuestion
            | EngineError::InvalidMaxDepth(_)
            | EngineError::UnknownConcept(_) => EXIT_USAGE,
            EngineError::OracleFailure(_) => EXIT_ORACLE,
            _ => EXIT_FAILURE,
        };
        fail(code, e.to_string())
    }
}

impl From<StoreError> for Failure {
    fn from(e: StoreError) -> Self {
        let code = match e {
            StoreError::NotFound(_) => EXIT_USAGE,
            _ => EXIT_FAILURE,
        };
        fail(code, e.to_string())
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        fail(EXIT_FAILURE, e.to_string())
    }
}

/// Runs the CLI and returns its exit code. Prompts read from `input`;
/// results and prompts go to `output`, diagnostics to `errors`.
pub fn run<I, T>(
    args: I,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    errors: &mut dyn Write,
) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let text = e.render().ansi().to_string();
            if e.use_stderr() {
                let _ = write!(errors, "{text}");
            } else {
                let _ = write!(output, "{text}");
            }
            return e.exit_code();
        }
    };
    match execute(cli, input, output) {
        Ok(()) => EXIT_OK,
        Err(f) => {
            let _ = writeln!(errors, "rpkt: {}", f.message);
            f.code
        }
    }
}

struct Context {
    config: Config,
    data_dir: PathBuf,
}

impl Context {
    fn new(cli: &Cli) -> Result<Self, Failure> {
        let config = match &cli.config {
            Some(path) => Config::load(path).map_err(|e| fail(EXIT_USAGE, e.to_string()))?,
            None => Config::default(),
        };
        let data_dir = cli
            .data_dir
            .clone()
            .unwrap_or_else(|| config.data_dir.clone());
        Ok(Self { config, data_dir })
    }

    fn store(&self) -> Result<FsStore, Failure> {
        Ok(FsStore::open(&self.data_dir)?)
    }

    fn engine(&self, spec: Option<OracleSpec>, clock: Arc<dyn Clock>) -> Result<Engine, Failure> {
        let spec = self
            .config
            .oracle_spec(spec)
            .map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
        let oracle = self
            .config
            .build_oracle(&spec)
            .map_err(|e| fail(EXIT_USAGE, e.to_string()))?;
        Ok(Engine::with_clock(oracle, clock))
    }
}

fn parse_session_id(raw: &str) -> Result<SessionId, Failure> {
    SessionId::parse(raw).ok_or_else(|| fail(EXIT_USAGE, format!("session {raw} not found")))
}

fn execute(cli: Cli, input: &mut dyn BufRead, output: &mut dyn Write) -> Result<(), Failure> {
    let ctx = Context::new(&cli)?;
    match cli.command {
        Command::Ask {
            question,
            level,
            max_depth,
            oracle,
            script,
            out,
        } => {
            let script = script.as_deref().map(load_script).transpose()?;
            let (clock, id): (Arc<dyn Clock>, SessionId) = match &script {
                Some(s) => (
                    Arc::new(LogicalClock::default()),
                    SessionId::derive(&[
                        question.as_bytes(),
                        level.as_str().as_bytes(),
                        &max_depth.to_le_bytes(),
                        s.source.as_bytes(),
                    ]),
                ),
                None => (Arc::new(SystemClock), SessionId::random()),
            };
            let engine = ctx.engine(oracle, clock)?;
            let store = ctx.store()?;
            let mut session =
                engine.start_session_with_id(id, &question, level, Some(max_depth))?;
            store.save(&session)?;
            match &script {
                Some(s) => run_script(&engine, &store, &mut session, s)?,
                None => {
                    if !run_interactive(&engine, &store, &mut session, input, output)? {
                        return Ok(());
                    }
                }
            }
            if let Some(s) = &script {
                let surfaced = session.tree.surfaced_concepts();
                if let Some(missing) = s.answers.keys().find(|k| !surfaced.contains(*k)) {
                    return Err(fail(
                        EXIT_SCRIPT,
                        format!("script answers {missing:?}, which never surfaced"),
                    ));
                }
            }
            finish(&session, out.as_deref(), output)
        }
        Command::Resume { session_id, oracle } => {
            let id = parse_session_id(&session_id)?;
            let store = ctx.store()?;
            let mut session = store.load(&id)?;
            if !session.is_complete() {
                let engine = ctx.engine(oracle, Arc::new(SystemClock))?;
                if session.has_stalled_expansions() {
                    let result = engine.retry_expansions(&mut session);
                    store.save(&session)?;
                    result?;
                }
                if !run_interactive(&engine, &store, &mut session, input, output)? {
                    return Ok(());
                }
            }
            finish(&session, None, output)
        }
        Command::Sessions => {
            let store = ctx.store()?;
            writeln!(
                output,
                "{:<32}  {:<9}  {:<20}  QUESTION",
                "ID", "PHASE", "UPDATED"
            )?;
            for s in store.list()? {
                let phase = if s.phase == crate::engine::Phase::Complete {
                    "complete"
                } else {
                    "assessing"
                };
                writeln!(
                    output,
                    "{:<32}  {:<9}  {:<20}  {}",
                    s.session_id,
                    phase,
                    s.updated_at.format("%Y-%m-%dT%H:%M:%SZ"),
                    s.question
                )?;
            }
            Ok(())
        }
        Command::Export { session_id, format } => {
            let id = parse_session_id(&session_id)?;
            let session = ctx.store()?.load(&id)?;
            let doc = export_graph(&session);
            let text = match format {
                ExportFormat::Dot => render_dot(&doc),
                ExportFormat::Json => graph_json(&doc),
            };
            output.write_all(text.as_bytes())?;
            Ok(())
        }
        Command::Serve { listen, oracle } => {
            let timeout = ctx.config.oracle.remote.timeout;
            let engine = ctx.engine(oracle, Arc::new(SystemClock))?;
            let store: Arc<dyn SessionStore> = Arc::new(ctx.store()?);
            let state = Arc::new(
                AppState::new(engine, store)
                    .with_explanation_timeout(timeout + std::time::Duration::from_secs(5)),
            );
            let listen = listen.unwrap_or_else(|| ctx.config.server.listen.clone());
            let runtime = tokio::runtime::Builder::new_multi_thread()
                .enable_all()
                .build()?;
            runtime.block_on(api::serve(state, &listen, &ctx.config.server.cors_origins))?;
            Ok(())
        }
    }
}

struct Script {
    source: String,
    answers: BTreeMap<ConceptId, bool>,
}

fn load_script(path: &Path) -> Result<Script, Failure> {
    let source = std::fs::read_to_string(path).map_err(|e| {
        fail(
            EXIT_USAGE,
            format!("cannot read script {}: {e}", path.display()),
        )
    })?;
    let raw: BTreeMap<String, bool> = serde_json::from_str(&source).map_err(|e| {
        fail(
            EXIT_USAGE,
            format!("script must map concept keys to booleans: {e}"),
        )
    })?;
    let mut answers = BTreeMap::new();
    for (key, known) in raw {
        let id = normalize_label(&key).map_err(|_| {
            fail(
                EXIT_USAGE,
                format!("script has an empty concept key {key:?}"),
            )
        })?;
        answers.insert(id, known);
    }
    Ok(Script { source, answers })
}

/// Answers the lowest-numbered pending concept until none remain.
fn run_script(
    engine: &Engine,
    store: &FsStore,
    session: &mut Session,
    script: &Script,
) -> Result<(), Failure> {
    while let Some(next) = session.pending_assessments().into_iter().next() {
        let known = match script.answers.get(&next.concept.id) {
            Some(known) => *known,
            None => {
                tracing::warn!(
                    concept = %next.concept.id,
                    "concept not in the answer script; assuming it is known"
                );
                true
            }
        };
        let result = engine.submit_assessment(session, &next.concept.id, known, false);
        store.save(session)?;
        result?;
    }
    Ok(())
}

/// Prompts until the session completes. Returns false when the learner
/// stops early.
fn run_interactive(
    engine: &Engine,
    store: &FsStore,
    session: &mut Session,
    input: &mut dyn BufRead,
    output: &mut dyn Write,
) -> Result<bool, Failure> {
    writeln!(output, "Session {}", session.session_id)?;
    if !session.analysis.understanding.is_empty() {
        writeln!(output, "{}", session.analysis.understanding)?;
    }
    loop {
        let pending = session.pending_assessments();
        if pending.is_empty() {
            return Ok(true);
        }
        writeln!(output, "\nConcepts to assess:")?;
        for (i, p) in pending.iter().enumerate() {
            writeln!(
                output,
                "  {}. {} [L{}]",
                i + 1,
                p.concept.display_label,
                p.depth
            )?;
        }
        let choice = match prompt(input, output, "Pick a number (q to stop): ")? {
            None => return stop(session, output),
            Some(s) if s.eq_ignore_ascii_case("q") => return stop(session, output),
            Some(s) => s,
        };
        let Some(entry) = choice
            .parse::<usize>()
            .ok()
            .and_then(|n| n.checked_sub(1))
            .and_then(|i| pending.get(i))
        else {
            writeln!(output, "No concept number {choice}.")?;
            continue;
        };
        let question = format!("Do you know {}? [y/n]: ", entry.concept.display_label);
        let known = loop {
            match prompt(input, output, &question)?.as_deref() {
                None => return stop(session, output),
                Some("y" | "Y" | "yes") => break true,
                Some("n" | "N" | "no") => break false,
                Some(_) => continue,
            }
        };
        let result = engine.submit_assessment(session, &entry.concept.id, known, false);
        store.save(session)?;
        let outcome = result?;
        for node in &outcome.new_nodes {
            writeln!(
                output,
                "  + {} [L{}]",
                session.tree.label(&node.concept),
                node.depth
            )?;
        }
        for node in &outcome.duplicate_nodes {
            writeln!(
                output,
                "  = {} [L{}] already confirmed",
                session.tree.label(&node.concept),
                node.depth
            )?;
        }
    }
}

fn prompt(
    input: &mut dyn BufRead,
    output: &mut dyn Write,
    text: &str,
) -> Result<Option<String>, Failure> {
    write!(output, "{text}")?;
    output.flush()?;
    let mut line = String::new();
    if input.read_line(&mut line)? == 0 {
        return Ok(None);
    }
    Ok(Some(line.trim().to_string()))
}

fn stop(session: &Session, output: &mut dyn Write) -> Result<bool, Failure> {
    writeln!(
        output,
        "\nSaved. Continue with: rpkt resume {}",
        session.session_id
    )?;
    Ok(false)
}

/// Prints the path and writes the output files when `out` is given.
fn finish(session: &Session, out: Option<&Path>, output: &mut dyn Write) -> Result<(), Failure> {
    let path = build_path(session);
    let text = render_text(&path);
    output.write_all(text.as_bytes())?;
    if let Some(dir) = out {
        std::fs::create_dir_all(dir)?;
        let doc = export_graph(session);
        std::fs::write(dir.join("path.txt"), &text)?;
        std::fs::write(dir.join("path.json"), path_json(&path))?;
        std::fs::write(dir.join("graph.dot"), render_dot(&doc))?;
        std::fs::write(dir.join("graph.json"), graph_json(&doc))?;
        std::fs::write(dir.join("session.json"), encode(session)?)?;
    }
    Ok(())
}
