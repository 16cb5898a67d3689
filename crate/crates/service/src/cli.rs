//! The `schemamem` operator CLI. Every subcommand is a thin wrapper over a
//! library call; `--json` prints the same JSON the library value
//! serializes to.

use std::io::{Read, Write};
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value as JsonValue};
use thiserror::Error;

use schemamem_core::adaptation::{AdaptationReport, Counters, SweepRow};
use schemamem_core::clock::{Clock, ManualClock, SystemClock};
use schemamem_core::config::EngineConfig;
use schemamem_core::engine::provider_from_config;
use schemamem_core::eval::{
    self, Difficulty, DifficultyMix, Domain, EngineTarget, EvalError, EvalResult, GenConfig, SyntheticSuite,
    VectorBaseline,
};
use schemamem_core::init::GoalSpec;
use schemamem_core::protocol;
use schemamem_core::store::NewExperience;
use schemamem_core::value::Timestamp;
use schemamem_core::{Engine, EngineError, IngestRequest};

use crate::api::{self, error_detail, ROUTES};
use crate::remote::HttpTarget;

#[derive(Debug, Parser)]
#[command(name = "schemamem", version, about = "Schema-organized long-term memory engine")]
pub struct Cli {
    /// Engine config file (TOML); defaults to $SCHEMAMEM_CONFIG.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Store directory; overrides the config.
    #[arg(long, global = true)]
    pub data_root: Option<PathBuf>,
    /// Extraction rules for the built-in provider; overrides the config.
    #[arg(long, global = true)]
    pub rules: Option<PathBuf>,
    /// Pin the clock (RFC 3339 or YYYY-MM-DD) for reproducible runs.
    #[arg(long, global = true)]
    pub now: Option<String>,
    /// Machine-readable output, errors included.
    #[arg(long, global = true)]
    pub json: bool,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Create the bucket layout from a goal spec.
    Init {
        #[arg(long)]
        spec: PathBuf,
        /// Overlay onto a non-empty store.
        #[arg(long)]
        force: bool,
    },
    /// Ingest experiences: one JSON request object or one plain-text turn per line.
    Ingest {
        #[command(flatten)]
        input: Input,
        /// Print every adaptation report.
        #[arg(long)]
        report: bool,
    },
    /// Run a structured query.
    Query { text: String },
    /// Answer a natural-language question.
    Answer {
        question: String,
        #[arg(long)]
        budget: Option<usize>,
    },
    /// Show any bucket, schema, element, record or experience.
    Inspect { id: String },
    /// Replay a stream once per θ_meta and count adaptation paths.
    Sweep {
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.7,0.85,0.95")]
        thetas: Vec<f64>,
        #[arg(long)]
        stream: PathBuf,
    },
    /// Score a suite against the engine, a running service or the baseline.
    Eval {
        #[arg(long)]
        suite: PathBuf,
        /// Base URL of a running service with an empty store.
        #[arg(long, conflicts_with = "baseline")]
        endpoint: Option<String>,
        /// Score the retrieval-only baseline instead.
        #[arg(long)]
        baseline: bool,
        /// Result file; written only when the run completes.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Generate a synthetic evaluation suite.
    Generate {
        #[arg(long, default_value_t = 42)]
        seed: u64,
        #[arg(long, default_value_t = 160)]
        records: usize,
        #[arg(long, default_value_t = 60)]
        questions: usize,
        #[arg(long, default_value_t = 4)]
        entities: usize,
        #[arg(long, value_enum, default_value = "finance")]
        domain: DomainArg,
        /// Difficulty weights easy,medium,hard.
        #[arg(long, value_delimiter = ',', default_value = "0.3,0.5,0.2")]
        mix: Vec<f64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long)]
        listen: Option<String>,
    },
    /// Serve retrieve/query/calculate over stdin/stdout.
    Tools,
    /// Print the HTTP route table.
    Routes,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
pub struct Input {
    #[arg(long)]
    file: Option<PathBuf>,
    #[arg(long)]
    stdin: bool,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum DomainArg {
    Finance,
    Medical,
}

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Engine(#[from] EngineError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("{message}")]
    Caller { code: &'static str, message: String },
    #[error("{0}")]
    Internal(String),
}

impl CliError {
    fn caller(code: &'static str, message: impl Into<String>) -> Self {
        CliError::Caller {
            code,
            message: message.into(),
        }
    }

    pub fn code(&self) -> &str {
        match self {
            CliError::Engine(e) => e.code(),
            CliError::Eval(EvalError::ConfigInvalid(_)) => "ConfigInvalid",
            CliError::Eval(EvalError::InvalidSuite(_)) => "InvalidSuite",
            CliError::Eval(EvalError::EngineUnreachable(_)) => "EngineUnreachable",
            CliError::Eval(EvalError::Engine(_)) => "EngineError",
            CliError::Caller { code, .. } => code,
            CliError::Internal(_) => "Internal",
        }
    }

    /// 1 for caller faults, 2 otherwise.
    pub fn exit_code(&self) -> i32 {
        let caller = match self {
            CliError::Engine(e) => e.is_caller_error(),
            CliError::Eval(e) => matches!(e, EvalError::ConfigInvalid(_) | EvalError::InvalidSuite(_)),
            CliError::Caller { .. } => true,
            CliError::Internal(_) => false,
        };
        if caller {
            1
        } else {
            2
        }
    }

    pub fn detail(&self) -> JsonValue {
        match self {
            CliError::Engine(e) => error_detail(e),
            _ => JsonValue::Null,
        }
    }
}

/// What a command produced: JSON for `--json`, text otherwise.
pub struct Output {
    pub json: JsonValue,
    pub text: String,
}

impl Output {
    fn new<T: Serialize>(value: &T, text: impl Into<String>) -> Self {
        Output {
            json: serde_json::to_value(value).expect("output serializes"),
            text: text.into(),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::caller("InputError", format!("{}: {e}", path.display())))
}

fn parse_now(text: &str) -> Result<Timestamp, CliError> {
    Timestamp::parse(text).ok_or_else(|| CliError::caller("InvalidRequest", format!("cannot parse time `{text}`")))
}

/// Ingest lines: a JSON object is a full request, anything else is raw
/// text from the user. Blank lines are skipped.
pub fn parse_ingest_lines(text: &str) -> Result<Vec<IngestRequest>, CliError> {
    text.lines()
        .enumerate()
        .filter(|(_, l)| !l.trim().is_empty())
        .map(|(i, line)| {
            if line.trim_start().starts_with('{') {
                serde_json::from_str(line)
                    .map_err(|e| CliError::caller("InvalidRequest", format!("line {}: {e}", i + 1)))
            } else {
                Ok(IngestRequest::new(line.trim()))
            }
        })
        .collect()
}

impl Cli {
    fn engine_config(&self) -> Result<EngineConfig, CliError> {
        let mut config = EngineConfig::from_env(self.config.as_deref())
            .map_err(|e| CliError::Engine(EngineError::Config(e)))?;
        if let Some(root) = &self.data_root {
            config.data_root = Some(root.clone());
        }
        if let Some(rules) = &self.rules {
            config.provider.rules = Some(rules.clone());
        }
        Ok(config)
    }

    fn clock(&self) -> Result<Arc<dyn Clock>, CliError> {
        Ok(match &self.now {
            Some(t) => Arc::new(ManualClock::new(parse_now(t)?)),
            None => Arc::new(SystemClock),
        })
    }

    /// The engine over the configured store; one-shot commands need a data
    /// root so their effects outlive the process.
    fn engine(&self, persistent: bool) -> Result<Engine, CliError> {
        let config = self.engine_config()?;
        if persistent && config.data_root.is_none() {
            return Err(CliError::caller(
                "ConfigInvalid",
                "no data root: pass --data-root or set SCHEMAMEM_DATA_ROOT",
            ));
        }
        let provider = provider_from_config(&config)?;
        Ok(Engine::new(config, provider, self.clock()?)?)
    }
}

fn counters_text(c: &Counters) -> String {
    format!("assimilation {} evolution {} creation {}", c.assimilation, c.evolution, c.creation)
}

fn sweep_text(rows: &[SweepRow]) -> String {
    let mut out = format!("{:>6}  {:>12}  {:>9}  {:>8}\n", "theta", "assimilation", "evolution", "creation");
    for r in rows {
        out += &format!(
            "{:>6.2}  {:>12}  {:>9}  {:>8}\n",
            r.theta, r.counters.assimilation, r.counters.evolution, r.counters.creation
        );
    }
    out
}

fn eval_text(r: &EvalResult) -> String {
    let mut out = format!("target {}  seed {}\n", r.target, r.seed);
    out += &format!("{:<8}  {:>9}  {:>8}  {:>8}\n", "band", "questions", "accuracy", "coverage");
    let rows = Difficulty::ALL
        .iter()
        .filter_map(|d| r.by_difficulty.get(d).map(|s| (format!("{d:?}").to_lowercase(), s)))
        .chain(std::iter::once(("overall".to_string(), &r.overall)));
    for (name, s) in rows {
        out += &format!("{name:<8}  {:>9}  {:>8.3}  {:>8.3}\n", s.questions, s.accuracy, s.coverage);
    }
    out
}

fn ingest_all(engine: &Engine, requests: Vec<IngestRequest>) -> Result<Vec<AdaptationReport>, CliError> {
    let reports = requests
        .into_iter()
        .map(|r| engine.ingest(r))
        .collect::<Result<Vec<_>, _>>()?;
    engine.flush()?;
    Ok(reports)
}

pub fn execute(cli: &Cli) -> Result<Output, CliError> {
    match &cli.command {
        Command::Init { spec, force } => {
            let spec = GoalSpec::from_json(&read_file(spec)?)
                .map_err(|e| CliError::caller("InvalidSpec", format!("goal spec: {e}")))?;
            let engine = cli.engine(true)?;
            let layout = engine.init(&spec, *force)?;
            engine.flush()?;
            let text = layout
                .buckets
                .iter()
                .map(|b| format!("{}  {}  [{}]", b.id, b.name, b.canonical_keys.join(", ")))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::new(&layout, text))
        }
        Command::Ingest { input, report } => {
            let text = match &input.file {
                Some(path) => read_file(path)?,
                None => {
                    let mut s = String::new();
                    std::io::stdin()
                        .read_to_string(&mut s)
                        .map_err(|e| CliError::caller("InputError", e.to_string()))?;
                    s
                }
            };
            let engine = cli.engine(true)?;
            let reports = ingest_all(&engine, parse_ingest_lines(&text)?)?;
            let mut total = Counters::default();
            for r in &reports {
                total.assimilation += r.counters.assimilation;
                total.evolution += r.counters.evolution;
                total.creation += r.counters.creation;
            }
            if *report {
                let text = reports
                    .iter()
                    .map(|r| {
                        let paths: Vec<String> = r.per_segment.iter().map(|s| format!("{:?}", s.path)).collect();
                        format!("{}  {}", r.experience_id, paths.join(", "))
                    })
                    .collect::<Vec<_>>()
                    .join("\n");
                Ok(Output::new(&reports, text))
            } else {
                let summary = json!({ "experiences": reports.len(), "counters": total });
                Ok(Output::new(
                    &summary,
                    format!("{} experiences: {}", reports.len(), counters_text(&total)),
                ))
            }
        }
        Command::Query { text } => {
            let table = cli.engine(true)?.query(text)?;
            Ok(Output::new(&table, table.to_text()))
        }
        Command::Answer { question, budget } => {
            let answer = cli.engine(true)?.answer(question, *budget);
            let mut text = answer.text.clone();
            if !answer.evidence.is_empty() {
                text += &format!("\nevidence: {}", answer.evidence.join(", "));
            }
            Ok(Output::new(&answer, text))
        }
        Command::Inspect { id } => {
            let found = cli.engine(true)?.inspect(id)?;
            let json = serde_json::to_value(&found).expect("inspection serializes");
            let text = serde_json::to_string_pretty(&json).expect("json prints");
            Ok(Output { json, text })
        }
        Command::Sweep { thetas, stream } => {
            let requests = parse_ingest_lines(&read_file(stream)?)?;
            let engine = cli.engine(false)?;
            let now = engine.clock().now();
            let stream: Vec<NewExperience> = requests
                .into_iter()
                .map(|r| NewExperience {
                    raw_text: r.raw_text,
                    received_at: r.received_at.unwrap_or(now),
                    source_tag: r.source_tag,
                    source_quality: r.source_quality,
                })
                .collect();
            let rows = engine.sweep(&stream, thetas)?;
            Ok(Output::new(&rows, sweep_text(&rows)))
        }
        Command::Eval {
            suite,
            endpoint,
            baseline,
            out,
        } => {
            let suite = SyntheticSuite::from_json(&read_file(suite)?)?;
            let result = match (endpoint, baseline) {
                (Some(url), _) => eval::run(&suite, &mut HttpTarget::new(url)?)?,
                (None, true) => eval::run(&suite, &mut VectorBaseline::default())?,
                (None, false) => eval::run(&suite, &mut EngineTarget::new(cli.engine_config()?))?,
            };
            if let Some(path) = out {
                let body = serde_json::to_string_pretty(&result).expect("result serializes");
                std::fs::write(path, body).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
            }
            Ok(Output::new(&result, eval_text(&result)))
        }
        Command::Generate {
            seed,
            records,
            questions,
            entities,
            domain,
            mix,
            out,
        } => {
            let [easy, medium, hard] = mix[..] else {
                return Err(CliError::caller("ConfigInvalid", "--mix takes three weights"));
            };
            let config = GenConfig {
                n_records: *records,
                n_questions: *questions,
                difficulty_mix: DifficultyMix { easy, medium, hard },
                domain: match domain {
                    DomainArg::Finance => Domain::Finance,
                    DomainArg::Medical => Domain::Medical,
                },
                entities: *entities,
            };
            let suite = eval::generate(*seed, &config)?;
            let body = suite.to_json();
            let text = match out {
                Some(path) => {
                    std::fs::write(path, &body).map_err(|e| CliError::Internal(format!("{}: {e}", path.display())))?;
                    format!(
                        "wrote {} turns and {} questions to {}",
                        suite.dialogue.len(),
                        suite.questions.len(),
                        path.display()
                    )
                }
                None => body.clone(),
            };
            let summary = json!({
                "seed": suite.seed,
                "turns": suite.dialogue.len(),
                "questions": suite.questions.len(),
                "out": out,
            });
            Ok(Output {
                json: if out.is_some() { summary } else { serde_json::from_str(&body).expect("suite is json") },
                text,
            })
        }
        Command::Serve { listen } => {
            let engine = Arc::new(cli.engine(false)?);
            let addr = listen.clone().unwrap_or_else(|| engine.config().listen.clone());
            let rt = tokio::runtime::Runtime::new().map_err(|e| CliError::Internal(e.to_string()))?;
            rt.block_on(async {
                let listener = tokio::net::TcpListener::bind(&addr)
                    .await
                    .map_err(|e| CliError::caller("InvalidRequest", format!("bind {addr}: {e}")))?;
                tracing::info!(%addr, "listening");
                api::serve(engine, listener, async {
                    let _ = tokio::signal::ctrl_c().await;
                })
                .await
                .map_err(|e| CliError::Internal(e.to_string()))
            })?;
            Ok(Output::new(&json!({ "stopped": addr }), format!("stopped {addr}")))
        }
        Command::Tools => {
            let engine = cli.engine(true)?;
            let stdin = std::io::stdin();
            protocol::serve(&engine.tools(), stdin.lock(), std::io::stdout().lock())
                .map_err(|e| CliError::Internal(e.to_string()))?;
            Ok(Output::new(&JsonValue::Null, ""))
        }
        Command::Routes => {
            let text = ROUTES
                .iter()
                .map(|r| format!("{:<5} {:<26} {}", r.method, r.path, r.name))
                .collect::<Vec<_>>()
                .join("\n");
            Ok(Output::new(&ROUTES, text))
        }
    }
}

fn caret(query: &str, position: usize) -> String {
    let col = query.get(..position).map_or(position, |p| p.chars().count());
    format!("  {query}\n  {}^", " ".repeat(col))
}

/// Parses `args`, runs the command, prints the outcome and returns the
/// process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(stderr, "{e}");
            return match e.kind() {
                clap::error::ErrorKind::DisplayHelp | clap::error::ErrorKind::DisplayVersion => 0,
                _ => 1,
            };
        }
    };
    match execute(&cli) {
        Ok(out) => {
            let _ = if cli.json {
                writeln!(stdout, "{}", serde_json::to_string_pretty(&out.json).expect("json prints"))
            } else if out.text.is_empty() {
                Ok(())
            } else {
                writeln!(stdout, "{}", out.text.trim_end())
            };
            0
        }
        Err(err) => {
            if cli.json {
                let body = json!({ "code": err.code(), "message": err.to_string(), "detail": err.detail() });
                let _ = writeln!(stdout, "{}", serde_json::to_string_pretty(&body).expect("json prints"));
            } else {
                let _ = writeln!(stderr, "error [{}]: {err}", err.code());
                if let (Command::Query { text }, Some(pos)) = (&cli.command, err.detail().get("position")) {
                    if let Some(p) = pos.as_u64() {
                        let _ = writeln!(stderr, "{}", caret(text, p as usize));
                    }
                }
            }
            err.exit_code()
        }
    }
}
