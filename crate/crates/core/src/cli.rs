//! The `coig` command line. Each subcommand parses its arguments, calls one
//! [`Engine`] operation and prints the result.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use serde::Serialize;

use crate::backends::MockFault;
use crate::bench::{self, table_csv, Pipeline, QaBenchmark};
use crate::canonical;
use crate::engine::{CliConfig, Engine, EngineError};
use crate::executor::{Author, ChainRun, Intervention, InterventionKind};
use crate::planner::{PlanStep, StepKind};
use crate::runstore::RunSummary;
use crate::service::{self, ApiError};

pub const EXIT_OK: i32 = 0;
pub const EXIT_FAILURE: i32 = 1;
pub const EXIT_USAGE: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "coig",
    version,
    about = "Plan, execute and evaluate chain-of-image generation runs"
)]
struct Cli {
    /// Config file (TOML, or JSON by extension). Defaults to $COIG_CONFIG, then ./coig.toml or ./coig.json.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Print exactly one canonical JSON document on stdout.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Decompose a prompt into a chain plan and print it.
    Plan {
        prompt: String,
        #[arg(long)]
        profile: Option<String>,
    },
    /// Execute a plan file, or plan and execute a prompt.
    Run {
        plan_or_prompt: String,
        /// Stop after the first step; `resume` executes one more each time.
        #[arg(long)]
        step: bool,
        #[arg(long)]
        profile: Option<String>,
    },
    /// Continue a paused run.
    Resume {
        run_id: String,
        /// Retry the failed step instead of refusing.
        #[arg(long)]
        retry: bool,
    },
    /// Pause a run so it accepts interventions.
    Pause { run_id: String },
    /// Print a run manifest.
    Show { run_id: String },
    /// List stored runs, newest first.
    List {
        #[arg(long)]
        status: Option<String>,
    },
    /// Edit, insert or delete a plan step, or rerun from a step.
    Intervene(InterveneArgs),
    /// Score a stored run.
    #[command(subcommand)]
    Eval(EvalCommand),
    /// Generate and score benchmark prompts.
    #[command(subcommand)]
    Bench(BenchCommand),
    /// Serve the HTTP API.
    Serve {
        /// Listen address; defaults to the configured one.
        #[arg(long)]
        bind: Option<String>,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum KindArg {
    Edit,
    Insert,
    Delete,
    Rerun,
}

impl From<KindArg> for InterventionKind {
    fn from(k: KindArg) -> Self {
        match k {
            KindArg::Edit => InterventionKind::EditStep,
            KindArg::Insert => InterventionKind::InsertStep,
            KindArg::Delete => InterventionKind::DeleteStep,
            KindArg::Rerun => InterventionKind::RerunFrom,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum StepKindArg {
    FoundationalLayout,
    Background,
    EntityDetail,
    Interaction,
    Correction,
}

impl From<StepKindArg> for StepKind {
    fn from(k: StepKindArg) -> Self {
        match k {
            StepKindArg::FoundationalLayout => StepKind::FoundationalLayout,
            StepKindArg::Background => StepKind::Background,
            StepKindArg::EntityDetail => StepKind::EntityDetail,
            StepKindArg::Interaction => StepKind::Interaction,
            StepKindArg::Correction => StepKind::Correction,
        }
    }
}

#[derive(Debug, Args)]
struct InterveneArgs {
    run_id: String,
    #[arg(long, value_enum)]
    kind: KindArg,
    /// 1-based plan step index.
    #[arg(long)]
    at: u32,
    /// Replacement step as JSON, or `@path` to read it from a file.
    #[arg(long, conflicts_with_all = ["action", "step_kind", "target"])]
    payload: Option<String>,
    /// Step action for the new or edited step.
    #[arg(long)]
    action: Option<String>,
    #[arg(long, value_enum, default_value = "correction")]
    step_kind: StepKindArg,
    #[arg(long)]
    target: Option<String>,
}

#[derive(Debug, Subcommand)]
enum EvalCommand {
    /// Before/after QA probes for every detailed attribute.
    Readability { run_id: String },
    /// Re-run the chain with one color changed and check where it shows.
    Causal {
        run_id: String,
        #[arg(long)]
        step: u32,
        #[arg(long)]
        to: String,
    },
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Suite {
    Ec,
    Qa,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum PipelineArg {
    Coig,
    SinglePass,
}

impl From<PipelineArg> for Pipeline {
    fn from(p: PipelineArg) -> Self {
        match p {
            PipelineArg::Coig => Pipeline::Coig,
            PipelineArg::SinglePass => Pipeline::SinglePass,
        }
    }
}

#[allow(clippy::enum_variant_names)]
#[derive(Clone, Copy, Debug, ValueEnum)]
enum BenchmarkArg {
    GenevalStyle,
    CompbenchStyle,
    ConceptmixStyle,
}

impl From<BenchmarkArg> for QaBenchmark {
    fn from(b: BenchmarkArg) -> Self {
        match b {
            BenchmarkArg::GenevalStyle => QaBenchmark::GenevalStyle,
            BenchmarkArg::CompbenchStyle => QaBenchmark::CompbenchStyle,
            BenchmarkArg::ConceptmixStyle => QaBenchmark::ConceptmixStyle,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum FaultArg {
    DropLastEntity,
    Unavailable,
}

impl From<FaultArg> for MockFault {
    fn from(f: FaultArg) -> Self {
        match f {
            FaultArg::DropLastEntity => MockFault::DropLastEntity,
            FaultArg::Unavailable => MockFault::Unavailable,
        }
    }
}

#[derive(Debug, Subcommand)]
enum BenchCommand {
    /// Generate entity-collapse prompts as JSON lines.
    EcGen {
        #[arg(long, default_value_t = 300)]
        count: usize,
        /// Defaults to the configured seed.
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Render and score a prompt file.
    Run {
        #[arg(long, value_enum)]
        suite: Suite,
        #[arg(long, value_enum)]
        pipeline: PipelineArg,
        #[arg(long)]
        prompts: PathBuf,
        #[arg(long, value_enum, default_value = "geneval-style")]
        benchmark: BenchmarkArg,
        #[arg(long)]
        profile: Option<String>,
        /// Inject a mock image-backend fault.
        #[arg(long, value_enum)]
        fault: Option<FaultArg>,
        /// Also write the scorecard to this file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

struct Output<'a> {
    json: bool,
    out: &'a mut dyn Write,
    err: &'a mut dyn Write,
}

impl Output<'_> {
    fn doc<T: Serialize>(&mut self, value: &T) -> Result<(), EngineError> {
        let text = canonical::to_string(value).map_err(|e| EngineError::Io(e.to_string()))?;
        self.out
            .write_all(text.as_bytes())
            .map_err(|e| EngineError::Io(e.to_string()))
    }

    /// Writes `text` in text mode or `value` in JSON mode.
    fn emit<T: Serialize>(
        &mut self,
        value: &T,
        text: impl FnOnce() -> String,
    ) -> Result<(), EngineError> {
        if self.json {
            self.doc(value)
        } else {
            writeln!(self.out, "{}", text()).map_err(|e| EngineError::Io(e.to_string()))
        }
    }

    fn note(&mut self, text: &str) {
        let _ = writeln!(self.err, "{text}");
    }
}

fn read_file(path: &Path) -> Result<String, EngineError> {
    std::fs::read_to_string(path).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))
}

fn write_file(path: &Path, text: &str) -> Result<(), EngineError> {
    std::fs::write(path, text).map_err(|e| EngineError::Io(format!("{}: {e}", path.display())))
}

fn status_line(run: &ChainRun) -> String {
    let s = RunSummary::of(run);
    format!(
        "{} {} {}/{}",
        s.run_id,
        s.status.as_str(),
        s.steps_succeeded,
        s.steps_total
    )
}

/// Parses argv and executes one command. Returns the process exit code.
pub fn run(
    args: impl IntoIterator<Item = OsString>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let mut rendered = e.render().to_string();
            if e.use_stderr() && !rendered.contains("Usage:") {
                rendered.push_str(&format!("\n{}\n", Cli::command().render_usage()));
            }
            let _ = if e.use_stderr() {
                err.write_all(rendered.as_bytes())
            } else {
                out.write_all(rendered.as_bytes())
            };
            return code;
        }
    };
    let mut o = Output {
        json: cli.json,
        out,
        err,
    };
    match execute(cli, &mut o) {
        Ok(()) => EXIT_OK,
        Err(e) => {
            if o.json {
                let _ = o.doc(&ApiError::from(e));
            } else {
                o.note(&format!("error: {e}"));
            }
            EXIT_FAILURE
        }
    }
}

/// Entry point for the `coig` binary.
pub fn main() -> i32 {
    let _ = tracing_subscriber::fmt()
        .with_env_filter(
            tracing_subscriber::EnvFilter::try_from_env("COIG_LOG")
                .unwrap_or_else(|_| tracing_subscriber::EnvFilter::new("warn")),
        )
        .with_writer(std::io::stderr)
        .try_init();
    let stdout = std::io::stdout();
    let stderr = std::io::stderr();
    run(std::env::args_os(), &mut stdout.lock(), &mut stderr.lock())
}

fn execute(cli: Cli, o: &mut Output<'_>) -> Result<(), EngineError> {
    let cwd = std::env::current_dir().map_err(|e| EngineError::Io(e.to_string()))?;
    let (mut config, source) = CliConfig::discover(cli.config.as_deref(), &cwd)?;
    if let Some(path) = &source {
        tracing::debug!(config = %path.display(), "loaded configuration");
    }
    let fault_profile = match &cli.command {
        Command::Bench(BenchCommand::Run {
            fault: Some(f),
            profile,
            ..
        }) => Some(config.add_faulted_profile(profile.as_deref(), (*f).into())?),
        _ => None,
    };
    let engine = Engine::new(config)?;

    match cli.command {
        Command::Plan { prompt, profile } => {
            let plan = engine.plan(&prompt, profile.as_deref())?;
            o.doc(&plan)
        }
        Command::Run {
            plan_or_prompt,
            step,
            profile,
        } => {
            let path = Path::new(&plan_or_prompt);
            let plan = if path.is_file() {
                Engine::read_plan_file(path)?
            } else {
                engine.plan(&plan_or_prompt, profile.as_deref())?
            };
            let run = engine.start(plan, profile.as_deref(), step)?;
            o.note(&status_line(&run));
            if let Some(failed) = run.failed_step() {
                o.note(&format!(
                    "step {} failed: {}",
                    failed.index,
                    failed.error.as_deref().unwrap_or("unknown error")
                ));
            }
            o.emit(&RunSummary::of(&run), || run.run_id.clone())
        }
        Command::Resume { run_id, retry } => {
            let run = engine.resume(&run_id, retry)?;
            o.emit(&RunSummary::of(&run), || status_line(&run))
        }
        Command::Pause { run_id } => {
            let run = engine.pause(&run_id)?;
            o.emit(&RunSummary::of(&run), || status_line(&run))
        }
        Command::Show { run_id } => {
            let run = engine.store().load_run(&run_id)?;
            o.doc(&run)
        }
        Command::List { status } => {
            let filter =
                match status {
                    Some(s) => Some(crate::executor::RunStatus::parse(&s).ok_or_else(|| {
                        EngineError::InvalidInput(format!("unknown status {s:?}"))
                    })?),
                    None => None,
                };
            let runs = engine.store().list_runs(filter)?;
            o.emit(&runs, || {
                runs.iter()
                    .map(|r| {
                        format!(
                            "{}\t{}\t{}/{}\t{}",
                            r.run_id,
                            r.status.as_str(),
                            r.steps_succeeded,
                            r.steps_total,
                            r.original_prompt
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Intervene(args) => {
            let payload = match (&args.payload, &args.action) {
                (Some(p), _) => {
                    let text = match p.strip_prefix('@') {
                        Some(path) => read_file(Path::new(path))?,
                        None => p.clone(),
                    };
                    Some(
                        serde_json::from_str::<PlanStep>(&text)
                            .map_err(|e| EngineError::InvalidInput(format!("payload: {e}")))?,
                    )
                }
                (None, Some(action)) => Some(PlanStep {
                    index: args.at,
                    kind: args.step_kind.into(),
                    final_goal: String::new(),
                    step_action: action.clone(),
                    target_entity: args.target.clone(),
                }),
                (None, None) => None,
            };
            let mut iv = Intervention::new(args.kind.into(), args.at, payload);
            iv.author = Author::Human;
            let run = engine.intervene(&args.run_id, iv)?;
            o.emit(&RunSummary::of(&run), || status_line(&run))
        }
        Command::Eval(EvalCommand::Readability { run_id }) => {
            let report = engine.eval_readability(&run_id)?;
            o.emit(&report, || {
                report
                    .aggregates
                    .iter()
                    .map(|(kind, a)| {
                        format!(
                            "{:<8} before {:.3}  after {:.3}  ({} probes)",
                            kind.as_str(),
                            a.before,
                            a.after,
                            a.probes
                        )
                    })
                    .collect::<Vec<_>>()
                    .join("\n")
            })
        }
        Command::Eval(EvalCommand::Causal { run_id, step, to }) => {
            let outcome = engine.eval_causal(&run_id, step, &to)?;
            let r = &outcome.report;
            o.emit(&outcome, || {
                format!(
                    "unperturbed_final {:.3}\nat_step {:.3}\nperturbed_final {:.3}\nperturbed_run {}",
                    r.score_unperturbed_final, r.score_at_step, r.score_perturbed_final, outcome.perturbed_run_id
                )
            })
        }
        Command::Bench(BenchCommand::EcGen { count, seed, out }) => {
            let prompts = engine.ec_generate(count, seed)?;
            let text = bench::to_jsonl(&prompts);
            match out {
                Some(path) => {
                    write_file(&path, &text)?;
                    o.note(&format!(
                        "wrote {} prompts to {}",
                        prompts.len(),
                        path.display()
                    ));
                    o.emit(
                        &serde_json::json!({"count": prompts.len(), "path": path.display().to_string()}),
                        || path.display().to_string(),
                    )
                }
                None if o.json => o.doc(&prompts),
                None => o
                    .out
                    .write_all(text.as_bytes())
                    .map_err(|e| EngineError::Io(e.to_string())),
            }
        }
        Command::Bench(BenchCommand::Run {
            suite,
            pipeline,
            prompts,
            benchmark,
            profile,
            out,
            ..
        }) => {
            let profile = fault_profile.or(profile);
            let text = read_file(&prompts)?;
            match suite {
                Suite::Ec => {
                    let prompts = bench::from_jsonl(&text)?;
                    let card = engine.bench_ec(&prompts, pipeline.into(), profile.as_deref())?;
                    if let Some(path) = out {
                        write_file(
                            &path,
                            &canonical::to_string(&card)
                                .map_err(|e| EngineError::Io(e.to_string()))?,
                        )?;
                    }
                    if card.failed > 0 {
                        o.note(&format!(
                            "{} of {} prompts failed",
                            card.failed, card.prompts
                        ));
                    }
                    o.emit(&card, || {
                        table_csv(std::slice::from_ref(&card))
                            .trim_end()
                            .to_string()
                    })
                }
                Suite::Qa => {
                    let records = bench::parse_records(&text)?;
                    let card = engine.bench_qa(
                        &records,
                        benchmark.into(),
                        pipeline.into(),
                        profile.as_deref(),
                    )?;
                    if let Some(path) = out {
                        write_file(
                            &path,
                            &canonical::to_string(&card)
                                .map_err(|e| EngineError::Io(e.to_string()))?,
                        )?;
                    }
                    if card.failed > 0 {
                        o.note(&format!(
                            "{} of {} records failed",
                            card.failed,
                            card.rows.len()
                        ));
                    }
                    o.emit(&card, || {
                        let mut lines: Vec<String> = card
                            .groups
                            .iter()
                            .map(|(g, v)| format!("{g}\t{v:.3}"))
                            .collect();
                        lines.push(format!("overall\t{:.3}", card.overall));
                        lines.join("\n")
                    })
                }
            }
        }
        Command::Serve { bind } => {
            let runtime =
                tokio::runtime::Runtime::new().map_err(|e| EngineError::Io(e.to_string()))?;
            let engine = Arc::new(engine);
            runtime
                .block_on(service::serve(engine, bind.as_deref()))
                .map_err(|e| EngineError::Config(e.to_string()))
        }
    }
}
