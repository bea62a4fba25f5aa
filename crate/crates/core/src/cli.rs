//! The `ggv` command line.
//!
//! Exit codes: 0 success, 1 verification finished with failing elements,
//! 2 bad input or failed validation, 3 infrastructure failure.

use std::collections::BTreeMap;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::{Duration, Instant};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::{json, Value};

use crate::fixtures::{write_corpus, BuildConfig};
use crate::injection::{CommandRuntime, RuntimeCommand, RuntimeFactory, RuntimeSchema};
use crate::judge::{CommandJudge, ExternalJudge, RecordedJudge};
use crate::orchestrator::{self, RunConfig, RunError, RunReport};
use crate::scoring::{aggregate, confusion, majority_vote, metrics, Label, Mode, ScoreError};
use crate::spec_model::{validate_suite, Budget, Diagnostic, Suite};
use crate::toy::{parse_fault_list, serve, BuildSpec, HangPoint, LocalRuntime, ServeExit, ServeOptions, Template};

const EXIT_FAILED: u8 = 1;
const EXIT_INPUT: u8 = 2;
const EXIT_INFRA: u8 = 3;

#[derive(Parser, Debug)]
#[command(name = "ggv", version, about = "Verify a game build against its specification")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Load, validate and lint a suite against the runtime schema.
    Validate(ValidateArgs),
    /// Execute every unit and aggregate element verdicts.
    Run(RunArgs),
    /// Continue a run from its checkpoint.
    Resume(RunArgs),
    /// Write the mutation corpus.
    Fixtures(FixturesArgs),
    /// Score predicted element labels against references.
    Score(ScoreArgs),
    /// Serve the toy runtime on stdio.
    ToyRuntime(ToyArgs),
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, ValueEnum)]
pub enum Format {
    #[default]
    Text,
    Json,
}

#[derive(Args, Debug)]
pub struct SuiteArgs {
    #[arg(long)]
    pub spec: PathBuf,
    #[arg(long)]
    pub keypoints: PathBuf,
    #[arg(long)]
    pub units: PathBuf,
}

#[derive(Args, Debug)]
pub struct RuntimeArgs {
    /// Argv template; `{game}` and `{seed}` are substituted. Without one the
    /// toy runtime runs in-process.
    #[arg(long, env = "GGV_RUNTIME_CMD")]
    pub runtime_cmd: Option<String>,
    /// Build file from `ggv fixtures`; supplies the game and runtime command.
    #[arg(long)]
    pub build: Option<PathBuf>,
    /// Game reference passed to launch (defaults to the spec's game id).
    #[arg(long)]
    pub game: Option<String>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value_t = 60_000)]
    pub timeout_ms: u64,
}

#[derive(Args, Debug)]
pub struct ValidateArgs {
    #[command(flatten)]
    pub suite: SuiteArgs,
    #[command(flatten)]
    pub runtime: RuntimeArgs,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct RunArgs {
    #[command(flatten)]
    pub suite: SuiteArgs,
    #[command(flatten)]
    pub runtime: RuntimeArgs,
    #[arg(long)]
    pub max_concurrency: Option<usize>,
    #[arg(long, default_value_t = 2)]
    pub retries: u32,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long)]
    pub report: Option<PathBuf>,
    /// Command consulted for units with an external judge.
    #[arg(long, conflicts_with = "judge_recorded")]
    pub judge_cmd: Option<String>,
    /// Canned verdict file for units with an external judge.
    #[arg(long)]
    pub judge_recorded: Option<PathBuf>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct FixturesArgs {
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum)]
    pub template: Option<TemplateArg>,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum TemplateArg {
    Collider,
    Ledger,
    Quest,
}

impl From<TemplateArg> for Template {
    fn from(t: TemplateArg) -> Self {
        match t {
            TemplateArg::Collider => Template::Collider,
            TemplateArg::Ledger => Template::Ledger,
            TemplateArg::Quest => Template::Quest,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ModeArg {
    Binary,
    Extended,
}

#[derive(Args, Debug)]
pub struct ScoreArgs {
    /// Predicted labels, one file per run.
    #[arg(long = "pred", required = true, num_args = 1..)]
    pub preds: Vec<PathBuf>,
    /// Reference labels; several are majority-voted.
    #[arg(long = "ref", required = true, num_args = 1..)]
    pub refs: Vec<PathBuf>,
    #[arg(long, value_enum, default_value = "extended")]
    pub mode: ModeArg,
    #[arg(long, value_enum, default_value_t)]
    pub format: Format,
}

#[derive(Args, Debug)]
pub struct ToyArgs {
    #[arg(long, value_enum)]
    pub template: Option<TemplateArg>,
    /// Comma-separated fault names.
    #[arg(long, default_value = "")]
    pub faults: String,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub latency_ms: Option<u64>,
    #[arg(long, value_enum)]
    pub hang_on: Option<HangPoint>,
    #[arg(long, value_enum)]
    pub crash_on: Option<HangPoint>,
    /// Leak state between sessions through a marker file in the temp dir.
    #[arg(long)]
    pub ambient_mutation: bool,
    #[arg(long, requires = "ambient_mutation")]
    pub scratch_dir: Option<PathBuf>,
}

struct Failure {
    code: u8,
    message: String,
    diagnostics: Vec<Diagnostic>,
}

impl Failure {
    fn new(code: u8, message: impl Into<String>) -> Self {
        Failure {
            code,
            message: message.into(),
            diagnostics: Vec::new(),
        }
    }
}

type Outcome = Result<u8, Failure>;

pub fn main() -> ExitCode {
    let cli = Cli::parse();
    ExitCode::from(execute(cli))
}

/// Runs a parsed command line and returns the exit code.
pub fn execute(cli: Cli) -> u8 {
    let format = match &cli.command {
        Command::Validate(a) => a.format,
        Command::Run(a) | Command::Resume(a) => a.format,
        Command::Fixtures(a) => a.format,
        Command::Score(a) => a.format,
        Command::ToyRuntime(_) => Format::Text,
    };
    let outcome = match cli.command {
        Command::Validate(a) => cmd_validate(&a),
        Command::Run(a) => cmd_run(&a, false),
        Command::Resume(a) => cmd_run(&a, true),
        Command::Fixtures(a) => cmd_fixtures(&a),
        Command::Score(a) => cmd_score(&a),
        Command::ToyRuntime(a) => cmd_toy(&a),
    };
    match outcome {
        Ok(code) => code,
        Err(f) => {
            match format {
                Format::Json => print_json(&json!({
                    "error": {"exit": f.code, "message": f.message},
                    "diagnostics": f.diagnostics,
                })),
                Format::Text => {
                    for d in &f.diagnostics {
                        eprintln!("{d}");
                    }
                    eprintln!("error: {}", f.message);
                }
            }
            f.code
        }
    }
}

fn print_json<T: Serialize>(value: &T) {
    let text = serde_json::to_string_pretty(value).expect("output serializes");
    let _ = writeln!(io::stdout().lock(), "{text}");
}

fn load_suite(args: &SuiteArgs) -> Result<Suite, Failure> {
    Suite::load(&args.spec, &args.keypoints, &args.units).map_err(|e| Failure {
        code: EXIT_INPUT,
        message: e.to_string(),
        diagnostics: vec![e.to_diagnostic()],
    })
}

/// A command template whose program is literally `ggv` runs this binary.
fn resolve_program(mut argv: Vec<String>) -> Vec<String> {
    if argv.first().map(String::as_str) == Some("ggv") {
        if let Ok(me) = std::env::current_exe() {
            argv[0] = me.display().to_string();
        }
    }
    argv
}

struct Target {
    factory: Box<dyn RuntimeFactory>,
    game: String,
}

fn target(args: &RuntimeArgs, suite: &Suite) -> Result<Target, Failure> {
    let build: Option<BuildConfig> = match &args.build {
        Some(path) => {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
            Some(
                serde_json::from_str(&text)
                    .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))?,
            )
        }
        None => None,
    };
    let game = args
        .game
        .clone()
        .or_else(|| build.as_ref().map(|b| b.game.clone()))
        .unwrap_or_else(|| suite.spec.game_id.clone());
    let cmd = args
        .runtime_cmd
        .clone()
        .or_else(|| build.as_ref().map(|b| b.runtime_cmd.clone()));
    let factory: Box<dyn RuntimeFactory> = match cmd {
        Some(cmd) => {
            let parsed = RuntimeCommand::parse(&cmd).map_err(|e| Failure::new(EXIT_INPUT, e))?;
            let argv = resolve_program(parsed.argv().to_vec());
            let command = RuntimeCommand::from_argv(argv).map_err(|e| Failure::new(EXIT_INPUT, e))?;
            Box::new(CommandRuntime::new(command))
        }
        None => Box::new(LocalRuntime::new()),
    };
    Ok(Target { factory, game })
}

fn handshake(target: &Target, args: &RuntimeArgs) -> Result<(String, RuntimeSchema), Failure> {
    let deadline = Instant::now() + Duration::from_millis(args.timeout_ms);
    let mut session = target
        .factory
        .launch(&target.game, args.seed, Some(deadline))
        .map_err(|e| Failure::new(EXIT_INFRA, format!("runtime handshake failed: {e}")))?;
    let found = (session.build_id().to_string(), session.schema().clone());
    session.shutdown();
    Ok(found)
}

fn report_diagnostics(diagnostics: &[Diagnostic], format: Format) {
    let errors = diagnostics.iter().filter(|d| d.is_error()).count();
    match format {
        Format::Json => print_json(&json!({
            "errors": errors,
            "warnings": diagnostics.len() - errors,
            "diagnostics": diagnostics,
        })),
        Format::Text => {
            for d in diagnostics {
                eprintln!("{d}");
            }
            eprintln!("{errors} error(s), {} warning(s)", diagnostics.len() - errors);
        }
    }
}

fn cmd_validate(args: &ValidateArgs) -> Outcome {
    let suite = load_suite(&args.suite)?;
    let target = target(&args.runtime, &suite)?;
    let (_, schema) = handshake(&target, &args.runtime)?;
    let diagnostics = validate_suite(&suite, Some(&schema), &Budget::default());
    report_diagnostics(&diagnostics, args.format);
    Ok(if diagnostics.iter().any(Diagnostic::is_error) { EXIT_INPUT } else { 0 })
}

fn external_judge(args: &RunArgs) -> Result<Option<Box<dyn ExternalJudge>>, Failure> {
    if let Some(cmd) = &args.judge_cmd {
        let argv = shlex::split(cmd).ok_or_else(|| Failure::new(EXIT_INPUT, "unbalanced quoting in judge command"))?;
        let judge = CommandJudge::new(resolve_program(argv)).map_err(|e| Failure::new(EXIT_INPUT, e))?;
        return Ok(Some(Box::new(judge)));
    }
    if let Some(path) = &args.judge_recorded {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
        let judge = RecordedJudge::from_json(&text)
            .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", path.display())))?;
        return Ok(Some(Box::new(judge)));
    }
    Ok(None)
}

fn cmd_run(args: &RunArgs, resuming: bool) -> Outcome {
    if resuming && args.checkpoint.is_none() {
        return Err(Failure::new(EXIT_INPUT, "resume needs --checkpoint"));
    }
    let suite = load_suite(&args.suite)?;
    let target = target(&args.runtime, &suite)?;
    let (_, schema) = handshake(&target, &args.runtime)?;
    let diagnostics = validate_suite(&suite, Some(&schema), &Budget::default());
    if diagnostics.iter().any(Diagnostic::is_error) {
        return Err(Failure {
            code: EXIT_INPUT,
            message: "validation failed".into(),
            diagnostics: diagnostics.into_iter().filter(Diagnostic::is_error).collect(),
        });
    }
    let judge = external_judge(args)?;

    let mut config = RunConfig::new(target.game.clone());
    if let Some(k) = args.max_concurrency {
        config.max_concurrency = k;
    }
    config.unit_timeout_ms = args.runtime.timeout_ms;
    config.retry_budget = args.retries;
    config.run_seed = args.runtime.seed;
    config.checkpoint_path = args.checkpoint.clone();
    let go = if resuming { orchestrator::resume } else { orchestrator::run };
    let report = go(&suite, target.factory.as_ref(), judge.as_deref(), &config).map_err(|e| match e {
        RunError::Config(m) => Failure::new(EXIT_INPUT, m),
        RunError::Checkpoint(e) => Failure::new(EXIT_INFRA, format!("checkpoint: {e}")),
    })?;

    if let Some(path) = &args.report {
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        std::fs::write(path, text)
            .map_err(|e| Failure::new(EXIT_INFRA, format!("{}: {e}", path.display())))?;
    }
    match args.format {
        Format::Json => print_json(&report),
        Format::Text => print_run_text(&report),
    }
    Ok(if report.any_element_failed() { EXIT_FAILED } else { 0 })
}

fn print_run_text(report: &RunReport) {
    let mut out = io::stdout().lock();
    for kp in &report.keypoint_verdicts {
        let units: Vec<String> = kp
            .units
            .iter()
            .filter_map(|id| report.unit(id))
            .map(|r| format!("{} {}", r.unit_id, r.verdict))
            .collect();
        let verdict = serde_json::to_value(kp.verdict).expect("verdict serializes");
        let _ = writeln!(
            out,
            "{:<8} {:<6} {:<10} {}",
            kp.keypoint_id,
            kp.element_id,
            verdict.as_str().unwrap_or_default(),
            units.join(", ")
        );
    }
    let _ = writeln!(out);
    let _ = writeln!(out, "{:<8} {:<6} provenance", "element", "label");
    for l in &report.element_labels {
        let provenance = serde_json::to_value(l.provenance).expect("provenance serializes");
        let _ = writeln!(
            out,
            "{:<8} {:<6} {}",
            l.element_id,
            l.label,
            provenance.as_str().unwrap_or_default()
        );
    }
    let _ = writeln!(
        out,
        "\nbuild {}: {} executed, {} skipped, {} superseded, {} rejected; coverage {}/{}; {} ms",
        report.build_id,
        report.counts.executed,
        report.counts.skipped,
        report.counts.superseded,
        report.rejected_units.len(),
        report.coverage.covered_elements,
        report.coverage.total_elements,
        report.wall_clock_ms
    );
}

fn cmd_fixtures(args: &FixturesArgs) -> Outcome {
    let templates: Vec<Template> = match args.template {
        Some(t) => vec![t.into()],
        None => Template::ALL.to_vec(),
    };
    let written = write_corpus(&args.out, &templates)
        .map_err(|e| Failure::new(EXIT_INPUT, format!("{}: {e}", args.out.display())))?;
    let rel: Vec<String> = written
        .iter()
        .map(|p| p.strip_prefix(&args.out).unwrap_or(p).display().to_string())
        .collect();
    let builds = rel.iter().filter(|p| p.ends_with(".build.json")).count();
    match args.format {
        Format::Json => print_json(&json!({"builds": builds, "files": rel})),
        Format::Text => println!("wrote {} files ({builds} builds) to {}", rel.len(), args.out.display()),
    }
    Ok(0)
}

/// Element labels from a label list, a truth file or a run report.
fn read_labels(path: &Path) -> Result<(BTreeMap<String, Label>, Option<u64>), Failure> {
    let bad = |m: String| Failure::new(EXIT_INPUT, format!("{}: {m}", path.display()));
    let text = std::fs::read_to_string(path).map_err(|e| bad(e.to_string()))?;
    let doc: Value = serde_json::from_str(&text).map_err(|e| bad(e.to_string()))?;
    let time = doc.get("wall_clock_ms").and_then(Value::as_u64);
    let list = match &doc {
        Value::Array(_) => &doc,
        Value::Object(m) => m
            .get("element_labels")
            .or_else(|| m.get("elements"))
            .ok_or_else(|| bad("no element labels".into()))?,
        _ => return Err(bad("expected a label list".into())),
    };
    #[derive(serde::Deserialize)]
    struct Entry {
        element_id: String,
        label: Label,
    }
    let entries: Vec<Entry> = serde_json::from_value(list.clone()).map_err(|e| bad(e.to_string()))?;
    let mut labels = BTreeMap::new();
    for e in entries {
        if labels.insert(e.element_id.clone(), e.label).is_some() {
            return Err(bad(format!("element `{}` labeled twice", e.element_id)));
        }
    }
    Ok((labels, time))
}

fn score_failure(e: ScoreError) -> Failure {
    Failure::new(EXIT_INPUT, e.to_string())
}

fn cmd_score(args: &ScoreArgs) -> Outcome {
    let mode = match args.mode {
        ModeArg::Binary => Mode::Binary,
        ModeArg::Extended => Mode::Extended,
    };
    let refs = args
        .refs
        .iter()
        .map(|p| read_labels(p).map(|(l, _)| l))
        .collect::<Result<Vec<_>, _>>()?;
    let vote = majority_vote(&refs).map_err(score_failure)?;
    let mut runs = Vec::new();
    let mut times = Vec::new();
    for path in &args.preds {
        let (pred, time) = read_labels(path)?;
        let counts = confusion(&pred, &vote.labels).map_err(score_failure)?;
        runs.push((path.display().to_string(), metrics(&counts, mode).map_err(score_failure)?));
        times.extend(time);
    }
    let reports: Vec<_> = runs.iter().map(|(_, r)| r.clone()).collect();
    let at_k = aggregate(&reports, mode).map_err(score_failure)?;
    let mean_time = (!times.is_empty()).then(|| times.iter().sum::<u64>() as f64 / times.len() as f64);
    match args.format {
        Format::Json => print_json(&json!({
            "mode": mode,
            "reference": {"sources": refs.len(), "labels": vote.labels, "ties": vote.ties},
            "runs": runs.iter().map(|(source, r)| json!({"source": source, "metrics": r})).collect::<Vec<_>>(),
            "at_k": at_k,
            "mean_wall_clock_ms": mean_time,
        })),
        Format::Text => {
            let mut out = io::stdout().lock();
            let _ = writeln!(out, "{:<40} {:>8} {:>8} {:>8} {:>8}", "run", "acc", "prec", "rec", "f1");
            for (source, r) in &runs {
                let _ = writeln!(out, "{source:<40} {:>8} {:>8} {:>8} {:>8}", r.acc, r.prec, r.rec, r.f1);
            }
            let k = at_k.k;
            let _ = writeln!(
                out,
                "{:<40} {:>8} {:>8} {:>8} {:>8}",
                format!("macro@{k}"),
                at_k.acc.macro_mean,
                at_k.prec.macro_mean,
                at_k.rec.macro_mean,
                at_k.f1.macro_mean
            );
            let _ = writeln!(
                out,
                "{:<40} {:>8} {:>8} {:>8} {:>8}",
                format!("micro@{k}"),
                at_k.acc.micro,
                at_k.prec.micro,
                at_k.rec.micro,
                at_k.f1.micro
            );
            if !vote.ties.is_empty() {
                let _ = writeln!(out, "reference ties broken to fail: {}", vote.ties.join(", "));
            }
            if let Some(t) = mean_time {
                let _ = writeln!(out, "mean wall clock: {t:.0} ms");
            }
        }
    }
    Ok(0)
}

fn cmd_toy(args: &ToyArgs) -> Outcome {
    let faults = parse_fault_list(&args.faults).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?;
    let build = match args.template {
        Some(t) => Some(BuildSpec::new(t.into(), faults).map_err(|e| Failure::new(EXIT_INPUT, e.to_string()))?),
        None if faults.is_empty() => None,
        None => return Err(Failure::new(EXIT_INPUT, "--faults needs --template")),
    };
    let options = ServeOptions {
        build,
        default_seed: args.seed,
        latency: args.latency_ms.map(Duration::from_millis),
        hang_on: args.hang_on,
        crash_on: args.crash_on,
        ambient_dir: args
            .ambient_mutation
            .then(|| args.scratch_dir.clone().unwrap_or_else(std::env::temp_dir)),
    };
    let stdin = io::stdin().lock();
    let stdout = io::stdout().lock();
    match serve(stdin, stdout, &options) {
        Ok(ServeExit::Shutdown) => Ok(0),
        Ok(ServeExit::Eof) => Ok(2),
        Ok(ServeExit::Crash) => Ok(70),
        Err(e) => Err(Failure::new(EXIT_INFRA, e.to_string())),
    }
}
