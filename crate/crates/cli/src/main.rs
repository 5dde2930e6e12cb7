use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Duration;

use clap::{Args, Parser, Subcommand};
use steersmc::engine::{InferenceConfig, Method, ResampleScheme, SelectMode};
use steersmc::planner::{FixtureLibrary, PlanSource, RemoteGenerator, DEFAULT_RETRIES};
use steersmc::runner::{self, ModelOptions, ModelSource, RunOptions, TraceFile};
use steersmc::tasks::generate_task_instances;
use steersmc::token_model::Tokenizer;
use steersmc::{Error, ErrorKind};

const MODEL_ENDPOINT_ENV: &str = "STEERSMC_MODEL_ENDPOINT";

#[derive(Parser)]
#[command(
    name = "steersmc",
    version,
    about = "Steer token models with particle-based inference over declarative plans"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run every task in a task file and write one record per task.
    Run(Box<RunArgs>),
    /// Aggregate record files by task type and method.
    Eval(EvalArgs),
    /// Render a stored step trace as CSV and a static HTML page.
    Trace(TraceArgs),
    /// Write generated task instances for one family.
    Generate(GenerateArgs),
}

#[derive(Args)]
struct RunArgs {
    /// Line-delimited task file.
    #[arg(long)]
    tasks: PathBuf,
    /// Directory of `<task_type>.plan.json` fixtures.
    #[arg(long, conflicts_with = "planner_endpoint")]
    plans: Option<PathBuf>,
    /// Base URL of a plan-generating service.
    #[arg(long, env = "STEERSMC_PLANNER_ENDPOINT")]
    planner_endpoint: Option<String>,
    /// Prompt template for the plan service, with {task} and {prior_error} slots.
    #[arg(long, requires = "planner_endpoint")]
    planner_template: Option<PathBuf>,
    /// table:PATH, ngram:PATH, uniform:PATH or remote:URL.
    #[arg(long)]
    model: Option<String>,
    /// Vocabulary file for remote models.
    #[arg(long)]
    vocab: Option<PathBuf>,
    #[arg(long, default_value_t = 3)]
    ngram_order: usize,
    #[arg(long, default_value_t = 0.1)]
    smoothing: f64,
    #[arg(long, value_parser = parse_tokenizer, default_value = "char")]
    tokenizer: Tokenizer,
    #[arg(long)]
    method: Option<Method>,
    #[arg(short = 'N', long = "particles")]
    n_particles: Option<usize>,
    #[arg(long)]
    ess_threshold: Option<f64>,
    #[arg(long)]
    max_steps: Option<usize>,
    /// Wall-clock budget per attempt, in seconds.
    #[arg(long)]
    timeout: Option<f64>,
    /// Total attempts per task, the first one included.
    #[arg(long, default_value_t = DEFAULT_RETRIES)]
    retries: usize,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long, value_parser = parse_scheme)]
    resample_scheme: Option<ResampleScheme>,
    #[arg(long, value_parser = parse_select)]
    select: Option<SelectMode>,
    #[arg(long, default_value_t = 1)]
    jobs: usize,
    /// Write `<run_id>.trace.json` files here.
    #[arg(long)]
    trace: Option<PathBuf>,
    /// Record file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    /// JSON file with inference settings; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Include wall time in records (makes them run-dependent).
    #[arg(long)]
    timing: bool,
}

#[derive(Args)]
struct EvalArgs {
    /// Record files to aggregate.
    #[arg(required = true)]
    records: Vec<PathBuf>,
    /// Also write the aggregate table as CSV.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct TraceArgs {
    /// Directory given to `run --trace`.
    #[arg(long)]
    dir: PathBuf,
    #[arg(long)]
    run_id: String,
    /// Output prefix for `.csv` and `.html`; defaults to the trace directory.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Args)]
struct GenerateArgs {
    #[arg(long)]
    family: String,
    #[arg(long, default_value_t = 10)]
    count: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long)]
    out: Option<PathBuf>,
}

fn parse_tokenizer(s: &str) -> Result<Tokenizer, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| "expected char or whitespace".into())
}

fn parse_scheme(s: &str) -> Result<ResampleScheme, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| "expected multinomial or systematic".into())
}

fn parse_select(s: &str) -> Result<SelectMode, String> {
    serde_json::from_value(serde_json::Value::String(s.into()))
        .map_err(|_| "expected sample or argmax".into())
}

/// Usage problems exit 2; everything that goes wrong while doing the work exits 1.
enum Failure {
    Usage(String),
    Run(Error),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Run(e)
    }
}

impl From<std::io::Error> for Failure {
    fn from(e: std::io::Error) -> Self {
        Failure::Run(e.into())
    }
}

fn usage(e: Error) -> Failure {
    Failure::Usage(e.to_string())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(a) => cmd_run(*a),
        Command::Eval(a) => cmd_eval(a),
        Command::Trace(a) => cmd_trace(a),
        Command::Generate(a) => cmd_generate(a),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("error: {msg}");
            ExitCode::from(2)
        }
        Err(Failure::Run(e)) => {
            eprintln!("error: {e}");
            ExitCode::from(1)
        }
    }
}

fn output(path: Option<&Path>) -> Result<Box<dyn Write + Send>, Failure> {
    Ok(match path {
        Some(p) => Box::new(BufWriter::new(File::create(p)?)),
        None => Box::new(BufWriter::new(std::io::stdout())),
    })
}

/// Defaults, then the config file, then flags.
fn resolve_config(a: &RunArgs) -> Result<InferenceConfig, Failure> {
    let mut c = match &a.config {
        Some(p) => {
            let text = std::fs::read_to_string(p)?;
            serde_json::from_str(&text)
                .map_err(|e| Failure::Usage(format!("{}: {e}", p.display())))?
        }
        None => InferenceConfig::default(),
    };
    if let Some(m) = a.method {
        c.method = m;
    }
    if let Some(n) = a.n_particles {
        c.n_particles = n;
    }
    if a.ess_threshold.is_some() {
        c.ess_threshold = a.ess_threshold;
    }
    if let Some(m) = a.max_steps {
        c.max_steps = m;
    }
    if let Some(t) = a.timeout {
        let d = Duration::try_from_secs_f64(t)
            .map_err(|e| Failure::Usage(format!("--timeout: {e}")))?;
        c.timeout = Some(d);
    }
    if let Some(s) = a.seed {
        c.seed = s;
    }
    if let Some(s) = a.resample_scheme {
        c.resample_scheme = s;
    }
    if let Some(s) = a.select {
        c.select = s;
    }
    c.validate().map_err(usage)?;
    Ok(c)
}

fn model_source(a: &RunArgs) -> Result<ModelSource, Failure> {
    let spec = match (&a.model, std::env::var(MODEL_ENDPOINT_ENV)) {
        (Some(m), _) => m.clone(),
        (None, Ok(url)) if !url.is_empty() => format!("remote:{url}"),
        _ => {
            return Err(Failure::Usage(format!(
                "--model is required (or set {MODEL_ENDPOINT_ENV})"
            )))
        }
    };
    spec.parse().map_err(usage)
}

fn plan_source(a: &RunArgs) -> Result<Box<dyn PlanSource>, Failure> {
    match (&a.plans, &a.planner_endpoint) {
        (Some(dir), _) => Ok(Box::new(FixtureLibrary::load_dir(dir)?)),
        (None, Some(url)) => {
            let mut g = RemoteGenerator::new(url)?;
            if let Some(t) = &a.planner_template {
                g = g.with_template(std::fs::read_to_string(t)?);
            }
            Ok(Box::new(g))
        }
        (None, None) => Err(Failure::Usage(
            "one of --plans or --planner-endpoint is required".into(),
        )),
    }
}

fn cmd_run(a: RunArgs) -> Result<(), Failure> {
    if a.retries == 0 {
        return Err(Failure::Usage("--retries must be at least 1".into()));
    }
    if a.jobs == 0 {
        return Err(Failure::Usage("--jobs must be at least 1".into()));
    }
    let config = resolve_config(&a)?;
    let source = model_source(&a)?;
    let options = ModelOptions {
        ngram_order: a.ngram_order,
        smoothing: a.smoothing,
        tokenizer: a.tokenizer,
        vocab: a.vocab.clone(),
    };
    let models = runner::single_model(runner::load_model(&source, &options)?);
    let plans = plan_source(&a)?;
    let tasks = runner::read_tasks(&a.tasks)?;
    let opts = RunOptions {
        config,
        max_attempts: a.retries,
        jobs: a.jobs,
        trace_dir: a.trace.clone(),
        timing: a.timing,
    };
    let mut out = output(a.out.as_deref())?;
    let records = runner::run_tasks(&tasks, plans.as_ref(), &models, &opts, &mut out)?;
    let errored = records.iter().filter(|r| r.error.is_some()).count();
    let passed = records.iter().filter(|r| r.passed).count();
    eprintln!(
        "{} tasks: {passed} passed, {errored} ended in an error",
        records.len()
    );
    Ok(())
}

fn cmd_eval(a: EvalArgs) -> Result<(), Failure> {
    let records = runner::read_records(&a.records)?;
    let rows = runner::aggregate(&records);
    print!("{}", runner::render_table(&rows));
    if let Some(p) = &a.out {
        runner::write_csv(&rows, BufWriter::new(File::create(p)?))?;
    }
    Ok(())
}

fn cmd_trace(a: TraceArgs) -> Result<(), Failure> {
    let trace = TraceFile::read(&a.dir, &a.run_id).map_err(|e| match e.kind() {
        ErrorKind::Io => Failure::Usage(format!(
            "no trace for run {:?} in {}: {e}",
            a.run_id,
            a.dir.display()
        )),
        _ => Failure::Run(e),
    })?;
    let prefix = a.out.unwrap_or_else(|| a.dir.join(&a.run_id));
    let with_ext = |ext: &str| {
        let mut s = prefix.clone().into_os_string();
        s.push(ext);
        PathBuf::from(s)
    };
    let (csv_path, html_path) = (with_ext(".csv"), with_ext(".html"));
    std::fs::write(&csv_path, runner::render_trace_csv(&trace)?)?;
    std::fs::write(&html_path, runner::render_trace_html(&trace))?;
    eprintln!("wrote {} and {}", csv_path.display(), html_path.display());
    Ok(())
}

fn cmd_generate(a: GenerateArgs) -> Result<(), Failure> {
    let tasks = generate_task_instances(&a.family, a.count, a.seed).map_err(usage)?;
    let mut out = output(a.out.as_deref())?;
    for t in tasks {
        writeln!(
            out,
            "{}",
            serde_json::to_string(&t).expect("task serializes")
        )?;
    }
    out.flush()?;
    Ok(())
}
