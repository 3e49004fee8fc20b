//! Command-line interface for the conservation-law engine.
//!
//! Subcommands map one-to-one onto the `report` module's run functions:
//!
//! * `count`     — bracket-closure dimension and certified law count
//! * `find`      — exact basis of polynomial conservation laws up to a degree
//! * `verify`    — symbolic conservation check of candidate polynomials
//! * `simulate`  — numerical gradient flow with conservation-drift tracking
//! * `reproduce` — seeded benchmark sweep comparing counts with predictions
//!
//! `--json` switches stdout to a byte-deterministic JSON report (no wall
//! time, sorted keys); the human-readable mode appends elapsed time.
//! The `CONSLAW_SEED` environment variable overrides any configured seed.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use clap::{Args, CommandFactory, Parser, Subcommand};
use serde::Deserialize;

use conslaw::flowsim::{FlowConfig, Trajectory};
use conslaw::lieclosure::ClosureParams;
use conslaw::models::{ModelKind, ModelSpec};
use conslaw::poly::Poly;
use conslaw::report::{
    exit, run_count, run_find, run_reproduce, run_simulate, run_verify, ReportError,
};

#[derive(Parser)]
#[command(
    name = "conslaw",
    version,
    about = "Exact conservation laws of gradient flows for network parameterizations",
    propagate_version = true
)]
struct Cli {
    /// Print a machine-readable JSON report instead of text.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Count independent conservation laws via Lie-bracket closure.
    Count {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        params: ParamArgs,
    },
    /// Solve for a basis of polynomial conservation laws up to a degree.
    Find {
        #[command(flatten)]
        model: ModelArgs,
        #[command(flatten)]
        params: ParamArgs,
        /// Maximum total degree of the polynomial ansatz.
        #[arg(long, default_value_t = 2)]
        max_degree: u32,
    },
    /// Check symbolically whether candidate polynomials are conserved.
    Verify {
        #[command(flatten)]
        model: ModelArgs,
        /// File with one candidate polynomial per line ('#' starts a comment).
        #[arg(long)]
        laws: Option<PathBuf>,
        /// Inline candidate polynomial in t1..tD (repeatable; may start
        /// with a minus sign).
        #[arg(long = "law", allow_hyphen_values = true)]
        law_texts: Vec<String>,
    },
    /// Integrate gradient flow numerically and measure conservation drift.
    Simulate {
        /// JSON flow configuration file.
        #[arg(long)]
        flow: PathBuf,
        /// Also write the recorded trajectory to this CSV file.
        #[arg(long)]
        dump_states: Option<PathBuf>,
    },
    /// Run the ten seeded benchmark models and compare computed law counts
    /// with the closed-form predictions.
    Reproduce {
        /// Master seed for architecture draws and sampling.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Worker threads (default: one per core).
        #[arg(long)]
        jobs: Option<usize>,
    },
}

#[derive(Args)]
struct ModelArgs {
    /// Model family: linear | relu2_nobias | relu2_bias | relu_deep_nobias | custom.
    #[arg(long)]
    kind: Option<String>,
    /// Layer widths input,hidden…,output — e.g. 2,3,2.
    #[arg(long, value_delimiter = ',')]
    widths: Vec<usize>,
    /// Reparametrization component for --kind custom (repeatable).
    #[arg(long = "phi", allow_hyphen_values = true)]
    phi: Vec<String>,
    /// Ambient parameter dimension for --kind custom.
    #[arg(long)]
    dim: Option<usize>,
    /// JSON file with {"model": {…}, "params": {…}}; flags take precedence.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Args)]
struct ParamArgs {
    /// Number of distinct generic sample points.
    #[arg(long)]
    samples: Option<usize>,
    /// Sample coordinates are drawn from [-bound, bound] \ {0}.
    #[arg(long)]
    bound: Option<i64>,
    /// Maximum number of bracket iterations.
    #[arg(long)]
    max_iter: Option<u32>,
    /// Abort when an intermediate polynomial degree would exceed this cap.
    #[arg(long)]
    degree_cap: Option<u32>,
    /// Sampling seed (the CONSLAW_SEED environment variable wins).
    #[arg(long)]
    seed: Option<u64>,
}

/// On-disk shape of `--config` files. Both sections are optional; omitted
/// closure parameters fall back to the defaults.
#[derive(Default, Deserialize)]
#[serde(deny_unknown_fields)]
struct FileConfig {
    model: Option<ModelSpec>,
    params: Option<ClosureParams>,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    InvalidInput(String),
    Io(String),
    Report(ReportError),
}

impl From<ReportError> for CliError {
    fn from(e: ReportError) -> Self {
        CliError::Report(e)
    }
}

impl CliError {
    fn exit_code(&self) -> u8 {
        let code = match self {
            CliError::Usage(_) => exit::USAGE,
            CliError::InvalidInput(_) => exit::INVALID_INPUT,
            CliError::Io(_) => exit::IO,
            CliError::Report(e) => e.exit_code(),
        };
        code as u8
    }

    fn message(&self) -> String {
        match self {
            CliError::Usage(m) | CliError::InvalidInput(m) | CliError::Io(m) => m.clone(),
            CliError::Report(e) => e.to_string(),
        }
    }
}

fn read_file(path: &Path) -> Result<String, CliError> {
    fs::read_to_string(path).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

fn load_file_config(path: Option<&Path>) -> Result<FileConfig, CliError> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = read_file(path)?;
    serde_json::from_str(&text)
        .map_err(|e| CliError::InvalidInput(format!("{}: {e}", path.display())))
}

/// Model precedence: `--kind` (with its companion flags) replaces any config
/// model wholesale; otherwise the config file must provide one.
fn resolve_model(args: &ModelArgs, from_config: Option<ModelSpec>) -> Result<ModelSpec, CliError> {
    if let Some(kind_str) = &args.kind {
        let kind = ModelKind::parse(kind_str).map_err(|e| CliError::InvalidInput(e.to_string()))?;
        Ok(ModelSpec {
            kind,
            widths: args.widths.clone(),
            phi: args.phi.clone(),
            dim: args.dim,
        })
    } else if !args.widths.is_empty() || !args.phi.is_empty() || args.dim.is_some() {
        Err(CliError::Usage(
            "--widths/--phi/--dim need --kind to form a model".into(),
        ))
    } else {
        from_config
            .ok_or_else(|| CliError::Usage("no model given; pass --kind … or --config FILE".into()))
    }
}

/// Parameter precedence: defaults < config file < explicit flags < CONSLAW_SEED.
fn resolve_params(
    args: &ParamArgs,
    from_config: Option<ClosureParams>,
) -> Result<ClosureParams, CliError> {
    let mut params = from_config.unwrap_or_default();
    if let Some(v) = args.samples {
        params.samples = v;
    }
    if let Some(v) = args.bound {
        params.bound = v;
    }
    if let Some(v) = args.max_iter {
        params.max_iter = v;
    }
    if let Some(v) = args.degree_cap {
        params.degree_cap = v;
    }
    if let Some(v) = args.seed {
        params.seed = v;
    }
    if let Ok(raw) = std::env::var("CONSLAW_SEED") {
        params.seed = raw
            .parse()
            .map_err(|_| CliError::InvalidInput(format!("CONSLAW_SEED is not a u64: '{raw}'")))?;
    }
    Ok(params)
}

fn resolve_model_and_params(
    model: &ModelArgs,
    params: &ParamArgs,
) -> Result<(ModelSpec, ClosureParams), CliError> {
    let file = load_file_config(model.config.as_deref())?;
    Ok((
        resolve_model(model, file.model)?,
        resolve_params(params, file.params)?,
    ))
}

fn load_laws(
    path: Option<&Path>,
    inline: &[String],
    dim: usize,
) -> Result<Vec<(String, Poly)>, CliError> {
    let mut laws = Vec::new();
    if let Some(path) = path {
        let text = read_file(path)?;
        for (idx, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let poly = Poly::parse(line, dim, "t").map_err(|e| {
                CliError::InvalidInput(format!("{}:{}: {e}", path.display(), idx + 1))
            })?;
            laws.push((line.to_string(), poly));
        }
    }
    for text in inline {
        let poly = Poly::parse(text, dim, "t")
            .map_err(|e| CliError::InvalidInput(format!("--law '{text}': {e}")))?;
        laws.push((text.clone(), poly));
    }
    if laws.is_empty() {
        return Err(CliError::Usage(
            "no candidate laws given; use --laws FILE and/or --law EXPR".into(),
        ));
    }
    Ok(laws)
}

fn write_states_csv(path: &Path, trajectory: &Trajectory) -> Result<(), CliError> {
    let dim = trajectory.states.first().map_or(0, Vec::len);
    let mut out = String::from("t");
    for i in 1..=dim {
        out.push_str(&format!(",theta_{i}"));
    }
    out.push('\n');
    for (t, state) in trajectory.times.iter().zip(&trajectory.states) {
        out.push_str(&t.to_string());
        for v in state {
            out.push(',');
            out.push_str(&v.to_string());
        }
        out.push('\n');
    }
    fs::write(path, out).map_err(|e| CliError::Io(format!("{}: {e}", path.display())))
}

/// Write to stdout, treating a vanished reader (e.g. `conslaw … | head`) as
/// a clean exit rather than a panic.
fn write_stdout(text: &str) -> Result<(), CliError> {
    use std::io::Write;
    let mut out = std::io::stdout().lock();
    match out.write_all(text.as_bytes()).and_then(|()| out.flush()) {
        Ok(()) => Ok(()),
        Err(e) if e.kind() == std::io::ErrorKind::BrokenPipe => std::process::exit(0),
        Err(e) => Err(CliError::Io(format!("stdout: {e}"))),
    }
}

fn emit(
    json: bool,
    report: serde_json::Value,
    human: String,
    started: Instant,
) -> Result<(), CliError> {
    if json {
        let mut text = serde_json::to_string_pretty(&report).expect("report serializes");
        text.push('\n');
        write_stdout(&text)
    } else {
        let elapsed = format!("elapsed: {:.3}s\n", started.elapsed().as_secs_f64());
        write_stdout(&(human + &elapsed))
    }
}

fn run(cli: Cli) -> Result<u8, CliError> {
    let started = Instant::now();
    let json = cli.json;
    let code = match cli.command {
        Command::Count { model, params } => {
            let (spec, params) = resolve_model_and_params(&model, &params)?;
            let run = run_count(&spec, &params)?;
            emit(json, run.to_report(), run.render_human(), started)?;
            run.exit_code()
        }
        Command::Find {
            model,
            params,
            max_degree,
        } => {
            let (spec, params) = resolve_model_and_params(&model, &params)?;
            let run = run_find(&spec, &params, max_degree)?;
            emit(json, run.to_report(), run.render_human(), started)?;
            exit::OK
        }
        Command::Verify {
            model,
            laws,
            law_texts,
        } => {
            let file = load_file_config(model.config.as_deref())?;
            let spec = resolve_model(&model, file.model)?;
            spec.validate().map_err(ReportError::from)?;
            let candidates = load_laws(laws.as_deref(), &law_texts, spec.num_params())?;
            let run = run_verify(&spec, &candidates)?;
            emit(json, run.to_report(), run.render_human(), started)?;
            run.exit_code()
        }
        Command::Simulate { flow, dump_states } => {
            let text = read_file(&flow)?;
            let config: FlowConfig = serde_json::from_str(&text)
                .map_err(|e| CliError::InvalidInput(format!("{}: {e}", flow.display())))?;
            let run = run_simulate(&config)?;
            if let Some(path) = dump_states {
                write_states_csv(&path, &run.trajectory)?;
            }
            emit(json, run.to_report(), run.render_human(), started)?;
            exit::OK
        }
        Command::Reproduce { seed, jobs } => {
            let seed = match std::env::var("CONSLAW_SEED") {
                Ok(raw) => raw.parse().map_err(|_| {
                    CliError::InvalidInput(format!("CONSLAW_SEED is not a u64: '{raw}'"))
                })?,
                Err(_) => seed,
            };
            let run = run_reproduce(seed, jobs)?;
            emit(json, run.to_report(), run.render_human(), started)?;
            run.exit_code()
        }
    };
    Ok(code as u8)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            // --help/--version land here too; they are not usage errors.
            let is_usage = e.use_stderr();
            let _ = e.print();
            return if is_usage {
                ExitCode::from(exit::USAGE as u8)
            } else {
                ExitCode::SUCCESS
            };
        }
    };
    match run(cli) {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {}", e.message());
            ExitCode::from(e.exit_code())
        }
    }
}

// Referenced so `--help` shows the full command tree in debug builds; also a
// cheap guard that the derive stays well-formed.
#[allow(dead_code)]
fn assert_cli() {
    Cli::command().debug_assert();
}
