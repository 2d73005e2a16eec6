//! The `koopman` command-line tool.
//!
//! Standard output carries CSV only; diagnostics go to standard error.
//! Exit codes: 0 success, 2 usage, 3 data, 4 numerical failure.

use std::ffi::OsString;
use std::io::Write;
use std::path::PathBuf;

use clap::{Parser, Subcommand, ValueEnum};

use crate::dataset::{load_trajectory, parse_table, Trajectory};
use crate::dictionary::{DictionarySpec, Kernel};
use crate::dmd::Algorithm;
use crate::error::{KoopmanError, Result};
use crate::model_file::{load_model, save_model};
use crate::numerics::{Complex64, RealMatrix, DEFAULT_RTOL};
use crate::pipeline::{fit, FitConfig, Sample};
use crate::systems::{simulate, InputSignal, Observation, SystemKind, SystemSpec};

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 2;
pub const EXIT_DATA: i32 = 3;
pub const EXIT_NUMERICAL: i32 = 4;

#[derive(Debug, Parser)]
#[command(
    name = "koopman",
    version,
    about = "Koopman operator approximation from snapshot data"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a trajectory CSV from a built-in discrete-time system.
    Simulate(SimulateArgs),
    /// Fit a model to trajectory CSV files and save it.
    Fit(FitArgs),
    /// Print the eigenvalues of a saved model.
    Spectrum(SpectrumArgs),
    /// Predict forward from an initial condition.
    Predict(PredictArgs),
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum SystemName {
    Linear,
    Rotation,
    Quadratic,
    Forced,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
enum ObserveArg {
    Full,
    First,
}

#[derive(Debug, clap::Args)]
struct SimulateArgs {
    #[arg(long, value_enum)]
    system: SystemName,
    /// Initial state, comma separated.
    #[arg(long, allow_hyphen_values = true)]
    x0: String,
    #[arg(long)]
    steps: usize,
    /// System matrix, rows separated by `;` (linear, forced).
    #[arg(long, allow_hyphen_values = true)]
    a: Option<String>,
    /// Input matrix, rows separated by `;` (forced).
    #[arg(long, allow_hyphen_values = true)]
    b_in: Option<String>,
    /// Rotation angle per step (rotation).
    #[arg(long, allow_hyphen_values = true)]
    theta: Option<f64>,
    #[arg(long, value_enum, default_value = "full")]
    observe: ObserveArg,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.9)]
    mu: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, allow_hyphen_values = true, default_value_t = 1.0)]
    c: f64,
    /// Steps each input value is held (forced).
    #[arg(long, default_value_t = 1)]
    input_hold: usize,
    #[arg(long, default_value_t = 1.0)]
    input_amplitude: f64,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Output file; standard output when absent.
    #[arg(long)]
    out: Option<PathBuf>,
}

#[derive(Debug, clap::Args)]
struct FitArgs {
    #[arg(long)]
    algo: String,
    /// Trajectory CSV; repeat for several trajectories.
    #[arg(long, required = true)]
    data: Vec<PathBuf>,
    /// Dictionary for edmd: identity, poly:A, wpoly:A, rbf:WIDTH:CENTERS.
    #[arg(long)]
    dict: Option<String>,
    /// Kernel for kernel-edmd: poly:A, gaussian:SIGMA, exponential:SIGMA.
    #[arg(long)]
    kernel: Option<String>,
    /// Delay-embedding depth.
    #[arg(long, default_value_t = 1)]
    embed: usize,
    /// Append inputs and disturbances to the observables.
    #[arg(long)]
    augment_inputs: bool,
    #[arg(long, default_value_t = DEFAULT_RTOL)]
    rtol: f64,
    #[arg(long)]
    out: PathBuf,
}

#[derive(Debug, clap::Args)]
struct SpectrumArgs {
    #[arg(long)]
    model: PathBuf,
}

#[derive(Debug, clap::Args)]
struct PredictArgs {
    #[arg(long)]
    model: PathBuf,
    /// CSV with one row per history sample, newest last.
    #[arg(long)]
    ic: PathBuf,
    #[arg(long)]
    steps: usize,
}

/// Exit code for a library error.
pub fn exit_code(err: &KoopmanError) -> i32 {
    match err {
        KoopmanError::Config(_) | KoopmanError::Parameter(_) => EXIT_USAGE,
        KoopmanError::Shape(_)
        | KoopmanError::Parse { .. }
        | KoopmanError::Index { .. }
        | KoopmanError::Schema(_)
        | KoopmanError::Io(_) => EXIT_DATA,
        KoopmanError::EmptyRank(_)
        | KoopmanError::Conditioning(_)
        | KoopmanError::Divergence { .. }
        | KoopmanError::Numerical(_) => EXIT_NUMERICAL,
    }
}

/// Parse and run one invocation, returning the process exit code.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() {
                stderr.write_all(text.as_bytes())
            } else {
                stdout.write_all(text.as_bytes())
            };
            return code;
        }
    };
    let result = match cli.command {
        Command::Simulate(a) => cmd_simulate(&a, stdout),
        Command::Fit(a) => cmd_fit(&a, stdout, stderr),
        Command::Spectrum(a) => cmd_spectrum(&a, stdout),
        Command::Predict(a) => cmd_predict(&a, stdout, stderr),
    };
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

fn parse_vector(text: &str, what: &str) -> Result<Vec<f64>> {
    text.split(',')
        .map(|s| {
            s.trim()
                .parse::<f64>()
                .map_err(|_| KoopmanError::Parameter(format!("{what}: `{s}` is not a number")))
        })
        .collect()
}

fn parse_matrix(text: &str, what: &str) -> Result<RealMatrix> {
    let rows: Vec<Vec<f64>> = text
        .split(';')
        .map(|r| parse_vector(r, what))
        .collect::<Result<_>>()?;
    let cols = rows[0].len();
    if rows.iter().any(|r| r.len() != cols) {
        return Err(KoopmanError::Parameter(format!(
            "{what}: rows have different lengths"
        )));
    }
    Ok(RealMatrix::from_row_iterator(
        rows.len(),
        cols,
        rows.into_iter().flatten(),
    ))
}

fn required<'a>(value: &'a Option<String>, flag: &str, system: &str) -> Result<&'a str> {
    value.as_deref().ok_or_else(|| {
        KoopmanError::Config(format!("--{flag} is required for the {system} system"))
    })
}

fn cmd_simulate(args: &SimulateArgs, stdout: &mut dyn Write) -> Result<()> {
    let kind = match args.system {
        SystemName::Linear => SystemKind::Linear {
            a: parse_matrix(required(&args.a, "a", "linear")?, "--a")?,
        },
        SystemName::Rotation => SystemKind::Rotation {
            theta: args.theta.ok_or_else(|| {
                KoopmanError::Config("--theta is required for the rotation system".into())
            })?,
            observe: match args.observe {
                ObserveArg::Full => Observation::Full,
                ObserveArg::First => Observation::FirstCoordinate,
            },
        },
        SystemName::Quadratic => SystemKind::QuadraticInvariant {
            mu: args.mu,
            lambda: args.lambda,
            c: args.c,
        },
        SystemName::Forced => SystemKind::ForcedLinear {
            a: parse_matrix(required(&args.a, "a", "forced")?, "--a")?,
            b_in: parse_matrix(required(&args.b_in, "b-in", "forced")?, "--b-in")?,
            input: InputSignal {
                hold: args.input_hold,
                amplitude: args.input_amplitude,
                seed: args.seed,
            },
        },
    };
    let spec = SystemSpec::new(kind, parse_vector(&args.x0, "--x0")?, args.steps)?;
    let text = simulate(&spec)?.to_csv_string();
    match &args.out {
        Some(path) => std::fs::write(path, text)?,
        None => stdout.write_all(text.as_bytes())?,
    }
    Ok(())
}

fn config_from_args(args: &FitArgs) -> Result<FitConfig> {
    let algorithm: Algorithm = args
        .algo
        .parse()
        .map_err(|_| KoopmanError::Config(format!("unknown --algo `{}`", args.algo)))?;
    let mut config = FitConfig::new(algorithm)
        .with_embedding(args.embed)
        .with_rtol(args.rtol);
    config.augment_inputs = args.augment_inputs;
    if let Some(d) = &args.dict {
        let spec: DictionarySpec = d
            .parse()
            .map_err(|e: KoopmanError| KoopmanError::Config(e.to_string()))?;
        config = config.with_dictionary(spec);
    }
    if let Some(k) = &args.kernel {
        let kernel: Kernel = k
            .parse()
            .map_err(|e: KoopmanError| KoopmanError::Config(e.to_string()))?;
        config = config.with_kernel(kernel);
    }
    config.validate()?;
    Ok(config)
}

fn format_number(v: f64) -> String {
    // a signed zero would make otherwise equal outputs differ
    if v == 0.0 {
        "0".into()
    } else {
        crate::numerics::format_float(v)
    }
}

fn spectrum_rows(values: &[Complex64], extra: Option<f64>) -> String {
    let mut out = String::new();
    for (i, l) in values.iter().enumerate() {
        let cells = [l.re, l.im, l.norm(), l.im.atan2(l.re)];
        let mut row: Vec<String> = std::iter::once((i + 1).to_string())
            .chain(cells.iter().map(|&v| format_number(v)))
            .collect();
        if let Some(r) = extra {
            row.push(format_number(r));
        }
        out.push_str(&row.join(","));
        out.push('\n');
    }
    out
}

fn cmd_fit(args: &FitArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let config = config_from_args(args)?;
    let trajectories: Vec<Trajectory> = args
        .data
        .iter()
        .map(load_trajectory)
        .collect::<Result<_>>()?;
    let fitted = fit(&trajectories, &config)?;
    save_model(&fitted, &args.out)?;
    writeln!(
        stderr,
        "{} model: {} eigenvalues, training residual {:e}",
        fitted.model.algorithm(),
        fitted.eigenvalues().len(),
        fitted.training_residual
    )?;
    let mut out = String::from("index,re,im,magnitude,phase,training_residual\n");
    out.push_str(&spectrum_rows(
        fitted.eigenvalues(),
        Some(fitted.training_residual),
    ));
    stdout.write_all(out.as_bytes())?;
    Ok(())
}

fn cmd_spectrum(args: &SpectrumArgs, stdout: &mut dyn Write) -> Result<()> {
    let fitted = load_model(&args.model)?;
    let mut out = String::from("index,re,im,magnitude,phase\n");
    out.push_str(&spectrum_rows(fitted.eigenvalues(), None));
    stdout.write_all(out.as_bytes())?;
    Ok(())
}

fn read_history(path: &PathBuf) -> Result<Vec<Sample>> {
    let table = parse_table(&std::fs::read_to_string(path)?)?;
    if table.states.is_empty() {
        return Err(KoopmanError::parse(
            1,
            "initial-condition file has no data rows",
        ));
    }
    Ok((0..table.states.len())
        .map(|k| Sample {
            state: table.states[k].clone(),
            input: table.inputs.get(k).cloned().unwrap_or_default(),
            disturbance: table.disturbances.get(k).cloned().unwrap_or_default(),
        })
        .collect())
}

fn cmd_predict(args: &PredictArgs, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<()> {
    let fitted = load_model(&args.model)?;
    let history = read_history(&args.ic)?;
    let (states, prediction) = fitted.predict(&history, args.steps)?;
    for w in &prediction.warnings {
        writeln!(stderr, "warning: {w}")?;
    }
    if !prediction.imag_residue_ok() {
        return Err(KoopmanError::Numerical(format!(
            "prediction has imaginary residue {:e}",
            prediction.max_imag_residue
        )));
    }
    let header: Vec<String> = std::iter::once("step".to_string())
        .chain((1..=fitted.layout.state_dim).map(|i| format!("g{i}")))
        .collect();
    let mut out = header.join(",");
    out.push('\n');
    for (m, s) in states.iter().enumerate() {
        let row: Vec<String> = std::iter::once((m + 1).to_string())
            .chain(s.iter().map(|&v| format_number(v)))
            .collect();
        out.push_str(&row.join(","));
        out.push('\n');
    }
    stdout.write_all(out.as_bytes())?;
    Ok(())
}
