use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use phaseret_cli::commands::{self, BenchArgs, GenerateArgs, SolveArgs};
use phaseret_cli::files::{read_priors, Coefficients, Document, InstanceFile, Mode};
use phaseret_cli::{write_file, CliError};
use phaseret_core::oracle::GeneratorKind;
use phaseret_core::{SelectorMode, SolveOptions};

#[derive(Parser)]
#[command(
    name = "phaseret",
    version,
    about = "Phase retrieval by recursive triangle peeling"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Build an instance (and its ground truth) from a generator.
    Generate(GenerateCmd),
    /// Recover the coefficient phases of an instance.
    Solve(SolveCmd),
    /// Compare recovered coefficients with the truth, up to a global phase.
    Verify(VerifyCmd),
    /// Time solves over a range of support sizes.
    Bench(BenchCmd),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Text,
    Json,
}

#[derive(Clone, Copy, ValueEnum)]
enum Switch {
    On,
    Off,
}

impl Switch {
    fn on(self) -> bool {
        matches!(self, Switch::On)
    }
}

#[derive(Args)]
struct Output {
    /// Write here instead of standard output.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "text")]
    format: Format,
}

#[derive(Args)]
struct GenerateCmd {
    /// paper-h, random-smooth, random-uniform or one-sided.
    #[arg(long, value_parser = parse_kind)]
    kind: Option<GeneratorKind>,
    #[arg(long, default_value_t = 1)]
    dim: usize,
    /// Support length S (1d).
    #[arg(long)]
    size: Option<usize>,
    /// Coefficient order N, support [-N, N]^2 (2d).
    #[arg(long)]
    order: Option<usize>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Amplitude of uniform [0, 1) noise added to the field.
    #[arg(long, default_value_t = 0.0)]
    noise: f64,
    /// Grid length M; defaults to the smallest oversampled grid.
    #[arg(long)]
    grid: Option<usize>,
    #[arg(long)]
    min_modulus: Option<f64>,
    /// Also write the ground-truth coefficients here.
    #[arg(long)]
    truth: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct SolveCmd {
    instance: PathBuf,
    /// Phase of the gauge anchor, overriding the instance's.
    #[arg(long, allow_hyphen_values = true)]
    gauge: Option<f64>,
    /// File of `<index...> <phase>` hints for unresolved coefficients.
    #[arg(long)]
    priors: Option<PathBuf>,
    #[arg(long, value_parser = parse_selector, default_value = "incremental")]
    selector: SelectorMode,
    /// Backtrack over branch choices when the greedy path does not close.
    #[arg(long, value_enum, default_value = "on")]
    search: Switch,
    /// Search nodes allowed per recursion step.
    #[arg(long)]
    budget: Option<usize>,
    /// Refine verified phases against every autocorrelation row.
    #[arg(long, value_enum, default_value = "on")]
    polish: Switch,
    /// Ground truth, for the spectral error.
    #[arg(long)]
    truth: Option<PathBuf>,
    /// Write PREFIX.field.txt and PREFIX.spectrum.txt for plotting.
    #[arg(long, value_name = "PREFIX")]
    emit_curves: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct VerifyCmd {
    /// Report or truth file with the coefficients to check.
    candidate: PathBuf,
    #[arg(long)]
    truth: PathBuf,
    /// Measure the field error against this instance's magnitudes.
    #[arg(long)]
    instance: Option<PathBuf>,
    #[command(flatten)]
    output: Output,
}

#[derive(Args)]
struct BenchCmd {
    /// Comma-separated support sizes.
    #[arg(long, value_delimiter = ',', num_args = 0..)]
    sizes: Vec<usize>,
    #[arg(long, default_value_t = 10)]
    trials: usize,
    /// Repetitions of the whole trial set; the median is reported.
    #[arg(long, default_value_t = 5)]
    runs: usize,
    #[arg(long, value_parser = parse_kind, default_value = "random-smooth")]
    kind: GeneratorKind,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, value_parser = parse_selector, default_value = "incremental")]
    selector: SelectorMode,
    #[arg(long, value_enum, default_value = "on")]
    search: Switch,
    #[arg(long, value_enum, default_value = "on")]
    polish: Switch,
    #[command(flatten)]
    output: Output,
}

fn parse_kind(s: &str) -> Result<GeneratorKind, String> {
    s.parse()
}

fn parse_selector(s: &str) -> Result<SelectorMode, String> {
    s.parse()
}

fn emit(output: &Output, text: &str) -> Result<(), CliError> {
    match &output.out {
        Some(path) => write_file(path, text),
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(text.as_bytes())
                .map_err(|e| CliError::io(Path::new("<stdout>"), e))
        }
    }
}

fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Generate(cmd) => {
            let args = GenerateArgs {
                kind: cmd.kind,
                dim: cmd.dim,
                size: cmd.size,
                order: cmd.order,
                seed: cmd.seed,
                noise: cmd.noise,
                grid: cmd.grid,
                min_modulus: cmd.min_modulus,
            };
            let (instance, truth) = commands::generate(&args)?;
            if let Some(path) = &cmd.truth {
                write_file(path, &truth.to_text())?;
            }
            match cmd.output.format {
                Format::Text => emit(&cmd.output, &instance.to_text()),
                Format::Json => Err(CliError::Usage("instances are written as text only".into())),
            }
        }
        Command::Solve(cmd) => {
            let file = InstanceFile::from_document(&Document::read(&cmd.instance)?)?;
            let priors = match &cmd.priors {
                None => Vec::new(),
                Some(path) => read_priors(path, if file.mode() == Mode::OneD { 1 } else { 2 })?,
            };
            let truth = match &cmd.truth {
                None => None,
                Some(path) => Some(Coefficients::from_document(&Document::read(path)?)?),
            };
            let mut options = SolveOptions {
                selector: cmd.selector,
                search: cmd.search.on(),
                polish: cmd.polish.on(),
                ..SolveOptions::default()
            };
            if let Some(budget) = cmd.budget {
                options.budget_per_step = budget;
            }
            let args = SolveArgs {
                gauge: cmd.gauge,
                priors,
                options,
                truth,
            };
            let report = commands::solve(&file, &args)?;
            if let Some(prefix) = &cmd.emit_curves {
                report.emit_curves(prefix)?;
            }
            match cmd.output.format {
                Format::Text => emit(&cmd.output, &report.to_text()),
                Format::Json => emit(&cmd.output, &report.to_json()?),
            }
        }
        Command::Verify(cmd) => {
            let candidate = Coefficients::from_document(&Document::read(&cmd.candidate)?)?;
            let truth = Coefficients::from_document(&Document::read(&cmd.truth)?)?;
            let instance = match &cmd.instance {
                None => None,
                Some(path) => Some(InstanceFile::from_document(&Document::read(path)?)?),
            };
            let metrics = commands::verify(&candidate, &truth, instance.as_ref())?;
            match cmd.output.format {
                Format::Text => emit(&cmd.output, &commands::metrics_text(&metrics)),
                Format::Json => emit(
                    &cmd.output,
                    &(serde_json::to_string_pretty(&metrics)? + "\n"),
                ),
            }
        }
        Command::Bench(cmd) => {
            let args = BenchArgs {
                sizes: cmd.sizes,
                trials: cmd.trials,
                runs: cmd.runs,
                kind: cmd.kind,
                seed: cmd.seed,
                options: SolveOptions {
                    selector: cmd.selector,
                    search: cmd.search.on(),
                    polish: cmd.polish.on(),
                    ..SolveOptions::default()
                },
            };
            let rows = commands::bench(&args)?;
            match cmd.output.format {
                Format::Text => emit(&cmd.output, &commands::bench_text(&args, &rows)),
                Format::Json => emit(&cmd.output, &(serde_json::to_string_pretty(&rows)? + "\n")),
            }
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
