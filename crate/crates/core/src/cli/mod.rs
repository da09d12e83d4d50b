//! Command-line front end.
//!
//! ```text
//! epkit run --config ep.json [--outdir out] [--seed 0] [--quiet]
//! epkit validate --config ep.json
//! ```
//!
//! Exit codes: 0 success, 2 invalid input, 3 numerical failure, 1 I/O error
//! while writing outputs.

pub mod config;
pub mod output;
pub mod run;

use std::ffi::OsString;
use std::fs;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

use config::Format;
use output::{to_json_string, Artifacts};
use run::Failure;

pub const EXIT_OK: i32 = 0;
pub const EXIT_IO: i32 = 1;
pub const EXIT_INVALID: i32 = 2;
pub const EXIT_NUMERICAL: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "epkit", version, about = "Exceptional points, double poles and loop monodromy")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run the experiment described by a config file.
    Run(RunArgs),
    /// Check a config file without running it.
    Validate(ValidateArgs),
}

#[derive(Debug, Args)]
pub struct RunArgs {
    #[arg(long)]
    pub config: PathBuf,
    /// Output directory [default: the config's output.directory, else ./out]
    #[arg(long)]
    pub outdir: Option<PathBuf>,
    /// Seed for random initial guesses.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long)]
    pub quiet: bool,
}

#[derive(Debug, Args)]
pub struct ValidateArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long)]
    pub quiet: bool,
}

fn read_config(path: &PathBuf) -> Result<String, i32> {
    fs::read_to_string(path).map_err(|e| {
        eprintln!("error: cannot read config {}: {e}", path.display());
        EXIT_INVALID
    })
}

fn print_report(report: &config::Report) {
    for v in &report.errors {
        eprintln!("error: {v}");
    }
    for v in &report.warnings {
        eprintln!("warning: {v}");
    }
}

fn validate_cmd(args: &ValidateArgs) -> i32 {
    let text = match read_config(&args.config) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let (report, _) = config::validate(&text);
    print_report(&report);
    if report.is_valid() {
        if !args.quiet {
            println!(
                "{}: valid ({} warning{})",
                args.config.display(),
                report.warnings.len(),
                if report.warnings.len() == 1 { "" } else { "s" }
            );
        }
        EXIT_OK
    } else {
        if !args.quiet {
            println!("{}: {} violation(s)", args.config.display(), report.errors.len());
        }
        EXIT_INVALID
    }
}

fn run_cmd(args: &RunArgs) -> i32 {
    let text = match read_config(&args.config) {
        Ok(t) => t,
        Err(code) => return code,
    };
    let (report, cfg) = config::validate(&text);
    print_report(&report);
    let Some(cfg) = cfg else {
        return EXIT_INVALID;
    };
    let outcome = match run::run(&cfg, args.seed) {
        Ok(o) => o,
        Err(Failure::Invalid(msg)) => {
            eprintln!("error: {msg}");
            return EXIT_INVALID;
        }
        Err(Failure::Numerical(msg)) => {
            eprintln!("numerical failure: {msg}");
            return EXIT_NUMERICAL;
        }
    };
    let want = |f: Format| cfg.output.formats.contains(&f);
    let artifacts = Artifacts {
        trace: want(Format::Csv).then(|| outcome.trace.to_csv()),
        result: want(Format::Json).then(|| to_json_string(&serde_json::Value::Object(outcome.result))),
        summary: want(Format::Summary).then_some(outcome.summary.clone()),
    };
    let dir = args
        .outdir
        .clone()
        .or_else(|| cfg.output.directory.as_ref().map(PathBuf::from))
        .unwrap_or_else(|| PathBuf::from("out"));
    match output::write_all(&dir, &artifacts) {
        Ok(files) => {
            if !args.quiet {
                print!("{}", outcome.summary);
                for f in files {
                    println!("wrote {f}");
                }
            }
            EXIT_OK
        }
        Err(e) => {
            eprintln!("error: cannot write to {}: {e}", dir.display());
            EXIT_IO
        }
    }
}

/// Parses `args` (including the program name) and runs; returns the exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_INVALID } else { EXIT_OK };
        }
    };
    match &cli.command {
        Command::Run(a) => run_cmd(a),
        Command::Validate(a) => validate_cmd(a),
    }
}
