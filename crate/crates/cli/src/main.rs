//! `taskbased` command-line runner.
//!
//! Exit codes: 0 success, 1 bad configuration or input, 2 systemic solver
//! failure during an experiment, 3 failed gradient check.

use std::fs::File;
use std::io::{self, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use taskbased::experiment::{
    emit_plot_data, format_summary, run_experiment, summarize, write_results_csv, ExperimentConfig, ExperimentError,
};
use taskbased::gradcheck::{run_suites, Scope, SuiteOptions};

const EXIT_CONFIG: u8 = 1;
const EXIT_SOLVER: u8 = 2;
const EXIT_GRADCHECK: u8 = 3;

#[derive(Parser)]
#[command(name = "taskbased", version, about = "Train forecasters on the cost of the decisions they drive")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment sweep and write its results CSV.
    Run {
        /// TOML experiment configuration.
        #[arg(long)]
        config: PathBuf,
        /// Results CSV path; overrides `output` in the config. Without
        /// either, the CSV goes to stdout and the summary to stderr.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Overrides the config seed.
        #[arg(long)]
        seed: Option<u64>,
        /// Worker threads (default: one per core).
        #[arg(long, env = "TASKBASED_JOBS")]
        jobs: Option<usize>,
    },
    /// Compare analytic gradients with central finite differences.
    Gradcheck {
        #[arg(long, default_value = "all", value_parser = parse_scope)]
        scope: Scope,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Perturbs every analytic gradient; the run must then fail.
        #[arg(long, hide = true)]
        corrupt_gradient: bool,
    },
    /// Rewrite a results CSV as long-format plot data.
    Plotdata {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn parse_scope(s: &str) -> Result<Scope, String> {
    s.parse()
}

fn main() -> ExitCode {
    // clap's own usage-error code would collide with the solver-failure code
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    match cli.command {
        Command::Run { config, out, seed, jobs } => run(&config, out, seed, jobs),
        Command::Gradcheck {
            scope,
            seed,
            corrupt_gradient,
        } => gradcheck(scope, seed, corrupt_gradient),
        Command::Plotdata { input, out } => plotdata(&input, &out),
    }
}

fn fail(code: u8, msg: impl std::fmt::Display) -> ExitCode {
    eprintln!("error: {msg}");
    ExitCode::from(code)
}

fn run(config: &Path, out: Option<PathBuf>, seed: Option<u64>, jobs: Option<usize>) -> ExitCode {
    let text = match std::fs::read_to_string(config) {
        Ok(t) => t,
        Err(e) => return fail(EXIT_CONFIG, format!("cannot read {}: {e}", config.display())),
    };
    let mut cfg = match ExperimentConfig::from_toml(&text) {
        Ok(c) => c,
        Err(e) => return fail(EXIT_CONFIG, e),
    };
    if let Some(s) = seed {
        cfg.seed = s;
    }
    if jobs == Some(0) {
        return fail(EXIT_CONFIG, "--jobs must be at least 1");
    }
    let output = match run_experiment(&cfg, jobs) {
        Ok(o) => o,
        Err(e) => {
            let code = if e.is_solver_failure() { EXIT_SOLVER } else { EXIT_CONFIG };
            return fail(code, e);
        }
    };
    for note in &output.notes {
        eprintln!("{note}");
    }
    let summary = format_summary(&summarize(&output.rows));
    let path = out.or_else(|| cfg.output.as_ref().map(PathBuf::from));
    let written = match &path {
        Some(p) => File::create(p)
            .map_err(|e| format!("cannot create {}: {e}", p.display()))
            .and_then(|f| write_results_csv(&output.rows, BufWriter::new(f)).map_err(|e| e.to_string())),
        None => write_results_csv(&output.rows, io::stdout().lock()).map_err(|e| e.to_string()),
    };
    if let Err(e) = written {
        return fail(EXIT_CONFIG, e);
    }
    if path.is_some() {
        print!("{summary}");
    } else {
        eprint!("{summary}");
    }
    ExitCode::SUCCESS
}

fn gradcheck(scope: Scope, seed: u64, corrupt: bool) -> ExitCode {
    let opts = SuiteOptions {
        corrupt,
        ..SuiteOptions::default()
    };
    let outcome = run_suites(scope, seed, &opts);
    let mut stdout = io::stdout().lock();
    for s in &outcome.summaries {
        let _ = writeln!(
            stdout,
            "{:<22} {:>3}/{:<3} passed  {:>2} failed  {:>3} rejected  {:>7.2}s  {}",
            s.suite,
            s.passed,
            s.required,
            s.failed,
            s.rejected,
            s.seconds,
            if s.ok() { "ok" } else { "FAIL" }
        );
    }
    let _ = writeln!(stdout, "worst offenders:");
    for c in outcome.worst(5) {
        let _ = writeln!(stdout, "  {c}");
    }
    if outcome.passed() {
        ExitCode::SUCCESS
    } else {
        let _ = writeln!(stdout, "gradient check FAILED");
        ExitCode::from(EXIT_GRADCHECK)
    }
}

fn plotdata(input: &Path, out: &Path) -> ExitCode {
    let reader = match File::open(input) {
        Ok(f) => BufReader::new(f),
        Err(e) => return fail(EXIT_CONFIG, format!("cannot read {}: {e}", input.display())),
    };
    let writer = match File::create(out) {
        Ok(f) => BufWriter::new(f),
        Err(e) => return fail(EXIT_CONFIG, format!("cannot create {}: {e}", out.display())),
    };
    match emit_plot_data(reader, writer) {
        Ok(n) => {
            eprintln!("wrote {n} rows to {}", out.display());
            ExitCode::SUCCESS
        }
        Err(ExperimentError::Csv(e)) => fail(EXIT_CONFIG, format!("malformed results file: {e}")),
        Err(e) => fail(EXIT_CONFIG, e),
    }
}
