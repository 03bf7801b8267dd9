//! Command-line front end: `explore`, `simulate`, `experiment`, `replay` and `refine`.
//!
//! Exit codes: 0 when everything holds (AllHold, Valid, Refines), 1 when a
//! finding was made (a violation, an invalid trace, an unsafe run), 2 for
//! usage, domain and I/O errors.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::Value;

mod commands;

#[cfg(doctest)]
#[doc = include_str!("../../../book/src/cli.md")]
mod book {}

pub const EXIT_OK: i32 = 0;
pub const EXIT_FINDING: i32 = 1;
pub const EXIT_ERROR: i32 = 2;

#[derive(Debug, Parser)]
#[command(
    name = "logless-reconfig",
    version,
    about = "Model checking and simulation of logless reconfiguration"
)]
struct Cli {
    /// Print the report as a JSON object `{command, params, result}`.
    #[arg(long, global = true)]
    json: bool,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Exhaustively explore a bounded instance and check invariants.
    Explore(ExploreArgs),
    /// Run the discrete-event simulator with an optional fault schedule.
    Simulate(SimulateArgs),
    /// Run the availability experiment for one reconfiguration backend.
    Experiment(ExperimentArgs),
    /// Check that a trace file is a valid behavior.
    Replay(ReplayArgs),
    /// Check that a full-protocol trace projects onto a config-only behavior.
    Refine(RefineArgs),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum Preset {
    /// Full protocol, 4 servers, term 3, log length 2, version 3, leader completeness.
    Fig2a,
    /// Config-only protocol, 5 servers, term 4, version 4, election safety.
    Fig2b,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum ModeArg {
    Full,
    Logless,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum, Serialize)]
#[serde(rename_all = "kebab-case")]
enum BackendArg {
    Logless,
    RaftOplog,
}

#[derive(Debug, Args)]
struct ExploreArgs {
    /// Start from a named instance; explicit flags override its values.
    #[arg(long, value_enum)]
    preset: Option<Preset>,
    #[arg(long)]
    servers: Option<u8>,
    #[arg(long)]
    max_term: Option<u32>,
    #[arg(long)]
    max_log_len: Option<u32>,
    #[arg(long)]
    max_config_version: Option<u32>,
    #[arg(long, value_enum)]
    mode: Option<ModeArg>,
    /// Reduce by permutations of servers that fix the initial members.
    #[arg(long)]
    symmetry: bool,
    /// Comma-separated invariant names, or `all`.
    #[arg(long)]
    invariants: Option<String>,
    /// Write the counterexample trace here when a violation is found.
    #[arg(long)]
    trace_out: Option<PathBuf>,
    /// Switch off one safety guard (drop-q1, drop-q2, drop-p1,
    /// drop-config-vote-check, drop-config-term-rewrite).
    #[cfg(feature = "mutations")]
    #[arg(long)]
    mutate: Option<String>,
}

#[derive(Debug, Args)]
struct SimulateArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
    #[arg(long, default_value_t = 3)]
    servers: u8,
    #[arg(long, default_value_t = 10_000)]
    duration_ms: u64,
    /// JSON fault schedule `{"faults": [...]}`.
    #[arg(long, conflicts_with = "random_faults")]
    faults: Option<PathBuf>,
    /// Draw a random fault schedule from the seed.
    #[arg(long)]
    random_faults: bool,
    /// Issue a client write every this many ms.
    #[arg(long)]
    write_period_ms: Option<u64>,
    #[arg(long, default_value_t = 100)]
    write_timeout_ms: u64,
    /// Have the primary attempt a random one-server membership change every this many ms.
    #[arg(long)]
    random_reconfig_ms: Option<u64>,
    /// Write the event log here as JSON lines.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write every applied action here as a replayable trace.
    #[arg(long)]
    trace_out: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct ExperimentArgs {
    #[arg(long, value_enum, default_value_t = BackendArg::Logless)]
    backend: BackendArg,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Latency CSV: `issued_at_ms,latency_ms,outcome`.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Degraded phases CSV: `start_ms,end_ms,kind`.
    #[arg(long)]
    phases_out: Option<PathBuf>,
    /// Per-phase statistics as JSON.
    #[arg(long)]
    stats_out: Option<PathBuf>,
    #[arg(long)]
    steady_ms: Option<u64>,
    #[arg(long)]
    degraded_ms: Option<u64>,
    #[arg(long)]
    detection_delay_ms: Option<u64>,
    #[arg(long)]
    write_timeout_ms: Option<u64>,
    #[arg(long)]
    total_ms: Option<u64>,
    #[arg(long)]
    writer_period_ms: Option<u64>,
}

#[derive(Debug, Args)]
struct ReplayArgs {
    /// Trace JSON `{init, steps}`.
    file: PathBuf,
    #[arg(long, value_enum, default_value_t = ModeArg::Full)]
    mode: ModeArg,
    /// Replay under the rules with one guard switched off.
    #[cfg(feature = "mutations")]
    #[arg(long)]
    mutate: Option<String>,
}

#[derive(Debug, Args)]
struct RefineArgs {
    /// Trace JSON `{init, steps}` of the full protocol.
    file: PathBuf,
}

#[derive(Debug)]
enum CliError {
    Usage(String),
    Io { path: PathBuf, reason: String },
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Usage(msg) => f.write_str(msg),
            CliError::Io { path, reason } => write!(f, "{}: {reason}", path.display()),
        }
    }
}

fn usage(msg: impl Into<String>) -> CliError {
    CliError::Usage(msg.into())
}

fn read_file(path: &Path) -> Result<String, CliError> {
    std::fs::read_to_string(path).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

fn write_file(path: &Path, contents: &str) -> Result<(), CliError> {
    std::fs::write(path, contents).map_err(|e| CliError::Io {
        path: path.to_path_buf(),
        reason: e.to_string(),
    })
}

/// What a command produced: the resolved parameters, the machine-readable
/// result, a human summary, and whether it is a finding.
struct Report {
    command: &'static str,
    params: Value,
    result: Value,
    human: String,
    finding: bool,
}

#[derive(Serialize)]
struct Envelope<'a> {
    command: &'a str,
    params: &'a Value,
    result: &'a Value,
}

/// Runs the binary with the process's arguments and standard streams.
pub fn dispatch<I, T>(argv: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let (stdout, stderr) = (std::io::stdout(), std::io::stderr());
    run(argv, &mut stdout.lock(), &mut stderr.lock())
}

/// Runs one invocation, writing reports to `out` and diagnostics to `err`.
/// `argv` starts with the program name.
pub fn run<I, T>(argv: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind::{DisplayHelp, DisplayVersion};
            return if matches!(e.kind(), DisplayHelp | DisplayVersion) {
                let _ = write!(out, "{}", e.render());
                EXIT_OK
            } else {
                let _ = write!(err, "{}", e.render());
                EXIT_ERROR
            };
        }
    };
    let report = match cli.command {
        Command::Explore(a) => commands::explore(a, err),
        Command::Simulate(a) => commands::simulate(a),
        Command::Experiment(a) => commands::experiment(a),
        Command::Replay(a) => commands::replay(a),
        Command::Refine(a) => commands::refine(a),
    };
    let report = match report {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_ERROR;
        }
    };
    let written = if cli.json {
        let env = Envelope {
            command: report.command,
            params: &report.params,
            result: &report.result,
        };
        let text = serde_json::to_string_pretty(&env).expect("reports serialize");
        writeln!(out, "{text}")
    } else {
        write!(out, "{}", report.human)
    };
    if let Err(e) = written {
        let _ = writeln!(err, "error: writing the report: {e}");
        return EXIT_ERROR;
    }
    if report.finding {
        EXIT_FINDING
    } else {
        EXIT_OK
    }
}
