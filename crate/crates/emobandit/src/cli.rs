//! Command-line entry points. [`run`] returns the process exit code.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use clap::{Parser, Subcommand};
use emobandit_core::ExperimentCondition;
use rayon::prelude::*;
use serde::Deserialize;

use crate::log::{parse_lines, LogReadError};
use crate::report::{analyze, load_logs, write_atomic, write_bundle, write_results, AnalysisOptions};
use crate::session::SessionRecord;
use crate::simlog::{session_id, simulate_log};
use crate::store::SessionStore;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;
pub const EXIT_VERIFY: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "emobandit", version, about = "Learn command-to-action mappings from emotion feedback")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Run simulated-teacher experiments.
    Simulate {
        /// JSON list of conditions (or `{"conditions": [...]}`).
        #[arg(long)]
        conditions: PathBuf,
        /// Base seed; run i uses seed + i. Overrides the file.
        #[arg(long)]
        seed: Option<u64>,
        /// Runs per condition. Overrides the file.
        #[arg(long)]
        runs: Option<usize>,
        #[arg(long)]
        out: PathBuf,
        /// Also write one JSONL session log per run here.
        #[arg(long)]
        session_logs: Option<PathBuf>,
    },
    /// Analyze session logs.
    Analyze {
        /// Glob of JSONL logs, e.g. `data/*.jsonl`.
        #[arg(long)]
        logs: String,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        include_abandoned: bool,
        /// Report leave-one-out instead of training error.
        #[arg(long)]
        leave_one_out: bool,
    },
    /// Re-derive a session from its log and check every stored value.
    Replay {
        #[arg(long)]
        log: PathBuf,
    },
    /// Serve the HTTP API.
    Serve {
        #[arg(long, default_value_t = 8080)]
        port: u16,
        #[arg(long, default_value = "127.0.0.1")]
        host: String,
        #[arg(long, env = "EMOBANDIT_DATA", default_value = "data")]
        data: PathBuf,
        /// Directory of static files served at `/`.
        #[arg(long)]
        static_dir: Option<PathBuf>,
        /// Seed for action tie-breaking and random mappings.
        #[arg(long)]
        seed: Option<u64>,
    },
}

#[derive(Deserialize)]
#[serde(untagged)]
enum ConditionsFile {
    List(Vec<ExperimentCondition>),
    Wrapped { conditions: Vec<ExperimentCondition> },
}

pub fn load_conditions(path: &Path) -> anyhow::Result<Vec<ExperimentCondition>> {
    let text = std::fs::read_to_string(path)?;
    let parsed: ConditionsFile = serde_json::from_str(&text)?;
    Ok(match parsed {
        ConditionsFile::List(c) | ConditionsFile::Wrapped { conditions: c } => c,
    })
}

/// Parses `args` (including the program name) and runs the command.
pub fn run<I, T>(args: I, out: &mut dyn Write, err: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = write!(err, "{}", e.render());
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    match cli.command {
        Command::Simulate { conditions, seed, runs, out: dir, session_logs } => {
            simulate(&conditions, seed, runs, &dir, session_logs.as_deref(), out, err)
        }
        Command::Analyze { logs, out: dir, include_abandoned, leave_one_out } => {
            let mut opts = AnalysisOptions { include_abandoned, ..Default::default() };
            if leave_one_out {
                opts.separability = emobandit_core::analysis::SeparabilityMode::LeaveOneOut;
            }
            analyze_cmd(&logs, &dir, &opts, out, err)
        }
        Command::Replay { log } => replay(&log, out, err),
        Command::Serve { port, host, data, static_dir, seed } => serve(&host, port, &data, static_dir, seed, err),
    }
}

fn simulate(
    path: &Path,
    seed: Option<u64>,
    runs: Option<usize>,
    dir: &Path,
    session_logs: Option<&Path>,
    out: &mut dyn Write,
    err: &mut dyn Write,
) -> i32 {
    let mut conditions = match load_conditions(path) {
        Ok(c) => c,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read conditions {}: {e}", path.display());
            return EXIT_DATA;
        }
    };
    for c in &mut conditions {
        if let Some(s) = seed {
            c.base_seed = s;
        }
        if let Some(n) = runs {
            c.n_experiments = n;
        }
    }
    let results = match crate::runner::sweep(&conditions) {
        Ok(r) => r,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_DATA;
        }
    };
    if let Err(e) = write_results(dir, &results) {
        let _ = writeln!(err, "error: writing results: {e}");
        return EXIT_DATA;
    }
    if let Some(logs) = session_logs {
        let written = std::fs::create_dir_all(logs).map_err(|e| e.to_string()).and_then(|_| {
            conditions.par_iter().try_for_each(|c| {
                (0..c.n_experiments).into_par_iter().try_for_each(|i| {
                    let entries = simulate_log(c, i).map_err(|e| e.to_string())?;
                    let text = crate::log::to_jsonl(&entries);
                    write_atomic(logs, &format!("{}.jsonl", session_id(c, i)), text.as_bytes())
                        .map_err(|e| e.to_string())
                })
            })
        });
        if let Err(e) = written {
            let _ = writeln!(err, "error: writing session logs: {e}");
            return EXIT_DATA;
        }
    }
    for r in &results {
        let per: Vec<String> = r.per_command_accuracy.iter().map(|a| format!("{a:.3}")).collect();
        let _ = writeln!(
            out,
            "{}: accuracy {:.3} over {} runs (per command {}; mean correct {:.3})",
            r.condition.name,
            r.strict_accuracy,
            r.runs.len(),
            per.join(", "),
            r.mean_correct,
        );
    }
    EXIT_OK
}

fn analyze_cmd(pattern: &str, dir: &Path, opts: &AnalysisOptions, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let (loaded, failures) = match load_logs(pattern) {
        Ok(v) => v,
        Err(e) => {
            let _ = writeln!(err, "error: bad glob: {e}");
            return EXIT_USAGE;
        }
    };
    for f in &failures {
        let _ = writeln!(err, "warning: skipping {}: {}", f.path, f.error);
    }
    if loaded.is_empty() {
        let _ = writeln!(err, "error: no readable session logs match {pattern}");
        return EXIT_DATA;
    }
    let records: Vec<SessionRecord> = loaded.into_iter().map(|l| l.record).collect();
    let report = analyze(&records, failures, opts);
    if let Err(e) = write_bundle(dir, &report, &records) {
        let _ = writeln!(err, "error: writing report: {e}");
        return EXIT_DATA;
    }
    let _ = writeln!(
        out,
        "analyzed {} sessions ({} excluded, {} failed), {} rounds",
        report.sessions_analyzed,
        report.sessions_excluded,
        report.failures.len(),
        report.rounds
    );
    if let Some(ks) = report.ks {
        let _ = writeln!(out, "ks: D = {:.4}, p = {:.3e}", ks.d, ks.p_value);
    }
    if let Some(s) = &report.separability {
        let _ = writeln!(out, "separability: error rate {:.3} ({}/{})", s.error_rate, s.misclassified, s.total);
    }
    for note in &report.skipped {
        let _ = writeln!(out, "skipped {note}");
    }
    EXIT_OK
}

fn replay(path: &Path, out: &mut dyn Write, err: &mut dyn Write) -> i32 {
    let text = match std::fs::read_to_string(path) {
        Ok(t) => t,
        Err(e) => {
            let _ = writeln!(err, "error: cannot read {}: {e}", path.display());
            return EXIT_DATA;
        }
    };
    if text.trim().is_empty() {
        let _ = writeln!(err, "error: {} is empty", path.display());
        return EXIT_DATA;
    }
    let entries = match parse_lines(&text, true) {
        Ok(e) => e,
        Err(e @ (LogReadError::Malformed { .. } | LogReadError::NonCanonical { .. })) => {
            let _ = writeln!(err, "FAIL {}: {e}", path.display());
            return EXIT_VERIFY;
        }
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            return EXIT_DATA;
        }
    };
    match SessionRecord::replay(entries) {
        Ok(r) => {
            let learned: Vec<String> = r
                .learned()
                .iter()
                .map(|s| match s {
                    emobandit_core::MappingStatus::Learned(a) => a.to_string(),
                    emobandit_core::MappingStatus::Unresolved => "?".into(),
                })
                .collect();
            let _ = writeln!(
                out,
                "OK {}: {} events, {} rounds, status {:?}, learned [{}], {}/{} correct",
                r.session_id,
                r.events().len(),
                r.trace.len(),
                r.status,
                learned.join(", "),
                r.agent.correct_count(&r.mapping),
                r.k()
            );
            EXIT_OK
        }
        Err(e) => {
            let _ = writeln!(err, "FAIL {}: {e}", path.display());
            EXIT_VERIFY
        }
    }
}

fn serve(host: &str, port: u16, data: &Path, static_dir: Option<PathBuf>, seed: Option<u64>, err: &mut dyn Write) -> i32 {
    let store = match SessionStore::open(data, seed) {
        Ok(s) => Arc::new(s),
        Err(e) => {
            let _ = writeln!(err, "error: opening {}: {e}", data.display());
            return EXIT_DATA;
        }
    };
    let runtime = tokio::runtime::Runtime::new().expect("tokio runtime");
    let result: std::io::Result<()> = runtime.block_on(async move {
        let listener = tokio::net::TcpListener::bind((host, port)).await?;
        tracing::info!("listening on {}", listener.local_addr()?);
        axum::serve(listener, crate::api::router(store, static_dir))
            .with_graceful_shutdown(async {
                let _ = tokio::signal::ctrl_c().await;
            })
            .await
    });
    match result {
        Ok(()) => EXIT_OK,
        Err(e) => {
            let _ = writeln!(err, "error: {e}");
            EXIT_DATA
        }
    }
}
