//! The `evoforge` command line: configuration, subcommands and exit codes.
//!
//! Exit status is 0 on success, 2 for bad or missing input and 3 when a
//! model backend or sandbox toolchain is unavailable.

pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::path::PathBuf;

use chrono::NaiveDate;
use clap::{Parser, Subcommand, ValueEnum};

use crate::eval::EvalError;
use crate::model::{Condition, ModelError};
use crate::taskgen::GenError;
use commands::EvaluateOptions;
use config::{LoadedConfig, CONFIG_FILE};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("missing input: {}", .0.display())]
    MissingInput(PathBuf),
    #[error("{}: schema mismatch: {reason}", path.display())]
    SchemaMismatch { path: PathBuf, reason: String },
    #[error("invalid config: {0}")]
    Config(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error("backend unavailable: {0}")]
    Backend(String),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Backend(_) => 3,
            _ => 2,
        }
    }

    pub(crate) fn from_gen(e: GenError) -> Self {
        match e {
            GenError::Client(c) => CliError::Backend(c.to_string()),
            GenError::Sandbox(s) => CliError::Backend(s.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }

    pub(crate) fn from_eval(e: EvalError) -> Self {
        match e {
            EvalError::SandboxUnavailable(s) => CliError::Backend(s.to_string()),
            EvalError::Client(c) => CliError::Backend(c.to_string()),
            other => CliError::Input(other.to_string()),
        }
    }
}

impl From<ModelError> for CliError {
    fn from(e: ModelError) -> Self {
        match e {
            ModelError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Input(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ConditionArg {
    None,
    Rag,
    Oracle,
}

impl From<ConditionArg> for Condition {
    fn from(c: ConditionArg) -> Self {
        match c {
            ConditionArg::None => Condition::NoInfo,
            ConditionArg::Rag => Condition::Rag,
            ConditionArg::Oracle => Condition::OracleInfo,
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "evoforge", version, about = "Mine API evolution, synthesize version-aware tasks, evaluate solutions")]
pub struct Cli {
    /// Run configuration.
    #[arg(long, global = true, default_value = CONFIG_FILE)]
    pub config: PathBuf,
    /// Directory for all outputs; defaults to `out/` next to the config.
    #[arg(long, global = true)]
    pub out_dir: Option<PathBuf>,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Mine change records from staged notes, docs and sources.
    Mine,
    /// Collect usage examples for mined changes.
    Usages,
    /// Generate tasks from change records.
    Generate {
        /// Skip compile QC.
        #[arg(long)]
        no_sandbox: bool,
    },
    /// Build the retrieval index over change records.
    RagIndex,
    /// Evaluate candidates against the generated tasks.
    Evaluate {
        #[arg(long, value_enum, default_value = "none")]
        condition: ConditionArg,
        /// Split Pass@1 by target-release date (YYYY-MM-DD).
        #[arg(long)]
        cutoff: Option<NaiveDate>,
        /// Also report Pass@k; draws at least k samples per task.
        #[arg(long)]
        k: Option<u32>,
        /// Static checks only.
        #[arg(long)]
        no_sandbox: bool,
        /// Score reference solutions instead of model output.
        #[arg(long)]
        reference: bool,
    },
    /// Compare report.json files as a table.
    Report {
        #[arg(required = true)]
        reports: Vec<PathBuf>,
    },
    /// Select unchanged official items as controls.
    ControlSet {
        #[arg(long)]
        n: Option<usize>,
    },
}

fn out_dir(cli: &Cli, cfg: Option<&LoadedConfig>) -> PathBuf {
    match (&cli.out_dir, cfg) {
        (Some(d), _) => d.clone(),
        (None, Some(c)) => c.base_dir.join("out"),
        (None, None) => PathBuf::from("out"),
    }
}

/// Runs one subcommand, returning the lines to print.
pub fn execute(cli: &Cli) -> Result<Vec<String>, CliError> {
    if let Command::Report { reports } = &cli.command {
        let table = commands::cmd_report(reports, &out_dir(cli, None))?;
        return Ok(vec![table.to_text()]);
    }
    let cfg = LoadedConfig::load(&cli.config)?;
    let out = out_dir(cli, Some(&cfg));
    let lines = match &cli.command {
        Command::Mine => {
            let s = commands::cmd_mine(&cfg, &out)?;
            vec![
                format!("records: {}", s.records.len()),
                format!("low confidence: {}", s.low_confidence.len()),
                format!("warnings: {}", s.diagnostics.warnings.len()),
            ]
        }
        Command::Usages => {
            let (examples, d) = commands::cmd_usages(&cfg, &out)?;
            vec![
                format!("examples: {}", examples.len()),
                format!("repos scanned: {}, hits: {}, rejected: {}", d.repos_scanned, d.hits, d.rejected),
            ]
        }
        Command::Generate { no_sandbox } => {
            let s = commands::cmd_generate(&cfg, &out, *no_sandbox)?;
            let mut lines = vec![
                format!("released: {}/{} drafts ({:.1}%)", s.released, s.drafts, s.retention_percent),
                format!("records: {}", s.records),
            ];
            if s.compile_qc_skipped {
                lines.push("compile QC skipped".into());
            }
            if let Some(avg) = s.avg_cases_per_task {
                lines.push(format!("cases per task: {avg:.2}"));
            }
            lines
        }
        Command::RagIndex => {
            let idx = commands::cmd_rag_index(&out)?;
            vec![format!("indexed documents: {}", idx.len())]
        }
        Command::Evaluate { condition, cutoff, k, no_sandbox, reference } => {
            let opts = EvaluateOptions {
                condition: (*condition).into(),
                cutoff: *cutoff,
                k: *k,
                no_sandbox: *no_sandbox,
                reference: *reference,
            };
            let r = commands::cmd_evaluate(&cfg, &out, &opts)?;
            let mut lines: Vec<String> =
                r.metrics.pass_at_k.iter().map(|(k, v)| format!("pass@{k}: {:.1}%", v * 100.0)).collect();
            lines.push(format!("aua: {:.1}%", r.metrics.aua * 100.0));
            lines.push(format!("coverage: {:.1}%", r.metrics.coverage * 100.0));
            lines
        }
        Command::ControlSet { n } => {
            let controls = commands::cmd_control_set(&cfg, &out, *n)?;
            controls.iter().map(|a| a.canonical()).collect()
        }
        Command::Report { .. } => unreachable!("handled above"),
    };
    Ok(lines)
}

/// Parses `args`, runs the command and returns the process exit code.
pub fn main_with_args<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    match execute(&cli) {
        Ok(lines) => {
            for l in lines {
                println!("{}", l.trim_end());
            }
            0
        }
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
