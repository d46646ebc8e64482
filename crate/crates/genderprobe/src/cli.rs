//! Command-line front end.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use genderprobe_core::probes::Suite;

use crate::backends::MaskedMode;
use crate::commands::{cmd_analyze, cmd_export, cmd_run, cmd_validate, latest_runs, CommandError};
use crate::config::{AuditConfig, DEFAULT_CONFIG};

#[derive(Parser, Debug)]
#[command(name = "genderprobe", version, about = "Audit how language models associate gender, sex and illness")]
pub struct Cli {
    #[command(flatten)]
    pub overrides: Overrides,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Args, Debug, Default)]
pub struct Overrides {
    /// Audit configuration (TOML); the bundled mock configuration when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Restrict to these model ids (repeatable).
    #[arg(long = "model", global = true)]
    pub models: Vec<String>,
    /// Restrict to these suites (repeatable): sex_gender, sex_baseline, gender_illness.
    #[arg(long = "suite", global = true)]
    pub suites: Vec<Suite>,
    #[arg(long, global = true)]
    pub cache_dir: Option<PathBuf>,
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// single_pass or iterative.
    #[arg(long, global = true)]
    pub masked_mode: Option<MaskedMode>,
    /// Comma-separated identifiers kept in the folk-subversive metric.
    #[arg(long, global = true, value_delimiter = ',')]
    pub identifier_subset: Option<Vec<String>>,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Check lexicon, configuration, suite sizes and backends.
    Validate,
    /// Score the selected suites and seal one run per model; prints run ids.
    Run,
    /// Compute metrics and render tables and figures.
    Analyze {
        /// Runs to analyze; the latest run of every configured model when omitted.
        run_ids: Vec<String>,
    },
    /// Write a run's scores as CSV and JSON lines.
    Export { run_id: String },
}

fn load_config(o: &Overrides) -> Result<AuditConfig, CommandError> {
    let mut cfg = match &o.config {
        Some(p) => AuditConfig::load(p)?,
        None => AuditConfig::from_toml(DEFAULT_CONFIG, Path::new("."))?,
    };
    if let Some(d) = &o.cache_dir {
        cfg.cache_dir = std::env::current_dir().map(|c| c.join(d)).unwrap_or_else(|_| d.clone());
    }
    if let Some(d) = &o.out {
        cfg.out_dir = std::env::current_dir().map(|c| c.join(d)).unwrap_or_else(|_| d.clone());
    }
    if let Some(m) = o.masked_mode {
        cfg.masked_mode = m;
    }
    if let Some(s) = &o.identifier_subset {
        cfg.identifier_subset = Some(s.clone());
    }
    Ok(cfg)
}

fn print_json<T: serde::Serialize>(out: &mut dyn Write, v: &T) {
    let _ = writeln!(out, "{}", serde_json::to_string_pretty(v).expect("serializable"));
}

fn report_error(err: &mut dyn Write, e: &CommandError) -> i32 {
    let body = serde_json::json!({ "exit_code": e.exit_code(), "errors": e.messages() });
    let _ = writeln!(err, "{}", serde_json::to_string_pretty(&body).expect("serializable"));
    e.exit_code()
}

/// Runs the CLI and returns the process exit status.
pub fn run<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            if e.use_stderr() {
                let _ = write!(stderr, "{e}");
                return 2;
            }
            let _ = write!(stdout, "{e}");
            return 0;
        }
    };
    let cfg = match load_config(&cli.overrides) {
        Ok(c) => c,
        Err(e) => return report_error(stderr, &e),
    };
    let o = &cli.overrides;
    let mut log = |line: &str| {
        let _ = writeln!(stderr, "{line}");
    };
    let result = match &cli.command {
        Command::Validate => {
            let mut cfg = cfg;
            if !o.models.is_empty() {
                cfg.models.retain(|m| o.models.contains(&m.id));
            }
            let report = cmd_validate(&cfg);
            print_json(stdout, &report);
            return report.exit_code();
        }
        Command::Run => cmd_run(&cfg, &o.models, &o.suites, &mut log).map(|outcomes| {
            for r in outcomes {
                log(&format!(
                    "{}: {} records ({} newly scored, {} cached)",
                    r.model_id, r.records, r.newly_scored, r.cached
                ));
                let _ = writeln!(stdout, "{}", r.run_id);
            }
        }),
        Command::Analyze { run_ids } => {
            let ids = if run_ids.is_empty() {
                let mut scoped = cfg.clone();
                if !o.models.is_empty() {
                    scoped.models.retain(|m| o.models.contains(&m.id));
                }
                latest_runs(&scoped)
            } else {
                Ok(run_ids.clone())
            };
            let out = cfg.out_dir();
            ids.and_then(|ids| cmd_analyze(&cfg, &ids, &out, &mut log)).map(|summary| {
                print_json(stdout, &summary);
            })
        }
        Command::Export { run_id } => cmd_export(&cfg, run_id, &cfg.out_dir()).map(|paths| {
            for p in paths {
                let _ = writeln!(stdout, "{}", p.display());
            }
        }),
    };
    match result {
        Ok(()) => 0,
        Err(e) => report_error(stderr, &e),
    }
}
