//! Orchestration behind the `bkl-lab` binary: configuration, mode dispatch
//! and output files.

pub mod config;
pub mod error;
pub mod modes;
pub mod output;

use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use serde::Serialize;

pub use config::{ExperimentConfig, Mode};
pub use error::CliError;

/// Result of a successful run.
#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub status: &'static str,
    pub mode: &'static str,
    pub config_hash: String,
    pub out_dir: PathBuf,
    pub files: Vec<String>,
}

#[derive(Serialize)]
struct RunMeta<'a> {
    tool: &'static str,
    version: &'static str,
    mode: &'static str,
    config_hash: &'a str,
    seed: u64,
    threads: usize,
    started_unix_s: f64,
    wall_clock_s: f64,
    files: &'a [String],
    timings: Vec<(String, f64)>,
}

/// Loads the configuration, applies command-line overrides and runs `mode`.
///
/// The run writes its data files plus `run_meta.json` into the output
/// directory. Failed acceptance criteria come back as
/// [`CliError::Verification`] after the report has been written.
pub fn run(mode: Mode, config: &Path, seed: Option<u64>, out: Option<&Path>) -> Result<RunSummary, CliError> {
    let mut cfg = ExperimentConfig::load(config)?;
    if cfg.mode != mode {
        return Err(CliError::Config(format!("config mode {} does not match subcommand {}", cfg.mode.name(), mode.name())));
    }
    if let Some(s) = seed {
        cfg.seed = s;
    }
    let out_dir = out.map(Path::to_path_buf).or_else(|| cfg.output.clone()).unwrap_or_else(|| PathBuf::from("bkl-out"));
    let started = SystemTime::now().duration_since(UNIX_EPOCH).map_or(0.0, |d| d.as_secs_f64());
    let clock = Instant::now();
    let ctx = modes::Context { cfg: &cfg, hash: cfg.hash(), threads: cfg.threads() };
    let mut dir = output::OutDir::create(&out_dir)?;
    let report = modes::dispatch(mode, &ctx, &mut dir)?;
    let files = dir.written().to_vec();
    let meta = RunMeta {
        tool: output::TOOL,
        version: output::VERSION,
        mode: mode.name(),
        config_hash: &ctx.hash,
        seed: cfg.seed,
        threads: ctx.threads,
        started_unix_s: started,
        wall_clock_s: clock.elapsed().as_secs_f64(),
        files: &files,
        timings: report.timings,
    };
    let text = serde_json::to_string_pretty(&meta)? + "\n";
    std::fs::write(dir.path().join("run_meta.json"), text)?;
    if !report.failed_criteria.is_empty() {
        return Err(CliError::Verification(report.failed_criteria));
    }
    Ok(RunSummary { status: "ok", mode: mode.name(), config_hash: ctx.hash.clone(), out_dir, files })
}
