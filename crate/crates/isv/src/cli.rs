//! Command-line front end: argument parsing, config overrides, error
//! reporting and exit codes.

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};

use crate::config::RunConfig;
use crate::error::{Error, Result};
use crate::pipeline::{self, Metrics};

#[derive(Debug, Parser)]
#[command(name = "isv", version, about = "Spoofing-aware speaker verification: training, evaluation and simulation")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic embedding and feature worlds to disk.
    Simulate(Common),
    /// Train the speaker identifier and bona fide detector (separately or with --mtl).
    TrainFrontend(Common),
    /// Train the joint network.
    TrainE2e(Common),
    /// Train the back-end on speaker embeddings.
    TrainBackend(Common),
    /// Score evaluation trials with the configured scorers.
    Evaluate(Common),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PadInputArg {
    Labels,
    Predictions,
}

#[derive(Debug, Args)]
pub struct Common {
    /// Config file of `key = value` lines; omitted keys take defaults.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Train the front-end as one multi-task network.
    #[arg(long)]
    pub mtl: bool,
    /// Bona fide input fed to the back-end fusion layer during training.
    #[arg(long, value_enum)]
    pub pad_input: Option<PadInputArg>,
    /// Weight of the same-speaker loss in the back-end objective.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Output root (overrides `work_dir`).
    #[arg(long)]
    pub work_dir: Option<PathBuf>,
    /// Continue training from the checkpoints in the output directory.
    #[arg(long)]
    pub resume: bool,
    /// Any other config key, as KEY=VALUE; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

impl Common {
    /// The config file (or defaults) with command-line overrides applied.
    pub fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = match &self.config {
            Some(path) => RunConfig::load(path)?,
            None => RunConfig::default(),
        };
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k.trim(), v.trim())?;
        }
        if let Some(seed) = self.seed {
            cfg.set("seed", &seed.to_string())?;
        }
        if self.mtl {
            cfg.set("frontend.mode", "mtl")?;
        }
        if let Some(p) = self.pad_input {
            cfg.set("backend.pad_input", if p == PadInputArg::Labels { "labels" } else { "predictions" })?;
        }
        if let Some(a) = self.alpha {
            cfg.set("backend.alpha", &a.to_string())?;
        }
        if let Some(dir) = &self.work_dir {
            cfg.set("work_dir", &dir.display().to_string())?;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

pub fn execute(command: &Command) -> Result<Metrics> {
    match command {
        Command::Simulate(c) => pipeline::simulate(&c.resolve()?),
        Command::TrainFrontend(c) => pipeline::train_frontend(&c.resolve()?, c.resume),
        Command::TrainE2e(c) => pipeline::train_e2e(&c.resolve()?, c.resume),
        Command::TrainBackend(c) => pipeline::train_backend(&c.resolve()?, c.resume),
        Command::Evaluate(c) => pipeline::evaluate(&c.resolve()?),
    }
}

/// `ERROR:` lines for `err`, one per missing item when it lists several.
pub fn error_lines(err: &Error) -> Vec<String> {
    match err {
        Error::MissingArtifacts(list) => list.iter().map(|p| format!("ERROR: missing artifact: {p}")).collect(),
        Error::Core(isv_core::Error::MissingUtterances(list)) => {
            list.iter().map(|u| format!("ERROR: missing utterance: {u}")).collect()
        }
        other => vec![format!("ERROR: {other}")],
    }
}

/// Runs the CLI on `args` and returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { 2 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli.command) {
        Ok(m) => {
            for (k, v) in &m.0 {
                println!("{k}={v}");
            }
            0
        }
        Err(e) => {
            for line in error_lines(&e) {
                eprintln!("{line}");
            }
            e.exit_code()
        }
    }
}
