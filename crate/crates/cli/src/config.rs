//! Command-line arguments, the optional TOML config file, and their merge.
//! Flags win over file values, which win over built-in defaults.

use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};
use psman_core::optim::Backtracking;
use psman_core::{Exec, OptimizerConfig};
use serde::Deserialize;

use crate::error::{CliError, CliResult};

#[derive(Debug, Parser)]
#[command(name = "psman", version, about = "Fits on the partitioned subspace manifold")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Multiple-dataset PCA: per-dataset and shared partitions.
    Mdpca(MdpcaArgs),
    /// MD-PCA over a grid of per-dataset partition sizes at fixed total size.
    Sweep(SweepArgs),
    /// Class-discriminative transfer subspace from labeled source to target.
    Cdt(CdtArgs),
    /// Run the built-in self-check suite.
    Verify(VerifyArgs),
    /// Print the partition spec of a checkpoint.
    Info(InfoArgs),
}

#[derive(Debug, Clone, Default, Args)]
pub struct CommonArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Initial step size.
    #[arg(long)]
    pub alpha: Option<f64>,
    /// Convergence threshold on the subspace distance between iterates.
    #[arg(long)]
    pub tol: Option<f64>,
    #[arg(long)]
    pub max_iters: Option<usize>,
    /// Use the data as given instead of z-scoring each input.
    #[arg(long)]
    pub no_normalize: bool,
    /// Output directory.
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    /// TOML file with default values for any of these options.
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Input CSV files start with a header row.
    #[arg(long)]
    pub header: bool,
    /// Random starts per fit; the lowest final loss is kept.
    #[arg(long)]
    pub restarts: Option<usize>,
    /// Run everything on one thread.
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct MdpcaArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    #[arg(long)]
    pub k_pd: Option<usize>,
    #[arg(long)]
    pub k_sh: Option<usize>,
    /// One CSV per dataset.
    #[arg(required = true, value_name = "CSV")]
    pub datasets: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Total components: D·k_pd + k_sh.
    #[arg(long)]
    pub k_total: Option<usize>,
    /// Comma-separated k_pd values.
    #[arg(long, value_delimiter = ',')]
    pub grid: Option<Vec<usize>>,
    #[arg(required = true, value_name = "CSV")]
    pub datasets: Vec<PathBuf>,
}

#[derive(Debug, Args)]
pub struct CdtArgs {
    #[command(flatten)]
    pub common: CommonArgs,
    /// Labeled source CSV.
    #[arg(long, value_name = "CSV")]
    pub source: PathBuf,
    /// Unlabeled target CSV.
    #[arg(long, value_name = "CSV")]
    pub target: PathBuf,
    /// Target labels, one per line, used only to score predictions.
    #[arg(long, value_name = "CSV")]
    pub target_labels: Option<PathBuf>,
    /// Partition size per class (default ⌊n / classes⌋).
    #[arg(long)]
    pub k_pc: Option<usize>,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Header name of the source label column (default: last column).
    #[arg(long)]
    pub label_column: Option<String>,
}

#[derive(Debug, Args)]
pub struct VerifyArgs {
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated ambient dimensions for the manifold checks.
    #[arg(long, value_delimiter = ',')]
    pub sizes: Option<Vec<usize>>,
    /// Random inputs per case in the projection checks.
    #[arg(long)]
    pub trials: Option<usize>,
    #[arg(long, value_name = "DIR")]
    pub out: Option<PathBuf>,
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub sequential: bool,
}

#[derive(Debug, Args)]
pub struct InfoArgs {
    pub checkpoint: PathBuf,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FileConfig {
    pub seed: Option<u64>,
    pub alpha: Option<f64>,
    pub tol: Option<f64>,
    pub max_iters: Option<usize>,
    pub normalize: Option<bool>,
    pub out: Option<PathBuf>,
    pub header: Option<bool>,
    pub restarts: Option<usize>,
    pub backtracking: Option<bool>,
    pub shrink: Option<f64>,
    pub max_halvings: Option<usize>,
    pub parallel: Option<bool>,
    #[serde(default)]
    pub mdpca: MdpcaSection,
    #[serde(default)]
    pub sweep: SweepSection,
    #[serde(default)]
    pub cdt: CdtSection,
    #[serde(default)]
    pub verify: VerifySection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MdpcaSection {
    pub k_pd: Option<usize>,
    pub k_sh: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSection {
    pub k_total: Option<usize>,
    pub grid: Option<Vec<usize>>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CdtSection {
    pub k_pc: Option<usize>,
    pub lambda: Option<f64>,
    pub label_column: Option<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VerifySection {
    pub sizes: Option<Vec<usize>>,
    pub trials: Option<usize>,
}

pub fn load_file(path: Option<&Path>) -> CliResult<FileConfig> {
    let Some(path) = path else {
        return Ok(FileConfig::default());
    };
    let text = std::fs::read_to_string(path).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))?;
    parse_file(&text).map_err(|e| CliError::Config(format!("{}: {e}", path.display())))
}

pub fn parse_file(text: &str) -> Result<FileConfig, String> {
    toml::from_str(text).map_err(|e| e.message().to_string())
}

pub const DEFAULT_OUT: &str = "psman-out";

/// Settings shared by the fitting commands after merging all sources.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub seed: u64,
    pub optimizer: OptimizerConfig,
    pub normalize: bool,
    pub out: PathBuf,
    pub header: bool,
    pub restarts: usize,
    pub exec: Exec,
}

impl RunConfig {
    pub fn resolve(args: &CommonArgs, file: &FileConfig) -> CliResult<Self> {
        let defaults = OptimizerConfig::default();
        let default_bt = Backtracking::default();
        let backtracking = if file.backtracking.unwrap_or(true) {
            Some(Backtracking {
                shrink: file.shrink.unwrap_or(default_bt.shrink),
                max_halvings: file.max_halvings.unwrap_or(default_bt.max_halvings),
            })
        } else {
            None
        };
        let optimizer = OptimizerConfig {
            alpha: args.alpha.or(file.alpha).unwrap_or(defaults.alpha),
            max_iters: args.max_iters.or(file.max_iters).unwrap_or(defaults.max_iters),
            tol: args.tol.or(file.tol).unwrap_or(defaults.tol),
            backtracking,
        };
        optimizer.validate().map_err(|e| CliError::Config(e.to_string()))?;
        let restarts = args.restarts.or(file.restarts).unwrap_or(1);
        if restarts == 0 {
            return Err(CliError::Config("restarts must be >= 1".into()));
        }
        let parallel = !args.sequential && file.parallel.unwrap_or(true);
        Ok(Self {
            seed: args.seed.or(file.seed).unwrap_or(0),
            optimizer,
            normalize: !args.no_normalize && file.normalize.unwrap_or(true),
            out: args.out.clone().or_else(|| file.out.clone()).unwrap_or_else(|| DEFAULT_OUT.into()),
            header: args.header || file.header.unwrap_or(false),
            restarts,
            exec: if parallel { Exec::Parallel } else { Exec::Sequential },
        })
    }

    /// Key-value echo for the run metadata file.
    pub fn to_toml(&self) -> toml::Table {
        let mut t = toml::Table::new();
        let o = &self.optimizer;
        t.insert("seed".into(), toml::Value::Integer(self.seed as i64));
        t.insert("alpha".into(), toml::Value::Float(o.alpha));
        t.insert("tol".into(), toml::Value::Float(o.tol));
        t.insert("max_iters".into(), toml::Value::Integer(o.max_iters as i64));
        t.insert("backtracking".into(), toml::Value::Boolean(o.backtracking.is_some()));
        if let Some(bt) = o.backtracking {
            t.insert("shrink".into(), toml::Value::Float(bt.shrink));
            t.insert("max_halvings".into(), toml::Value::Integer(bt.max_halvings as i64));
        }
        t.insert("normalize".into(), toml::Value::Boolean(self.normalize));
        t.insert("header".into(), toml::Value::Boolean(self.header));
        t.insert("restarts".into(), toml::Value::Integer(self.restarts as i64));
        t.insert("parallel".into(), toml::Value::Boolean(self.exec == Exec::Parallel));
        t
    }
}

/// Picks a required integer from flag, then file, or fails with a usage error.
pub fn required<T: Copy>(flag: Option<T>, file: Option<T>, name: &str) -> CliResult<T> {
    flag.or(file).ok_or_else(|| CliError::Usage(format!("--{name} is required (as a flag or in the config file)")))
}
