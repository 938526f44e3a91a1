//! `graphssl`: fetch TU corpora, pre-train encoders, run linear evaluation,
//! sweep ablation grids and plot the results.

pub mod ablate;
pub mod config;
pub mod record;
pub mod svg;

mod commands;

use std::ffi::OsString;
use std::path::PathBuf;

use clap::{Args, Parser, Subcommand};

#[derive(Parser, Debug)]
#[command(name = "graphssl", version, about = "Graph self-supervised pre-training experiments")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Download and unpack a TU dataset.
    Fetch(FetchArgs),
    /// Pre-train an encoder; writes a checkpoint and a loss-history CSV.
    Pretrain(PretrainArgs),
    /// Linear evaluation of a checkpoint; appends a row to a runs CSV.
    Eval(EvalArgs),
    /// Pre-train and evaluate every cell of a parameter grid.
    Ablate(AblateArgs),
    /// Render SVG line charts from a runs CSV or loss histories.
    Report(ReportArgs),
}

#[derive(Args, Debug)]
pub struct FetchArgs {
    #[arg(long)]
    pub dataset: String,
    #[arg(long, default_value = "data")]
    pub data_dir: PathBuf,
    /// Archive URL or directory; overrides GRAPHSSL_TU_URL.
    #[arg(long)]
    pub url: Option<String>,
}

/// Settings shared by every training and evaluation command. Each flag
/// overrides the matching key of `--config`.
#[derive(Args, Debug, Default)]
pub struct RunArgs {
    /// Flat `key = value` file.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub dataset: Option<String>,
    #[arg(long)]
    pub data_dir: Option<String>,
    #[arg(long)]
    pub loss: Option<String>,
    #[arg(long)]
    pub epochs: Option<String>,
    #[arg(long)]
    pub batch_size: Option<String>,
    #[arg(long)]
    pub lr: Option<String>,
    #[arg(long)]
    pub seed: Option<String>,
    #[arg(long)]
    pub layers: Option<String>,
    #[arg(long)]
    pub hidden_dim: Option<String>,
    #[arg(long)]
    pub projector_dim: Option<String>,
    #[arg(long)]
    pub lambda: Option<String>,
    #[arg(long)]
    pub mu: Option<String>,
    #[arg(long)]
    pub nu: Option<String>,
    #[arg(long)]
    pub gamma: Option<String>,
    #[arg(long)]
    pub epsilon: Option<String>,
    #[arg(long)]
    pub p: Option<String>,
    #[arg(long)]
    pub temperature: Option<String>,
    #[arg(long)]
    pub lambda_bt: Option<String>,
    #[arg(long)]
    pub aug_a: Option<String>,
    #[arg(long)]
    pub aug_b: Option<String>,
    #[arg(long)]
    pub ratio: Option<String>,
    #[arg(long)]
    pub folds: Option<String>,
    #[arg(long)]
    pub repeats: Option<String>,
    #[arg(long)]
    pub probe_epochs: Option<String>,
    #[arg(long)]
    pub probe_lr: Option<String>,
    #[arg(long)]
    pub l2: Option<String>,
}

impl RunArgs {
    fn overrides(&self) -> Vec<(&'static str, &str)> {
        let fields: [(&'static str, &Option<String>); 26] = [
            ("dataset", &self.dataset),
            ("data-dir", &self.data_dir),
            ("loss", &self.loss),
            ("epochs", &self.epochs),
            ("batch-size", &self.batch_size),
            ("lr", &self.lr),
            ("seed", &self.seed),
            ("layers", &self.layers),
            ("hidden-dim", &self.hidden_dim),
            ("projector-dim", &self.projector_dim),
            ("lambda", &self.lambda),
            ("mu", &self.mu),
            ("nu", &self.nu),
            ("gamma", &self.gamma),
            ("epsilon", &self.epsilon),
            ("p", &self.p),
            ("temperature", &self.temperature),
            ("lambda-bt", &self.lambda_bt),
            ("aug-a", &self.aug_a),
            ("aug-b", &self.aug_b),
            ("ratio", &self.ratio),
            ("folds", &self.folds),
            ("repeats", &self.repeats),
            ("probe-epochs", &self.probe_epochs),
            ("probe-lr", &self.probe_lr),
            ("l2", &self.l2),
        ];
        fields
            .into_iter()
            .filter_map(|(k, v)| v.as_deref().map(|v| (k, v)))
            .collect()
    }

    pub fn settings(&self) -> Result<config::Settings, config::ConfigError> {
        let mut s = config::Settings::default();
        if let Some(path) = &self.config {
            s.apply_file(path)?;
        }
        for (k, v) in self.overrides() {
            s.set(k, v)?;
        }
        Ok(s)
    }
}

#[derive(Args, Debug)]
pub struct PretrainArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Output directory for `checkpoint.txt` and `loss_history.csv`.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Args, Debug)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: PathBuf,
    /// Runs CSV the result row is appended to.
    #[arg(long, default_value = "runs.csv")]
    pub records: PathBuf,
}

#[derive(Args, Debug)]
pub struct AblateArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Axis to sweep; repeat together with `--values` for a cartesian grid.
    #[arg(long = "axis", required = true)]
    pub axes: Vec<String>,
    /// Comma-separated values for the matching `--axis`.
    #[arg(long = "values", required = true)]
    pub values: Vec<String>,
    #[arg(long, default_value = "runs.csv")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct ReportArgs {
    /// Runs CSV written by `eval` or `ablate`.
    #[arg(long = "in")]
    pub input: Option<PathBuf>,
    /// Column for the x axis; one chart per occurrence.
    #[arg(long = "axis")]
    pub axes: Vec<String>,
    /// `accuracy` or `final-loss`.
    #[arg(long, default_value = "accuracy")]
    pub metric: String,
    /// Loss-history CSVs plotted normalised by their first epoch.
    #[arg(long = "history")]
    pub histories: Vec<PathBuf>,
    /// Output file for a single chart, or a directory for several.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

/// Exit codes: 0 success, 1 run failure, 2 usage or configuration error.
pub fn run<I, T>(args: I) -> i32
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
    match commands::dispatch(cli.command) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<config::ConfigError>().is_some() || e.downcast_ref::<commands::UsageError>().is_some() {
                2
            } else {
                1
            }
        }
    }
}
