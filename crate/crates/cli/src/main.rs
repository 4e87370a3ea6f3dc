//! `volmix`: features, datasets, training, prediction, backtests and
//! synthetic data from the command line.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use volmix::cli::{self, RunConfig};
use volmix::{Error, Result};

#[derive(Parser)]
#[command(name = "volmix", version, about = "Volatility forecasting with temporal mixture models")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Extract order-book features from a snapshot file into features.csv.
    Features {
        /// Snapshot file (overrides `snapshots` in the config).
        input: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Align prices and snapshots into dataset.json.
    Dataset(Common),
    /// Fit a mixture model and write model.json.
    Train(Common),
    /// Predict a dataset with a checkpoint; writes predictions.csv and gates.csv.
    Predict(Common),
    /// Rolling or incremental backtest of the configured models.
    Backtest(Common),
    /// Generate synthetic two-regime prices, snapshots and labels.
    Synth(Common),
    /// Two-sample KS test between two error files.
    Kstest { a: PathBuf, b: PathBuf },
}

#[derive(Args)]
struct Common {
    /// Flat key = value config file.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    out: Option<PathBuf>,
    /// Mixture kind: tm-g or tm-log.
    #[arg(long)]
    kind: Option<String>,
    /// Volatility history length.
    #[arg(long)]
    lv: Option<usize>,
    /// Order-book window length.
    #[arg(long)]
    lb: Option<usize>,
    /// Forecast horizon D.
    #[arg(long)]
    horizon: Option<usize>,
    /// rolling or incremental.
    #[arg(long)]
    procedure: Option<String>,
    /// Number of intervals N before the first test interval.
    #[arg(long)]
    lookback: Option<usize>,
    #[arg(long)]
    prices: Option<PathBuf>,
    #[arg(long)]
    snapshots: Option<PathBuf>,
    #[arg(long)]
    dataset: Option<PathBuf>,
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Any other config key, as key=value; repeatable.
    #[arg(long = "set", value_name = "KEY=VALUE")]
    set: Vec<String>,
}

impl Common {
    /// Config file first, then flags.
    fn resolve(&self) -> Result<RunConfig> {
        let mut cfg = RunConfig::default();
        if let Some(path) = &self.config {
            let text = std::fs::read_to_string(path)
                .map_err(|e| Error::Config(format!("cannot read config {}: {e}", path.display())))?;
            cfg.apply_kv(&text)?;
        }
        let show = |p: &PathBuf| p.display().to_string();
        let flags = [
            ("seed", self.seed.map(|v| v.to_string())),
            ("out", self.out.as_ref().map(show)),
            ("kind", self.kind.clone()),
            ("lv", self.lv.map(|v| v.to_string())),
            ("lb", self.lb.map(|v| v.to_string())),
            ("horizon", self.horizon.map(|v| v.to_string())),
            ("procedure", self.procedure.clone()),
            ("lookback", self.lookback.map(|v| v.to_string())),
            ("prices", self.prices.as_ref().map(show)),
            ("snapshots", self.snapshots.as_ref().map(show)),
            ("dataset", self.dataset.as_ref().map(show)),
            ("checkpoint", self.checkpoint.as_ref().map(show)),
        ];
        for (key, value) in flags {
            if let Some(v) = value {
                cfg.set(key, &v)?;
            }
        }
        for kv in &self.set {
            let (k, v) = kv
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("--set expects KEY=VALUE, got `{kv}`")))?;
            cfg.set(k, v)?;
        }
        Ok(cfg)
    }
}

fn run(cmd: Command) -> Result<String> {
    match cmd {
        Command::Features { input, common } => {
            let mut cfg = common.resolve()?;
            if input.is_some() {
                cfg.snapshots = input;
            }
            cli::cmd_features(&cfg)
        }
        Command::Dataset(c) => cli::cmd_dataset(&c.resolve()?),
        Command::Train(c) => cli::cmd_train(&c.resolve()?),
        Command::Predict(c) => cli::cmd_predict(&c.resolve()?),
        Command::Backtest(c) => cli::cmd_backtest(&c.resolve()?),
        Command::Synth(c) => cli::cmd_synth(&c.resolve()?),
        Command::Kstest { a, b } => {
            let r = cli::cmd_kstest(&a, &b)?;
            Ok(format!("D = {}\np = {}\n", r.d, r.p))
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    let parsed = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    match run(parsed.command) {
        Ok(msg) => {
            print!("{msg}");
            ExitCode::SUCCESS
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(cli::exit_code(&e) as u8)
        }
    }
}
