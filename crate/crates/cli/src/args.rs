use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use dg_core::selective::Selector;
use serde::{Deserialize, Serialize};

#[derive(Parser, Debug)]
#[command(name = "dg", version, about = "Train and evaluate classifiers that can abstain")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Subcommand, Debug)]
pub enum Command {
    /// Train a model and write a checkpoint plus per-epoch log.
    Train(RunArgs),
    /// Risk-coverage table for a checkpoint.
    Eval(EvalArgs),
    /// Train over a grid of payoffs and pick the best model per coverage.
    Sweep(SweepArgs),
    /// The least confident test examples.
    Topk(TopkArgs),
    /// Rotate one test image and record how the prediction and abstention change.
    RotateProbe(ProbeArgs),
    /// Write the synthetic Gaussian train/test sets as CSV.
    GenSynthetic(GenArgs),
    /// Horse-race calculations, printed as JSON.
    #[command(subcommand)]
    Math(MathCommand),
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize, ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum DatasetKind {
    Synthetic,
    Mnist,
}

#[derive(Args, Debug, Clone, Default)]
pub struct RunArgs {
    /// JSON config file; flags override its values.
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long, value_enum)]
    pub dataset: Option<DatasetKind>,
    /// Payoff of the gambler's loss.
    #[arg(long = "o")]
    pub payoff: Option<f64>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub pretrain_epochs: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub batch_size: Option<usize>,
    #[arg(long = "lr")]
    pub learning_rate: Option<f64>,
    /// Target coverage; repeat for several.
    #[arg(long = "coverage")]
    pub coverages: Vec<f64>,
    /// gambler, entropy or softmax_response; repeat for several.
    #[arg(long = "selector", value_parser = parse_selector)]
    pub selectors: Vec<Selector>,
    #[arg(long)]
    pub out_dir: Option<PathBuf>,
    /// Directory holding the MNIST IDX files.
    #[arg(long, env = "DG_DATA_DIR")]
    pub data_dir: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct EvalArgs {
    #[command(flatten)]
    pub run: RunArgs,
    /// Defaults to `<out-dir>/checkpoint.json`.
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
}

#[derive(Args, Debug, Clone)]
pub struct SweepArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub o_min: Option<f64>,
    #[arg(long)]
    pub o_max: Option<f64>,
    #[arg(long)]
    pub o_step: Option<f64>,
}

#[derive(Args, Debug, Clone)]
pub struct TopkArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    #[arg(long, default_value_t = 10)]
    pub k: usize,
}

#[derive(Args, Debug, Clone)]
pub struct ProbeArgs {
    #[command(flatten)]
    pub run: RunArgs,
    #[arg(long)]
    pub checkpoint: Option<PathBuf>,
    /// Test-set index of the image to rotate.
    #[arg(long)]
    pub index: usize,
    #[arg(long, default_value_t = 10.0)]
    pub angle_step: f64,
}

#[derive(Args, Debug, Clone)]
pub struct GenArgs {
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = "out")]
    pub out_dir: PathBuf,
}

#[derive(Subcommand, Debug)]
pub enum MathCommand {
    /// Doubling rate of a bet; a bet one longer than `p` ends with the reservation.
    DoublingRate {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        odds: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        bet: Vec<f64>,
    },
    /// Proportional betting and its rate.
    OptimalBet {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        odds: Vec<f64>,
    },
    /// Best bet with a reservation option at uniform payoff `o`.
    OptimalReservation {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long = "o")]
        payoff: f64,
    },
    /// Rate gain from side information; rows separated by `;`.
    SideInfo {
        #[arg(long)]
        joint: String,
        #[arg(long, value_delimiter = ',', required = true)]
        odds: Vec<f64>,
    },
    /// Exhaustive grid search over the betting simplex.
    BruteForce {
        #[arg(long, value_delimiter = ',', required = true)]
        p: Vec<f64>,
        #[arg(long, value_delimiter = ',', required = true)]
        odds: Vec<f64>,
        #[arg(long, default_value_t = 0.01)]
        resolution: f64,
        #[arg(long)]
        reservation: bool,
    },
    /// Wealth relative over a sequence of races; bets separated by `;`.
    Wealth {
        #[arg(long)]
        bets: String,
        #[arg(long, value_delimiter = ',', required = true)]
        winners: Vec<usize>,
        #[arg(long = "o")]
        payoff: f64,
    },
}

fn parse_selector(s: &str) -> Result<Selector, String> {
    s.parse().map_err(|e: dg_core::Error| e.to_string())
}
