use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod failure;
mod output;

/// Attribute a classifier's group disparity to causal paths from the sensitive attribute.
#[derive(Parser, Debug)]
#[command(name = "pathshap", version, about)]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Worker threads (0 = one per core). Outputs do not depend on it.
    #[arg(long, global = true, default_value_t = 0)]
    threads: usize,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a random synthetic instance (graph, data, schema).
    Generate(GenerateArgs),
    /// Find the paths and decompose the disparity over them.
    Explain(ExplainArgs),
    /// Pick path subsets over a list of trade-off weights.
    Select(SelectArgs),
    /// Score estimates against exact contributions.
    Evaluate(EvaluateArgs),
}

#[derive(Args, Debug)]
pub struct GenerateArgs {
    #[arg(long, default_value_t = 10)]
    pub features: usize,
    #[arg(long, default_value_t = 5000)]
    pub rows: usize,
    /// Edge probability between two features.
    #[arg(long, default_value_t = 0.2)]
    pub p_feature: f64,
    /// Edge probability from the sensitive attribute to a feature.
    #[arg(long, default_value_t = 0.4)]
    pub p_sensitive: f64,
    #[arg(long, value_enum, default_value_t = SettingArg::S1)]
    pub setting: SettingArg,
    /// Random weight signs instead of positive weights.
    #[arg(long)]
    pub signed: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum SettingArg {
    S1,
    S2,
}

#[derive(Args, Debug)]
pub struct InputArgs {
    #[arg(long)]
    pub graph: PathBuf,
    #[arg(long)]
    pub data: PathBuf,
    #[arg(long)]
    pub schema: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum MetricArg {
    /// Demographic parity.
    Dp,
    /// Equal opportunity (true positive rates).
    Eo,
    /// Equalized odds (true and false positive rates).
    Odds,
    /// Accuracy parity.
    Acc,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
pub enum CheckArg {
    Structural,
    Ci,
}

#[derive(Args, Debug)]
pub struct ModelArgs {
    /// logistic, mlp, or external:<host:port | shell command>.
    #[arg(long, default_value = "mlp")]
    pub predictor: String,
    /// Report thresholded 0/1 predictions instead of probabilities.
    #[arg(long)]
    pub threshold: Option<f64>,
    #[arg(long, default_value_t = 300)]
    pub epochs: usize,
    #[arg(long, default_value_t = 32)]
    pub hidden: usize,
    /// Seconds to wait for an external predictor.
    #[arg(long, default_value_t = 30)]
    pub timeout: u64,
    /// Sampled orderings.
    #[arg(long, default_value_t = 100)]
    pub orderings: usize,
    /// Enumerate every ordering when there are few enough paths.
    #[arg(long)]
    pub exact: bool,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// How undirected edges are checked during the path search.
    #[arg(long, value_enum, default_value_t = CheckArg::Structural)]
    pub check: CheckArg,
    /// Significance level of the data tests with `--check ci`.
    #[arg(long, default_value_t = 0.05)]
    pub alpha: f64,
}

#[derive(Args, Debug)]
pub struct ExplainArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = MetricArg::Dp)]
    pub metric: MetricArg,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Warn when the normalized efficiency gap exceeds this.
    #[arg(long, default_value_t = 0.05)]
    pub gap_alarm: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct SelectArgs {
    #[command(flatten)]
    pub input: InputArgs,
    #[arg(long, value_enum, default_value_t = MetricArg::Dp)]
    pub metric: MetricArg,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Strictly ascending, comma separated.
    #[arg(long, default_value = "0,1,10,100")]
    pub lambda: String,
    /// Share of rows used to fit and explain; the rest draws the trade-off curve.
    #[arg(long, default_value_t = 0.7)]
    pub train_share: f64,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

#[derive(Args, Debug)]
pub struct EvaluateArgs {
    /// Contributions to score (contributions.json or truth.json).
    #[arg(long, requires = "truth", conflicts_with = "generator")]
    pub estimates: Option<PathBuf>,
    #[arg(long, requires = "estimates")]
    pub truth: Option<PathBuf>,
    /// Regenerate this instance, explain it and compute exact contributions.
    #[arg(long, required_unless_present = "estimates")]
    pub generator: Option<PathBuf>,
    #[command(flatten)]
    pub model: ModelArgs,
    /// Largest path count the exact computation accepts.
    #[arg(long, default_value_t = pathshap_core::synthetic::GUARD)]
    pub guard: usize,
    #[arg(long, default_value = ".")]
    pub out: PathBuf,
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => e.exit(),
        Err(e) => {
            let text = e.to_string();
            let line = text
                .lines()
                .find(|l| !l.trim().is_empty())
                .unwrap_or("invalid arguments");
            eprintln!("E_ARGS: {}", line.trim_start_matches("error: "));
            return ExitCode::from(2);
        }
    };
    let pool = match rayon::ThreadPoolBuilder::new()
        .num_threads(cli.threads)
        .build()
    {
        Ok(p) => p,
        Err(e) => {
            eprintln!("E_ARGS: {e}");
            return ExitCode::from(2);
        }
    };
    let result = pool.install(|| match &cli.command {
        Command::Generate(a) => commands::generate(a),
        Command::Explain(a) => commands::explain(a),
        Command::Select(a) => commands::select(a),
        Command::Evaluate(a) => commands::evaluate(a),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("{}", failure::render(&e));
            ExitCode::from(failure::exit_status(failure::classify(&e)))
        }
    }
}
