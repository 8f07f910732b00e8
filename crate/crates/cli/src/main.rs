use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};

mod commands;
mod error;
mod manifest;
mod output;

#[derive(Parser, Debug)]
#[command(
    name = "fomkit",
    version,
    about = "Figures of merit, fold alignment, epoch selection and hyperparameter search"
)]
pub struct Cli {
    /// Seed for randomized commands (search, synth); required there.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// Trials evaluated concurrently by `search`.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,

    /// Report failures as a JSON object on stderr.
    #[arg(long, global = true)]
    json_errors: bool,

    /// Output file or directory (see each command); defaults to the current directory.
    #[arg(short = 'o', long = "out-dir", global = true)]
    out: Option<PathBuf>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Evaluate figures of merit on a score table.
    Metrics(MetricsArgs),
    /// Fit per-fold alignment on controls and map scores onto the canonical scale.
    Align(AlignArgs),
    /// Collapse object-level scores to one score per subject.
    Aggregate(AggregateArgs),
    /// Track figures of merit over epochs and select stopping epochs.
    Epochs(EpochsArgs),
    /// Hyperparameter search on the synthetic multi-object benchmark.
    Search(SearchArgs),
    /// Generate synthetic benchmark data.
    Synth {
        #[command(subcommand)]
        which: SynthCommand,
    },
}

#[derive(Args, Debug)]
struct InputArgs {
    /// Score table (CSV, or JSON lines when the name ends in .jsonl).
    input: PathBuf,
    /// Override the format guessed from the file name.
    #[arg(long, value_enum)]
    format: Option<InputFormat>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum InputFormat {
    Csv,
    Jsonl,
}

#[derive(Args, Debug)]
struct MetricsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// auc | sliver:<1-99> | sens_at_spec:<pct> | fisher | bce | neg_val_ce; repeatable.
    #[arg(long = "fom", required = true)]
    foms: Vec<String>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum Switch {
    On,
    Off,
}

#[derive(Args, Debug)]
struct AlignArgs {
    #[command(flatten)]
    input: InputArgs,
    #[arg(long, default_value_t = fomkit::foldalign::DEFAULT_CANONICAL_MEDIAN)]
    canonical_median: f64,
    #[arg(long, default_value_t = fomkit::foldalign::DEFAULT_CANONICAL_STD)]
    canonical_std: f64,
    /// Clip aligned scores to [0, 1].
    #[arg(long, value_enum, default_value_t = Switch::Off)]
    clip: Switch,
}

#[derive(Args, Debug)]
struct AggregateArgs {
    #[command(flatten)]
    input: InputArgs,
    /// max | mean | nth_largest:N | nth_positional:N | quantile:Q
    #[arg(long)]
    rule: String,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
#[value(rename_all = "snake_case")]
enum TieBreakArg {
    Earliest,
    Latest,
    MostStable,
}

#[derive(Args, Debug)]
struct EpochsArgs {
    #[command(flatten)]
    input: InputArgs,
    /// Figures of merit to track; repeatable. Defaults to neg_val_ce, auc,
    /// sliver:90, sens_at_spec:90 and fisher.
    #[arg(long = "fom")]
    foms: Vec<String>,
    /// Relative slack below the best value that still counts as a tie.
    #[arg(long, default_value_t = fomkit::epochselect::DEFAULT_TIE_TOLERANCE)]
    tie_tolerance: f64,
    #[arg(long, value_enum, default_value_t = TieBreakArg::Earliest)]
    tie_break: TieBreakArg,
    /// Operating specificity (percent) for most_stable when the FoM has none.
    #[arg(long, default_value_t = fomkit::epochselect::DEFAULT_STABILITY_SPEC_PCT)]
    stability_spec: f64,
    /// Threshold half-width for the stability slopes.
    #[arg(long, default_value_t = fomkit::epochselect::DEFAULT_STABILITY_WINDOW)]
    window: f64,
    /// Covariate column for the score-vs-covariate tables.
    #[arg(long)]
    covariate: Option<String>,
    /// Comma-separated epochs that get per-epoch tables; all when omitted.
    #[arg(long, value_delimiter = ',')]
    report_epochs: Option<Vec<u32>>,
}

#[derive(ValueEnum, Clone, Copy, Debug, PartialEq)]
enum LevelArg {
    Object,
    Subject,
}

#[derive(Args, Debug)]
struct SearchArgs {
    /// Search space JSON; defaults to smoothing and position_gain on [0, 1].
    #[arg(long)]
    space: Option<PathBuf>,
    #[arg(long)]
    budget: usize,
    /// random | tpe
    #[arg(long, default_value = "random")]
    strategy: String,
    #[arg(long, value_enum, default_value_t = LevelArg::Subject)]
    level: LevelArg,
    #[arg(long, default_value = "auc")]
    fom: String,
    /// Subject aggregation rule.
    #[arg(long, default_value = "nth_largest:3")]
    aggregation: String,
    #[arg(long, default_value_t = 5)]
    folds: usize,
    /// Benchmark configuration JSON.
    #[arg(long)]
    config: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum SynthCommand {
    /// Multi-object subjects scored by a tunable scorer, with cross-validation folds.
    Exp1 {
        #[arg(long)]
        config: Option<PathBuf>,
        /// Scorer parameter as name=value; repeatable.
        #[arg(long = "param")]
        params: Vec<String>,
        /// Scorer parameters as a JSON object.
        #[arg(long)]
        params_file: Option<PathBuf>,
    },
    /// Per-epoch subject score dump from a training run.
    Exp2 {
        #[arg(long)]
        config: Option<PathBuf>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => return usage_failure(e),
    };
    match commands::run(&cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => error::report_failure(&e, cli.json_errors),
    }
}

/// Clap's own errors, reformatted when `--json-errors` appears on the line.
fn usage_failure(e: clap::Error) -> ExitCode {
    use clap::error::ErrorKind;
    if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
        let _ = e.print();
        return ExitCode::SUCCESS;
    }
    if std::env::args().any(|a| a == "--json-errors") {
        let err = error::input(anyhow::anyhow!("{}", e.render().to_string().trim_end()));
        error::report_failure(&err, true)
    } else {
        let _ = e.print();
        ExitCode::from(error::Kind::Input.code())
    }
}
