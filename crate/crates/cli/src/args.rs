use clap::{Args, Parser, Subcommand, ValueEnum};
use std::path::PathBuf;
use std::str::FromStr;

#[derive(Debug, Parser)]
#[command(
    name = "ss3",
    version,
    about = "Incremental text classification and early risk detection over document streams"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Train a model from a labeled corpus (and/or merge existing models)
    Train(TrainArgs),
    /// Classify a single document and print its confidence vector
    Classify(ClassifyArgs),
    /// Stream subjects one writing at a time and emit early decisions
    Stream(StreamArgs),
    /// Evaluate a policy on a labeled dataset (ERDE, F1, precision, recall)
    Eval(EvalArgs),
    /// Grid-search hyper-parameters with k-fold cross-validation
    Tune(TuneArgs),
    /// Render an HTML explanation report for a subject or document
    Explain(ExplainArgs),
    /// Show the top-valued terms of a category
    Inspect(InspectArgs),
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Corpus files or directories (JSONL records or subject JSON files)
    #[arg(long, num_args = 1..)]
    pub corpus: Vec<PathBuf>,

    /// Where to write the model JSON
    #[arg(long, short = 'o')]
    pub output: PathBuf,

    /// Smoothness hyper-parameter, in (0, 1]
    #[arg(long, default_value_t = 0.455)]
    pub sigma: f64,

    /// Significance hyper-parameter, > 0
    #[arg(long, default_value_t = 1.0)]
    pub lambda: f64,

    /// Sanction hyper-parameter, >= 0
    #[arg(long, default_value_t = 1.0)]
    pub rho: f64,

    /// JSON file with {"sigma", "lambda", "rho"} (e.g. from `ss3 tune`)
    #[arg(long, conflicts_with_all = ["sigma", "lambda", "rho"])]
    pub params: Option<PathBuf>,

    /// Continue training from an existing model file
    #[arg(long)]
    pub update: Option<PathBuf>,

    /// With --update: allow the corpus to introduce categories the model
    /// does not know yet
    #[arg(long, requires = "update")]
    pub allow_new_categories: bool,

    /// Model files to merge in (profiles are summed term-wise)
    #[arg(long, num_args = 1..)]
    pub merge: Vec<PathBuf>,

    /// Keep the original character case of tokens
    #[arg(long, conflicts_with_all = ["update", "merge"])]
    pub no_lowercase: bool,

    /// Drop tokens shorter than this many characters
    #[arg(long, default_value_t = 1, conflicts_with_all = ["update", "merge"])]
    pub min_token_len: usize,
}

#[derive(Debug, Args)]
pub struct ClassifyArgs {
    /// Trained model file
    #[arg(long, short = 'm')]
    pub model: PathBuf,

    /// Read the document from a file (default: stdin)
    #[arg(long, conflicts_with = "text")]
    pub input: Option<PathBuf>,

    /// Classify this literal text
    #[arg(long)]
    pub text: Option<String>,

    /// Select every category within this fraction of the maximum instead of
    /// the single argmax
    #[arg(long)]
    pub gamma: Option<f64>,

    /// Include the confidence vectors of every block level in the output
    #[arg(long)]
    pub per_level_cvs: bool,
}

/// Early-policy flags shared by stream, eval and tune.
#[derive(Debug, Clone, Args)]
pub struct PolicyArgs {
    /// Decision rule: accumulated threshold, or threshold plus slope ratio
    #[arg(long, value_enum, default_value_t = PolicyChoice::Threshold)]
    pub policy: PolicyChoice,

    /// Slope-ratio policy: fire when the positive delta grows this many
    /// times faster than the negative one
    #[arg(long, default_value_t = 4.0)]
    pub ratio_min: f64,

    /// Slope-ratio policy: require the positive delta to exceed this floor
    #[arg(long, default_value_t = 0.0)]
    pub min_change: f64,

    /// Name of the positive (at-risk) category
    #[arg(long, default_value = "positive")]
    pub positive: String,

    /// Name of the negative (control) category
    #[arg(long, default_value = "negative")]
    pub negative: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PolicyChoice {
    Threshold,
    Delta,
}

/// Cost flags of the time-aware error measure.
#[derive(Debug, Clone, Args)]
pub struct CostArgs {
    /// False-positive cost
    #[arg(long, default_value_t = 0.129)]
    pub cfp: f64,

    /// False-negative cost
    #[arg(long, default_value_t = 1.0)]
    pub cfn: f64,

    /// True-positive cost (scaled by the latency cost)
    #[arg(long, default_value_t = 1.0)]
    pub ctp: f64,
}

#[derive(Debug, Args)]
pub struct StreamArgs {
    #[arg(long, short = 'm')]
    pub model: PathBuf,

    /// Dataset (JSONL or subject directory); labels are optional here
    #[arg(long, short = 'd')]
    pub data: PathBuf,

    #[command(flatten)]
    pub policy: PolicyArgs,

    /// Write decisions JSONL here instead of stdout
    #[arg(long)]
    pub decisions: Option<PathBuf>,

    /// Write one trajectory CSV per subject into this directory
    #[arg(long)]
    pub trajectory_dir: Option<PathBuf>,

    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long, short = 'm')]
    pub model: PathBuf,

    /// Labeled dataset (JSONL or subject directory)
    #[arg(long, short = 'd')]
    pub data: PathBuf,

    /// Streaming protocol
    #[arg(long, value_enum, default_value_t = ModeChoice::PerPost)]
    pub mode: ModeChoice,

    /// Number of chunks for --mode chunked
    #[arg(long, default_value_t = 10)]
    pub chunks: usize,

    #[command(flatten)]
    pub policy: PolicyArgs,

    /// Deadlines o to report ERDE at (comma-separated)
    #[arg(long, value_delimiter = ',', default_value = "5,10,30,50,75,100")]
    pub o: Vec<u32>,

    #[command(flatten)]
    pub costs: CostArgs,

    /// Write the full report as JSON
    #[arg(long)]
    pub report_json: Option<PathBuf>,

    /// Write the report as CSV (one row per metric and deadline)
    #[arg(long)]
    pub report_csv: Option<PathBuf>,

    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModeChoice {
    PerPost,
    Chunked,
}

#[derive(Debug, Args)]
pub struct TuneArgs {
    /// Labeled training dataset (JSONL or subject directory)
    #[arg(long, short = 'd')]
    pub data: PathBuf,

    /// Cross-validation folds
    #[arg(long, default_value_t = 4)]
    pub folds: usize,

    /// `erde:<o>` to minimize ERDE at deadline o, or `f1` to maximize F1
    #[arg(long, default_value = "erde:50")]
    pub objective: ObjectiveArg,

    /// Center of the first sigma grid
    #[arg(long, default_value_t = 0.5)]
    pub sigma_center: f64,

    /// Sigma refinement levels (steps 0.1, 0.01, 0.001, ...)
    #[arg(long, default_value_t = 3)]
    pub sigma_levels: u32,

    /// Lambda candidates (comma-separated)
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    pub lambda_grid: Vec<f64>,

    /// Rho candidates (comma-separated)
    #[arg(long, value_delimiter = ',', default_value = "1.0")]
    pub rho_grid: Vec<f64>,

    /// Fold-assignment seed
    #[arg(long, default_value_t = 42)]
    pub seed: u64,

    #[command(flatten)]
    pub policy: PolicyArgs,

    #[command(flatten)]
    pub costs: CostArgs,

    /// Write the full score table as CSV
    #[arg(long)]
    pub table: Option<PathBuf>,

    /// Write the best configuration as JSON (consumable by `train --params`)
    #[arg(long)]
    pub best: Option<PathBuf>,

    /// Worker threads (0 = all cores)
    #[arg(long, default_value_t = 0)]
    pub jobs: usize,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ObjectiveArg(pub ss3_core::Objective);

impl FromStr for ObjectiveArg {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let lower = s.to_ascii_lowercase();
        if lower == "f1" {
            return Ok(Self(ss3_core::Objective::MaxF1));
        }
        if lower == "erde" {
            return Ok(Self(ss3_core::Objective::MinErde { o: 50 }));
        }
        if let Some(rest) = lower.strip_prefix("erde:").or_else(|| lower.strip_prefix("erde")) {
            let o: u32 = rest
                .parse()
                .map_err(|_| format!("bad objective `{s}`; use `f1` or `erde:<o>`"))?;
            return Ok(Self(ss3_core::Objective::MinErde { o }));
        }
        Err(format!("bad objective `{s}`; use `f1` or `erde:<o>`"))
    }
}

#[derive(Debug, Args)]
pub struct ExplainArgs {
    #[arg(long, short = 'm')]
    pub model: PathBuf,

    /// Dataset holding the subject (requires --subject)
    #[arg(long, short = 'd', requires = "subject")]
    pub data: Option<PathBuf>,

    /// Subject id to explain
    #[arg(long)]
    pub subject: Option<String>,

    /// Explain a single document read from this file instead
    #[arg(long, conflicts_with_all = ["data", "subject"])]
    pub input: Option<PathBuf>,

    /// Category whose confidence drives the highlighting
    #[arg(long)]
    pub focus: String,

    /// Where to write the HTML report
    #[arg(long, short = 'o')]
    pub output: PathBuf,

    /// Also dump the annotated block tree as JSON
    #[arg(long)]
    pub tree_json: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct InspectArgs {
    #[arg(long, short = 'm')]
    pub model: PathBuf,

    /// Category to inspect
    #[arg(long, short = 'c')]
    pub category: String,

    /// How many terms to show
    #[arg(long, short = 'k', default_value_t = 20)]
    pub top: usize,

    /// Emit JSON instead of a table
    #[arg(long)]
    pub json: bool,
}
