use std::path::PathBuf;

use clap::{Args, Parser, Subcommand, ValueEnum};
use lmmg::{Hyperparams, PhiSweep};

#[derive(Debug, Parser)]
#[command(
    name = "lmmg",
    version,
    about = "Fit and query latent multi-group membership graph models"
)]
pub struct Cli {
    /// Worker threads for parallel loops (default: all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,

    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Fit a model and write it as JSON.
    Fit(FitCmd),
    /// Predict the missing (or masked) features of one node.
    PredictFeatures(PredictFeaturesCmd),
    /// Fit with one node's links held out, then score its links.
    PredictLinks(PredictLinksCmd),
    /// Predict a label column for nodes outside a random training split.
    Classify(ClassifyCmd),
    /// Choose the number of groups by cross-validation.
    SelectK(SelectKCmd),
    /// Sample a synthetic dataset.
    Synth(SynthCmd),
    /// AUC, log-likelihood and accuracy of a score file.
    Eval(EvalCmd),
    /// Score features or links with a reference predictor.
    Baseline(BaselineCmd),
}

#[derive(Debug, Args)]
pub struct DataArgs {
    /// Edge list: `src<TAB>dst` per line.
    #[arg(long)]
    pub edges: PathBuf,
    /// Feature table with a `node` header column and 0/1/? cells.
    #[arg(long)]
    pub features: PathBuf,
    /// Treat every edge as going both ways.
    #[arg(long)]
    pub undirected: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum SweepArg {
    GaussSeidel,
    Frozen,
}

#[derive(Debug, Args)]
pub struct HyperArgs {
    /// L1 penalty on the group weights.
    #[arg(long, default_value_t = 0.01)]
    pub lambda: f64,
    #[arg(long, default_value_t = 0.005)]
    pub gamma_phi: f64,
    #[arg(long, default_value_t = 0.005)]
    pub gamma_f: f64,
    #[arg(long, default_value_t = 0.005)]
    pub gamma_a: f64,
    /// Beta prior as `a,b` (every group) or `a1,b1;a2,b2;...` (one per group).
    #[arg(long, default_value = "1,1")]
    pub alpha: String,
    /// Clamp margin for memberships and affinities.
    #[arg(long, default_value_t = 1e-4)]
    pub eps: f64,
    #[arg(long, default_value_t = 500)]
    pub max_iters: usize,
    /// Relative objective change that counts as converged.
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Take every step at the full rate, even when the objective drops.
    #[arg(long)]
    pub no_backtrack: bool,
    #[arg(long, default_value_t = 1)]
    pub inner_passes: usize,
    #[arg(long, value_enum, default_value_t = SweepArg::GaussSeidel)]
    pub sweep: SweepArg,
    /// Iteration cap for estimating a single node's memberships.
    #[arg(long, default_value_t = 500)]
    pub foldin_iters: usize,
}

impl HyperArgs {
    pub fn to_hyper(&self) -> anyhow::Result<Hyperparams> {
        let alpha = parse_alpha(&self.alpha)?;
        let hyper = Hyperparams {
            alpha,
            lambda: self.lambda,
            gamma_phi: self.gamma_phi,
            gamma_f: self.gamma_f,
            gamma_a: self.gamma_a,
            clamp_eps: self.eps,
            max_outer_iters: self.max_iters,
            rel_tol: self.tol,
            seed: self.seed,
            backtracking: !self.no_backtrack,
            inner_passes: self.inner_passes,
            sweep: match self.sweep {
                SweepArg::GaussSeidel => PhiSweep::GaussSeidel,
                SweepArg::Frozen => PhiSweep::Frozen,
            },
            foldin_iters: self.foldin_iters,
        };
        hyper.validate()?;
        Ok(hyper)
    }
}

fn parse_alpha(s: &str) -> Result<Vec<[f64; 2]>, lmmg::Error> {
    s.split(';')
        .map(|pair| {
            let v: Vec<f64> = pair
                .split(',')
                .map(|x| x.trim().parse::<f64>())
                .collect::<Result<_, _>>()
                .map_err(|e| lmmg::Error::InvalidParameter(format!("alpha '{pair}': {e}")))?;
            match v.as_slice() {
                [a, b] => Ok([*a, *b]),
                _ => Err(lmmg::Error::InvalidParameter(format!(
                    "alpha '{pair}' must be two numbers 'a,b'"
                ))),
            }
        })
        .collect()
}

#[derive(Debug, Args)]
pub struct FitCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Number of groups.
    #[arg(long)]
    pub k: usize,
    /// Node ids whose links are left out of the fit (comma separated).
    #[arg(long, value_delimiter = ',')]
    pub holdout: Vec<String>,
    /// Model file to write (stdout when absent).
    #[arg(long)]
    pub out: Option<PathBuf>,
    /// Also write the per-iteration fit report here.
    #[arg(long)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictFeaturesCmd {
    #[arg(long)]
    pub model: PathBuf,
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long)]
    pub node: String,
    /// Observed features to hide and predict: names separated by commas, or
    /// `all`. Missing cells are always predicted.
    #[arg(long)]
    pub mask: Option<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct PredictLinksCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub k: usize,
    /// Node whose links are held out and predicted.
    #[arg(long)]
    pub holdout: String,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct ClassifyCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    #[arg(long)]
    pub k: usize,
    /// Feature column holding the label.
    #[arg(long)]
    pub label_col: String,
    /// Fraction of labelled nodes used for training.
    #[arg(long, default_value_t = 0.5)]
    pub train_frac: f64,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CvTaskArg {
    Features,
    Link,
}

#[derive(Debug, Args)]
pub struct SelectKCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[command(flatten)]
    pub hyper: HyperArgs,
    /// Candidate group counts (comma separated); default is centred on log2 N.
    #[arg(long, value_delimiter = ',')]
    pub candidates: Vec<usize>,
    #[arg(long, default_value_t = lmmg::selection::DEFAULT_REPS)]
    pub reps: usize,
    #[arg(long, value_enum, default_value_t = CvTaskArg::Features)]
    pub cv_task: CvTaskArg,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum PresetArg {
    Homophily,
    CorePeriphery,
}

#[derive(Debug, Args)]
pub struct SynthCmd {
    #[arg(long, value_enum)]
    pub preset: PresetArg,
    #[arg(long)]
    pub n: usize,
    #[arg(long)]
    pub l: usize,
    #[arg(long)]
    pub k: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Writes `<prefix>.edges.tsv`, `<prefix>.features.tsv` and `<prefix>.truth.json`.
    #[arg(long)]
    pub out_prefix: String,
    /// Draw features from the sampled indicators instead of the memberships.
    #[arg(long)]
    pub synth_use_z: bool,
}

#[derive(Debug, Args)]
pub struct EvalCmd {
    /// JSON output of a prediction command, or TSV lines `score<TAB>0|1`.
    #[arg(long)]
    pub scores: PathBuf,
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum MethodArg {
    Avg,
    Ccn,
    Ccl,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TaskArg {
    Features,
    Links,
}

#[derive(Debug, Args)]
pub struct BaselineCmd {
    #[command(flatten)]
    pub data: DataArgs,
    #[arg(long, value_enum)]
    pub method: MethodArg,
    #[arg(long, value_enum)]
    pub task: TaskArg,
    #[arg(long)]
    pub node: String,
    /// Features task: observed features to hide, as for `predict-features`.
    #[arg(long)]
    pub mask: Option<String>,
    /// Links task: further nodes whose links are unavailable.
    #[arg(long, value_delimiter = ',')]
    pub hidden: Vec<String>,
    #[arg(long)]
    pub out: Option<PathBuf>,
}
