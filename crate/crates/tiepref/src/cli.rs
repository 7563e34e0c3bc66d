//! The `tiepref` command line.
//!
//! Every subcommand also accepts `--config FILE`: a flat `key=value` file
//! whose keys are long flag names. File values are applied first, so flags on
//! the command line win.

use std::ffi::OsString;
use std::fs::File;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;
use std::time::Instant;

use anyhow::{bail, Context};
use clap::{Args, CommandFactory, Parser, Subcommand, ValueEnum};
use tiepref_core::dataset::{break_ties_seeded, generate_synthetic, relabel_argmax, PreferenceDataset};
use tiepref_core::experiments::{
    emit_bias_curves, eval_accuracy, eval_mean_abs_bias, run_bias_gap_single, BiasGapConfig, BiasGapResult, GenConfig,
    CURVE_RANGE,
};
use tiepref_core::reward::{
    random_ground_truth, AnyReward, LinearReward, MlpReward, PolicyLogRatioReward, TabularReward,
};
use tiepref_core::rng::{derive_seed, Stream};
use tiepref_core::train::{train_pairs, weighted_pairs, CorrectionMap, LossKind, OffsetGradient, TrainConfig};
use tiepref_core::TieModelParams;

use crate::checkpoint::{load_checkpoint, save_checkpoint};
use crate::records::{load_records, save_records};
use crate::report::{write_bias_curve, write_bias_table, write_training_report};

#[derive(Debug, Parser)]
#[command(name = "tiepref", version, about = "Preference learning with ties: data, fitting and bias experiments")]
#[command(args_override_self = true)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a synthetic labeled dataset from a random ground-truth reward.
    GenData(GenDataArgs),
    /// Train a reward model on a dataset and write a checkpoint and report.
    Fit(FitArgs),
    /// Score a checkpoint on a dataset.
    Eval(EvalArgs),
    /// Bias of BT versus BTT fits for several tie propensities.
    BiasTable(BiasTableArgs),
    /// Analytic bias curves over a range of true strengths.
    BiasCurve(BiasCurveArgs),
}

#[derive(Debug, Args)]
pub struct Common {
    /// Flat key=value file of defaults for this subcommand [default: none].
    #[arg(long, value_name = "FILE")]
    pub config: Option<PathBuf>,
    /// Root seed for every random draw.
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
}

#[derive(Debug, Args)]
pub struct GenDataArgs {
    #[command(flatten)]
    pub common: Common,
    /// Dataset file with ties.
    #[arg(long, default_value = "data.jsonl")]
    pub out: PathBuf,
    /// Tie propensity (>= 1; 1 produces no ties).
    #[arg(long, default_value_t = 2.0, value_parser = parse_theta)]
    pub theta: f64,
    /// Response length.
    #[arg(long, default_value_t = 2, value_parser = clap::value_parser!(u64).range(1..))]
    pub dim: u64,
    #[arg(long, default_value_t = 4)]
    pub prompts: u32,
    /// Comparisons per prompt.
    #[arg(long, default_value_t = 1000)]
    pub pairs: usize,
    /// Also write the dataset with every tie replaced by a fair coin flip [default: off].
    #[arg(long)]
    pub break_ties: bool,
    /// Tie-broken dataset path [default: OUT with extension `broken.jsonl`].
    #[arg(long, value_name = "PATH")]
    pub broken_out: Option<PathBuf>,
    /// Write the ground-truth reward checkpoint here [default: not written].
    #[arg(long, value_name = "PATH")]
    pub truth_out: Option<PathBuf>,
    /// Replace every label by the sign of the true strength [default: off].
    #[arg(long)]
    pub argmax_labels: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum LossArg {
    Bt,
    Btt,
    Corrected,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ModelArg {
    Tabular,
    Linear,
    Mlp,
    Policy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum CorrectionArg {
    Forward,
    Inverse,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OffsetArg {
    Detached,
    Attached,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    #[arg(long, default_value_t = 1e-3)]
    pub lr: f64,
    #[arg(long, default_value_t = 64)]
    pub batch_size: usize,
    /// RMSprop decay of the squared-gradient average.
    #[arg(long, default_value_t = 0.9)]
    pub decay: f64,
    /// RMSprop denominator offset.
    #[arg(long, default_value_t = 1e-8)]
    pub epsilon: f64,
    /// Relative epoch-loss improvement that counts as converged (0 disables).
    #[arg(long, default_value_t = 1e-6)]
    pub tol: f64,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, default_value = "data.jsonl")]
    pub data: PathBuf,
    #[arg(long, value_enum, default_value_t = LossArg::Bt)]
    pub loss: LossArg,
    /// Tie propensity for btt and corrected [default: the dataset's theta].
    #[arg(long, value_parser = parse_theta)]
    pub theta: Option<f64>,
    #[arg(long, value_enum, default_value_t = ModelArg::Mlp)]
    pub model: ModelArg,
    /// MLP hidden width.
    #[arg(long, default_value_t = tiepref_core::reward::DEFAULT_HIDDEN)]
    pub hidden: usize,
    /// Policy reward temperature.
    #[arg(long, default_value_t = 0.1)]
    pub beta: f64,
    /// Prompt count of the model [default: largest prompt id in the data + 1].
    #[arg(long)]
    pub prompts: Option<usize>,
    /// Strength fed to the BT likelihood by the corrected loss.
    #[arg(long, value_enum, default_value_t = CorrectionArg::Forward)]
    pub correction: CorrectionArg,
    /// Whether gradients flow through the correction offset.
    #[arg(long, value_enum, default_value_t = OffsetArg::Detached)]
    pub offset_gradient: OffsetArg,
    #[arg(long, default_value_t = 1000)]
    pub max_epochs: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    /// Checkpoint path.
    #[arg(long, default_value = "model.ckpt")]
    pub out: PathBuf,
    /// Training report path.
    #[arg(long, default_value = "report.csv")]
    pub report: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub common: Common,
    /// Checkpoint to score.
    #[arg(long, default_value = "model.ckpt")]
    pub model: PathBuf,
    #[arg(long, default_value = "data.jsonl")]
    pub data: PathBuf,
    /// Ground-truth checkpoint; adds the mean absolute bias over the data's pairs [default: none].
    #[arg(long, value_name = "PATH")]
    pub truth: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct BiasTableArgs {
    #[command(flatten)]
    pub common: Common,
    /// Tie propensities, comma separated (each > 1).
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 5.0, 10.0], value_parser = parse_theta)]
    pub thetas: Vec<f64>,
    #[arg(long, default_value_t = GenConfig::default().n_prompts)]
    pub prompts: usize,
    #[arg(long, default_value_t = GenConfig::default().pairs_per_prompt)]
    pub pairs: usize,
    #[arg(long, default_value_t = GenConfig::default().dimension)]
    pub dim: usize,
    #[arg(long, default_value_t = BiasGapConfig::default().hidden)]
    pub hidden: usize,
    #[arg(long, default_value_t = BiasGapConfig::default().train.max_epochs)]
    pub max_epochs: usize,
    #[arg(long, default_value_t = BiasGapConfig::default().n_eval_pairs)]
    pub eval_pairs: usize,
    #[command(flatten)]
    pub train: TrainArgs,
    /// CSV output, `-` for standard output.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct BiasCurveArgs {
    #[command(flatten)]
    pub common: Common,
    #[arg(long, value_delimiter = ',', default_values_t = [2.0, 5.0, 10.0], value_parser = parse_theta)]
    pub thetas: Vec<f64>,
    #[arg(long, default_value_t = CURVE_RANGE.0, allow_negative_numbers = true)]
    pub lo: f64,
    #[arg(long, default_value_t = CURVE_RANGE.1, allow_negative_numbers = true)]
    pub hi: f64,
    #[arg(long, default_value_t = 100)]
    pub points: usize,
    /// CSV output, `-` for standard output.
    #[arg(long, default_value = "-")]
    pub out: PathBuf,
}

fn parse_theta(s: &str) -> Result<f64, String> {
    let v: f64 = s.parse().map_err(|_| format!("{s:?} is not a number"))?;
    if !(v >= 1.0 && v.is_finite()) {
        return Err(format!("theta must be a finite number >= 1, got {s}"));
    }
    Ok(v)
}

/// Error that should be reported as a usage problem (exit code 2).
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
pub struct UsageError(pub String);

pub fn loss_name(loss: LossKind) -> &'static str {
    match loss {
        LossKind::Bt => "bt",
        LossKind::Btt => "btt",
        LossKind::BiasCorrected => "corrected",
    }
}

/// Parses `args` (program name first), applies any `--config` file and runs
/// the subcommand.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let args: Vec<OsString> = args.into_iter().map(Into::into).collect();
    let args = match merge_config(args) {
        Ok(a) => a,
        Err(e) => {
            eprintln!("error: {e:#}");
            return ExitCode::from(2);
        }
    };
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(u8::try_from(e.exit_code()).unwrap_or(2));
        }
    };
    match execute(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            if e.downcast_ref::<UsageError>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}

/// Splices the entries of a `--config` file in front of the subcommand's own
/// arguments so that explicit flags override them.
fn merge_config(args: Vec<OsString>) -> anyhow::Result<Vec<OsString>> {
    let Some(sub_at) = args.iter().skip(1).position(|a| !a.to_string_lossy().starts_with('-')).map(|i| i + 1) else {
        return Ok(args);
    };
    let mut path = None;
    let mut i = sub_at + 1;
    while i < args.len() {
        let a = args[i].to_string_lossy();
        if a == "--" {
            break;
        }
        if a == "--config" {
            path = args.get(i + 1).map(PathBuf::from);
            i += 1;
        } else if let Some(p) = a.strip_prefix("--config=") {
            path = Some(PathBuf::from(p));
        }
        i += 1;
    }
    let Some(path) = path else {
        return Ok(args);
    };
    let sub_name = args[sub_at].to_string_lossy().into_owned();
    let command = Cli::command();
    let Some(sub) = command.find_subcommand(&sub_name) else {
        return Ok(args);
    };
    let text = std::fs::read_to_string(&path).with_context(|| format!("reading config {}", path.display()))?;
    let mut injected = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) =
            line.split_once('=').with_context(|| format!("{}:{}: expected key=value", path.display(), n + 1))?;
        let (key, value) = (key.trim().replace('_', "-"), value.trim());
        if key == "config" {
            bail!("{}:{}: a config file cannot name another config file", path.display(), n + 1);
        }
        let arg = sub
            .get_arguments()
            .find(|a| a.get_long() == Some(key.as_str()))
            .with_context(|| format!("{}:{}: unknown key `{key}` for {sub_name}", path.display(), n + 1))?;
        if arg.get_action().takes_values() {
            injected.push(OsString::from(format!("--{key}={value}")));
        } else {
            match value {
                "true" => injected.push(OsString::from(format!("--{key}"))),
                "false" => {}
                _ => bail!("{}:{}: `{key}` takes true or false", path.display(), n + 1),
            }
        }
    }
    let mut out = args[..=sub_at].to_vec();
    out.extend(injected);
    out.extend_from_slice(&args[sub_at + 1..]);
    Ok(out)
}

pub fn execute(command: Command) -> anyhow::Result<()> {
    match command {
        Command::GenData(a) => gen_data(a),
        Command::Fit(a) => fit(a),
        Command::Eval(a) => eval(a),
        Command::BiasTable(a) => bias_table(a),
        Command::BiasCurve(a) => bias_curve(a),
    }
}

fn broken_path(out: &Path) -> PathBuf {
    let stem = out.file_stem().map_or_else(|| "data".into(), |s| s.to_string_lossy().into_owned());
    out.with_file_name(format!("{stem}.broken.jsonl"))
}

fn gen_data(a: GenDataArgs) -> anyhow::Result<()> {
    let dim = a.dim as usize;
    let n_prompts = a.prompts as usize;
    let params = TieModelParams::new(a.theta)?;
    let seed = a.common.seed;
    let truth = random_ground_truth(dim, n_prompts, derive_seed(seed, Stream::GroundTruth, 0))?;
    let data_seed = derive_seed(seed, Stream::Dataset, 0);
    let mut dataset = generate_synthetic(n_prompts, a.pairs, dim, &truth, params, data_seed)?;
    dataset.seed = Some(seed);
    if a.argmax_labels {
        dataset = relabel_argmax(&dataset, &truth)?;
    }
    save_records(&dataset, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    println!("records={} ties={} path={}", dataset.len(), dataset.n_ties(), a.out.display());

    if a.break_ties || a.broken_out.is_some() {
        let path = a.broken_out.unwrap_or_else(|| broken_path(&a.out));
        let broken = break_ties_seeded(&dataset, data_seed);
        save_records(&broken, &path).with_context(|| format!("writing {}", path.display()))?;
        println!("records={} ties={} path={}", broken.len(), broken.n_ties(), path.display());
    }
    if let Some(path) = a.truth_out {
        save_checkpoint(&AnyReward::Tabular(truth), &path).with_context(|| format!("writing {}", path.display()))?;
        println!("truth={}", path.display());
    }
    Ok(())
}

fn train_config(t: &TrainArgs, max_epochs: usize, seed: u64) -> TrainConfig {
    TrainConfig {
        learning_rate: t.lr,
        batch_size: t.batch_size,
        rmsprop_decay: t.decay,
        rmsprop_epsilon: t.epsilon,
        convergence_tol: t.tol,
        max_epochs,
        seed,
        ..TrainConfig::default()
    }
}

fn new_model(a: &FitArgs, dataset: &PreferenceDataset, seed: u64) -> anyhow::Result<AnyReward> {
    let prompts = a.prompts.unwrap_or_else(|| dataset.prompt_span());
    let dim = dataset.dimension();
    Ok(match a.model {
        ModelArg::Tabular => AnyReward::Tabular(TabularReward::zeros(prompts, dim)?),
        ModelArg::Linear => AnyReward::Linear(LinearReward::zeros(prompts, dim)),
        ModelArg::Mlp => AnyReward::Mlp(MlpReward::new_random(
            prompts.max(1),
            dim,
            a.hidden,
            derive_seed(seed, Stream::ModelInit, 0),
        )?),
        ModelArg::Policy => AnyReward::Policy(PolicyLogRatioReward::uniform(prompts, dim, a.beta)?),
    })
}

fn fit(a: FitArgs) -> anyhow::Result<()> {
    let dataset = load_records(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let loss = match a.loss {
        LossArg::Bt => LossKind::Bt,
        LossArg::Btt => LossKind::Btt,
        LossArg::Corrected => LossKind::BiasCorrected,
    };
    let ties = dataset.n_ties();
    if ties > 0 && loss != LossKind::Btt {
        return Err(UsageError(format!(
            "--loss {} cannot use {} tied records in {}; use --loss btt or a tie-broken dataset",
            loss_name(loss),
            ties,
            a.data.display()
        ))
        .into());
    }
    let theta = match (loss, a.theta.or(dataset.theta)) {
        (LossKind::Bt, _) => None,
        (_, Some(t)) => Some(TieModelParams::new(t)?),
        (_, None) => {
            return Err(
                UsageError(format!("--loss {} needs --theta (the dataset header has none)", loss_name(loss))).into()
            )
        }
    };
    if loss == LossKind::Btt && ties > 0 && theta.is_some_and(|t| t.is_bt()) {
        return Err(UsageError("--theta 1 gives tied records probability 0".into()).into());
    }
    let seed = a.common.seed;
    let config = TrainConfig {
        loss,
        theta,
        correction: match a.correction {
            CorrectionArg::Forward => CorrectionMap::Forward,
            CorrectionArg::Inverse => CorrectionMap::Inverse,
        },
        offset_gradient: match a.offset_gradient {
            OffsetArg::Detached => OffsetGradient::Detached,
            OffsetArg::Attached => OffsetGradient::Attached,
        },
        ..train_config(&a.train, a.max_epochs, derive_seed(seed, Stream::Shuffle, 0))
    };
    config.validate().map_err(|e| UsageError(e.to_string()))?;
    let mut model = new_model(&a, &dataset, seed)?;

    println!("{:>7} {:>14} {:>14} {:>9}", "epoch", "loss", "grad_norm", "wall_ms");
    let start = Instant::now();
    let report = train_pairs(&mut model, &weighted_pairs(&dataset), &config, |e| {
        println!("{:>7} {:>14.8} {:>14.6e} {:>9}", e.epoch, e.loss, e.grad_norm, start.elapsed().as_millis());
    })?;

    save_checkpoint(&model, &a.out).with_context(|| format!("writing {}", a.out.display()))?;
    let file = File::create(&a.report).with_context(|| format!("writing {}", a.report.display()))?;
    write_training_report(&report, &config, file).with_context(|| format!("writing {}", a.report.display()))?;
    println!(
        "stop={} epochs={} final_loss={} checkpoint={} report={}",
        report.stop.as_str(),
        report.epochs.len(),
        report.final_loss().unwrap_or(f64::NAN),
        a.out.display(),
        a.report.display()
    );
    Ok(())
}

fn eval(a: EvalArgs) -> anyhow::Result<()> {
    let model = load_checkpoint(&a.model).with_context(|| format!("reading {}", a.model.display()))?;
    let dataset = load_records(&a.data).with_context(|| format!("reading {}", a.data.display()))?;
    let report = eval_accuracy(&model, &dataset)?;
    println!("accuracy={} n_scored={} n_ties_excluded={}", report.accuracy, report.n_scored, report.n_ties_excluded);
    if let Some(path) = a.truth {
        let truth = load_checkpoint(&path).with_context(|| format!("reading {}", path.display()))?;
        let pairs: Vec<_> = dataset.records().iter().map(|r| r.pair()).collect();
        println!("mean_abs_bias={}", eval_mean_abs_bias(&model, &truth, &pairs)?);
    }
    Ok(())
}

fn open_output(path: &Path) -> anyhow::Result<Box<dyn Write>> {
    if path.as_os_str() == "-" {
        return Ok(Box::new(std::io::stdout().lock()));
    }
    Ok(Box::new(File::create(path).with_context(|| format!("writing {}", path.display()))?))
}

fn bias_table(a: BiasTableArgs) -> anyhow::Result<()> {
    if let Some(t) = a.thetas.iter().find(|&&t| t == 1.0) {
        return Err(UsageError(format!("theta {t} produces no ties; bias-table needs every theta > 1")).into());
    }
    let config = BiasGapConfig {
        gen: GenConfig { n_prompts: a.prompts, pairs_per_prompt: a.pairs, dimension: a.dim },
        train: train_config(&a.train, a.max_epochs, 0),
        hidden: a.hidden,
        n_eval_pairs: a.eval_pairs,
    };
    config.train.validate().map_err(|e| UsageError(e.to_string()))?;
    let seed = a.common.seed;
    // Runs are independent; each owns its seeds and state.
    let rows: Vec<BiasGapResult> = std::thread::scope(|s| {
        let handles: Vec<_> =
            a.thetas.iter().map(|&t| s.spawn(move || run_bias_gap_single(t, &config, seed))).collect();
        handles.into_iter().map(|h| h.join().expect("bias-gap worker panicked")).collect::<Result<_, _>>()
    })?;
    write_bias_table(&rows, open_output(&a.out)?)?;
    if a.out.as_os_str() != "-" {
        for r in &rows {
            println!("theta={} bt={:.6} btt={:.6} gap={:.6}", r.theta, r.mean_abs_bias_bt, r.mean_abs_bias_btt, r.gap);
        }
    }
    Ok(())
}

fn bias_curve(a: BiasCurveArgs) -> anyhow::Result<()> {
    let rows = emit_bias_curves(&a.thetas, a.lo, a.hi, a.points).map_err(|e| UsageError(e.to_string()))?;
    write_bias_curve(&rows, open_output(&a.out)?)?;
    Ok(())
}
