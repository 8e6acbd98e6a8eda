//! `upl`: splits, training runs, threshold sweeps, bound reports and
//! evaluation from the command line.
//!
//! Exit codes: 0 success, 1 invalid input, 2 numerical divergence.

mod config;
mod experiment;

use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use upl_core::bounds::{pair_bound_report, BoundSettings};
use upl_core::data::{Masks, MASKS_FILE};
use upl_core::pipeline::{evaluate, Method, Model};
use upl_core::rng::{child, stream};
use upl_core::split::{make_imbalanced_split, SplitSpec, TrainCounts, ValTestRule};
use upl_core::{Result, UplError};

use config::{open_dataset, parse_list, parse_seeds, resolve_dataset, RunConfig};
use experiment::{run_all, run_seed, Appender, ResultRow, RESULT_COLUMNS};

#[derive(Debug, Parser)]
#[command(name = "upl", version, about = "Uncertainty-aware pseudo-labeling for imbalanced node classification")]
struct Cli {
    /// Base random seed.
    #[arg(long, global = true, default_value_t = 0)]
    seed: u64,
    /// Worker threads (default: all cores).
    #[arg(long, global = true)]
    threads: Option<usize>,
    /// Output file; each command documents its default.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    /// Directory that dataset names are resolved against.
    #[arg(long, global = true, env = "UPL_DATA_DIR")]
    data_dir: Option<PathBuf>,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Sample an imbalanced split and write masks.json.
    Split(SplitArgs),
    /// Train one method over several seeds and append rows to a results CSV.
    Run(RunArgs),
    /// Sweep one pseudo-labeling threshold over a grid.
    Sweep(SweepArgs),
    /// Evaluate the population-risk bound for a pair of classes.
    Bounds(BoundsArgs),
    /// Metrics of a saved model on one mask.
    Eval(EvalArgs),
}

#[derive(Debug, Args)]
struct SplitArgs {
    /// Dataset directory or name under the data directory.
    #[arg(long)]
    dataset: String,
    /// Training nodes per class, e.g. 20,20,20,20,2,2,2.
    #[arg(long, conflicts_with_all = ["base", "rho", "minority_classes"])]
    counts: Option<String>,
    /// Majority-class training count.
    #[arg(long, requires_all = ["rho", "minority_classes"])]
    base: Option<usize>,
    #[arg(long)]
    rho: Option<f64>,
    /// Number of (trailing) minority classes.
    #[arg(long)]
    minority_classes: Option<usize>,
    /// `half`, `dataset` or `fixed:VAL,TEST`.
    #[arg(long, default_value = "fixed:500,1000")]
    val_test: String,
}

#[derive(Debug, Args)]
struct Overrides {
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    dataset: Option<String>,
    #[arg(long)]
    eta_l: Option<f64>,
    #[arg(long)]
    eta_u: Option<f64>,
    #[arg(long)]
    alpha_q: Option<f64>,
    #[arg(long)]
    outer_iterations: Option<usize>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    patience: Option<usize>,
    #[arg(long)]
    t: Option<usize>,
    #[arg(long)]
    s_k: Option<usize>,
}

#[derive(Debug, Args)]
struct RunArgs {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Seeds as `0..9` (inclusive) or a list; defaults to --seed.
    #[arg(long)]
    seeds: Option<String>,
    /// Save each seed's model and masks here.
    #[arg(long)]
    checkpoint_dir: Option<PathBuf>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum SweepParam {
    EtaL,
    EtaU,
    AlphaQ,
}

impl SweepParam {
    fn name(self) -> &'static str {
        match self {
            SweepParam::EtaL => "eta_l",
            SweepParam::EtaU => "eta_u",
            SweepParam::AlphaQ => "alpha_q",
        }
    }

    fn default_grid(self) -> Vec<f64> {
        let steps = |start: f64, count: usize| -> Vec<f64> {
            (0..count).map(|n| ((start + 0.05 * n as f64) * 100.0).round() / 100.0).collect()
        };
        match self {
            SweepParam::EtaL => steps(0.25, 10),
            SweepParam::EtaU => steps(0.30, 15),
            SweepParam::AlphaQ => vec![0.7, 0.8, 0.9],
        }
    }
}

#[derive(Debug, Args)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum)]
    param: SweepParam,
    /// Comma-separated grid values (default: the standard grid for the parameter).
    #[arg(long)]
    grid: Option<String>,
    #[arg(long)]
    seeds: Option<String>,
    #[command(flatten)]
    overrides: Overrides,
}

#[derive(Debug, Args)]
struct BoundsArgs {
    #[arg(long)]
    dataset: String,
    /// Two class ids `a,b`; class `a` takes the positive sign.
    #[arg(long)]
    class_pair: String,
    #[arg(long, default_value_t = 1.0)]
    gamma: f64,
    #[arg(long, default_value_t = 0.1)]
    delta: f64,
    #[arg(long, default_value_t = 2)]
    depth: usize,
    #[arg(long)]
    feature_radius: Option<f64>,
    /// Per-layer Frobenius caps; required without --checkpoint.
    #[arg(long)]
    frobenius_caps: Option<String>,
    /// Empirical γ-margin risks of the two classes when no model is given.
    #[arg(long)]
    margin_risks: Option<String>,
    /// Model checkpoint written by `run --checkpoint-dir`.
    #[arg(long)]
    checkpoint: Option<PathBuf>,
    /// Mask file overriding the dataset's masks.json.
    #[arg(long)]
    masks: Option<PathBuf>,
    /// Skip row normalization of the features.
    #[arg(long)]
    raw_features: bool,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum MaskName {
    Train,
    Val,
    Test,
}

#[derive(Debug, Args)]
struct EvalArgs {
    #[arg(long)]
    dataset: String,
    #[arg(long)]
    checkpoint: PathBuf,
    #[arg(long)]
    masks: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "test")]
    mask: MaskName,
    #[arg(long)]
    raw_features: bool,
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(err) => {
            let _ = err.print();
            return if err.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    if let Some(threads) = cli.threads {
        if let Err(err) = rayon::ThreadPoolBuilder::new().num_threads(threads).build_global() {
            eprintln!("error: cannot configure {threads} threads: {err}");
            return ExitCode::from(1);
        }
    }
    let outcome = match &cli.command {
        Command::Split(args) => cmd_split(&cli, args),
        Command::Run(args) => cmd_run(&cli, args),
        Command::Sweep(args) => cmd_sweep(&cli, args),
        Command::Bounds(args) => cmd_bounds(&cli, args),
        Command::Eval(args) => cmd_eval(&cli, args),
    };
    match outcome {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            exit_code(&err)
        }
    }
}

fn exit_code(err: &UplError) -> ExitCode {
    if err.is_divergence() {
        ExitCode::from(2)
    } else {
        ExitCode::from(1)
    }
}

fn invalid(msg: impl Into<String>) -> UplError {
    UplError::InvalidInput(msg.into())
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent().filter(|p| !p.as_os_str().is_empty()) {
        std::fs::create_dir_all(parent).map_err(|source| UplError::Io {
            path: parent.to_path_buf(),
            source,
        })?;
    }
    std::fs::write(path, text).map_err(|source| UplError::Io {
        path: path.to_path_buf(),
        source,
    })
}

fn parse_val_test(spec: &str) -> Result<ValTestRule> {
    match spec {
        "half" => Ok(ValTestRule::HalfRemainder),
        "dataset" => Ok(ValTestRule::Dataset),
        other => {
            let sizes = other
                .strip_prefix("fixed:")
                .and_then(|rest| parse_list::<usize>(rest).ok())
                .filter(|v| v.len() == 2)
                .ok_or_else(|| invalid(format!("--val-test must be half, dataset or fixed:VAL,TEST, got {other:?}")))?;
            Ok(ValTestRule::Fixed {
                val: sizes[0],
                test: sizes[1],
            })
        }
    }
}

fn cmd_split(cli: &Cli, args: &SplitArgs) -> Result<ExitCode> {
    let dir = resolve_dataset(&args.dataset, cli.data_dir.as_deref());
    let dataset = open_dataset(&args.dataset, cli.data_dir.as_deref(), false)?;
    let train = match (&args.counts, args.base, args.rho, args.minority_classes) {
        (Some(counts), ..) => TrainCounts::PerClass(parse_list(counts).map_err(invalid)?),
        (None, Some(base), Some(rho), Some(minority_classes)) => TrainCounts::Imbalanced {
            base,
            rho,
            minority_classes,
        },
        _ => return Err(invalid("give --counts or all of --base, --rho, --minority-classes")),
    };
    let spec = SplitSpec {
        train,
        val_test: parse_val_test(&args.val_test)?,
        seed: cli.seed,
    };
    let split = make_imbalanced_split(&dataset, &spec, &mut child(cli.seed, stream::SPLIT))?;
    let path = cli.out.clone().unwrap_or_else(|| dir.join(MASKS_FILE));
    split.masks.write(&path)?;
    let counts = |m: &[bool]| m.iter().filter(|&&x| x).count();
    println!(
        "train counts {:?}  rho = {}  val {}  test {}  -> {}",
        split.train_counts,
        split.rho,
        counts(&split.masks.val),
        counts(&split.masks.test),
        path.display()
    );
    Ok(ExitCode::SUCCESS)
}

fn load_config(path: &Path, overrides: &Overrides) -> Result<RunConfig> {
    let mut config = RunConfig::read(path)?;
    if let Some(method) = &overrides.method {
        config.method = method.parse()?;
    }
    if let Some(dataset) = &overrides.dataset {
        config.dataset = dataset.clone();
    }
    let upl = &mut config.upl;
    if let Some(v) = overrides.eta_l {
        upl.eta_l = v;
    }
    if let Some(v) = overrides.eta_u {
        upl.eta_u = v;
    }
    if let Some(v) = overrides.alpha_q {
        upl.alpha_q = v;
    }
    if let Some(v) = overrides.outer_iterations {
        upl.outer_iterations = v;
    }
    if let Some(v) = overrides.epochs {
        upl.training.epochs = v;
    }
    if let Some(v) = overrides.patience {
        upl.training.patience = v;
    }
    if let Some(v) = overrides.t {
        upl.perturbation.t = v;
    }
    if let Some(v) = overrides.s_k {
        upl.perturbation.s_k = v;
    }
    config.validate()?;
    Ok(config)
}

fn seeds(cli: &Cli, spec: &Option<String>) -> Result<Vec<u64>> {
    match spec {
        Some(spec) => parse_seeds(spec).map_err(invalid),
        None => Ok(vec![cli.seed]),
    }
}

/// Reports per-job failures and folds them into an exit code: divergence
/// wins over other errors.
fn summarize<T>(outcomes: Vec<(String, Result<T>)>, mut on_ok: impl FnMut(T) -> Result<()>) -> Result<ExitCode> {
    let (mut diverged, mut failed) = (false, false);
    for (label, outcome) in outcomes {
        match outcome {
            Ok(value) => on_ok(value)?,
            Err(err) => {
                eprintln!("{label}: {err}");
                diverged |= err.is_divergence();
                failed |= !err.is_divergence();
            }
        }
    }
    Ok(if diverged {
        ExitCode::from(2)
    } else if failed {
        ExitCode::from(1)
    } else {
        ExitCode::SUCCESS
    })
}

fn save_checkpoint(dir: &Path, row: &ResultRow, model: &Model, masks: &Masks) -> Result<()> {
    let stem = format!("{}-{}-seed{}", row.dataset, row.method.name(), row.seed);
    let json = serde_json::to_string(model).expect("models always serialize");
    write_text(&dir.join(format!("{stem}.json")), &(json + "\n"))?;
    write_text(&dir.join(format!("{stem}.masks.json")), &masks.to_json())
}

fn cmd_run(cli: &Cli, args: &RunArgs) -> Result<ExitCode> {
    let config = load_config(&args.config, &args.overrides)?;
    let seeds = seeds(cli, &args.seeds)?;
    let dataset = open_dataset(&config.dataset, cli.data_dir.as_deref(), config.normalize_features)?;
    let results = cli.out.clone().unwrap_or_else(|| config.results.clone());
    let appender = Appender::open(&results, &RESULT_COLUMNS)?;
    let checkpoint_dir = args.checkpoint_dir.clone().or_else(|| config.checkpoint_dir.clone());

    let outcomes = run_all(&seeds, |&seed| {
        let outcome = run_seed(&dataset, config.method, &config.upl, config.split.as_ref(), seed);
        if let Ok((row, _)) = &outcome {
            log::info!(
                "{} {} seed {seed}: test bAcc {:.4}, macro-F1 {:.4}",
                row.dataset,
                row.method.name(),
                row.test_bacc,
                row.test_macro_f1
            );
        }
        outcome
    });
    let labelled = seeds.iter().map(|s| format!("seed {s}")).zip(outcomes).collect();
    summarize(labelled, |(row, model)| {
        if let Some(dir) = &checkpoint_dir {
            let (split_data, _) = experiment::prepare_split(&dataset, config.split.as_ref(), row.seed)?;
            save_checkpoint(dir, &row, &model, split_data.masks()?)?;
        }
        appender.append(&results, &row.record())
    })
}

fn cmd_sweep(cli: &Cli, args: &SweepArgs) -> Result<ExitCode> {
    let config = load_config(&args.config, &args.overrides)?;
    if config.method != Method::Upl {
        return Err(invalid("sweeps vary pseudo-labeling thresholds and need method upl"));
    }
    let grid = match &args.grid {
        Some(spec) => parse_list::<f64>(spec).map_err(invalid)?,
        None => args.param.default_grid(),
    };
    if grid.is_empty() {
        return Err(invalid("empty sweep grid"));
    }
    let seeds = seeds(cli, &args.seeds)?;
    let mut points = Vec::new();
    for &value in &grid {
        let mut upl = config.upl.clone();
        match args.param {
            SweepParam::EtaL => {
                upl.eta_l = value;
                upl.eta_u = (value + 0.3).min(1.0);
            }
            SweepParam::EtaU => upl.eta_u = value,
            SweepParam::AlphaQ => upl.alpha_q = value,
        }
        upl.validate()?;
        for &seed in &seeds {
            points.push((value, upl.clone(), seed));
        }
    }
    let dataset = open_dataset(&config.dataset, cli.data_dir.as_deref(), config.normalize_features)?;
    let path = cli.out.clone().unwrap_or_else(|| PathBuf::from("sweep.csv"));
    let mut header = vec!["param", "value"];
    header.extend(RESULT_COLUMNS);
    header.push("val_macro_f1");
    let appender = Appender::open(&path, &header)?;

    let outcomes = run_all(&points, |(value, upl, seed)| {
        run_seed(&dataset, Method::Upl, upl, config.split.as_ref(), *seed).map(|(row, _)| (*value, row))
    });
    let param = args.param.name();
    let labelled = points
        .iter()
        .map(|(value, _, seed)| format!("{param} = {value}, seed {seed}"))
        .zip(outcomes)
        .collect();
    summarize(labelled, |(value, row)| {
        let mut record = vec![param.to_string(), value.to_string()];
        record.extend(row.record());
        record.push(row.val_macro_f1.to_string());
        appender.append(&path, &record)
    })
}

fn load_checkpoint(path: &Path) -> Result<Model> {
    let text = std::fs::read_to_string(path).map_err(|source| UplError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    let model: Model = serde_json::from_str(&text).map_err(|source| UplError::Json {
        path: path.to_path_buf(),
        source,
    })?;
    model.params.validate()?;
    Ok(model)
}

fn dataset_with_masks(
    cli: &Cli,
    name: &str,
    masks: Option<&Path>,
    raw_features: bool,
) -> Result<upl_core::data::Dataset> {
    let dataset = open_dataset(name, cli.data_dir.as_deref(), !raw_features)?;
    match masks {
        Some(path) => {
            let masks = Masks::read(path, dataset.num_nodes())?;
            dataset.with_masks(masks)
        }
        None => Ok(dataset),
    }
}

fn emit_json(cli: &Cli, value: &impl serde::Serialize) -> Result<()> {
    let text = serde_json::to_string_pretty(value).expect("reports always serialize") + "\n";
    match &cli.out {
        Some(path) => write_text(path, &text),
        None => {
            print!("{text}");
            Ok(())
        }
    }
}

fn cmd_bounds(cli: &Cli, args: &BoundsArgs) -> Result<ExitCode> {
    let pair: Vec<usize> = parse_list(&args.class_pair).map_err(invalid)?;
    if pair.len() != 2 {
        return Err(invalid(format!("--class-pair needs two class ids, got {:?}", args.class_pair)));
    }
    let dataset = dataset_with_masks(cli, &args.dataset, args.masks.as_deref(), args.raw_features)?;
    let model = args.checkpoint.as_deref().map(load_checkpoint).transpose()?;
    let frobenius_caps = args
        .frobenius_caps
        .as_deref()
        .map(|s| parse_list::<f64>(s).map_err(invalid))
        .transpose()?;
    if model.is_none() && frobenius_caps.is_none() {
        return Err(invalid("--frobenius-caps is required when no --checkpoint is given"));
    }
    let margin_risks = match args.margin_risks.as_deref() {
        Some(s) => {
            let r: Vec<f64> = parse_list(s).map_err(invalid)?;
            if r.len() != 2 {
                return Err(invalid("--margin-risks needs two values"));
            }
            Some([r[0], r[1]])
        }
        None => None,
    };
    let settings = BoundSettings {
        gamma: args.gamma,
        delta: args.delta,
        depth: args.depth,
        feature_radius: args.feature_radius,
        frobenius_caps,
        margin_risks,
    };
    let report = pair_bound_report(&dataset, (pair[0], pair[1]), &settings, model.as_ref())?;
    if report.vacuous {
        log::warn!("bound total {:.4} exceeds 1", report.total);
    }
    emit_json(cli, &report)?;
    Ok(ExitCode::SUCCESS)
}

fn cmd_eval(cli: &Cli, args: &EvalArgs) -> Result<ExitCode> {
    let dataset = dataset_with_masks(cli, &args.dataset, args.masks.as_deref(), args.raw_features)?;
    let model = load_checkpoint(&args.checkpoint)?;
    let masks = dataset.masks()?;
    let mask = match args.mask {
        MaskName::Train => &masks.train,
        MaskName::Val => &masks.val,
        MaskName::Test => &masks.test,
    };
    let report = evaluate(&model, &dataset, mask)?;
    emit_json(cli, &report)?;
    Ok(ExitCode::SUCCESS)
}
