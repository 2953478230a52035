//! `apnea` command-line pipeline.

pub mod config;
pub mod manifest;
pub mod stages;

use std::ffi::OsString;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context};
use apnea_core::metrics::{confusion, roc_auc, scalar_metrics, threshold_scores, ConfusionMatrix, ScalarMetrics};
use clap::{Args, Parser, Subcommand};
use serde_json::Value;

pub use config::RunConfig;
pub use stages::Stage;

pub const EXIT_OK: i32 = 0;
pub const EXIT_USAGE: i32 = 1;
pub const EXIT_DATA: i32 = 2;

#[derive(Debug, Parser)]
#[command(name = "apnea", version, about = "EEG sleep-apnea detection pipeline")]
struct Cli {
    #[command(flatten)]
    global: GlobalArgs,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct GlobalArgs {
    /// Directory holding every stage's outputs.
    #[arg(long, global = true, env = "APNEA_WORKDIR")]
    workdir: Option<PathBuf>,
    /// JSON run configuration; omitted fields take their defaults.
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Top-level seed from which every stage seed is derived.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// EDF recording; repeat for several. Without any, the synthetic corpus is used.
    #[arg(long, global = true)]
    edf: Vec<PathBuf>,
    /// Event file for the EDF at the same position.
    #[arg(long, global = true)]
    events: Vec<PathBuf>,
    #[arg(long, global = true)]
    channel: Option<String>,
    #[arg(long, global = true)]
    epochs: Option<usize>,
    /// Override any config field, e.g. `--set train.batch_size=16`.
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    overrides: Vec<String>,
    /// More log output; repeat for debug.
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    /// Only errors on stderr.
    #[arg(short, long, global = true)]
    quiet: bool,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Generate a synthetic EDF and event file with known ground truth.
    Synth,
    /// Band-filter, recombine and standardize each recording.
    Preprocess,
    /// Cut labeled context windows and split them into train and validation sets.
    BuildDataset,
    /// Oversample the minority class of the training set and clean class borders.
    Balance,
    /// Train the network on the balanced training set.
    Train,
    /// Score the validation set and write the report.
    Evaluate,
    /// Compute metrics from confusion counts or a predictions file.
    Metrics(MetricsArgs),
    /// Every stage in order, starting with synth when no EDF is given.
    RunAll,
}

#[derive(Debug, Args)]
#[group(required = true, multiple = false)]
struct MetricsSource {
    /// Counts in the order tp,fp,fn,tn.
    #[arg(long, value_parser = parse_confusion, value_name = "TP,FP,FN,TN")]
    confusion: Option<ConfusionMatrix>,
    /// CSV with `label` and `probability` columns, such as evaluate's predictions.csv.
    #[arg(long)]
    predictions: Option<PathBuf>,
}

#[derive(Debug, Args)]
struct MetricsArgs {
    #[command(flatten)]
    source: MetricsSource,
    #[arg(long, default_value_t = 0.5)]
    threshold: f64,
    /// Print JSON instead of `name value` lines.
    #[arg(long)]
    json: bool,
}

fn parse_confusion(s: &str) -> Result<ConfusionMatrix, String> {
    let v: Vec<u64> = s
        .split(',')
        .map(|t| t.trim().parse::<u64>().map_err(|e| format!("{t:?}: {e}")))
        .collect::<Result<_, _>>()?;
    match v[..] {
        [tp, fp, fn_, tn] => Ok(ConfusionMatrix::new(tp, fp, fn_, tn)),
        _ => Err(format!("expected 4 counts, got {}", v.len())),
    }
}

enum Failure {
    Usage(String),
    Data(anyhow::Error),
}

impl From<anyhow::Error> for Failure {
    fn from(e: anyhow::Error) -> Self {
        Failure::Data(e)
    }
}

/// Entry point; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { EXIT_USAGE } else { EXIT_OK };
        }
    };
    init_logging(&cli.global);
    let name = command_name(&cli.command);
    match dispatch(&cli) {
        Ok(()) => EXIT_OK,
        Err(Failure::Usage(msg)) => {
            eprintln!("apnea {name}: {msg}");
            EXIT_USAGE
        }
        Err(Failure::Data(e)) => {
            eprintln!("apnea {name}: {e:#}");
            EXIT_DATA
        }
    }
}

fn init_logging(g: &GlobalArgs) {
    let level = match (g.quiet, g.verbose) {
        (true, _) => log::LevelFilter::Error,
        (false, 0) => log::LevelFilter::Warn,
        (false, 1) => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new()
        .filter_level(level)
        .parse_env("APNEA_LOG")
        .format_timestamp(None)
        .try_init();
}

fn command_name(c: &Command) -> &'static str {
    match c {
        Command::Synth => Stage::Synth.name(),
        Command::Preprocess => Stage::Preprocess.name(),
        Command::BuildDataset => Stage::BuildDataset.name(),
        Command::Balance => Stage::Balance.name(),
        Command::Train => Stage::Train.name(),
        Command::Evaluate => Stage::Evaluate.name(),
        Command::Metrics(_) => "metrics",
        Command::RunAll => "run-all",
    }
}

/// Defaults, then the config file, then flags.
fn resolve_config(g: &GlobalArgs) -> Result<(RunConfig, PathBuf), Failure> {
    let usage = Failure::Usage;
    let mut doc = match &g.config {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("reading {}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?
        }
        None => Value::Object(Default::default()),
    };
    let mut set = |path: &str, v: Value| config::set_path(&mut doc, path, v).map_err(usage);
    if let Some(s) = g.seed {
        set("seed", s.into())?;
    }
    if !g.edf.is_empty() {
        set("paths.edf", serde_json::to_value(&g.edf).expect("paths serialize"))?;
    }
    if !g.events.is_empty() {
        set("paths.events", serde_json::to_value(&g.events).expect("paths serialize"))?;
    }
    if let Some(c) = &g.channel {
        set("paths.channel", c.clone().into())?;
    }
    if let Some(e) = g.epochs {
        set("train.epochs", e.into())?;
    }
    for o in &g.overrides {
        config::apply_override(&mut doc, o).map_err(usage)?;
    }
    let cfg: RunConfig = serde_json::from_value(doc).map_err(|e| usage(format!("config: {e}")))?;
    cfg.validate().map_err(|e| usage(format!("invalid config: {e}")))?;
    let workdir = g
        .workdir
        .clone()
        .or_else(|| cfg.paths.workdir.clone())
        .unwrap_or_else(|| PathBuf::from("apnea-work"));
    Ok((cfg, workdir))
}

fn dispatch(cli: &Cli) -> Result<(), Failure> {
    let stage = match &cli.command {
        Command::Metrics(m) => return metrics_command(m),
        Command::RunAll => None,
        Command::Synth => Some(Stage::Synth),
        Command::Preprocess => Some(Stage::Preprocess),
        Command::BuildDataset => Some(Stage::BuildDataset),
        Command::Balance => Some(Stage::Balance),
        Command::Train => Some(Stage::Train),
        Command::Evaluate => Some(Stage::Evaluate),
    };
    let (cfg, workdir) = resolve_config(&cli.global)?;
    match stage {
        Some(s) => {
            if s == Stage::Synth && !cfg.uses_synth() {
                log::warn!("EDF paths are configured; later stages will ignore the synthetic corpus");
            }
            println!("{}", run_stage(s, &cfg, &workdir)?);
        }
        None => run_all(&cfg, &workdir)?,
    }
    Ok(())
}

fn run_stage(stage: Stage, cfg: &RunConfig, workdir: &Path) -> anyhow::Result<String> {
    let t0 = Instant::now();
    let line = stage.run(cfg, workdir).with_context(|| format!("stage {}", stage.name()))?;
    log::info!("{} finished in {:.1} s", stage.name(), t0.elapsed().as_secs_f64());
    Ok(line)
}

/// The stages `run-all` executes for this config.
pub fn pipeline(cfg: &RunConfig) -> Vec<Stage> {
    Stage::PIPELINE.into_iter().filter(|&s| s != Stage::Synth || cfg.uses_synth()).collect()
}

/// Runs the whole pipeline in process; the library form of `run-all`.
pub fn run_pipeline(cfg: &RunConfig, workdir: &Path) -> anyhow::Result<ScalarMetrics> {
    for s in pipeline(cfg) {
        if s == Stage::Evaluate {
            break;
        }
        let line = run_stage(s, cfg, workdir)?;
        log::info!("{line}");
    }
    let dir = workdir.join(Stage::Evaluate.dir());
    fs::create_dir_all(&dir)?;
    let (line, metrics) = stages::evaluate(cfg, workdir, &dir).context("stage evaluate")?;
    log::info!("{line}");
    Ok(metrics)
}

fn run_all(cfg: &RunConfig, workdir: &Path) -> anyhow::Result<()> {
    let t0 = Instant::now();
    for s in pipeline(cfg) {
        println!("{}", run_stage(s, cfg, workdir)?);
    }
    println!(
        "run-all: report in {} after {:.1} s",
        workdir.join(Stage::Evaluate.dir()).join("report.json").display(),
        t0.elapsed().as_secs_f64()
    );
    Ok(())
}

fn read_predictions(path: &Path) -> anyhow::Result<(Vec<u8>, Vec<f64>)> {
    let text = fs::read_to_string(path).with_context(|| format!("reading {}", path.display()))?;
    let mut lines = text.lines().filter(|l| !l.trim().is_empty());
    let header: Vec<&str> = lines.next().context("empty predictions file")?.split(',').map(str::trim).collect();
    let col = |names: &[&str]| header.iter().position(|h| names.contains(h));
    let (Some(li), Some(pi)) = (col(&["label"]), col(&["probability", "score"])) else {
        bail!("{}: need `label` and `probability` columns", path.display());
    };
    let (mut labels, mut scores) = (Vec::new(), Vec::new());
    for (n, line) in lines.enumerate() {
        let f: Vec<&str> = line.split(',').map(str::trim).collect();
        let get = |i: usize| f.get(i).copied().with_context(|| format!("row {}: too few fields", n + 1));
        labels.push(get(li)?.parse().with_context(|| format!("row {}: label", n + 1))?);
        scores.push(get(pi)?.parse().with_context(|| format!("row {}: probability", n + 1))?);
    }
    Ok((labels, scores))
}

fn metrics_command(args: &MetricsArgs) -> Result<(), Failure> {
    if !(0.0..=1.0).contains(&args.threshold) {
        return Err(Failure::Usage(format!("threshold {} outside [0, 1]", args.threshold)));
    }
    let (cm, auc) = match (&args.source.confusion, &args.source.predictions) {
        (Some(cm), _) => (*cm, None),
        (None, Some(path)) => {
            let (labels, scores) = read_predictions(path)?;
            let cm = confusion(&labels, &threshold_scores(&scores, args.threshold)).map_err(anyhow::Error::from)?;
            (cm, roc_auc(&labels, &scores).ok().map(|r| r.auc))
        }
        (None, None) => unreachable!("clap requires one source"),
    };
    if cm.total() == 0 {
        return Err(Failure::Data(anyhow::anyhow!("confusion matrix is empty")));
    }
    let m = scalar_metrics(&cm);
    if args.json {
        let v = serde_json::json!({ "confusion_matrix": cm, "metrics": m, "auc": auc });
        println!("{}", serde_json::to_string_pretty(&v).expect("json"));
        return Ok(());
    }
    print!("{}", format_metrics(&cm, &m, auc));
    Ok(())
}

/// `name value` lines, four decimals.
pub fn format_metrics(cm: &ConfusionMatrix, m: &ScalarMetrics, auc: Option<f64>) -> String {
    let mut s = format!("tp {}\nfp {}\nfn {}\ntn {}\n", cm.tp, cm.fp, cm.fn_, cm.tn);
    for (k, v) in [
        ("accuracy", m.accuracy),
        ("precision", m.precision),
        ("recall", m.recall),
        ("specificity", m.specificity),
        ("f1", m.f1),
        ("mcc", m.mcc),
        ("kappa", m.kappa),
    ] {
        s += &format!("{k} {v:.4}\n");
    }
    if let Some(a) = auc {
        s += &format!("auc {a:.4}\n");
    }
    if !m.degenerate.is_empty() {
        s += &format!("degenerate {}\n", m.degenerate.join(","));
    }
    s
}
