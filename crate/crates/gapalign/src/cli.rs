//! Command-line entry points: dataset synthesis, training, probing,
//! evaluation, and curve reporting.
//!
//! Every command refuses to overwrite existing outputs unless `--force` is
//! given, echoes its effective configuration into `run_meta.json`, and exits
//! with a class-specific code on failure:
//!
//! | code | class                                  |
//! |------|----------------------------------------|
//! | 0    | completed                              |
//! | 1    | internal/unexpected error              |
//! | 2    | flag or config validation error        |
//! | 3    | dataset load/validation error          |
//! | 4    | output exists and `--force` not given  |
//! | 5    | degenerate monitor baseline            |
//! | 6    | missing run artifact                   |
//! | 7    | training or probe runtime error        |

use crate::dualspace::{
    self, results_csv, summary_csv, EvalMode, FusionModel, GraphClassifier, SeedResult,
};
use crate::encoder;
use crate::graphdata::{self, load_graph, save_graph, DataError, SbmConfig};
use crate::linalg::Mat;
use crate::monitor::MonitorError;
use crate::trainer::{self, Schedule, TrainConfig, TrainError};
use clap::{Args, Parser, Subcommand};
use sha2::{Digest, Sha256};
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),
    #[error(transparent)]
    Data(#[from] DataError),
    #[error("output {0} already exists; pass --force to overwrite")]
    OutputExists(PathBuf),
    #[error("degenerate monitor baseline: {0}")]
    DegenerateBaseline(String),
    #[error("missing artifact: expected {0}")]
    MissingArtifact(PathBuf),
    #[error("runtime error: {0}")]
    Runtime(String),
    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            CliError::Data(_) => 3,
            CliError::OutputExists(_) => 4,
            CliError::DegenerateBaseline(_) => 5,
            CliError::MissingArtifact(_) => 6,
            CliError::Runtime(_) => 7,
            CliError::Io { .. } => 1,
        }
    }
}

impl From<TrainError> for CliError {
    fn from(e: TrainError) -> Self {
        match e {
            TrainError::Monitor(MonitorError::DegenerateBaseline(b)) => {
                CliError::DegenerateBaseline(format!("sim_neg_base = {b}"))
            }
            TrainError::Monitor(MonitorError::EmptyValidation) => {
                CliError::Usage("validation split is empty".into())
            }
            TrainError::BadConfig(msg) => CliError::Usage(msg),
            other => CliError::Runtime(other.to_string()),
        }
    }
}

#[derive(Debug, Parser)]
#[command(
    name = "gapalign",
    about = "Gap-aware graph-text alignment: synthesize datasets, train with gap monitoring, probe, evaluate, report"
)]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Generate a stochastic-block-model dataset directory
    Synth(SynthArgs),
    /// Train the alignment encoder and evaluate it
    Train(TrainArgs),
    /// Evaluate saved encoder parameters on a dataset split
    Eval(EvalArgs),
    /// Train the graph-space linear probe on frozen encoder outputs
    Probe(ProbeArgs),
    /// Summarize run curves into plot-ready CSV
    Report(ReportArgs),
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    /// Number of classes
    #[arg(long, default_value_t = 3)]
    pub classes: usize,
    /// Nodes per class
    #[arg(long = "per-class", default_value_t = 100)]
    pub per_class: usize,
    /// Within-class edge probability
    #[arg(long = "p-intra", default_value_t = 0.8)]
    pub p_intra: f64,
    /// Cross-class edge probability
    #[arg(long = "p-inter", default_value_t = 0.05)]
    pub p_inter: f64,
    /// Feature noise sigma
    #[arg(long, default_value_t = 0.3)]
    pub noise: f64,
    /// Pairwise centroid separation
    #[arg(long, default_value_t = 2.0)]
    pub sep: f64,
    /// Embedding dimension; defaults to the class count
    #[arg(long)]
    pub dim: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output dataset directory
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args, Clone)]
pub struct TrainArgs {
    /// Dataset directory
    #[arg(long)]
    pub data: PathBuf,
    /// Output run directory
    #[arg(long)]
    pub out: PathBuf,
    /// Labeled nodes per class; omit for zero-shot
    #[arg(long)]
    pub shots: Option<usize>,
    /// Single-run seed (ignored when --seeds is given)
    #[arg(long)]
    pub seed: Option<u64>,
    /// Comma-separated seed sweep, e.g. --seeds 0,1,2,3,4
    #[arg(long, value_delimiter = ',')]
    pub seeds: Option<Vec<u64>>,
    #[arg(long)]
    pub epochs: Option<usize>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub tau: Option<f64>,
    /// Fusion weight for the evaluation stage
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Threshold preset: citation (theta 0.10) or social (theta 0.12)
    #[arg(long)]
    pub profile: Option<String>,
    /// Explicit threshold; overrides --profile
    #[arg(long)]
    pub theta: Option<f64>,
    #[arg(long = "ema-decay")]
    pub ema_decay: Option<f64>,
    /// Disable the early-stopping monitor
    #[arg(long = "no-monitor")]
    pub no_monitor: bool,
    /// Weight sim_pos by node degree
    #[arg(long = "degree-weights")]
    pub degree_weights: bool,
    #[arg(long = "val-frac")]
    pub val_frac: Option<f64>,
    #[arg(long = "d-hidden")]
    pub d_hidden: Option<usize>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long = "probe-iters")]
    pub probe_iters: Option<usize>,
    #[arg(long = "probe-lr")]
    pub probe_lr: Option<f64>,
    /// JSON file whose keys mirror the long flag names; flags override it
    #[arg(long)]
    pub config: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory containing params.json
    #[arg(long)]
    pub run: PathBuf,
    /// zero_shot | fused | both
    #[arg(long, default_value = "both")]
    pub mode: String,
    #[arg(long)]
    pub shots: Option<usize>,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "val-frac", default_value_t = 0.2)]
    pub val_frac: f64,
    #[arg(long)]
    pub lambda: Option<f64>,
    /// Probe checkpoint; defaults to probe.json inside the run directory
    #[arg(long)]
    pub probe: Option<PathBuf>,
    /// Also write the results CSV here
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ProbeArgs {
    #[arg(long)]
    pub data: PathBuf,
    /// Run directory containing params.json; probe.json is written next to it
    #[arg(long)]
    pub run: PathBuf,
    /// Labeled nodes per class for the probe training set
    #[arg(long)]
    pub shots: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    #[arg(long = "val-frac", default_value_t = 0.2)]
    pub val_frac: f64,
    #[arg(long, default_value_t = 500)]
    pub iters: usize,
    #[arg(long, default_value_t = 0.5)]
    pub lr: f64,
    #[arg(long)]
    pub force: bool,
}

#[derive(Debug, Args)]
pub struct ReportArgs {
    /// Run directory containing curves.csv
    #[arg(long)]
    pub run: PathBuf,
    /// Compare against a second run: adds per-epoch gap difference
    #[arg(long, num_args = 2, value_names = ["A", "B"])]
    pub compare: Option<Vec<PathBuf>>,
    /// Output CSV path; defaults to report.csv inside the run directory
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub force: bool,
}

pub fn run(cli: Cli) -> Result<(), CliError> {
    match cli.command {
        Command::Synth(args) => cmd_synth(&args),
        Command::Train(args) => cmd_train(&args),
        Command::Eval(args) => cmd_eval(&args),
        Command::Probe(args) => cmd_probe(&args),
        Command::Report(args) => cmd_report(&args),
    }
}

fn write_text(path: &Path, contents: &str) -> Result<(), CliError> {
    fs::write(path, contents).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })
}

fn refuse_overwrite(path: &Path, force: bool) -> Result<(), CliError> {
    if force {
        return Ok(());
    }
    if path.is_file() {
        return Err(CliError::OutputExists(path.to_path_buf()));
    }
    if path.is_dir() {
        let non_empty = fs::read_dir(path)
            .map(|mut it| it.next().is_some())
            .unwrap_or(false);
        if non_empty {
            return Err(CliError::OutputExists(path.to_path_buf()));
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// synth
// ---------------------------------------------------------------------------

pub fn cmd_synth(args: &SynthArgs) -> Result<(), CliError> {
    let cfg = SbmConfig {
        nodes_per_class: args.per_class,
        n_classes: args.classes,
        p_intra: args.p_intra,
        p_inter: args.p_inter,
        feature_noise: args.noise,
        proto_separation: args.sep,
        dim: args.dim,
        seed: args.seed,
    };
    cfg.validate().map_err(|e| CliError::Usage(e.to_string()))?;
    refuse_overwrite(&args.out, args.force)?;
    let g = graphdata::synth_sbm(&cfg)?;
    save_graph(&g, &args.out)?;
    println!(
        "wrote dataset: {} nodes, {} edges, {} classes -> {}",
        g.n_nodes,
        g.edges.len(),
        g.n_classes,
        args.out.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// train
// ---------------------------------------------------------------------------

/// Everything `train` needs after merging flags, config file, and defaults.
#[derive(Debug, Clone)]
struct EffectiveTrain {
    train: TrainConfig,
    shots: Option<usize>,
    val_frac: f64,
    lambda: f64,
    probe_iters: usize,
    probe_lr: f64,
    profile: Option<String>,
}

impl EffectiveTrain {
    fn to_json(&self) -> serde_json::Value {
        serde_json::json!({
            "lr": self.train.lr,
            "epochs": self.train.epochs,
            "batch": self.train.batch,
            "tau": self.train.tau,
            "theta": self.train.theta,
            "ema_decay": self.train.ema_decay,
            "monitor": self.train.monitor_enabled,
            "seed": self.train.seed,
            "schedule": "cosine",
            "d_hidden": self.train.d_hidden,
            "degree_weights": self.train.degree_weighted,
            "weight_decay": self.train.weight_decay,
            "shots": self.shots,
            "val_frac": self.val_frac,
            "lambda": self.lambda,
            "probe_iters": self.probe_iters,
            "probe_lr": self.probe_lr,
            "profile": self.profile,
        })
    }
}

fn config_file_values(path: &Path) -> Result<serde_json::Map<String, serde_json::Value>, CliError> {
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Usage(format!("{}: {e}", path.display())))?;
    let obj = v
        .as_object()
        .ok_or_else(|| CliError::Usage(format!("{}: expected a JSON object", path.display())))?;
    // flag names use '-', but accept '_' spellings too
    Ok(obj
        .iter()
        .map(|(k, v)| (k.replace('-', "_"), v.clone()))
        .collect())
}

fn merge_train_args(args: &TrainArgs) -> Result<EffectiveTrain, CliError> {
    let file = match &args.config {
        Some(p) => config_file_values(p)?,
        None => serde_json::Map::new(),
    };
    let f_f64 = |key: &str| -> Result<Option<f64>, CliError> {
        match file.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_f64()
                .map(Some)
                .ok_or_else(|| CliError::Usage(format!("config key {key}: expected a number"))),
        }
    };
    let f_usize = |key: &str| -> Result<Option<usize>, CliError> {
        match file.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_u64()
                .map(|x| Some(x as usize))
                .ok_or_else(|| CliError::Usage(format!("config key {key}: expected an integer"))),
        }
    };
    let f_bool = |key: &str| -> Result<Option<bool>, CliError> {
        match file.get(key) {
            None => Ok(None),
            Some(v) => v
                .as_bool()
                .map(Some)
                .ok_or_else(|| CliError::Usage(format!("config key {key}: expected a bool"))),
        }
    };
    let f_str = |key: &str| -> Option<String> {
        file.get(key).and_then(|v| v.as_str()).map(|s| s.to_string())
    };

    let profile = args.profile.clone().or_else(|| f_str("profile"));
    let profile_theta = match profile.as_deref() {
        None => None,
        Some("citation") => Some(0.10),
        Some("social") => Some(0.12),
        Some(other) => {
            return Err(CliError::Usage(format!(
                "unknown profile {other:?}; expected citation or social"
            )))
        }
    };
    let explicit_theta = match args.theta {
        Some(t) => Some(t),
        None => f_f64("theta")?,
    };
    if explicit_theta.is_some() && profile_theta.is_some() {
        eprintln!("notice: --theta overrides --profile");
    }
    let theta = explicit_theta.or(profile_theta).unwrap_or(0.10);

    let defaults = TrainConfig::default();
    let train = TrainConfig {
        lr: args.lr.or(f_f64("lr")?).unwrap_or(defaults.lr),
        epochs: args.epochs.or(f_usize("epochs")?).unwrap_or(defaults.epochs),
        batch: args.batch.or(f_usize("batch")?).unwrap_or(defaults.batch),
        tau: args.tau.or(f_f64("tau")?).unwrap_or(defaults.tau),
        theta,
        ema_decay: args
            .ema_decay
            .or(f_f64("ema_decay")?)
            .unwrap_or(defaults.ema_decay),
        monitor_enabled: if args.no_monitor {
            false
        } else {
            f_bool("monitor")?.unwrap_or(true)
        },
        seed: args.seed.unwrap_or(0),
        schedule: Schedule::Cosine,
        d_hidden: args
            .d_hidden
            .or(f_usize("d_hidden")?)
            .unwrap_or(defaults.d_hidden),
        degree_weighted: args.degree_weights || f_bool("degree_weights")?.unwrap_or(false),
        weight_decay: f_f64("weight_decay")?.unwrap_or(defaults.weight_decay),
    };
    Ok(EffectiveTrain {
        train,
        shots: args.shots.or(f_usize("shots")?),
        val_frac: args.val_frac.or(f_f64("val_frac")?).unwrap_or(0.2),
        lambda: args.lambda.or(f_f64("lambda")?).unwrap_or(0.8),
        probe_iters: args.probe_iters.or(f_usize("probe_iters")?).unwrap_or(500),
        probe_lr: args.probe_lr.or(f_f64("probe_lr")?).unwrap_or(0.5),
        profile,
    })
}

fn sha256_hex(bytes: &[u8]) -> String {
    let mut h = Sha256::new();
    h.update(bytes);
    hex::encode(h.finalize())
}

/// Canonical hash of a JSON value: objects serialize with sorted keys, so the
/// hash is stable under key reordering in config files.
pub fn config_hash(value: &serde_json::Value) -> String {
    fn canonical(v: &serde_json::Value, out: &mut String) {
        match v {
            serde_json::Value::Object(map) => {
                let mut keys: Vec<&String> = map.keys().collect();
                keys.sort();
                out.push('{');
                for (i, k) in keys.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    let _ = write!(out, "{:?}:", k);
                    canonical(&map[*k], out);
                }
                out.push('}');
            }
            serde_json::Value::Array(items) => {
                out.push('[');
                for (i, item) in items.iter().enumerate() {
                    if i > 0 {
                        out.push(',');
                    }
                    canonical(item, out);
                }
                out.push(']');
            }
            other => {
                let _ = write!(out, "{other}");
            }
        }
    }
    let mut s = String::new();
    canonical(value, &mut s);
    sha256_hex(s.as_bytes())
}

/// Content hash over the four data files of a dataset directory.
pub fn dataset_fingerprint(dir: &Path) -> Result<String, CliError> {
    let mut h = Sha256::new();
    for name in ["edges.tsv", "features.csv", "labels.csv", "text_protos.csv"] {
        let path = dir.join(name);
        let bytes = fs::read(&path).map_err(|source| CliError::Io {
            path: path.display().to_string(),
            source,
        })?;
        h.update(name.as_bytes());
        h.update((bytes.len() as u64).to_le_bytes());
        h.update(&bytes);
    }
    Ok(hex::encode(h.finalize()))
}

fn unix_now() -> u64 {
    std::time::SystemTime::now()
        .duration_since(std::time::UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

#[allow(clippy::too_many_arguments)]
fn write_manifest(
    dir: &Path,
    effective: &EffectiveTrain,
    seeds: &[u64],
    data_dir: &Path,
    artifacts: &[&str],
    stopped_at: Option<usize>,
    final_delta: Option<f64>,
    wall_secs: f64,
) -> Result<(), CliError> {
    let cfg_json = effective.to_json();
    let manifest = serde_json::json!({
        "command_line": std::env::args().collect::<Vec<String>>(),
        "config": cfg_json,
        "config_hash": config_hash(&cfg_json),
        "seeds": seeds,
        "dataset": data_dir.display().to_string(),
        "dataset_fingerprint": dataset_fingerprint(data_dir)?,
        "artifacts": artifacts,
        "stopped_at": stopped_at,
        "final_delta": final_delta,
        "wall_time_secs": wall_secs,
        "created_unix": unix_now(),
    });
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    write_text(&dir.join("run_meta.json"), &text)
}

fn probe_json(clf: &GraphClassifier, iters: usize, lr: f64) -> String {
    let fmt = |x: f64| format!("{x:.16e}");
    let w: Vec<String> = clf.weights.iter().map(|&x| fmt(x)).collect();
    let b: Vec<String> = clf.bias.iter().map(|&x| fmt(x)).collect();
    format!(
        "{{\n  \"d\": {},\n  \"n_classes\": {},\n  \"iters\": {},\n  \"lr\": {},\n  \"weights\": [{}],\n  \"bias\": [{}]\n}}\n",
        clf.weights.nrows(),
        clf.weights.ncols(),
        iters,
        lr,
        w.join(","),
        b.join(",")
    )
}

fn load_probe(path: &Path) -> Result<GraphClassifier, CliError> {
    if !path.exists() {
        return Err(CliError::MissingArtifact(path.to_path_buf()));
    }
    let text = fs::read_to_string(path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let v: serde_json::Value = serde_json::from_str(&text)
        .map_err(|e| CliError::Runtime(format!("{}: {e}", path.display())))?;
    let d = v["d"].as_u64().ok_or_else(|| CliError::Runtime("probe.json: missing d".into()))? as usize;
    let c = v["n_classes"]
        .as_u64()
        .ok_or_else(|| CliError::Runtime("probe.json: missing n_classes".into()))? as usize;
    let weights: Option<Vec<f64>> = v["weights"]
        .as_array()
        .map(|a| a.iter().filter_map(|x| x.as_f64()).collect());
    let bias: Option<Vec<f64>> = v["bias"]
        .as_array()
        .map(|a| a.iter().filter_map(|x| x.as_f64()).collect());
    match (weights, bias) {
        (Some(w), Some(b)) if w.len() == d * c && b.len() == c => Ok(GraphClassifier {
            weights: Mat::from_shape_vec((d, c), w)
                .map_err(|e| CliError::Runtime(e.to_string()))?,
            bias: b,
        }),
        _ => Err(CliError::Runtime("probe.json: malformed arrays".into())),
    }
}

fn select_rows(m: &Mat, ids: &[usize]) -> Mat {
    let mut out = Mat::zeros((ids.len(), m.ncols()));
    for (r, &i) in ids.iter().enumerate() {
        for k in 0..m.ncols() {
            out[[r, k]] = m[[i, k]];
        }
    }
    out
}

fn dataset_name(data: &Path) -> String {
    data.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| "dataset".into())
}

/// Trains one seed into `dir`, evaluates, and returns the result rows.
fn train_one(
    g: &graphdata::TagGraph,
    effective: &EffectiveTrain,
    seed: u64,
    dir: &Path,
    data_dir: &Path,
    dataset: &str,
) -> Result<Vec<SeedResult>, CliError> {
    let started = std::time::Instant::now();
    fs::create_dir_all(dir).map_err(|source| CliError::Io {
        path: dir.display().to_string(),
        source,
    })?;
    let split = graphdata::make_split(g, effective.shots, effective.val_frac, seed)?;
    let cfg = TrainConfig {
        seed,
        ..effective.train.clone()
    };
    let artifacts = trainer::run_training(g, &split, &cfg)?;

    write_text(
        &dir.join("curves.csv"),
        &trainer::curves_to_csv(&artifacts.curves),
    )?;
    write_text(
        &dir.join("curves.jsonl"),
        &trainer::curves_to_jsonl(&artifacts.curves),
    )?;
    encoder::save_params(&artifacts.final_params, &dir.join("params.json"))
        .map_err(|e| CliError::Runtime(e.to_string()))?;

    // evaluate the final encoder on the held-out test split
    let adj = encoder::normalize_adjacency(g);
    let h = encoder::encode(&artifacts.final_params, &adj, &g.features)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let h_test = select_rows(&h, &split.test_ids);
    let y_test: Vec<usize> = split.test_ids.iter().map(|&i| g.labels[i]).collect();

    let mut rows = Vec::new();
    match effective.shots {
        None => {
            let model = FusionModel {
                text_protos: g.text_protos.clone(),
                classifier: GraphClassifier::zeros(g.dim, g.n_classes),
                lambda: effective.lambda,
            };
            let eval = dualspace::evaluate(&model, &h_test, &y_test, EvalMode::ZeroShot)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            rows.push(SeedResult {
                dataset: dataset.to_string(),
                mode: EvalMode::ZeroShot,
                seed,
                shots: None,
                accuracy: eval.accuracy,
            });
        }
        Some(shots) => {
            let h_train = select_rows(&h, &split.train_ids);
            let y_train: Vec<usize> = split.train_ids.iter().map(|&i| g.labels[i]).collect();
            let clf = dualspace::train_graph_classifier(
                &h_train,
                &y_train,
                g.n_classes,
                effective.probe_iters,
                effective.probe_lr,
            )
            .map_err(|e| CliError::Runtime(e.to_string()))?;
            write_text(
                &dir.join("probe.json"),
                &probe_json(&clf, effective.probe_iters, effective.probe_lr),
            )?;
            let model = FusionModel {
                text_protos: g.text_protos.clone(),
                classifier: clf,
                lambda: effective.lambda,
            };
            let eval = dualspace::evaluate(&model, &h_test, &y_test, EvalMode::Fused)
                .map_err(|e| CliError::Runtime(e.to_string()))?;
            rows.push(SeedResult {
                dataset: dataset.to_string(),
                mode: EvalMode::Fused,
                seed,
                shots: Some(shots),
                accuracy: eval.accuracy,
            });
        }
    }

    write_text(&dir.join("results.csv"), &results_csv(&rows))?;
    let final_delta = artifacts.curves.last().and_then(|r| r.delta);
    write_manifest(
        dir,
        effective,
        &[seed],
        data_dir,
        &["curves.csv", "curves.jsonl", "params.json", "results.csv"],
        artifacts.stopped_at,
        final_delta,
        started.elapsed().as_secs_f64(),
    )?;

    match artifacts.stopped_at {
        Some(e) => println!(
            "seed {seed}: stopped_at={e} accuracy={:.4}",
            rows[0].accuracy
        ),
        None => println!(
            "seed {seed}: ran {} epochs, accuracy={:.4}",
            artifacts.curves.len(),
            rows[0].accuracy
        ),
    }
    Ok(rows)
}

pub fn cmd_train(args: &TrainArgs) -> Result<(), CliError> {
    let effective = merge_train_args(args)?;
    effective
        .train
        .validate()
        .map_err(|e| CliError::Usage(e.to_string()))?;
    if !(effective.val_frac > 0.0 && effective.val_frac < 1.0) {
        return Err(CliError::Usage(format!(
            "val_frac={} not in (0,1)",
            effective.val_frac
        )));
    }
    refuse_overwrite(&args.out, args.force)?;
    let g = load_graph(&args.data)?;
    let dataset = dataset_name(&args.data);
    let started = std::time::Instant::now();

    match args.seeds.as_deref() {
        None | Some([]) => {
            let seed = args.seed.unwrap_or(0);
            train_one(&g, &effective, seed, &args.out, &args.data, &dataset)?;
        }
        Some([seed]) => {
            train_one(&g, &effective, *seed, &args.out, &args.data, &dataset)?;
        }
        Some(seeds) => {
            fs::create_dir_all(&args.out).map_err(|source| CliError::Io {
                path: args.out.display().to_string(),
                source,
            })?;
            let mut all_rows = Vec::new();
            for &seed in seeds {
                let sub = args.out.join(format!("seed_{seed}"));
                let rows = train_one(&g, &effective, seed, &sub, &args.data, &dataset)?;
                all_rows.extend(rows);
            }
            write_text(&args.out.join("results.csv"), &results_csv(&all_rows))?;
            // one summary row per mode present
            let mut summaries = Vec::new();
            for mode in [EvalMode::ZeroShot, EvalMode::Fused] {
                let accs: Vec<f64> = all_rows
                    .iter()
                    .filter(|r| r.mode == mode)
                    .map(|r| r.accuracy)
                    .collect();
                if accs.len() >= 2 {
                    let (mean, std) = dualspace::mean_std(&accs);
                    summaries.push(dualspace::SummaryRow {
                        dataset: dataset.clone(),
                        mode,
                        shots: effective.shots,
                        mean,
                        std,
                        n_seeds: accs.len(),
                    });
                }
            }
            write_text(&args.out.join("summary.csv"), &summary_csv(&summaries))?;
            write_manifest(
                &args.out,
                &effective,
                seeds,
                &args.data,
                &["results.csv", "summary.csv"],
                None,
                None,
                started.elapsed().as_secs_f64(),
            )?;
            for s in &summaries {
                println!(
                    "summary: mode={} mean={:.4} std={:.4} over {} seeds",
                    s.mode.as_str(),
                    s.mean,
                    s.std,
                    s.n_seeds
                );
            }
        }
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// probe
// ---------------------------------------------------------------------------

pub fn cmd_probe(args: &ProbeArgs) -> Result<(), CliError> {
    if args.shots == 0 {
        return Err(CliError::Usage("--shots must be >= 1".into()));
    }
    let params_path = args.run.join("params.json");
    if !params_path.exists() {
        return Err(CliError::MissingArtifact(params_path));
    }
    let out_path = args.run.join("probe.json");
    if out_path.exists() && !args.force {
        return Err(CliError::OutputExists(out_path));
    }
    let g = load_graph(&args.data)?;
    let params =
        encoder::load_params(&params_path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let split = graphdata::make_split(&g, Some(args.shots), args.val_frac, args.seed)?;
    let adj = encoder::normalize_adjacency(&g);
    let h = encoder::encode(&params, &adj, &g.features)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let h_train = select_rows(&h, &split.train_ids);
    let y_train: Vec<usize> = split.train_ids.iter().map(|&i| g.labels[i]).collect();
    let clf =
        dualspace::train_graph_classifier(&h_train, &y_train, g.n_classes, args.iters, args.lr)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
    write_text(&out_path, &probe_json(&clf, args.iters, args.lr))?;
    println!(
        "trained probe on {} nodes -> {}",
        split.train_ids.len(),
        out_path.display()
    );
    Ok(())
}

// ---------------------------------------------------------------------------
// eval
// ---------------------------------------------------------------------------

pub fn cmd_eval(args: &EvalArgs) -> Result<(), CliError> {
    let modes: Vec<EvalMode> = match args.mode.as_str() {
        "zero_shot" => vec![EvalMode::ZeroShot],
        "fused" => vec![EvalMode::Fused],
        "both" => vec![EvalMode::ZeroShot, EvalMode::Fused],
        other => {
            return Err(CliError::Usage(format!(
                "unknown mode {other:?}; expected zero_shot, fused, or both"
            )))
        }
    };
    let params_path = args.run.join("params.json");
    if !params_path.exists() {
        return Err(CliError::MissingArtifact(params_path));
    }
    let g = load_graph(&args.data)?;
    let params =
        encoder::load_params(&params_path).map_err(|e| CliError::Runtime(e.to_string()))?;
    let split = graphdata::make_split(&g, args.shots, args.val_frac, args.seed)?;
    let adj = encoder::normalize_adjacency(&g);
    let h = encoder::encode(&params, &adj, &g.features)
        .map_err(|e| CliError::Runtime(e.to_string()))?;
    let h_test = select_rows(&h, &split.test_ids);
    let y_test: Vec<usize> = split.test_ids.iter().map(|&i| g.labels[i]).collect();
    let dataset = dataset_name(&args.data);
    let lambda = args.lambda.unwrap_or(0.8);

    let mut rows = Vec::new();
    for mode in modes {
        let classifier = match mode {
            EvalMode::ZeroShot => GraphClassifier::zeros(g.dim, g.n_classes),
            EvalMode::Fused => {
                let probe_path = args
                    .probe
                    .clone()
                    .unwrap_or_else(|| args.run.join("probe.json"));
                load_probe(&probe_path)?
            }
        };
        let model = FusionModel {
            text_protos: g.text_protos.clone(),
            classifier,
            lambda,
        };
        let eval = dualspace::evaluate(&model, &h_test, &y_test, mode)
            .map_err(|e| CliError::Runtime(e.to_string()))?;
        println!(
            "mode={} accuracy={:.4} n_test={}",
            mode.as_str(),
            eval.accuracy,
            eval.n_test
        );
        for (c, acc) in eval.per_class.iter().enumerate() {
            if let Some(a) = acc {
                println!("  class {c}: {a:.4}");
            }
        }
        rows.push(SeedResult {
            dataset: dataset.clone(),
            mode,
            seed: args.seed,
            shots: args.shots,
            accuracy: eval.accuracy,
        });
    }
    let csv = results_csv(&rows);
    print!("{csv}");
    if let Some(out) = &args.out {
        if out.exists() && !args.force {
            return Err(CliError::OutputExists(out.clone()));
        }
        write_text(out, &csv)?;
    }
    Ok(())
}

// ---------------------------------------------------------------------------
// report
// ---------------------------------------------------------------------------

struct Curves {
    header: Vec<String>,
    rows: Vec<Vec<String>>,
}

fn read_curves(run: &Path) -> Result<Curves, CliError> {
    let path = run.join("curves.csv");
    if !path.exists() {
        return Err(CliError::MissingArtifact(path));
    }
    let text = fs::read_to_string(&path).map_err(|source| CliError::Io {
        path: path.display().to_string(),
        source,
    })?;
    let mut lines = text.lines();
    let header: Vec<String> = lines
        .next()
        .ok_or_else(|| CliError::Runtime(format!("{}: empty file", path.display())))?
        .split(',')
        .map(|s| s.to_string())
        .collect();
    let rows = lines
        .map(|l| l.split(',').map(|s| s.to_string()).collect())
        .collect();
    Ok(Curves { header, rows })
}

fn column<'a>(c: &'a Curves, name: &str) -> Result<Vec<&'a str>, CliError> {
    let idx = c
        .header
        .iter()
        .position(|h| h == name)
        .ok_or_else(|| CliError::Runtime(format!("curves.csv: missing column {name}")))?;
    Ok(c.rows.iter().map(|r| r[idx].as_str()).collect())
}

pub fn cmd_report(args: &ReportArgs) -> Result<(), CliError> {
    let curves = read_curves(&args.run)?;
    if curves.rows.is_empty() {
        return Err(CliError::Runtime("curves.csv has no data rows".into()));
    }

    let val_acc = column(&curves, "val_acc")?;
    let deltas: Vec<f64> = column(&curves, "delta")?
        .iter()
        .filter_map(|s| s.parse::<f64>().ok())
        .collect();
    let stopped_rows = column(&curves, "stopped")?;
    let stopped_at = stopped_rows.iter().position(|&s| s == "1");

    println!("epochs={}", curves.rows.len());
    println!("final_val_acc={}", val_acc.last().unwrap());
    match stopped_at {
        Some(e) => println!("stopped_at={e}"),
        None => println!("stopped_at=none"),
    }
    if !deltas.is_empty() {
        let min = deltas.iter().cloned().fold(f64::INFINITY, f64::min);
        let max = deltas.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        println!("delta_min={min}");
        println!("delta_max={max}");
        println!("final_delta={}", deltas.last().unwrap());
    }

    let out_path = args
        .out
        .clone()
        .unwrap_or_else(|| args.run.join("report.csv"));
    if out_path.exists() && !args.force {
        return Err(CliError::OutputExists(out_path));
    }

    let report = match &args.compare {
        None => {
            let mut out = String::from("epoch,sim_overall,sim_pos,sim_neg,gap,loss,val_acc,delta,rho\n");
            let cols: Vec<Vec<&str>> = [
                "epoch",
                "sim_overall",
                "sim_pos",
                "sim_neg",
                "gap",
                "loss",
                "val_acc",
                "delta",
                "rho",
            ]
            .iter()
            .map(|n| column(&curves, n))
            .collect::<Result<_, _>>()?;
            for i in 0..curves.rows.len() {
                let row: Vec<&str> = cols.iter().map(|c| c[i]).collect();
                out.push_str(&row.join(","));
                out.push('\n');
            }
            out
        }
        Some(pair) => {
            let a = read_curves(&pair[0])?;
            let b = read_curves(&pair[1])?;
            let (ea, ga) = (column(&a, "epoch")?, column(&a, "gap")?);
            let (eb, gb) = (column(&b, "epoch")?, column(&b, "gap")?);
            let bmap: std::collections::BTreeMap<&str, &str> =
                eb.iter().zip(gb.iter()).map(|(&e, &g)| (e, g)).collect();
            let mut out = String::from("epoch,gap_a,gap_b,gap_diff\n");
            for (&e, &gap_a) in ea.iter().zip(ga.iter()) {
                if let Some(&gap_b) = bmap.get(e) {
                    let diff = gap_a.parse::<f64>().unwrap_or(f64::NAN)
                        - gap_b.parse::<f64>().unwrap_or(f64::NAN);
                    out.push_str(&format!("{e},{gap_a},{gap_b},{diff}\n"));
                }
            }
            out
        }
    };
    write_text(&out_path, &report)?;
    println!("wrote {}", out_path.display());
    Ok(())
}
