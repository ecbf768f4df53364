//! Command-line front end. Every command loads the run configuration,
//! applies its flags on top, and writes the resolved document next to its
//! outputs.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use clap::{Args, Parser, Subcommand, ValueEnum};
use framebits_core::complexity::FrequencyWeight;
use framebits_core::dataset::{build_matrix, DatasetError, SequenceFeatures};
use framebits_core::gop::{cascade_qps, classify_frames};
use framebits_core::metrics::{bd_rate_with, mape, r2, BdInterpolation};
use framebits_core::models::{importance, BitPredictor, ImportanceMethod, LabelTransform};
use framebits_core::ratecontrol::{
    simulate_session, CompensationMode, FirstPassQp, OracleBackend, PredictorSet, RcSessionReport,
    ReplayBackend, SessionConfig,
};
use framebits_core::{FrameType, VideoGeometry};
use serde::Serialize;

use crate::config::{ModelKind, RunConfig};
use crate::error::{Error, Result};
use crate::logs::{read_encoder_log, read_features, read_predictions, read_rd_curve, write_features, write_predictions, PredictionRow};
use crate::model_file::{load_model, model_file_name, save_model};
use crate::parallel::{analyze_sequence_par, with_threads};
use crate::pipeline::{
    accuracy_table, cross_validate, load_corpus, rate_control_table, save_corpus, sequence_from_records,
    synthetic_corpus, synthetic_features, train_model, Corpus, CvReport, RcSummaryRow, ENCODER_LOG_FILE,
    FEATURES_DIR,
};
use crate::yuv::open_sequence_with;

pub const METRICS_SCHEMA: &str = "framebits-metrics/1";
pub const RC_REPORT_SCHEMA: &str = "framebits-rc-report/1";
pub const CV_SCHEMA: &str = "framebits-cv/1";
pub const IMPORTANCE_SCHEMA: &str = "framebits-importance/1";

#[derive(Debug, Parser)]
#[command(name = "framebits", version, about = "Per-frame bit prediction and simulated two-pass rate control")]
pub struct Cli {
    /// TOML run configuration; flags override its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Worker threads (0 = all cores).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Extract complexity features from a raw 8-bit 4:2:0 YUV file.
    Analyze(AnalyzeArgs),
    /// GOP structure tools.
    Gop {
        #[command(subcommand)]
        command: GopCommand,
    },
    /// Generate a synthetic dataset directory (features plus oracle log).
    Synth(SynthArgs),
    /// Cross-validate and fit bit predictors.
    Train(TrainArgs),
    /// Predict frame sizes for a dataset with saved models.
    Predict(PredictArgs),
    /// Accuracy metrics from prediction CSVs and optional BD-rate.
    Evaluate(EvaluateArgs),
    /// Feature importance of a saved forest.
    Importance(ImportanceArgs),
    /// Run the two-pass rate-control loop on one sequence.
    SimulateRc(SimulateRcArgs),
    /// Estimate the QP sensitivity constant from an encoder log.
    Calibrate(CalibrateArgs),
    /// Synthetic end-to-end run printing accuracy and rate-control tables.
    Demo(DemoArgs),
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    /// Raw YUV file.
    #[arg(long, short)]
    pub input: PathBuf,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub block_size: Option<usize>,
    /// Comma-separated temporal gaps.
    #[arg(long, value_delimiter = ',')]
    pub gaps: Option<Vec<u32>>,
    #[arg(long, value_enum)]
    pub weight: Option<WeightArg>,
    /// Feature CSV to write.
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum WeightArg {
    /// Higher frequencies weigh more.
    Exp2,
    Flat,
}

#[derive(Debug, Subcommand)]
pub enum GopCommand {
    /// Print the role table as CSV.
    Dump(GopDumpArgs),
}

#[derive(Debug, Args)]
pub struct GopDumpArgs {
    #[arg(long)]
    pub frames: usize,
    #[arg(long)]
    pub gop_size: Option<usize>,
    #[arg(long)]
    pub intra_period: Option<usize>,
    /// Output file (stdout when absent).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct SynthArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub sequences: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    #[arg(long)]
    pub width: Option<usize>,
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Multiplicative noise half-width of the oracle.
    #[arg(long)]
    pub noise: Option<f64>,
}

#[derive(Debug, Args)]
pub struct TrainArgs {
    /// Dataset directory (`features/*.csv` and `encoder_log.csv`).
    #[arg(long, short)]
    pub data: PathBuf,
    /// Frame type to train; all three when absent.
    #[arg(long)]
    pub frame_type: Option<FrameType>,
    #[arg(long, value_enum)]
    pub model: Option<ModelKind>,
    /// Drop the chroma features.
    #[arg(long)]
    pub no_chroma: bool,
    #[arg(long)]
    pub folds: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub trees: Option<usize>,
    /// Train on the log of the bit counts.
    #[arg(long)]
    pub log_labels: bool,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct PredictArgs {
    #[arg(long, short)]
    pub data: PathBuf,
    /// Directory holding `model_I.json`, `model_P.json`, `model_B.json`.
    #[arg(long, short)]
    pub models: PathBuf,
    #[arg(long)]
    pub frame_type: Option<FrameType>,
    #[arg(long, short)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    /// Prediction CSVs with ground truth.
    #[arg(long = "predictions", short, num_args = 1..)]
    pub predictions: Vec<PathBuf>,
    /// Anchor RD curve for BD-rate.
    #[arg(long, requires = "test")]
    pub anchor: Option<PathBuf>,
    /// Test RD curve for BD-rate.
    #[arg(long, requires = "anchor")]
    pub test: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "pchip")]
    pub interpolation: InterpolationArg,
    /// Metrics JSON (stdout when absent).
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum InterpolationArg {
    Pchip,
    Cubic,
}

#[derive(Debug, Args)]
pub struct ImportanceArgs {
    #[arg(long, short)]
    pub model: PathBuf,
    /// Dataset directory; needed for permutation importance.
    #[arg(long, short)]
    pub data: Option<PathBuf>,
    #[arg(long, value_enum, default_value = "impurity")]
    pub method: ImportanceArg,
    #[arg(long, default_value_t = 5)]
    pub repeats: usize,
    #[arg(long, short)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum ImportanceArg {
    Impurity,
    Permutation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum BackendArg {
    Oracle,
    Replay,
}

#[derive(Debug, Args)]
pub struct SimulateRcArgs {
    /// Dataset directory; pick the sequence with `--sequence`.
    #[arg(long, short, conflicts_with = "features")]
    pub data: Option<PathBuf>,
    #[arg(long, requires = "data")]
    pub sequence: Option<String>,
    /// A single feature CSV; the sequence id is its file stem.
    #[arg(long)]
    pub features: Option<PathBuf>,
    #[arg(long, short)]
    pub models: PathBuf,
    /// Bits per second.
    #[arg(long)]
    pub target_bitrate: Option<f64>,
    #[arg(long)]
    pub frame_rate: Option<f64>,
    #[arg(long)]
    pub c_low: Option<f64>,
    #[arg(long, conflicts_with = "height")]
    pub c_high: Option<f64>,
    /// Picture height, used to derive the high-QP constant.
    #[arg(long)]
    pub height: Option<usize>,
    #[arg(long)]
    pub q_start: Option<i32>,
    #[arg(long)]
    pub strength: Option<f64>,
    #[arg(long, value_enum)]
    pub compensation: Option<CompensationArg>,
    /// Fixed first-pass base QP instead of searching from the target.
    #[arg(long)]
    pub first_pass_qp: Option<i32>,
    #[arg(long, value_enum, default_value = "oracle")]
    pub backend: BackendArg,
    /// Encoder log for the replay backend (defaults to the dataset's log).
    #[arg(long)]
    pub log: Option<PathBuf>,
    /// Report JSON.
    #[arg(long, short)]
    pub report: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, ValueEnum)]
pub enum CompensationArg {
    Gop,
    Frame,
}

#[derive(Debug, Args)]
pub struct CalibrateArgs {
    #[arg(long, short)]
    pub log: PathBuf,
    /// Restrict to one sequence.
    #[arg(long)]
    pub sequence: Option<String>,
}

#[derive(Debug, Args)]
pub struct DemoArgs {
    #[arg(long, short)]
    pub out: PathBuf,
    #[arg(long)]
    pub sequences: Option<usize>,
    #[arg(long)]
    pub frames: Option<usize>,
    /// Length of the rate-control test sequences.
    #[arg(long, default_value_t = 97)]
    pub rc_frames: usize,
    #[arg(long)]
    pub trees: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
}

/// Parses nothing; runs an already parsed command line.
pub fn run(cli: Cli) -> Result<()> {
    let mut cfg = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    if let Some(t) = cli.threads {
        cfg.threads = t;
    }
    let threads = cfg.threads;
    with_threads(threads, move || dispatch(cli.command, cfg))
}

fn dispatch(command: Command, cfg: RunConfig) -> Result<()> {
    match command {
        Command::Analyze(a) => cmd_analyze(a, cfg),
        Command::Gop {
            command: GopCommand::Dump(a),
        } => cmd_gop_dump(a, cfg),
        Command::Synth(a) => cmd_synth(a, cfg),
        Command::Train(a) => cmd_train(a, cfg),
        Command::Predict(a) => cmd_predict(a, cfg),
        Command::Evaluate(a) => cmd_evaluate(a, cfg),
        Command::Importance(a) => cmd_importance(a, cfg),
        Command::SimulateRc(a) => cmd_simulate_rc(a, cfg),
        Command::Calibrate(a) => cmd_calibrate(a, cfg),
        Command::Demo(a) => cmd_demo(a, cfg),
    }
}

fn parent_dir(path: &Path) -> &Path {
    match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    }
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    write_text(path, &text)
}

/// Writes to stdout; a closed pipe (`| head`) is not an error.
fn write_stdout(text: &str) -> Result<()> {
    match std::io::stdout().lock().write_all(text.as_bytes()) {
        Err(e) if e.kind() != std::io::ErrorKind::BrokenPipe => Err(Error::io(Path::new("<stdout>"), e)),
        _ => Ok(()),
    }
}

fn emit_json<T: Serialize>(out: Option<&Path>, value: &T) -> Result<()> {
    match out {
        Some(p) => write_json(p, value),
        None => {
            let mut text = serde_json::to_string_pretty(value)?;
            text.push('\n');
            write_stdout(&text)
        }
    }
}

fn cmd_analyze(a: AnalyzeArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(w) = a.width {
        cfg.video.width = Some(w);
    }
    if let Some(h) = a.height {
        cfg.video.height = Some(h);
    }
    if let Some(b) = a.block_size {
        cfg.analysis.block_size = b;
    }
    if let Some(g) = a.gaps {
        cfg.analysis.gaps = g;
    }
    if let Some(w) = a.weight {
        cfg.analysis.weight = match w {
            WeightArg::Exp2 => FrequencyWeight::Exp2,
            WeightArg::Flat => FrequencyWeight::Flat,
        };
    }
    let width = cfg.video.width.ok_or_else(|| Error::Usage("missing --width".into()))?;
    let height = cfg.video.height.ok_or_else(|| Error::Usage("missing --height".into()))?;
    let geometry = VideoGeometry::new(width, height, 8)?.with_frame_rate(cfg.video.frame_rate);
    let source = open_sequence_with(&a.input, geometry)?;
    let t = Instant::now();
    let records = analyze_sequence_par(&source, &cfg.complexity())?;
    log::info!("analyzed {} frames in {:.2?}", records.len(), t.elapsed());
    write_features(&a.out, &records)?;
    cfg.write_resolved(parent_dir(&a.out))
}

fn cmd_gop_dump(a: GopDumpArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(g) = a.gop_size {
        cfg.gop.gop_size = g;
    }
    if let Some(p) = a.intra_period {
        cfg.gop.intra_period = p;
    }
    let roles = classify_frames(a.frames, &cfg.gop)?;
    let mut text = String::from("frame_index,type,level,ref0,ref1\n");
    for r in &roles {
        let rf = |i: usize| r.refs.get(i).map(|v| v.to_string()).unwrap_or_default();
        text.push_str(&format!("{},{},{},{},{}\n", r.frame_index, r.frame_type, r.level, rf(0), rf(1)));
    }
    match &a.out {
        Some(p) => {
            write_text(p, &text)?;
            cfg.write_resolved(parent_dir(p))
        }
        None => write_stdout(&text),
    }
}

fn cmd_synth(a: SynthArgs, mut cfg: RunConfig) -> Result<()> {
    let s = &mut cfg.synth;
    s.sequences = a.sequences.unwrap_or(s.sequences);
    s.frames = a.frames.unwrap_or(s.frames);
    s.width = a.width.unwrap_or(s.width);
    s.height = a.height.unwrap_or(s.height);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    if let Some(n) = a.noise {
        cfg.oracle.epsilon = n;
    }
    let t = Instant::now();
    let corpus = synthetic_corpus(&cfg)?;
    log::info!(
        "generated {} sequences, {} coded frames in {:.2?}",
        corpus.sequences.len(),
        corpus.truth.len(),
        t.elapsed()
    );
    save_corpus(&a.out, &corpus)?;
    cfg.write_resolved(&a.out)
}

/// Frame types present in a corpus, in I/P/B order.
fn present_types(corpus: &Corpus) -> Vec<FrameType> {
    FrameType::ALL
        .into_iter()
        .filter(|ft| corpus.truth.iter().any(|r| r.frame_type == *ft))
        .collect()
}

#[derive(Serialize)]
struct CvFile<'a> {
    schema: &'static str,
    reports: &'a [CvReport],
}

fn cmd_train(a: TrainArgs, mut cfg: RunConfig) -> Result<()> {
    if let Some(m) = a.model {
        cfg.training.model = m;
    }
    if a.no_chroma {
        cfg.training.use_chroma = false;
    }
    if let Some(f) = a.folds {
        cfg.training.folds = f;
    }
    if let Some(s) = a.seed {
        cfg.seed = s;
    }
    if let Some(t) = a.trees {
        cfg.forest.n_estimators = t;
    }
    if a.log_labels {
        cfg.forest.label = LabelTransform::Log;
    }
    if cfg.training.folds < 2 {
        return Err(Error::Usage(format!("--folds must be at least 2, got {}", cfg.training.folds)));
    }
    let corpus = load_corpus(&a.data, &cfg)?;
    let types = match a.frame_type {
        Some(ft) => vec![ft],
        None => present_types(&corpus),
    };
    create_dir(&a.out)?;
    let folds_dir = a.out.join("folds");
    create_dir(&folds_dir)?;
    let mut reports = Vec::new();
    for ft in types {
        let set = build_matrix(&corpus.sequences, &corpus.truth, ft, cfg.training.use_chroma)?;
        let t = Instant::now();
        let report = cross_validate(&set, cfg.training.model, cfg.forest, cfg.training.folds, cfg.seed)?;
        log::info!("{ft}: {} rows cross-validated in {:.2?}", set.len(), t.elapsed());
        for f in &report.folds {
            write_json(&folds_dir.join(format!("{ft}_fold{}.json", f.fold)), f)?;
        }
        let rows: Vec<PredictionRow> = report
            .predictions
            .iter()
            .map(|p| PredictionRow {
                sequence_id: p.sequence_id.clone(),
                frame_index: p.frame_index,
                frame_type: ft,
                q: p.q,
                bits: Some(p.bits),
                predicted: p.predicted,
            })
            .collect();
        write_predictions(a.out.join(format!("oof_{ft}.csv")), &rows)?;
        let model = train_model(&set, cfg.training.model, cfg.forest, cfg.seed)?;
        save_model(a.out.join(model_file_name(ft)), &model)?;
        reports.push(report);
    }
    write_json(
        &a.out.join("summary.json"),
        &CvFile {
            schema: CV_SCHEMA,
            reports: &reports,
        },
    )?;
    let table = accuracy_table(&reports);
    write_text(&a.out.join("summary.txt"), &table)?;
    print!("{table}");
    cfg.write_resolved(&a.out)
}

fn uses_chroma(model: &BitPredictor) -> bool {
    model.feature_names().iter().any(|n| n == "E_U")
}

fn model_frame_type(model: &BitPredictor, path: &Path) -> Result<FrameType> {
    model.frame_type().ok_or_else(|| {
        Error::Usage(format!("{}: model carries no frame type", path.display()))
    })
}

fn cmd_predict(a: PredictArgs, cfg: RunConfig) -> Result<()> {
    let corpus = load_corpus(&a.data, &cfg)?;
    let types = match a.frame_type {
        Some(ft) => vec![ft],
        None => present_types(&corpus),
    };
    let mut rows = Vec::new();
    for ft in types {
        let path = a.models.join(model_file_name(ft));
        let model = load_model(&path)?;
        let set = build_matrix(&corpus.sequences, &corpus.truth, ft, uses_chroma(&model))?;
        model.check_names(&set.feature_names)?;
        let pred = model.predict(&set.x)?;
        for ((key, &bits), p) in set.keys.iter().zip(&set.y).zip(pred) {
            rows.push(PredictionRow {
                sequence_id: key.sequence_id.clone(),
                frame_index: key.frame_index,
                frame_type: ft,
                q: key.q,
                bits: Some(bits),
                predicted: p,
            });
        }
    }
    write_predictions(&a.out, &rows)?;
    cfg.write_resolved(parent_dir(&a.out))
}

#[derive(Debug, Serialize)]
pub struct TypeMetrics {
    pub rows: usize,
    pub mape: f64,
    pub r2: f64,
}

#[derive(Debug, Serialize)]
pub struct MetricsFile {
    pub schema: &'static str,
    pub frame_types: BTreeMap<String, TypeMetrics>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub bd_rate_percent: Option<f64>,
}

fn cmd_evaluate(a: EvaluateArgs, cfg: RunConfig) -> Result<()> {
    if a.predictions.is_empty() && a.anchor.is_none() {
        return Err(Error::Usage("nothing to evaluate: pass --predictions or --anchor/--test".into()));
    }
    let mut by_type: BTreeMap<FrameType, (Vec<f64>, Vec<f64>)> = BTreeMap::new();
    for p in &a.predictions {
        for row in read_predictions(p)? {
            if let Some(bits) = row.bits {
                let e = by_type.entry(row.frame_type).or_default();
                e.0.push(bits);
                e.1.push(row.predicted);
            }
        }
    }
    let mut frame_types = BTreeMap::new();
    for (ft, (y, yhat)) in &by_type {
        frame_types.insert(
            ft.to_string(),
            TypeMetrics {
                rows: y.len(),
                mape: mape(y, yhat)?,
                r2: r2(y, yhat)?,
            },
        );
    }
    let bd_rate_percent = match (&a.anchor, &a.test) {
        (Some(an), Some(te)) => {
            let interp = match a.interpolation {
                InterpolationArg::Pchip => BdInterpolation::Pchip,
                InterpolationArg::Cubic => BdInterpolation::Cubic,
            };
            Some(bd_rate_with(&read_rd_curve(an)?, &read_rd_curve(te)?, interp)?)
        }
        _ => None,
    };
    let file = MetricsFile {
        schema: METRICS_SCHEMA,
        frame_types,
        bd_rate_percent,
    };
    emit_json(a.out.as_deref(), &file)?;
    if let Some(p) = &a.out {
        cfg.write_resolved(parent_dir(p))?;
    }
    Ok(())
}

#[derive(Serialize)]
struct ImportanceFile {
    schema: &'static str,
    frame_type: FrameType,
    method: ImportanceMethod,
    /// Features in decreasing order of importance.
    ranking: Vec<(String, f64)>,
}

fn cmd_importance(a: ImportanceArgs, cfg: RunConfig) -> Result<()> {
    let model = load_model(&a.model)?;
    let ft = model_frame_type(&model, &a.model)?;
    let BitPredictor::Forest(forest) = &model else {
        return Err(Error::Usage(format!("{}: importance needs a forest model", a.model.display())));
    };
    let method = match a.method {
        ImportanceArg::Impurity => ImportanceMethod::Impurity,
        ImportanceArg::Permutation => ImportanceMethod::Permutation {
            repeats: a.repeats,
            seed: cfg.seed,
        },
    };
    let set = match &a.data {
        Some(dir) => {
            let corpus = load_corpus(dir, &cfg)?;
            Some(build_matrix(&corpus.sequences, &corpus.truth, ft, uses_chroma(&model))?)
        }
        None if matches!(method, ImportanceMethod::Permutation { .. }) => {
            return Err(Error::Usage("permutation importance needs --data".into()))
        }
        None => None,
    };
    let report = match &set {
        Some(s) => importance(forest, &s.x, &s.y, method)?,
        None => {
            let empty = framebits_core::linalg::Matrix::zeros(0, forest.feature_names.len());
            importance(forest, &empty, &[], method)?
        }
    };
    let ranking = report
        .ranking()
        .into_iter()
        .map(|i| (report.feature_names[i].clone(), report.scores[i]))
        .collect();
    let file = ImportanceFile {
        schema: IMPORTANCE_SCHEMA,
        frame_type: ft,
        method,
        ranking,
    };
    emit_json(a.out.as_deref(), &file)?;
    if let Some(p) = &a.out {
        cfg.write_resolved(parent_dir(p))?;
    }
    Ok(())
}

/// Loads whichever of the three models exist in `dir`.
pub fn load_predictors(dir: &Path) -> Result<PredictorSet> {
    let mut set = PredictorSet::default();
    for ft in FrameType::ALL {
        let path = dir.join(model_file_name(ft));
        if path.exists() {
            set.set(ft, load_model(&path)?);
        }
    }
    Ok(set)
}

/// Report JSON written by `simulate-rc`.
#[derive(Debug, Serialize)]
pub struct RcReportFile<'a> {
    pub schema: &'static str,
    pub backend: &'static str,
    pub target_bitrate: f64,
    pub frame_rate: f64,
    pub c_low: f64,
    pub c_high: f64,
    pub q_start: i32,
    pub strength: f64,
    pub compensation: CompensationMode,
    #[serde(flatten)]
    pub report: &'a RcSessionReport,
}

fn cmd_simulate_rc(a: SimulateRcArgs, mut cfg: RunConfig) -> Result<()> {
    let rc = &mut cfg.rc;
    rc.c_low = a.c_low.unwrap_or(rc.c_low);
    rc.c_high = a.c_high.or(rc.c_high);
    rc.q_start = a.q_start.unwrap_or(rc.q_start);
    rc.strength = a.strength.unwrap_or(rc.strength);
    rc.target_bitrate = a.target_bitrate.or(rc.target_bitrate);
    rc.first_pass_qp = a.first_pass_qp.or(rc.first_pass_qp);
    if let Some(c) = a.compensation {
        rc.compensation = match c {
            CompensationArg::Gop => CompensationMode::Gop,
            CompensationArg::Frame => CompensationMode::Frame,
        };
    }
    if let Some(f) = a.frame_rate {
        cfg.video.frame_rate = f;
    }
    if let Some(h) = a.height {
        cfg.video.height = Some(h);
    }
    let target = cfg
        .rc
        .target_bitrate
        .ok_or_else(|| Error::Usage("missing --target-bitrate".into()))?;
    let height = match (cfg.rc.c_high, cfg.video.height) {
        (Some(_), h) => h.unwrap_or(0),
        (None, Some(h)) => h,
        (None, None) => return Err(Error::Usage("pass --c-high or --height".into())),
    };

    let (seq, log_default) = match (&a.features, &a.data) {
        (Some(path), _) => {
            let id = path.file_stem().and_then(|s| s.to_str()).unwrap_or("sequence").to_string();
            (sequence_from_records(&cfg, &id, read_features(path)?)?, None)
        }
        (None, Some(dir)) => {
            let id = a
                .sequence
                .clone()
                .ok_or_else(|| Error::Usage("--data needs --sequence".into()))?;
            let path = dir.join(FEATURES_DIR).join(format!("{id}.csv"));
            let seq = sequence_from_records(&cfg, &id, read_features(&path)?)?;
            (seq, Some(dir.join(ENCODER_LOG_FILE)))
        }
        (None, None) => return Err(Error::Usage("pass --features or --data with --sequence".into())),
    };

    let predictors = load_predictors(&a.models)?;
    let mut session = SessionConfig::new(target, cfg.video.frame_rate, cfg.rc_constants(height));
    session.level_offsets = cfg.dataset.level_offsets.clone();
    session.compensation = cfg.rc.compensation;
    session.strength = cfg.rc.strength;
    if let Some(q) = cfg.rc.first_pass_qp {
        session.first_pass = FirstPassQp::Fixed(q);
    }
    let t = Instant::now();
    let (report, backend) = match a.backend {
        BackendArg::Oracle => {
            let mut b = OracleBackend::new(&seq, cfg.oracle.clone())?;
            (simulate_session(&seq, &predictors, &session, &mut b)?, "oracle")
        }
        BackendArg::Replay => {
            let path = a
                .log
                .clone()
                .or(log_default)
                .ok_or_else(|| Error::Usage("replay backend needs --log".into()))?;
            let records = read_encoder_log(&path)?;
            let mut b = ReplayBackend::from_records(records.iter().filter(|r| r.sequence_id == seq.id))?;
            (simulate_session(&seq, &predictors, &session, &mut b)?, "replay")
        }
    };
    let elapsed = t.elapsed().as_secs_f64();
    println!(
        "{}",
        rate_control_table(&[RcSummaryRow {
            label: format!("{backend} base QP {}", report.base_qp),
            sequence_id: report.sequence_id.clone(),
            target_bits: report.total_target_bits,
            achieved_bits: report.total_achieved_bits,
            deviation_percent: report.deviation_percent,
            seconds: elapsed,
        }])
        .trim_end()
    );
    if let Some(path) = &a.report {
        let file = RcReportFile {
            schema: RC_REPORT_SCHEMA,
            backend,
            target_bitrate: target,
            frame_rate: cfg.video.frame_rate,
            c_low: session.constants.c_low,
            c_high: session.constants.c_high,
            q_start: session.constants.q_start,
            strength: session.strength,
            compensation: session.compensation,
            report: &report,
        };
        write_json(path, &file)?;
        cfg.write_resolved(parent_dir(path))?;
    }
    Ok(())
}

fn cmd_calibrate(a: CalibrateArgs, _cfg: RunConfig) -> Result<()> {
    let mut records = read_encoder_log(&a.log)?;
    if let Some(id) = &a.sequence {
        records.retain(|r| &r.sequence_id == id);
    }
    let c = framebits_core::ratecontrol::calibrate_c_low(&records).ok_or_else(|| {
        Error::Dataset(DatasetError::InvariantViolation(
            "no frames coded at two adjacent QPs; cannot calibrate".into(),
        ))
    })?;
    println!("c_low = {c:.6}");
    Ok(())
}

#[derive(Serialize)]
struct DemoReport<'a> {
    accuracy: &'a [CvReport],
    rate_control: &'a [RcSummaryRow],
}

fn oracle_target_bitrate(cfg: &RunConfig, seq: &SequenceFeatures, base_qp: i32) -> Result<f64> {
    let qps = cascade_qps(&seq.roles, base_qp, &cfg.dataset.level_offsets);
    let mut backend = OracleBackend::new(seq, cfg.oracle.clone())?;
    let mut total = 0.0;
    for (k, role) in seq.roles.iter().enumerate() {
        use framebits_core::ratecontrol::RcBackend;
        total += backend.encode(k, role.frame_type, qps[k])?.bits;
    }
    Ok(total / seq.frame_count() as f64 * cfg.video.frame_rate)
}

fn cmd_demo(a: DemoArgs, mut cfg: RunConfig) -> Result<()> {
    cfg.synth.sequences = a.sequences.unwrap_or(cfg.synth.sequences);
    cfg.synth.frames = a.frames.unwrap_or(cfg.synth.frames);
    cfg.seed = a.seed.unwrap_or(cfg.seed);
    if let Some(t) = a.trees {
        cfg.forest.n_estimators = t;
    }
    create_dir(&a.out)?;
    let t = Instant::now();
    let corpus = synthetic_corpus(&cfg)?;
    println!(
        "generated {} sequences ({} coded frames) in {:.1} s\n",
        corpus.sequences.len(),
        corpus.truth.len(),
        t.elapsed().as_secs_f64()
    );
    save_corpus(&a.out.join("data"), &corpus)?;

    let mut reports = Vec::new();
    let mut predictors = PredictorSet::default();
    for ft in present_types(&corpus) {
        for (kind, chroma) in [(ModelKind::Linear, true), (ModelKind::Forest, true), (ModelKind::Forest, false)] {
            let set = build_matrix(&corpus.sequences, &corpus.truth, ft, chroma)?;
            reports.push(cross_validate(&set, kind, cfg.forest, cfg.training.folds, cfg.seed)?);
            if kind == ModelKind::Forest && chroma {
                let model = train_model(&set, kind, cfg.forest, cfg.seed)?;
                save_model(a.out.join(model_file_name(ft)), &model)?;
                predictors.set(ft, model);
            }
        }
    }
    let table = accuracy_table(&reports);
    println!("Prediction accuracy ({}-fold cross-validation)\n{table}", cfg.training.folds);

    let mut rc_cfg = cfg.clone();
    rc_cfg.synth.frames = a.rc_frames;
    let mut rows = Vec::new();
    for i in 0..3 {
        let index = cfg.synth.sequences + i;
        let seq = synthetic_features(&rc_cfg, index)?;
        for base in [27, 37] {
            let target = oracle_target_bitrate(&cfg, &seq, base)?;
            let k = cfg.rc_constants(cfg.synth.height);
            let mut session = SessionConfig::new(target, cfg.video.frame_rate, k);
            session.level_offsets = cfg.dataset.level_offsets.clone();
            session.compensation = cfg.rc.compensation;
            session.strength = cfg.rc.strength;
            let start = Instant::now();
            let mut backend = OracleBackend::new(&seq, cfg.oracle.clone())?;
            let report = simulate_session(&seq, &predictors, &session, &mut backend)?;
            rows.push(RcSummaryRow {
                label: format!("target of QP {base}"),
                sequence_id: seq.id.clone(),
                target_bits: report.total_target_bits,
                achieved_bits: report.total_achieved_bits,
                deviation_percent: report.deviation_percent,
                seconds: start.elapsed().as_secs_f64(),
            });
        }
    }
    let rc_table = rate_control_table(&rows);
    println!("Rate control ({} frames per sequence)\n{rc_table}", a.rc_frames);
    write_text(&a.out.join("report.txt"), &format!("{table}\n{rc_table}"))?;
    write_json(
        &a.out.join("report.json"),
        &DemoReport {
            accuracy: &reports,
            rate_control: &rows,
        },
    )?;
    cfg.write_resolved(&a.out)
}
