//! Command-line front end for the temporal-relation pipeline.
//!
//! All subcommands share one artifact directory (`--out`). `gen-data` seeds
//! it with corpus splits; each later stage reads what earlier stages wrote
//! and adds its own artifact:
//!
//! ```text
//! gen-data        → train.jsonl dev.jsonl test.jsonl
//! train           → model.json
//! search-beta     → betas.json
//! fit-temperature → temperature.json
//! fit-threshold   → threshold.json
//! predict         → predictions.jsonl
//! evaluate        → evaluation.json
//! timeline        → timelines.jsonl
//! reliability     → reliability.csv
//! ```
//!
//! Fitting and prediction stages pick up whatever calibration artifacts
//! already exist and fall back to identity values (β = 0, T = 1, τ = ln K)
//! for the rest, so the stages compose sequentially but can also run in
//! isolation. Every command prints a one-line JSON summary on stdout.
//! Exit codes: 0 success, 2 configuration error, 3 missing prerequisite
//! artifact.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use temprel::calibrate::{
    ece, fit_temperature, fit_threshold, nll_at_temperature, normalize, CalibrationConfig,
    DEFAULT_ECE_BINS, DEFAULT_EPS,
};
use temprel::config::FlatConfig;
use temprel::counterfactual::{
    debias, search_betas, BetaSearchConfig, BiasCoefficients, PredictionTriple,
};
use temprel::metrics::{confusion, Metric, Scope};
use temprel::model::{load_checkpoint, save_checkpoint, train, ModelParams, TrainConfig};
use temprel::numeric::{inverse_softmax, round_sig9, round_sig9_vec, softmax};
use temprel::pipeline::{apply, PipelineParams};
use temprel::preprocess::Instance;
use temprel::records::{
    read_jsonl, write_jsonl, CorpusRecord, PredictionRecord, RemovedEdgeRecord, TimelineRecord,
};
use temprel::synth::{generate, GenConfig};
use temprel::timeline::{
    build_graph, make_acyclic, timeline_metrics, topo_sort, EventRef, PairObservation,
    RelationCall,
};
use temprel::types::VAGUE;
use temprel::{Categorical, Decision, Error as LibError, LabelSet};

// ---------------------------------------------------------------------------
// argument parsing

#[derive(Parser)]
#[command(
    name = "temprel",
    version,
    about = "Selective temporal-relation pipeline: train, debias, calibrate, abstain, build timelines"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Generate synthetic corpus splits (train/dev/test JSONL).
    GenData(CommonArgs),
    /// Train the Dirichlet-prior classifier on the train split.
    Train(CommonArgs),
    /// Grid-search the counterfactual debias coefficients on the dev split.
    SearchBeta(SearchBetaArgs),
    /// Fit the softmax temperature by dev-set NLL.
    FitTemperature(CommonArgs),
    /// Pick the abstention entropy threshold on the dev split.
    FitThreshold(CommonArgs),
    /// Run the full pipeline over a split and write per-record predictions.
    Predict(SplitArgs),
    /// Score predictions: micro/macro F1 (K-way and (K+1)-way), ECE, NLL.
    Evaluate(SplitArgs),
    /// Assemble per-document timelines from predictions and score against gold.
    Timeline(SplitArgs),
    /// Export reliability-diagram data as CSV.
    Reliability(SplitArgs),
}

#[derive(Args)]
struct CommonArgs {
    /// Directory holding corpus splits and stage artifacts.
    #[arg(long)]
    out: PathBuf,
    /// Flat key=value configuration file (TEMPREL_* env vars override).
    #[arg(long)]
    config: Option<PathBuf>,
    /// Override the configured RNG seed (corpus generation and training).
    #[arg(long)]
    seed: Option<u64>,
}

#[derive(Args)]
struct SearchBetaArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Objective for the grid search.
    #[arg(long, default_value = "macro-f1")]
    metric: String,
}

#[derive(Args)]
struct SplitArgs {
    #[command(flatten)]
    common: CommonArgs,
    /// Corpus split to operate on.
    #[arg(long, default_value = "test")]
    split: String,
}

// ---------------------------------------------------------------------------
// errors and exit codes

enum CliError {
    /// Bad flags, config file, or artifact/config mismatch → exit 2.
    Config(String),
    /// Prerequisite artifact not on disk yet → exit 3.
    MissingArtifact(String),
    /// Everything else (I/O failures, corrupt data) → exit 1.
    Other(String),
}

type CliResult<T> = Result<T, CliError>;

impl From<LibError> for CliError {
    fn from(e: LibError) -> Self {
        match e {
            LibError::Config(msg) => CliError::Config(msg),
            other => CliError::Other(other.to_string()),
        }
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Other(e.to_string())
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(summary) => {
            println!("{summary}");
            ExitCode::SUCCESS
        }
        Err(err) => {
            let (code, msg) = match &err {
                CliError::Config(m) => (2, m),
                CliError::MissingArtifact(m) => (3, m),
                CliError::Other(m) => (1, m),
            };
            eprintln!("error: {msg}");
            ExitCode::from(code)
        }
    }
}

fn run(command: Command) -> CliResult<Value> {
    match command {
        Command::GenData(a) => cmd_gen_data(&a),
        Command::Train(a) => cmd_train(&a),
        Command::SearchBeta(a) => cmd_search_beta(&a),
        Command::FitTemperature(a) => cmd_fit_temperature(&a),
        Command::FitThreshold(a) => cmd_fit_threshold(&a),
        Command::Predict(a) => cmd_predict(&a),
        Command::Evaluate(a) => cmd_evaluate(&a),
        Command::Timeline(a) => cmd_timeline(&a),
        Command::Reliability(a) => cmd_reliability(&a),
    }
}

// ---------------------------------------------------------------------------
// configuration schema

/// Every key the flat config file (or a TEMPREL_-prefixed environment
/// variable) may set. Anything else is rejected up front.
const KNOWN_KEYS: &[&str] = &[
    "labels",
    "seed",
    // corpus generation
    "n_train",
    "n_dev",
    "n_test",
    "trigger_bias_strength",
    "label_skew",
    "vague_fraction",
    "anti_bias_test",
    // training
    "lambda1",
    "lambda2",
    "learning_rate",
    "epochs",
    "batch_size",
    "alpha0_sharp",
    "eps_smooth",
    // β grid search
    "beta_lower",
    "beta_upper",
    "beta_step",
    "pre_abstention",
    // calibration
    "eps",
    "ece_bins",
];

struct Settings {
    labels: LabelSet,
    gen: GenConfig,
    train: TrainConfig,
    beta: BetaSearchConfig,
    eps: f64,
    ece_bins: usize,
}

impl Settings {
    fn load(common: &CommonArgs) -> CliResult<Settings> {
        let mut cfg = match &common.config {
            Some(path) => FlatConfig::load(path)?,
            None => FlatConfig::default(),
        };
        cfg.apply_env(std::env::vars());
        cfg.require_known(KNOWN_KEYS)?;

        let labels = match cfg.get("labels") {
            Some(csv) => LabelSet::new(csv.split(',').map(|l| l.trim().to_string()).collect())?,
            None => LabelSet::default(),
        };

        let mut gen = GenConfig::default();
        if let Some(v) = cfg.get_usize("n_train")? {
            gen.n_train = v;
        }
        if let Some(v) = cfg.get_usize("n_dev")? {
            gen.n_dev = v;
        }
        if let Some(v) = cfg.get_usize("n_test")? {
            gen.n_test = v;
        }
        if let Some(v) = cfg.get_f64("trigger_bias_strength")? {
            gen.trigger_bias_strength = v;
        }
        if let Some(v) = cfg.get_f64("label_skew")? {
            gen.label_skew = v;
        }
        if let Some(v) = cfg.get_f64("vague_fraction")? {
            gen.vague_fraction = v;
        }
        if let Some(v) = cfg.get_bool("anti_bias_test")? {
            gen.anti_bias_test = v;
        }

        let mut train = TrainConfig::default();
        if let Some(v) = cfg.get_f64("lambda1")? {
            train.lambda1 = v;
        }
        if let Some(v) = cfg.get_f64("lambda2")? {
            train.lambda2 = v;
        }
        if let Some(v) = cfg.get_f64("learning_rate")? {
            train.learning_rate = v;
        }
        if let Some(v) = cfg.get_usize("epochs")? {
            train.epochs = v;
        }
        if let Some(v) = cfg.get_usize("batch_size")? {
            train.batch_size = v;
        }
        if let Some(v) = cfg.get_f64("alpha0_sharp")? {
            train.alpha0_sharp = v;
        }
        if let Some(v) = cfg.get_f64("eps_smooth")? {
            train.eps_smooth = v;
        }

        let mut beta = BetaSearchConfig::default();
        if let Some(v) = cfg.get_f64("beta_lower")? {
            beta.lower = v;
        }
        if let Some(v) = cfg.get_f64("beta_upper")? {
            beta.upper = v;
        }
        if let Some(v) = cfg.get_f64("beta_step")? {
            beta.step = v;
        }
        if let Some(v) = cfg.get_bool("pre_abstention")? {
            beta.pre_abstention = v;
        }

        let eps = cfg.get_f64("eps")?.unwrap_or(DEFAULT_EPS);
        let ece_bins = cfg.get_usize("ece_bins")?.unwrap_or(DEFAULT_ECE_BINS);

        // One seed drives both corpus generation and weight init/shuffling;
        // the flag wins over the file.
        if let Some(seed) = common.seed.or(cfg.get_u64("seed")?) {
            gen.seed = seed;
            train.seed = seed;
        }

        gen.validate()?;
        train.validate(labels.k())?;
        beta.validate()?;
        // Validate the calibration knobs once here with identity values for
        // the fitted parameters; stages re-validate with the real ones.
        CalibrationConfig {
            eps,
            temperature: 1.0,
            entropy_threshold: (labels.k() as f64).ln(),
            ece_bins,
        }
        .validate(labels.k())?;

        Ok(Settings {
            labels,
            gen,
            train,
            beta,
            eps,
            ece_bins,
        })
    }
}

// ---------------------------------------------------------------------------
// artifact plumbing

const MODEL_FILE: &str = "model.json";
const BETAS_FILE: &str = "betas.json";
const TEMPERATURE_FILE: &str = "temperature.json";
const THRESHOLD_FILE: &str = "threshold.json";
const PREDICTIONS_FILE: &str = "predictions.jsonl";
const EVALUATION_FILE: &str = "evaluation.json";
const TIMELINES_FILE: &str = "timelines.jsonl";
const RELIABILITY_FILE: &str = "reliability.csv";

#[derive(Clone, Copy, PartialEq, Eq)]
enum Split {
    Train,
    Dev,
    Test,
}

impl Split {
    fn parse(s: &str) -> CliResult<Split> {
        match s {
            "train" => Ok(Split::Train),
            "dev" => Ok(Split::Dev),
            "test" => Ok(Split::Test),
            other => Err(CliError::Config(format!(
                "unknown split {other:?} (expected train, dev, or test)"
            ))),
        }
    }

    fn name(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Dev => "dev",
            Split::Test => "test",
        }
    }

    fn file(self) -> &'static str {
        match self {
            Split::Train => "train.jsonl",
            Split::Dev => "dev.jsonl",
            Split::Test => "test.jsonl",
        }
    }
}

fn require_artifact(out: &Path, file: &str, stage: &str) -> CliResult<PathBuf> {
    let path = out.join(file);
    if path.is_file() {
        Ok(path)
    } else {
        Err(CliError::MissingArtifact(format!(
            "missing {}; run the `{stage}` stage first",
            path.display()
        )))
    }
}

fn write_json_artifact<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text =
        serde_json::to_string(value).map_err(|e| CliError::Other(e.to_string()))?;
    text.push('\n');
    fs::write(path, text)?;
    Ok(())
}

fn read_json_artifact<T: DeserializeOwned>(path: &Path) -> CliResult<T> {
    let text = fs::read_to_string(path)?;
    serde_json::from_str(&text).map_err(|e| CliError::Other(format!("{}: {e}", path.display())))
}

#[derive(Serialize, Deserialize)]
struct BetasFile {
    beta1: f64,
    beta2: f64,
    dev_score: f64,
    metric: String,
}

#[derive(Serialize, Deserialize)]
struct TemperatureFile {
    temperature: f64,
    dev_nll_at_unit: f64,
    dev_nll_at_fit: f64,
}

#[derive(Serialize, Deserialize)]
struct ThresholdFile {
    threshold: f64,
    dev_score: f64,
    fell_back: bool,
}

/// Debias coefficients from `betas.json`, or zero (no debiasing) before the
/// search has run.
fn load_betas(out: &Path) -> CliResult<BiasCoefficients> {
    let path = out.join(BETAS_FILE);
    if !path.is_file() {
        return Ok(BiasCoefficients::ZERO);
    }
    let file: BetasFile = read_json_artifact(&path)?;
    Ok(BiasCoefficients {
        beta1: file.beta1,
        beta2: file.beta2,
    })
}

/// Temperature from `temperature.json`, or the identity T = 1.
fn load_temperature(out: &Path) -> CliResult<f64> {
    let path = out.join(TEMPERATURE_FILE);
    if !path.is_file() {
        return Ok(1.0);
    }
    let file: TemperatureFile = read_json_artifact(&path)?;
    Ok(file.temperature)
}

/// Entropy threshold from `threshold.json`, or ln K (abstain only on an
/// exactly uniform output).
fn load_threshold(out: &Path, k: usize) -> CliResult<f64> {
    let path = out.join(THRESHOLD_FILE);
    if !path.is_file() {
        return Ok((k as f64).ln());
    }
    let file: ThresholdFile = read_json_artifact(&path)?;
    Ok(file.threshold)
}

fn load_model(out: &Path, labels: &LabelSet) -> CliResult<ModelParams> {
    let path = require_artifact(out, MODEL_FILE, "train")?;
    let (params, _) = load_checkpoint(&path)?;
    if params.k() != labels.k() {
        return Err(CliError::Config(format!(
            "checkpoint is {}-way but the configured label set has {} labels",
            params.k(),
            labels.k()
        )));
    }
    Ok(params)
}

fn load_split(out: &Path, split: Split, labels: &LabelSet) -> CliResult<Vec<CorpusRecord>> {
    let path = require_artifact(out, split.file(), "gen-data")?;
    let records: Vec<CorpusRecord> = read_jsonl(&path)?;
    for r in &records {
        r.validate(labels)?;
    }
    Ok(records)
}

fn to_instances(records: &[CorpusRecord], labels: &LabelSet) -> CliResult<Vec<Instance>> {
    records
        .iter()
        .map(|r| r.to_instance(labels).map_err(CliError::from))
        .collect()
}

/// Score all three feature views of one instance under the model.
fn triple_for(params: &ModelParams, inst: &Instance) -> PredictionTriple {
    PredictionTriple::new(
        softmax(&params.forward(&inst.views.full)),
        softmax(&params.forward(&inst.views.trigger_only)),
        softmax(&params.forward(&inst.views.empty)),
    )
    .expect("three views of one instance share K")
}

fn load_predictions(
    out: &Path,
    labels: &LabelSet,
) -> CliResult<BTreeMap<String, PredictionRecord>> {
    let path = require_artifact(out, PREDICTIONS_FILE, "predict")?;
    let rows: Vec<PredictionRecord> = read_jsonl(&path)?;
    let mut map = BTreeMap::new();
    for row in rows {
        row.validate(labels)?;
        let id = row.id.clone();
        if map.insert(id.clone(), row).is_some() {
            return Err(CliError::Other(format!(
                "duplicate prediction id {id:?} in {}",
                path.display()
            )));
        }
    }
    Ok(map)
}

fn prediction_for<'a>(
    map: &'a BTreeMap<String, PredictionRecord>,
    id: &str,
    split: Split,
) -> CliResult<&'a PredictionRecord> {
    map.get(id).ok_or_else(|| {
        CliError::MissingArtifact(format!(
            "predictions do not cover record {id:?} of the {0} split; run the `predict` stage with --split {0} first",
            split.name()
        ))
    })
}

/// Join a corpus split against stored predictions. Returns the decision rows
/// feeding the confusion matrix and, separately, the (ŷ, gold) pairs in
/// calibration scope: gold is a real relation and the decision committed.
#[allow(clippy::type_complexity)]
fn joined_rows(
    corpus: &[CorpusRecord],
    preds: &BTreeMap<String, PredictionRecord>,
    labels: &LabelSet,
    split: Split,
) -> CliResult<(Vec<(Option<usize>, Decision)>, Vec<(Categorical, usize)>)> {
    let mut decisions = Vec::with_capacity(corpus.len());
    let mut scored = Vec::new();
    for record in corpus {
        let pred = prediction_for(preds, &record.id, split)?;
        let gold = labels.gold_index(&record.label)?;
        let decision = Decision::parse(&pred.decision, labels)?;
        if let Some(g) = gold {
            if !decision.is_vague() {
                scored.push((Categorical::new(pred.y_hat.clone())?, g));
            }
        }
        decisions.push((gold, decision));
    }
    Ok((decisions, scored))
}

// ---------------------------------------------------------------------------
// subcommands

fn cmd_gen_data(args: &CommonArgs) -> CliResult<Value> {
    let s = Settings::load(args)?;
    let splits = generate(&s.gen, &s.labels)?;
    fs::create_dir_all(&args.out)?;
    write_jsonl(&args.out.join(Split::Train.file()), &splits.train)?;
    write_jsonl(&args.out.join(Split::Dev.file()), &splits.dev)?;
    write_jsonl(&args.out.join(Split::Test.file()), &splits.test)?;
    let n_vague = |records: &[CorpusRecord]| records.iter().filter(|r| r.label == VAGUE).count();
    Ok(json!({
        "command": "gen-data",
        "out": args.out.display().to_string(),
        "labels": s.labels.labels(),
        "seed": s.gen.seed,
        "anti_bias_test": s.gen.anti_bias_test,
        "n_train": splits.train.len(),
        "n_dev": splits.dev.len(),
        "n_test": splits.test.len(),
        "n_vague": {
            "train": n_vague(&splits.train),
            "dev": n_vague(&splits.dev),
            "test": n_vague(&splits.test),
        },
    }))
}

fn cmd_train(args: &CommonArgs) -> CliResult<Value> {
    let s = Settings::load(args)?;
    let records = load_split(&args.out, Split::Train, &s.labels)?;
    let data = to_instances(&records, &s.labels)?;
    let outcome = train(&data, &s.labels, &s.train)?;
    let model_path = args.out.join(MODEL_FILE);
    save_checkpoint(&model_path, &outcome.params, &s.train)?;
    let losses = round_sig9_vec(&outcome.epoch_losses);
    Ok(json!({
        "command": "train",
        "records": data.len(),
        "seed": s.train.seed,
        "epochs": s.train.epochs,
        "epoch_losses": losses,
        "final_loss": losses.last().copied(),
        "warnings": outcome.warnings,
        "model": model_path.display().to_string(),
    }))
}

fn cmd_search_beta(args: &SearchBetaArgs) -> CliResult<Value> {
    let s = Settings::load(&args.common)?;
    let out = &args.common.out;
    let mut search_cfg = s.beta;
    search_cfg.metric = Metric::parse(&args.metric)?;

    let params = load_model(out, &s.labels)?;
    let records = load_split(out, Split::Dev, &s.labels)?;
    let instances = to_instances(&records, &s.labels)?;
    let dev: Vec<(PredictionTriple, Option<usize>)> = instances
        .iter()
        .map(|inst| (triple_for(&params, inst), inst.gold))
        .collect();

    let calibration = CalibrationConfig {
        eps: s.eps,
        temperature: load_temperature(out)?,
        entropy_threshold: load_threshold(out, s.labels.k())?,
        ece_bins: s.ece_bins,
    };
    calibration.validate(s.labels.k())?;

    let found = search_betas(&dev, &calibration, &search_cfg)?;
    let file = BetasFile {
        beta1: round_sig9(found.betas.beta1),
        beta2: round_sig9(found.betas.beta2),
        dev_score: round_sig9(found.score),
        metric: args.metric.clone(),
    };
    let path = out.join(BETAS_FILE);
    write_json_artifact(&path, &file)?;
    Ok(json!({
        "command": "search-beta",
        "beta1": file.beta1,
        "beta2": file.beta2,
        "dev_score": file.dev_score,
        "metric": file.metric,
        "grid_points": found.grid.len(),
        "records": dev.len(),
        "betas": path.display().to_string(),
    }))
}

fn cmd_fit_temperature(args: &CommonArgs) -> CliResult<Value> {
    let s = Settings::load(args)?;
    let params = load_model(&args.out, &s.labels)?;
    let records = load_split(&args.out, Split::Dev, &s.labels)?;
    let instances = to_instances(&records, &s.labels)?;
    let betas = load_betas(&args.out)?;

    // Temperature is fit on the debiased/renormalized logits of the labeled
    // dev rows; abstention-gold rows carry no NLL term and are skipped.
    let mut logits = Vec::new();
    let mut golds = Vec::new();
    for inst in &instances {
        let Some(gold) = inst.gold else { continue };
        let triple = triple_for(&params, inst);
        let y_norm = normalize(&debias(&triple, &betas), s.eps)?;
        logits.push(inverse_softmax(&y_norm)?);
        golds.push(gold);
    }

    let t = fit_temperature(&logits, &golds)?;
    let file = TemperatureFile {
        temperature: round_sig9(t),
        dev_nll_at_unit: round_sig9(nll_at_temperature(&logits, &golds, 1.0)?),
        dev_nll_at_fit: round_sig9(nll_at_temperature(&logits, &golds, t)?),
    };
    let path = args.out.join(TEMPERATURE_FILE);
    write_json_artifact(&path, &file)?;
    Ok(json!({
        "command": "fit-temperature",
        "temperature": file.temperature,
        "dev_nll_at_unit": file.dev_nll_at_unit,
        "dev_nll_at_fit": file.dev_nll_at_fit,
        "records": golds.len(),
        "beta1": round_sig9(betas.beta1),
        "beta2": round_sig9(betas.beta2),
        "file": path.display().to_string(),
    }))
}

fn cmd_fit_threshold(args: &CommonArgs) -> CliResult<Value> {
    let s = Settings::load(args)?;
    let params = load_model(&args.out, &s.labels)?;
    let records = load_split(&args.out, Split::Dev, &s.labels)?;
    let instances = to_instances(&records, &s.labels)?;
    let betas = load_betas(&args.out)?;
    let temperature = load_temperature(&args.out)?;

    // τ only gates the final decision, so fitting needs ŷ per dev row; the
    // placeholder threshold below never influences y_hat.
    let pipeline = PipelineParams {
        betas,
        calibration: CalibrationConfig {
            eps: s.eps,
            temperature,
            entropy_threshold: (s.labels.k() as f64).ln(),
            ece_bins: s.ece_bins,
        },
    };
    pipeline.validate(s.labels.k())?;
    let dev: Vec<(Categorical, Option<usize>)> = instances
        .iter()
        .map(|inst| {
            apply(&triple_for(&params, inst), &pipeline).map(|outcome| (outcome.y_hat, inst.gold))
        })
        .collect::<Result<_, LibError>>()?;

    let fit = fit_threshold(&dev)?;
    let file = ThresholdFile {
        threshold: round_sig9(fit.tau),
        dev_score: round_sig9(fit.score),
        fell_back: fit.fell_back,
    };
    let path = args.out.join(THRESHOLD_FILE);
    write_json_artifact(&path, &file)?;
    Ok(json!({
        "command": "fit-threshold",
        "threshold": file.threshold,
        "dev_score": file.dev_score,
        "fell_back": file.fell_back,
        "records": dev.len(),
        "temperature": round_sig9(temperature),
        "file": path.display().to_string(),
    }))
}

fn cmd_predict(args: &SplitArgs) -> CliResult<Value> {
    let s = Settings::load(&args.common)?;
    let out = &args.common.out;
    let split = Split::parse(&args.split)?;
    let params = load_model(out, &s.labels)?;
    let records = load_split(out, split, &s.labels)?;
    let instances = to_instances(&records, &s.labels)?;

    let betas = load_betas(out)?;
    let temperature = load_temperature(out)?;
    let threshold = load_threshold(out, s.labels.k())?;
    let pipeline = PipelineParams {
        betas,
        calibration: CalibrationConfig {
            eps: s.eps,
            temperature,
            entropy_threshold: threshold,
            ece_bins: s.ece_bins,
        },
    };
    pipeline.validate(s.labels.k())?;

    let mut rows = Vec::with_capacity(instances.len());
    let mut abstained = 0usize;
    for inst in &instances {
        let triple = triple_for(&params, inst);
        let outcome = apply(&triple, &pipeline)?;
        if outcome.decision.is_vague() {
            abstained += 1;
        }
        rows.push(PredictionRecord::from_outcome(
            &inst.id, &triple, &outcome, &s.labels,
        ));
    }
    let path = out.join(PREDICTIONS_FILE);
    write_jsonl(&path, &rows)?;
    Ok(json!({
        "command": "predict",
        "split": split.name(),
        "records": rows.len(),
        "abstained": abstained,
        "beta1": round_sig9(betas.beta1),
        "beta2": round_sig9(betas.beta2),
        "temperature": round_sig9(temperature),
        "entropy_threshold": round_sig9(threshold),
        "predictions": path.display().to_string(),
    }))
}

fn cmd_evaluate(args: &SplitArgs) -> CliResult<Value> {
    let s = Settings::load(&args.common)?;
    let out = &args.common.out;
    let split = Split::parse(&args.split)?;
    let corpus = load_split(out, split, &s.labels)?;
    let preds = load_predictions(out, &s.labels)?;
    let (decisions, scored) = joined_rows(&corpus, &preds, &s.labels, split)?;

    let cm = confusion(s.labels.k(), &decisions);
    let (ece_value, nll_value) = if scored.is_empty() {
        (Value::Null, Value::Null)
    } else {
        let report = ece(&scored, s.ece_bins)?;
        (json!(round_sig9(report.ece)), json!(round_sig9(report.nll)))
    };

    let summary = json!({
        "command": "evaluate",
        "split": split.name(),
        "records": corpus.len(),
        "scored_for_calibration": scored.len(),
        "k_way": {
            "micro_f1": round_sig9(cm.micro_f1(Scope::IdOnly)),
            "macro_f1": round_sig9(cm.macro_f1(Scope::IdOnly)),
        },
        "k_plus_1_way": {
            "micro_f1": round_sig9(cm.micro_f1(Scope::WithVague)),
            "macro_f1": round_sig9(cm.macro_f1(Scope::WithVague)),
        },
        "ece": ece_value,
        "nll": nll_value,
        "ece_bins": s.ece_bins,
    });
    let mut text = summary.to_string();
    text.push('\n');
    fs::write(out.join(EVALUATION_FILE), text)?;
    Ok(summary)
}

fn cmd_timeline(args: &SplitArgs) -> CliResult<Value> {
    let s = Settings::load(&args.common)?;
    let out = &args.common.out;
    let split = Split::parse(&args.split)?;
    let corpus = load_split(out, split, &s.labels)?;
    let preds = load_predictions(out, &s.labels)?;

    // Group pairs per document; event ids are derived from narrative
    // positions so pairs sharing an event knit into one graph.
    let mut docs: BTreeMap<&str, Vec<&CorpusRecord>> = BTreeMap::new();
    for record in &corpus {
        docs.entry(&record.doc_id).or_default().push(record);
    }

    let mut rows: Vec<TimelineRecord> = Vec::with_capacity(docs.len());
    let mut exact = 0usize;
    let mut med_sum = 0usize;
    let mut removed_total = 0usize;
    for (doc_id, pairs) in docs {
        let mut pred_obs = Vec::with_capacity(pairs.len());
        let mut gold_obs = Vec::with_capacity(pairs.len());
        for record in pairs {
            let pred = prediction_for(&preds, &record.id, split)?;
            let e1 = EventRef {
                id: format!("e{}", record.narrative_idx1),
                narrative_index: record.narrative_idx1,
            };
            let e2 = EventRef {
                id: format!("e{}", record.narrative_idx2),
                narrative_index: record.narrative_idx2,
            };
            let decision = Decision::parse(&pred.decision, &s.labels)?;
            pred_obs.push(PairObservation {
                e1: e1.clone(),
                e2: e2.clone(),
                call: RelationCall::from_decision(&decision, &s.labels)?,
                confidence: pred.confidence,
            });
            gold_obs.push(PairObservation {
                e1,
                e2,
                call: RelationCall::from_label(&record.label)?,
                confidence: 1.0,
            });
        }
        let (pred_graph, removed) = make_acyclic(&build_graph(&pred_obs)?);
        let pred_timeline = topo_sort(&pred_graph)?;
        let (gold_graph, _) = make_acyclic(&build_graph(&gold_obs)?);
        let gold_timeline = topo_sort(&gold_graph)?;
        let score = timeline_metrics(&pred_timeline, &gold_timeline)?;

        exact += usize::from(score.exact_match);
        med_sum += score.med;
        removed_total += removed.len();
        rows.push(TimelineRecord {
            doc_id: doc_id.to_string(),
            timeline: pred_timeline.order,
            removed_edges: removed
                .into_iter()
                .map(|e| RemovedEdgeRecord {
                    from: e.from,
                    to: e.to,
                    confidence: round_sig9(e.confidence),
                })
                .collect(),
            exact_match: u8::from(score.exact_match),
            med: score.med,
        });
    }

    let path = out.join(TIMELINES_FILE);
    write_jsonl(&path, &rows)?;
    let n_docs = rows.len();
    let rate = |num: usize| {
        if n_docs == 0 {
            0.0
        } else {
            round_sig9(num as f64 / n_docs as f64)
        }
    };
    Ok(json!({
        "command": "timeline",
        "split": split.name(),
        "docs": n_docs,
        "exact_match_rate": rate(exact),
        "mean_med": rate(med_sum),
        "removed_edges": removed_total,
        "timelines": path.display().to_string(),
    }))
}

fn cmd_reliability(args: &SplitArgs) -> CliResult<Value> {
    let s = Settings::load(&args.common)?;
    let out = &args.common.out;
    let split = Split::parse(&args.split)?;
    let corpus = load_split(out, split, &s.labels)?;
    let preds = load_predictions(out, &s.labels)?;
    let (_, scored) = joined_rows(&corpus, &preds, &s.labels, split)?;
    let report = ece(&scored, s.ece_bins)?;

    let mut csv = String::from("bin_lo,bin_hi,count,mean_conf,mean_acc\n");
    for bin in &report.bins {
        csv.push_str(&format!(
            "{},{},{},{},{}\n",
            round_sig9(bin.lo),
            round_sig9(bin.hi),
            bin.count,
            round_sig9(bin.mean_confidence),
            round_sig9(bin.mean_accuracy),
        ));
    }
    csv.push_str(&format!(
        "summary,ece,{},nll,{}\n",
        round_sig9(report.ece),
        round_sig9(report.nll),
    ));
    let path = out.join(RELIABILITY_FILE);
    fs::write(&path, csv)?;
    Ok(json!({
        "command": "reliability",
        "split": split.name(),
        "ece": round_sig9(report.ece),
        "nll": round_sig9(report.nll),
        "bins": s.ece_bins,
        "scored": scored.len(),
        "csv": path.display().to_string(),
    }))
}
