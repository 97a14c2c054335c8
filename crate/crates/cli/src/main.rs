//! `eegsz` command-line front end.
//!
//! Settings come from built-in defaults, then an optional JSON `--config`
//! file, then flags. Exit codes: 0 success, 1 computation failure, 2 usage
//! or input error.

mod config;

use anyhow::anyhow;
use clap::{Args, Parser, Subcommand};
use config::{load_config, split_ablation_config, DatasetSource, PipelineConfig};
use eegsz::dsp::{welch_psd, write_feature_csv, Band};
use eegsz::eval::{
    emit_report, find_electrode_set, prepare_network_inputs, prepare_svm_features, run_ablation, run_condition,
    AblationSummary, Condition, CvOptions, ElectrodeSet, EvalError,
};
use eegsz::ingest::{load_dataset_dir, read_store, synth_generate, write_store, DatasetManifest, IngestError};
use eegsz::models::{
    build, svm_train, szhnn_gradcheck, train, write_training_log, HybridParams, ModelError, ModelKind, SvmParams,
    TrainParams,
};
use serde::Serialize;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

const GRADCHECK_TOLERANCE: f64 = 1e-4;

#[derive(Parser, Debug)]
#[command(name = "eegsz", version, about = "EEG schizophrenia detection pipeline")]
struct Cli {
    /// Output root; defaults to ./eegsz-out.
    #[arg(long, global = true, env = "EEGSZ_OUT")]
    out: Option<PathBuf>,
    /// More log output (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Parse and segment a dataset into a segment store.
    Ingest(DataArgs),
    /// Train one model on every segment; writes the model and training log.
    Train(RunArgs),
    /// Cross-validate one condition.
    Evaluate(EvaluateArgs),
    /// Run an ablation plan from a JSON config.
    Ablate(AblateArgs),
    /// Write Welch log-PSD features as CSV.
    Psd(PsdArgs),
    /// Finite-difference check of a tiny hybrid network.
    Gradcheck(GradcheckArgs),
}

#[derive(Args, Debug, Clone, Default)]
struct DataArgs {
    /// JSON config file; flags take precedence over it.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Dataset directory (with index.json), segment store (with
    /// manifest.json), or `synthetic`.
    #[arg(long)]
    dataset: Option<String>,
    /// Seed for every random choice; required.
    #[arg(long)]
    seed: Option<u64>,
    /// Window length in seconds; defaults per dataset.
    #[arg(long)]
    window: Option<f64>,
    /// Window overlap fraction in [0, 1).
    #[arg(long)]
    overlap: Option<f64>,
    /// Synthetic subjects per class.
    #[arg(long)]
    subjects: Option<usize>,
    /// Synthetic channel count.
    #[arg(long)]
    channels: Option<usize>,
    /// Synthetic samples per recording.
    #[arg(long)]
    samples: Option<usize>,
    /// Synthetic sample rate, Hz.
    #[arg(long)]
    rate: Option<f64>,
}

#[derive(Args, Debug, Clone, Default)]
struct RunArgs {
    #[command(flatten)]
    data: DataArgs,
    #[arg(long)]
    model: Option<ModelKind>,
    /// theta, alpha, beta, gamma or all.
    #[arg(long)]
    band: Option<Band>,
    /// Electrode set name (frontal, temporal-parietal, central-occipital)
    /// or `all`.
    #[arg(long)]
    electrodes: Option<String>,
    #[arg(long)]
    epochs: Option<usize>,
    #[arg(long)]
    batch_size: Option<usize>,
    #[arg(long)]
    lr: Option<f64>,
    #[arg(long)]
    decay: Option<f64>,
    /// Hybrid filters per stage, e.g. 5,10.
    #[arg(long, value_delimiter = ',')]
    filters: Option<Vec<usize>>,
    /// Hybrid kernel lengths per stage, e.g. 15,10.
    #[arg(long, value_delimiter = ',')]
    kernels: Option<Vec<usize>>,
    #[arg(long)]
    lstm_units: Option<usize>,
    /// SVM regularization.
    #[arg(long)]
    svm_c: Option<f64>,
    #[arg(long)]
    svm_epochs: Option<usize>,
}

#[derive(Args, Debug, Clone, Default)]
struct CvArgs {
    #[arg(long)]
    folds: Option<usize>,
    /// Keep every subject's segments in one fold.
    #[arg(long)]
    subject_aware: bool,
    /// Folds trained concurrently.
    #[arg(long)]
    jobs: Option<usize>,
}

#[derive(Args, Debug)]
struct EvaluateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    cv: CvArgs,
    /// Only run the gradient smoke check; exit 0 iff it passes.
    #[arg(long)]
    gradcheck: bool,
}

#[derive(Args, Debug)]
struct AblateArgs {
    #[command(flatten)]
    run: RunArgs,
    #[command(flatten)]
    cv: CvArgs,
}

#[derive(Args, Debug)]
struct PsdArgs {
    #[command(flatten)]
    data: DataArgs,
    /// Bins kept in the CSV.
    #[arg(long)]
    band: Option<Band>,
    #[arg(long)]
    electrodes: Option<String>,
}

#[derive(Args, Debug)]
struct GradcheckArgs {
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

/// An error with its exit code.
#[derive(Debug)]
struct Failure {
    code: u8,
    error: anyhow::Error,
}

type CliResult<T> = std::result::Result<T, Failure>;

fn usage(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 2, error: error.into() }
}

fn compute(error: impl Into<anyhow::Error>) -> Failure {
    Failure { code: 1, error: error.into() }
}

/// Bad input is a usage error; anything that goes wrong while computing is
/// a computation failure.
fn classify_eval(e: EvalError) -> Failure {
    match &e {
        EvalError::Electrode(_) | EvalError::Ingest(_) | EvalError::Split(_) | EvalError::Io { .. } => usage(e),
        EvalError::Model(ModelError::Config(_) | ModelError::Data(_)) => usage(e),
        _ => compute(e),
    }
}

fn classify_model(e: ModelError) -> Failure {
    match e {
        ModelError::Config(_) | ModelError::Data(_) => usage(e),
        _ => compute(e),
    }
}

/// Attaches a message and marks the error as bad input.
trait FailureContext<T> {
    fn usage_ctx(self, msg: impl FnOnce() -> String) -> CliResult<T>;
}

impl<T, E: Into<anyhow::Error>> FailureContext<T> for std::result::Result<T, E> {
    fn usage_ctx(self, msg: impl FnOnce() -> String) -> CliResult<T> {
        self.map_err(|e| usage(e.into().context(msg())))
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(f) => {
            eprintln!("error: {:#}", f.error);
            ExitCode::from(f.code)
        }
    }
}

fn run(cli: Cli) -> CliResult<()> {
    let out_flag = cli.out.clone();
    match cli.command {
        Command::Ingest(a) => cmd_ingest(resolve(&a, None, None, out_flag)?),
        Command::Train(a) => cmd_train(resolve(&a.data, Some(&a), None, out_flag)?),
        Command::Evaluate(a) if a.gradcheck => cmd_gradcheck(a.run.data.seed.unwrap_or(0)),
        Command::Evaluate(a) => cmd_evaluate(resolve(&a.run.data, Some(&a.run), Some(&a.cv), out_flag)?),
        Command::Ablate(a) => cmd_ablate(&a, out_flag),
        Command::Psd(a) => {
            let run = RunArgs { data: a.data.clone(), band: a.band, electrodes: a.electrodes.clone(), ..RunArgs::default() };
            cmd_psd(resolve(&a.data, Some(&run), None, out_flag)?)
        }
        Command::Gradcheck(a) => cmd_gradcheck(a.seed),
    }
}

/// Layers flags over the config file.
fn resolve(data: &DataArgs, run: Option<&RunArgs>, cv: Option<&CvArgs>, out: Option<PathBuf>) -> CliResult<PipelineConfig> {
    let mut cfg = match &data.config {
        Some(path) => load_config(path).map_err(usage)?,
        None => PipelineConfig::default(),
    };
    apply_flags(&mut cfg, data, run, cv, out);
    cfg.validate().map_err(usage)?;
    Ok(cfg)
}

fn apply_flags(cfg: &mut PipelineConfig, data: &DataArgs, run: Option<&RunArgs>, cv: Option<&CvArgs>, out: Option<PathBuf>) {
    macro_rules! set {
        ($dst:expr, $src:expr) => {
            if let Some(v) = $src.clone() {
                $dst = Some(v);
            }
        };
    }
    set!(cfg.dataset, data.dataset);
    set!(cfg.seed, data.seed);
    set!(cfg.window_s, data.window);
    set!(cfg.overlap, data.overlap);
    set!(cfg.synthetic.subjects_per_class, data.subjects);
    set!(cfg.synthetic.channels, data.channels);
    set!(cfg.synthetic.samples, data.samples);
    set!(cfg.synthetic.sample_rate_hz, data.rate);
    set!(cfg.out, out);
    if let Some(r) = run {
        set!(cfg.model, r.model);
        set!(cfg.band, r.band);
        set!(cfg.electrode_set, r.electrodes);
        set!(cfg.epochs, r.epochs);
        set!(cfg.batch_size, r.batch_size);
        set!(cfg.learning_rate, r.lr);
        set!(cfg.decay, r.decay);
        set!(cfg.filters, r.filters);
        set!(cfg.kernels, r.kernels);
        set!(cfg.lstm_units, r.lstm_units);
        set!(cfg.svm_c, r.svm_c);
        set!(cfg.svm_epochs, r.svm_epochs);
    }
    if let Some(c) = cv {
        set!(cfg.folds, c.folds);
        set!(cfg.jobs, c.jobs);
        if c.subject_aware {
            cfg.subject_aware = Some(true);
        }
    }
}

fn load_dataset(cfg: &PipelineConfig, source: &DatasetSource) -> CliResult<DatasetManifest> {
    let seed = cfg.seed.expect("validated");
    match source {
        DatasetSource::Synthetic => {
            let spec = cfg.synth_spec(seed);
            let recs = synth_generate(&spec).usage_ctx(|| "synthetic data".into())?;
            let window = cfg.window_s.unwrap_or(spec.samples as f64 / spec.sample_rate_hz);
            DatasetManifest::from_recordings(eegsz::ingest::DatasetId::Synthetic, &recs, window, cfg.overlap.unwrap_or(0.0))
                .usage_ctx(|| "segmenting synthetic data".into())
        }
        DatasetSource::Path(dir) => {
            if !dir.is_dir() {
                return Err(usage(anyhow!("dataset directory {} does not exist", dir.display())));
            }
            if dir.join("manifest.json").exists() {
                return read_store(dir).usage_ctx(|| format!("reading segment store {}", dir.display()));
            }
            let (id, recs) = load_dataset_dir(dir).map_err(|errors| {
                for e in &errors {
                    eprintln!("{e}");
                }
                usage(anyhow!("{} file(s) in {} failed to load", errors.len(), dir.display()))
            })?;
            let window = match cfg.window_s.or(id.default_window_s()) {
                Some(w) => w,
                None => return Err(usage(anyhow!("--window is required for {id}"))),
            };
            DatasetManifest::from_recordings(id, &recs, window, cfg.overlap.unwrap_or(0.0))
                .usage_ctx(|| format!("segmenting {}", dir.display()))
        }
    }
}

fn electrode_set(cfg: &PipelineConfig, data: &DatasetManifest) -> CliResult<Option<ElectrodeSet>> {
    match cfg.electrode_set.as_deref() {
        None => Ok(None),
        Some(name) if name.eq_ignore_ascii_case("all") => Ok(None),
        Some(name) => {
            let defs = if cfg.electrode_definitions.is_empty() {
                ElectrodeSet::defaults(data.dataset)
            } else {
                cfg.electrode_definitions.clone()
            };
            find_electrode_set(&defs, name).map(Some).map_err(usage)
        }
    }
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> CliResult<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(compute)?;
    text.push('\n');
    fs::write(path, text).usage_ctx(|| format!("writing {}", path.display()))
}

fn create_dir(dir: &Path) -> CliResult<()> {
    fs::create_dir_all(dir).usage_ctx(|| format!("creating {}", dir.display()))
}

fn cmd_ingest(cfg: PipelineConfig) -> CliResult<()> {
    let source = cfg.dataset_source().map_err(usage)?;
    let data = load_dataset(&cfg, &source)?;
    let dir = cfg.out_dir().join("store");
    let info = write_store(&dir, &data).map_err(|e: IngestError| usage(e))?;
    println!(
        "{} segments ({} control, {} patient), {}x{} at {} Hz -> {}",
        data.len(),
        info.class_counts[0],
        info.class_counts[1],
        info.channels,
        info.samples,
        info.sample_rate_hz,
        dir.display()
    );
    println!("content hash {}", info.content_hash);
    Ok(())
}

#[derive(Serialize)]
struct TrainSummary {
    id: String,
    model: ModelKind,
    band: Band,
    channels: Vec<String>,
    segments: usize,
    train_accuracy: f64,
    params: serde_json::Value,
}

fn cmd_train(cfg: PipelineConfig) -> CliResult<()> {
    let source = cfg.dataset_source().map_err(usage)?;
    let data = load_dataset(&cfg, &source)?;
    let electrodes = electrode_set(&cfg, &data)?;
    let cond = cfg.condition(electrodes.clone());
    let seed = cfg.seed.expect("validated");
    let channels = match &electrodes {
        Some(set) => set.indices(&data.channel_names).map_err(usage)?,
        None => (0..data.channel_names.len()).collect(),
    };
    let dir = cfg.out_dir().join(cond.id(data.dataset, seed));
    create_dir(&dir)?;
    let labels = data.labels();

    let (train_accuracy, params) = if cond.model.is_network() {
        let inputs = prepare_network_inputs(&data, cond.band, &channels).map_err(classify_eval)?;
        let config = build(cond.model, &[channels.len(), data.shape().1], &cond.hybrid).map_err(classify_model)?;
        let examples: Vec<_> = inputs.iter().zip(labels.iter().copied()).collect();
        let params = TrainParams { seed, ..cfg.train_params() };
        let (net, run) = train(&config, &examples, &[], &params).map_err(classify_model)?;
        let acc = eegsz::models::accuracy(&net, &examples).map_err(classify_model)?;
        let checkpoint = net.to_checkpoint(run.steps).to_json().map_err(compute)?;
        fs::write(dir.join("model.json"), checkpoint).usage_ctx(|| "writing model.json".into())?;
        let mut log = Vec::new();
        write_training_log(&mut log, &run).map_err(compute)?;
        fs::write(dir.join("log.csv"), log).usage_ctx(|| "writing log.csv".into())?;
        (acc, serde_json::to_value(params).map_err(compute)?)
    } else {
        let features = prepare_svm_features(&data, cond.band, &channels).map_err(classify_eval)?;
        let params = SvmParams { seed, ..cfg.svm_params() };
        let model = svm_train(&features, &labels, &params).map_err(classify_model)?;
        let acc = model.accuracy(&features, &labels).map_err(classify_model)?;
        write_json(&dir.join("model.json"), &model)?;
        (acc, serde_json::to_value(params).map_err(compute)?)
    };
    let summary = TrainSummary {
        id: cond.id(data.dataset, seed),
        model: cond.model,
        band: cond.band,
        channels: channels.iter().map(|&c| data.channel_names[c].clone()).collect(),
        segments: data.len(),
        train_accuracy,
        params,
    };
    write_json(&dir.join("train.json"), &summary)?;
    println!("{}: training accuracy {:.4} -> {}", summary.id, train_accuracy, dir.display());
    Ok(())
}

fn cmd_evaluate(cfg: PipelineConfig) -> CliResult<()> {
    let source = cfg.dataset_source().map_err(usage)?;
    let data = load_dataset(&cfg, &source)?;
    let cond = cfg.condition(electrode_set(&cfg, &data)?);
    let outcome = run_condition(&data, &cond, &cfg.cv_options()).map_err(classify_eval)?;
    println!(
        "{}: mean accuracy {:.4} over {} folds",
        outcome.report.id, outcome.report.mean_accuracy, outcome.report.folds
    );
    let summary = AblationSummary { outcomes: vec![outcome], ..AblationSummary::default() };
    emit_report(&cfg.out_dir(), &summary).map_err(classify_eval)?;
    Ok(())
}

fn cmd_ablate(args: &AblateArgs, out: Option<PathBuf>) -> CliResult<()> {
    let (mut cfg, plan) = match &args.run.data.config {
        Some(path) => split_ablation_config(path).map_err(usage)?,
        None => return Err(usage(anyhow!("ablate needs --config with the ablation plan"))),
    };
    apply_flags(&mut cfg, &args.run.data, Some(&args.run), Some(&args.cv), out);
    cfg.validate().map_err(usage)?;
    let sources = cfg.dataset_sources().map_err(usage)?;
    let root = cfg.out_dir();
    for (i, source) in sources.iter().enumerate() {
        let data = load_dataset(&cfg, source)?;
        let dir = if sources.len() == 1 { root.clone() } else { root.join(format!("{}-{i}", data.dataset)) };
        let summary = run_ablation(&data, &plan, &cfg.cv_options()).map_err(classify_eval)?;
        emit_report(&dir, &summary).map_err(classify_eval)?;
        for o in &summary.outcomes {
            println!("{}: mean accuracy {:.4}", o.report.id, o.report.mean_accuracy);
        }
        println!("{} condition(s) -> {}", summary.outcomes.len(), dir.display());
    }
    Ok(())
}

fn cmd_psd(cfg: PipelineConfig) -> CliResult<()> {
    let source = cfg.dataset_source().map_err(usage)?;
    let data = load_dataset(&cfg, &source)?;
    let electrodes = electrode_set(&cfg, &data)?;
    let channels = match &electrodes {
        Some(set) => set.indices(&data.channel_names).map_err(usage)?,
        None => (0..data.channel_names.len()).collect(),
    };
    let band = cfg.band.unwrap_or(Band::All).def();
    let mut feats = Vec::with_capacity(data.len());
    let mut segs = Vec::with_capacity(data.len());
    for seg in &data.segments {
        let subset = seg.with_data(channels.iter().map(|&c| seg.data[c].clone()).collect());
        feats.push(welch_psd(&subset, data.sample_rate_hz).map_err(compute)?.with_band(band.lo_hz, band.hi_hz));
        segs.push(subset);
    }
    let names: Vec<String> = channels.iter().map(|&c| data.channel_names[c].clone()).collect();
    let rows: Vec<_> = segs.iter().zip(&feats).collect();
    let dir = cfg.out_dir();
    create_dir(&dir)?;
    let path = dir.join(format!("psd_{}.csv", band.band));
    let file = fs::File::create(&path).usage_ctx(|| format!("creating {}", path.display()))?;
    write_feature_csv(std::io::BufWriter::new(file), &names, &rows).map_err(compute)?;
    println!("{} segments -> {}", rows.len(), path.display());
    Ok(())
}

fn cmd_gradcheck(seed: u64) -> CliResult<()> {
    let report = szhnn_gradcheck(seed).map_err(compute)?;
    println!(
        "max relative error {:.3e} over {} entries (worst at {})",
        report.max_relative_error, report.checked, report.worst
    );
    if report.max_relative_error < GRADCHECK_TOLERANCE {
        Ok(())
    } else {
        Err(compute(anyhow!("gradient check failed: {:.3e} >= {GRADCHECK_TOLERANCE:e}", report.max_relative_error)))
    }
}

impl PipelineConfig {
    fn condition(&self, electrodes: Option<ElectrodeSet>) -> Condition {
        let mut hybrid = HybridParams::default();
        if let Some(f) = &self.filters {
            hybrid.filters = f.clone();
        }
        if let Some(k) = &self.kernels {
            hybrid.kernels = k.clone();
        }
        if let Some(u) = self.lstm_units {
            hybrid.lstm_units = u;
        }
        Condition {
            model: self.model.unwrap_or(ModelKind::Szhnn),
            band: self.band.unwrap_or(Band::All),
            electrodes,
            hybrid,
        }
    }

    fn out_dir(&self) -> PathBuf {
        self.out.clone().unwrap_or_else(|| PathBuf::from("eegsz-out"))
    }

    fn train_params(&self) -> TrainParams {
        let d = TrainParams::default();
        TrainParams {
            epochs: self.epochs.unwrap_or(d.epochs),
            batch_size: self.batch_size.unwrap_or(d.batch_size),
            learning_rate: self.learning_rate.unwrap_or(d.learning_rate),
            decay: self.decay.unwrap_or(d.decay),
            ..d
        }
    }

    fn svm_params(&self) -> SvmParams {
        let d = SvmParams::default();
        SvmParams { c: self.svm_c.unwrap_or(d.c), epochs: self.svm_epochs.unwrap_or(d.epochs), ..d }
    }

    fn cv_options(&self) -> CvOptions {
        let d = CvOptions::default();
        CvOptions {
            folds: self.folds.unwrap_or(d.folds),
            subject_aware: self.subject_aware.unwrap_or(d.subject_aware),
            seed: self.seed.expect("validated"),
            jobs: self.jobs.unwrap_or(d.jobs),
            train: self.train_params(),
            svm: self.svm_params(),
        }
    }
}
