use super::stats::{anova_two_factor, paired_t_test, AnovaResult, TTestResult};
use super::{find_electrode_set, make_folds, ElectrodeSet, EvalError, Result};
use crate::dsp::{band_decompose, welch_psd, zscore, Band};
use crate::ingest::{DatasetId, DatasetManifest, Label};
use crate::models::{
    accuracy, build, segment_tensor, svm_train, train, EpochLog, HybridParams, ModelKind, SvmParams, TrainParams,
    TrainRun,
};
use crate::nn::Tensor;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use std::collections::BTreeSet;

/// One cell of an experiment: model, band and optional electrode subset.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Condition {
    pub model: ModelKind,
    pub band: Band,
    /// `None` uses every channel.
    pub electrodes: Option<ElectrodeSet>,
    /// Only used by the hybrid model.
    pub hybrid: HybridParams,
}

impl Condition {
    pub fn new(model: ModelKind, band: Band) -> Self {
        Condition { model, band, electrodes: None, hybrid: HybridParams::default() }
    }

    pub fn id(&self, dataset: DatasetId, seed: u64) -> String {
        let electrodes = self.electrodes.as_ref().map_or("all-channels", |e| e.name.as_str());
        let mut id = format!("{dataset}_{}_{}_{electrodes}", self.model, self.band);
        if self.model == ModelKind::Szhnn {
            id.push('_');
            id.push_str(&self.hybrid.tag());
        }
        id.push_str(&format!("_s{seed}"));
        id
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvOptions {
    pub folds: usize,
    pub subject_aware: bool,
    pub seed: u64,
    /// Folds trained concurrently.
    pub jobs: usize,
    /// Network training settings; the seed of fold `f` is `seed + f`.
    pub train: TrainParams,
    pub svm: SvmParams,
}

impl Default for CvOptions {
    fn default() -> Self {
        CvOptions {
            folds: 10,
            subject_aware: false,
            seed: 0,
            jobs: 1,
            train: TrainParams::default(),
            svm: SvmParams::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub id: String,
    pub dataset: DatasetId,
    pub model: ModelKind,
    pub band: Band,
    pub electrode_set: Option<String>,
    pub channels: Vec<String>,
    pub hybrid: Option<HybridParams>,
    pub seed: u64,
    pub folds: usize,
    pub subject_aware: bool,
    pub fold_accuracies: Vec<f64>,
    pub mean_accuracy: f64,
    /// Per-fold training curves; empty for the SVM.
    pub curves: Vec<Vec<EpochLog>>,
}

/// A report plus the fold-0 model and training log.
#[derive(Debug, Clone)]
pub struct ConditionOutcome {
    pub report: EvalReport,
    pub fold0_log: Option<TrainRun>,
    /// Network checkpoint or SVM model, as JSON.
    pub model_json: String,
}

fn channel_indices(data: &DatasetManifest, electrodes: Option<&ElectrodeSet>) -> Result<Vec<usize>> {
    match electrodes {
        Some(set) => set.indices(&data.channel_names),
        None => Ok((0..data.channel_names.len()).collect()),
    }
}

/// Band-filtered, z-scored `[channels, samples]` tensors for every segment.
pub fn prepare_network_inputs(data: &DatasetManifest, band: Band, channels: &[usize]) -> Result<Vec<Tensor>> {
    data.segments
        .iter()
        .map(|seg| {
            let subset = seg.with_data(channels.iter().map(|&c| seg.data[c].clone()).collect());
            let filtered = band_decompose(&subset, &[band], data.sample_rate_hz)?.remove(&band).expect("requested band");
            Ok(segment_tensor(&zscore(&filtered)?))
        })
        .collect()
}

/// Welch log-PSD bins inside the band, channel-major, per segment.
pub fn prepare_svm_features(data: &DatasetManifest, band: Band, channels: &[usize]) -> Result<Vec<Vec<f64>>> {
    let def = band.def();
    data.segments
        .iter()
        .map(|seg| {
            let subset = seg.with_data(channels.iter().map(|&c| seg.data[c].clone()).collect());
            let psd = welch_psd(&subset, data.sample_rate_hz)?.with_band(def.lo_hz, def.hi_hz);
            Ok(psd.feature_vector()?)
        })
        .collect()
}

struct FoldResult {
    accuracy: f64,
    run: Option<TrainRun>,
    model_json: Option<String>,
}

fn run_folds<F>(k: usize, jobs: usize, f: F) -> Result<Vec<FoldResult>>
where
    F: Fn(usize) -> Result<FoldResult> + Sync,
{
    if jobs <= 1 {
        return (0..k).map(f).collect();
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(jobs)
        .build()
        .map_err(|e| EvalError::Shape(format!("cannot start {jobs} worker threads: {e}")))?;
    // collect preserves fold order, so reports do not depend on scheduling
    pool.install(|| (0..k).into_par_iter().map(&f).collect())
}

/// Filters to the band and channels, then trains and scores one model per
/// cross-validation fold.
pub fn run_condition(data: &DatasetManifest, cond: &Condition, opts: &CvOptions) -> Result<ConditionOutcome> {
    data.validate()?;
    let channels = channel_indices(data, cond.electrodes.as_ref())?;
    let plan = make_folds(&data.segments, opts.folds, opts.seed, opts.subject_aware)?;
    let labels = data.labels();
    let fold_seed = |fold: usize| opts.seed.wrapping_add(fold as u64);
    log::info!("condition {}: {} segments, {} folds", cond.id(data.dataset, opts.seed), data.len(), opts.folds);

    let results = if cond.model.is_network() {
        let inputs = prepare_network_inputs(data, cond.band, &channels)?;
        let config = build(cond.model, &[channels.len(), data.shape().1], &cond.hybrid)?;
        run_folds(plan.k, opts.jobs, |fold| {
            let pick = |idx: Vec<usize>| -> Vec<(&Tensor, Label)> { idx.into_iter().map(|i| (&inputs[i], labels[i])).collect() };
            let (tr, te) = (pick(plan.train_indices(fold)), pick(plan.test_indices(fold)));
            let params = TrainParams { seed: fold_seed(fold), ..opts.train };
            let (net, run) = train(&config, &tr, &te, &params)?;
            let acc = accuracy(&net, &te)?;
            log::info!("  fold {fold}: accuracy {acc:.4}");
            let model_json = if fold == 0 {
                Some(net.to_checkpoint(run.steps).to_json().map_err(crate::models::ModelError::from)?)
            } else {
                None
            };
            Ok(FoldResult { accuracy: acc, run: Some(run), model_json })
        })?
    } else {
        let features = prepare_svm_features(data, cond.band, &channels)?;
        run_folds(plan.k, opts.jobs, |fold| {
            let (tr, te) = (plan.train_indices(fold), plan.test_indices(fold));
            let x: Vec<Vec<f64>> = tr.iter().map(|&i| features[i].clone()).collect();
            let y: Vec<Label> = tr.iter().map(|&i| labels[i]).collect();
            let model = svm_train(&x, &y, &SvmParams { seed: fold_seed(fold), ..opts.svm })?;
            let tx: Vec<Vec<f64>> = te.iter().map(|&i| features[i].clone()).collect();
            let ty: Vec<Label> = te.iter().map(|&i| labels[i]).collect();
            let acc = model.accuracy(&tx, &ty)?;
            log::info!("  fold {fold}: accuracy {acc:.4}");
            let model_json = if fold == 0 { Some(serde_json::to_string(&model)?) } else { None };
            Ok(FoldResult { accuracy: acc, run: None, model_json })
        })?
    };

    let fold_accuracies: Vec<f64> = results.iter().map(|r| r.accuracy).collect();
    let mean_accuracy = fold_accuracies.iter().sum::<f64>() / fold_accuracies.len() as f64;
    let curves = results.iter().filter_map(|r| r.run.as_ref().map(|run| run.log.clone())).collect();
    let mut results = results;
    let first = results.swap_remove(0);
    let report = EvalReport {
        id: cond.id(data.dataset, opts.seed),
        dataset: data.dataset,
        model: cond.model,
        band: cond.band,
        electrode_set: cond.electrodes.as_ref().map(|e| e.name.clone()),
        channels: channels.iter().map(|&c| data.channel_names[c].clone()).collect(),
        hybrid: (cond.model == ModelKind::Szhnn).then(|| cond.hybrid.clone()),
        seed: opts.seed,
        folds: plan.k,
        subject_aware: opts.subject_aware,
        fold_accuracies,
        mean_accuracy,
        curves,
    };
    Ok(ConditionOutcome { report, fold0_log: first.run, model_json: first.model_json.unwrap_or_default() })
}

/// One hybrid-model report per distinct grid row, in first-seen order.
/// Repeated rows are skipped with a warning.
pub fn sweep_hyperparams(
    data: &DatasetManifest,
    grid: &[HybridParams],
    band: Band,
    electrodes: Option<&ElectrodeSet>,
    opts: &CvOptions,
) -> Result<Vec<ConditionOutcome>> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for row in grid {
        if !seen.insert(row.clone()) {
            log::warn!("skipping duplicate grid row {}", row.tag());
            continue;
        }
        let cond = Condition { model: ModelKind::Szhnn, band, electrodes: electrodes.cloned(), hybrid: row.clone() };
        out.push(run_condition(data, &cond, opts)?);
    }
    Ok(out)
}

/// Experiment grid read from an ablation config file. Every list may be
/// empty; an entirely empty plan produces an empty summary.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationPlan {
    pub models: Vec<ModelKind>,
    pub bands: Vec<Band>,
    /// Names of electrode sets; `all` (or an empty list) uses every channel.
    pub electrode_sets: Vec<String>,
    /// Replaces the default set definitions when non-empty.
    pub electrode_definitions: Vec<ElectrodeSet>,
    /// Hybrid-model rows, run on `grid_band` with every channel.
    pub grid: Vec<HybridParams>,
    pub grid_band: Option<Band>,
    /// Repeats the whole plan per seed; empty means the run's base seed.
    pub seeds: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnovaEntry {
    pub scope: String,
    pub rows: Vec<String>,
    pub cols: Vec<String>,
    pub table: Vec<Vec<f64>>,
    pub result: Option<AnovaResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TTestEntry {
    pub scope: String,
    pub a: String,
    pub b: String,
    pub result: Option<TTestResult>,
    pub note: Option<String>,
}

#[derive(Debug, Clone, Default)]
pub struct AblationSummary {
    pub outcomes: Vec<ConditionOutcome>,
    pub anova: Vec<AnovaEntry>,
    pub t_tests: Vec<TTestEntry>,
}

fn electrode_label(e: &Option<ElectrodeSet>) -> String {
    e.as_ref().map_or_else(|| "all".to_string(), |s| s.name.clone())
}

/// Runs every model x band x electrode-set condition and every grid row,
/// then compares conditions: a models x bands ANOVA per electrode set, a
/// models x electrode-sets ANOVA per band, and paired t-tests over fold
/// accuracies between models sharing a band and electrode set.
pub fn run_ablation(data: &DatasetManifest, plan: &AblationPlan, opts: &CvOptions) -> Result<AblationSummary> {
    let definitions = if plan.electrode_definitions.is_empty() {
        ElectrodeSet::defaults(data.dataset)
    } else {
        plan.electrode_definitions.clone()
    };
    let mut electrode_sets = Vec::new();
    for name in &plan.electrode_sets {
        if name.eq_ignore_ascii_case("all") {
            electrode_sets.push(None);
        } else {
            let set = find_electrode_set(&definitions, name)?;
            set.indices(&data.channel_names)?;
            electrode_sets.push(Some(set));
        }
    }
    if electrode_sets.is_empty() {
        electrode_sets.push(None);
    }
    let seeds = if plan.seeds.is_empty() { vec![opts.seed] } else { plan.seeds.clone() };

    let mut summary = AblationSummary::default();
    for &seed in &seeds {
        let opts = CvOptions { seed, ..opts.clone() };
        // (model, band, electrodes) -> index into outcomes
        let mut cells: Vec<(ModelKind, Band, String, usize)> = Vec::new();
        for &model in &plan.models {
            for &band in &plan.bands {
                for electrodes in &electrode_sets {
                    let cond = Condition { model, band, electrodes: electrodes.clone(), hybrid: HybridParams::default() };
                    cells.push((model, band, electrode_label(electrodes), summary.outcomes.len()));
                    summary.outcomes.push(run_condition(data, &cond, &opts)?);
                }
            }
        }
        summary.outcomes.extend(sweep_hyperparams(
            data,
            &plan.grid,
            plan.grid_band.unwrap_or(Band::All),
            None,
            &opts,
        )?);

        let mean = |m: ModelKind, b: Band, e: &str| {
            cells
                .iter()
                .find(|c| c.0 == m && c.1 == b && c.2 == e)
                .map(|c| summary.outcomes[c.3].report.mean_accuracy)
                .expect("every cell was run")
        };
        let model_names: Vec<String> = plan.models.iter().map(|m| m.to_string()).collect();
        if plan.models.len() >= 2 && plan.bands.len() >= 2 {
            for e in &electrode_sets {
                let e = electrode_label(e);
                let table: Vec<Vec<f64>> =
                    plan.models.iter().map(|&m| plan.bands.iter().map(|&b| mean(m, b, &e)).collect()).collect();
                summary.anova.push(anova_entry(
                    format!("seed {seed}, electrodes {e}: models x bands"),
                    model_names.clone(),
                    plan.bands.iter().map(|b| b.to_string()).collect(),
                    table,
                ));
            }
        }
        if plan.models.len() >= 2 && electrode_sets.len() >= 2 {
            for &b in &plan.bands {
                let names: Vec<String> = electrode_sets.iter().map(electrode_label).collect();
                let table: Vec<Vec<f64>> =
                    plan.models.iter().map(|&m| names.iter().map(|e| mean(m, b, e)).collect()).collect();
                summary.anova.push(anova_entry(
                    format!("seed {seed}, band {b}: models x electrode sets"),
                    model_names.clone(),
                    names,
                    table,
                ));
            }
        }
        for &b in &plan.bands {
            for e in &electrode_sets {
                let e = electrode_label(e);
                for (i, &ma) in plan.models.iter().enumerate() {
                    for &mb in &plan.models[i + 1..] {
                        let acc = |m: ModelKind| {
                            let c = cells.iter().find(|c| c.0 == m && c.1 == b && c.2 == e).expect("cell");
                            summary.outcomes[c.3].report.fold_accuracies.clone()
                        };
                        let (result, note) = match paired_t_test(&acc(ma), &acc(mb)) {
                            Ok(r) => (Some(r), None),
                            Err(err) => (None, Some(err.to_string())),
                        };
                        summary.t_tests.push(TTestEntry {
                            scope: format!("seed {seed}, band {b}, electrodes {e}"),
                            a: ma.to_string(),
                            b: mb.to_string(),
                            result,
                            note,
                        });
                    }
                }
            }
        }
    }
    Ok(summary)
}

fn anova_entry(scope: String, rows: Vec<String>, cols: Vec<String>, table: Vec<Vec<f64>>) -> AnovaEntry {
    let (result, note) = match anova_two_factor(&table) {
        Ok(r) => (Some(r), None),
        Err(e) => (None, Some(e.to_string())),
    };
    AnovaEntry { scope, rows, cols, table, result, note }
}
