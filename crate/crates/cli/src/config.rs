use anyhow::{anyhow, bail, Context, Result};
use eegsz::dsp::Band;
use eegsz::eval::{AblationPlan, ElectrodeSet};
use eegsz::ingest::SynthSpec;
use eegsz::models::ModelKind;
use serde::{Deserialize, Serialize};
use std::path::{Path, PathBuf};

/// Synthetic data shape; unset fields use the defaults below.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub subjects_per_class: Option<usize>,
    pub channels: Option<usize>,
    pub samples: Option<usize>,
    pub sample_rate_hz: Option<f64>,
}

/// Every setting a command can take. Fields left unset fall back to the
/// library defaults; paths are relative to the working directory.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    /// Dataset directory, segment store or `synthetic`.
    pub dataset: Option<String>,
    /// Several datasets, for `ablate`.
    pub datasets: Vec<String>,
    pub seed: Option<u64>,
    pub window_s: Option<f64>,
    pub overlap: Option<f64>,
    pub synthetic: SynthConfig,
    pub out: Option<PathBuf>,
    pub model: Option<ModelKind>,
    pub band: Option<Band>,
    pub electrode_set: Option<String>,
    pub electrode_definitions: Vec<ElectrodeSet>,
    pub epochs: Option<usize>,
    pub batch_size: Option<usize>,
    pub learning_rate: Option<f64>,
    pub decay: Option<f64>,
    pub filters: Option<Vec<usize>>,
    pub kernels: Option<Vec<usize>>,
    pub lstm_units: Option<usize>,
    pub svm_c: Option<f64>,
    pub svm_epochs: Option<usize>,
    pub folds: Option<usize>,
    pub subject_aware: Option<bool>,
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum DatasetSource {
    Synthetic,
    Path(PathBuf),
}

impl DatasetSource {
    fn parse(s: &str) -> Result<Self> {
        if s.eq_ignore_ascii_case("synthetic") {
            return Ok(DatasetSource::Synthetic);
        }
        let path = PathBuf::from(s);
        if !path.is_dir() {
            bail!("dataset directory {} does not exist", path.display());
        }
        Ok(DatasetSource::Path(path))
    }
}

impl PipelineConfig {
    pub fn validate(&self) -> Result<()> {
        if self.seed.is_none() {
            bail!("a seed is required (--seed or \"seed\" in the config)");
        }
        if self.jobs == Some(0) {
            bail!("--jobs must be at least 1");
        }
        if let Some(o) = self.overlap {
            if !(0.0..1.0).contains(&o) {
                bail!("overlap must be in [0, 1), got {o}");
            }
        }
        for set in &self.electrode_definitions {
            set.validate()?;
        }
        Ok(())
    }

    pub fn dataset_source(&self) -> Result<DatasetSource> {
        let name = self.dataset.as_deref().ok_or_else(|| anyhow!("no dataset given (--dataset)"))?;
        DatasetSource::parse(name)
    }

    /// `dataset` followed by `datasets`.
    pub fn dataset_sources(&self) -> Result<Vec<DatasetSource>> {
        let names: Vec<&String> = self.dataset.iter().chain(&self.datasets).collect();
        if names.is_empty() {
            bail!("no dataset given (--dataset or \"datasets\" in the config)");
        }
        names.into_iter().map(|n| DatasetSource::parse(n)).collect()
    }

    pub fn synth_spec(&self, seed: u64) -> SynthSpec {
        let s = &self.synthetic;
        SynthSpec {
            subjects_per_class: s.subjects_per_class.unwrap_or(20),
            channels: s.channels.unwrap_or(4),
            samples: s.samples.unwrap_or(1024),
            sample_rate_hz: s.sample_rate_hz.unwrap_or(250.0),
            seed,
        }
    }
}

fn read_json(path: &Path) -> Result<serde_json::Value> {
    let text = std::fs::read_to_string(path).with_context(|| format!("reading config {}", path.display()))?;
    serde_json::from_str(&text).with_context(|| format!("parsing config {}", path.display()))
}

pub fn load_config(path: &Path) -> Result<PipelineConfig> {
    serde_json::from_value(read_json(path)?).with_context(|| format!("in config {}", path.display()))
}

/// Keys of an ablation config that describe the plan rather than the run.
const PLAN_KEYS: [&str; 7] = ["models", "bands", "electrode_sets", "electrode_definitions", "grid", "grid_band", "seeds"];

/// An ablation config is one flat JSON object mixing plan keys (models,
/// bands, electrode sets, grid rows, seeds) with ordinary run settings.
pub fn split_ablation_config(path: &Path) -> Result<(PipelineConfig, AblationPlan)> {
    let serde_json::Value::Object(map) = read_json(path)? else {
        bail!("config {} must be a JSON object", path.display());
    };
    let (mut plan, mut run) = (serde_json::Map::new(), serde_json::Map::new());
    for (k, v) in map {
        if k == "electrode_definitions" {
            run.insert(k.clone(), v.clone());
        }
        if PLAN_KEYS.contains(&k.as_str()) {
            plan.insert(k, v);
        } else {
            run.insert(k, v);
        }
    }
    let cfg = serde_json::from_value(run.into()).with_context(|| format!("in config {}", path.display()))?;
    let plan = serde_json::from_value(plan.into()).with_context(|| format!("in plan {}", path.display()))?;
    Ok((cfg, plan))
}
