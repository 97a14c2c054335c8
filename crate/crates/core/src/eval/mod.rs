//! Cross-validation, band / electrode / hyperparameter ablations and the
//! ANOVA and paired t-test statistics used to compare them.

mod condition;
mod folds;
mod report;
mod stats;

pub use condition::{
    prepare_network_inputs, prepare_svm_features, run_ablation, run_condition, sweep_hyperparams, AblationPlan,
    AblationSummary, AnovaEntry, Condition, ConditionOutcome, CvOptions, EvalReport, TTestEntry,
};
pub use folds::{make_folds, FoldPlan};
pub use report::{emit_report, read_report_bundle, ReportBundle, CURVES_CSV_HEADER, REPORTS_CSV_HEADER};
pub use stats::{anova_two_factor, f_sf, paired_t_test, t_two_sided, AnovaResult, TTestResult};

use crate::dsp::DspError;
use crate::ingest::{DatasetId, IngestError};
use crate::models::ModelError;
use serde::{Deserialize, Serialize};

#[derive(Debug, thiserror::Error)]
pub enum EvalError {
    #[error("shape error: {0}")]
    Shape(String),
    #[error("fold split error: {0}")]
    Split(String),
    #[error("degenerate sample: {0}")]
    Degenerate(String),
    #[error("electrode error: {0}")]
    Electrode(String),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Dsp(#[from] DspError),
    #[error(transparent)]
    Ingest(#[from] IngestError),
    #[error("I/O error on {path}: {source}")]
    Io { path: String, source: std::io::Error },
    #[error(transparent)]
    Csv(#[from] csv::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

pub type Result<T> = std::result::Result<T, EvalError>;

/// Named group of five scalp electrodes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ElectrodeSet {
    pub name: String,
    pub channels: Vec<String>,
}

pub const ELECTRODE_SET_SIZE: usize = 5;

impl ElectrodeSet {
    pub fn new(name: &str, channels: &[&str]) -> Result<Self> {
        let set = ElectrodeSet { name: name.to_string(), channels: channels.iter().map(|c| c.to_string()).collect() };
        set.validate()?;
        Ok(set)
    }

    pub fn validate(&self) -> Result<()> {
        if self.channels.len() != ELECTRODE_SET_SIZE {
            return Err(EvalError::Electrode(format!(
                "set {} has {} channels, expected {ELECTRODE_SET_SIZE}",
                self.name,
                self.channels.len()
            )));
        }
        for (i, c) in self.channels.iter().enumerate() {
            if self.channels[..i].contains(c) {
                return Err(EvalError::Electrode(format!("set {} lists {c} twice", self.name)));
            }
        }
        Ok(())
    }

    /// Default frontal, temporal-parietal and central-occipital sets. The
    /// 16-channel layout has no Fp1/Fp2/Fz, so its frontal set borrows Cz.
    pub fn defaults(dataset: DatasetId) -> Vec<ElectrodeSet> {
        let sets: [(&str, [&str; 5]); 3] = match dataset {
            DatasetId::Two => [
                ("frontal", ["F7", "F3", "F4", "F8", "Cz"]),
                ("temporal-parietal", ["T3", "T4", "T5", "T6", "Pz"]),
                ("central-occipital", ["C3", "Cz", "C4", "O1", "O2"]),
            ],
            DatasetId::One | DatasetId::Synthetic => [
                ("frontal", ["Fp1", "Fp2", "F7", "F8", "Fz"]),
                ("temporal-parietal", ["T3", "T4", "T5", "T6", "Pz"]),
                ("central-occipital", ["C3", "Cz", "C4", "O1", "O2"]),
            ],
        };
        sets.iter().map(|(n, c)| ElectrodeSet::new(n, c).expect("default sets are valid")).collect()
    }

    /// Row indices of this set's channels in `channel_names`.
    pub fn indices(&self, channel_names: &[String]) -> Result<Vec<usize>> {
        self.validate()?;
        self.channels
            .iter()
            .map(|c| {
                channel_names.iter().position(|n| n.eq_ignore_ascii_case(c)).ok_or_else(|| {
                    EvalError::Electrode(format!("unknown electrode {c:?} in set {}", self.name))
                })
            })
            .collect()
    }
}

/// Looks a set up by name among `sets`.
pub fn find_electrode_set(sets: &[ElectrodeSet], name: &str) -> Result<ElectrodeSet> {
    sets.iter()
        .find(|s| s.name.eq_ignore_ascii_case(name))
        .cloned()
        .ok_or_else(|| EvalError::Electrode(format!("no electrode set named {name:?}")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::DATASET1_CHANNELS;

    #[test]
    fn defaults_resolve_on_both_layouts() {
        let d1: Vec<String> = DATASET1_CHANNELS.iter().map(|s| s.to_string()).collect();
        for set in ElectrodeSet::defaults(DatasetId::One) {
            assert_eq!(set.indices(&d1).unwrap().len(), 5);
        }
        let d2: Vec<String> = crate::ingest::DATASET2_CHANNELS.iter().map(|s| s.to_string()).collect();
        for set in ElectrodeSet::defaults(DatasetId::Two) {
            assert_eq!(set.indices(&d2).unwrap().len(), 5);
        }
    }

    #[test]
    fn unknown_electrode() {
        let set = ElectrodeSet::new("odd", &["Fp1", "Fp2", "F7", "F8", "X9"]).unwrap();
        let names: Vec<String> = DATASET1_CHANNELS.iter().map(|s| s.to_string()).collect();
        assert!(matches!(set.indices(&names), Err(EvalError::Electrode(_))));
    }

    #[test]
    fn size_enforced() {
        assert!(ElectrodeSet::new("short", &["Fp1", "Fp2"]).is_err());
        assert!(ElectrodeSet::new("dup", &["Fp1", "Fp1", "F7", "F8", "Fz"]).is_err());
    }

    #[test]
    fn lookup_by_name() {
        let sets = ElectrodeSet::defaults(DatasetId::One);
        assert_eq!(find_electrode_set(&sets, "Frontal").unwrap().channels[0], "Fp1");
        assert!(find_electrode_set(&sets, "occipital").is_err());
    }
}
