use super::{AblationSummary, AnovaEntry, EvalError, EvalReport, Result, TTestEntry};
use crate::models::write_training_log;
use serde::{Deserialize, Serialize};
use std::fs;
use std::path::Path;

pub const REPORTS_CSV_HEADER: &str =
    "id,dataset,model,band,electrode_set,filters,kernels,lstm_units,seed,folds,subject_aware,mean_accuracy,fold_accuracies";
pub const CURVES_CSV_HEADER: &str = "id,fold,epoch,train_loss,train_acc,val_acc";

/// Everything in `reports.json`.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ReportBundle {
    pub reports: Vec<EvalReport>,
    pub anova: Vec<AnovaEntry>,
    pub t_tests: Vec<TTestEntry>,
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> EvalError + '_ {
    move |source| EvalError::Io { path: path.display().to_string(), source }
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(io_err(path))
}

fn join<T: ToString>(v: &[T], sep: &str) -> String {
    v.iter().map(T::to_string).collect::<Vec<_>>().join(sep)
}

fn reports_csv(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(REPORTS_CSV_HEADER.split(','))?;
    for r in reports {
        let (filters, kernels, units) = match &r.hybrid {
            Some(h) => (join(&h.filters, ";"), join(&h.kernels, ";"), h.lstm_units.to_string()),
            None => Default::default(),
        };
        w.write_record([
            r.id.clone(),
            r.dataset.to_string(),
            r.model.to_string(),
            r.band.to_string(),
            r.electrode_set.clone().unwrap_or_else(|| "all".into()),
            filters,
            kernels,
            units,
            r.seed.to_string(),
            r.folds.to_string(),
            r.subject_aware.to_string(),
            r.mean_accuracy.to_string(),
            join(&r.fold_accuracies, ";"),
        ])?;
    }
    w.into_inner().map_err(|e| EvalError::Io { path: "reports.csv".into(), source: e.into_error() })
}

fn curves_csv(reports: &[EvalReport]) -> Result<Vec<u8>> {
    let mut w = csv::WriterBuilder::new().has_headers(false).from_writer(Vec::new());
    w.write_record(CURVES_CSV_HEADER.split(','))?;
    for r in reports {
        for (fold, curve) in r.curves.iter().enumerate() {
            for e in curve {
                w.write_record([
                    r.id.clone(),
                    fold.to_string(),
                    e.epoch.to_string(),
                    e.train_loss.to_string(),
                    e.train_acc.to_string(),
                    e.val_acc.map(|v| v.to_string()).unwrap_or_default(),
                ])?;
            }
        }
    }
    w.into_inner().map_err(|e| EvalError::Io { path: "curves.csv".into(), source: e.into_error() })
}

/// Writes `reports.json`, `reports.csv`, `curves.csv` and one directory per
/// condition holding `report.json`, `model.json` and, for networks,
/// the fold-0 `log.csv`. Output depends only on the summary, so repeated
/// runs are byte-identical.
pub fn emit_report(dir: &Path, summary: &AblationSummary) -> Result<ReportBundle> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let bundle = ReportBundle {
        reports: summary.outcomes.iter().map(|o| o.report.clone()).collect(),
        anova: summary.anova.clone(),
        t_tests: summary.t_tests.clone(),
    };
    let mut json = serde_json::to_vec_pretty(&bundle)?;
    json.push(b'\n');
    write_file(&dir.join("reports.json"), &json)?;
    write_file(&dir.join("reports.csv"), &reports_csv(&bundle.reports)?)?;
    write_file(&dir.join("curves.csv"), &curves_csv(&bundle.reports)?)?;

    for o in &summary.outcomes {
        let sub = dir.join(&o.report.id);
        fs::create_dir_all(&sub).map_err(io_err(&sub))?;
        let mut json = serde_json::to_vec_pretty(&o.report)?;
        json.push(b'\n');
        write_file(&sub.join("report.json"), &json)?;
        write_file(&sub.join("model.json"), o.model_json.as_bytes())?;
        if let Some(run) = &o.fold0_log {
            let mut buf = Vec::new();
            write_training_log(&mut buf, run)?;
            write_file(&sub.join("log.csv"), &buf)?;
        }
    }
    Ok(bundle)
}

/// Reads back the `reports.json` written by [`emit_report`].
pub fn read_report_bundle(dir: &Path) -> Result<ReportBundle> {
    let path = dir.join("reports.json");
    let text = fs::read_to_string(&path).map_err(io_err(&path))?;
    Ok(serde_json::from_str(&text)?)
}
