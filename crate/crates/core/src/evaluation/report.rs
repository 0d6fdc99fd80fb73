//! Training traces, accuracy–parameter series and per-fold summaries.

use std::fmt::Write as _;
use std::fs;
use std::io::{Read, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use super::metrics::{apt, format_metric, parse_metric, Metric, MetricsReport};
use crate::error::{Error, Result};

pub const TRACE_COLUMNS: [&str; 7] = ["epoch", "train_loss", "val_acc", "val_sen", "val_spe", "val_f1", "val_apt"];

/// One row of the per-epoch training trace.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TraceRow {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_acc: Metric,
    pub val_sen: Metric,
    pub val_spe: Metric,
    pub val_f1: Metric,
    pub val_apt: Metric,
}

impl TraceRow {
    pub fn new(epoch: usize, train_loss: f64, val: &MetricsReport) -> Self {
        Self {
            epoch,
            train_loss,
            val_acc: val.acc,
            val_sen: val.sen,
            val_spe: val.spe,
            val_f1: val.f1,
            val_apt: val.apt,
        }
    }
}

pub fn write_trace<W: Write>(out: W, rows: &[TraceRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(TRACE_COLUMNS)?;
    for r in rows {
        w.write_record([
            r.epoch.to_string(),
            r.train_loss.to_string(),
            format_metric(r.val_acc),
            format_metric(r.val_sen),
            format_metric(r.val_spe),
            format_metric(r.val_f1),
            format_metric(r.val_apt),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_trace<R: Read>(input: R) -> Result<Vec<TraceRow>> {
    let mut r = csv::Reader::from_reader(input);
    let header: Vec<String> = r.headers()?.iter().map(str::to_string).collect();
    if header != TRACE_COLUMNS {
        return Err(Error::MalformedEntry(format!("unexpected trace header {header:?}")));
    }
    let mut rows = Vec::new();
    for rec in r.records() {
        let rec = rec?;
        let field = |i: usize| rec.get(i).unwrap_or_default();
        let epoch = field(0)
            .parse()
            .map_err(|_| Error::MalformedEntry(format!("bad epoch {:?}", field(0))))?;
        let train_loss = field(1)
            .parse()
            .map_err(|_| Error::MalformedEntry(format!("bad loss {:?}", field(1))))?;
        rows.push(TraceRow {
            epoch,
            train_loss,
            val_acc: parse_metric(field(2))?,
            val_sen: parse_metric(field(3))?,
            val_spe: parse_metric(field(4))?,
            val_f1: parse_metric(field(5))?,
            val_apt: parse_metric(field(6))?,
        });
    }
    Ok(rows)
}

pub fn save_trace(path: &Path, rows: &[TraceRow]) -> Result<()> {
    let mut buf = Vec::new();
    write_trace(&mut buf, rows)?;
    fs::write(path, buf)?;
    Ok(())
}

pub fn load_trace(path: &Path) -> Result<Vec<TraceRow>> {
    read_trace(fs::File::open(path)?)
}

/// Accuracy series of another model, for plotting its trade-off curve
/// next to the trained one.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExternalModel {
    pub name: String,
    pub accuracy_per_epoch: Vec<f64>,
    pub params_millions: f64,
}

impl ExternalModel {
    pub fn validate(&self) -> Result<()> {
        if self.name.trim().is_empty() {
            return Err(Error::MalformedEntry("external model without a name".into()));
        }
        if !(self.params_millions > 0.0) {
            return Err(Error::MalformedEntry(format!(
                "{}: params_millions must be positive",
                self.name
            )));
        }
        if let Some(a) = self.accuracy_per_epoch.iter().find(|a| !(0.0..=1.0).contains(*a)) {
            return Err(Error::MalformedEntry(format!("{}: accuracy {a} outside [0, 1]", self.name)));
        }
        Ok(())
    }
}

pub fn load_external_models(path: &Path) -> Result<Vec<ExternalModel>> {
    let models: Vec<ExternalModel> = serde_json::from_slice(&fs::read(path)?)
        .map_err(|e| Error::MalformedEntry(format!("{}: {e}", path.display())))?;
    for m in &models {
        m.validate()?;
    }
    Ok(models)
}

/// One point of an accuracy–parameter trade-off curve.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct AptPoint {
    pub model: String,
    pub epoch: usize,
    pub acc: Metric,
    pub params_millions: f64,
    pub apt: Metric,
}

/// Merge the trained model's trace with external accuracy series.
pub fn apt_series(
    model_name: &str,
    params_millions: f64,
    trace: &[TraceRow],
    external: &[ExternalModel],
) -> Result<Vec<AptPoint>> {
    let mut points = Vec::new();
    for r in trace {
        points.push(AptPoint {
            model: model_name.to_string(),
            epoch: r.epoch,
            acc: r.val_acc,
            params_millions,
            apt: r.val_acc.map(|a| apt(a, params_millions)).transpose()?,
        });
    }
    for m in external {
        m.validate()?;
        for (i, &a) in m.accuracy_per_epoch.iter().enumerate() {
            points.push(AptPoint {
                model: m.name.clone(),
                epoch: i + 1,
                acc: Some(a),
                params_millions: m.params_millions,
                apt: Some(apt(a, m.params_millions)?),
            });
        }
    }
    Ok(points)
}

pub fn write_apt_series<W: Write>(out: W, points: &[AptPoint]) -> Result<()> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["model", "epoch", "acc", "params_millions", "apt"])?;
    for p in points {
        w.write_record([
            p.model.clone(),
            p.epoch.to_string(),
            format_metric(p.acc),
            p.params_millions.to_string(),
            format_metric(p.apt),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Summary document written next to the series CSV.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportSummary {
    pub model: String,
    pub params_millions: f64,
    pub epochs: usize,
    pub final_epoch: Option<TraceRow>,
    pub best_apt: Metric,
    pub external_models: Vec<String>,
}

pub struct ReportFiles {
    pub series_csv: PathBuf,
    pub summary_json: PathBuf,
}

/// Write `apt_series.csv` and `summary.json` into `dir`.
pub fn emit_report(
    dir: &Path,
    model_name: &str,
    params_millions: f64,
    trace: &[TraceRow],
    external: &[ExternalModel],
) -> Result<ReportFiles> {
    fs::create_dir_all(dir)?;
    let points = apt_series(model_name, params_millions, trace, external)?;
    let series_csv = dir.join("apt_series.csv");
    let mut buf = Vec::new();
    write_apt_series(&mut buf, &points)?;
    fs::write(&series_csv, buf)?;

    let summary = ReportSummary {
        model: model_name.to_string(),
        params_millions,
        epochs: trace.len(),
        final_epoch: trace.last().copied(),
        best_apt: trace.iter().filter_map(|r| r.val_apt).reduce(f64::max),
        external_models: external.iter().map(|m| m.name.clone()).collect(),
    };
    let summary_json = dir.join("summary.json");
    fs::write(&summary_json, serde_json::to_vec_pretty(&summary)?)?;
    Ok(ReportFiles {
        series_csv,
        summary_json,
    })
}

/// Evaluation of one trained fold on the validation set.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FoldEvaluation {
    pub partition: String,
    pub confusion: super::metrics::ConfusionMatrix,
    pub metrics: MetricsReport,
}

/// Per-fold table with a mean row: accuracy, sensitivity, specificity, F1.
pub fn performance_table(folds: &[FoldEvaluation]) -> String {
    let mut out = String::new();
    let _ = writeln!(
        out,
        "| {:<14} | {:>9} | {:>11} | {:>11} | {:>9} |",
        "Data Partition", "Accuracy", "Sensitivity", "Specificity", "F1 score"
    );
    let cell = |m: Metric| match m {
        Some(v) => format!("{v:.4}"),
        None => "undefined".into(),
    };
    for f in folds {
        let m = &f.metrics;
        let _ = writeln!(
            out,
            "| {:<14} | {:>9} | {:>11} | {:>11} | {:>9} |",
            f.partition,
            cell(m.acc),
            cell(m.sen),
            cell(m.spe),
            cell(m.f1)
        );
    }
    if folds.len() > 1 {
        let mean = |pick: fn(&MetricsReport) -> Metric| -> Metric {
            let vals: Option<Vec<f64>> = folds.iter().map(|f| pick(&f.metrics)).collect();
            vals.map(|v| v.iter().sum::<f64>() / v.len() as f64)
        };
        let _ = writeln!(
            out,
            "| {:<14} | {:>9} | {:>11} | {:>11} | {:>9} |",
            "Mean",
            cell(mean(|m| m.acc)),
            cell(mean(|m| m.sen)),
            cell(mean(|m| m.spe)),
            cell(mean(|m| m.f1))
        );
    }
    out
}
