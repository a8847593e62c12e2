use std::fs;
use std::path::Path;

use slide_mil::experiment::ExperimentReport;
use slide_mil::metrics::RocCurve;
use slide_mil::{Error, Result};

use crate::commands::write_file;
use crate::plot::{confusion_svg, roc_svg};
use crate::{ReportArgs, EXIT_OK};

const SUMMARY_HEADER: [&str; 12] = [
    "dataset",
    "n_train",
    "n_test",
    "cv_auc",
    "cv_accuracy",
    "holdout_auc",
    "holdout_accuracy",
    "holdout_precision",
    "holdout_recall",
    "holdout_f1",
    "holdout_mcc",
    "external_auc",
];

fn dataset_name(path: &Path, i: usize) -> String {
    path.parent()
        .and_then(|p| p.file_name())
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| format!("report{i}"))
}

fn summary_row(name: &str, r: &ExperimentReport) -> Vec<String> {
    let cv = |m: &str| r.cv_summary.get(m).map(|s| s.rendered.clone()).unwrap_or_default();
    let h = &r.holdout.report;
    vec![
        name.to_string(),
        r.n_train.to_string(),
        r.n_test.to_string(),
        cv("auc"),
        cv("accuracy"),
        format!("{:.3}", h.auc),
        format!("{:.3}", h.accuracy),
        format!("{:.3}", h.precision),
        format!("{:.3}", h.recall),
        format!("{:.3}", h.f1),
        format!("{:.3}", h.mcc),
        r.external.as_ref().map(|e| format!("{:.3}", e.report.auc)).unwrap_or_default(),
    ]
}

fn csv_bytes(header: &[&str], rows: &[Vec<String>]) -> Result<Vec<u8>> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let io = |e: csv::Error| Error::Io(e.into());
    w.write_record(header).map_err(io)?;
    for row in rows {
        w.write_record(row).map_err(io)?;
    }
    w.into_inner().map_err(|e| Error::Io(e.into_error()))
}

/// Fixed-width text rendering of the same table.
fn text_table(header: &[&str], rows: &[Vec<String>]) -> String {
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].chars().count()).chain([header[c].len()]).max().unwrap_or(0))
        .collect();
    let line = |cells: Vec<&str>| {
        let padded: Vec<String> = cells.iter().zip(&widths).map(|(c, w)| format!("{c:<w$}")).collect();
        padded.join("  ").trim_end().to_string() + "\n"
    };
    let mut out = line(header.to_vec());
    for r in rows {
        out.push_str(&line(r.iter().map(String::as_str).collect()));
    }
    out
}

pub fn report(args: &ReportArgs) -> Result<i32> {
    if !args.names.is_empty() && args.names.len() != args.reports.len() {
        return Err(Error::Validation {
            line: None,
            message: format!("{} --name values for {} reports", args.names.len(), args.reports.len()),
        });
    }
    let mut loaded = Vec::new();
    for (i, path) in args.reports.iter().enumerate() {
        let text = fs::read_to_string(path)?;
        let report: ExperimentReport = serde_json::from_str(&text).map_err(|e| Error::Validation {
            line: None,
            message: format!("{}: {e}", path.display()),
        })?;
        let name = args.names.get(i).cloned().unwrap_or_else(|| dataset_name(path, i));
        loaded.push((name, report));
    }

    let rows: Vec<Vec<String>> = loaded.iter().map(|(n, r)| summary_row(n, r)).collect();
    write_file(&args.out.join("summary.csv"), csv_bytes(&SUMMARY_HEADER, &rows)?)?;
    let table = text_table(&SUMMARY_HEADER, &rows);
    write_file(&args.out.join("summary.txt"), &table)?;
    print!("{table}");

    let mut curves: Vec<(String, &RocCurve, f64)> = Vec::new();
    for (name, r) in &loaded {
        curves.push((name.clone(), &r.holdout.roc, r.holdout.report.auc));
        if let Some(ext) = &r.external {
            curves.push((format!("{name} (external)"), &ext.roc, ext.report.auc));
        }
    }
    write_file(&args.out.join("roc.svg"), roc_svg("ROC, hold-out", &curves))?;
    for (i, (name, r)) in loaded.iter().enumerate() {
        let svg = confusion_svg(&format!("Confusion matrix, {name}"), &r.holdout.report.confusion);
        write_file(&args.out.join(format!("confusion_{i}.svg")), svg)?;
    }

    if loaded.len() > 1 {
        let rows: Vec<Vec<String>> = loaded
            .iter()
            .map(|(name, r)| match r.cv_summary.get("auc") {
                Some(s) => vec![name.clone(), format!("{:.3}", s.mean), format!("{:.3}", s.std), s.rendered.clone()],
                None => vec![name.clone(), String::new(), String::new(), String::new()],
            })
            .collect();
        let header = ["dataset", "auc_mean", "auc_std", "auc"];
        write_file(&args.out.join("comparison.csv"), csv_bytes(&header, &rows)?)?;
    }
    Ok(EXIT_OK)
}
