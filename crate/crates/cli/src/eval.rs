use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use reef_core::eval::{
    class_report, confusion_matrix, fixture_check, mean_ap, read_ground_truth, read_pairs,
    read_predictions, ClassReport, FixtureOutcome, Metric, PublishedRow, PublishedTable,
};
use reef_core::fixtures::{published_classification, PUBLISHED_TOLERANCE_PP};
use serde::Serialize;

use crate::error::CliError;
use crate::output::{emit, write_atomic};

fn open(path: &Path) -> Result<BufReader<File>, CliError> {
    File::open(path).map(BufReader::new).map_err(|e| CliError::io(path, e))
}

pub fn detection(
    pred: &Path,
    gt: &Path,
    thresholds: &[f64],
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let preds = read_predictions(open(pred)?)?;
    let gts = read_ground_truth(open(gt)?)?;
    let report = mean_ap(&preds, &gts, thresholds)?;
    let mut text = report.to_text();
    if let Some(m) = report.map50 {
        text += &format!("mAP@0.5       {m:.4}\n");
    }
    if let Some(m) = report.map5095 {
        text += &format!("mAP@0.5:0.95  {m:.4}\n");
    }
    emit(None, &text, stdout)?;
    if let Some(p) = out {
        write_atomic(p, (serde_json::to_string_pretty(&report).expect("serializes") + "\n").as_bytes())?;
    }
    Ok(())
}

/// Reads a published table: a class column followed by any of
/// `accuracy`, `precision`, `recall`, `f1`, tab separated, in percent.
fn read_table(path: &Path) -> Result<PublishedTable, CliError> {
    let bad = |msg: String| CliError::Invalid(format!("{}: {msg}", path.display()));
    let mut rdr = csv::ReaderBuilder::new()
        .delimiter(b'\t')
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let headers = rdr.headers().map_err(|e| bad(e.to_string()))?.clone();
    let mut columns = Vec::new();
    for h in headers.iter().skip(1) {
        let m = Metric::ALL
            .into_iter()
            .find(|m| m.name() == h.to_ascii_lowercase())
            .ok_or_else(|| bad(format!("unknown column {h:?}")))?;
        columns.push(m);
    }
    let mut rows = Vec::new();
    for (i, rec) in rdr.records().enumerate() {
        let rec = rec.map_err(|e| bad(e.to_string()))?;
        let mut values = BTreeMap::new();
        for (m, cell) in columns.iter().zip(rec.iter().skip(1)) {
            if cell.is_empty() {
                continue;
            }
            let v: f64 = cell.parse().map_err(|_| bad(format!("row {}: bad number {cell:?}", i + 2)))?;
            values.insert(*m, v);
        }
        rows.push(PublishedRow {
            class: rec.get(0).unwrap_or_default().to_string(),
            values,
        });
    }
    Ok(PublishedTable { rows })
}

#[derive(Serialize)]
struct ClsOutput<'a> {
    report: &'a ClassReport,
    #[serde(skip_serializing_if = "Option::is_none")]
    fixture: Option<&'a FixtureOutcome>,
}

pub fn classification(
    pairs: &Path,
    fixtures: Option<&str>,
    out: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let pairs = read_pairs(File::open(pairs).map_err(|e| CliError::io(pairs, e))?)?;
    let labels: Vec<String> = pairs
        .iter()
        .flat_map(|(t, p)| [t.clone(), p.clone()])
        .collect::<BTreeSet<_>>()
        .into_iter()
        .collect();
    let report = class_report(&confusion_matrix(&pairs, &labels)?)?;
    let mut text = report.to_text();

    let outcome = match fixtures {
        None => None,
        Some(spec) => {
            let table = if spec == "tableA2" {
                published_classification()
            } else {
                read_table(Path::new(spec))?
            };
            let present: Vec<&str> = report
                .per_class
                .iter()
                .filter(|m| m.support > 0 && table.get(&m.class).is_some())
                .map(|m| m.class.as_str())
                .collect();
            if present.is_empty() {
                return Err(CliError::Invalid(format!("no class in the pairs appears in fixture {spec}")));
            }
            let outcome = fixture_check(&report, &table.restrict_to(&present), PUBLISHED_TOLERANCE_PP)?;
            text += &format!("\nFixture {spec} (tolerance {PUBLISHED_TOLERANCE_PP} pp)\n");
            for c in &outcome.cells {
                let mark = if c.within_tolerance { "ok" } else { "MISMATCH" };
                text += &format!(
                    "{:<20} {:<9} expected {:>6.2} computed {:>6.2} delta {:>+7.3}  {mark}\n",
                    c.class,
                    c.metric.name(),
                    c.expected,
                    c.computed,
                    c.delta
                );
            }
            Some(outcome)
        }
    };
    emit(None, &text, stdout)?;
    if let Some(p) = out {
        let body = ClsOutput {
            report: &report,
            fixture: outcome.as_ref(),
        };
        write_atomic(p, (serde_json::to_string_pretty(&body).expect("serializes") + "\n").as_bytes())?;
    }
    match outcome {
        Some(o) if !o.passed => Err(CliError::Invalid(format!(
            "{} fixture cells outside tolerance",
            o.failures().count()
        ))),
        _ => Ok(()),
    }
}
