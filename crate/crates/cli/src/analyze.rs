use std::io::Write;
use std::path::{Path, PathBuf};

use reef_core::export::{report_json, reports_csv};
use reef_core::QuadratReport;
use reef_pipeline::{
    analyze_batch, analyze_quadrat, BackendRegistry, BatchSummary, QuadratFailure, QuadratImage,
    QuadratInput,
};
use serde::Serialize;

use crate::config::Resolved;
use crate::error::CliError;
use crate::output::{emit, write_atomic};

const IMAGE_EXTENSIONS: [&str; 3] = ["png", "jpg", "jpeg"];

#[derive(Serialize)]
struct BatchOutput<'a> {
    reports: Vec<QuadratReport>,
    summary: BatchSummary,
    failures: Vec<&'a QuadratFailure>,
}

fn r6(x: f64) -> f64 {
    (x * 1e6).round() / 1e6
}

/// Image files directly inside `dir`, sorted by name.
fn list_images(dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    let entries = std::fs::read_dir(dir).map_err(|e| CliError::io(dir, e))?;
    let mut out = Vec::new();
    for entry in entries {
        let path = entry.map_err(|e| CliError::io(dir, e))?.path();
        let ext = path
            .extension()
            .and_then(|e| e.to_str())
            .map(str::to_ascii_lowercase)
            .unwrap_or_default();
        if path.is_file() && IMAGE_EXTENSIONS.contains(&ext.as_str()) {
            out.push(path);
        }
    }
    out.sort();
    if out.is_empty() {
        return Err(CliError::Invalid(format!("{}: no PNG or JPEG files", dir.display())));
    }
    Ok(out)
}

pub fn run(input: &Path, cfg: &Resolved, stdout: &mut dyn Write, stderr: &mut dyn Write) -> Result<(), CliError> {
    if !input.exists() {
        return Err(CliError::io(input, std::io::ErrorKind::NotFound.into()));
    }
    let backends = BackendRegistry::default().build(&cfg.detector, &cfg.segmenter, &cfg.classifier, &cfg.context)?;

    if !input.is_dir() {
        let image = QuadratImage::open(input).map_err(reef_pipeline::PipelineError::from)?;
        let report = analyze_quadrat(&image, &backends, &cfg.pipeline)?;
        emit(cfg.out.as_deref(), &(report_json(&report) + "\n"), stdout)?;
        if let Some(csv) = &cfg.csv {
            write_atomic(csv, reports_csv(std::slice::from_ref(&report)).as_bytes())?;
        }
        return Ok(());
    }

    let inputs: Vec<QuadratInput> = list_images(input)?.into_iter().map(QuadratInput::Path).collect();
    let batch = analyze_batch(&inputs, &backends, &cfg.pipeline)?;
    let reports: Vec<QuadratReport> = batch.reports().cloned().collect();
    let failures: Vec<&QuadratFailure> = batch.failures().collect();
    let summary = BatchSummary {
        mean_total_cover: r6(batch.summary.mean_total_cover),
        mean_genus_cover: batch
            .summary
            .mean_genus_cover
            .iter()
            .map(|(g, v)| (g.clone(), r6(*v)))
            .collect(),
        ..batch.summary.clone()
    };
    let out = BatchOutput {
        reports: reports.iter().map(QuadratReport::rounded).collect(),
        summary,
        failures: failures.clone(),
    };
    let json = serde_json::to_string_pretty(&out).expect("batch output serializes") + "\n";
    emit(cfg.out.as_deref(), &json, stdout)?;
    if let Some(csv) = &cfg.csv {
        write_atomic(csv, reports_csv(&reports).as_bytes())?;
    }
    for f in &failures {
        let stage = f.stage.map(|s| s.to_string()).unwrap_or_else(|| "input".into());
        let _ = writeln!(stderr, "failed: {} [{stage}] {}", f.quadrat, f.message);
    }
    if failures.is_empty() {
        Ok(())
    } else {
        Err(CliError::Partial {
            failed: failures.len(),
            total: inputs.len(),
            backend: failures.iter().any(|f| f.stage.is_some()),
        })
    }
}
