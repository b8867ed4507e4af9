//! JSON and CSV renderings of [`QuadratReport`]s. Real values are written
//! rounded to 6 decimal places.

use std::collections::BTreeSet;

use crate::eco::QuadratReport;

/// `serde_json` pretty rendering of the rounded report.
pub fn report_json(report: &QuadratReport) -> String {
    serde_json::to_string_pretty(&report.rounded()).expect("report serialization is infallible")
}

const FIXED_COLUMNS: [&str; 11] = [
    "quadrat_id",
    "total_pixels",
    "coral_pixels",
    "total_cover",
    "richness",
    "shannon",
    "simpson_gini",
    "simpson_dominance",
    "dominant_genus",
    "instance_count",
    "no_coral",
];

const GENUS_FIELDS: [&str; 4] = ["pixels", "cover", "abundance", "instances"];

/// One header row, one row per report. Per-genus columns are
/// `<genus>.pixels`, `<genus>.cover`, `<genus>.abundance` and
/// `<genus>.instances` for every genus present in any report, in
/// lexicographic genus order; absent genera are written as zeros.
pub fn reports_csv(reports: &[QuadratReport]) -> String {
    let genera: BTreeSet<&str> = reports
        .iter()
        .flat_map(|r| r.per_genus.iter().map(|g| g.genus.as_str()))
        .collect();
    let mut wtr = csv::WriterBuilder::new().from_writer(Vec::new());
    let mut header: Vec<String> = FIXED_COLUMNS.iter().map(|s| s.to_string()).collect();
    for g in &genera {
        header.extend(GENUS_FIELDS.iter().map(|f| format!("{g}.{f}")));
    }
    wtr.write_record(&header).expect("in-memory write");
    let f6 = |x: f64| format!("{x:.6}");
    for r in reports {
        let mut row = vec![
            r.quadrat_id.clone(),
            r.total_pixels.to_string(),
            r.coral_pixels.to_string(),
            f6(r.total_cover),
            r.richness.to_string(),
            f6(r.shannon),
            f6(r.simpson_gini),
            f6(r.simpson_dominance),
            r.dominant_genus.clone().unwrap_or_default(),
            r.instance_count.to_string(),
            r.no_coral.to_string(),
        ];
        for g in &genera {
            match r.per_genus.iter().find(|row| row.genus == *g) {
                Some(gr) => row.extend([
                    gr.pixels.to_string(),
                    f6(gr.cover),
                    f6(gr.relative_abundance),
                    gr.instances.to_string(),
                ]),
                None => row.extend(["0".into(), f6(0.0), f6(0.0), "0".into()]),
            }
        }
        wtr.write_record(&row).expect("in-memory write");
    }
    String::from_utf8(wtr.into_inner().expect("flush")).expect("utf-8")
}
