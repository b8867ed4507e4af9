//! Published reference tables bundled with the crate: per-genus
//! classification metrics, genus distributions of the core and extended
//! image sets, and the partial confusion matrix of the low-accuracy genera.

use std::collections::BTreeMap;

use crate::eval::{ConfusionMatrix, Metric, PublishedRow, PublishedTable};

const CLASSIFICATION: &str = include_str!("../data/published_classification.tsv");
const CORE_DISTRIBUTION: &str = include_str!("../data/core_distribution.tsv");
const EXTENDED_DISTRIBUTION: &str = include_str!("../data/extended_distribution.tsv");
const LOW_ACCURACY_CONFUSION: &str = include_str!("../data/low_accuracy_confusion.csv");

/// Tolerance used when comparing against published percentages, in
/// percentage points. Published values are truncated in places (e.g. 49.448
/// printed as 49.44), so the band covers truncation as well as rounding.
pub const PUBLISHED_TOLERANCE_PP: f64 = 0.02;

/// Tolerance for recomputing a published F1 from its published P and R.
pub const F1_RECOMPUTE_TOLERANCE_PP: f64 = 0.01;

fn tsv_rows(text: &str) -> impl Iterator<Item = Vec<&str>> {
    text.lines()
        .skip(1)
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split('\t').map(str::trim).collect())
}

fn num(s: &str) -> f64 {
    s.parse().unwrap_or_else(|_| panic!("bundled fixture has non-numeric cell {s:?}"))
}

fn classification_rows() -> Vec<PublishedRow> {
    tsv_rows(CLASSIFICATION)
        .map(|c| PublishedRow {
            class: c[0].to_string(),
            values: BTreeMap::from([
                (Metric::Accuracy, num(c[1])),
                (Metric::Precision, num(c[2])),
                (Metric::Recall, num(c[3])),
                (Metric::F1, num(c[4])),
            ]),
        })
        .collect()
}

/// Per-genus accuracy / precision / recall / F1 (percent), 44 rows.
pub fn published_classification() -> PublishedTable {
    PublishedTable {
        rows: classification_rows()
            .into_iter()
            .filter(|r| r.class != "Overall")
            .collect(),
    }
}

/// The overall row: accuracy plus macro precision / recall / F1.
pub fn published_overall() -> PublishedRow {
    classification_rows()
        .into_iter()
        .find(|r| r.class == "Overall")
        .expect("bundled table has an Overall row")
}

#[derive(Debug, Clone, PartialEq)]
pub struct PublishedCount {
    pub genus: String,
    pub count: u64,
    pub percentage: f64,
}

fn counts(text: &str) -> Vec<PublishedCount> {
    tsv_rows(text)
        .map(|c| PublishedCount {
            genus: c[0].to_string(),
            count: c[1].parse().expect("integer count"),
            percentage: num(c[2]),
        })
        .collect()
}

/// Genus distribution of the 9-genus core image set (plus Hybrid).
pub fn core_distribution() -> Vec<PublishedCount> {
    counts(CORE_DISTRIBUTION)
}

/// Genus distribution of the 43-genus extended image set (plus Hybrid).
pub fn extended_distribution() -> Vec<PublishedCount> {
    counts(EXTENDED_DISTRIBUTION)
}

/// Partial confusion matrix for the genera with the lowest accuracy.
///
/// Only the rows of `Favites`, `Echinophyllia` and `Symphyllia` are
/// populated; predictions outside the listed genera fall into `Other`.
pub fn low_accuracy_confusion() -> ConfusionMatrix {
    let mut triples = Vec::new();
    for line in LOW_ACCURACY_CONFUSION.lines().skip(1).filter(|l| !l.is_empty()) {
        let c: Vec<&str> = line.split(',').collect();
        triples.push((c[0], c[1], c[2].parse::<u64>().expect("integer count")));
    }
    let mut labels: Vec<String> = triples
        .iter()
        .flat_map(|t| [t.0.to_string(), t.1.to_string()])
        .collect();
    labels.sort();
    labels.dedup();
    let mut m = ConfusionMatrix::zeros(labels).expect("unique labels");
    for (t, p, n) in triples {
        m.add(t, p, n).expect("labels collected above");
    }
    m
}

/// Genera whose matrix rows [`low_accuracy_confusion`] fully specifies.
pub const LOW_ACCURACY_GENERA: [&str; 3] = ["Echinophyllia", "Favites", "Symphyllia"];

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_tables_parse() {
        assert_eq!(published_classification().rows.len(), 44);
        assert_eq!(published_overall().values[&Metric::F1], 85.65);
        assert_eq!(core_distribution().len(), 10);
        assert_eq!(core_distribution().iter().map(|r| r.count).sum::<u64>(), 8160);
        assert_eq!(extended_distribution().len(), 44);
        assert_eq!(extended_distribution().iter().map(|r| r.count).sum::<u64>(), 114_042);
    }

    #[test]
    fn low_accuracy_rows() {
        let m = low_accuracy_confusion();
        assert_eq!(m.support("Favites").unwrap(), 334);
        assert_eq!(m.support("Echinophyllia").unwrap(), 94);
        assert_eq!(m.support("Symphyllia").unwrap(), 62);
        assert_eq!(m.get("Favites", "Goniastrea").unwrap(), 36);
    }
}
