//! Confusion matrices and per-class accuracy / precision / recall / F1.
//!
//! The per-class "accuracy" column is the row-wise recall, the reading under
//! which published per-genus accuracy tables are self-consistent.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::EvalError;

/// Rows are true classes, columns predicted classes.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    labels: Vec<String>,
    counts: Vec<Vec<u64>>,
}

impl ConfusionMatrix {
    pub fn zeros(labels: Vec<String>) -> Result<Self, EvalError> {
        let mut seen = std::collections::HashSet::new();
        for l in &labels {
            if !seen.insert(l.as_str()) {
                return Err(EvalError::DuplicateLabel(l.clone()));
            }
        }
        let n = labels.len();
        Ok(Self {
            labels,
            counts: vec![vec![0; n]; n],
        })
    }

    pub fn from_counts(labels: Vec<String>, counts: Vec<Vec<u64>>) -> Result<Self, EvalError> {
        let n = labels.len();
        if counts.len() != n || counts.iter().any(|r| r.len() != n) {
            return Err(EvalError::NotSquare(n));
        }
        let mut m = Self::zeros(labels)?;
        m.counts = counts;
        Ok(m)
    }

    pub fn labels(&self) -> &[String] {
        &self.labels
    }

    pub fn counts(&self) -> &[Vec<u64>] {
        &self.counts
    }

    pub fn index_of(&self, label: &str) -> Option<usize> {
        self.labels.iter().position(|l| l == label)
    }

    fn require(&self, label: &str) -> Result<usize, EvalError> {
        self.index_of(label)
            .ok_or_else(|| EvalError::UnknownClass(label.to_string()))
    }

    pub fn add(&mut self, truth: &str, predicted: &str, n: u64) -> Result<(), EvalError> {
        let (t, p) = (self.require(truth)?, self.require(predicted)?);
        self.counts[t][p] += n;
        Ok(())
    }

    pub fn get(&self, truth: &str, predicted: &str) -> Result<u64, EvalError> {
        Ok(self.counts[self.require(truth)?][self.require(predicted)?])
    }

    pub fn support(&self, label: &str) -> Result<u64, EvalError> {
        Ok(self.counts[self.require(label)?].iter().sum())
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().flatten().sum()
    }

    /// Fraction of `truth` samples predicted as `predicted` (0 without support).
    pub fn confusion_share(&self, truth: &str, predicted: &str) -> Result<f64, EvalError> {
        let support = self.support(truth)?;
        let n = self.get(truth, predicted)?;
        Ok(if support == 0 { 0.0 } else { n as f64 / support as f64 })
    }
}

/// Tallies `(true, predicted)` pairs over `labels`.
pub fn confusion_matrix<S: AsRef<str>>(
    pairs: &[(S, S)],
    labels: &[String],
) -> Result<ConfusionMatrix, EvalError> {
    let mut m = ConfusionMatrix::zeros(labels.to_vec())?;
    for (t, p) in pairs {
        m.add(t.as_ref(), p.as_ref(), 1)?;
    }
    Ok(m)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassMetrics {
    pub class: String,
    pub accuracy: f64,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
    pub support: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassReport {
    /// One row per label, in matrix label order.
    pub per_class: Vec<ClassMetrics>,
    pub overall_accuracy: f64,
    pub macro_precision: f64,
    pub macro_recall: f64,
    pub macro_f1: f64,
    pub total: u64,
}

impl ClassReport {
    pub fn get(&self, class: &str) -> Option<&ClassMetrics> {
        self.per_class.iter().find(|m| m.class == class)
    }

    /// Aligned-column text rendering with percentages.
    pub fn to_text(&self) -> String {
        let width = self
            .per_class
            .iter()
            .map(|m| m.class.len())
            .max()
            .unwrap_or(5)
            .max("Overall".len());
        let mut out = format!(
            "{:<width$}  {:>9}  {:>9}  {:>9}  {:>9}  {:>8}\n",
            "Genus", "Accuracy", "Precision", "Recall", "F1", "Support"
        );
        out += &format!(
            "{:<width$}  {:>9.2}  {:>9.2}  {:>9.2}  {:>9.2}  {:>8}\n",
            "Overall",
            100.0 * self.overall_accuracy,
            100.0 * self.macro_precision,
            100.0 * self.macro_recall,
            100.0 * self.macro_f1,
            self.total
        );
        for m in &self.per_class {
            out += &format!(
                "{:<width$}  {:>9.2}  {:>9.2}  {:>9.2}  {:>9.2}  {:>8}\n",
                m.class,
                100.0 * m.accuracy,
                100.0 * m.precision,
                100.0 * m.recall,
                100.0 * m.f1,
                m.support
            );
        }
        out
    }
}

pub fn f1_score(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

pub fn class_report(matrix: &ConfusionMatrix) -> Result<ClassReport, EvalError> {
    let n = matrix.labels.len();
    let total = matrix.total();
    if n == 0 || total == 0 {
        return Err(EvalError::EmptyMatrix);
    }
    let mut per_class = Vec::with_capacity(n);
    let mut trace = 0;
    for (i, label) in matrix.labels.iter().enumerate() {
        let diag = matrix.counts[i][i];
        trace += diag;
        let row: u64 = matrix.counts[i].iter().sum();
        let col: u64 = matrix.counts.iter().map(|r| r[i]).sum();
        let recall = if row == 0 { 0.0 } else { diag as f64 / row as f64 };
        let precision = if col == 0 { 0.0 } else { diag as f64 / col as f64 };
        per_class.push(ClassMetrics {
            class: label.clone(),
            accuracy: recall,
            precision,
            recall,
            f1: f1_score(precision, recall),
            support: row,
        });
    }
    let mean = |f: fn(&ClassMetrics) -> f64| per_class.iter().map(f).sum::<f64>() / n as f64;
    Ok(ClassReport {
        overall_accuracy: trace as f64 / total as f64,
        macro_precision: mean(|m| m.precision),
        macro_recall: mean(|m| m.recall),
        macro_f1: mean(|m| m.f1),
        total,
        per_class,
    })
}

/// Which column of a published table a cell belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    Precision,
    Recall,
    F1,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Accuracy, Metric::Precision, Metric::Recall, Metric::F1];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::Precision => "precision",
            Metric::Recall => "recall",
            Metric::F1 => "f1",
        }
    }

    fn of(self, m: &ClassMetrics) -> f64 {
        match self {
            Metric::Accuracy => m.accuracy,
            Metric::Precision => m.precision,
            Metric::Recall => m.recall,
            Metric::F1 => m.f1,
        }
    }
}

/// A published per-class row; values are percentages, absent cells skipped.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedRow {
    pub class: String,
    pub values: BTreeMap<Metric, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PublishedTable {
    pub rows: Vec<PublishedRow>,
}

impl PublishedTable {
    /// Keeps only the given columns.
    pub fn select(&self, metrics: &[Metric]) -> PublishedTable {
        PublishedTable {
            rows: self
                .rows
                .iter()
                .map(|r| PublishedRow {
                    class: r.class.clone(),
                    values: r
                        .values
                        .iter()
                        .filter(|(m, _)| metrics.contains(m))
                        .map(|(m, v)| (*m, *v))
                        .collect(),
                })
                .collect(),
        }
    }

    /// Keeps only the named classes, in table order.
    pub fn restrict_to(&self, classes: &[&str]) -> PublishedTable {
        PublishedTable {
            rows: self
                .rows
                .iter()
                .filter(|r| classes.contains(&r.class.as_str()))
                .cloned()
                .collect(),
        }
    }

    pub fn get(&self, class: &str) -> Option<&PublishedRow> {
        self.rows.iter().find(|r| r.class == class)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CellDelta {
    pub class: String,
    pub metric: Metric,
    pub expected: f64,
    pub computed: f64,
    /// `computed - expected`, percentage points.
    pub delta: f64,
    pub within_tolerance: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct FixtureOutcome {
    pub passed: bool,
    pub tolerance_pp: f64,
    pub cells: Vec<CellDelta>,
}

impl FixtureOutcome {
    pub fn failures(&self) -> impl Iterator<Item = &CellDelta> {
        self.cells.iter().filter(|c| !c.within_tolerance)
    }
}

/// Compares computed metrics (as percentages) to `expected` cell by cell.
pub fn fixture_check(
    report: &ClassReport,
    expected: &PublishedTable,
    tolerance_pp: f64,
) -> Result<FixtureOutcome, EvalError> {
    let mut cells = Vec::new();
    for row in &expected.rows {
        let computed = report
            .get(&row.class)
            .ok_or_else(|| EvalError::UnknownClass(row.class.clone()))?;
        for (&metric, &exp) in &row.values {
            let value = 100.0 * metric.of(computed);
            let delta = value - exp;
            cells.push(CellDelta {
                class: row.class.clone(),
                metric,
                expected: exp,
                computed: value,
                delta,
                // A hair of slack so 0-tolerance comparisons survive the
                // x100 rescaling.
                within_tolerance: delta.abs() <= tolerance_pp + 1e-9,
            });
        }
    }
    Ok(FixtureOutcome {
        passed: cells.iter().all(|c| c.within_tolerance),
        tolerance_pp,
        cells,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn labels(v: &[&str]) -> Vec<String> {
        v.iter().map(|s| s.to_string()).collect()
    }

    #[test]
    fn diagonal_and_empty() {
        let l = labels(&["a", "b"]);
        let m = confusion_matrix(&[("a", "a"), ("b", "b"), ("b", "b")], &l).unwrap();
        assert_eq!(m.counts(), &[vec![1, 0], vec![0, 2]]);
        let m = confusion_matrix::<&str>(&[], &l).unwrap();
        assert_eq!(m.total(), 0);
        assert!(matches!(class_report(&m), Err(EvalError::EmptyMatrix)));
    }

    #[test]
    fn mixed_pairs_tally() {
        let l = labels(&["a", "b"]);
        let pairs = [("a", "b"), ("a", "a"), ("b", "a"), ("b", "b"), ("b", "b")];
        let m = confusion_matrix(&pairs, &l).unwrap();
        // Hand count: a->a 1, a->b 1, b->a 1, b->b 2.
        assert_eq!(m.counts(), &[vec![1, 1], vec![1, 2]]);
    }

    #[test]
    fn unknown_class_named() {
        let err = confusion_matrix(&[("a", "zzz")], &labels(&["a"])).unwrap_err();
        assert!(err.to_string().contains("zzz"));
    }

    #[test]
    fn two_by_two_report() {
        let m = ConfusionMatrix::from_counts(labels(&["0", "1"]), vec![vec![1, 1], vec![0, 2]])
            .unwrap();
        let r = class_report(&m).unwrap();
        assert_eq!(r.overall_accuracy, 0.75);
        let c0 = r.get("0").unwrap();
        assert_eq!(c0.recall, 0.5);
        assert_eq!(c0.precision, 1.0);
        assert!((c0.f1 - 2.0 / 3.0).abs() < 1e-15);
        let c1 = r.get("1").unwrap();
        // P = 2/3, R = 1 -> F1 = 0.8
        assert!((c1.f1 - 0.8).abs() < 1e-15);
        assert!((r.macro_f1 - (2.0 / 3.0 + 0.8) / 2.0).abs() < 1e-15);
    }

    #[test]
    fn f1_from_published_precision_recall() {
        let f1 = 100.0 * f1_score(0.9636, 0.9479);
        assert!((f1 - 95.57).abs() < 0.01, "{f1}");
        assert_eq!(f1_score(0.0, 0.0), 0.0);
    }

    #[test]
    fn zero_column_gives_zero_precision() {
        let m = ConfusionMatrix::from_counts(labels(&["a", "b"]), vec![vec![3, 0], vec![2, 0]])
            .unwrap();
        let r = class_report(&m).unwrap();
        assert_eq!(r.get("b").unwrap().precision, 0.0);
        assert_eq!(r.get("b").unwrap().f1, 0.0);
    }

    #[test]
    fn fixture_tolerance() {
        let m = ConfusionMatrix::from_counts(labels(&["a", "b"]), vec![vec![3, 1], vec![0, 4]])
            .unwrap();
        let r = class_report(&m).unwrap();
        let exact = PublishedTable {
            rows: r
                .per_class
                .iter()
                .map(|c| PublishedRow {
                    class: c.class.clone(),
                    values: Metric::ALL.iter().map(|&k| (k, 100.0 * k.of(c))).collect(),
                })
                .collect(),
        };
        assert!(fixture_check(&r, &exact, 0.0).unwrap().passed);

        let mut perturbed = exact.clone();
        *perturbed.rows[1].values.get_mut(&Metric::Precision).unwrap() += 0.1;
        let out = fixture_check(&r, &perturbed, 0.02).unwrap();
        assert!(!out.passed);
        let bad: Vec<_> = out.failures().collect();
        assert_eq!(bad.len(), 1);
        assert_eq!((bad[0].class.as_str(), bad[0].metric), ("b", Metric::Precision));

        let missing = PublishedTable {
            rows: vec![PublishedRow {
                class: "c".into(),
                values: BTreeMap::new(),
            }],
        };
        assert!(matches!(fixture_check(&r, &missing, 0.02), Err(EvalError::UnknownClass(_))));
    }

    #[test]
    fn rejects_malformed_matrices() {
        assert!(matches!(
            ConfusionMatrix::from_counts(labels(&["a", "b"]), vec![vec![1, 2]]),
            Err(EvalError::NotSquare(2))
        ));
        assert!(matches!(
            ConfusionMatrix::zeros(labels(&["a", "a"])),
            Err(EvalError::DuplicateLabel(_))
        ));
    }
}
