//! Dataset characterization: genus distributions, resolution histograms and
//! bounding-box shape statistics.

use std::collections::{BTreeMap, HashMap};
use std::fmt::Write as _;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::eval::GroundTruthBox;
use crate::taxonomy::Taxonomy;

#[derive(Debug, Error)]
pub enum DatasetError {
    #[error("manifest is empty")]
    EmptyManifest,
    #[error("manifest row {row}: {message}")]
    Manifest { row: usize, message: String },
    #[error("bin edges must be strictly increasing")]
    BinEdges,
    #[error("no image dimensions for {0:?}")]
    MissingDimensions(String),
    #[error("image {0:?} has a zero dimension")]
    ZeroDimension(String),
    #[error("box {bbox} lies outside image {image:?} ({width}x{height})")]
    OutOfFrame {
        image: String,
        bbox: crate::model::BoundingBox,
        width: u32,
        height: u32,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub image_id: String,
    pub genus: String,
    pub width: u32,
    pub height: u32,
}

/// Reads a `image_id,genus,width,height` CSV.
pub fn read_manifest(reader: impl std::io::Read) -> Result<Vec<ManifestEntry>, DatasetError> {
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
    if headers != ["image_id", "genus", "width", "height"] {
        return Err(DatasetError::Manifest {
            row: 1,
            message: format!("expected header image_id,genus,width,height, got {}", headers.join(",")),
        });
    }
    let mut out = Vec::new();
    for (i, row) in rdr.deserialize().enumerate() {
        let entry: ManifestEntry = row?;
        if entry.width == 0 || entry.height == 0 {
            return Err(DatasetError::Manifest {
                row: i + 2,
                message: format!("image {:?} has a zero dimension", entry.image_id),
            });
        }
        out.push(entry);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DistributionRow {
    pub genus: String,
    pub count: u64,
    /// Percent of the manifest, full precision.
    pub percentage: f64,
    pub in_taxonomy: bool,
}

/// Per-genus image counts sorted by count (descending), then name.
pub fn genus_distribution(
    manifest: &[ManifestEntry],
    taxonomy: &Taxonomy,
) -> Result<Vec<DistributionRow>, DatasetError> {
    let mut counts: HashMap<&str, u64> = HashMap::new();
    for e in manifest {
        *counts.entry(e.genus.as_str()).or_default() += 1;
    }
    distribution_from_counts(counts.into_iter().map(|(g, c)| (g.to_string(), c)), taxonomy)
}

/// Same as [`genus_distribution`] for pre-aggregated counts.
pub fn distribution_from_counts(
    counts: impl IntoIterator<Item = (String, u64)>,
    taxonomy: &Taxonomy,
) -> Result<Vec<DistributionRow>, DatasetError> {
    let mut merged: BTreeMap<String, u64> = BTreeMap::new();
    for (g, c) in counts {
        *merged.entry(g).or_default() += c;
    }
    let total: u64 = merged.values().sum();
    if total == 0 {
        return Err(DatasetError::EmptyManifest);
    }
    let mut rows: Vec<DistributionRow> = merged
        .into_iter()
        .map(|(genus, count)| DistributionRow {
            in_taxonomy: taxonomy.contains(&genus),
            percentage: 100.0 * count as f64 / total as f64,
            genus,
            count,
        })
        .collect();
    rows.sort_by(|a, b| b.count.cmp(&a.count).then_with(|| a.genus.cmp(&b.genus)));
    Ok(rows)
}

pub fn distribution_text(rows: &[DistributionRow]) -> String {
    let width = rows.iter().map(|r| r.genus.len()).max().unwrap_or(5).max(5);
    let mut out = format!("{:<width$}  {:>10}  {:>10}\n", "Genus", "Count", "Percent");
    for r in rows {
        let mark = if r.in_taxonomy { "" } else { "  (not in taxonomy)" };
        let _ = writeln!(
            out,
            "{:<width$}  {:>10}  {:>9.2}%{mark}",
            r.genus, r.count, r.percentage
        );
    }
    let total: u64 = rows.iter().map(|r| r.count).sum();
    let _ = writeln!(out, "{:<width$}  {:>10}", "Total", total);
    out
}

/// Powers of two from 64 through 4096.
pub fn default_resolution_edges() -> Vec<u32> {
    (6..=12).map(|p| 1u32 << p).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct HistogramBin {
    /// Exclusive lower bound (0 for the first bin).
    pub lower: u32,
    /// Inclusive upper bound; `None` for the overflow bin.
    pub upper: Option<u32>,
    pub count: u64,
}

impl HistogramBin {
    pub fn label(&self) -> String {
        match self.upper {
            Some(u) => format!("({}, {}]", self.lower, u),
            None => format!("> {}", self.lower),
        }
    }
}

/// Bins images by `max(width, height)` into `(e[i-1], e[i]]`, with a final
/// overflow bin for sizes above the last edge.
pub fn resolution_histogram(
    manifest: &[ManifestEntry],
    bin_edges: &[u32],
) -> Result<Vec<HistogramBin>, DatasetError> {
    if bin_edges.windows(2).any(|w| w[0] >= w[1]) {
        return Err(DatasetError::BinEdges);
    }
    let mut bins: Vec<HistogramBin> = bin_edges
        .iter()
        .enumerate()
        .map(|(i, &e)| HistogramBin {
            lower: if i == 0 { 0 } else { bin_edges[i - 1] },
            upper: Some(e),
            count: 0,
        })
        .collect();
    bins.push(HistogramBin {
        lower: bin_edges.last().copied().unwrap_or(0),
        upper: None,
        count: 0,
    });
    for e in manifest {
        let side = e.width.max(e.height);
        let idx = bin_edges.partition_point(|&edge| edge < side);
        bins[idx].count += 1;
    }
    Ok(bins)
}

pub fn histogram_csv(bins: &[HistogramBin]) -> String {
    let mut out = String::from("lower,upper,count\n");
    for b in bins {
        let upper = b.upper.map(|u| u.to_string()).unwrap_or_default();
        let _ = writeln!(out, "{},{},{}", b.lower, upper, b.count);
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BboxSummary {
    pub count: usize,
    pub mean_center_x: f64,
    pub mean_center_y: f64,
    pub mean_width: f64,
    pub mean_height: f64,
    pub mean_aspect_ratio: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BboxStats {
    /// Normalized `(cx, cy)`.
    pub centers: Vec<(f64, f64)>,
    /// Normalized `(w, h)`.
    pub sizes: Vec<(f64, f64)>,
    /// Box width / box height in pixels.
    pub aspect_ratios: Vec<f64>,
    pub summary: BboxSummary,
}

impl BboxStats {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("cx,cy,w,h,aspect\n");
        for ((c, s), a) in self.centers.iter().zip(&self.sizes).zip(&self.aspect_ratios) {
            let _ = writeln!(out, "{:.6},{:.6},{:.6},{:.6},{:.6}", c.0, c.1, s.0, s.1, a);
        }
        out
    }
}

/// Normalized centers, sizes and aspect ratios. `image_dims` maps image id
/// to `(width, height)`; every box must lie inside its image.
pub fn bbox_stats(
    gts: &[GroundTruthBox],
    image_dims: &HashMap<String, (u32, u32)>,
) -> Result<BboxStats, DatasetError> {
    let mut centers = Vec::with_capacity(gts.len());
    let mut sizes = Vec::with_capacity(gts.len());
    let mut aspect_ratios = Vec::with_capacity(gts.len());
    for g in gts {
        let &(w, h) = image_dims
            .get(&g.image_id)
            .ok_or_else(|| DatasetError::MissingDimensions(g.image_id.clone()))?;
        if w == 0 || h == 0 {
            return Err(DatasetError::ZeroDimension(g.image_id.clone()));
        }
        let b = &g.bbox;
        if b.x_max > i64::from(w) || b.y_max > i64::from(h) {
            return Err(DatasetError::OutOfFrame {
                image: g.image_id.clone(),
                bbox: *b,
                width: w,
                height: h,
            });
        }
        let (wf, hf) = (f64::from(w), f64::from(h));
        centers.push((
            (b.x_min + b.x_max) as f64 / (2.0 * wf),
            (b.y_min + b.y_max) as f64 / (2.0 * hf),
        ));
        sizes.push((b.width() as f64 / wf, b.height() as f64 / hf));
        aspect_ratios.push(b.width() as f64 / b.height() as f64);
    }
    let n = gts.len();
    let mean = |it: &mut dyn Iterator<Item = f64>| {
        if n == 0 {
            0.0
        } else {
            it.sum::<f64>() / n as f64
        }
    };
    let summary = BboxSummary {
        count: n,
        mean_center_x: mean(&mut centers.iter().map(|c| c.0)),
        mean_center_y: mean(&mut centers.iter().map(|c| c.1)),
        mean_width: mean(&mut sizes.iter().map(|s| s.0)),
        mean_height: mean(&mut sizes.iter().map(|s| s.1)),
        mean_aspect_ratio: mean(&mut aspect_ratios.iter().copied()),
    };
    Ok(BboxStats {
        centers,
        sizes,
        aspect_ratios,
        summary,
    })
}

pub fn class_counts(gts: &[GroundTruthBox]) -> BTreeMap<String, usize> {
    let mut out = BTreeMap::new();
    for g in gts {
        *out.entry(g.class.clone()).or_default() += 1;
    }
    out
}
