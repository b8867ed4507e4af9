//! Ecological indicators for a resolved quadrat: live cover, per-genus cover
//! and relative abundance, richness, Shannon-Wiener and Simpson indices, and
//! the dominant genus.
//!
//! Relative abundance is an area share: `p_g = pixels_g / coral_pixels`.
//! Shannon uses the natural logarithm. Simpson is reported in both the
//! Gini-Simpson (`1 - Σp²`) and dominance (`Σp²`) forms.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::mask::{resolve_overlaps, DisjointInstanceSet, MaskError, RleMask};
use crate::model::{ImageRef, QuadratScene};

/// Tolerance on `Σ p_g = 1` accepted by [`Abundances::new`].
pub const ABUNDANCE_SUM_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum MetricsError {
    #[error("degenerate quadrat: total area is 0 pixels")]
    DegenerateQuadrat,
    #[error("missing genus on instance {0}")]
    MissingGenus(usize),
    #[error("abundance {0} is negative or not finite")]
    InvalidAbundance(f64),
    #[error("abundances sum to {0}, expected 1")]
    AbundanceSum(f64),
    #[error("cover table covers {table} pixels but the scene has {scene}")]
    Inconsistent { table: u64, scene: u64 },
    #[error(transparent)]
    Mask(#[from] MaskError),
}

/// A quadrat whose instances are pairwise disjoint.
#[derive(Debug, Clone, PartialEq)]
pub struct ResolvedScene {
    image: ImageRef,
    roi: Option<RleMask>,
    instances: DisjointInstanceSet,
}

impl ResolvedScene {
    pub fn new(
        image: ImageRef,
        roi: Option<RleMask>,
        instances: DisjointInstanceSet,
    ) -> Result<Self, MetricsError> {
        let frame = RleMask::empty(image.width, image.height)?;
        if let Some(roi) = &roi {
            frame.same_dims(roi)?;
        }
        for inst in instances.instances() {
            frame.same_dims(&inst.mask)?;
        }
        Ok(Self {
            image,
            roi,
            instances,
        })
    }

    /// Resolves overlaps in `scene` and wraps the result.
    pub fn resolve(scene: &QuadratScene) -> Result<Self, MetricsError> {
        let instances = resolve_overlaps(&scene.instances)?;
        Self::new(scene.image.clone(), scene.roi.clone(), instances)
    }

    pub fn image(&self) -> &ImageRef {
        &self.image
    }

    pub fn roi(&self) -> Option<&RleMask> {
        self.roi.as_ref()
    }

    pub fn instances(&self) -> &DisjointInstanceSet {
        &self.instances
    }

    /// `N_total`: ROI area when an ROI is set, otherwise width × height.
    pub fn total_pixels(&self) -> u64 {
        match &self.roi {
            Some(roi) => roi.area(),
            None => self.image.pixel_count(),
        }
    }

    /// Instances clipped to the ROI; instances left empty are dropped.
    pub fn clipped_instances(&self) -> Result<DisjointInstanceSet, MetricsError> {
        match &self.roi {
            None => Ok(self.instances.clone()),
            Some(roi) => Ok(self.instances.shrink_with(|m| m.intersect(roi))?),
        }
    }

    /// `N_coral`: foreground pixels inside the ROI.
    pub fn coral_pixels(&self) -> Result<u64, MetricsError> {
        Ok(self
            .clipped_instances()?
            .instances()
            .iter()
            .map(|i| i.mask.area())
            .sum())
    }

    pub fn to_scene(&self) -> QuadratScene {
        QuadratScene {
            image: self.image.clone(),
            roi: self.roi.clone(),
            instances: self.instances.instances().to_vec(),
        }
    }
}

/// Live coral cover `C_initial = N_coral / N_total`.
pub fn total_cover(scene: &ResolvedScene) -> Result<f64, MetricsError> {
    let total = scene.total_pixels();
    if total == 0 {
        return Err(MetricsError::DegenerateQuadrat);
    }
    Ok(scene.coral_pixels()? as f64 / total as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenusCover {
    pub pixels: u64,
    pub cover: f64,
    pub relative_abundance: f64,
    pub instances: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenusCoverTable {
    pub rows: BTreeMap<String, GenusCover>,
    pub total_pixels: u64,
    pub coral_pixels: u64,
}

impl GenusCoverTable {
    /// Builds a table from per-genus `(pixels, instance count)` tallies.
    pub fn from_counts<S: Into<String>>(
        total_pixels: u64,
        counts: impl IntoIterator<Item = (S, u64, usize)>,
    ) -> Result<Self, MetricsError> {
        if total_pixels == 0 {
            return Err(MetricsError::DegenerateQuadrat);
        }
        let mut tally: BTreeMap<String, (u64, usize)> = BTreeMap::new();
        for (genus, pixels, instances) in counts {
            let e = tally.entry(genus.into()).or_default();
            e.0 += pixels;
            e.1 += instances;
        }
        let coral_pixels: u64 = tally.values().map(|v| v.0).sum();
        let rows = tally
            .into_iter()
            .map(|(genus, (pixels, instances))| {
                let relative_abundance = if coral_pixels == 0 {
                    0.0
                } else {
                    pixels as f64 / coral_pixels as f64
                };
                let row = GenusCover {
                    pixels,
                    cover: pixels as f64 / total_pixels as f64,
                    relative_abundance,
                    instances,
                };
                (genus, row)
            })
            .collect();
        Ok(Self {
            rows,
            total_pixels,
            coral_pixels,
        })
    }

    pub fn abundances(&self) -> Abundances {
        if self.coral_pixels == 0 {
            return Abundances(Vec::new());
        }
        Abundances(
            self.rows
                .values()
                .filter(|r| r.pixels > 0)
                .map(|r| r.relative_abundance)
                .collect(),
        )
    }
}

/// Per-genus pixel tallies over the ROI-clipped instances.
pub fn genus_cover(scene: &ResolvedScene) -> Result<GenusCoverTable, MetricsError> {
    let clipped = scene.clipped_instances()?;
    let mut counts = Vec::with_capacity(clipped.len());
    for inst in clipped.instances() {
        match &inst.genus {
            Some(g) => counts.push((g.name.clone(), inst.mask.area(), 1)),
            None => {
                let source = clipped.sources()[counts.len()];
                return Err(MetricsError::MissingGenus(source));
            }
        }
    }
    let total = scene.total_pixels();
    GenusCoverTable::from_counts(total, counts)
}

pub fn richness(table: &GenusCoverTable) -> usize {
    table.rows.values().filter(|r| r.pixels > 0).count()
}

/// Validated relative abundances: finite, positive, summing to 1.
#[derive(Debug, Clone, PartialEq)]
pub struct Abundances(Vec<f64>);

impl Abundances {
    /// Drops zero entries; rejects negatives and sums away from 1. An empty
    /// (or all-zero) input yields the empty set.
    pub fn new(values: impl IntoIterator<Item = f64>) -> Result<Self, MetricsError> {
        let mut kept = Vec::new();
        for v in values {
            if !v.is_finite() || v < 0.0 {
                return Err(MetricsError::InvalidAbundance(v));
            }
            if v > 0.0 {
                kept.push(v);
            }
        }
        if !kept.is_empty() {
            let sum: f64 = kept.iter().sum();
            if (sum - 1.0).abs() > ABUNDANCE_SUM_TOLERANCE {
                return Err(MetricsError::AbundanceSum(sum));
            }
        }
        Ok(Self(kept))
    }

    pub fn values(&self) -> &[f64] {
        &self.0
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `H' = -Σ p ln p`; 0 for the empty set.
pub fn shannon_index(abundances: &Abundances) -> f64 {
    let h: f64 = abundances.0.iter().map(|&p| -p * p.ln()).sum();
    // A single genus gives -1·ln 1 = -0.0.
    h.max(0.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimpsonVariant {
    /// `1 - Σp²`
    Gini,
    /// `Σp²`
    Dominance,
}

/// Simpson index. The empty set gives gini 0 / dominance 1.
///
/// Dominance is derived as `1 - gini` so the two variants are exact
/// complements in floating point.
pub fn simpson_index(abundances: &Abundances, variant: SimpsonVariant) -> f64 {
    let sum_sq: f64 = if abundances.0.is_empty() {
        1.0
    } else {
        abundances.0.iter().map(|p| p * p).sum()
    };
    let gini = (1.0 - sum_sq).max(0.0);
    match variant {
        SimpsonVariant::Gini => gini,
        SimpsonVariant::Dominance => 1.0 - gini,
    }
}

/// Genus with the largest cover; ties go to the lexicographically smaller name.
pub fn dominant_genus(table: &GenusCoverTable) -> Option<String> {
    if table.coral_pixels == 0 {
        return None;
    }
    // BTreeMap iterates in name order, so max_by_key keeping the first max
    // needs a reversed comparison on name.
    table
        .rows
        .iter()
        .filter(|(_, r)| r.pixels > 0)
        .max_by(|a, b| a.1.pixels.cmp(&b.1.pixels).then_with(|| b.0.cmp(a.0)))
        .map(|(g, _)| g.clone())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GenusRow {
    pub genus: String,
    pub pixels: u64,
    pub cover: f64,
    pub relative_abundance: f64,
    pub instances: usize,
}

/// The exported per-quadrat record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QuadratReport {
    pub quadrat_id: String,
    pub total_pixels: u64,
    pub coral_pixels: u64,
    pub total_cover: f64,
    pub per_genus: Vec<GenusRow>,
    pub richness: usize,
    pub shannon: f64,
    pub simpson_gini: f64,
    pub simpson_dominance: f64,
    pub dominant_genus: Option<String>,
    pub instance_count: usize,
    pub no_coral: bool,
}

impl QuadratReport {
    /// Copy with every real field rounded to 6 decimal places, as exported.
    pub fn rounded(&self) -> QuadratReport {
        let r6 = |x: f64| (x * 1e6).round() / 1e6;
        QuadratReport {
            total_cover: r6(self.total_cover),
            shannon: r6(self.shannon),
            simpson_gini: r6(self.simpson_gini),
            simpson_dominance: r6(self.simpson_dominance),
            per_genus: self
                .per_genus
                .iter()
                .map(|g| GenusRow {
                    cover: r6(g.cover),
                    relative_abundance: r6(g.relative_abundance),
                    ..g.clone()
                })
                .collect(),
            ..self.clone()
        }
    }
}

pub fn build_report(
    scene: &ResolvedScene,
    table: &GenusCoverTable,
) -> Result<QuadratReport, MetricsError> {
    let total = scene.total_pixels();
    if total == 0 {
        return Err(MetricsError::DegenerateQuadrat);
    }
    let coral = scene.coral_pixels()?;
    if table.total_pixels != total || table.coral_pixels != coral {
        return Err(MetricsError::Inconsistent {
            table: table.coral_pixels,
            scene: coral,
        });
    }
    let abundances = table.abundances();
    let per_genus = table
        .rows
        .iter()
        .filter(|(_, r)| r.pixels > 0)
        .map(|(g, r)| GenusRow {
            genus: g.clone(),
            pixels: r.pixels,
            cover: r.cover,
            relative_abundance: r.relative_abundance,
            instances: r.instances,
        })
        .collect();
    Ok(QuadratReport {
        quadrat_id: scene.image().id.clone(),
        total_pixels: total,
        coral_pixels: coral,
        total_cover: coral as f64 / total as f64,
        per_genus,
        richness: richness(table),
        shannon: shannon_index(&abundances),
        simpson_gini: simpson_index(&abundances, SimpsonVariant::Gini),
        simpson_dominance: simpson_index(&abundances, SimpsonVariant::Dominance),
        dominant_genus: dominant_genus(table),
        instance_count: table.rows.values().map(|r| r.instances).sum(),
        no_coral: coral == 0,
    })
}

/// [`genus_cover`] followed by [`build_report`].
pub fn report_for(scene: &ResolvedScene) -> Result<QuadratReport, MetricsError> {
    let table = genus_cover(scene)?;
    build_report(scene, &table)
}
