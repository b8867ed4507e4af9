use serde::Serialize;

use super::{MaskError, RleMask, Runs};
use crate::model::InstanceMask;

/// Instances whose masks are pairwise disjoint.
///
/// Only obtainable through [`resolve_overlaps`] or the checked
/// [`DisjointInstanceSet::try_from_instances`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DisjointInstanceSet {
    instances: Vec<InstanceMask>,
    /// Index of each output instance in the resolver's input.
    #[serde(skip)]
    sources: Vec<usize>,
}

impl DisjointInstanceSet {
    pub fn empty() -> Self {
        Self {
            instances: Vec::new(),
            sources: Vec::new(),
        }
    }

    /// Accepts instances that are already disjoint; fails on the first overlap.
    pub fn try_from_instances(instances: Vec<InstanceMask>) -> Result<Self, OverlapError> {
        let runs: Vec<Runs> = instances.iter().map(|i| i.mask.runs()).collect();
        for i in 0..instances.len() {
            for j in i + 1..instances.len() {
                instances[i].mask.same_dims(&instances[j].mask)?;
                let shared = runs[i].intersection_area(&runs[j]);
                if shared > 0 {
                    return Err(OverlapError::Overlap {
                        first: i,
                        second: j,
                        pixels: shared,
                    });
                }
            }
        }
        let sources = (0..instances.len()).collect();
        Ok(Self { instances, sources })
    }

    pub fn instances(&self) -> &[InstanceMask] {
        &self.instances
    }

    pub fn sources(&self) -> &[usize] {
        &self.sources
    }

    pub fn len(&self) -> usize {
        self.instances.len()
    }

    pub fn is_empty(&self) -> bool {
        self.instances.is_empty()
    }

    pub fn into_instances(self) -> Vec<InstanceMask> {
        self.instances
    }

    /// Mutable access to labels only; masks stay fixed so disjointness holds.
    pub fn set_genus(&mut self, index: usize, genus: crate::model::GenusLabel) {
        self.instances[index].genus = Some(genus);
    }

    /// Applies `f` to every mask and keeps the non-empty results. `f` must
    /// only remove pixels (e.g. intersect with a region).
    pub(crate) fn shrink_with(
        &self,
        mut f: impl FnMut(&RleMask) -> Result<RleMask, MaskError>,
    ) -> Result<Self, MaskError> {
        let mut out = Self::empty();
        for (inst, &src) in self.instances.iter().zip(&self.sources) {
            let mask = f(&inst.mask)?;
            if let Some(bbox) = mask.tight_bbox() {
                out.instances.push(InstanceMask {
                    mask,
                    bbox,
                    ..inst.clone()
                });
                out.sources.push(src);
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum OverlapError {
    #[error(transparent)]
    Mask(#[from] MaskError),
    #[error("instances {first} and {second} share {pixels} pixels")]
    Overlap {
        first: usize,
        second: usize,
        pixels: u64,
    },
}

/// Assigns every contested pixel to the highest-confidence instance claiming
/// it (ties go to the lower input index) and drops instances left empty.
///
/// Surviving instances keep their input order, confidence and label; their
/// boxes are recomputed as the tight bbox of the resolved mask.
pub fn resolve_overlaps(instances: &[InstanceMask]) -> Result<DisjointInstanceSet, MaskError> {
    if let Some(first) = instances.first() {
        for inst in instances {
            first.mask.same_dims(&inst.mask)?;
        }
    }
    for inst in instances {
        if !(0.0..=1.0).contains(&inst.confidence) {
            return Err(MaskError::Confidence(inst.confidence));
        }
    }

    let mut priority: Vec<usize> = (0..instances.len()).collect();
    priority.sort_by(|&a, &b| {
        instances[b]
            .confidence
            .total_cmp(&instances[a].confidence)
            .then(a.cmp(&b))
    });

    let mut claimed = Runs::default();
    let mut owned: Vec<Option<Runs>> = vec![None; instances.len()];
    for idx in priority {
        let runs = instances[idx].mask.runs();
        owned[idx] = Some(runs.subtract(&claimed));
        claimed = claimed.union(&runs);
    }

    let mut out = DisjointInstanceSet::empty();
    for (idx, runs) in owned.into_iter().enumerate() {
        let runs = runs.expect("every instance visited");
        let src = &instances[idx];
        let mask = RleMask::from_runs_unchecked(src.mask.width(), src.mask.height(), &runs);
        if let Some(bbox) = mask.tight_bbox() {
            out.instances.push(InstanceMask {
                mask,
                bbox,
                confidence: src.confidence,
                genus: src.genus.clone(),
            });
            out.sources.push(idx);
        }
    }
    Ok(out)
}
