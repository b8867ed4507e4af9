use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, Write};
use std::path::Path;

use reef_core::dataset::{
    bbox_stats, class_counts, default_resolution_edges, distribution_text, genus_distribution,
    histogram_csv, read_manifest, resolution_histogram, BboxSummary, DistributionRow, HistogramBin,
};
use reef_core::eval::read_ground_truth;
use reef_core::canonical_taxonomy;
use serde::Serialize;

use crate::error::CliError;
use crate::output::{emit, write_atomic};

#[derive(Serialize)]
struct StatsOutput {
    distribution: Vec<DistributionRow>,
    resolution_histogram: Vec<HistogramBin>,
    #[serde(skip_serializing_if = "Option::is_none")]
    bbox_summary: Option<BboxSummary>,
    #[serde(skip_serializing_if = "Option::is_none")]
    class_counts: Option<BTreeMap<String, usize>>,
}

fn distribution_csv(rows: &[DistributionRow]) -> String {
    let mut out = String::from("genus,count,percentage,in_taxonomy\n");
    for r in rows {
        out += &format!("{},{},{:.6},{}\n", r.genus, r.count, r.percentage, r.in_taxonomy);
    }
    out
}

pub fn run(
    manifest: &Path,
    bboxes: Option<&Path>,
    bins: Option<&[u32]>,
    out: Option<&Path>,
    plot_dir: Option<&Path>,
    stdout: &mut dyn Write,
) -> Result<(), CliError> {
    let entries = read_manifest(File::open(manifest).map_err(|e| CliError::io(manifest, e))?)?;
    let taxonomy = canonical_taxonomy().map_err(|e| CliError::Invalid(e.to_string()))?;
    let distribution = genus_distribution(&entries, &taxonomy)?;
    let edges = bins.map(<[u32]>::to_vec).unwrap_or_else(default_resolution_edges);
    let histogram = resolution_histogram(&entries, &edges)?;

    let boxes = match bboxes {
        Some(p) => {
            let gts = read_ground_truth(BufReader::new(File::open(p).map_err(|e| CliError::io(p, e))?))?;
            let dims: HashMap<String, (u32, u32)> =
                entries.iter().map(|e| (e.image_id.clone(), (e.width, e.height))).collect();
            Some((bbox_stats(&gts, &dims)?, class_counts(&gts)))
        }
        None => None,
    };

    let mut text = distribution_text(&distribution);
    text += "\nmax(width, height)   images\n";
    for b in &histogram {
        text += &format!("{:<20} {:>7}\n", b.label(), b.count);
    }
    if let Some((stats, counts)) = &boxes {
        let s = &stats.summary;
        text += &format!(
            "\nboxes {}  mean centre ({:.4}, {:.4})  mean size ({:.4}, {:.4})  mean aspect {:.4}\n",
            s.count, s.mean_center_x, s.mean_center_y, s.mean_width, s.mean_height, s.mean_aspect_ratio
        );
        for (class, n) in counts {
            text += &format!("{class:<20} {n:>7}\n");
        }
    }
    emit(None, &text, stdout)?;

    if let Some(dir) = plot_dir {
        std::fs::create_dir_all(dir).map_err(|e| CliError::io(dir, e))?;
        write_atomic(&dir.join("distribution.csv"), distribution_csv(&distribution).as_bytes())?;
        write_atomic(&dir.join("resolution_histogram.csv"), histogram_csv(&histogram).as_bytes())?;
        if let Some((stats, _)) = &boxes {
            write_atomic(&dir.join("bboxes.csv"), stats.to_csv().as_bytes())?;
        }
    }
    if let Some(p) = out {
        let (bbox_summary, class_counts) = match boxes {
            Some((s, c)) => (Some(s.summary), Some(c)),
            None => (None, None),
        };
        let body = StatsOutput {
            distribution,
            resolution_histogram: histogram,
            bbox_summary,
            class_counts,
        };
        write_atomic(p, (serde_json::to_string_pretty(&body).expect("serializes") + "\n").as_bytes())?;
    }
    Ok(())
}
