//! Band-stack ingestion, patch extraction, normalization, train/test splits
//! and synthetic scenes.

mod dataset;
mod patch;
mod raster;
mod synth;

use std::path::Path;

pub use dataset::{labeled_mask, split, BandStats, PatchDataset, Sample, STD_FLOOR};
pub use patch::{extract_patch, reflect_index};
pub use raster::{
    concat_modalities, load_band_stack, load_label_raster, raster_paths, write_band_stack,
    write_label_raster, BandStack, LabelRaster, RasterHeader,
};
pub use synth::{synth_scene, voronoi_label, Scene, SceneSpec, MIN_SEPARATION, SITES_PER_CLASS};

use crate::error::{Error, Result};

/// File stem of modality `i` inside a scene directory.
pub fn modality_name(i: usize) -> String {
    format!("modality_{i}")
}

pub const LABELS_NAME: &str = "labels";

/// Writes `modality_<i>.{json,bin}` per stack and `labels.{json,bin}`.
/// Returns every path written.
pub fn write_scene(
    dir: &Path,
    stacks: &[BandStack],
    labels: &LabelRaster,
) -> Result<Vec<std::path::PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for (i, s) in stacks.iter().enumerate() {
        let (h, d) = raster_paths(dir, &modality_name(i));
        write_band_stack(s, &h, &d)?;
        written.extend([h, d]);
    }
    let (h, d) = raster_paths(dir, LABELS_NAME);
    write_label_raster(labels, &h, &d)?;
    written.extend([h, d]);
    Ok(written)
}

/// Loads `modality_0`, `modality_1`, … until the first missing index.
pub fn load_modalities(dir: &Path) -> Result<Vec<BandStack>> {
    let mut stacks = Vec::new();
    loop {
        let (h, d) = raster_paths(dir, &modality_name(stacks.len()));
        if !h.exists() {
            break;
        }
        stacks.push(load_band_stack(&h, &d)?);
    }
    if stacks.is_empty() {
        return Err(Error::Data(format!(
            "no modality_0.json found in {}",
            dir.display()
        )));
    }
    Ok(stacks)
}

/// Loads `<dir>/<name>.{json,bin}` as a label raster.
pub fn load_labels(dir: &Path, name: &str) -> Result<LabelRaster> {
    let (h, d) = raster_paths(dir, name);
    load_label_raster(&h, &d)
}
