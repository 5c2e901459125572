//! Band stacks and label rasters with their on-disk format: a small JSON
//! header next to a raw little-endian payload.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct RasterHeader {
    pub height: usize,
    pub width: usize,
    pub bands: usize,
    pub dtype: String,
    pub layout: String,
}

/// Multiband raster, band-major then row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStack {
    height: usize,
    width: usize,
    bands: usize,
    values: Vec<f32>,
}

impl BandStack {
    pub fn new(height: usize, width: usize, bands: usize, values: Vec<f32>) -> Result<Self> {
        if height == 0 || width == 0 || bands == 0 {
            return Err(Error::Dimension(format!(
                "band stack extents {height}×{width}×{bands} must be positive"
            )));
        }
        if values.len() != height * width * bands {
            return Err(Error::Dimension(format!(
                "band stack {height}×{width}×{bands} needs {} values, got {}",
                height * width * bands,
                values.len()
            )));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::Data(format!("non-finite band value at index {i}")));
        }
        Ok(BandStack {
            height,
            width,
            bands,
            values,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn bands(&self) -> usize {
        self.bands
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn get(&self, band: usize, row: usize, col: usize) -> f32 {
        self.values[(band * self.height + row) * self.width + col]
    }

    /// Row-major plane of one band.
    pub fn band(&self, band: usize) -> &[f32] {
        let n = self.height * self.width;
        &self.values[band * n..(band + 1) * n]
    }

    pub fn header(&self) -> RasterHeader {
        RasterHeader {
            height: self.height,
            width: self.width,
            bands: self.bands,
            dtype: "f32le".into(),
            layout: "band-major".into(),
        }
    }
}

/// Class labels, row-major; 0 marks unlabeled pixels.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelRaster {
    height: usize,
    width: usize,
    labels: Vec<u16>,
}

impl LabelRaster {
    pub fn new(height: usize, width: usize, labels: Vec<u16>) -> Result<Self> {
        if height == 0 || width == 0 || labels.len() != height * width {
            return Err(Error::Dimension(format!(
                "label raster {height}×{width} with {} labels",
                labels.len()
            )));
        }
        Ok(LabelRaster {
            height,
            width,
            labels,
        })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn labels(&self) -> &[u16] {
        &self.labels
    }

    pub fn get(&self, row: usize, col: usize) -> u16 {
        self.labels[row * self.width + col]
    }

    /// Largest label present.
    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().unwrap_or(0) as usize
    }

    /// Checks that extents match `stack` and labels do not exceed `classes`.
    pub fn check_against(&self, stack: &BandStack, classes: usize) -> Result<()> {
        if self.height != stack.height() || self.width != stack.width() {
            return Err(Error::CoRegistration(format!(
                "labels are {}×{}, bands are {}×{}",
                self.height,
                self.width,
                stack.height(),
                stack.width()
            )));
        }
        if self.num_classes() > classes {
            return Err(Error::Data(format!(
                "label {} exceeds class count {classes}",
                self.num_classes()
            )));
        }
        Ok(())
    }

    pub fn header(&self) -> RasterHeader {
        RasterHeader {
            height: self.height,
            width: self.width,
            bands: 1,
            dtype: "u16le".into(),
            layout: "row-major".into(),
        }
    }
}

fn read(path: &Path) -> Result<Vec<u8>> {
    fs::read(path).map_err(|e| Error::io(path, e))
}

fn write(path: &Path, bytes: &[u8]) -> Result<()> {
    fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

fn read_header(path: &Path, dtype: &str, layout: &str) -> Result<RasterHeader> {
    let h: RasterHeader = serde_json::from_slice(&read(path)?).map_err(|e| Error::Format {
        path: path.into(),
        reason: e.to_string(),
    })?;
    if h.dtype != dtype || h.layout != layout {
        return Err(Error::Format {
            path: path.into(),
            reason: format!(
                "dtype/layout {}/{} unsupported, expected {dtype}/{layout}",
                h.dtype, h.layout
            ),
        });
    }
    Ok(h)
}

fn read_payload(path: &Path, expected: usize) -> Result<Vec<u8>> {
    let bytes = read(path)?;
    if bytes.len() != expected {
        return Err(Error::CorruptFile {
            path: path.into(),
            expected: expected as u64,
            actual: bytes.len() as u64,
        });
    }
    Ok(bytes)
}

fn header_json(h: &RasterHeader) -> Vec<u8> {
    let mut s = serde_json::to_vec(h).expect("header serializes");
    s.push(b'\n');
    s
}

pub fn load_band_stack(header_path: &Path, data_path: &Path) -> Result<BandStack> {
    let h = read_header(header_path, "f32le", "band-major")?;
    let n = h.height * h.width * h.bands;
    let bytes = read_payload(data_path, 4 * n)?;
    let values = bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();
    BandStack::new(h.height, h.width, h.bands, values).map_err(|e| Error::Format {
        path: data_path.into(),
        reason: e.to_string(),
    })
}

pub fn write_band_stack(stack: &BandStack, header_path: &Path, data_path: &Path) -> Result<()> {
    write(header_path, &header_json(&stack.header()))?;
    let bytes: Vec<u8> = stack.values.iter().flat_map(|v| v.to_le_bytes()).collect();
    write(data_path, &bytes)
}

pub fn load_label_raster(header_path: &Path, data_path: &Path) -> Result<LabelRaster> {
    let h = read_header(header_path, "u16le", "row-major")?;
    if h.bands != 1 {
        return Err(Error::Format {
            path: header_path.into(),
            reason: format!("label raster must have 1 band, header says {}", h.bands),
        });
    }
    let bytes = read_payload(data_path, 2 * h.height * h.width)?;
    let labels = bytes
        .chunks_exact(2)
        .map(|b| u16::from_le_bytes([b[0], b[1]]))
        .collect();
    LabelRaster::new(h.height, h.width, labels)
}

pub fn write_label_raster(
    labels: &LabelRaster,
    header_path: &Path,
    data_path: &Path,
) -> Result<()> {
    write(header_path, &header_json(&labels.header()))?;
    let bytes: Vec<u8> = labels.labels.iter().flat_map(|v| v.to_le_bytes()).collect();
    write(data_path, &bytes)
}

/// `<dir>/<name>.json` and `<dir>/<name>.bin`.
pub fn raster_paths(dir: &Path, name: &str) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{name}.json")),
        dir.join(format!("{name}.bin")),
    )
}

/// Concatenates co-registered stacks along the band axis, in argument order.
pub fn concat_modalities(stacks: &[BandStack]) -> Result<BandStack> {
    let first = stacks
        .first()
        .ok_or_else(|| Error::Data("no modalities to concatenate".into()))?;
    for (i, s) in stacks.iter().enumerate() {
        if s.height != first.height || s.width != first.width {
            return Err(Error::CoRegistration(format!(
                "modality {i} is {}×{}, modality 0 is {}×{}",
                s.height, s.width, first.height, first.width
            )));
        }
    }
    let bands = stacks.iter().map(|s| s.bands).sum();
    let values = stacks
        .iter()
        .flat_map(|s| s.values.iter().copied())
        .collect();
    BandStack::new(first.height, first.width, bands, values)
}
