use rand::seq::SliceRandom;

use super::patch::extract_patch;
use super::raster::{BandStack, LabelRaster};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Lower bound applied to per-band standard deviations.
pub const STD_FLOOR: f64 = 1e-8;

/// Per-band mean and standard deviation.
#[derive(Debug, Clone, PartialEq)]
pub struct BandStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl BandStats {
    /// Population statistics over the pixels selected by `mask`.
    pub fn from_pixels(stack: &BandStack, mask: &[bool]) -> Result<Self> {
        let n = mask.iter().filter(|&&m| m).count();
        if n < 2 {
            return Err(Error::Data(format!(
                "normalization needs at least 2 training pixels, got {n}"
            )));
        }
        let mut mean = Vec::with_capacity(stack.bands());
        let mut std = Vec::with_capacity(stack.bands());
        for b in 0..stack.bands() {
            let sel = || {
                stack
                    .band(b)
                    .iter()
                    .zip(mask)
                    .filter(|(_, &m)| m)
                    .map(|(&v, _)| v as f64)
            };
            let m = sel().sum::<f64>() / n as f64;
            let var = sel().map(|v| (v - m) * (v - m)).sum::<f64>() / n as f64;
            mean.push(m);
            std.push(var.sqrt().max(STD_FLOOR));
        }
        Ok(BandStats { mean, std })
    }

    /// `(v − mean)/std` per band.
    pub fn apply(&self, stack: &BandStack) -> Result<BandStack> {
        if self.mean.len() != stack.bands() {
            return Err(Error::Dimension(format!(
                "statistics for {} bands applied to {} bands",
                self.mean.len(),
                stack.bands()
            )));
        }
        let plane = stack.height() * stack.width();
        let values = stack
            .values()
            .iter()
            .enumerate()
            .map(|(i, &v)| {
                let b = i / plane;
                ((v as f64 - self.mean[b]) / self.std[b]) as f32
            })
            .collect();
        BandStack::new(stack.height(), stack.width(), stack.bands(), values)
    }
}

/// Stratified split into disjoint train/test masks. Each class contributes
/// `round(n·fraction)` pixels to training, clamped so both sides keep at
/// least one.
pub fn split(labels: &LabelRaster, fraction: f64, seed: u64) -> Result<(Vec<bool>, Vec<bool>)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction {fraction} must lie in (0, 1)"
        )));
    }
    let classes = labels.num_classes();
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); classes + 1];
    for (i, &l) in labels.labels().iter().enumerate() {
        per_class[l as usize].push(i);
    }
    let sparse: Vec<u16> = (1..=classes)
        .filter(|&c| per_class[c].len() == 1)
        .map(|c| c as u16)
        .collect();
    if !sparse.is_empty() {
        return Err(Error::Stratification { classes: sparse });
    }
    let n = labels.labels().len();
    let (mut train, mut test) = (vec![false; n], vec![false; n]);
    let mut rng = rng::stream(seed, Stream::Split);
    for pixels in per_class.iter_mut().skip(1).filter(|p| !p.is_empty()) {
        pixels.shuffle(&mut rng);
        let k = ((pixels.len() as f64 * fraction).round() as usize).clamp(1, pixels.len() - 1);
        for (j, &p) in pixels.iter().enumerate() {
            if j < k {
                train[p] = true;
            } else {
                test[p] = true;
            }
        }
    }
    Ok((train, test))
}

/// Mask of every labeled pixel.
pub fn labeled_mask(labels: &LabelRaster) -> Vec<bool> {
    labels.labels().iter().map(|&l| l != 0).collect()
}

#[derive(Debug, Clone)]
pub struct Sample {
    pub patch: Tensor<f32>,
    /// 1-based class.
    pub label: u16,
    pub row: usize,
    pub col: usize,
}

/// Labeled patches drawn from a normalized stack.
#[derive(Debug, Clone)]
pub struct PatchDataset {
    pub samples: Vec<Sample>,
    pub stats: BandStats,
    pub window: usize,
}

impl PatchDataset {
    /// Extracts a patch for every labeled pixel under `mask`, in raster
    /// order, from `stack` normalized with `stats`.
    pub fn build(
        stack: &BandStack,
        labels: &LabelRaster,
        mask: &[bool],
        window: usize,
        stats: &BandStats,
    ) -> Result<Self> {
        labels.check_against(stack, u16::MAX as usize)?;
        let normed = stats.apply(stack)?;
        let mut samples = Vec::new();
        for (i, (&m, &l)) in mask.iter().zip(labels.labels()).enumerate() {
            if !m || l == 0 {
                continue;
            }
            let (row, col) = (i / stack.width(), i % stack.width());
            samples.push(Sample {
                patch: extract_patch(&normed, row, col, window)?,
                label: l,
                row,
                col,
            });
        }
        Ok(PatchDataset {
            samples,
            stats: stats.clone(),
            window,
        })
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn half_split_of_two_balanced_classes() {
        let mut l = vec![1u16; 10];
        l.extend(vec![2u16; 10]);
        l.extend(vec![0u16; 5]);
        let labels = LabelRaster::new(5, 5, l).unwrap();
        let (train, test) = split(&labels, 0.5, 3).unwrap();
        for class in [1, 2] {
            let count = |m: &[bool]| {
                m.iter()
                    .zip(labels.labels())
                    .filter(|(&b, &c)| b && c == class)
                    .count()
            };
            assert_eq!(count(&train), 5);
            assert_eq!(count(&test), 5);
        }
        assert!(train[20..].iter().chain(&test[20..]).all(|&b| !b));
        assert_eq!(split(&labels, 0.5, 3).unwrap(), (train, test));
    }

    #[test]
    fn singleton_class_is_reported() {
        let labels = LabelRaster::new(1, 5, vec![1, 1, 2, 3, 3]).unwrap();
        match split(&labels, 0.5, 0) {
            Err(Error::Stratification { classes }) => assert_eq!(classes, vec![2]),
            other => panic!("{other:?}"),
        }
        assert!(split(&labels, 1.0, 0).is_err());
    }

    #[test]
    fn constant_band_normalizes_to_zero() {
        let s = BandStack::new(2, 2, 1, vec![3.0; 4]).unwrap();
        let stats = BandStats::from_pixels(&s, &[true; 4]).unwrap();
        assert_eq!(stats.std[0], STD_FLOOR);
        assert!(stats.apply(&s).unwrap().values().iter().all(|&v| v == 0.0));
        assert!(BandStats::from_pixels(&s, &[true, false, false, false]).is_err());
    }
}
