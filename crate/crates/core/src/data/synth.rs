//! Synthetic multimodal scenes: Voronoi class regions, one Gaussian spectral
//! signature per class shared across every modality's bands, additive noise.

use rand::Rng as _;
use rand_distr::{Distribution, Normal, StandardNormal};
use serde::{Deserialize, Serialize};

use super::raster::{BandStack, LabelRaster};
use crate::error::{Error, Result};
use crate::rng::{self, Stream};

/// Voronoi sites per class.
pub const SITES_PER_CLASS: usize = 3;

/// Minimum Euclidean distance between any two class signatures.
pub const MIN_SEPARATION: f64 = 1.0;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SceneSpec {
    pub classes: usize,
    pub height: usize,
    pub width: usize,
    /// Band count of each modality.
    pub modality_bands: Vec<usize>,
    /// Standard deviation of the additive per-pixel noise.
    pub noise: f64,
    pub seed: u64,
}

impl Default for SceneSpec {
    fn default() -> Self {
        SceneSpec {
            classes: 6,
            height: 96,
            width: 96,
            modality_bands: vec![8, 4, 1],
            noise: 0.1,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct Scene {
    pub stacks: Vec<BandStack>,
    pub labels: LabelRaster,
    /// `classes × total_bands` noise-free class means.
    pub signatures: Vec<Vec<f64>>,
    /// `(row, col, class)` of every Voronoi site.
    pub sites: Vec<(f64, f64, u16)>,
}

/// Class of the nearest site; ties go to the earlier site.
pub fn voronoi_label(sites: &[(f64, f64, u16)], row: usize, col: usize) -> u16 {
    let (r, c) = (row as f64 + 0.5, col as f64 + 0.5);
    let mut best = (f64::INFINITY, 0);
    for &(sr, sc, class) in sites {
        let d = (sr - r) * (sr - r) + (sc - c) * (sc - c);
        if d < best.0 {
            best = (d, class);
        }
    }
    best.1
}

pub fn synth_scene(spec: &SceneSpec) -> Result<Scene> {
    if spec.classes < 2 {
        return Err(Error::Config(
            "synthetic scene needs at least 2 classes".into(),
        ));
    }
    if spec.height < 32 || spec.width < 32 {
        return Err(Error::Config(format!(
            "synthetic scene extents {}×{} must be at least 32×32",
            spec.height, spec.width
        )));
    }
    if spec.modality_bands.is_empty() || spec.modality_bands.contains(&0) {
        return Err(Error::Config(
            "every modality needs at least one band".into(),
        ));
    }
    if !(spec.noise >= 0.0 && spec.noise.is_finite()) {
        return Err(Error::Config(format!(
            "noise level {} is invalid",
            spec.noise
        )));
    }
    let mut rng = rng::stream(spec.seed, Stream::Scene);
    let total_bands: usize = spec.modality_bands.iter().sum();

    let sites: Vec<(f64, f64, u16)> = (0..spec.classes * SITES_PER_CLASS)
        .map(|i| {
            let r = rng.random_range(0.0..spec.height as f64);
            let c = rng.random_range(0.0..spec.width as f64);
            (r, c, (i % spec.classes + 1) as u16)
        })
        .collect();

    let signatures = loop {
        let sig: Vec<Vec<f64>> = (0..spec.classes)
            .map(|_| {
                (0..total_bands)
                    .map(|_| StandardNormal.sample(&mut rng))
                    .collect()
            })
            .collect();
        let separated = (0..sig.len()).all(|a| {
            (a + 1..sig.len()).all(|b| {
                let d2: f64 = sig[a]
                    .iter()
                    .zip(&sig[b])
                    .map(|(x, y)| (x - y) * (x - y))
                    .sum();
                d2.sqrt() >= MIN_SEPARATION
            })
        });
        if separated {
            break sig;
        }
    };

    let (h, w) = (spec.height, spec.width);
    let labels: Vec<u16> = (0..h * w)
        .map(|i| voronoi_label(&sites, i / w, i % w))
        .collect();

    // noise is drawn pixel by pixel across all bands, then split by modality
    let mut pixels = vec![0f32; h * w * total_bands];
    let noise = Normal::new(0.0, spec.noise).expect("validated noise");
    for (i, &l) in labels.iter().enumerate() {
        let sig = &signatures[l as usize - 1];
        for (b, &mean) in sig.iter().enumerate() {
            let n = if spec.noise > 0.0 {
                noise.sample(&mut rng)
            } else {
                0.0
            };
            pixels[i * total_bands + b] = (mean + n) as f32;
        }
    }
    let mut stacks = Vec::with_capacity(spec.modality_bands.len());
    let mut offset = 0;
    for &nb in &spec.modality_bands {
        let mut values = Vec::with_capacity(h * w * nb);
        for b in offset..offset + nb {
            values.extend((0..h * w).map(|i| pixels[i * total_bands + b]));
        }
        stacks.push(BandStack::new(h, w, nb, values)?);
        offset += nb;
    }
    Ok(Scene {
        stacks,
        labels: LabelRaster::new(h, w, labels)?,
        signatures,
        sites,
    })
}
