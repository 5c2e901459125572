//! Flat `key=value` run configuration. Flags override the file, which
//! overrides the built-in defaults.

use std::collections::BTreeMap;
use std::fmt::Display;
use std::str::FromStr;

use crate::data::BandStats;
use crate::error::{Error, Result};
use crate::layers::{ModelConfig, SguPlacement, Variant};
use crate::training::{OptimizerKind, OptimizerSettings, TrainSettings};

pub type KeyValues = BTreeMap<String, String>;

/// Parses `key = value` lines; blank lines and `#` comments are skipped.
pub fn parse_config(text: &str) -> Result<KeyValues> {
    let mut kv = KeyValues::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("config line {}: expected key=value", n + 1)))?;
        kv.insert(k.trim().to_string(), v.trim().to_string());
    }
    Ok(kv)
}

pub fn render_config(kv: &KeyValues) -> String {
    kv.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
}

/// Everything needed to reproduce a training run. `bands`, `classes` and
/// `band_stats` are filled in from the data by `train`.
#[derive(Debug, Clone, PartialEq)]
pub struct RunSettings {
    pub variant: Variant,
    pub sgu_placement: SguPlacement,
    pub seed: u64,
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerSettings,
    pub train_fraction: f64,
    pub labels: String,
    pub train_labels: Option<String>,
    pub test_labels: Option<String>,
    pub patch_window: usize,
    pub token_segment: usize,
    pub hidden_dim: usize,
    pub ffn_dim: usize,
    pub blocks: usize,
    pub dwc_kernels: Vec<usize>,
    pub bands: Option<usize>,
    pub classes: Option<usize>,
    pub band_stats: Option<BandStats>,
}

const KEYS: &[&str] = &[
    "variant",
    "sgu_placement",
    "seed",
    "epochs",
    "batch_size",
    "optimizer",
    "lr",
    "beta1",
    "beta2",
    "eps",
    "train_fraction",
    "labels",
    "train_labels",
    "test_labels",
    "patch_window",
    "token_segment",
    "hidden_dim",
    "ffn_dim",
    "blocks",
    "dwc_kernels",
    "bands",
    "classes",
    "band_mean",
    "band_std",
];

fn get<T: FromStr>(kv: &KeyValues, key: &str) -> Result<Option<T>>
where
    T::Err: Display,
{
    kv.get(key)
        .map(|v| {
            v.parse()
                .map_err(|e| Error::Config(format!("config key {key}: {v:?}: {e}")))
        })
        .transpose()
}

fn get_list<T: FromStr>(kv: &KeyValues, key: &str) -> Result<Option<Vec<T>>>
where
    T::Err: Display,
{
    kv.get(key)
        .map(|v| {
            v.split(',')
                .map(|x| {
                    x.trim()
                        .parse()
                        .map_err(|e| Error::Config(format!("config key {key}: {x:?}: {e}")))
                })
                .collect()
        })
        .transpose()
}

fn join<T: Display>(xs: &[T]) -> String {
    xs.iter()
        .map(|x| x.to_string())
        .collect::<Vec<_>>()
        .join(",")
}

impl RunSettings {
    pub fn from_key_values(kv: &KeyValues) -> Result<Self> {
        if let Some(k) = kv.keys().find(|k| !KEYS.contains(&k.as_str())) {
            return Err(Error::Config(format!("unknown config key {k:?}")));
        }
        let d = ModelConfig::new(1, 2, Variant::SguMlp);
        let opt = OptimizerSettings::default();
        let train = TrainSettings::default();
        let band_stats = match (get_list(kv, "band_mean")?, get_list(kv, "band_std")?) {
            (Some(mean), Some(std)) => Some(BandStats { mean, std }),
            (None, None) => None,
            _ => {
                return Err(Error::Config(
                    "band_mean and band_std must be given together".into(),
                ))
            }
        };
        let s = RunSettings {
            variant: get(kv, "variant")?.unwrap_or(Variant::SguMlp),
            sgu_placement: get(kv, "sgu_placement")?.unwrap_or(d.sgu_placement),
            seed: get(kv, "seed")?.unwrap_or(0),
            epochs: get(kv, "epochs")?.unwrap_or(train.epochs),
            batch_size: get(kv, "batch_size")?.unwrap_or(train.batch_size),
            optimizer: OptimizerSettings {
                kind: get::<OptimizerKind>(kv, "optimizer")?.unwrap_or(opt.kind),
                lr: get(kv, "lr")?.unwrap_or(opt.lr),
                beta1: get(kv, "beta1")?.unwrap_or(opt.beta1),
                beta2: get(kv, "beta2")?.unwrap_or(opt.beta2),
                eps: get(kv, "eps")?.unwrap_or(opt.eps),
            },
            train_fraction: get(kv, "train_fraction")?.unwrap_or(0.1),
            labels: get(kv, "labels")?.unwrap_or_else(|| crate::data::LABELS_NAME.to_string()),
            train_labels: get(kv, "train_labels")?,
            test_labels: get(kv, "test_labels")?,
            patch_window: get(kv, "patch_window")?.unwrap_or(d.patch_window),
            token_segment: get(kv, "token_segment")?.unwrap_or(d.token_segment),
            hidden_dim: get(kv, "hidden_dim")?.unwrap_or(d.hidden_dim),
            ffn_dim: get(kv, "ffn_dim")?.unwrap_or(d.mixer_ffn_dim),
            blocks: get(kv, "blocks")?.unwrap_or(d.num_blocks),
            dwc_kernels: get_list(kv, "dwc_kernels")?.unwrap_or(d.dwc_kernels),
            bands: get(kv, "bands")?,
            classes: get(kv, "classes")?,
            band_stats,
        };
        if !(s.train_fraction > 0.0 && s.train_fraction < 1.0) {
            return Err(Error::Config(format!(
                "train_fraction {} must lie in (0, 1)",
                s.train_fraction
            )));
        }
        if s.train_labels.is_some() != s.test_labels.is_some() {
            return Err(Error::Config(
                "train_labels and test_labels must be given together".into(),
            ));
        }
        Ok(s)
    }

    pub fn to_key_values(&self) -> KeyValues {
        let mut kv = KeyValues::new();
        let mut put = |k: &str, v: String| {
            kv.insert(k.to_string(), v);
        };
        put("variant", self.variant.to_string());
        put("sgu_placement", self.sgu_placement.to_string());
        put("seed", self.seed.to_string());
        put("epochs", self.epochs.to_string());
        put("batch_size", self.batch_size.to_string());
        put("optimizer", self.optimizer.kind.to_string());
        put("lr", self.optimizer.lr.to_string());
        put("beta1", self.optimizer.beta1.to_string());
        put("beta2", self.optimizer.beta2.to_string());
        put("eps", self.optimizer.eps.to_string());
        put("train_fraction", self.train_fraction.to_string());
        put("labels", self.labels.clone());
        if let (Some(tr), Some(te)) = (&self.train_labels, &self.test_labels) {
            put("train_labels", tr.clone());
            put("test_labels", te.clone());
        }
        put("patch_window", self.patch_window.to_string());
        put("token_segment", self.token_segment.to_string());
        put("hidden_dim", self.hidden_dim.to_string());
        put("ffn_dim", self.ffn_dim.to_string());
        put("blocks", self.blocks.to_string());
        put("dwc_kernels", join(&self.dwc_kernels));
        if let Some(b) = self.bands {
            put("bands", b.to_string());
        }
        if let Some(c) = self.classes {
            put("classes", c.to_string());
        }
        if let Some(st) = &self.band_stats {
            put("band_mean", join(&st.mean));
            put("band_std", join(&st.std));
        }
        kv
    }

    pub fn model_config(&self, bands: usize, classes: usize) -> Result<ModelConfig> {
        let config = ModelConfig {
            patch_window: self.patch_window,
            bands,
            dwc_kernels: self.dwc_kernels.clone(),
            token_segment: self.token_segment,
            hidden_dim: self.hidden_dim,
            mixer_ffn_dim: self.ffn_dim,
            num_blocks: self.blocks,
            num_classes: classes,
            variant: self.variant,
            sgu_placement: self.sgu_placement,
            ln_eps: crate::tensor::ops::LN_EPS,
        };
        config.validate()?;
        Ok(config)
    }

    /// Model configuration of a finished run, from the recorded data facts.
    pub fn trained_config(&self) -> Result<ModelConfig> {
        match (self.bands, self.classes) {
            (Some(b), Some(c)) => self.model_config(b, c),
            _ => Err(Error::Config(
                "config lacks bands/classes; pass the config.txt written by train".into(),
            )),
        }
    }

    pub fn train_settings(&self) -> TrainSettings {
        TrainSettings {
            optimizer: self.optimizer,
            epochs: self.epochs,
            batch_size: self.batch_size,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_round_trip_through_text() {
        let s = RunSettings::from_key_values(&KeyValues::new()).unwrap();
        assert_eq!(s.hidden_dim, 256);
        assert_eq!(s.token_segment, 4);
        let text = render_config(&s.to_key_values());
        let back = RunSettings::from_key_values(&parse_config(&text).unwrap()).unwrap();
        assert_eq!(back, s);
    }

    #[test]
    fn band_statistics_round_trip_exactly() {
        let mut s = RunSettings::from_key_values(&KeyValues::new()).unwrap();
        s.band_stats = Some(BandStats {
            mean: vec![0.1 + 0.2, -1.0 / 3.0],
            std: vec![1e-8, 7.25],
        });
        let text = render_config(&s.to_key_values());
        let back = RunSettings::from_key_values(&parse_config(&text).unwrap()).unwrap();
        assert_eq!(back.band_stats, s.band_stats);
    }

    #[test]
    fn unknown_keys_and_bad_values_are_config_errors() {
        let kv = parse_config("hiden_dim = 3").unwrap();
        assert!(matches!(
            RunSettings::from_key_values(&kv),
            Err(Error::Config(_))
        ));
        let kv = parse_config("# c\nvariant = gmlp\n").unwrap();
        assert!(matches!(
            RunSettings::from_key_values(&kv),
            Err(Error::Config(_))
        ));
        assert!(parse_config("no equals sign").is_err());
    }
}
