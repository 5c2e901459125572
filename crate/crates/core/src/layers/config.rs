use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// The four ablation assemblies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Plain MLP-Mixer on the raw patch.
    Mlp,
    /// Mixer with spatial gating, no convolution block.
    #[serde(rename = "sgu-mlp-nodwc")]
    SguMlpNoDwc,
    /// Convolution block feeding a plain mixer.
    DwcMlp,
    /// Full model: convolution block plus gated mixer.
    SguMlp,
}

impl Variant {
    /// Ablation column order.
    pub const ALL: [Variant; 4] = [
        Variant::Mlp,
        Variant::SguMlpNoDwc,
        Variant::DwcMlp,
        Variant::SguMlp,
    ];

    pub fn uses_dwc(self) -> bool {
        matches!(self, Variant::DwcMlp | Variant::SguMlp)
    }

    pub fn uses_sgu(self) -> bool {
        matches!(self, Variant::SguMlpNoDwc | Variant::SguMlp)
    }

    pub fn cli_name(self) -> &'static str {
        match self {
            Variant::Mlp => "mlp",
            Variant::SguMlpNoDwc => "sgu-mlp-nodwc",
            Variant::DwcMlp => "dwc-mlp",
            Variant::SguMlp => "sgu-mlp",
        }
    }

    /// Column header used in ablation tables.
    pub fn column_header(self) -> &'static str {
        match self {
            Variant::Mlp => "MLP",
            Variant::SguMlpNoDwc => "SGU + MLP",
            Variant::DwcMlp => "DWC + MLP",
            Variant::SguMlp => "SGUMLP",
        }
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.cli_name())
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Variant::ALL
            .into_iter()
            .find(|v| v.cli_name() == s)
            .ok_or_else(|| {
                Error::Config(format!(
                    "unknown variant {s:?}; expected one of mlp, sgu-mlp-nodwc, dwc-mlp, sgu-mlp"
                ))
            })
    }
}

/// Which mixer MLPs carry a spatial gate when the variant enables gating.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SguPlacement {
    #[default]
    Both,
    ChannelOnly,
}

impl FromStr for SguPlacement {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "both" => Ok(SguPlacement::Both),
            "channel-only" => Ok(SguPlacement::ChannelOnly),
            _ => Err(Error::Config(format!(
                "unknown SGU placement {s:?}; expected both or channel-only"
            ))),
        }
    }
}

impl fmt::Display for SguPlacement {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SguPlacement::Both => "both",
            SguPlacement::ChannelOnly => "channel-only",
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    /// Odd spatial extent of the input patch.
    pub patch_window: usize,
    /// Channels after modality concatenation.
    pub bands: usize,
    /// Odd kernel sizes of the parallel depthwise branches.
    pub dwc_kernels: Vec<usize>,
    /// Length of each flattened segment mapped to one token.
    pub token_segment: usize,
    /// Token embedding width.
    pub hidden_dim: usize,
    /// Expansion width inside each mixer MLP.
    pub mixer_ffn_dim: usize,
    pub num_blocks: usize,
    pub num_classes: usize,
    pub variant: Variant,
    pub sgu_placement: SguPlacement,
    pub ln_eps: f64,
}

impl ModelConfig {
    /// Reference hyperparameters for a given band and class count.
    pub fn new(bands: usize, num_classes: usize, variant: Variant) -> Self {
        ModelConfig {
            patch_window: 9,
            bands,
            dwc_kernels: vec![1, 3, 5],
            token_segment: 4,
            hidden_dim: 256,
            mixer_ffn_dim: 256,
            num_blocks: 4,
            num_classes,
            variant,
            sgu_placement: SguPlacement::Both,
            ln_eps: crate::tensor::ops::LN_EPS,
        }
    }

    /// Length of the flattened patch, `window² · bands`.
    pub fn input_len(&self) -> usize {
        self.patch_window * self.patch_window * self.bands
    }

    /// Number of tokens, `ceil(input_len / token_segment)`.
    pub fn token_count(&self) -> usize {
        self.input_len().div_ceil(self.token_segment)
    }

    pub fn token_sgu(&self) -> bool {
        self.variant.uses_sgu() && self.sgu_placement == SguPlacement::Both
    }

    pub fn channel_sgu(&self) -> bool {
        self.variant.uses_sgu()
    }

    pub fn validate(&self) -> Result<()> {
        let fail = |m: String| Err(Error::Config(m));
        if self.patch_window == 0 || self.patch_window.is_multiple_of(2) {
            return fail(format!("patch_window {} must be odd", self.patch_window));
        }
        if self.bands == 0 {
            return fail("bands must be positive".into());
        }
        if self.variant.uses_dwc() {
            if self.dwc_kernels.is_empty() {
                return fail("dwc_kernels must not be empty".into());
            }
            if let Some(k) = self.dwc_kernels.iter().find(|&&k| k % 2 == 0) {
                return fail(format!("dwc kernel size {k} must be odd"));
            }
        }
        if self.token_segment == 0 || self.hidden_dim == 0 || self.mixer_ffn_dim == 0 {
            return fail("token_segment, hidden_dim and mixer_ffn_dim must be positive".into());
        }
        if self.variant.uses_sgu() && !self.mixer_ffn_dim.is_multiple_of(2) {
            return fail(format!(
                "mixer_ffn_dim {} must be even when gating splits the hidden axis",
                self.mixer_ffn_dim
            ));
        }
        if self.token_count() < 2 {
            return fail(format!(
                "token count {} must be at least 2",
                self.token_count()
            ));
        }
        if self.num_classes < 2 {
            return fail(format!(
                "num_classes {} must be at least 2",
                self.num_classes
            ));
        }
        if self.ln_eps.is_nan() || self.ln_eps <= 0.0 {
            return fail("ln_eps must be positive".into());
        }
        Ok(())
    }
}
