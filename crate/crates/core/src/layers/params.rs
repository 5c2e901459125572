use rand::Rng as _;
use rand_distr::{Distribution, Uniform};

use super::config::ModelConfig;
use crate::error::{Error, Result};
use crate::rng::{self, Rng, Stream};
use crate::tensor::{Scalar, Tensor};

/// Half-width of the uniform distribution used for spatial-gate weights at
/// initialization, so each gate starts within this bound of the identity.
pub const SGU_INIT_BOUND: f64 = 1e-3;

/// Spatial projection of a gating unit: `W·D2 + b` with `W` mixing rows.
#[derive(Debug, Clone, PartialEq)]
pub struct SguParams<T = f64> {
    pub w_spatial: Tensor<T>,
    /// One bias per row, broadcast across the gated channels.
    pub b_spatial: Tensor<T>,
}

/// One mixer MLP: layer norm, `w_in`, optional gate, GELU, `w_out`, residual.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpParams<T = f64> {
    pub ln_gain: Tensor<T>,
    pub ln_bias: Tensor<T>,
    pub w_in: Tensor<T>,
    pub w_out: Tensor<T>,
    pub sgu: Option<SguParams<T>>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MixerBlockParams<T = f64> {
    /// Acts along the token axis (applied to the transposed token matrix).
    pub token_mlp: MlpParams<T>,
    /// Acts along the channel axis.
    pub channel_mlp: MlpParams<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DwcBranch<T = f64> {
    pub kernel_size: usize,
    pub kernels: Tensor<T>,
    pub bias: Tensor<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ModelParams<T = f64> {
    /// Empty unless the variant uses the convolution block.
    pub dwc: Vec<DwcBranch<T>>,
    pub embed_w: Tensor<T>,
    pub embed_b: Tensor<T>,
    pub blocks: Vec<MixerBlockParams<T>>,
    pub head_w: Tensor<T>,
    pub head_b: Tensor<T>,
}

/// Role of a parameter tensor, which decides how it is initialized.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Role {
    Dense { fan_in: usize, fan_out: usize },
    Zero,
    One,
    Gate,
}

/// Name, shape and role of every tensor, in canonical order.
fn layout(config: &ModelConfig) -> Vec<(String, Vec<usize>, Role)> {
    let e = config.token_count();
    let c = config.hidden_dim;
    let m = config.mixer_ffn_dim;
    let b = config.bands;
    let mut out = Vec::new();
    if config.variant.uses_dwc() {
        for &k in &config.dwc_kernels {
            let fan = k * k;
            out.push((
                format!("dwc.k{k}.kernels"),
                vec![k, k, b],
                Role::Dense {
                    fan_in: fan,
                    fan_out: fan,
                },
            ));
            out.push((format!("dwc.k{k}.bias"), vec![b], Role::Zero));
        }
    }
    let p = config.token_segment;
    out.push((
        "embed.weight".into(),
        vec![p, c],
        Role::Dense {
            fan_in: p,
            fan_out: c,
        },
    ));
    out.push(("embed.bias".into(), vec![c], Role::Zero));
    for i in 0..config.num_blocks {
        // token MLP sees the transposed C×E matrix: features E, rows C
        for (name, rows, feats, gated) in [
            ("token", c, e, config.token_sgu()),
            ("channel", e, c, config.channel_sgu()),
        ] {
            let pre = format!("blocks.{i}.{name}");
            let m_out = if gated { m / 2 } else { m };
            out.push((format!("{pre}.ln.gain"), vec![feats], Role::One));
            out.push((format!("{pre}.ln.bias"), vec![feats], Role::Zero));
            out.push((
                format!("{pre}.w_in"),
                vec![feats, m],
                Role::Dense {
                    fan_in: feats,
                    fan_out: m,
                },
            ));
            if gated {
                out.push((format!("{pre}.sgu.weight"), vec![rows, rows], Role::Gate));
                out.push((format!("{pre}.sgu.bias"), vec![rows], Role::One));
            }
            out.push((
                format!("{pre}.w_out"),
                vec![m_out, feats],
                Role::Dense {
                    fan_in: m_out,
                    fan_out: feats,
                },
            ));
        }
    }
    let k = config.num_classes;
    out.push((
        "head.weight".into(),
        vec![c, k],
        Role::Dense {
            fan_in: c,
            fan_out: k,
        },
    ));
    out.push(("head.bias".into(), vec![k], Role::Zero));
    out
}

/// Expected `(name, shape)` of every parameter tensor for `config`.
pub fn shape_manifest(config: &ModelConfig) -> Vec<(String, Vec<usize>)> {
    layout(config).into_iter().map(|(n, s, _)| (n, s)).collect()
}

/// Total scalar parameter count, computed from the config alone.
pub fn param_count(config: &ModelConfig) -> usize {
    layout(config)
        .iter()
        .map(|(_, s, _)| s.iter().product::<usize>())
        .sum()
}

/// Deterministic initialization: Glorot-uniform dense weights, zero biases,
/// unit layer-norm gains and near-identity spatial gates.
pub fn init_params<T: Scalar>(config: &ModelConfig, seed: u64) -> Result<ModelParams<T>> {
    config.validate()?;
    let mut rng = rng::stream(seed, Stream::Init);
    let tensors = layout(config)
        .into_iter()
        .map(|(name, shape, role)| {
            let t = match role {
                Role::Zero => Tensor::zeros(&shape),
                Role::One => Tensor::ones(&shape),
                Role::Dense { fan_in, fan_out } => {
                    let bound = (6.0 / (fan_in + fan_out) as f64).sqrt();
                    uniform(&mut rng, &shape, bound)
                }
                Role::Gate => uniform(&mut rng, &shape, SGU_INIT_BOUND),
            };
            (name, t)
        })
        .collect();
    ModelParams::from_named(config, tensors)
}

fn uniform<T: Scalar>(rng: &mut Rng, shape: &[usize], bound: f64) -> Tensor<T> {
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Tensor::from_fn(shape, |_| T::from_f64_lossy(dist.sample(rng)))
}

impl<T: Scalar> MlpParams<T> {
    fn tensors(&self) -> Vec<(&'static str, &Tensor<T>)> {
        let mut v = vec![
            ("ln.gain", &self.ln_gain),
            ("ln.bias", &self.ln_bias),
            ("w_in", &self.w_in),
        ];
        if let Some(s) = &self.sgu {
            v.push(("sgu.weight", &s.w_spatial));
            v.push(("sgu.bias", &s.b_spatial));
        }
        v.push(("w_out", &self.w_out));
        v
    }

    fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut v = vec![&mut self.ln_gain, &mut self.ln_bias, &mut self.w_in];
        if let Some(s) = &mut self.sgu {
            v.push(&mut s.w_spatial);
            v.push(&mut s.b_spatial);
        }
        v.push(&mut self.w_out);
        v
    }
}

impl<T: Scalar> ModelParams<T> {
    /// All-zero parameters with the structure `config` requires; used as a
    /// gradient accumulator.
    pub fn zeros(config: &ModelConfig) -> Result<Self> {
        let named = layout(config)
            .into_iter()
            .map(|(n, s, _)| (n, Tensor::zeros(&s)))
            .collect();
        Self::from_named(config, named)
    }

    /// Assembles parameters from named tensors, auditing every name and
    /// extent against `config`.
    pub fn from_named(config: &ModelConfig, mut named: Vec<(String, Tensor<T>)>) -> Result<Self> {
        config.validate()?;
        let manifest = shape_manifest(config);
        let mut take = |name: &str, shape: &[usize]| -> Result<Tensor<T>> {
            let pos = named
                .iter()
                .position(|(n, _)| n == name)
                .ok_or_else(|| Error::Checkpoint(format!("missing tensor {name}")))?;
            let (_, t) = named.swap_remove(pos);
            if t.shape() != shape {
                return Err(Error::Checkpoint(format!(
                    "tensor {name} has shape {:?}, config requires {shape:?}",
                    t.shape()
                )));
            }
            Ok(t)
        };
        let mut tensors = Vec::with_capacity(manifest.len());
        for (name, shape) in &manifest {
            tensors.push(take(name, shape)?);
        }
        if let Some((name, _)) = named.first() {
            return Err(Error::Checkpoint(format!(
                "unexpected tensor {name} for variant {}",
                config.variant
            )));
        }

        let mut it = tensors.into_iter();
        let mut next = || it.next().expect("manifest order");
        let dwc = if config.variant.uses_dwc() {
            config
                .dwc_kernels
                .iter()
                .map(|&k| DwcBranch {
                    kernel_size: k,
                    kernels: next(),
                    bias: next(),
                })
                .collect()
        } else {
            Vec::new()
        };
        let embed_w = next();
        let embed_b = next();
        let mut mlp = |gated: bool| {
            let ln_gain = next();
            let ln_bias = next();
            let w_in = next();
            let sgu = gated.then(|| SguParams {
                w_spatial: next(),
                b_spatial: next(),
            });
            MlpParams {
                ln_gain,
                ln_bias,
                w_in,
                w_out: next(),
                sgu,
            }
        };
        let blocks = (0..config.num_blocks)
            .map(|_| MixerBlockParams {
                token_mlp: mlp(config.token_sgu()),
                channel_mlp: mlp(config.channel_sgu()),
            })
            .collect();
        let head_w = next();
        let head_b = next();
        Ok(ModelParams {
            dwc,
            embed_w,
            embed_b,
            blocks,
            head_w,
            head_b,
        })
    }

    /// Every tensor with its canonical name, in canonical order.
    pub fn named_tensors(&self) -> Vec<(String, &Tensor<T>)> {
        let mut out = Vec::new();
        for b in &self.dwc {
            out.push((format!("dwc.k{}.kernels", b.kernel_size), &b.kernels));
            out.push((format!("dwc.k{}.bias", b.kernel_size), &b.bias));
        }
        out.push(("embed.weight".into(), &self.embed_w));
        out.push(("embed.bias".into(), &self.embed_b));
        for (i, blk) in self.blocks.iter().enumerate() {
            for (kind, mlp) in [("token", &blk.token_mlp), ("channel", &blk.channel_mlp)] {
                for (n, t) in mlp.tensors() {
                    out.push((format!("blocks.{i}.{kind}.{n}"), t));
                }
            }
        }
        out.push(("head.weight".into(), &self.head_w));
        out.push(("head.bias".into(), &self.head_b));
        out
    }

    /// Mutable tensors in the same order as [`ModelParams::named_tensors`].
    pub fn tensors_mut(&mut self) -> Vec<&mut Tensor<T>> {
        let mut out = Vec::new();
        for b in &mut self.dwc {
            out.push(&mut b.kernels);
            out.push(&mut b.bias);
        }
        out.push(&mut self.embed_w);
        out.push(&mut self.embed_b);
        for blk in &mut self.blocks {
            out.extend(blk.token_mlp.tensors_mut());
            out.extend(blk.channel_mlp.tensors_mut());
        }
        out.push(&mut self.head_w);
        out.push(&mut self.head_b);
        out
    }

    pub fn tensors(&self) -> Vec<&Tensor<T>> {
        self.named_tensors().into_iter().map(|(_, t)| t).collect()
    }

    pub fn param_count(&self) -> usize {
        self.tensors().iter().map(|t| t.len()).sum()
    }

    /// Element-type conversion preserving structure.
    pub fn cast<U: Scalar>(&self, config: &ModelConfig) -> Result<ModelParams<U>> {
        let named = self
            .named_tensors()
            .into_iter()
            .map(|(n, t)| (n, t.cast::<U>()))
            .collect();
        ModelParams::from_named(config, named)
    }

    /// Checks every tensor name and extent against `config`.
    pub fn audit(&self, config: &ModelConfig) -> Result<()> {
        let expected = shape_manifest(config);
        let actual = self.named_tensors();
        for (i, (name, shape)) in expected.iter().enumerate() {
            match actual.get(i) {
                Some((n, t)) if n == name && t.shape() == &shape[..] => {}
                Some((n, t)) if n == name => {
                    return Err(Error::Checkpoint(format!(
                        "tensor {name} has shape {:?}, config requires {shape:?}",
                        t.shape()
                    )))
                }
                _ => return Err(Error::Checkpoint(format!("missing tensor {name}"))),
            }
        }
        if actual.len() != expected.len() {
            return Err(Error::Checkpoint(format!(
                "expected {} tensors, found {}",
                expected.len(),
                actual.len()
            )));
        }
        Ok(())
    }
}

/// Parameters with the same structure as `params`, every entry drawn
/// uniformly from `(-scale, scale)` on a stream independent of initialization.
pub fn random_like<T: Scalar>(
    params: &ModelParams<T>,
    config: &ModelConfig,
    seed: u64,
    scale: f64,
) -> Result<ModelParams<T>> {
    let mut rng = rng::stream(seed, Stream::GradCheck);
    let named = params
        .named_tensors()
        .into_iter()
        .map(|(n, t)| {
            let r = Tensor::from_fn(t.shape(), |_| {
                T::from_f64_lossy(rng.random_range(-scale..scale))
            });
            (n, r)
        })
        .collect();
    ModelParams::from_named(config, named)
}
