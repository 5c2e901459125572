//! Finite-difference verification of the model's backward pass.

use rand::Rng as _;

use crate::error::Result;
use crate::layers::{
    forward_cached, init_params, model_backward, random_like, ModelConfig, ModelParams, Variant,
};
use crate::rng::{self, Stream};
use crate::tensor::Tensor;

/// Pass threshold on the maximum relative error of any tensor.
pub const GRAD_CHECK_TOLERANCE: f64 = 1e-4;

/// Relative step: `h = STEP · max(1, |θ|)`.
pub const STEP: f64 = 1e-5;

/// Denominator floor of the relative error, so gradients that are zero up
/// to rounding are compared absolutely.
pub const MAGNITUDE_FLOOR: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    pub elements: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub variant: Variant,
    pub tensors: Vec<TensorCheck>,
}

impl GradCheckReport {
    pub fn passed(&self) -> bool {
        self.tensors
            .iter()
            .all(|t| t.max_rel_err < GRAD_CHECK_TOLERANCE)
    }

    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.max_rel_err.total_cmp(&b.max_rel_err))
    }

    pub fn render(&self) -> String {
        let mut s = format!("variant {}\n", self.variant);
        for t in &self.tensors {
            let mark = if t.max_rel_err < GRAD_CHECK_TOLERANCE {
                "ok"
            } else {
                "FAIL"
            };
            s.push_str(&format!(
                "  {:<32} {:>6} elems  max rel err {:.3e}  {mark}\n",
                t.name, t.elements, t.max_rel_err
            ));
        }
        s
    }
}

pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(MAGNITUDE_FLOOR)
}

/// Double-precision toy configuration: 9×9×3 patches, 16 tokens of width 8,
/// two blocks, four classes.
pub fn toy_config(variant: Variant) -> ModelConfig {
    ModelConfig {
        token_segment: 16,
        hidden_dim: 8,
        mixer_ffn_dim: 8,
        num_blocks: 2,
        ..ModelConfig::new(3, 4, variant)
    }
}

/// Compares `analytic` against central differences of `loss` for every
/// element of every parameter tensor.
pub fn check_gradients(
    params: &ModelParams<f64>,
    analytic: &ModelParams<f64>,
    variant: Variant,
    loss: impl Fn(&ModelParams<f64>) -> Result<f64>,
) -> Result<GradCheckReport> {
    let names: Vec<String> = params.named_tensors().into_iter().map(|(n, _)| n).collect();
    let grads: Vec<&Tensor<f64>> = analytic.tensors();
    let mut probe = params.clone();
    let mut tensors = Vec::with_capacity(names.len());
    for (ti, name) in names.into_iter().enumerate() {
        let n = grads[ti].len();
        let mut worst = 0.0f64;
        for k in 0..n {
            let x0 = probe.tensors_mut()[ti].data()[k];
            let h = STEP * x0.abs().max(1.0);
            probe.tensors_mut()[ti].data_mut()[k] = x0 + h;
            let up = loss(&probe)?;
            probe.tensors_mut()[ti].data_mut()[k] = x0 - h;
            let down = loss(&probe)?;
            probe.tensors_mut()[ti].data_mut()[k] = x0;
            let numeric = (up - down) / (2.0 * h);
            worst = worst.max(relative_error(grads[ti].data()[k], numeric));
        }
        tensors.push(TensorCheck {
            name,
            elements: n,
            max_rel_err: worst,
        });
    }
    Ok(GradCheckReport { variant, tensors })
}

/// Checks the full-model backward pass on one random patch and label with
/// random parameters (all entries in ±0.5, so gates are far from identity).
pub fn grad_check(config: &ModelConfig, seed: u64) -> Result<GradCheckReport> {
    let base = init_params::<f64>(config, seed)?;
    let params = random_like(&base, config, seed, 0.5)?;
    let mut rng = rng::stream(seed.wrapping_add(1), Stream::GradCheck);
    let w = config.patch_window;
    let patch = Tensor::from_fn(&[w, w, config.bands], |_| rng.random_range(-1.0..1.0));
    let label = rng.random_range(0..config.num_classes);

    let cache = forward_cached(&patch, &params, config)?;
    let mut dlogits = cache.probs.clone();
    dlogits.data_mut()[label] -= 1.0;
    let analytic = model_backward(&cache, &params, config, &dlogits)?;

    check_gradients(&params, &analytic, config.variant, |p| {
        let logits = forward_cached(&patch, p, config)?.logits;
        let max = logits
            .data()
            .iter()
            .copied()
            .fold(f64::NEG_INFINITY, f64::max);
        let lse = logits
            .data()
            .iter()
            .map(|v| (v - max).exp())
            .sum::<f64>()
            .ln()
            + max;
        Ok(lse - logits.data()[label])
    })
}
