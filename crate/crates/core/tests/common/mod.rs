//! Test-only oracles shared by the integration suites. Nothing here calls
//! into the library's forward or backward code paths.
#![allow(dead_code, clippy::needless_range_loop)]

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sgumlp::Tensor;

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn rand_tensor(rng: &mut ChaCha8Rng, shape: &[usize]) -> Tensor<f64> {
    Tensor::from_fn(shape, |_| rng.random_range(-1.0..1.0))
}

/// Relative error with a 1e-3 magnitude floor, so derivatives that nearly
/// cancel are compared at an absolute scale of 1e-9 rather than amplifying
/// finite-difference rounding noise.
pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1e-3)
}

pub fn dot(a: &Tensor<f64>, b: &Tensor<f64>) -> f64 {
    assert_eq!(a.shape(), b.shape());
    a.data().iter().zip(b.data()).map(|(x, y)| x * y).sum()
}

pub fn axpy(x: &Tensor<f64>, h: f64, d: &Tensor<f64>) -> Tensor<f64> {
    Tensor::new(
        x.shape(),
        x.data()
            .iter()
            .zip(d.data())
            .map(|(a, b)| a + h * b)
            .collect(),
    )
    .unwrap()
}

/// Central difference of `<f(x + h·dir), g>` along `dir`, with the step
/// scaled by the magnitude of `x`.
pub fn directional_fd(
    f: impl Fn(&Tensor<f64>) -> Tensor<f64>,
    x: &Tensor<f64>,
    dir: &Tensor<f64>,
    g: &Tensor<f64>,
) -> f64 {
    let scale = x.data().iter().fold(1.0f64, |m, v| m.max(v.abs()));
    let h = 1e-5 * scale;
    (dot(&f(&axpy(x, h, dir)), g) - dot(&f(&axpy(x, -h, dir)), g)) / (2.0 * h)
}

/// Triple loop `a·b`.
pub fn naive_matmul(a: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (m, k) = (a.shape()[0], a.shape()[1]);
    let n = b.shape()[1];
    let mut out = vec![0.0; m * n];
    for i in 0..m {
        for j in 0..n {
            let mut s = 0.0;
            for t in 0..k {
                s += a.data()[i * k + t] * b.data()[t * n + j];
            }
            out[i * n + j] = s;
        }
    }
    Tensor::new(&[m, n], out).unwrap()
}

/// Depthwise "same" convolution by explicit index checks, HWC layout.
pub fn naive_dwconv(x: &Tensor<f64>, k: &Tensor<f64>, bias: &[f64]) -> Tensor<f64> {
    let (h, w, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let ks = k.shape()[0];
    let r = (ks / 2) as i64;
    let mut out = Tensor::zeros(&[h, w, c]);
    for i in 0..h {
        for j in 0..w {
            for ch in 0..c {
                let mut s = bias[ch];
                for u in 0..ks {
                    for v in 0..ks {
                        let p = i as i64 + u as i64 - r;
                        let q = j as i64 + v as i64 - r;
                        if (0..h as i64).contains(&p) && (0..w as i64).contains(&q) {
                            s += k.at3(u, v, ch) * x.at3(p as usize, q as usize, ch);
                        }
                    }
                }
                out.data_mut()[(i * w + j) * c + ch] = s;
            }
        }
    }
    out
}

/// erf by power series for |z| <= 2 and by the continued fraction of erfc
/// beyond, so neither branch suffers cancellation.
pub fn series_erf(z: f64) -> f64 {
    if z.abs() > 2.0 {
        return z.signum() * (1.0 - cf_erfc(z.abs()));
    }
    let mut term = z;
    let mut sum = z;
    let mut n = 0.0;
    loop {
        n += 1.0;
        term *= -z * z / n;
        let add = term / (2.0 * n + 1.0);
        sum += add;
        if add.abs() < 1e-18 {
            break;
        }
    }
    sum * 2.0 / std::f64::consts::PI.sqrt()
}

/// `erfc(z) = e^{−z²}/√π · 1/(z + (1/2)/(z + 1/(z + (3/2)/(z + …))))`,
/// evaluated bottom-up, for z > 2.
fn cf_erfc(z: f64) -> f64 {
    let mut tail = z;
    for k in (1..400).rev() {
        tail = z + (k as f64 / 2.0) / tail;
    }
    (-z * z).exp() / std::f64::consts::PI.sqrt() / tail
}

pub fn naive_gelu(x: f64) -> f64 {
    x * 0.5 * (1.0 + series_erf(x / std::f64::consts::SQRT_2))
}

/// Row-wise standardization then affine, two-pass.
pub fn naive_layer_norm(x: &Tensor<f64>, gain: &[f64], bias: &[f64], eps: f64) -> Tensor<f64> {
    let (s, f) = (x.shape()[0], x.shape()[1]);
    let mut out = Tensor::zeros(&[s, f]);
    for i in 0..s {
        let row: Vec<f64> = (0..f).map(|j| x.at2(i, j)).collect();
        let mean = row.iter().sum::<f64>() / f as f64;
        let var = row.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / f as f64;
        for j in 0..f {
            out.data_mut()[i * f + j] = gain[j] * (row[j] - mean) / (var + eps).sqrt() + bias[j];
        }
    }
    out
}

pub fn naive_transpose(x: &Tensor<f64>) -> Tensor<f64> {
    let (r, c) = (x.shape()[0], x.shape()[1]);
    Tensor::from_fn(&[c, r], |idx| x.at2(idx % r, idx / r))
}

fn col_split(d: &Tensor<f64>) -> (Tensor<f64>, Tensor<f64>) {
    let (r, f) = (d.shape()[0], d.shape()[1]);
    let h = f / 2;
    (
        Tensor::from_fn(&[r, h], |i| d.at2(i / h, i % h)),
        Tensor::from_fn(&[r, h], |i| d.at2(i / h, h + i % h)),
    )
}

/// Gate by loops: `g[e,c] = Σ_t w[e,t]·D2[t,c] + b[e]`, output `D1 ⊙ g`.
pub fn naive_sgu(d: &Tensor<f64>, w: &Tensor<f64>, b: &Tensor<f64>) -> Tensor<f64> {
    let (d1, d2) = col_split(d);
    let (rows, half) = (d1.shape()[0], d1.shape()[1]);
    let mut out = Tensor::zeros(&[rows, half]);
    for e in 0..rows {
        for c in 0..half {
            let mut g = b.data()[e];
            for t in 0..rows {
                g += w.at2(e, t) * d2.at2(t, c);
            }
            out.data_mut()[e * half + c] = d1.at2(e, c) * g;
        }
    }
    out
}

/// Straight evaluation of `v + W_out·GELU(S(W_in·LN(v)))`.
pub fn naive_gated_mlp(
    v: &Tensor<f64>,
    p: &sgumlp::layers::MlpParams<f64>,
    eps: f64,
) -> Tensor<f64> {
    let normed = naive_layer_norm(v, p.ln_gain.data(), p.ln_bias.data(), eps);
    let mut h = naive_matmul(&normed, &p.w_in);
    if let Some(s) = &p.sgu {
        h = naive_sgu(&h, &s.w_spatial, &s.b_spatial);
    }
    let h = h.map(naive_gelu);
    let o = naive_matmul(&h, &p.w_out);
    Tensor::from_fn(v.shape(), |i| v.data()[i] + o.data()[i])
}

pub fn naive_mixer_block(
    m: &Tensor<f64>,
    p: &sgumlp::layers::MixerBlockParams<f64>,
    eps: f64,
) -> Tensor<f64> {
    let u = naive_transpose(&naive_gated_mlp(&naive_transpose(m), &p.token_mlp, eps));
    naive_gated_mlp(&u, &p.channel_mlp, eps)
}

/// Softmax cross-entropy of a single sample, written out directly.
pub fn naive_ce(logits: &[f64], label: usize) -> f64 {
    let max = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
    -(logits[label] - max - z.ln())
}
