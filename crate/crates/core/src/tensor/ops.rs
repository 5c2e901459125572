//! Forward operations and their vector-Jacobian products.
//!
//! Naming: `op` computes the forward value, `op_backward` takes the saved
//! forward inputs (or a cache) plus the upstream cotangent `g` and returns the
//! cotangent of every input.

use super::{Scalar, Tensor};
use crate::error::{Error, Result};

pub(crate) fn check_same_shape<T: Scalar>(op: &str, a: &Tensor<T>, b: &Tensor<T>) -> Result<()> {
    if a.shape() != b.shape() {
        return Err(Error::Dimension(format!(
            "{op}: shapes {:?} and {:?} differ",
            a.shape(),
            b.shape()
        )));
    }
    Ok(())
}

fn finite<T: Scalar>(op: &'static str, t: Tensor<T>) -> Result<Tensor<T>> {
    if t.is_finite() {
        Ok(t)
    } else {
        Err(Error::NonFinite { op })
    }
}

fn matrix<T: Scalar>(op: &str, t: &Tensor<T>) -> Result<(usize, usize)> {
    t.dims2()
        .map_err(|_| Error::Dimension(format!("{op}: expected a matrix, got {:?}", t.shape())))
}

// ---------------------------------------------------------------------------
// matmul

/// `a[m×k] · b[k×n]`.
pub fn matmul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = matrix("matmul", a)?;
    let (k2, n) = matrix("matmul", b)?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul: inner extents differ for {:?} x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut c = vec![T::zero(); m * n];
    for i in 0..m {
        let crow = &mut c[i * n..(i + 1) * n];
        for t in 0..k {
            let ait = ad[i * k + t];
            let brow = &bd[t * n..(t + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + ait * bv;
            }
        }
    }
    finite("matmul", Tensor::new(&[m, n], c)?)
}

/// `aᵀ · b` for `a[k×m]`, `b[k×n]`, without materializing the transpose.
pub fn matmul_tn<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (k, m) = matrix("matmul_tn", a)?;
    let (k2, n) = matrix("matmul_tn", b)?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul_tn: leading extents differ for {:?}ᵀ x {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut c = vec![T::zero(); m * n];
    for t in 0..k {
        let brow = &bd[t * n..(t + 1) * n];
        for i in 0..m {
            let ati = ad[t * m + i];
            let crow = &mut c[i * n..(i + 1) * n];
            for (cv, &bv) in crow.iter_mut().zip(brow) {
                *cv = *cv + ati * bv;
            }
        }
    }
    finite("matmul_tn", Tensor::new(&[m, n], c)?)
}

/// `a · bᵀ` for `a[m×k]`, `b[n×k]`.
pub fn matmul_nt<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (m, k) = matrix("matmul_nt", a)?;
    let (n, k2) = matrix("matmul_nt", b)?;
    if k != k2 {
        return Err(Error::Dimension(format!(
            "matmul_nt: trailing extents differ for {:?} x {:?}ᵀ",
            a.shape(),
            b.shape()
        )));
    }
    let (ad, bd) = (a.data(), b.data());
    let mut c = Vec::with_capacity(m * n);
    for i in 0..m {
        let arow = &ad[i * k..(i + 1) * k];
        for j in 0..n {
            let brow = &bd[j * k..(j + 1) * k];
            c.push(
                arow.iter()
                    .zip(brow)
                    .fold(T::zero(), |s, (&x, &y)| s + x * y),
            );
        }
    }
    finite("matmul_nt", Tensor::new(&[m, n], c)?)
}

/// Returns `(dA, dB) = (G·Bᵀ, Aᵀ·G)`.
pub fn matmul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    let (m, _) = matrix("matmul_backward", a)?;
    let (_, n) = matrix("matmul_backward", b)?;
    if g.shape() != [m, n] {
        return Err(Error::Dimension(format!(
            "matmul_backward: cotangent {:?} does not match output [{m}, {n}]",
            g.shape()
        )));
    }
    Ok((matmul_nt(g, b)?, matmul_tn(a, g)?))
}

pub fn transpose<T: Scalar>(a: &Tensor<T>) -> Result<Tensor<T>> {
    let (r, c) = matrix("transpose", a)?;
    let d = a.data();
    let mut out = Vec::with_capacity(r * c);
    for j in 0..c {
        for i in 0..r {
            out.push(d[i * c + j]);
        }
    }
    Tensor::new(&[c, r], out)
}

// ---------------------------------------------------------------------------
// elementwise

pub fn add<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("add", a, b, |x, y| x + y)
}

pub fn mul<T: Scalar>(a: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("mul", a, b, |x, y| x * y)
}

pub fn scale<T: Scalar>(a: &Tensor<T>, s: T) -> Result<Tensor<T>> {
    finite("scale", a.map(|v| v * s))
}

fn zip_with<T: Scalar>(
    op: &'static str,
    a: &Tensor<T>,
    b: &Tensor<T>,
    f: impl Fn(T, T) -> T,
) -> Result<Tensor<T>> {
    check_same_shape(op, a, b)?;
    let data = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| f(x, y))
        .collect();
    finite(op, Tensor::new(a.shape(), data)?)
}

pub fn add_backward<T: Scalar>(g: &Tensor<T>) -> (Tensor<T>, Tensor<T>) {
    (g.clone(), g.clone())
}

pub fn mul_backward<T: Scalar>(
    a: &Tensor<T>,
    b: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>)> {
    check_same_shape("mul_backward", a, g)?;
    Ok((mul(g, b)?, mul(g, a)?))
}

pub fn scale_backward<T: Scalar>(s: T, g: &Tensor<T>) -> Result<Tensor<T>> {
    scale(g, s)
}

// ---------------------------------------------------------------------------
// gelu (exact erf form)

fn gelu_scalar<T: Scalar>(x: T) -> T {
    let half = T::from_f64_lossy(0.5);
    let inv_sqrt2 = T::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2);
    half * x * (T::one() + (x * inv_sqrt2).erf())
}

fn gelu_derivative<T: Scalar>(x: T) -> T {
    let half = T::from_f64_lossy(0.5);
    let inv_sqrt2 = T::from_f64_lossy(std::f64::consts::FRAC_1_SQRT_2);
    let inv_sqrt_2pi = T::from_f64_lossy(0.398_942_280_401_432_7);
    let cdf = half * (T::one() + (x * inv_sqrt2).erf());
    let pdf = inv_sqrt_2pi * (-half * x * x).exp();
    cdf + x * pdf
}

/// `x·Φ(x)` elementwise.
pub fn gelu<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    finite("gelu", x.map(gelu_scalar))
}

pub fn gelu_backward<T: Scalar>(x: &Tensor<T>, g: &Tensor<T>) -> Result<Tensor<T>> {
    zip_with("gelu_backward", x, g, |xv, gv| gelu_derivative(xv) * gv)
}

// ---------------------------------------------------------------------------
// layer norm over the last axis of a matrix

pub const LN_EPS: f64 = 1e-5;

/// Saved state for [`layer_norm_backward`].
#[derive(Debug, Clone)]
pub struct LayerNormCache<T> {
    /// Standardized input before the affine transform.
    pub xhat: Tensor<T>,
    /// Per-row `1/sqrt(var + eps)`.
    pub inv_std: Vec<T>,
}

pub fn layer_norm<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<Tensor<T>> {
    layer_norm_forward(x, gain, bias, eps).map(|(y, _)| y)
}

pub fn layer_norm_forward<T: Scalar>(
    x: &Tensor<T>,
    gain: &Tensor<T>,
    bias: &Tensor<T>,
    eps: T,
) -> Result<(Tensor<T>, LayerNormCache<T>)> {
    let (s, f) = matrix("layer_norm", x)?;
    if f == 0 {
        return Err(Error::Dimension(
            "layer_norm: zero-length feature axis".into(),
        ));
    }
    if gain.shape() != [f] || bias.shape() != [f] {
        return Err(Error::Dimension(format!(
            "layer_norm: input {:?} needs gain/bias [{f}], got {:?}/{:?}",
            x.shape(),
            gain.shape(),
            bias.shape()
        )));
    }
    if eps.is_nan() || eps <= T::zero() {
        return Err(Error::Config("layer_norm: eps must be positive".into()));
    }
    let nf = T::from_usize(f).unwrap();
    let mut xhat = Vec::with_capacity(s * f);
    let mut out = Vec::with_capacity(s * f);
    let mut inv_std = Vec::with_capacity(s);
    for row in x.data().chunks_exact(f) {
        let mean = row.iter().copied().sum::<T>() / nf;
        let var = row.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / nf;
        let is = T::one() / (var + eps).sqrt();
        inv_std.push(is);
        for (j, &v) in row.iter().enumerate() {
            let h = (v - mean) * is;
            xhat.push(h);
            out.push(gain.data()[j] * h + bias.data()[j]);
        }
    }
    let y = finite("layer_norm", Tensor::new(&[s, f], out)?)?;
    let cache = LayerNormCache {
        xhat: Tensor::new(&[s, f], xhat)?,
        inv_std,
    };
    Ok((y, cache))
}

/// Returns `(dx, dgain, dbias)`.
pub fn layer_norm_backward<T: Scalar>(
    cache: &LayerNormCache<T>,
    gain: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    check_same_shape("layer_norm_backward", &cache.xhat, g)?;
    let (_, f) = cache.xhat.dims2()?;
    let nf = T::from_usize(f).unwrap();
    let mut dgain = vec![T::zero(); f];
    let mut dbias = vec![T::zero(); f];
    let mut dx = Vec::with_capacity(g.len());
    let rows = cache
        .xhat
        .data()
        .chunks_exact(f)
        .zip(g.data().chunks_exact(f));
    for ((xr, gr), &is) in rows.zip(&cache.inv_std) {
        // dxhat = g ⊙ gain
        let mut sum_dxhat = T::zero();
        let mut sum_dxhat_xhat = T::zero();
        for j in 0..f {
            let dxh = gr[j] * gain.data()[j];
            sum_dxhat = sum_dxhat + dxh;
            sum_dxhat_xhat = sum_dxhat_xhat + dxh * xr[j];
            dgain[j] = dgain[j] + gr[j] * xr[j];
            dbias[j] = dbias[j] + gr[j];
        }
        for j in 0..f {
            let dxh = gr[j] * gain.data()[j];
            dx.push(is / nf * (nf * dxh - sum_dxhat - xr[j] * sum_dxhat_xhat));
        }
    }
    Ok((
        finite("layer_norm_backward", Tensor::new(g.shape(), dx)?)?,
        Tensor::new(&[f], dgain)?,
        Tensor::new(&[f], dbias)?,
    ))
}

// ---------------------------------------------------------------------------
// softmax over the last axis

pub fn softmax<T: Scalar>(x: &Tensor<T>) -> Result<Tensor<T>> {
    let c = *x.shape().last().expect("tensors have rank >= 1");
    let mut out = Vec::with_capacity(x.len());
    for row in x.data().chunks_exact(c) {
        let max = row.iter().copied().fold(T::neg_infinity(), T::max);
        let start = out.len();
        out.extend(row.iter().map(|&v| (v - max).exp()));
        let z: T = out[start..].iter().copied().sum();
        out[start..].iter_mut().for_each(|v| *v = *v / z);
    }
    finite("softmax", Tensor::new(x.shape(), out)?)
}

/// Cotangent of the softmax input given its output `y`.
pub fn softmax_backward<T: Scalar>(y: &Tensor<T>, g: &Tensor<T>) -> Result<Tensor<T>> {
    check_same_shape("softmax_backward", y, g)?;
    let c = *y.shape().last().unwrap();
    let mut dx = Vec::with_capacity(y.len());
    for (yr, gr) in y.data().chunks_exact(c).zip(g.data().chunks_exact(c)) {
        let dot = yr.iter().zip(gr).fold(T::zero(), |s, (&a, &b)| s + a * b);
        dx.extend(yr.iter().zip(gr).map(|(&yv, &gv)| yv * (gv - dot)));
    }
    Tensor::new(y.shape(), dx)
}

// ---------------------------------------------------------------------------
// depthwise 2-D convolution, HWC layout, zero "same" padding

fn conv_dims<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
) -> Result<(usize, usize, usize, usize)> {
    let (h, w, c) = match x.shape()[..] {
        [h, w, c] => (h, w, c),
        _ => {
            return Err(Error::Dimension(format!(
                "depthwise_conv2d: input must be h×w×c, got {:?}",
                x.shape()
            )))
        }
    };
    let k = match kernels.shape()[..] {
        [k1, k2, kc] if k1 == k2 && kc == c => k1,
        _ => {
            return Err(Error::Dimension(format!(
                "depthwise_conv2d: kernels {:?} do not match input {:?}",
                kernels.shape(),
                x.shape()
            )))
        }
    };
    if k % 2 == 0 {
        return Err(Error::Config(format!(
            "depthwise_conv2d: kernel size {k} must be odd"
        )));
    }
    Ok((h, w, c, k))
}

/// Each output channel is the cross-correlation of the matching input channel
/// with its own `k×k` kernel, plus a per-channel bias.
pub fn depthwise_conv2d<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    bias: &Tensor<T>,
) -> Result<Tensor<T>> {
    let (h, w, c, k) = conv_dims(x, kernels)?;
    if bias.shape() != [c] {
        return Err(Error::Dimension(format!(
            "depthwise_conv2d: bias {:?} does not match {c} channels",
            bias.shape()
        )));
    }
    let r = (k / 2) as isize;
    let (xd, kd) = (x.data(), kernels.data());
    let mut out = Vec::with_capacity(h * w * c);
    for i in 0..h as isize {
        for j in 0..w as isize {
            for ch in 0..c {
                let mut acc = bias.data()[ch];
                for u in 0..k as isize {
                    let p = i + u - r;
                    if p < 0 || p >= h as isize {
                        continue;
                    }
                    for v in 0..k as isize {
                        let q = j + v - r;
                        if q < 0 || q >= w as isize {
                            continue;
                        }
                        let xv = xd[(p as usize * w + q as usize) * c + ch];
                        let kv = kd[(u as usize * k + v as usize) * c + ch];
                        acc = acc + xv * kv;
                    }
                }
                out.push(acc);
            }
        }
    }
    finite("depthwise_conv2d", Tensor::new(&[h, w, c], out)?)
}

/// Returns `(dx, dkernels, dbias)`.
pub fn depthwise_conv2d_backward<T: Scalar>(
    x: &Tensor<T>,
    kernels: &Tensor<T>,
    g: &Tensor<T>,
) -> Result<(Tensor<T>, Tensor<T>, Tensor<T>)> {
    let (h, w, c, k) = conv_dims(x, kernels)?;
    check_same_shape("depthwise_conv2d_backward", x, g)?;
    let r = (k / 2) as isize;
    let (xd, kd, gd) = (x.data(), kernels.data(), g.data());
    let mut dx = vec![T::zero(); h * w * c];
    let mut dk = vec![T::zero(); k * k * c];
    let mut db = vec![T::zero(); c];
    for i in 0..h as isize {
        for j in 0..w as isize {
            for ch in 0..c {
                let gv = gd[(i as usize * w + j as usize) * c + ch];
                db[ch] = db[ch] + gv;
                for u in 0..k as isize {
                    let p = i + u - r;
                    if p < 0 || p >= h as isize {
                        continue;
                    }
                    for v in 0..k as isize {
                        let q = j + v - r;
                        if q < 0 || q >= w as isize {
                            continue;
                        }
                        let xi = (p as usize * w + q as usize) * c + ch;
                        let ki = (u as usize * k + v as usize) * c + ch;
                        dk[ki] = dk[ki] + gv * xd[xi];
                        dx[xi] = dx[xi] + gv * kd[ki];
                    }
                }
            }
        }
    }
    Ok((
        finite("depthwise_conv2d_backward", Tensor::new(&[h, w, c], dx)?)?,
        Tensor::new(&[k, k, c], dk)?,
        Tensor::new(&[c], db)?,
    ))
}

// ---------------------------------------------------------------------------
// matrix plumbing used by the layers

/// `x[s×f] + b[f]` with `b` added to every row.
pub fn add_row_bias<T: Scalar>(x: &Tensor<T>, b: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, f) = matrix("add_row_bias", x)?;
    if b.shape() != [f] {
        return Err(Error::Dimension(format!(
            "add_row_bias: bias {:?} does not match {:?}",
            b.shape(),
            x.shape()
        )));
    }
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(f) {
        for (v, &bv) in row.iter_mut().zip(b.data()) {
            *v = *v + bv;
        }
    }
    finite("add_row_bias", out)
}

/// Column sums of `g[s×f]`; the bias cotangent of [`add_row_bias`].
pub fn column_sums<T: Scalar>(g: &Tensor<T>) -> Result<Tensor<T>> {
    let (_, f) = matrix("column_sums", g)?;
    let mut out = vec![T::zero(); f];
    for row in g.data().chunks_exact(f) {
        for (o, &v) in out.iter_mut().zip(row) {
            *o = *o + v;
        }
    }
    Tensor::new(&[f], out)
}

/// Splits `x[s×f]` into `x[:, :at]` and `x[:, at:]`.
pub fn split_columns<T: Scalar>(x: &Tensor<T>, at: usize) -> Result<(Tensor<T>, Tensor<T>)> {
    let (s, f) = matrix("split_columns", x)?;
    if at == 0 || at >= f {
        return Err(Error::Dimension(format!(
            "split_columns: cannot split {f} columns at {at}"
        )));
    }
    let mut left = Vec::with_capacity(s * at);
    let mut right = Vec::with_capacity(s * (f - at));
    for row in x.data().chunks_exact(f) {
        left.extend_from_slice(&row[..at]);
        right.extend_from_slice(&row[at..]);
    }
    Ok((
        Tensor::new(&[s, at], left)?,
        Tensor::new(&[s, f - at], right)?,
    ))
}

/// Inverse of [`split_columns`].
pub fn concat_columns<T: Scalar>(left: &Tensor<T>, right: &Tensor<T>) -> Result<Tensor<T>> {
    let (s, a) = matrix("concat_columns", left)?;
    let (s2, b) = matrix("concat_columns", right)?;
    if s != s2 {
        return Err(Error::Dimension(format!(
            "concat_columns: row counts differ for {:?} and {:?}",
            left.shape(),
            right.shape()
        )));
    }
    let mut out = Vec::with_capacity(s * (a + b));
    for (l, r) in left
        .data()
        .chunks_exact(a)
        .zip(right.data().chunks_exact(b))
    {
        out.extend_from_slice(l);
        out.extend_from_slice(r);
    }
    Tensor::new(&[s, a + b], out)
}
