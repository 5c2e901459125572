use super::raster::BandStack;
use crate::error::{Error, Result};
use crate::tensor::{Scalar, Tensor};

/// Maps any integer index into `0..n` by mirroring about the edges without
/// repeating the edge pixel (`-1 → 1`, `n → n-2`).
pub fn reflect_index(i: isize, n: usize) -> usize {
    if n == 1 {
        return 0;
    }
    let period = 2 * (n as isize - 1);
    let m = i.rem_euclid(period);
    if m < n as isize {
        m as usize
    } else {
        (period - m) as usize
    }
}

/// `window × window × bands` patch centred on `(row, col)`, reflect-padded
/// at the raster border.
pub fn extract_patch<T: Scalar>(
    stack: &BandStack,
    row: usize,
    col: usize,
    window: usize,
) -> Result<Tensor<T>> {
    if row >= stack.height() || col >= stack.width() {
        return Err(Error::Bounds(format!(
            "centre ({row}, {col}) outside {}×{} raster",
            stack.height(),
            stack.width()
        )));
    }
    if window.is_multiple_of(2) {
        return Err(Error::Config(format!("patch window {window} must be odd")));
    }
    let r = (window / 2) as isize;
    let b = stack.bands();
    let mut data = Vec::with_capacity(window * window * b);
    for di in -r..=r {
        let ri = reflect_index(row as isize + di, stack.height());
        for dj in -r..=r {
            let ci = reflect_index(col as isize + dj, stack.width());
            for band in 0..b {
                data.push(T::from_f32(stack.get(band, ri, ci)).unwrap());
            }
        }
    }
    Tensor::new(&[window, window, b], data)
}
