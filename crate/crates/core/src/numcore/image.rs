//! Image-space operations on score grids.

use super::Mat;
use crate::error::{Error, Result};

/// Align-corners bilinear resize. Output dimensions must be at least the input's.
pub fn bilinear_upsample(map: &Mat, out_h: usize, out_w: usize) -> Result<Mat> {
    let (h, w) = map.shape();
    if map.is_empty() {
        return Err(Error::contract("cannot upsample an empty map"));
    }
    if out_h == 0 || out_w == 0 {
        return Err(Error::contract(
            "upsample output dimensions must be nonzero",
        ));
    }
    if out_h < h || out_w < w {
        return Err(Error::contract(format!(
            "upsample target {out_h}x{out_w} is smaller than source {h}x{w}"
        )));
    }
    if (out_h, out_w) == (h, w) {
        return Ok(map.clone());
    }
    let ys: Vec<(usize, usize, f64)> = (0..out_h).map(|i| source_coord(i, out_h, h)).collect();
    let xs: Vec<(usize, usize, f64)> = (0..out_w).map(|j| source_coord(j, out_w, w)).collect();
    let mut out = Mat::zeros(out_h, out_w);
    for (i, &(y0, y1, fy)) in ys.iter().enumerate() {
        for (j, &(x0, x1, fx)) in xs.iter().enumerate() {
            let top = map.get(y0, x0) * (1.0 - fx) + map.get(y0, x1) * fx;
            let bottom = map.get(y1, x0) * (1.0 - fx) + map.get(y1, x1) * fx;
            out.set(i, j, top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(out)
}

fn source_coord(i: usize, out_len: usize, in_len: usize) -> (usize, usize, f64) {
    if in_len == 1 || out_len == 1 {
        return (0, 0, 0.0);
    }
    let pos = i as f64 * (in_len - 1) as f64 / (out_len - 1) as f64;
    let lo = (pos.floor() as usize).min(in_len - 1);
    let hi = (lo + 1).min(in_len - 1);
    (lo, hi, pos - lo as f64)
}

/// Normalized 1-D Gaussian taps for offsets `-radius..=radius`, radius `ceil(3σ)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let taps: Vec<f64> = (-radius..=radius)
        .map(|k| (-((k * k) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = taps.iter().sum();
    taps.into_iter().map(|t| t / total).collect()
}

/// Mirror index with edge repetition (`d c b a | a b c d | d c b a`), valid for
/// any offset including ones wider than the signal.
pub fn reflect_index(i: i64, len: usize) -> usize {
    let period = 2 * len as i64;
    let m = i.rem_euclid(period);
    if m < len as i64 {
        m as usize
    } else {
        (period - 1 - m) as usize
    }
}

/// Separable Gaussian blur with reflect padding. `sigma_px == 0` is the identity.
pub fn gaussian_blur(map: &Mat, sigma_px: f64) -> Result<Mat> {
    if !(sigma_px >= 0.0) || !sigma_px.is_finite() {
        return Err(Error::contract(format!(
            "blur sigma must be finite and nonnegative, got {sigma_px}"
        )));
    }
    if sigma_px == 0.0 || map.is_empty() {
        return Ok(map.clone());
    }
    let kernel = gaussian_kernel(sigma_px);
    let radius = (kernel.len() / 2) as i64;
    let (h, w) = map.shape();

    let mut horizontal = Mat::zeros(h, w);
    for r in 0..h {
        let row = map.row(r);
        for c in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * row[reflect_index(c as i64 + t as i64 - radius, w)];
            }
            horizontal.set(r, c, acc);
        }
    }
    let mut out = Mat::zeros(h, w);
    for r in 0..h {
        for c in 0..w {
            let mut acc = 0.0;
            for (t, &k) in kernel.iter().enumerate() {
                acc += k * horizontal.get(reflect_index(r as i64 + t as i64 - radius, h), c);
            }
            out.set(r, c, acc);
        }
    }
    Ok(out)
}
