//! Linear color matching: transfer the content image's channel mean and
//! covariance onto the style image.
//!
//! `s' = A (s - mu_s) + mu_c` with `A = L_c * L_s^{-1}`, where `L_c`, `L_s`
//! are Cholesky factors of the 3x3 RGB covariance matrices, each regularized
//! by `1e-6 * trace` times the identity.

use crate::error::{Error, Result};
use crate::image::Image;
use crate::linalg::{cholesky_f64, invert_lower_f64, matmul_f64};

const REGULARIZER: f64 = 1e-6;

fn channel_stats(img: &Image) -> ([f64; 3], [f64; 9]) {
    let n = (img.width() * img.height()) as f64;
    let mut mean = [0.0f64; 3];
    for px in img.pixels().chunks(3) {
        for c in 0..3 {
            mean[c] += px[c] as f64;
        }
    }
    mean.iter_mut().for_each(|m| *m /= n);
    let mut cov = [0.0f64; 9];
    for px in img.pixels().chunks(3) {
        let d = [
            px[0] as f64 - mean[0],
            px[1] as f64 - mean[1],
            px[2] as f64 - mean[2],
        ];
        for i in 0..3 {
            for j in 0..3 {
                cov[i * 3 + j] += d[i] * d[j];
            }
        }
    }
    cov.iter_mut().for_each(|c| *c /= n);
    (mean, cov)
}

fn regularize(cov: &mut [f64; 9]) {
    let sigma = REGULARIZER * (cov[0] + cov[4] + cov[8]);
    for i in 0..3 {
        cov[i * 3 + i] += sigma;
    }
}

/// The matched style pixels before clamping, flat RGB. The unclamped values
/// carry the exact mean/covariance contract; [`color_match`] clamps them
/// into an [`Image`] at the export boundary.
pub fn color_match_unclamped(style: &Image, content: &Image) -> Result<Vec<f32>> {
    let (mu_s, mut cov_s) = channel_stats(style);
    let (mu_c, mut cov_c) = channel_stats(content);
    if cov_s[0] + cov_s[4] + cov_s[8] <= 0.0 {
        return Err(Error::numeric(
            "color_match: style covariance has non-positive trace",
        ));
    }
    regularize(&mut cov_s);
    regularize(&mut cov_c);
    let l_s = cholesky_f64(3, &cov_s).ok_or_else(|| {
        Error::numeric("color_match: singular style covariance after regularization")
    })?;
    let l_c = cholesky_f64(3, &cov_c).ok_or_else(|| {
        Error::numeric("color_match: singular content covariance after regularization")
    })?;
    let l_s_inv = invert_lower_f64(3, &l_s).ok_or_else(|| {
        Error::numeric("color_match: singular style covariance after regularization")
    })?;
    let a = matmul_f64(&l_c, &l_s_inv, 3, 3, 3);
    let mut out = Vec::with_capacity(style.pixels().len());
    for px in style.pixels().chunks(3) {
        let d = [
            px[0] as f64 - mu_s[0],
            px[1] as f64 - mu_s[1],
            px[2] as f64 - mu_s[2],
        ];
        for i in 0..3 {
            let v = a[i * 3] * d[0] + a[i * 3 + 1] * d[1] + a[i * 3 + 2] * d[2] + mu_c[i];
            out.push(v as f32);
        }
    }
    Ok(out)
}

/// Color-matched style image, clamped to [0, 1].
pub fn color_match(style: &Image, content: &Image) -> Result<Image> {
    let raw = color_match_unclamped(style, content)?;
    Image::new(
        style.width(),
        style.height(),
        raw.iter().map(|v| v.clamp(0.0, 1.0)).collect(),
    )
}
