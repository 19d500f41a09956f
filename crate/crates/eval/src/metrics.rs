use rfnode_core::image::ImageBuf;
use rfnode_core::RgbImage;

use crate::error::EvalError;

pub const PSNR_CAP: f64 = 99.0;
pub const SSIM_WINDOW: usize = 11;
pub const SSIM_SIGMA: f64 = 1.5;
const K1: f64 = 0.01;
const K2: f64 = 0.03;

fn check_dims(a: (usize, usize), b: (usize, usize)) -> Result<(), EvalError> {
    if a != b {
        return Err(EvalError::Dimensions { a, b });
    }
    Ok(())
}

/// `10 log10(1 / MSE)` over all channels, capped at [`PSNR_CAP`].
pub fn psnr(a: &RgbImage, b: &RgbImage) -> Result<f64, EvalError> {
    check_dims(a.dims(), b.dims())?;
    if a.is_empty() {
        return Err(EvalError::Dimensions { a: a.dims(), b: b.dims() });
    }
    let sum: f64 = a
        .pixels()
        .iter()
        .zip(b.pixels())
        .map(|(p, q)| (0..3).map(|c| (p[c] as f64 - q[c] as f64).powi(2)).sum::<f64>())
        .sum();
    let mse = sum / (a.pixels().len() * 3) as f64;
    if mse == 0.0 {
        return Ok(PSNR_CAP);
    }
    Ok((10.0 * (1.0 / mse).log10()).min(PSNR_CAP))
}

/// Normalized 1D Gaussian taps; the 2D window is their outer product.
pub fn gaussian_taps() -> [f64; SSIM_WINDOW] {
    let r = (SSIM_WINDOW / 2) as f64;
    let mut taps = [0.0; SSIM_WINDOW];
    for (i, t) in taps.iter_mut().enumerate() {
        let d = i as f64 - r;
        *t = (-d * d / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp();
    }
    let sum: f64 = taps.iter().sum();
    taps.map(|t| t / sum)
}

/// Mean SSIM on BT.601 luma.
pub fn ssim(a: &RgbImage, b: &RgbImage) -> Result<f64, EvalError> {
    check_dims(a.dims(), b.dims())?;
    ssim_gray(&a.to_gray(), &b.to_gray())
}

/// Mean SSIM over every fully contained window (no padding), `L = 1`.
pub fn ssim_gray(a: &ImageBuf<f64>, b: &ImageBuf<f64>) -> Result<f64, EvalError> {
    check_dims(a.dims(), b.dims())?;
    let (w, h) = a.dims();
    if w < SSIM_WINDOW || h < SSIM_WINDOW {
        return Err(EvalError::TooSmall { width: w, height: h, window: SSIM_WINDOW });
    }
    let taps = gaussian_taps();
    let (ow, oh) = (w - SSIM_WINDOW + 1, h - SSIM_WINDOW + 1);
    let (pa, pb) = (a.pixels(), b.pixels());
    // five moment planes, filtered along x then y
    let mut rows = vec![[0.0f64; 5]; ow * h];
    for y in 0..h {
        for x in 0..ow {
            let mut acc = [0.0; 5];
            for (k, t) in taps.iter().enumerate() {
                let (u, v) = (pa[y * w + x + k], pb[y * w + x + k]);
                acc[0] += t * u;
                acc[1] += t * v;
                acc[2] += t * u * u;
                acc[3] += t * v * v;
                acc[4] += t * u * v;
            }
            rows[y * ow + x] = acc;
        }
    }
    let c1 = (K1 * 1.0f64).powi(2);
    let c2 = (K2 * 1.0f64).powi(2);
    let mut total = 0.0;
    for y in 0..oh {
        for x in 0..ow {
            let mut m = [0.0; 5];
            for (k, t) in taps.iter().enumerate() {
                let r = rows[(y + k) * ow + x];
                for j in 0..5 {
                    m[j] += t * r[j];
                }
            }
            let (mx, my) = (m[0], m[1]);
            let vx = m[2] - mx * mx;
            let vy = m[3] - my * my;
            let cxy = m[4] - mx * my;
            total += ((2.0 * mx * my + c1) * (2.0 * cxy + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
        }
    }
    Ok(total / (ow * oh) as f64)
}
