//! Full-reference image quality metrics: MSE, PSNR and SSIM.

use crate::error::{Error, Result};
use crate::image::Image;

/// PSNR/SSIM/MSE triple for one image pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MetricReport {
    /// Peak signal-to-noise ratio in dB; `f64::INFINITY` when MSE is zero.
    pub psnr: f64,
    pub ssim: f64,
    pub mse: f64,
}

pub fn report(a: &Image, b: &Image) -> Result<MetricReport> {
    Ok(MetricReport {
        psnr: psnr(a, b)?,
        ssim: ssim(a, b)?,
        mse: mse(a, b)?,
    })
}

fn check_dims(a: &Image, b: &Image) -> Result<()> {
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    Ok(())
}

/// Mean squared intensity difference.
pub fn mse(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    let sum: f64 = a
        .data()
        .iter()
        .zip(b.data())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum();
    Ok(sum / a.data().len() as f64)
}

/// `10 log10(255^2 / mse)`; infinite for identical images.
pub fn psnr(a: &Image, b: &Image) -> Result<f64> {
    let m = mse(a, b)?;
    if m == 0.0 {
        Ok(f64::INFINITY)
    } else {
        Ok(10.0 * (255.0 * 255.0 / m).log10())
    }
}

const SSIM_WINDOW: usize = 11;
const SSIM_SIGMA: f64 = 1.5;
const SSIM_K1: f64 = 0.01;
const SSIM_K2: f64 = 0.03;
const SSIM_L: f64 = 255.0;

/// Mean SSIM over the valid region, 11x11 Gaussian window (sigma 1.5),
/// K1=0.01, K2=0.03, dynamic range 255.
pub fn ssim(a: &Image, b: &Image) -> Result<f64> {
    check_dims(a, b)?;
    if a.width() < SSIM_WINDOW || a.height() < SSIM_WINDOW {
        return Err(Error::InvalidParam(format!(
            "ssim needs min side >= {SSIM_WINDOW}, got {}x{}",
            a.width(),
            a.height()
        )));
    }

    let window = gaussian_window();
    let mu_a = filter_valid(a.data(), a.width(), a.height(), &window);
    let mu_b = filter_valid(b.data(), b.width(), b.height(), &window);
    let aa: Vec<f64> = a.data().iter().map(|v| v * v).collect();
    let bb: Vec<f64> = b.data().iter().map(|v| v * v).collect();
    let ab: Vec<f64> = a.data().iter().zip(b.data()).map(|(x, y)| x * y).collect();
    let e_aa = filter_valid(&aa, a.width(), a.height(), &window);
    let e_bb = filter_valid(&bb, a.width(), a.height(), &window);
    let e_ab = filter_valid(&ab, a.width(), a.height(), &window);

    let c1 = (SSIM_K1 * SSIM_L) * (SSIM_K1 * SSIM_L);
    let c2 = (SSIM_K2 * SSIM_L) * (SSIM_K2 * SSIM_L);
    let mut sum = 0.0;
    for i in 0..mu_a.len() {
        let (ma, mb) = (mu_a[i], mu_b[i]);
        let var_a = e_aa[i] - ma * ma;
        let var_b = e_bb[i] - mb * mb;
        let cov = e_ab[i] - ma * mb;
        let num = (2.0 * ma * mb + c1) * (2.0 * cov + c2);
        let den = (ma * ma + mb * mb + c1) * (var_a + var_b + c2);
        sum += num / den;
    }
    Ok(sum / mu_a.len() as f64)
}

fn gaussian_window() -> Vec<f64> {
    let r = (SSIM_WINDOW / 2) as isize;
    let mut w = Vec::with_capacity(SSIM_WINDOW * SSIM_WINDOW);
    for dy in -r..=r {
        for dx in -r..=r {
            w.push((-((dx * dx + dy * dy) as f64) / (2.0 * SSIM_SIGMA * SSIM_SIGMA)).exp());
        }
    }
    let total: f64 = w.iter().sum();
    for v in &mut w {
        *v /= total;
    }
    w
}

/// Valid-mode correlation with an 11x11 window; output is
/// `(width-10) x (height-10)`.
fn filter_valid(data: &[f64], width: usize, height: usize, window: &[f64]) -> Vec<f64> {
    let ow = width - SSIM_WINDOW + 1;
    let oh = height - SSIM_WINDOW + 1;
    let mut out = Vec::with_capacity(ow * oh);
    for oy in 0..oh {
        for ox in 0..ow {
            let mut acc = 0.0;
            for wy in 0..SSIM_WINDOW {
                let row = (oy + wy) * width + ox;
                let wrow = wy * SSIM_WINDOW;
                for wx in 0..SSIM_WINDOW {
                    acc += data[row + wx] * window[wrow + wx];
                }
            }
            out.push(acc);
        }
    }
    out
}
