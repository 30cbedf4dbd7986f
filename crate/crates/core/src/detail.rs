//! Detail layer: bilateral-filtered sharp features from the noisy image,
//! blended into the deblurred result where the Laplacian response is strong.

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::Image;

/// Detail-layer parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct DetailParams {
    /// Laplacian mask threshold, intensity units.
    pub tau: f64,
    /// Blend weight of the detail source.
    pub eta: f64,
    /// Bilateral spatial scale, pixels.
    pub bf_sigma_d: f64,
    /// Bilateral range scale, intensity units.
    pub bf_sigma_l: f64,
    /// Bilateral window radius, pixels.
    pub bf_radius: usize,
    /// Accept tau/eta outside their usual working ranges.
    pub allow_out_of_range: bool,
}

impl Default for DetailParams {
    fn default() -> Self {
        Self {
            tau: 40.0,
            eta: 0.3,
            bf_sigma_d: 2.0,
            bf_sigma_l: 25.0,
            bf_radius: 5,
            allow_out_of_range: false,
        }
    }
}

impl DetailParams {
    pub fn validate(&self) -> Result<()> {
        if self.bf_sigma_d.is_nan()
            || self.bf_sigma_d <= 0.0
            || self.bf_sigma_l.is_nan()
            || self.bf_sigma_l <= 0.0
        {
            return Err(Error::InvalidParam(format!(
                "bilateral scales must be > 0, got sigma_d={} sigma_l={}",
                self.bf_sigma_d, self.bf_sigma_l
            )));
        }
        if !self.allow_out_of_range {
            if !(10.0..=150.0).contains(&self.tau) {
                return Err(Error::InvalidParam(format!(
                    "tau {} outside [10,150]; set allow_out_of_range to override",
                    self.tau
                )));
            }
            if !(0.1..=0.5).contains(&self.eta) {
                return Err(Error::InvalidParam(format!(
                    "eta {} outside [0.1,0.5]; set allow_out_of_range to override",
                    self.eta
                )));
            }
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return Err(Error::InvalidParam(format!(
                "eta must be in [0,1], got {}",
                self.eta
            )));
        }
        Ok(())
    }
}

/// Standard bilateral smoothing: spatial Gaussian times range Gaussian,
/// normalized over the in-image window.
pub fn bilateral_filter(img: &Image, p: &DetailParams) -> Result<Image> {
    p.validate()?;
    let r = p.bf_radius as i64;
    let inv_2sd2 = 1.0 / (2.0 * p.bf_sigma_d * p.bf_sigma_d);
    let inv_2sl2 = 1.0 / (2.0 * p.bf_sigma_l * p.bf_sigma_l);
    // Spatial weights depend only on the offset.
    let mut spatial = Vec::with_capacity(((2 * r + 1) * (2 * r + 1)) as usize);
    for dy in -r..=r {
        for dx in -r..=r {
            spatial.push((-((dx * dx + dy * dy) as f64) * inv_2sd2).exp());
        }
    }
    let (w, h) = (img.width() as i64, img.height() as i64);
    let out = Image::from_fn(img.width(), img.height(), |x, y| {
        let center = img.at(x, y);
        let mut num = 0.0;
        let mut den = 0.0;
        let mut si = 0;
        for dy in -r..=r {
            for dx in -r..=r {
                let ws = spatial[si];
                si += 1;
                let (nx, ny) = (x as i64 + dx, y as i64 + dy);
                if nx < 0 || nx >= w || ny < 0 || ny >= h {
                    continue;
                }
                let v = img.at(nx as usize, ny as usize);
                let diff = v - center;
                let wr = (-diff * diff * inv_2sl2).exp();
                num += v * ws * wr;
                den += ws * wr;
            }
        }
        num / den
    });
    Ok(out)
}

/// Absolute response of the 3x3 Laplacian [[0,1,0],[1,-4,1],[0,1,0]],
/// border replicated.
pub fn laplacian_mask(img: &Image) -> Result<Image> {
    if img.width() < 3 || img.height() < 3 {
        return Err(Error::InvalidParam(format!(
            "laplacian needs at least 3x3, got {}x{}",
            img.width(),
            img.height()
        )));
    }
    Ok(Image::from_fn(img.width(), img.height(), |x, y| {
        let (xi, yi) = (x as i64, y as i64);
        let c = img.at(x, y);
        let resp = img.at_clamped(xi - 1, yi)
            + img.at_clamped(xi + 1, yi)
            + img.at_clamped(xi, yi - 1)
            + img.at_clamped(xi, yi + 1)
            - 4.0 * c;
        resp.abs()
    }))
}

/// Blend denoised sharp features into the deblurred image. For each pixel
/// the flow vector points into the noisy image; where the (filtered) noisy
/// image has Laplacian response above `tau`, the output is
/// `(1 - eta) * deblurred + eta * filtered_noisy`, sampled bilinearly; the
/// mask test itself uses the nearest pixel.
pub fn add_detail_layer(
    deblurred: &Image,
    noisy_enhanced: &Image,
    flow: &FlowField,
    p: &DetailParams,
) -> Result<Image> {
    p.validate()?;
    if flow.width() != deblurred.width() || flow.height() != deblurred.height() {
        return Err(Error::DimensionMismatch(format!(
            "flow {}x{} vs image {}x{}",
            flow.width(),
            flow.height(),
            deblurred.width(),
            deblurred.height()
        )));
    }
    let filtered = bilateral_filter(noisy_enhanced, p)?;
    let mask = laplacian_mask(&filtered)?;
    let mut out = deblurred.clone();
    for y in 0..deblurred.height() {
        for x in 0..deblurred.width() {
            let (dx, dy) = flow.at(x, y);
            let u = x as f64 + dx as f64;
            let v = y as f64 + dy as f64;
            let mu = (u.round() as i64).clamp(0, mask.width() as i64 - 1) as usize;
            let mv = (v.round() as i64).clamp(0, mask.height() as i64 - 1) as usize;
            if mask.at(mu, mv) > p.tau {
                let detail = filtered.sample_bilinear(u, v);
                out.set(x, y, (1.0 - p.eta) * deblurred.at(x, y) + p.eta * detail);
            }
        }
    }
    Ok(out)
}
