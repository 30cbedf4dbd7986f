//! Overlapping-patch slicing, flow-guided patch correspondence and
//! overlap-averaged reassembly.

use crate::error::{Error, Result};
use crate::flow::FlowField;
use crate::image::Image;

/// Patch geometry: blurred-side patch of side `s1`, noisy-side patch of
/// side `s2 > s1`, centers laid out every `stride` pixels.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PatchSpec {
    pub s1: usize,
    pub s2: usize,
    pub stride: usize,
}

impl Default for PatchSpec {
    fn default() -> Self {
        Self {
            s1: 3,
            s2: 5,
            stride: 1,
        }
    }
}

impl PatchSpec {
    pub fn validate(&self) -> Result<()> {
        if self.stride == 0 {
            return Err(Error::InvalidParam("stride must be >= 1".into()));
        }
        if self.s1.is_multiple_of(2) || self.s2.is_multiple_of(2) {
            return Err(Error::InvalidParam(format!(
                "patch sides must be odd, got s1={} s2={}",
                self.s1, self.s2
            )));
        }
        if self.s2 <= self.s1 {
            return Err(Error::InvalidParam(format!(
                "s2 must exceed s1, got s1={} s2={}",
                self.s1, self.s2
            )));
        }
        Ok(())
    }

    /// Latent intensities per patch (s1 squared).
    pub fn m(&self) -> usize {
        self.s1 * self.s1
    }

    /// Observations per patch (s2 squared).
    pub fn k(&self) -> usize {
        self.s2 * self.s2
    }
}

/// One blurred patch with its flow-corresponded noisy observations.
#[derive(Debug, Clone)]
pub struct PatchPair {
    /// Patch center in the blurred image.
    pub center: (usize, usize),
    /// Latent intensities, initialized from the blurred patch (length M).
    pub x: Vec<f64>,
    /// Noisy observations (length K).
    pub y: Vec<f64>,
    /// Pixel coordinates of each latent intensity in the blurred image.
    pub positions: Vec<(usize, usize)>,
}

/// Per-pixel running sums for overlapped-patch averaging.
#[derive(Debug, Clone)]
pub struct Accumulator {
    width: usize,
    height: usize,
    sum: Vec<f64>,
    count: Vec<u32>,
}

impl Accumulator {
    pub fn new(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            sum: vec![0.0; width * height],
            count: vec![0; width * height],
        }
    }

    pub fn accumulate(&mut self, positions: &[(usize, usize)], values: &[f64]) {
        debug_assert_eq!(positions.len(), values.len());
        for (&(u, v), &x) in positions.iter().zip(values) {
            let idx = v * self.width + u;
            self.sum[idx] += x;
            self.count[idx] += 1;
        }
    }

    /// Average the accumulated contributions into an image. Errors if any
    /// pixel received no contribution (stride too large for the patch size).
    pub fn reassemble(&self, spec: &PatchSpec) -> Result<Image> {
        if self.count.contains(&0) {
            return Err(Error::UncoveredPixels {
                stride: spec.stride,
                s1: spec.s1,
            });
        }
        let data = self
            .sum
            .iter()
            .zip(&self.count)
            .map(|(&s, &c)| s / c as f64)
            .collect();
        Image::new(self.width, self.height, data)
    }
}

/// Center positions along one axis: a stride-spaced grid over the valid
/// range, always including the last valid center so border pixels stay
/// covered.
fn axis_centers(dim: usize, r: usize, stride: usize) -> Vec<usize> {
    let last = dim - 1 - r;
    let mut out = Vec::new();
    let mut c = r;
    while c < last {
        out.push(c);
        c += stride;
    }
    out.push(last);
    out
}

/// Lay out the overlapping patch grid; every returned center keeps its
/// s1-patch fully inside the image.
pub fn slice_patches(img: &Image, spec: &PatchSpec) -> Result<Vec<(usize, usize)>> {
    spec.validate()?;
    if img.width() < spec.s1 || img.height() < spec.s1 {
        return Err(Error::InvalidParam(format!(
            "image {}x{} smaller than patch side {}",
            img.width(),
            img.height(),
            spec.s1
        )));
    }
    let r = spec.s1 / 2;
    let xs = axis_centers(img.width(), r, spec.stride);
    let ys = axis_centers(img.height(), r, spec.stride);
    let mut centers = Vec::with_capacity(xs.len() * ys.len());
    for &v in &ys {
        for &u in &xs {
            centers.push((u, v));
        }
    }
    Ok(centers)
}

/// Build the patch pair for one center: the s1-patch around `center` in the
/// blurred image and the s2-patch around the flow-displaced center in the
/// noisy image (rounded to the nearest pixel, clamped inside).
pub fn correspond(
    center: (usize, usize),
    blurred: &Image,
    flow: &FlowField,
    noisy: &Image,
    spec: &PatchSpec,
) -> PatchPair {
    let (cu, cv) = center;
    let r1 = spec.s1 / 2;
    let mut x = Vec::with_capacity(spec.m());
    let mut positions = Vec::with_capacity(spec.m());
    for v in (cv - r1)..=(cv + r1) {
        for u in (cu - r1)..=(cu + r1) {
            x.push(blurred.at(u, v));
            positions.push((u, v));
        }
    }

    let (dx, dy) = flow.at(cu, cv);
    let r2 = spec.s2 as i64 / 2;
    let tu = (cu as f64 + dx as f64).round() as i64;
    let tv = (cv as f64 + dy as f64).round() as i64;
    // Clamp so the s2-patch lies fully inside the noisy image.
    let tu = tu.clamp(r2, noisy.width() as i64 - 1 - r2);
    let tv = tv.clamp(r2, noisy.height() as i64 - 1 - r2);

    let mut y = Vec::with_capacity(spec.k());
    for v in (tv - r2)..=(tv + r2) {
        for u in (tu - r2)..=(tu + r2) {
            y.push(noisy.at(u as usize, v as usize));
        }
    }
    PatchPair {
        center,
        x,
        y,
        positions,
    }
}
