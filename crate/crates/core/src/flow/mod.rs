//! Dense optical flow between an image pair, flow error metrics, and the
//! `.flo` exchange format with its color-wheel visualization.

mod color;
mod flo;
mod polyexp;

pub use color::flow_to_color;
pub use flo::{read_flo, write_flo};
pub use polyexp::{compute_dense_flow, FlowParams};

use crate::error::{Error, Result};

/// Per-pixel displacement field. A pixel `(u, v)` of the source image
/// corresponds to `(u + dx, v + dy)` in the target image.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowField {
    width: usize,
    height: usize,
    vectors: Vec<(f32, f32)>,
}

impl FlowField {
    pub fn new(width: usize, height: usize, vectors: Vec<(f32, f32)>) -> Result<Self> {
        if vectors.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "vector count {} does not match {width}x{height}",
                vectors.len()
            )));
        }
        Ok(Self {
            width,
            height,
            vectors,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            vectors: vec![(0.0, 0.0); width * height],
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn vectors(&self) -> &[(f32, f32)] {
        &self.vectors
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> (f32, f32) {
        self.vectors[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: (f32, f32)) {
        self.vectors[y * self.width + x] = v;
    }

    pub fn max_magnitude(&self) -> f64 {
        self.vectors
            .iter()
            .map(|&(dx, dy)| ((dx as f64).powi(2) + (dy as f64).powi(2)).sqrt())
            .fold(0.0, f64::max)
    }

    pub fn same_dims(&self, other: &FlowField) -> bool {
        self.width == other.width && self.height == other.height
    }
}

/// Endpoint and angular error of an estimated field against ground truth.
///
/// AEE is the mean Euclidean distance between vectors, in pixels. AAE is
/// the mean angle between the space-time vectors `(dx, dy, 1)`, in radians.
pub fn flow_error(est: &FlowField, gt: &FlowField) -> Result<(f64, f64)> {
    if !est.same_dims(gt) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            est.width, est.height, gt.width, gt.height
        )));
    }
    let n = est.vectors.len() as f64;
    let mut aee = 0.0;
    let mut aae = 0.0;
    for (&(ex, ey), &(gx, gy)) in est.vectors.iter().zip(&gt.vectors) {
        let (ex, ey, gx, gy) = (ex as f64, ey as f64, gx as f64, gy as f64);
        aee += ((ex - gx).powi(2) + (ey - gy).powi(2)).sqrt();
        let dot = ex * gx + ey * gy + 1.0;
        let ne = (ex * ex + ey * ey + 1.0).sqrt();
        let ng = (gx * gx + gy * gy + 1.0).sqrt();
        aae += (dot / (ne * ng)).clamp(-1.0, 1.0).acos();
    }
    Ok((aee / n, aae / n))
}
