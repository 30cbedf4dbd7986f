//! Dense displacement estimation from quadratic polynomial expansion.
//!
//! Each pixel neighborhood of both images is approximated by
//! `f(p + u) ~ c + b.u + u'Au` under a Gaussian applicability weight. For a
//! displacement d the expansions satisfy `A d = (b1 - b2)/2`, so d is solved
//! per pixel from expansion-coefficient differences aggregated over an
//! averaging window, refined coarse-to-fine over an image pyramid.

use super::FlowField;
use crate::error::{Error, Result};
use crate::image::Image;

/// Dense-flow parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowParams {
    pub pyramid_levels: usize,
    pub pyramid_scale: f64,
    pub window_size: usize,
    pub iterations_per_level: usize,
    pub poly_neighborhood: usize,
    pub poly_sigma: f64,
}

impl Default for FlowParams {
    fn default() -> Self {
        Self {
            pyramid_levels: 3,
            pyramid_scale: 0.5,
            window_size: 15,
            iterations_per_level: 3,
            poly_neighborhood: 5,
            poly_sigma: 1.1,
        }
    }
}

impl FlowParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: String| Err(Error::InvalidParam(msg));
        if self.pyramid_levels == 0 {
            return bad("pyramid_levels must be >= 1".into());
        }
        if !(self.pyramid_scale > 0.0 && self.pyramid_scale < 1.0) {
            return bad(format!(
                "pyramid_scale must be in (0,1), got {}",
                self.pyramid_scale
            ));
        }
        if self.window_size.is_multiple_of(2) {
            return bad(format!("window_size must be odd, got {}", self.window_size));
        }
        if self.iterations_per_level == 0 {
            return bad("iterations_per_level must be >= 1".into());
        }
        if self.poly_neighborhood.is_multiple_of(2) || self.poly_neighborhood < 3 {
            return bad(format!(
                "poly_neighborhood must be odd and >= 3, got {}",
                self.poly_neighborhood
            ));
        }
        if self.poly_sigma.is_nan() || self.poly_sigma <= 0.0 {
            return bad(format!("poly_sigma must be > 0, got {}", self.poly_sigma));
        }
        Ok(())
    }
}

/// Per-pixel quadratic expansion coefficients (bx, by, axx, axy, ayy).
struct PolyExpansion {
    width: usize,
    height: usize,
    coeffs: Vec<[f64; 5]>,
}

/// Estimate the dense flow mapping pixels of `a` toward `b`.
pub fn compute_dense_flow(a: &Image, b: &Image, p: &FlowParams) -> Result<FlowField> {
    p.validate()?;
    if !a.same_dims(b) {
        return Err(Error::DimensionMismatch(format!(
            "{}x{} vs {}x{}",
            a.width(),
            a.height(),
            b.width(),
            b.height()
        )));
    }
    if a.width() < p.poly_neighborhood || a.height() < p.poly_neighborhood {
        return Err(Error::InvalidParam(format!(
            "image {}x{} smaller than poly neighborhood {}",
            a.width(),
            a.height(),
            p.poly_neighborhood
        )));
    }

    // Coarse-to-fine: keep only levels large enough to expand.
    let mut level_scales = Vec::new();
    for k in 0..p.pyramid_levels {
        let s = p.pyramid_scale.powi(k as i32);
        let w = (a.width() as f64 * s).round() as usize;
        let h = (a.height() as f64 * s).round() as usize;
        if w < p.poly_neighborhood || h < p.poly_neighborhood {
            break;
        }
        level_scales.push((s, w, h));
    }

    let mut flow: Option<FlowField> = None;
    for &(scale, w, h) in level_scales.iter().rev() {
        let (la, lb) = if scale == 1.0 {
            (a.clone(), b.clone())
        } else {
            let sigma = (1.0 / scale - 1.0) * 0.5;
            (
                resize_bilinear(&gaussian_blur(a, sigma), w, h),
                resize_bilinear(&gaussian_blur(b, sigma), w, h),
            )
        };

        let mut level_flow = match flow.take() {
            Some(prev) => upscale_flow(&prev, w, h, 1.0 / p.pyramid_scale),
            None => FlowField::zeros(w, h),
        };

        let r1 = poly_expansion(&la, p.poly_neighborhood, p.poly_sigma);
        let r2 = poly_expansion(&lb, p.poly_neighborhood, p.poly_sigma);
        for _ in 0..p.iterations_per_level {
            level_flow = refine_flow(&r1, &r2, &level_flow, p.window_size);
        }
        flow = Some(level_flow);
    }
    Ok(flow.expect("at least the finest level is valid"))
}

/// Weighted least-squares quadratic fit around every pixel, computed with
/// separable correlations under a Gaussian applicability (replicate border).
fn poly_expansion(img: &Image, n: usize, sigma: f64) -> PolyExpansion {
    let r = (n / 2) as i64;
    let mut g = Vec::with_capacity(n);
    for i in -r..=r {
        g.push((-(i * i) as f64 / (2.0 * sigma * sigma)).exp());
    }
    let gsum: f64 = g.iter().sum();
    for v in &mut g {
        *v /= gsum;
    }
    // Axis moments of the normalized applicability.
    let s2: f64 = (-r..=r).map(|i| g[(i + r) as usize] * (i * i) as f64).sum();
    let s4: f64 = (-r..=r)
        .map(|i| g[(i + r) as usize] * (i * i * i * i) as f64)
        .sum();

    // Inverse of the symmetric (1, x^2, y^2) Gram block
    // [[1, s2, s2], [s2, s4, s2^2], [s2, s2^2, s4]]; only the x^2 row is
    // needed (the y^2 row follows by symmetry).
    let inv = invert3([[1.0, s2, s2], [s2, s4, s2 * s2], [s2, s2 * s2, s4]]);
    let inv_lin = 1.0 / s2;
    let inv_xy = 1.0 / (s2 * s2);

    let (w, h) = (img.width(), img.height());
    // Vertical pass: for each pixel, correlate the column with g, j*g, j^2*g.
    let mut v0 = vec![0.0f64; w * h];
    let mut v1 = vec![0.0f64; w * h];
    let mut v2 = vec![0.0f64; w * h];
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let mut a0 = 0.0;
            let mut a1 = 0.0;
            let mut a2 = 0.0;
            for j in -r..=r {
                let f = img.at_clamped(x, y + j);
                let gj = g[(j + r) as usize];
                a0 += gj * f;
                a1 += gj * j as f64 * f;
                a2 += gj * (j * j) as f64 * f;
            }
            let idx = (y as usize) * w + x as usize;
            v0[idx] = a0;
            v1[idx] = a1;
            v2[idx] = a2;
        }
    }

    // Horizontal pass combines into the six basis projections.
    let mut coeffs = vec![[0.0f64; 5]; w * h];
    for y in 0..h {
        for x in 0..w as i64 {
            let (mut t0, mut tx, mut txx, mut ty, mut txy, mut tyy) =
                (0.0, 0.0, 0.0, 0.0, 0.0, 0.0);
            for i in -r..=r {
                let xc = (x + i).clamp(0, w as i64 - 1) as usize;
                let gi = g[(i + r) as usize];
                let idx = y * w + xc;
                t0 += gi * v0[idx];
                tx += gi * i as f64 * v0[idx];
                txx += gi * (i * i) as f64 * v0[idx];
                ty += gi * v1[idx];
                txy += gi * i as f64 * v1[idx];
                tyy += gi * v2[idx];
            }
            let bx = tx * inv_lin;
            let by = ty * inv_lin;
            let rxy = txy * inv_xy;
            let rxx = inv[1][0] * t0 + inv[1][1] * txx + inv[1][2] * tyy;
            let ryy = inv[1][0] * t0 + inv[1][2] * txx + inv[1][1] * tyy;
            coeffs[y * w + x as usize] = [bx, by, rxx, rxy / 2.0, ryy];
        }
    }
    PolyExpansion {
        width: w,
        height: h,
        coeffs,
    }
}

fn invert3(m: [[f64; 3]; 3]) -> [[f64; 3]; 3] {
    let det = m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1])
        - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0]);
    let mut inv = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            let a = m[(i + 1) % 3][(j + 1) % 3] * m[(i + 2) % 3][(j + 2) % 3]
                - m[(i + 1) % 3][(j + 2) % 3] * m[(i + 2) % 3][(j + 1) % 3];
            // Transposed cofactor.
            inv[j][i] = a / det;
        }
    }
    inv
}

/// Bilinear sample of the 5 expansion channels, coordinates clamped.
fn sample_expansion(e: &PolyExpansion, x: f64, y: f64) -> [f64; 5] {
    let x = x.clamp(0.0, (e.width - 1) as f64);
    let y = y.clamp(0.0, (e.height - 1) as f64);
    let x0 = x.floor() as usize;
    let y0 = y.floor() as usize;
    let x1 = (x0 + 1).min(e.width - 1);
    let y1 = (y0 + 1).min(e.height - 1);
    let fx = x - x0 as f64;
    let fy = y - y0 as f64;
    let mut out = [0.0; 5];
    for (c, v) in out.iter_mut().enumerate() {
        let top = e.coeffs[y0 * e.width + x0][c] * (1.0 - fx) + e.coeffs[y0 * e.width + x1][c] * fx;
        let bot = e.coeffs[y1 * e.width + x0][c] * (1.0 - fx) + e.coeffs[y1 * e.width + x1][c] * fx;
        *v = top * (1.0 - fy) + bot * fy;
    }
    out
}

/// One displacement refinement: build the per-pixel normal equations from
/// the two expansions under the current flow, average them over the window,
/// and solve a 2x2 system per pixel. Degenerate pixels keep their prior.
fn refine_flow(
    r1: &PolyExpansion,
    r2: &PolyExpansion,
    prior: &FlowField,
    window: usize,
) -> FlowField {
    let (w, h) = (r1.width, r1.height);
    let mut m11 = vec![0.0f64; w * h];
    let mut m12 = vec![0.0f64; w * h];
    let mut m22 = vec![0.0f64; w * h];
    let mut h1 = vec![0.0f64; w * h];
    let mut h2 = vec![0.0f64; w * h];

    for y in 0..h {
        for x in 0..w {
            let (dx, dy) = prior.at(x, y);
            let (dx, dy) = (dx as f64, dy as f64);
            let c1 = r1.coeffs[y * w + x];
            let c2 = sample_expansion(r2, x as f64 + dx, y as f64 + dy);
            let axx = 0.5 * (c1[2] + c2[2]);
            let axy = 0.5 * (c1[3] + c2[3]);
            let ayy = 0.5 * (c1[4] + c2[4]);
            let dbx = -0.5 * (c2[0] - c1[0]) + axx * dx + axy * dy;
            let dby = -0.5 * (c2[1] - c1[1]) + axy * dx + ayy * dy;
            let idx = y * w + x;
            m11[idx] = axx * axx + axy * axy;
            m12[idx] = axy * (axx + ayy);
            m22[idx] = axy * axy + ayy * ayy;
            h1[idx] = axx * dbx + axy * dby;
            h2[idx] = axy * dbx + ayy * dby;
        }
    }

    let radius = window / 2;
    for field in [&mut m11, &mut m12, &mut m22, &mut h1, &mut h2] {
        box_blur(field, w, h, radius);
    }

    let mut out = FlowField::zeros(w, h);
    for y in 0..h {
        for x in 0..w {
            let idx = y * w + x;
            let det = m11[idx] * m22[idx] - m12[idx] * m12[idx];
            if det.abs() > 1e-9 {
                let dx = (m22[idx] * h1[idx] - m12[idx] * h2[idx]) / det;
                let dy = (m11[idx] * h2[idx] - m12[idx] * h1[idx]) / det;
                if dx.is_finite() && dy.is_finite() {
                    out.set(x, y, (dx as f32, dy as f32));
                    continue;
                }
            }
            out.set(x, y, prior.at(x, y));
        }
    }
    out
}

/// Separable box mean with replicate borders.
fn box_blur(data: &mut [f64], w: usize, h: usize, radius: usize) {
    if radius == 0 {
        return;
    }
    let r = radius as i64;
    let norm = 1.0 / (2.0 * r as f64 + 1.0);
    let mut tmp = vec![0.0f64; w * h];
    for y in 0..h {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for i in -r..=r {
                acc += data[y * w + (x + i).clamp(0, w as i64 - 1) as usize];
            }
            tmp[y * w + x as usize] = acc * norm;
        }
    }
    for y in 0..h as i64 {
        for x in 0..w {
            let mut acc = 0.0;
            for j in -r..=r {
                acc += tmp[((y + j).clamp(0, h as i64 - 1) as usize) * w + x];
            }
            data[(y as usize) * w + x] = acc * norm;
        }
    }
}

fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let r = ((2.5 * sigma).round() as i64).max(1);
    let mut g = Vec::with_capacity((2 * r + 1) as usize);
    for i in -r..=r {
        g.push((-(i * i) as f64 / (2.0 * sigma * sigma)).exp());
    }
    let sum: f64 = g.iter().sum();
    for v in &mut g {
        *v /= sum;
    }
    let (w, h) = (img.width(), img.height());
    let mut tmp = Image::zeros(w, h);
    for y in 0..h {
        for x in 0..w as i64 {
            let mut acc = 0.0;
            for i in -r..=r {
                acc += g[(i + r) as usize] * img.at_clamped(x + i, y as i64);
            }
            tmp.set(x as usize, y, acc);
        }
    }
    let mut out = Image::zeros(w, h);
    for y in 0..h as i64 {
        for x in 0..w {
            let mut acc = 0.0;
            for j in -r..=r {
                acc += g[(j + r) as usize] * tmp.at_clamped(x as i64, y + j);
            }
            out.set(x, y as usize, acc);
        }
    }
    out
}

fn resize_bilinear(img: &Image, new_w: usize, new_h: usize) -> Image {
    let sx = img.width() as f64 / new_w as f64;
    let sy = img.height() as f64 / new_h as f64;
    Image::from_fn(new_w, new_h, |x, y| {
        img.sample_bilinear((x as f64 + 0.5) * sx - 0.5, (y as f64 + 0.5) * sy - 0.5)
    })
}

/// Resize a flow field to a finer grid and rescale its vectors.
fn upscale_flow(flow: &FlowField, new_w: usize, new_h: usize, vector_scale: f64) -> FlowField {
    let sx = flow.width() as f64 / new_w as f64;
    let sy = flow.height() as f64 / new_h as f64;
    let mut out = FlowField::zeros(new_w, new_h);
    for y in 0..new_h {
        for x in 0..new_w {
            let px = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (flow.width() - 1) as f64);
            let py = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (flow.height() - 1) as f64);
            let x0 = px.floor() as usize;
            let y0 = py.floor() as usize;
            let x1 = (x0 + 1).min(flow.width() - 1);
            let y1 = (y0 + 1).min(flow.height() - 1);
            let fx = px - x0 as f64;
            let fy = py - y0 as f64;
            let lerp = |c: fn((f32, f32)) -> f32| -> f64 {
                let top = c(flow.at(x0, y0)) as f64 * (1.0 - fx) + c(flow.at(x1, y0)) as f64 * fx;
                let bot = c(flow.at(x0, y1)) as f64 * (1.0 - fx) + c(flow.at(x1, y1)) as f64 * fx;
                top * (1.0 - fy) + bot * fy
            };
            let dx = lerp(|v| v.0) * vector_scale;
            let dy = lerp(|v| v.1) * vector_scale;
            out.set(x, y, (dx as f32, dy as f32));
        }
    }
    out
}
