//! Synthetic blur generation: motion/Gaussian kernels, a spatially varying
//! zoom operator, region-composited blur scenes and seeded Gaussian noise.

use rand::rngs::StdRng;
use rand::SeedableRng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::image::Image;

/// Normalized non-negative convolution kernel with a center anchor.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurKernel {
    width: usize,
    height: usize,
    taps: Vec<f64>,
}

impl BlurKernel {
    pub fn identity() -> Self {
        Self {
            width: 1,
            height: 1,
            taps: vec![1.0],
        }
    }

    pub fn taps(&self) -> &[f64] {
        &self.taps
    }

    pub fn dims(&self) -> (usize, usize) {
        (self.width, self.height)
    }

    fn from_splats(half: i64, splats: &[(f64, f64, f64)]) -> Self {
        let side = (2 * half + 1) as usize;
        let mut taps = vec![0.0; side * side];
        for &(x, y, w) in splats {
            // Bilinear splat onto the four surrounding taps.
            let x0 = x.floor();
            let y0 = y.floor();
            let fx = x - x0;
            let fy = y - y0;
            for (dx, dy, frac) in [
                (0.0, 0.0, (1.0 - fx) * (1.0 - fy)),
                (1.0, 0.0, fx * (1.0 - fy)),
                (0.0, 1.0, (1.0 - fx) * fy),
                (1.0, 1.0, fx * fy),
            ] {
                let tx = (x0 + dx) as i64 + half;
                let ty = (y0 + dy) as i64 + half;
                if frac > 0.0 && tx >= 0 && tx < side as i64 && ty >= 0 && ty < side as i64 {
                    taps[(ty as usize) * side + tx as usize] += w * frac;
                }
            }
        }
        let total: f64 = taps.iter().sum();
        for t in &mut taps {
            *t /= total;
        }
        Self {
            width: side,
            height: side,
            taps,
        }
    }

    /// Convolve with replicate borders.
    pub fn apply(&self, img: &Image) -> Image {
        let half_x = (self.width / 2) as i64;
        let half_y = (self.height / 2) as i64;
        Image::from_fn(img.width(), img.height(), |x, y| {
            let mut acc = 0.0;
            for ty in 0..self.height as i64 {
                for tx in 0..self.width as i64 {
                    let w = self.taps[(ty as usize) * self.width + tx as usize];
                    if w == 0.0 {
                        continue;
                    }
                    acc += w * img.at_clamped(x as i64 + tx - half_x, y as i64 + ty - half_y);
                }
            }
            acc
        })
    }
}

/// Unit-mass straight motion streak: sample points at unit spacing along
/// the segment, bilinear-splatted and normalized.
pub fn linear_motion_kernel(length: f64, angle: f64) -> Result<BlurKernel> {
    if length.is_nan() || length < 1.0 {
        return Err(Error::InvalidParam(format!(
            "kernel length must be >= 1, got {length}"
        )));
    }
    let n = length.round().max(1.0) as usize;
    if n == 1 {
        return Ok(BlurKernel::identity());
    }
    let span = length - 1.0;
    let step = span / (n - 1) as f64;
    let (dir_x, dir_y) = (angle.cos(), angle.sin());
    let splats: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let t = i as f64 * step - span / 2.0;
            (t * dir_x, t * dir_y, 1.0)
        })
        .collect();
    let half = (span / 2.0).ceil() as i64 + 1;
    Ok(BlurKernel::from_splats(half, &splats))
}

/// Unit-mass motion streak along a circular arc of the given radius;
/// `arc = 2 pi` closes the circle.
pub fn circular_motion_kernel(radius: f64, arc: f64) -> Result<BlurKernel> {
    if radius.is_nan() || radius < 0.0 {
        return Err(Error::InvalidParam(format!(
            "radius must be >= 0, got {radius}"
        )));
    }
    if radius == 0.0 {
        return Ok(BlurKernel::identity());
    }
    let arc = arc.clamp(0.0, 2.0 * std::f64::consts::PI);
    let full_circle = (arc - 2.0 * std::f64::consts::PI).abs() < 1e-12;
    // Even sample count on a full circle keeps the taps point-symmetric.
    let n = ((radius * arc).ceil() as usize * 2).max(8);
    let splats: Vec<(f64, f64, f64)> = (0..n)
        .map(|i| {
            let phi = if full_circle {
                i as f64 * arc / n as f64
            } else {
                i as f64 * arc / (n - 1).max(1) as f64
            };
            (radius * phi.cos(), radius * phi.sin(), 1.0)
        })
        .collect();
    let half = radius.ceil() as i64 + 1;
    Ok(BlurKernel::from_splats(half, &splats))
}

/// Isotropic Gaussian kernel truncated at three sigma.
pub fn gaussian_kernel(sigma: f64) -> Result<BlurKernel> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidParam(format!(
            "sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(BlurKernel::identity());
    }
    let half = (3.0 * sigma).ceil() as i64;
    let side = (2 * half + 1) as usize;
    let mut taps = Vec::with_capacity(side * side);
    for y in -half..=half {
        for x in -half..=half {
            taps.push((-((x * x + y * y) as f64) / (2.0 * sigma * sigma)).exp());
        }
    }
    let total: f64 = taps.iter().sum();
    for t in &mut taps {
        *t /= total;
    }
    Ok(BlurKernel {
        width: side,
        height: side,
        taps,
    })
}

/// Radial zoom blur about `center`: the average of 16 resamplings scaled
/// uniformly between `1 - strength` and 1. Spatially varying, so it is an
/// image operator rather than a kernel.
pub fn zoom_blur(img: &Image, strength: f64, center: (f64, f64)) -> Result<Image> {
    if !(0.0..=0.5).contains(&strength) {
        return Err(Error::InvalidParam(format!(
            "zoom strength must be in [0,0.5], got {strength}"
        )));
    }
    if strength == 0.0 {
        return Ok(img.clone());
    }
    const STEPS: usize = 16;
    let scales: Vec<f64> = (0..STEPS)
        .map(|i| 1.0 - strength + strength * i as f64 / (STEPS - 1) as f64)
        .collect();
    Ok(Image::from_fn(img.width(), img.height(), |x, y| {
        let (cx, cy) = center;
        let mut acc = 0.0;
        for &s in &scales {
            let sx = cx + (x as f64 - cx) * s;
            let sy = cy + (y as f64 - cy) * s;
            acc += img.sample_bilinear(sx, sy);
        }
        acc / STEPS as f64
    }))
}

/// One blur model usable in a scene.
#[derive(Debug, Clone, PartialEq)]
pub enum KernelSpec {
    Linear { length: f64, angle: f64 },
    Circular { radius: f64, arc: f64 },
    Gaussian { sigma: f64 },
    Zoom { strength: f64, center: (f64, f64) },
    Identity,
}

/// Axis-aligned pixel region `[x, x+w) x [y, y+h)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Rect {
    pub x: usize,
    pub y: usize,
    pub w: usize,
    pub h: usize,
}

/// Declarative region-composited blur scene: every region pulls its pixels
/// from the image blurred with its kernel; uncovered pixels come from the
/// default kernel. Later regions win where regions overlap.
#[derive(Debug, Clone, PartialEq)]
pub struct BlurSceneSpec {
    pub kernels: Vec<(String, KernelSpec)>,
    pub regions: Vec<(Rect, String)>,
    pub default_kernel: String,
    pub noise_sigma: f64,
}

impl BlurSceneSpec {
    fn kernel(&self, id: &str) -> Result<&KernelSpec> {
        self.kernels
            .iter()
            .find(|(k, _)| k == id)
            .map(|(_, s)| s)
            .ok_or_else(|| Error::InvalidParam(format!("unresolved kernel id '{id}'")))
    }

    pub fn validate(&self, width: usize, height: usize) -> Result<()> {
        self.kernel(&self.default_kernel)?;
        for (rect, id) in &self.regions {
            self.kernel(id)?;
            if rect.x + rect.w > width || rect.y + rect.h > height {
                return Err(Error::InvalidParam(format!(
                    "region {}x{}+{}+{} outside {}x{} image",
                    rect.w, rect.h, rect.x, rect.y, width, height
                )));
            }
        }
        if self.noise_sigma.is_nan() || self.noise_sigma < 0.0 {
            return Err(Error::InvalidParam(format!(
                "noise sigma must be >= 0, got {}",
                self.noise_sigma
            )));
        }
        Ok(())
    }
}

fn render_kernel(spec: &KernelSpec, img: &Image) -> Result<Image> {
    match spec {
        KernelSpec::Linear { length, angle } => {
            Ok(linear_motion_kernel(*length, *angle)?.apply(img))
        }
        KernelSpec::Circular { radius, arc } => {
            Ok(circular_motion_kernel(*radius, *arc)?.apply(img))
        }
        KernelSpec::Gaussian { sigma } => Ok(gaussian_kernel(*sigma)?.apply(img)),
        KernelSpec::Zoom { strength, center } => zoom_blur(img, *strength, *center),
        KernelSpec::Identity => Ok(img.clone()),
    }
}

/// Composite the scene: each output pixel is sourced from exactly one
/// kernel's whole-image result.
pub fn apply_scene(sharp: &Image, spec: &BlurSceneSpec) -> Result<Image> {
    spec.validate(sharp.width(), sharp.height())?;
    let mut out = render_kernel(spec.kernel(&spec.default_kernel)?, sharp)?;
    for (rect, id) in &spec.regions {
        let rendered = render_kernel(spec.kernel(id)?, sharp)?;
        for y in rect.y..rect.y + rect.h {
            for x in rect.x..rect.x + rect.w {
                out.set(x, y, rendered.at(x, y));
            }
        }
    }
    Ok(out)
}

/// Deterministic procedural test texture: low-frequency waves plus random
/// Gaussian blobs, with structure at every scale the flow estimator needs.
pub fn textured_image(width: usize, height: usize, seed: u64) -> Image {
    let mut state = seed.wrapping_mul(0x9E3779B97F4A7C15) | 1;
    let mut rnd = move || {
        state ^= state << 13;
        state ^= state >> 7;
        state ^= state << 17;
        (state >> 11) as f64 / (1u64 << 53) as f64
    };
    let blobs: Vec<(f64, f64, f64, f64)> = (0..40)
        .map(|_| {
            (
                rnd() * width as f64,
                rnd() * height as f64,
                2.0 + rnd() * 6.0,
                rnd() * 150.0,
            )
        })
        .collect();
    Image::from_fn(width, height, |x, y| {
        let (xf, yf) = (x as f64, y as f64);
        let mut v = 60.0
            + 50.0 * (xf * 0.37).sin() * (yf * 0.23).cos()
            + 40.0 * (xf * 0.11 + yf * 0.19).sin();
        for &(bx, by, s, amp) in &blobs {
            let d2 = (xf - bx).powi(2) + (yf - by).powi(2);
            v += amp * (-d2 / (2.0 * s * s)).exp();
        }
        v.clamp(0.0, 255.0)
    })
}

/// Seeded i.i.d. zero-mean Gaussian noise per pixel, clamped to `[0, 255]`.
pub fn add_gaussian_noise(img: &Image, sigma: f64, seed: u64) -> Result<Image> {
    if sigma.is_nan() || sigma < 0.0 {
        return Err(Error::InvalidParam(format!(
            "noise sigma must be >= 0, got {sigma}"
        )));
    }
    if sigma == 0.0 {
        return Ok(img.clone());
    }
    let mut rng = StdRng::seed_from_u64(seed);
    let normal = Normal::new(0.0, sigma).expect("sigma validated");
    let data = img
        .data()
        .iter()
        .map(|&v| (v + normal.sample(&mut rng)).clamp(0.0, 255.0))
        .collect();
    Image::new(img.width(), img.height(), data)
}

/// The six built-in blur scenes used throughout the experiments, laid out
/// relative to the image size. Types 1 and 2 are single whole-image blurs;
/// types 3-6 mix several models over rectangular regions.
pub fn preset_scene(
    blur_type: u8,
    width: usize,
    height: usize,
    noise_sigma: f64,
) -> Result<BlurSceneSpec> {
    let rect = |fx: f64, fy: f64, fw: f64, fh: f64| Rect {
        x: (width as f64 * fx) as usize,
        y: (height as f64 * fy) as usize,
        w: (width as f64 * fw) as usize,
        h: (height as f64 * fh) as usize,
    };
    let center = (width as f64 / 2.0, height as f64 / 2.0);
    let lin = |length: f64, angle: f64| KernelSpec::Linear { length, angle };
    let circ = KernelSpec::Circular {
        radius: 4.0,
        arc: 2.0 * std::f64::consts::PI,
    };
    let spec = match blur_type {
        1 => BlurSceneSpec {
            kernels: vec![("k0".into(), lin(15.0, 0.0))],
            regions: vec![],
            default_kernel: "k0".into(),
            noise_sigma,
        },
        2 => BlurSceneSpec {
            kernels: vec![("k0".into(), circ)],
            regions: vec![],
            default_kernel: "k0".into(),
            noise_sigma,
        },
        3 => BlurSceneSpec {
            kernels: vec![
                ("gauss".into(), KernelSpec::Gaussian { sigma: 2.0 }),
                ("circ".into(), circ),
                ("lin".into(), lin(11.0, 0.0)),
            ],
            regions: vec![
                (rect(0.05, 0.05, 0.45, 0.45), "circ".into()),
                (rect(0.5, 0.5, 0.45, 0.45), "lin".into()),
            ],
            default_kernel: "gauss".into(),
            noise_sigma,
        },
        4 => BlurSceneSpec {
            kernels: vec![
                ("lin0".into(), lin(11.0, 0.0)),
                ("lin90".into(), lin(11.0, std::f64::consts::FRAC_PI_2)),
                ("circ".into(), circ),
            ],
            regions: vec![
                (rect(0.0, 0.0, 0.5, 1.0), "lin90".into()),
                (rect(0.55, 0.1, 0.35, 0.4), "circ".into()),
            ],
            default_kernel: "lin0".into(),
            noise_sigma,
        },
        5 => BlurSceneSpec {
            kernels: vec![
                ("circ".into(), circ),
                (
                    "zoom".into(),
                    KernelSpec::Zoom {
                        strength: 0.08,
                        center,
                    },
                ),
                ("lin45".into(), lin(9.0, std::f64::consts::FRAC_PI_4)),
                ("lin0".into(), lin(9.0, 0.0)),
            ],
            regions: vec![
                (rect(0.0, 0.0, 1.0, 0.3), "circ".into()),
                (rect(0.1, 0.35, 0.4, 0.3), "zoom".into()),
                (rect(0.55, 0.35, 0.4, 0.3), "lin45".into()),
            ],
            default_kernel: "lin0".into(),
            noise_sigma,
        },
        6 => BlurSceneSpec {
            kernels: vec![
                ("lin30".into(), lin(13.0, std::f64::consts::FRAC_PI_6)),
                (
                    "lin120".into(),
                    lin(13.0, 2.0 * std::f64::consts::FRAC_PI_3),
                ),
                ("circ".into(), circ),
            ],
            regions: vec![
                (rect(0.05, 0.05, 0.6, 0.45), "lin120".into()),
                (rect(0.3, 0.55, 0.6, 0.4), "circ".into()),
            ],
            default_kernel: "lin30".into(),
            noise_sigma,
        },
        other => {
            return Err(Error::InvalidParam(format!(
                "blur type must be 1..=6, got {other}"
            )))
        }
    };
    Ok(spec)
}
