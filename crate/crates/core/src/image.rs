//! Grayscale image container, PNG/PGM I/O and intensity enhancement.
//!
//! Intensities are stored as `f64` in `[0, 255]` and only quantized to
//! 8-bit on save (round half-up, clamp).

use std::fs::File;
use std::io::{BufWriter, Read, Write};
use std::path::Path;

use crate::error::{Error, Result};

/// Single-channel image, row-major, intensities in `[0, 255]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    width: usize,
    height: usize,
    data: Vec<f64>,
}

impl Image {
    pub fn new(width: usize, height: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != width * height {
            return Err(Error::DimensionMismatch(format!(
                "data length {} does not match {width}x{height}",
                data.len()
            )));
        }
        Ok(Self {
            width,
            height,
            data,
        })
    }

    pub fn zeros(width: usize, height: usize) -> Self {
        Self {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    pub fn from_fn(width: usize, height: usize, f: impl Fn(usize, usize) -> f64) -> Self {
        let mut data = Vec::with_capacity(width * height);
        for y in 0..height {
            for x in 0..width {
                data.push(f(x, y));
            }
        }
        Self {
            width,
            height,
            data,
        }
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    #[inline]
    pub fn at(&self, x: usize, y: usize) -> f64 {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f64) {
        debug_assert!(x < self.width && y < self.height);
        self.data[y * self.width + x] = v;
    }

    /// Nearest-pixel lookup with coordinates clamped into the image.
    #[inline]
    pub fn at_clamped(&self, x: i64, y: i64) -> f64 {
        let xc = x.clamp(0, self.width as i64 - 1) as usize;
        let yc = y.clamp(0, self.height as i64 - 1) as usize;
        self.at(xc, yc)
    }

    /// Bilinear sample at a real-valued position; coordinates outside the
    /// image clamp to the border.
    pub fn sample_bilinear(&self, x: f64, y: f64) -> f64 {
        let x = x.clamp(0.0, (self.width - 1) as f64);
        let y = y.clamp(0.0, (self.height - 1) as f64);
        let x0 = x.floor() as usize;
        let y0 = y.floor() as usize;
        let x1 = (x0 + 1).min(self.width - 1);
        let y1 = (y0 + 1).min(self.height - 1);
        let fx = x - x0 as f64;
        let fy = y - y0 as f64;
        let top = self.at(x0, y0) * (1.0 - fx) + self.at(x1, y0) * fx;
        let bot = self.at(x0, y1) * (1.0 - fx) + self.at(x1, y1) * fx;
        top * (1.0 - fy) + bot * fy
    }

    pub fn same_dims(&self, other: &Image) -> bool {
        self.width == other.width && self.height == other.height
    }

    /// Clamp every intensity into `[0, 255]` in place.
    pub fn clamp_in_place(&mut self) {
        for v in &mut self.data {
            *v = v.clamp(0.0, 255.0);
        }
    }
}

/// Gain/bias/gamma brightness enhancement parameters.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnhanceParams {
    /// Multiplicative gain, must be positive.
    pub gain: f64,
    /// Additive intensity offset.
    pub bias: f64,
    /// Gamma exponent parameter; values above 1 brighten dark inputs.
    pub gamma: f64,
}

impl Default for EnhanceParams {
    fn default() -> Self {
        Self {
            gain: 1.0,
            bias: 0.0,
            gamma: 1.0,
        }
    }
}

impl EnhanceParams {
    pub fn validate(&self) -> Result<()> {
        if self.gain.is_nan() || self.gain <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "gain must be > 0, got {}",
                self.gain
            )));
        }
        if self.gamma.is_nan() || self.gamma <= 0.0 {
            return Err(Error::InvalidParam(format!(
                "gamma must be > 0, got {}",
                self.gamma
            )));
        }
        if !self.bias.is_finite() {
            return Err(Error::InvalidParam("bias must be finite".into()));
        }
        Ok(())
    }

    pub fn is_identity(&self) -> bool {
        self.gain == 1.0 && self.bias == 0.0 && self.gamma == 1.0
    }
}

/// Apply gain, bias and gamma correction:
/// `out = 255 * (clamp(gain*in + bias, 0, 255) / 255)^(1/gamma)`, clamped.
pub fn enhance(img: &Image, p: &EnhanceParams) -> Result<Image> {
    p.validate()?;
    let inv_gamma = 1.0 / p.gamma;
    let data = img
        .data
        .iter()
        .map(|&v| {
            let lin = (p.gain * v + p.bias).clamp(0.0, 255.0);
            (255.0 * (lin / 255.0).powf(inv_gamma)).clamp(0.0, 255.0)
        })
        .collect();
    Image::new(img.width, img.height, data)
}

/// ITU-R BT.601 luminance from an interleaved 8-bit RGB buffer.
pub fn to_grayscale(width: usize, height: usize, rgb: &[u8]) -> Result<Image> {
    if rgb.len() != width * height * 3 {
        return Err(Error::DimensionMismatch(format!(
            "expected {} RGB bytes for {width}x{height}, got {}",
            width * height * 3,
            rgb.len()
        )));
    }
    let data = rgb
        .chunks_exact(3)
        .map(|px| 0.299 * px[0] as f64 + 0.587 * px[1] as f64 + 0.114 * px[2] as f64)
        .collect();
    Image::new(width, height, data)
}

/// Quantize one intensity to a byte: round half-up, clamp to `[0, 255]`.
#[inline]
pub fn quantize(v: f64) -> u8 {
    (v + 0.5).floor().clamp(0.0, 255.0) as u8
}

/// Load a PNG or binary PGM (P5) image as grayscale.
pub fn load_image(path: impl AsRef<Path>) -> Result<Image> {
    let path = path.as_ref();
    let mut file = match File::open(path) {
        Ok(f) => f,
        Err(e) if e.kind() == std::io::ErrorKind::NotFound => {
            return Err(Error::FileNotFound {
                path: path.to_path_buf(),
            })
        }
        Err(e) => {
            return Err(Error::Io {
                path: path.to_path_buf(),
                source: e,
            })
        }
    };
    let mut bytes = Vec::new();
    file.read_to_end(&mut bytes).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;

    if bytes.starts_with(b"P5") {
        decode_pgm(path, &bytes)
    } else if bytes.starts_with(&[0x89, b'P', b'N', b'G']) {
        decode_png(path, &bytes)
    } else {
        Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: "expected PNG or binary PGM (P5)".into(),
        })
    }
}

/// Save as 8-bit grayscale; format chosen by extension (`.png` or `.pgm`).
pub fn save_image(img: &Image, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let ext = path
        .extension()
        .and_then(|e| e.to_str())
        .map(|e| e.to_ascii_lowercase())
        .unwrap_or_default();
    let bytes: Vec<u8> = img.data.iter().map(|&v| quantize(v)).collect();
    match ext.as_str() {
        "pgm" => {
            let mut w = BufWriter::new(File::create(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?);
            write!(w, "P5\n{} {}\n255\n", img.width, img.height)
                .and_then(|_| w.write_all(&bytes))
                .map_err(|e| Error::Io {
                    path: path.to_path_buf(),
                    source: e,
                })
        }
        "png" => {
            let file = File::create(path).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: e,
            })?;
            let mut enc =
                png::Encoder::new(BufWriter::new(file), img.width as u32, img.height as u32);
            enc.set_color(png::ColorType::Grayscale);
            enc.set_depth(png::BitDepth::Eight);
            let mut writer = enc.write_header().map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e),
            })?;
            writer.write_image_data(&bytes).map_err(|e| Error::Io {
                path: path.to_path_buf(),
                source: std::io::Error::other(e),
            })
        }
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("cannot write '.{other}' (use .png or .pgm)"),
        }),
    }
}

/// Save an interleaved RGB buffer as an 8-bit color PNG.
pub fn save_rgb_png(width: usize, height: usize, rgb: &[u8], path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if rgb.len() != width * height * 3 {
        return Err(Error::DimensionMismatch(format!(
            "expected {} RGB bytes, got {}",
            width * height * 3,
            rgb.len()
        )));
    }
    let file = File::create(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })?;
    let mut enc = png::Encoder::new(BufWriter::new(file), width as u32, height as u32);
    enc.set_color(png::ColorType::Rgb);
    enc.set_depth(png::BitDepth::Eight);
    let mut writer = enc.write_header().map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })?;
    writer.write_image_data(rgb).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: std::io::Error::other(e),
    })
}

fn decode_png(path: &Path, bytes: &[u8]) -> Result<Image> {
    let corrupt = |detail: String| Error::CorruptData {
        path: path.to_path_buf(),
        detail,
    };
    let decoder = png::Decoder::new(bytes);
    let mut reader = decoder.read_info().map_err(|e| corrupt(e.to_string()))?;
    let mut buf = vec![0u8; reader.output_buffer_size()];
    let info = reader
        .next_frame(&mut buf)
        .map_err(|e| corrupt(e.to_string()))?;
    if info.bit_depth != png::BitDepth::Eight {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("only 8-bit PNG supported, got {:?}", info.bit_depth),
        });
    }
    let w = info.width as usize;
    let h = info.height as usize;
    let pixels = &buf[..info.buffer_size()];
    match info.color_type {
        png::ColorType::Grayscale => Image::new(w, h, pixels.iter().map(|&b| b as f64).collect()),
        png::ColorType::GrayscaleAlpha => Image::new(
            w,
            h,
            pixels.chunks_exact(2).map(|px| px[0] as f64).collect(),
        ),
        png::ColorType::Rgb => to_grayscale(w, h, pixels),
        png::ColorType::Rgba => {
            let rgb: Vec<u8> = pixels
                .chunks_exact(4)
                .flat_map(|px| [px[0], px[1], px[2]])
                .collect();
            to_grayscale(w, h, &rgb)
        }
        other => Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("unsupported PNG color type {other:?}"),
        }),
    }
}

fn decode_pgm(path: &Path, bytes: &[u8]) -> Result<Image> {
    let corrupt = |detail: &str| Error::CorruptData {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    let mut pos = 2; // past "P5"
    let mut fields = [0usize; 3];
    for field in &mut fields {
        *field = read_pgm_int(bytes, &mut pos).ok_or_else(|| corrupt("bad PGM header"))?;
    }
    let (width, height, maxval) = (fields[0], fields[1], fields[2]);
    if maxval == 0 || maxval > 255 {
        return Err(Error::UnsupportedFormat {
            path: path.to_path_buf(),
            detail: format!("only 8-bit PGM supported (maxval {maxval})"),
        });
    }
    if width == 0 || height == 0 {
        return Err(corrupt("zero image dimension"));
    }
    // Exactly one whitespace byte separates the header from the raster.
    pos += 1;
    let n = width * height;
    if bytes.len() < pos + n {
        return Err(corrupt("truncated pixel data"));
    }
    let data = bytes[pos..pos + n].iter().map(|&b| b as f64).collect();
    Image::new(width, height, data)
}

/// Parse one whitespace/comment-delimited decimal integer from a PGM header.
fn read_pgm_int(bytes: &[u8], pos: &mut usize) -> Option<usize> {
    loop {
        match bytes.get(*pos)? {
            b' ' | b'\t' | b'\r' | b'\n' => *pos += 1,
            b'#' => {
                while *pos < bytes.len() && bytes[*pos] != b'\n' {
                    *pos += 1;
                }
            }
            _ => break,
        }
    }
    let start = *pos;
    while bytes.get(*pos).is_some_and(|b| b.is_ascii_digit()) {
        *pos += 1;
    }
    if *pos == start {
        return None;
    }
    std::str::from_utf8(&bytes[start..*pos]).ok()?.parse().ok()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn pgm_decode_2x2() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(
            &path,
            [b"P5\n2 2\n255\n".as_slice(), &[0, 255, 128, 64]].concat(),
        )
        .unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!((img.width(), img.height()), (2, 2));
        assert_eq!(img.data(), &[0.0, 255.0, 128.0, 64.0]);
    }

    #[test]
    fn missing_file_is_distinct_error() {
        let err = load_image("/nonexistent/nowhere.pgm").unwrap_err();
        assert!(matches!(err, Error::FileNotFound { .. }), "got {err:?}");
    }

    #[test]
    fn garbage_bytes_are_unsupported() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.bin");
        std::fs::write(&path, b"not an image at all").unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(
            matches!(err, Error::UnsupportedFormat { .. }),
            "got {err:?}"
        );
    }

    #[test]
    fn truncated_pgm_is_corrupt() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.pgm");
        std::fs::write(&path, [b"P5\n4 4\n255\n".as_slice(), &[1, 2, 3]].concat()).unwrap();
        let err = load_image(&path).unwrap_err();
        assert!(matches!(err, Error::CorruptData { .. }), "got {err:?}");
    }

    #[test]
    fn rgb_png_white_maps_to_white() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("t.png");
        save_rgb_png(2, 1, &[255, 255, 255, 255, 0, 0], &path).unwrap();
        let img = load_image(&path).unwrap();
        assert_eq!(img.at(0, 0), 255.0);
        assert!(
            (img.at(1, 0) - 76.245).abs() < 1e-9,
            "red luminance {}",
            img.at(1, 0)
        );
    }

    #[test]
    fn grayscale_weights() {
        let img = to_grayscale(3, 1, &[255, 255, 255, 0, 0, 0, 255, 0, 0]).unwrap();
        assert_eq!(img.at(0, 0), 255.0);
        assert_eq!(img.at(1, 0), 0.0);
        assert!((img.at(2, 0) - 76.245).abs() < 1e-9);
    }

    #[test]
    fn grayscale_rejects_bad_length() {
        assert!(to_grayscale(2, 2, &[0u8; 7]).is_err());
    }

    #[test]
    fn save_quantization_rules() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("q.pgm");
        let img = Image::new(3, 1, vec![254.6, -3.0, 127.5]).unwrap();
        save_image(&img, &path).unwrap();
        let back = load_image(&path).unwrap();
        assert_eq!(back.data(), &[255.0, 0.0, 128.0]);
    }

    #[test]
    fn save_load_roundtrip_integer_images() {
        let dir = tempfile::tempdir().unwrap();
        let img = Image::from_fn(17, 9, |x, y| ((x * 31 + y * 7) % 256) as f64);
        for name in ["r.pgm", "r.png"] {
            let path = dir.path().join(name);
            save_image(&img, &path).unwrap();
            let back = load_image(&path).unwrap();
            assert_eq!(back, img, "round trip failed for {name}");
        }
    }

    #[test]
    fn enhance_identity_params() {
        let img = Image::from_fn(8, 8, |x, y| (x * 8 + y) as f64);
        let out = enhance(&img, &EnhanceParams::default()).unwrap();
        assert_eq!(out, img);
    }

    #[test]
    fn enhance_gamma_brightens() {
        let img = Image::new(1, 1, vec![63.75]).unwrap();
        let p = EnhanceParams {
            gain: 1.0,
            bias: 0.0,
            gamma: 2.0,
        };
        let out = enhance(&img, &p).unwrap();
        assert!((out.at(0, 0) - 127.5).abs() < 1e-12, "got {}", out.at(0, 0));
    }

    #[test]
    fn enhance_clamps_gain() {
        let img = Image::new(1, 1, vec![200.0]).unwrap();
        let p = EnhanceParams {
            gain: 2.0,
            bias: 0.0,
            gamma: 1.0,
        };
        let out = enhance(&img, &p).unwrap();
        assert_eq!(out.at(0, 0), 255.0);
    }

    #[test]
    fn enhance_rejects_nonpositive_params() {
        let img = Image::zeros(1, 1);
        assert!(enhance(
            &img,
            &EnhanceParams {
                gain: 0.0,
                bias: 0.0,
                gamma: 1.0
            }
        )
        .is_err());
        assert!(enhance(
            &img,
            &EnhanceParams {
                gain: 1.0,
                bias: 0.0,
                gamma: -2.0
            }
        )
        .is_err());
    }

    #[test]
    fn enhance_monotone_in_intensity() {
        let p = EnhanceParams {
            gain: 1.3,
            bias: -10.0,
            gamma: 1.7,
        };
        let img = Image::from_fn(256, 1, |x, _| x as f64);
        let out = enhance(&img, &p).unwrap();
        for x in 1..256 {
            assert!(out.at(x, 0) >= out.at(x - 1, 0), "not monotone at {x}");
        }
    }

    #[test]
    fn bilinear_sampling_clamps_and_interpolates() {
        let img = Image::new(2, 2, vec![0.0, 10.0, 20.0, 30.0]).unwrap();
        assert_eq!(img.sample_bilinear(0.5, 0.5), 15.0);
        assert_eq!(img.sample_bilinear(-5.0, -5.0), 0.0);
        assert_eq!(img.sample_bilinear(9.0, 9.0), 30.0);
    }
}
