//! Middlebury `.flo` reader/writer.
//!
//! Layout: the float 202021.25 as a 4-byte sanity tag ("PIEH"), then width
//! and height as little-endian i32, then row-major interleaved (dx, dy)
//! little-endian f32 pairs.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use super::FlowField;
use crate::error::{Error, Result};

const FLO_MAGIC: f32 = 202021.25;

pub fn write_flo(field: &FlowField, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let io_err = |e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    };
    let mut w = BufWriter::new(File::create(path).map_err(io_err)?);
    w.write_all(&FLO_MAGIC.to_le_bytes()).map_err(io_err)?;
    w.write_all(&(field.width() as i32).to_le_bytes())
        .map_err(io_err)?;
    w.write_all(&(field.height() as i32).to_le_bytes())
        .map_err(io_err)?;
    for &(dx, dy) in field.vectors() {
        w.write_all(&dx.to_le_bytes()).map_err(io_err)?;
        w.write_all(&dy.to_le_bytes()).map_err(io_err)?;
    }
    w.flush().map_err(io_err)
}

pub fn read_flo(path: impl AsRef<Path>) -> Result<FlowField> {
    let path = path.as_ref();
    let mut r = BufReader::new(match File::open(path) {
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
    });
    let corrupt = |detail: &str| Error::CorruptData {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };

    let mut buf4 = [0u8; 4];
    r.read_exact(&mut buf4)
        .map_err(|_| corrupt("truncated header"))?;
    let magic = f32::from_le_bytes(buf4);
    if magic != FLO_MAGIC {
        return Err(corrupt(&format!(
            "bad magic {magic} (expected {FLO_MAGIC})"
        )));
    }
    r.read_exact(&mut buf4)
        .map_err(|_| corrupt("truncated header"))?;
    let width = i32::from_le_bytes(buf4);
    r.read_exact(&mut buf4)
        .map_err(|_| corrupt("truncated header"))?;
    let height = i32::from_le_bytes(buf4);
    if width <= 0 || height <= 0 || width > 1 << 20 || height > 1 << 20 {
        return Err(corrupt(&format!("implausible dimensions {width}x{height}")));
    }
    let (width, height) = (width as usize, height as usize);
    let mut vectors = Vec::with_capacity(width * height);
    for _ in 0..width * height {
        r.read_exact(&mut buf4)
            .map_err(|_| corrupt("truncated vector data"))?;
        let dx = f32::from_le_bytes(buf4);
        r.read_exact(&mut buf4)
            .map_err(|_| corrupt("truncated vector data"))?;
        let dy = f32::from_le_bytes(buf4);
        vectors.push((dx, dy));
    }
    FlowField::new(width, height, vectors)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn single_pixel_file_is_20_bytes() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("one.flo");
        let field = FlowField::zeros(1, 1);
        write_flo(&field, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        assert_eq!(bytes.len(), 20);
        // The magic float spells "PIEH" on disk.
        assert_eq!(&bytes[0..4], b"PIEH");
        assert_eq!(read_flo(&path).unwrap(), field);
    }

    #[test]
    fn bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.flo");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&123.0f32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&1i32.to_le_bytes());
        bytes.extend_from_slice(&[0u8; 8]);
        std::fs::write(&path, bytes).unwrap();
        let err = read_flo(&path).unwrap_err();
        assert!(matches!(err, Error::CorruptData { .. }), "got {err:?}");
    }

    #[test]
    fn truncated_file_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("short.flo");
        let field = FlowField::zeros(4, 4);
        write_flo(&field, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() - 5]).unwrap();
        assert!(matches!(
            read_flo(&path).unwrap_err(),
            Error::CorruptData { .. }
        ));
    }

    proptest! {
        #[test]
        fn roundtrip_bit_exact(
            w in 1usize..12,
            h in 1usize..12,
            seed in 0u64..1000,
        ) {
            let mut s = seed.wrapping_mul(0x9E3779B97F4A7C15).wrapping_add(1);
            let mut next = move || {
                s ^= s << 13;
                s ^= s >> 7;
                s ^= s << 17;
                (s as i32 as f32) / 65536.0
            };
            let vectors: Vec<(f32, f32)> = (0..w * h).map(|_| (next(), next())).collect();
            let field = FlowField::new(w, h, vectors).unwrap();
            let dir = tempfile::tempdir().unwrap();
            let path = dir.path().join("rt.flo");
            write_flo(&field, &path).unwrap();
            let back = read_flo(&path).unwrap();
            prop_assert_eq!(
                back.vectors().iter().map(|v| (v.0.to_bits(), v.1.to_bits())).collect::<Vec<_>>(),
                field.vectors().iter().map(|v| (v.0.to_bits(), v.1.to_bits())).collect::<Vec<_>>()
            );
        }
    }
}
