//! Atomic output writing: produce the file under a temporary name in the
//! same directory, then rename over the target so failures leave no
//! partial output behind.

use std::path::{Path, PathBuf};

use pairdeblur::{Error, Result};

/// Temporary sibling path that keeps the target's extension (several
/// writers pick their format from it).
fn temp_sibling(path: &Path) -> PathBuf {
    let stem = path.file_stem().and_then(|s| s.to_str()).unwrap_or("out");
    let name = match path.extension().and_then(|e| e.to_str()) {
        Some(ext) => format!("{stem}.tmp{}.{ext}", std::process::id()),
        None => format!("{stem}.tmp{}", std::process::id()),
    };
    path.with_file_name(name)
}

pub fn atomic_write(path: &Path, write: impl FnOnce(&Path) -> Result<()>) -> Result<()> {
    let tmp = temp_sibling(path);
    match write(&tmp) {
        Ok(()) => std::fs::rename(&tmp, path).map_err(|e| {
            let _ = std::fs::remove_file(&tmp);
            Error::Io {
                path: path.to_path_buf(),
                source: e,
            }
        }),
        Err(e) => {
            let _ = std::fs::remove_file(&tmp);
            Err(e)
        }
    }
}

pub fn atomic_write_text(path: &Path, text: &str) -> Result<()> {
    atomic_write(path, |tmp| {
        std::fs::write(tmp, text).map_err(|e| Error::Io {
            path: tmp.to_path_buf(),
            source: e,
        })
    })
}
