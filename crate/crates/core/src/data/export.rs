use std::path::{Path, PathBuf};

use crate::eval::Image;
use crate::{Error, Result};

/// Sidecar next to an exported image, e.g. `a.pgm` → `a.window.txt`.
pub fn window_sidecar(path: &Path) -> PathBuf {
    path.with_extension("window.txt")
}

/// Writes a 2-D image as binary 8-bit PGM.
///
/// Values are mapped linearly from `window` (defaults to the image's own
/// min/max) onto 0–255 and clipped. The window is recorded in a sidecar
/// text file as `min max`.
pub fn export_pgm(image: &Image, path: &Path, window: Option<(f64, f64)>) -> Result<(f64, f64)> {
    let shape = image.shape();
    if shape.len() != 2 {
        return Err(Error::dim(format!("PGM export needs a 2-D image, got {shape:?}")));
    }
    let (lo, hi) = window.unwrap_or_else(|| {
        let d = image.data();
        let lo = d.iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = d.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    });
    let span = if hi > lo { hi - lo } else { 1.0 };
    let mut bytes = format!("P5\n{} {}\n255\n", shape[1], shape[0]).into_bytes();
    bytes.extend(
        image
            .data()
            .iter()
            .map(|v| (((v - lo) / span).clamp(0.0, 1.0) * 255.0).round() as u8),
    );
    std::fs::write(path, bytes).map_err(|e| Error::file(path, e))?;
    let side = window_sidecar(path);
    std::fs::write(&side, format!("{lo} {hi}\n")).map_err(|e| Error::file(&side, e))?;
    Ok((lo, hi))
}

/// Reads an 8-bit binary PGM back as `[H, W]` gray levels in 0–255.
pub fn read_pgm(path: &Path) -> Result<Image> {
    let bytes = std::fs::read(path).map_err(|e| Error::file(path, e))?;
    let mut fields = Vec::new();
    let mut pos = 0;
    while fields.len() < 4 {
        while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Format("truncated PGM header".into()));
        }
        fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
    }
    pos += 1;
    let parse = |s: &str| s.parse::<usize>().map_err(|_| Error::Format("bad PGM header".into()));
    if fields[0] != "P5" || parse(&fields[3])? != 255 {
        return Err(Error::Format("only 8-bit binary PGM is supported".into()));
    }
    let (w, h) = (parse(&fields[1])?, parse(&fields[2])?);
    let pixels = bytes.get(pos..pos + w * h).ok_or_else(|| Error::Format("truncated PGM data".into()))?;
    Image::new(vec![h, w], pixels.iter().map(|&b| b as f64).collect())
}
