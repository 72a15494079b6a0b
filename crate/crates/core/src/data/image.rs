use std::fs;
use std::io::Write;
use std::path::Path;

use super::cifar::quantize;
use crate::error::{Error, Result};
use crate::net::Shape3;

/// Writes a channel-major image as a binary PPM (P6).
///
/// Pixels are clamped to `[0, 1]` and stored as `round(p·255)`. A
/// single-channel image is written as grey RGB.
pub fn write_image(image: &[f64], shape: Shape3, path: impl AsRef<Path>) -> Result<()> {
    fs::write(path, encode_ppm(image, shape)?)?;
    Ok(())
}

pub fn encode_ppm(image: &[f64], shape: Shape3) -> Result<Vec<u8>> {
    if image.len() != shape.len() {
        return Err(Error::dim(
            0,
            format!("image has {} values, shape {shape} needs {}", image.len(), shape.len()),
        ));
    }
    if shape.channels != 1 && shape.channels != 3 {
        return Err(Error::Usage(format!("cannot render {} channels as RGB", shape.channels)));
    }
    let (h, w) = (shape.height, shape.width);
    let mut out = format!("P6\n{w} {h}\n255\n").into_bytes();
    for y in 0..h {
        for x in 0..w {
            for c in 0..3 {
                let ch = if shape.channels == 1 { 0 } else { c };
                out.push(quantize(image[shape.index(ch, y, x)]));
            }
        }
    }
    Ok(out)
}

const SIDECAR_MAGIC: &[u8; 4] = b"GLF1";

/// Lossless sidecar: magic, `(C, H, W)` as little-endian `u32`, then `f64`
/// little-endian values.
pub fn write_float_image(image: &[f64], shape: Shape3, path: impl AsRef<Path>) -> Result<()> {
    if image.len() != shape.len() {
        return Err(Error::dim(0, "image length does not match its shape"));
    }
    let mut buf = Vec::with_capacity(16 + 8 * image.len());
    buf.extend_from_slice(SIDECAR_MAGIC);
    for d in [shape.channels, shape.height, shape.width] {
        let d = u32::try_from(d).map_err(|_| Error::Usage("dimension too large".into()))?;
        buf.extend_from_slice(&d.to_le_bytes());
    }
    for v in image {
        buf.extend_from_slice(&v.to_le_bytes());
    }
    fs::File::create(path)?.write_all(&buf)?;
    Ok(())
}

pub fn read_float_image(path: impl AsRef<Path>) -> Result<(Shape3, Vec<f64>)> {
    let path = path.as_ref();
    let bytes = fs::read(path)?;
    let bad = |detail: &str| Error::Format {
        path: path.to_path_buf(),
        detail: detail.to_string(),
    };
    if bytes.len() < 16 || &bytes[..4] != SIDECAR_MAGIC {
        return Err(bad("missing float-image header"));
    }
    let dim = |k: usize| u32::from_le_bytes(bytes[4 + 4 * k..8 + 4 * k].try_into().expect("4 bytes")) as usize;
    let shape = Shape3::new(dim(0), dim(1), dim(2));
    let body = &bytes[16..];
    if body.len() != 8 * shape.len() {
        return Err(bad("payload length does not match the header"));
    }
    let values = body
        .chunks_exact(8)
        .map(|c| f64::from_le_bytes(c.try_into().expect("8 bytes")))
        .collect();
    Ok((shape, values))
}
