use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::net::Shape3;

pub const CIFAR_SHAPE: Shape3 = Shape3::new(3, 32, 32);
pub const PIXELS: usize = 3 * 32 * 32;
pub const RECORD_BYTES: usize = PIXELS + 1;

pub const CLASS_NAMES: [&str; 10] = [
    "airplane",
    "automobile",
    "bird",
    "cat",
    "deer",
    "dog",
    "frog",
    "horse",
    "ship",
    "truck",
];

/// Class index of a CIFAR-10 class name.
pub fn class_index(name: &str) -> Option<usize> {
    CLASS_NAMES.iter().position(|c| c.eq_ignore_ascii_case(name))
}

/// One labelled 3×32×32 image with pixels in `[0, 1]`, channel-major (R, G, B planes).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Cifar10Record {
    pub label: u8,
    pub pixels: Vec<f64>,
}

impl Cifar10Record {
    pub fn decode(bytes: &[u8]) -> Self {
        debug_assert_eq!(bytes.len(), RECORD_BYTES);
        Self {
            label: bytes[0],
            pixels: bytes[1..].iter().map(|&b| f64::from(b) / 255.0).collect(),
        }
    }

    /// The 3073-byte binary form; pixels are clamped and rounded to bytes.
    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(RECORD_BYTES);
        out.push(self.label);
        out.extend(self.pixels.iter().map(|&p| quantize(p)));
        out
    }
}

pub(crate) fn quantize(p: f64) -> u8 {
    (p.clamp(0.0, 1.0) * 255.0).round() as u8
}

/// An in-memory CIFAR-10 binary batch.
#[derive(Debug, Clone)]
pub struct Cifar10Batch {
    bytes: Vec<u8>,
    source: PathBuf,
}

impl Cifar10Batch {
    pub fn open(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        Self::from_bytes(fs::read(path)?, path)
    }

    pub fn from_bytes(bytes: Vec<u8>, source: impl Into<PathBuf>) -> Result<Self> {
        let source = source.into();
        if bytes.is_empty() || !bytes.len().is_multiple_of(RECORD_BYTES) {
            return Err(Error::Format {
                path: source,
                detail: format!("{} bytes is not a whole number of {RECORD_BYTES}-byte records", bytes.len()),
            });
        }
        if let Some(pos) = bytes.iter().step_by(RECORD_BYTES).position(|&l| l > 9) {
            return Err(Error::Format {
                path: source,
                detail: format!("record {pos} has label byte {} (> 9)", bytes[pos * RECORD_BYTES]),
            });
        }
        Ok(Self { bytes, source })
    }

    pub fn len(&self) -> usize {
        self.bytes.len() / RECORD_BYTES
    }

    pub fn is_empty(&self) -> bool {
        self.bytes.is_empty()
    }

    pub fn source(&self) -> &Path {
        &self.source
    }

    pub fn get(&self, index: usize) -> Result<Cifar10Record> {
        if index >= self.len() {
            return Err(Error::Bounds {
                index,
                count: self.len(),
            });
        }
        Ok(Cifar10Record::decode(
            &self.bytes[index * RECORD_BYTES..(index + 1) * RECORD_BYTES],
        ))
    }

    pub fn iter(&self) -> impl Iterator<Item = Cifar10Record> + '_ {
        self.bytes.chunks_exact(RECORD_BYTES).map(Cifar10Record::decode)
    }
}

/// Reads record `index` of a CIFAR-10 binary batch file.
pub fn load_cifar10_batch(path: impl AsRef<Path>, index: usize) -> Result<Cifar10Record> {
    Cifar10Batch::open(path)?.get(index)
}

/// Writes records in the CIFAR-10 binary layout.
pub fn write_cifar10_batch(path: impl AsRef<Path>, records: &[Cifar10Record]) -> Result<()> {
    let mut bytes = Vec::with_capacity(records.len() * RECORD_BYTES);
    for r in records {
        if r.pixels.len() != PIXELS || r.label > 9 {
            return Err(Error::Usage("record is not a labelled 3×32×32 image".into()));
        }
        bytes.extend(r.encode());
    }
    fs::write(path, bytes)?;
    Ok(())
}

const NATURAL: &[u8] = include_bytes!("../../data/natural_32.bin");

/// Eight natural photographs (public-domain and CC0 sample images) box-filtered
/// to 32×32, in CIFAR-10 layout. Labels are distinct but otherwise arbitrary.
pub fn natural_images() -> Cifar10Batch {
    Cifar10Batch::from_bytes(NATURAL.to_vec(), "<builtin natural_32.bin>").expect("bundled batch is well formed")
}
