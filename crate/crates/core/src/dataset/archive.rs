//! Preprocessed clip archive.
//!
//! ```text
//! b"CLPA" | u32 version | u32 count | u32 shape[4] | u8 labels[count] | f32 data[count·prod(shape)]
//! ```
//!
//! All integers and floats are little-endian.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::Path;

use super::{DatasetError, Label};

pub const ARCHIVE_MAGIC: &[u8; 4] = b"CLPA";
pub const ARCHIVE_VERSION: u32 = 1;
const HEADER_LEN: usize = 4 + 4 + 4 + 16;

/// Clips of one shape with their labels, stored contiguously.
#[derive(Debug, Clone, PartialEq)]
pub struct ClipArchive {
    pub shape: [usize; 4],
    pub labels: Vec<Label>,
    pub data: Vec<f32>,
}

impl ClipArchive {
    pub fn new(shape: [usize; 4]) -> Self {
        Self { shape, labels: Vec::new(), data: Vec::new() }
    }

    pub fn clip_len(&self) -> usize {
        self.shape.iter().product()
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn push(&mut self, clip: &[f32], label: Label) -> Result<(), DatasetError> {
        if clip.len() != self.clip_len() {
            return Err(DatasetError::BadHeader(format!(
                "clip has {} elements, archive shape {:?} needs {}",
                clip.len(),
                self.shape,
                self.clip_len()
            )));
        }
        self.data.extend_from_slice(clip);
        self.labels.push(label);
        Ok(())
    }

    pub fn clip(&self, i: usize) -> &[f32] {
        let n = self.clip_len();
        &self.data[i * n..(i + 1) * n]
    }

    pub fn iter(&self) -> impl Iterator<Item = (&[f32], Label)> + '_ {
        self.data.chunks_exact(self.clip_len().max(1)).zip(self.labels.iter().copied())
    }
}

pub fn write_archive(archive: &ClipArchive, path: &Path) -> Result<(), DatasetError> {
    if archive.data.len() != archive.len() * archive.clip_len() {
        return Err(DatasetError::LengthMismatch(archive.data.len() / archive.clip_len().max(1), archive.len()));
    }
    let mut w = BufWriter::new(fs::File::create(path)?);
    w.write_all(ARCHIVE_MAGIC)?;
    w.write_all(&ARCHIVE_VERSION.to_le_bytes())?;
    w.write_all(&(archive.len() as u32).to_le_bytes())?;
    for d in archive.shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    let labels: Vec<u8> = archive.labels.iter().map(|l| l.index() as u8).collect();
    w.write_all(&labels)?;
    for v in &archive.data {
        w.write_all(&v.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_archive(path: &Path) -> Result<ClipArchive, DatasetError> {
    decode(&fs::read(path)?)
}

fn u32_at(bytes: &[u8], at: usize) -> u32 {
    u32::from_le_bytes(bytes[at..at + 4].try_into().unwrap())
}

fn decode(bytes: &[u8]) -> Result<ClipArchive, DatasetError> {
    if bytes.len() < 4 || &bytes[..4] != ARCHIVE_MAGIC {
        return Err(DatasetError::BadMagic);
    }
    if bytes.len() < HEADER_LEN {
        return Err(DatasetError::BadHeader(format!("{} bytes is shorter than the header", bytes.len())));
    }
    let version = u32_at(bytes, 4);
    if version != ARCHIVE_VERSION {
        return Err(DatasetError::VersionMismatch { found: version, expected: ARCHIVE_VERSION });
    }
    let count = u32_at(bytes, 8) as usize;
    let shape = [0, 1, 2, 3].map(|i| u32_at(bytes, 12 + 4 * i) as usize);
    let clip_len = shape
        .iter()
        .try_fold(1usize, |a, &d| a.checked_mul(d))
        .ok_or_else(|| DatasetError::BadHeader(format!("shape {shape:?} overflows")))?;
    let expected = count
        .checked_mul(clip_len)
        .and_then(|n| n.checked_mul(4))
        .and_then(|n| n.checked_add(HEADER_LEN + count))
        .ok_or_else(|| DatasetError::BadHeader("payload size overflows".into()))?;
    if bytes.len() != expected {
        return Err(DatasetError::TruncatedPayload { expected, actual: bytes.len() });
    }
    let labels = bytes[HEADER_LEN..HEADER_LEN + count]
        .iter()
        .map(|&b| Label::from_index(b as usize).ok_or_else(|| DatasetError::UnknownClass(format!("index {b}"))))
        .collect::<Result<Vec<_>, _>>()?;
    let data = bytes[HEADER_LEN + count..]
        .chunks_exact(4)
        .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
        .collect();
    Ok(ClipArchive { shape, labels, data })
}
