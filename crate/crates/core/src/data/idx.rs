//! The IDX container used by MNIST-family datasets: a big-endian 32-bit
//! magic `0x0000_08NN` (unsigned-byte payload, `NN` dimensions), one
//! big-endian 32-bit extent per dimension, then the raw bytes.

use std::fs;
use std::io::Write;
use std::path::Path;

use ndarray::Array2;

use super::ImageSet;
use crate::{Error, Result};

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

const UNSIGNED_BYTE: u8 = 0x08;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdxArray {
    pub dims: Vec<usize>,
    pub data: Vec<u8>,
}

impl IdxArray {
    pub fn magic(&self) -> u32 {
        u32::from(UNSIGNED_BYTE) << 8 | self.dims.len() as u32
    }
}

fn format_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Format {
        offset: offset as u64,
        message: message.into(),
    }
}

fn be_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| format_err(offset, format!("file ends inside the {what}")))
}

/// Parses an unsigned-byte IDX buffer. When `expected_magic` is given the
/// header must match it exactly.
pub fn parse_idx(bytes: &[u8], expected_magic: Option<u32>) -> Result<IdxArray> {
    let magic = be_u32(bytes, 0, "magic number")?;
    if let Some(expected) = expected_magic {
        if magic != expected {
            return Err(format_err(
                0,
                format!("magic 0x{magic:08x}, expected 0x{expected:08x}"),
            ));
        }
    }
    if magic >> 16 != 0 {
        return Err(format_err(0, format!("magic 0x{magic:08x} must start with two zero bytes")));
    }
    if (magic >> 8) as u8 != UNSIGNED_BYTE {
        return Err(format_err(
            2,
            format!("element type 0x{:02x} is not unsigned byte", (magic >> 8) as u8),
        ));
    }
    let ndims = (magic & 0xff) as usize;
    let mut dims = Vec::with_capacity(ndims);
    let mut count: usize = 1;
    for d in 0..ndims {
        let offset = 4 + 4 * d;
        let extent = be_u32(bytes, offset, "dimension header")? as usize;
        count = count
            .checked_mul(extent)
            .ok_or_else(|| format_err(offset, "extents overflow the addressable size"))?;
        dims.push(extent);
    }
    let header = 4 + 4 * ndims;
    let available = bytes.len() - header.min(bytes.len());
    if available < count {
        return Err(format_err(
            bytes.len(),
            format!("payload truncated: {count} bytes declared, {available} present"),
        ));
    }
    if available > count {
        return Err(format_err(
            header + count,
            format!("{} trailing bytes after the payload", available - count),
        ));
    }
    Ok(IdxArray {
        dims,
        data: bytes[header..].to_vec(),
    })
}

pub fn read_idx(path: impl AsRef<Path>, expected_magic: Option<u32>) -> Result<IdxArray> {
    parse_idx(&fs::read(path)?, expected_magic)
}

pub fn write_idx(path: impl AsRef<Path>, array: &IdxArray) -> Result<()> {
    let count: usize = array.dims.iter().product();
    if count != array.data.len() {
        return Err(Error::contract(format!(
            "IDX dims {:?} need {count} bytes, got {}",
            array.dims,
            array.data.len()
        )));
    }
    let mut out = Vec::with_capacity(4 + 4 * array.dims.len() + count);
    out.extend_from_slice(&array.magic().to_be_bytes());
    for &d in &array.dims {
        let d = u32::try_from(d).map_err(|_| Error::contract(format!("extent {d} exceeds u32")))?;
        out.extend_from_slice(&d.to_be_bytes());
    }
    out.extend_from_slice(&array.data);
    let mut file = fs::File::create(path)?;
    file.write_all(&out)?;
    Ok(())
}

/// Loads a 3-D image file, scaling bytes to `[0, 1]` by `/255`.
pub fn load_idx_images(path: impl AsRef<Path>) -> Result<ImageSet> {
    let arr = read_idx(path, Some(IDX_IMAGES_MAGIC))?;
    let (n, h, w) = (arr.dims[0], arr.dims[1], arr.dims[2]);
    let pixels: Vec<f64> = arr.data.iter().map(|&b| f64::from(b) / 255.0).collect();
    let images = Array2::from_shape_vec((n, h * w), pixels).expect("sized by header");
    ImageSet::new(images, h, w)
}

pub fn load_idx_labels(path: impl AsRef<Path>) -> Result<Vec<u8>> {
    Ok(read_idx(path, Some(IDX_LABELS_MAGIC))?.data)
}

pub fn write_idx_images(path: impl AsRef<Path>, n: usize, height: usize, width: usize, data: &[u8]) -> Result<()> {
    write_idx(
        path,
        &IdxArray {
            dims: vec![n, height, width],
            data: data.to_vec(),
        },
    )
}

pub fn write_idx_labels(path: impl AsRef<Path>, labels: &[u8]) -> Result<()> {
    write_idx(
        path,
        &IdxArray {
            dims: vec![labels.len()],
            data: labels.to_vec(),
        },
    )
}
