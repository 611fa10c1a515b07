//! MNIST ingestion: IDX binary parsing, per-class filtering, bilinear
//! resizing, and normalization to [0,1].

use std::fs;
use std::path::Path;

use crate::{Error, Result};

pub const IMAGE_MAGIC: u32 = 0x0000_0803;
pub const LABEL_MAGIC: u32 = 0x0000_0801;

/// Normalized grayscale images with labels, all pixels in [0,1],
/// row-major with top-left origin.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub images: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
    pub h: usize,
    pub w: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.images.len()
    }

    pub fn is_empty(&self) -> bool {
        self.images.is_empty()
    }
}

/// Raw byte images straight out of an IDX file.
#[derive(Debug, Clone, PartialEq)]
pub struct RawImages {
    pub count: usize,
    pub rows: usize,
    pub cols: usize,
    pub pixels: Vec<u8>,
}

fn read_be_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    let end = offset + 4;
    if bytes.len() < end {
        return Err(Error::Parse(format!(
            "file truncated at offset {offset}: need 4 header bytes, have {}",
            bytes.len().saturating_sub(offset)
        )));
    }
    Ok(u32::from_be_bytes(bytes[offset..end].try_into().expect("4 bytes")))
}

/// Parses an IDX image file: big-endian magic 0x00000803, count, rows, cols,
/// then count*rows*cols unsigned bytes.
pub fn load_idx_images(path: &Path) -> Result<RawImages> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_idx_images(&bytes)
}

pub fn parse_idx_images(bytes: &[u8]) -> Result<RawImages> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Parse(format!(
            "bad image magic {magic:#010x} at offset 0, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let count = read_be_u32(bytes, 4)? as usize;
    let rows = read_be_u32(bytes, 8)? as usize;
    let cols = read_be_u32(bytes, 12)? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Parse(format!(
            "image payload has {} bytes at offset 16, expected {}",
            bytes.len() - 16.min(bytes.len()),
            count * rows * cols
        )));
    }
    Ok(RawImages { count, rows, cols, pixels: bytes[16..].to_vec() })
}

/// Parses an IDX label file: magic 0x00000801, count, then count bytes in 0-9.
pub fn load_idx_labels(path: &Path) -> Result<Vec<u8>> {
    let bytes = fs::read(path)
        .map_err(|e| Error::Parse(format!("cannot read {}: {e}", path.display())))?;
    parse_idx_labels(&bytes)
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != LABEL_MAGIC {
        return Err(Error::Parse(format!(
            "bad label magic {magic:#010x} at offset 0, expected {LABEL_MAGIC:#010x}"
        )));
    }
    let count = read_be_u32(bytes, 4)? as usize;
    if bytes.len() != 8 + count {
        return Err(Error::Parse(format!(
            "label payload has {} bytes at offset 8, expected {count}",
            bytes.len() - 8.min(bytes.len())
        )));
    }
    let labels = bytes[8..].to_vec();
    if let Some(pos) = labels.iter().position(|&l| l > 9) {
        return Err(Error::Parse(format!(
            "label {} at offset {} is outside 0-9",
            labels[pos],
            8 + pos
        )));
    }
    Ok(labels)
}

/// pixel/255, flattened row-major.
pub fn normalize(raw: &[u8]) -> Vec<f64> {
    raw.iter().map(|&b| f64::from(b) / 255.0).collect()
}

/// Pairs raw images with labels into a normalized dataset.
pub fn build_dataset(images: RawImages, labels: Vec<u8>) -> Result<Dataset> {
    if images.count != labels.len() {
        return Err(Error::Parse(format!(
            "{} images but {} labels",
            images.count,
            labels.len()
        )));
    }
    let stride = images.rows * images.cols;
    let normalized = (0..images.count)
        .map(|i| normalize(&images.pixels[i * stride..(i + 1) * stride]))
        .collect();
    Ok(Dataset { images: normalized, labels, h: images.rows, w: images.cols })
}

/// Retains the images whose label equals `digit`, order preserved.
pub fn filter_class(dataset: &Dataset, digit: u8) -> Result<Dataset> {
    if digit > 9 {
        return Err(Error::Config(format!("digit class {digit} outside 0-9")));
    }
    let mut images = Vec::new();
    let mut labels = Vec::new();
    for (img, &label) in dataset.images.iter().zip(&dataset.labels) {
        if label == digit {
            images.push(img.clone());
            labels.push(label);
        }
    }
    Ok(Dataset { images, labels, h: dataset.h, w: dataset.w })
}

/// Separable bilinear interpolation with half-pixel-center mapping:
/// source coordinate s = (d + 0.5) * (in/out) - 0.5, clamped to [0, in-1].
pub fn resize_bilinear(
    image: &[f64],
    in_h: usize,
    in_w: usize,
    out_h: usize,
    out_w: usize,
) -> Result<Vec<f64>> {
    if in_h == 0 || in_w == 0 || out_h == 0 || out_w == 0 {
        return Err(Error::Shape("zero image dimension".into()));
    }
    if image.len() != in_h * in_w {
        return Err(Error::Shape(format!(
            "image has {} pixels, expected {}",
            image.len(),
            in_h * in_w
        )));
    }
    let coords = |d: usize, inn: usize, out: usize| -> (usize, usize, f64) {
        let s = ((d as f64 + 0.5) * inn as f64 / out as f64 - 0.5)
            .clamp(0.0, (inn - 1) as f64);
        let lo = s.floor() as usize;
        let hi = (lo + 1).min(inn - 1);
        (lo, hi, s - lo as f64)
    };
    let mut out = Vec::with_capacity(out_h * out_w);
    for r in 0..out_h {
        let (r0, r1, fr) = coords(r, in_h, out_h);
        for c in 0..out_w {
            let (c0, c1, fc) = coords(c, in_w, out_w);
            let top = image[r0 * in_w + c0] * (1.0 - fc) + image[r0 * in_w + c1] * fc;
            let bottom = image[r1 * in_w + c0] * (1.0 - fc) + image[r1 * in_w + c1] * fc;
            out.push(top * (1.0 - fr) + bottom * fr);
        }
    }
    Ok(out)
}

/// Resizes every image in the dataset.
pub fn resize_dataset(dataset: &Dataset, out_h: usize, out_w: usize) -> Result<Dataset> {
    let images = dataset
        .images
        .iter()
        .map(|img| resize_bilinear(img, dataset.h, dataset.w, out_h, out_w))
        .collect::<Result<Vec<_>>>()?;
    Ok(Dataset { images, labels: dataset.labels.clone(), h: out_h, w: out_w })
}
