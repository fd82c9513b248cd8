//! IDX (MNIST-family) dataset loader. Big-endian magics, strict length
//! validation, pixels scaled to `[0, 1]`.

use crate::error::{Error, Result};
use crate::nn::{LabeledDataset, SplitTag};
use crate::tensor::Tensor;
use std::fs;
use std::path::Path;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_u32_be(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Idx(format!("truncated header reading {}", what)))
}

/// Parses an IDX image file into `[rows, cols]` tensors with values in
/// `[0, 1]`.
pub fn load_idx_images(path: &Path) -> Result<Vec<Tensor>> {
    let bytes = fs::read(path)?;
    let magic = read_u32_be(&bytes, 0, "images magic")?;
    if magic != IMAGES_MAGIC {
        return Err(Error::Idx(format!(
            "bad images magic {:#010x} in {}",
            magic,
            path.display()
        )));
    }
    let count = read_u32_be(&bytes, 4, "image count")? as usize;
    let rows = read_u32_be(&bytes, 8, "rows")? as usize;
    let cols = read_u32_be(&bytes, 12, "cols")? as usize;
    let expected = 16 + count * rows * cols;
    if bytes.len() != expected {
        return Err(Error::Idx(format!(
            "{}: declared {} images of {}x{} but file holds {} bytes (expected {})",
            path.display(),
            count,
            rows,
            cols,
            bytes.len(),
            expected
        )));
    }
    let mut images = Vec::with_capacity(count);
    for k in 0..count {
        let start = 16 + k * rows * cols;
        let data: Vec<f64> = bytes[start..start + rows * cols]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        images.push(Tensor::new(vec![rows, cols], data)?);
    }
    Ok(images)
}

/// Parses an IDX label file.
pub fn load_idx_labels(path: &Path) -> Result<Vec<usize>> {
    let bytes = fs::read(path)?;
    let magic = read_u32_be(&bytes, 0, "labels magic")?;
    if magic != LABELS_MAGIC {
        return Err(Error::Idx(format!(
            "bad labels magic {:#010x} in {}",
            magic,
            path.display()
        )));
    }
    let count = read_u32_be(&bytes, 4, "label count")? as usize;
    if bytes.len() != 8 + count {
        return Err(Error::Idx(format!(
            "{}: declared {} labels but file holds {} bytes",
            path.display(),
            count,
            bytes.len()
        )));
    }
    Ok(bytes[8..].iter().map(|&b| b as usize).collect())
}

/// Loads paired image/label IDX files into a dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path, split_tag: SplitTag) -> Result<LabeledDataset> {
    let images = load_idx_images(images_path)?;
    let labels = load_idx_labels(labels_path)?;
    if images.len() != labels.len() {
        return Err(Error::Idx(format!(
            "image count {} does not match label count {}",
            images.len(),
            labels.len()
        )));
    }
    LabeledDataset::new(images, labels, split_tag)
}

/// Serializes images/labels back to IDX bytes; used for fixtures and tests.
pub fn write_idx_images(path: &Path, images: &[Tensor]) -> Result<()> {
    let (rows, cols) = match images.first() {
        Some(t) if t.shape().len() == 2 => (t.shape()[0], t.shape()[1]),
        _ => return Err(Error::invalid("write_idx_images needs [rows, cols] tensors")),
    };
    let mut bytes = Vec::with_capacity(16 + images.len() * rows * cols);
    bytes.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(images.len() as u32).to_be_bytes());
    bytes.extend_from_slice(&(rows as u32).to_be_bytes());
    bytes.extend_from_slice(&(cols as u32).to_be_bytes());
    for img in images {
        if img.shape() != [rows, cols] {
            return Err(Error::invalid("write_idx_images: ragged image shapes"));
        }
        bytes.extend(img.data().iter().map(|&v| (v * 255.0).round().clamp(0.0, 255.0) as u8));
    }
    fs::write(path, bytes)?;
    Ok(())
}

pub fn write_idx_labels(path: &Path, labels: &[usize]) -> Result<()> {
    let mut bytes = Vec::with_capacity(8 + labels.len());
    bytes.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
    bytes.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    for &l in labels {
        if l > 255 {
            return Err(Error::invalid("label exceeds one byte"));
        }
        bytes.push(l as u8);
    }
    fs::write(path, bytes)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_synthetic_fixture() {
        let dir = tempfile::tempdir().unwrap();
        let imgs: Vec<Tensor> = (0..4)
            .map(|k| Tensor::filled(&[28, 28], k as f64 / 255.0 * 10.0))
            .collect();
        let labels = vec![0usize, 3, 7, 9];
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("labels.idx");
        write_idx_images(&ip, &imgs).unwrap();
        write_idx_labels(&lp, &labels).unwrap();
        let ds = load_idx(&ip, &lp, SplitTag::Train).unwrap();
        assert_eq!(ds.len(), 4);
        assert_eq!(ds.images[0].shape(), &[28, 28]);
        assert_eq!(ds.labels, labels);
        assert!((ds.images[2].data()[0] - 20.0 / 255.0).abs() < 1e-12);
    }

    #[test]
    fn corrupted_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.idx");
        std::fs::write(&p, [0u8, 0, 8, 4, 0, 0, 0, 0]).unwrap();
        assert!(matches!(load_idx_images(&p), Err(Error::Idx(_))));
    }

    #[test]
    fn length_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("short.idx");
        let mut bytes = Vec::new();
        bytes.extend_from_slice(&0x0000_0803u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&2u32.to_be_bytes());
        bytes.extend_from_slice(&[1, 2, 3]); // needs 8 pixel bytes
        std::fs::write(&p, bytes).unwrap();
        assert!(matches!(load_idx_images(&p), Err(Error::Idx(_))));
    }
}
