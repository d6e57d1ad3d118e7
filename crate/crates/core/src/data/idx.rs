//! IDX image/label archives (big-endian magic and dimensions, `u8` payload).

use std::path::Path;

use ndarray::Array2;
use sha2::{Digest, Sha256};

use super::Dataset;
use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], at: usize, what: &str) -> Result<u32> {
    bytes
        .get(at..at + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Format(format!("{what}: truncated header")))
}

/// Parses in-memory IDX buffers, keeping the first `limit` records. Pixels
/// are scaled by 1/255 and flattened row-major.
pub fn parse_idx_images(images: &[u8], label_bytes: Option<&[u8]>, limit: usize) -> Result<Dataset> {
    let magic = be_u32(images, 0, "image file")?;
    if magic != IMAGE_MAGIC {
        return Err(Error::Format(format!(
            "image file magic is {magic:#010x}, expected {IMAGE_MAGIC:#010x}"
        )));
    }
    let count = be_u32(images, 4, "image file")? as usize;
    let rows = be_u32(images, 8, "image file")? as usize;
    let cols = be_u32(images, 12, "image file")? as usize;
    let pixels = rows * cols;
    let take = count.min(limit);
    if take < 2 {
        return Err(Error::InvalidArgument(format!(
            "limit {limit} with {count} records gives fewer than 2 rows"
        )));
    }
    let payload = images
        .get(16..16 + take * pixels)
        .ok_or_else(|| Error::Format(format!("image payload truncated: need {take} x {pixels} bytes")))?;
    let features = Array2::from_shape_fn((take, pixels), |(i, j)| payload[i * pixels + j] as f64 / 255.0);

    let labels = match label_bytes {
        None => None,
        Some(bytes) => {
            let magic = be_u32(bytes, 0, "label file")?;
            if magic != LABEL_MAGIC {
                return Err(Error::Format(format!(
                    "label file magic is {magic:#010x}, expected {LABEL_MAGIC:#010x}"
                )));
            }
            let label_count = be_u32(bytes, 4, "label file")? as usize;
            if label_count < take {
                return Err(Error::Format(format!(
                    "label file has {label_count} records, need {take}"
                )));
            }
            let payload = bytes
                .get(8..8 + take)
                .ok_or_else(|| Error::Format("label payload truncated".into()))?;
            Some(payload.iter().map(|&b| b as i64).collect())
        }
    };

    let mut h = Sha256::new();
    h.update(images);
    if let Some(bytes) = label_bytes {
        h.update(bytes);
    }
    h.update((take as u64).to_le_bytes());
    let fingerprint = hex::encode(h.finalize());
    let names = (0..pixels).map(|j| format!("px{j}")).collect();
    Dataset::new(features, labels, Some(names), Some(fingerprint))
}

/// Loads an IDX image archive and optional label archive from disk.
pub fn load_idx_images(
    images_path: impl AsRef<Path>,
    labels_path: Option<&Path>,
    limit: usize,
) -> Result<Dataset> {
    let images_path = images_path.as_ref();
    let images = std::fs::read(images_path).map_err(|e| Error::io(images_path, e))?;
    let labels = labels_path
        .map(|p| std::fs::read(p).map_err(|e| Error::io(p, e)))
        .transpose()?;
    parse_idx_images(&images, labels.as_deref(), limit)
}
