use crate::tensor::Tensor;

use super::DataError;

pub const IDX_IMAGES_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABELS_MAGIC: u32 = 0x0000_0801;

fn be_u32(bytes: &[u8], offset: usize, origin: &str) -> Result<u32, DataError> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| DataError::Truncated {
            origin: origin.to_string(),
            offset,
            expected: 4,
            found: bytes.len().saturating_sub(offset),
        })
}

fn check_magic(bytes: &[u8], want: u32, origin: &str) -> Result<(), DataError> {
    let magic = be_u32(bytes, 0, origin)?;
    if magic != want {
        return Err(DataError::MalformedHeader {
            origin: origin.to_string(),
            offset: 0,
            reason: format!("magic 0x{magic:08x}, expected 0x{want:08x}"),
        });
    }
    Ok(())
}

/// Parses an IDX3 unsigned-byte image file into `[1, rows, cols]` tensors
/// scaled to `[0, 1]`.
pub fn parse_idx_images(bytes: &[u8], origin: &str) -> Result<Vec<Tensor>, DataError> {
    check_magic(bytes, IDX_IMAGES_MAGIC, origin)?;
    let n = be_u32(bytes, 4, origin)? as usize;
    let rows = be_u32(bytes, 8, origin)? as usize;
    let cols = be_u32(bytes, 12, origin)? as usize;
    if rows == 0 || cols == 0 {
        return Err(DataError::MalformedHeader {
            origin: origin.to_string(),
            offset: 8,
            reason: format!("zero image extent {rows}x{cols}"),
        });
    }
    let per = rows * cols;
    let payload = &bytes[16..];
    let expected = n.checked_mul(per).ok_or_else(|| DataError::MalformedHeader {
        origin: origin.to_string(),
        offset: 4,
        reason: "record count overflows".into(),
    })?;
    if payload.len() < expected {
        return Err(DataError::Truncated {
            origin: origin.to_string(),
            offset: 16 + payload.len() / per * per,
            expected: per,
            found: payload.len() % per,
        });
    }
    if payload.len() > expected {
        return Err(DataError::MalformedHeader {
            origin: origin.to_string(),
            offset: 16 + expected,
            reason: format!("{} trailing bytes after {n} records", payload.len() - expected),
        });
    }
    Ok(payload
        .chunks_exact(per)
        .map(|rec| {
            Tensor::from_parts(
                vec![1, rows, cols],
                rec.iter().map(|&b| b as f64 / 255.0).collect(),
            )
        })
        .collect())
}

/// Parses an IDX1 unsigned-byte label file.
pub fn parse_idx_labels(bytes: &[u8], origin: &str) -> Result<Vec<usize>, DataError> {
    check_magic(bytes, IDX_LABELS_MAGIC, origin)?;
    let n = be_u32(bytes, 4, origin)? as usize;
    let payload = &bytes[8..];
    if payload.len() < n {
        return Err(DataError::Truncated {
            origin: origin.to_string(),
            offset: 8 + payload.len(),
            expected: n - payload.len(),
            found: 0,
        });
    }
    if payload.len() > n {
        return Err(DataError::MalformedHeader {
            origin: origin.to_string(),
            offset: 8 + n,
            reason: format!("{} trailing bytes after {n} labels", payload.len() - n),
        });
    }
    Ok(payload.iter().map(|&b| b as usize).collect())
}
