use crate::tensor::Tensor;

use super::DataError;

/// Label byte plus three 32x32 channel planes.
pub const CIFAR_RECORD_LEN: usize = 1 + 3 * 1024;

pub const CIFAR10_CLASSES: [&str; 10] = [
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

/// Parses a CIFAR-10 binary batch into `[3, 32, 32]` tensors and labels.
pub fn parse_cifar(bytes: &[u8], origin: &str) -> Result<(Vec<Tensor>, Vec<usize>), DataError> {
    if bytes.is_empty() {
        return Err(DataError::MalformedHeader {
            origin: origin.to_string(),
            offset: 0,
            reason: "no records".into(),
        });
    }
    let rem = bytes.len() % CIFAR_RECORD_LEN;
    if rem != 0 {
        return Err(DataError::Truncated {
            origin: origin.to_string(),
            offset: bytes.len() - rem,
            expected: CIFAR_RECORD_LEN,
            found: rem,
        });
    }
    let mut images = Vec::with_capacity(bytes.len() / CIFAR_RECORD_LEN);
    let mut labels = Vec::with_capacity(images.capacity());
    for (record, rec) in bytes.chunks_exact(CIFAR_RECORD_LEN).enumerate() {
        let label = rec[0] as usize;
        if label >= CIFAR10_CLASSES.len() {
            return Err(DataError::BadRecord {
                origin: origin.to_string(),
                record,
                offset: record * CIFAR_RECORD_LEN,
                reason: format!("label {label} outside 0..10"),
            });
        }
        labels.push(label);
        images.push(Tensor::from_parts(
            vec![3, 32, 32],
            rec[1..].iter().map(|&b| b as f64 / 255.0).collect(),
        ));
    }
    Ok((images, labels))
}
