use std::fs;
use std::path::{Path, PathBuf};

use image::{ColorType, DynamicImage};

use crate::tensor::Tensor;

use super::{DataError, Dataset, Split};

const EXTENSIONS: [&str; 5] = ["png", "ppm", "pgm", "pnm", "pbm"];

fn sorted_entries(dir: &Path) -> Result<Vec<PathBuf>, DataError> {
    let io_err = |source| DataError::Io {
        path: dir.display().to_string(),
        source,
    };
    let mut entries = fs::read_dir(dir)
        .map_err(io_err)?
        .map(|e| e.map(|e| e.path()))
        .collect::<Result<Vec<_>, _>>()
        .map_err(io_err)?;
    entries.sort();
    Ok(entries)
}

fn is_gray(color: ColorType) -> bool {
    matches!(
        color,
        ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16
    )
}

/// Loads `root/<class>/<image>` trees. Classes are subdirectory names in
/// sorted order; images within a class are taken in sorted file-name order.
/// All-grayscale trees load as one channel, anything else as RGB.
pub fn load_image_directory(root: &Path) -> Result<Dataset, DataError> {
    let mut class_names = Vec::new();
    let mut decoded: Vec<(PathBuf, DynamicImage, usize)> = Vec::new();
    for class_dir in sorted_entries(root)?.into_iter().filter(|p| p.is_dir()) {
        let label = class_names.len();
        class_names.push(
            class_dir
                .file_name()
                .map(|n| n.to_string_lossy().into_owned())
                .unwrap_or_default(),
        );
        for file in sorted_entries(&class_dir)? {
            let ext = file
                .extension()
                .map(|e| e.to_string_lossy().to_lowercase())
                .unwrap_or_default();
            if !EXTENSIONS.contains(&ext.as_str()) {
                continue;
            }
            let img = image::open(&file).map_err(|e| DataError::UnreadableImage {
                path: file.display().to_string(),
                reason: e.to_string(),
            })?;
            decoded.push((file, img, label));
        }
    }
    let gray = decoded.iter().all(|(_, img, _)| is_gray(img.color()));
    let mut images = Vec::with_capacity(decoded.len());
    let mut labels = Vec::with_capacity(decoded.len());
    let mut dims: Option<(u32, u32)> = None;
    for (path, img, label) in decoded {
        let (w, h) = (img.width(), img.height());
        match dims {
            None => dims = Some((w, h)),
            Some(d) if d != (w, h) => {
                return Err(DataError::Inconsistent(format!(
                    "{} is {w}x{h}, expected {}x{}",
                    path.display(),
                    d.0,
                    d.1
                )))
            }
            _ => {}
        }
        let (w, h) = (w as usize, h as usize);
        let tensor = if gray {
            let buf = img.to_luma8();
            Tensor::from_parts(vec![1, h, w], buf.as_raw().iter().map(|&b| b as f64 / 255.0).collect())
        } else {
            let buf = img.to_rgb8();
            let raw = buf.as_raw();
            // interleaved RGB -> channel planes
            let mut data = vec![0.0; 3 * h * w];
            for (p, px) in raw.chunks_exact(3).enumerate() {
                for c in 0..3 {
                    data[c * h * w + p] = px[c] as f64 / 255.0;
                }
            }
            Tensor::from_parts(vec![3, h, w], data)
        };
        images.push(tensor);
        labels.push(label);
    }
    Dataset::new(images, labels, Split::infer(root), class_names)
}
