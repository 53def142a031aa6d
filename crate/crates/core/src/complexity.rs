//! Heatmap complexity: gray-level histogram entropy and encoded file sizes.

use std::fmt;
use std::io::Cursor;

use image::codecs::jpeg::JpegEncoder;
use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ImageEncoder, RgbImage};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ComplexityError {
    #[error("{codec} encoding failed: {source}")]
    Encode {
        codec: Codec,
        #[source]
        source: image::ImageError,
    },
}

/// PNG uses best compression with adaptive filtering; JPEG is baseline at
/// quality 90.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Codec {
    Png,
    Jpeg90,
}

impl fmt::Display for Codec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Codec::Png => "png",
            Codec::Jpeg90 => "jpeg-q90",
        })
    }
}

pub const JPEG_QUALITY: u8 = 90;

/// ITU-R BT.601 luma, rounded to the nearest level; exact on gray pixels.
pub fn luma(rgb: [u8; 3]) -> u8 {
    let [r, g, b] = rgb.map(u32::from);
    ((299 * r + 587 * g + 114 * b + 500) / 1000) as u8
}

/// Shannon entropy in bits of the 256-bin luma histogram.
pub fn image_entropy(img: &RgbImage) -> f64 {
    let mut hist = [0u64; 256];
    for px in img.pixels() {
        hist[luma(px.0) as usize] += 1;
    }
    histogram_entropy(&hist)
}

pub fn histogram_entropy(hist: &[u64]) -> f64 {
    let n: u64 = hist.iter().sum();
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    let h: f64 = hist
        .iter()
        .filter(|&&c| c > 0)
        .map(|&c| {
            let p = c as f64 / n;
            -p * p.log2()
        })
        .sum();
    // a single occupied bin gives -0.0
    h.max(0.0)
}

pub fn encode(img: &RgbImage, codec: Codec) -> Result<Vec<u8>, ComplexityError> {
    let mut buf = Cursor::new(Vec::new());
    let (w, h) = img.dimensions();
    let result = match codec {
        Codec::Png => PngEncoder::new_with_quality(&mut buf, CompressionType::Best, FilterType::Adaptive)
            .write_image(img.as_raw(), w, h, image::ExtendedColorType::Rgb8),
        Codec::Jpeg90 => JpegEncoder::new_with_quality(&mut buf, JPEG_QUALITY)
            .write_image(img.as_raw(), w, h, image::ExtendedColorType::Rgb8),
    };
    result.map_err(|source| ComplexityError::Encode { codec, source })?;
    Ok(buf.into_inner())
}

pub fn compressed_size(img: &RgbImage, codec: Codec) -> Result<usize, ComplexityError> {
    encode(img, codec).map(|b| b.len())
}

#[derive(Debug, Clone, PartialEq)]
pub struct ComplexityRecord {
    pub image_id: u64,
    pub method: String,
    pub entropy_bits: f64,
    pub png_bytes: usize,
    pub jpeg_bytes: usize,
}

impl ComplexityRecord {
    pub fn measure(
        image_id: u64,
        method: impl Into<String>,
        rendered: &RgbImage,
    ) -> Result<Self, ComplexityError> {
        Ok(Self {
            image_id,
            method: method.into(),
            entropy_bits: image_entropy(rendered),
            png_bytes: compressed_size(rendered, Codec::Png)?,
            jpeg_bytes: compressed_size(rendered, Codec::Jpeg90)?,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Aggregate {
    pub mean: f64,
    pub median: f64,
}

impl Aggregate {
    fn of(mut values: Vec<f64>) -> Self {
        let n = values.len();
        values.sort_by(f64::total_cmp);
        let mean = values.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            (values[n / 2 - 1] + values[n / 2]) / 2.0
        };
        Self { mean, median }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MethodComplexity {
    pub method: String,
    pub n: usize,
    pub entropy_bits: Aggregate,
    pub png_bytes: Aggregate,
    pub jpeg_bytes: Aggregate,
}

/// Per-method records plus their aggregates, methods in first-seen order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ComplexityReport {
    pub records: Vec<ComplexityRecord>,
}

impl ComplexityReport {
    pub fn push(&mut self, record: ComplexityRecord) {
        self.records.push(record);
    }

    pub fn summary(&self) -> Vec<MethodComplexity> {
        let mut methods: Vec<&str> = Vec::new();
        for r in &self.records {
            if !methods.contains(&r.method.as_str()) {
                methods.push(&r.method);
            }
        }
        methods
            .into_iter()
            .map(|m| {
                let rs: Vec<&ComplexityRecord> =
                    self.records.iter().filter(|r| r.method == m).collect();
                MethodComplexity {
                    method: m.to_string(),
                    n: rs.len(),
                    entropy_bits: Aggregate::of(rs.iter().map(|r| r.entropy_bits).collect()),
                    png_bytes: Aggregate::of(rs.iter().map(|r| r.png_bytes as f64).collect()),
                    jpeg_bytes: Aggregate::of(rs.iter().map(|r| r.jpeg_bytes as f64).collect()),
                }
            })
            .collect()
    }
}
