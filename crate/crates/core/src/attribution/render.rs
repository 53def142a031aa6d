use std::fmt;
use std::str::FromStr;

use image::{Rgb, RgbImage};

use super::{AttributionError, Heatmap};

const MID_GRAY: Rgb<u8> = Rgb([128, 128, 128]);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum RenderMode {
    /// Gray at zero, red for positive scores, blue for negative ones, scaled
    /// by the largest absolute score.
    SignedDiverging,
    /// Black-to-white ramp of `|h| / max |h|`.
    Magnitude,
}

impl FromStr for RenderMode {
    type Err = AttributionError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "signed" | "signed-diverging" => Ok(RenderMode::SignedDiverging),
            "magnitude" => Ok(RenderMode::Magnitude),
            other => Err(AttributionError::InvalidParams(format!(
                "unknown render mode {other:?} (expected signed-diverging or magnitude)"
            ))),
        }
    }
}

impl fmt::Display for RenderMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RenderMode::SignedDiverging => "signed-diverging",
            RenderMode::Magnitude => "magnitude",
        })
    }
}

fn to_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

/// 8-bit RGB rendering normalized by the heatmap's own maximum magnitude, so
/// `render(c * h) == render(h)` for every `c > 0`.
pub fn render_heatmap(heatmap: &Heatmap, mode: RenderMode) -> RgbImage {
    let (w, h) = (heatmap.width() as u32, heatmap.height() as u32);
    let max = heatmap
        .scores()
        .iter()
        .fold(0.0f64, |m, v| m.max(v.abs()));
    if max == 0.0 || !max.is_finite() {
        return RgbImage::from_pixel(w, h, MID_GRAY);
    }
    let mut img = RgbImage::new(w, h);
    for (px, &v) in img.pixels_mut().zip(heatmap.scores()) {
        let t = v / max;
        *px = match mode {
            RenderMode::Magnitude => {
                let g = to_u8(255.0 * t.abs());
                Rgb([g, g, g])
            }
            RenderMode::SignedDiverging => {
                let hot = to_u8(128.0 + 127.0 * t.abs());
                let cold = to_u8(128.0 * (1.0 - t.abs()));
                if t >= 0.0 {
                    Rgb([hot, cold, cold])
                } else {
                    Rgb([cold, cold, hot])
                }
            }
        };
    }
    img
}
