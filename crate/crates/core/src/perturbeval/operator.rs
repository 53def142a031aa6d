use std::fmt;
use std::str::FromStr;

use rand::Rng;

use crate::datahub::{sample_dirichlet, DatasetStats};
use crate::tensor::Tensor;

use super::{PerturbError, Region};

/// Standard deviation of the Blur operator, in pixels.
pub const BLUR_SIGMA: f64 = 3.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Operator {
    Uniform,
    Dirichlet,
    Constant,
    Blur,
}

impl Operator {
    pub const ALL: [Operator; 4] = [
        Operator::Uniform,
        Operator::Dirichlet,
        Operator::Constant,
        Operator::Blur,
    ];

    pub fn is_stochastic(self) -> bool {
        matches!(self, Operator::Uniform | Operator::Dirichlet)
    }
}

impl fmt::Display for Operator {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Operator::Uniform => "uniform",
            Operator::Dirichlet => "dirichlet",
            Operator::Constant => "constant",
            Operator::Blur => "blur",
        })
    }
}

impl FromStr for Operator {
    type Err = PerturbError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        Operator::ALL
            .into_iter()
            .find(|op| op.to_string() == s.to_ascii_lowercase())
            .ok_or_else(|| {
                PerturbError::InvalidConfig(format!(
                    "unknown operator {s:?} (expected uniform, dirichlet, constant or blur)"
                ))
            })
    }
}

/// Normalized Gaussian weights for offsets `-r..=r`, `r = ceil(3 sigma)`.
pub fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let radius = (3.0 * sigma).ceil() as i64;
    let raw: Vec<f64> = (-radius..=radius)
        .map(|d| (-((d * d) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    let total: f64 = raw.iter().sum();
    raw.into_iter().map(|v| v / total).collect()
}

/// Returns a copy of `image` with `region` replaced by the operator's output.
pub fn perturb_region<R: Rng + ?Sized>(
    image: &Tensor,
    region: &Region,
    operator: Operator,
    rng: &mut R,
    stats: &DatasetStats,
) -> Result<Tensor, PerturbError> {
    let mut out = image.clone();
    perturb_region_in_place(&mut out, region, operator, rng, stats)?;
    Ok(out)
}

/// In-place variant used by the trajectories.
pub fn perturb_region_in_place<R: Rng + ?Sized>(
    image: &mut Tensor,
    region: &Region,
    operator: Operator,
    rng: &mut R,
    stats: &DatasetStats,
) -> Result<(), PerturbError> {
    let (c, h, w) = image
        .chw()
        .filter(|_| image.shape().len() == 3)
        .ok_or_else(|| PerturbError::Shape(format!("expected [C, H, W], got {:?}", image.shape())))?;
    if !region.fits(h, w) {
        return Err(PerturbError::RegionOutOfBounds {
            region: *region,
            height: h,
            width: w,
        });
    }
    let plane = h * w;
    match operator {
        Operator::Uniform => {
            let d = image.data_mut();
            for (y, x) in region.pixels() {
                for ch in 0..c {
                    d[ch * plane + y * w + x] = rng.random::<f64>();
                }
            }
        }
        Operator::Dirichlet => {
            let params = stats.dirichlet.as_ref().ok_or(PerturbError::MissingStats {
                operator,
                what: "a Dirichlet color model",
            })?;
            if params.channels() != c {
                return Err(PerturbError::Shape(format!(
                    "color model has {} channels, image has {c}",
                    params.channels()
                )));
            }
            let d = image.data_mut();
            for (y, x) in region.pixels() {
                let color = sample_dirichlet(params, rng)?;
                for (ch, v) in color.into_iter().enumerate() {
                    d[ch * plane + y * w + x] = v.clamp(0.0, 1.0);
                }
            }
        }
        Operator::Constant => {
            let mean = stats.mean_image.as_ref().ok_or(PerturbError::MissingStats {
                operator,
                what: "a mean image",
            })?;
            if mean.shape() != image.shape() {
                return Err(PerturbError::Shape(format!(
                    "mean image is {:?}, image is {:?}",
                    mean.shape(),
                    image.shape()
                )));
            }
            let m = mean.data();
            let d = image.data_mut();
            for (y, x) in region.pixels() {
                for ch in 0..c {
                    let i = ch * plane + y * w + x;
                    d[i] = m[i];
                }
            }
        }
        Operator::Blur => {
            let blurred = blur_region(image.data(), c, h, w, region, &gaussian_kernel(BLUR_SIGMA));
            let d = image.data_mut();
            let mut k = 0;
            for ch in 0..c {
                for (y, x) in region.pixels() {
                    d[ch * plane + y * w + x] = blurred[k].clamp(0.0, 1.0);
                    k += 1;
                }
            }
        }
    }
    Ok(())
}

/// Separable edge-clamped Gaussian blur of the whole image, evaluated only
/// at the region's pixels. Output is channel-major, then region row-major.
fn blur_region(
    d: &[f64],
    c: usize,
    h: usize,
    w: usize,
    region: &Region,
    kernel: &[f64],
) -> Vec<f64> {
    let radius = (kernel.len() / 2) as isize;
    let clamp = |v: isize, n: usize| v.clamp(0, n as isize - 1) as usize;
    let plane = h * w;
    let row_lo = region.row as isize - radius;
    let row_hi = (region.row + region.height) as isize + radius;
    let mut out = Vec::with_capacity(c * region.area());
    for ch in 0..c {
        let p = &d[ch * plane..(ch + 1) * plane];
        // horizontal pass over every row the vertical pass can reach
        let rows: Vec<Vec<f64>> = (row_lo..row_hi)
            .map(|yy| {
                let y = clamp(yy, h);
                (region.col..region.col + region.width)
                    .map(|x| {
                        kernel
                            .iter()
                            .enumerate()
                            .map(|(k, wk)| wk * p[y * w + clamp(x as isize + k as isize - radius, w)])
                            .sum()
                    })
                    .collect()
            })
            .collect();
        for ry in 0..region.height {
            for rx in 0..region.width {
                let v: f64 = kernel
                    .iter()
                    .enumerate()
                    .map(|(k, wk)| wk * rows[ry + k][rx])
                    .sum();
                out.push(v);
            }
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datahub::{Dataset, Split};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn full(h: usize, w: usize) -> Region {
        Region {
            row: 0,
            col: 0,
            height: h,
            width: w,
        }
    }

    /// Whole-image blur computed directly from the 2-D kernel.
    fn naive_blur(img: &Tensor, sigma: f64) -> Vec<f64> {
        let (c, h, w) = img.chw().unwrap();
        let r = (3.0 * sigma).ceil() as isize;
        let mut out = vec![0.0; img.len()];
        for ch in 0..c {
            for y in 0..h as isize {
                for x in 0..w as isize {
                    let (mut acc, mut norm) = (0.0, 0.0);
                    for dy in -r..=r {
                        for dx in -r..=r {
                            let wt = (-((dy * dy + dx * dx) as f64) / (2.0 * sigma * sigma)).exp();
                            let yy = (y + dy).clamp(0, h as isize - 1) as usize;
                            let xx = (x + dx).clamp(0, w as isize - 1) as usize;
                            acc += wt * img.data()[ch * h * w + yy * w + xx];
                            norm += wt;
                        }
                    }
                    out[ch * h * w + y as usize * w + x as usize] = acc / norm;
                }
            }
        }
        out
    }

    #[test]
    fn constant_operator_copies_the_dataset_mean() {
        let ds = Dataset::new(
            vec![Tensor::filled(vec![3, 4, 4], 0.0), Tensor::filled(vec![3, 4, 4], 1.0)],
            vec![0, 0],
            Split::Test,
            vec!["x".into()],
        )
        .unwrap();
        let stats = DatasetStats::from_dataset(&ds).unwrap();
        let region = Region { row: 1, col: 2, height: 2, width: 2 };
        let img = Tensor::filled(vec![3, 4, 4], 0.9);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = perturb_region(&img, &region, Operator::Constant, &mut rng, &stats).unwrap();
        for ch in 0..3 {
            for y in 0..4 {
                for x in 0..4 {
                    let v = out.data()[ch * 16 + y * 4 + x];
                    let inside = (1..3).contains(&y) && (2..4).contains(&x);
                    assert_eq!(v, if inside { 0.5 } else { 0.9 });
                }
            }
        }
    }

    #[test]
    fn blur_fixes_constant_images() {
        let img = Tensor::filled(vec![3, 12, 12], 0.37);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let out = perturb_region(&img, &full(12, 12), Operator::Blur, &mut rng, &DatasetStats::default())
            .unwrap();
        for v in out.data() {
            assert!((v - 0.37).abs() < 1e-15, "{v}");
        }
    }

    #[test]
    fn blur_matches_two_dimensional_kernel() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let img = Tensor::from_fn(vec![2, 15, 11], |_| rng.random::<f64>());
        let region = Region { row: 4, col: 3, height: 9, width: 7 };
        let out = perturb_region(&img, &region, Operator::Blur, &mut rng, &DatasetStats::default())
            .unwrap();
        let want = naive_blur(&img, BLUR_SIGMA);
        for (i, (o, x)) in out.data().iter().zip(img.data()).enumerate() {
            let p = i % (15 * 11);
            let (y, xx) = (p / 11, p % 11);
            let inside = (4..13).contains(&y) && (3..10).contains(&xx);
            if inside {
                assert!((o - want[i]).abs() < 1e-12);
            } else {
                assert_eq!(o, x);
            }
        }
    }

    #[test]
    fn uniform_region_mean_is_one_half() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let region = full(100, 100);
        let img = Tensor::zeros(vec![3, 100, 100]);
        let out = perturb_region(&img, &region, Operator::Uniform, &mut rng, &DatasetStats::default())
            .unwrap();
        for ch in 0..3 {
            let m: f64 = out.data()[ch * 10_000..(ch + 1) * 10_000].iter().sum::<f64>() / 1e4;
            assert!((m - 0.5).abs() < 0.02, "{m}");
        }
    }

    #[test]
    fn missing_stats_are_reported() {
        let img = Tensor::zeros(vec![1, 4, 4]);
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for op in [Operator::Constant, Operator::Dirichlet] {
            assert!(matches!(
                perturb_region(&img, &full(2, 2), op, &mut rng, &DatasetStats::default()),
                Err(PerturbError::MissingStats { .. })
            ));
        }
    }

    #[test]
    fn operator_names_round_trip() {
        for op in Operator::ALL {
            assert_eq!(op.to_string().parse::<Operator>().unwrap(), op);
        }
        assert!("noise".parse::<Operator>().is_err());
    }
}
