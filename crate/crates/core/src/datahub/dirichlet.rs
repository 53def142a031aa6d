//! Color model for the Dirichlet perturbation operator.
//!
//! A pixel with `C` channel values `x_c in [0, 1]` is embedded on the
//! `C`-simplex as `u = (x_1, ..., x_C, C - sum x) / C`. A single global
//! Dirichlet over `u` is fitted by moment matching; samples are mapped back
//! with `x_c = C u_c` and rejected if any channel exceeds 1. For RGB this is
//! a four-component Dirichlet; for grayscale it reduces to a Beta
//! distribution.

use rand::Rng;
use rand_distr::{Distribution, Gamma};

use super::{DataError, Dataset};

/// Consecutive rejected draws after which sampling gives up.
pub const REJECTION_WINDOW: usize = 1000;

#[derive(Debug, Clone, PartialEq)]
pub struct DirichletParams {
    alpha: Vec<f64>,
}

impl DirichletParams {
    pub fn new(alpha: Vec<f64>) -> Result<Self, DataError> {
        if alpha.len() < 2 {
            return Err(DataError::InvalidParams(format!(
                "need at least 2 components, got {}",
                alpha.len()
            )));
        }
        if let Some(a) = alpha.iter().find(|a| !(a.is_finite() && **a > 0.0)) {
            return Err(DataError::InvalidParams(format!(
                "concentration {a} is not strictly positive"
            )));
        }
        Ok(Self { alpha })
    }

    pub fn alpha(&self) -> &[f64] {
        &self.alpha
    }

    /// Number of color channels produced by a draw.
    pub fn channels(&self) -> usize {
        self.alpha.len() - 1
    }

    pub fn concentration(&self) -> f64 {
        self.alpha.iter().sum()
    }

    /// Mean of the simplex vector.
    pub fn mean(&self) -> Vec<f64> {
        let a0 = self.concentration();
        self.alpha.iter().map(|a| a / a0).collect()
    }
}

/// Moment-matching fit from points on the simplex (each summing to 1).
pub fn fit_dirichlet_simplex<I, P>(points: I) -> Result<DirichletParams, DataError>
where
    I: IntoIterator<Item = P>,
    P: AsRef<[f64]>,
{
    // Welford accumulation keeps constant data at exactly zero variance
    let mut n = 0usize;
    let mut mean: Vec<f64> = Vec::new();
    let mut m2: Vec<f64> = Vec::new();
    for p in points {
        let p = p.as_ref();
        if n == 0 {
            mean = vec![0.0; p.len()];
            m2 = vec![0.0; p.len()];
        } else if p.len() != mean.len() {
            return Err(DataError::InvalidParams(format!(
                "point of dimension {} among points of dimension {}",
                p.len(),
                mean.len()
            )));
        }
        n += 1;
        for (k, &v) in p.iter().enumerate() {
            let delta = v - mean[k];
            mean[k] += delta / n as f64;
            m2[k] += delta * (v - mean[k]);
        }
    }
    if n < 2 {
        return Err(DataError::Degenerate(format!("{n} points")));
    }
    // unbiased variance per component
    let var: Vec<f64> = m2.iter().map(|q| (q / (n as f64 - 1.0)).max(0.0)).collect();
    let total_var: f64 = var.iter().sum();
    if total_var <= 0.0 {
        return Err(DataError::Degenerate("zero variance".into()));
    }
    let spread: f64 = mean.iter().map(|m| m * (1.0 - m)).sum();
    let a0 = spread / total_var - 1.0;
    if !(a0.is_finite() && a0 > 0.0) {
        return Err(DataError::Degenerate(format!(
            "implied concentration {a0} is not positive"
        )));
    }
    let alpha: Vec<f64> = mean.iter().map(|m| m * a0).collect();
    if let Some((k, _)) = alpha.iter().enumerate().find(|(_, a)| **a <= 0.0) {
        return Err(DataError::Degenerate(format!("component {k} has zero mean")));
    }
    DirichletParams::new(alpha)
}

/// Fits the pixel color model over every pixel of every image.
pub fn fit_dirichlet(dataset: &Dataset) -> Result<DirichletParams, DataError> {
    let shape = dataset.image_shape().ok_or(DataError::Empty)?;
    let (c, plane) = (shape[0], shape[1..].iter().product::<usize>());
    let cf = c as f64;
    let points = dataset.images().iter().flat_map(|img| {
        let d = img.data();
        (0..plane).map(move |p| {
            let mut u = Vec::with_capacity(c + 1);
            let mut total = 0.0;
            for ch in 0..c {
                let x = d[ch * plane + p];
                total += x;
                u.push(x / cf);
            }
            u.push((cf - total) / cf);
            u
        })
    });
    fit_dirichlet_simplex(points)
}

/// Draws one pixel color (one value per channel, each in `[0, 1]`).
pub fn sample_dirichlet<R: Rng + ?Sized>(
    params: &DirichletParams,
    rng: &mut R,
) -> Result<Vec<f64>, DataError> {
    let gammas = params
        .alpha
        .iter()
        .map(|&a| Gamma::new(a, 1.0).map_err(|e| DataError::InvalidParams(e.to_string())))
        .collect::<Result<Vec<_>, _>>()?;
    let c = params.channels();
    let cf = c as f64;
    let mut draw = vec![0.0; gammas.len()];
    for _ in 0..REJECTION_WINDOW {
        for (d, g) in draw.iter_mut().zip(&gammas) {
            *d = g.sample(rng);
        }
        let total: f64 = draw.iter().sum();
        if !(total > 0.0 && total.is_finite()) {
            continue;
        }
        let rgb: Vec<f64> = draw[..c].iter().map(|g| cf * g / total).collect();
        if rgb.iter().all(|&v| v <= 1.0) {
            return Ok(rgb);
        }
    }
    Err(DataError::Rejection {
        rejected: REJECTION_WINDOW,
        window: REJECTION_WINDOW,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::datahub::Split;
    use crate::tensor::Tensor;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    /// Independent Dirichlet draw via normalized gammas, straight from the definition.
    fn reference_draw(alpha: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
        let g: Vec<f64> = alpha
            .iter()
            .map(|&a| Gamma::new(a, 1.0).unwrap().sample(rng))
            .collect();
        let s: f64 = g.iter().sum();
        g.into_iter().map(|v| v / s).collect()
    }

    #[test]
    fn recovers_known_parameters() {
        let truth = [2.0, 2.0, 2.0, 6.0];
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let pts: Vec<Vec<f64>> = (0..100_000).map(|_| reference_draw(&truth, &mut rng)).collect();
        let fit = fit_dirichlet_simplex(&pts).unwrap();
        for (a, t) in fit.alpha().iter().zip(&truth) {
            assert!((a - t).abs() / t < 0.05, "fitted {a} vs {t}");
        }
    }

    #[test]
    fn simplex_centered_data_fits_uniform_mean() {
        // x_c = 3/4 in every channel embeds at (1/4, 1/4, 1/4, 1/4)
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let images: Vec<Tensor> = (0..50)
            .map(|_| Tensor::from_fn(vec![3, 4, 4], |_| 0.7 + 0.1 * rng.random::<f64>()))
            .collect();
        let labels = vec![0; images.len()];
        let ds = Dataset::new(images, labels, Split::Train, vec!["a".into()]).unwrap();
        let fit = fit_dirichlet(&ds).unwrap();
        assert_eq!(fit.channels(), 3);
        for m in fit.mean() {
            assert!((m - 0.25).abs() < 0.01, "{m}");
        }
    }

    #[test]
    fn zero_variance_is_degenerate() {
        let pts = vec![vec![0.25; 4]; 10];
        assert!(matches!(
            fit_dirichlet_simplex(&pts),
            Err(DataError::Degenerate(_))
        ));
    }

    #[test]
    fn samples_stay_in_the_unit_cube() {
        let params = DirichletParams::new(vec![0.8, 1.5, 0.6, 2.0]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20_000 {
            let rgb = sample_dirichlet(&params, &mut rng).unwrap();
            assert!(rgb.iter().all(|v| (0.0..=1.0).contains(v)));
            assert!(rgb.iter().sum::<f64>() <= 3.0);
        }
    }

    #[test]
    fn same_seed_same_stream() {
        let params = DirichletParams::new(vec![3.0, 3.0, 3.0, 3.0]).unwrap();
        let draw = |seed| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            (0..100)
                .map(|_| sample_dirichlet(&params, &mut rng).unwrap())
                .collect::<Vec<_>>()
        };
        assert_eq!(draw(7), draw(7));
        assert_ne!(draw(7), draw(8));
    }

    #[test]
    fn large_symmetric_concentration_clusters_at_the_mean() {
        let params = DirichletParams::new(vec![5000.0; 4]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        for _ in 0..1000 {
            let rgb = sample_dirichlet(&params, &mut rng).unwrap();
            assert!(rgb.iter().all(|v| (v - 0.75).abs() < 0.1), "{rgb:?}");
        }
    }

    #[test]
    fn sample_moments_match_analytic_moments() {
        // Acceptance is ~1 here (P(u_k > 1/3) is negligible), so the
        // unconditioned moments apply: E[3u] = 3a/a0, Var[3u] = 9 a (a0-a) / (a0^2 (a0+1)).
        let alpha = [2.0, 3.0, 1.5, 30.0];
        let a0: f64 = alpha.iter().sum();
        let params = DirichletParams::new(alpha.to_vec()).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let n = 100_000;
        let mut s = [0.0; 3];
        let mut s2 = [0.0; 3];
        for _ in 0..n {
            let rgb = sample_dirichlet(&params, &mut rng).unwrap();
            for c in 0..3 {
                s[c] += rgb[c];
                s2[c] += rgb[c] * rgb[c];
            }
        }
        for c in 0..3 {
            let mean = s[c] / n as f64;
            let var = s2[c] / n as f64 - mean * mean;
            let want_mean = 3.0 * alpha[c] / a0;
            let want_var = 9.0 * alpha[c] * (a0 - alpha[c]) / (a0 * a0 * (a0 + 1.0));
            let se = (want_var / n as f64).sqrt();
            assert!((mean - want_mean).abs() < 5.0 * se, "mean {mean} vs {want_mean}");
            assert!((var - want_var).abs() / want_var < 0.03, "var {var} vs {want_var}");
        }
    }

    #[test]
    fn pathological_fit_errors_instead_of_spinning() {
        // mass concentrated on the red channel: 3u_1 > 1 almost surely
        let params = DirichletParams::new(vec![1e4, 1e-3, 1e-3, 1e-3]).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert!(matches!(
            sample_dirichlet(&params, &mut rng),
            Err(DataError::Rejection { .. })
        ));
    }
}
