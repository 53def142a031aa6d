mod common;

use common::{planted_linear, random_input, rng};
use heatmap_eval::attribution::{random_heatmap, Heatmap};
use heatmap_eval::datahub::DatasetStats;
use heatmap_eval::perturbeval::{
    abpc, aopc, build_region_grid, evaluate_curves, lerf_curve, mean_and_sem, morf_curve,
    order_regions, Direction, Operator, PerturbationConfig, Region, RegionOrdering,
};
use heatmap_eval::Tensor;
use proptest::prelude::*;
use rand::Rng;

const H: usize = 8;
const W: usize = 8;

fn constant_stats(mean: Tensor) -> DatasetStats {
    DatasetStats {
        mean_image: Some(mean),
        dirichlet: None,
    }
}

fn config(operator: Operator, window: usize, steps: usize, seed: u64) -> PerturbationConfig {
    PerturbationConfig {
        operator,
        steps,
        repeats: 3,
        seed,
        window,
    }
}

/// Contribution heatmap `w_p (x_p - m_p)`: exactly the logit drop from
/// replacing pixel p by the mean.
fn contribution_heatmap(weights: &[f64], x: &Tensor, mean: &Tensor) -> Heatmap {
    let scores = weights
        .iter()
        .zip(x.data().iter().zip(mean.data()))
        .map(|(w, (a, m))| w * (a - m))
        .collect();
    Heatmap::new(H, W, scores, "planted").unwrap()
}

/// Naive MoRF AOPC: rebuild every perturbed image from scratch and take
/// the dot product directly.
fn naive_aopc(weights: &[f64], bias: f64, x: &Tensor, mean: &Tensor, order: &[Region], steps: usize) -> f64 {
    let f = |img: &[f64]| weights.iter().zip(img).map(|(w, v)| w * v).sum::<f64>() + bias;
    let f0 = f(x.data());
    let mut total = 0.0;
    for k in 0..=steps {
        let mut img = x.data().to_vec();
        for r in &order[..k] {
            for y in r.row..r.row + r.height {
                for c in r.col..r.col + r.width {
                    img[y * W + c] = mean.data()[y * W + c];
                }
            }
        }
        total += f0 - f(&img);
    }
    total / (steps + 1) as f64
}

fn ordering_for(h: &Heatmap, window: usize) -> RegionOrdering {
    order_regions(h, &build_region_grid(H, W, window).unwrap()).unwrap()
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn aopc_matches_naive_enumeration(seed in any::<u64>(), window in 1usize..=4, bias in -2.0f64..2.0) {
        let mut r = rng(seed);
        let (model, w) = planted_linear(&mut r, H, W, bias);
        let x = random_input(&mut r, &[1, H, W]);
        let mean = random_input(&mut r, &[1, H, W]);
        let ordering = ordering_for(&contribution_heatmap(&w, &x, &mean), window);
        let steps = r.random_range(0..=ordering.len());
        let cfg = config(Operator::Constant, window, steps, seed);
        let curve = morf_curve(&model, &x, 0, &ordering, &cfg, &constant_stats(mean.clone())).unwrap();
        let order: Vec<Region> = ordering.regions().copied().collect();
        let want = naive_aopc(&w, bias, &x, &mean, &order, steps);
        prop_assert!((curve.aopc() - want).abs() <= 1e-12 * want.abs().max(1.0), "{} vs {want}", curve.aopc());
    }

    #[test]
    fn aopc_ignores_a_constant_logit_shift(seed in any::<u64>(), shift in -5.0f64..5.0) {
        let mut r = rng(seed);
        let (base, w) = planted_linear(&mut r, H, W, 0.0);
        let mut shifted = base.clone();
        shifted.update_params(|p| p[0].bias[0] = shift);
        let x = random_input(&mut r, &[1, H, W]);
        let ordering = ordering_for(&random_heatmap(H, W, seed), 2);
        let stats = constant_stats(random_input(&mut r, &[1, H, W]));
        let _ = w;
        for op in [Operator::Constant, Operator::Uniform, Operator::Blur] {
            let cfg = config(op, 2, 10, seed);
            let a = morf_curve(&base, &x, 7, &ordering, &cfg, &stats).unwrap().aopc();
            let b = morf_curve(&shifted, &x, 7, &ordering, &cfg, &stats).unwrap().aopc();
            prop_assert!((a - b).abs() <= 1e-12 * a.abs().max(1.0));
        }
    }

    #[test]
    fn reversing_the_ordering_negates_abpc(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (model, _) = planted_linear(&mut r, H, W, 0.3);
        let x = random_input(&mut r, &[1, H, W]);
        let stats = constant_stats(random_input(&mut r, &[1, H, W]));
        let ordering = ordering_for(&random_heatmap(H, W, seed), 2);
        let reversed = ordering_for(&random_heatmap(H, W, seed).scaled(-1.0), 2);
        for op in [Operator::Constant, Operator::Uniform] {
            let cfg = config(op, 2, 9, seed);
            let m = morf_curve(&model, &x, 0, &ordering, &cfg, &stats).unwrap();
            let l = lerf_curve(&model, &x, 0, &ordering, &cfg, &stats).unwrap();
            let rm = morf_curve(&model, &x, 0, &reversed, &cfg, &stats).unwrap();
            let rl = lerf_curve(&model, &x, 0, &reversed, &cfg, &stats).unwrap();
            let a = abpc(&[l], &[m]).unwrap();
            let b = abpc(&[rl], &[rm]).unwrap();
            prop_assert!((a + b).abs() <= 1e-12 * a.abs().max(1.0), "{a} vs {b}");
        }
    }

    #[test]
    fn replacing_by_zero_drops_the_exact_region_contribution(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (model, w) = planted_linear(&mut r, H, W, 0.0);
        let x = random_input(&mut r, &[1, H, W]);
        let stats = constant_stats(Tensor::zeros(vec![1, H, W]));
        let ordering = ordering_for(&random_heatmap(H, W, seed), 4);
        let cfg = config(Operator::Constant, 4, ordering.len(), seed);
        let curve = morf_curve(&model, &x, 0, &ordering, &cfg, &stats).unwrap();
        for (k, region) in ordering.regions().enumerate() {
            let contribution: f64 = region.pixels().map(|(y, c)| w[y * W + c] * x.data()[y * W + c]).sum();
            let drop = curve.values[k] - curve.values[k + 1];
            prop_assert!((drop - contribution).abs() <= 1e-12);
        }
        prop_assert!(curve.values.last().unwrap().abs() <= 1e-12);
    }

    #[test]
    fn zero_steps_give_zero_area(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (model, _) = planted_linear(&mut r, H, W, 0.1);
        let x = random_input(&mut r, &[1, H, W]);
        let stats = constant_stats(random_input(&mut r, &[1, H, W]));
        let ordering = ordering_for(&random_heatmap(H, W, seed), 3);
        let cfg = config(Operator::Uniform, 3, 0, seed);
        let m = morf_curve(&model, &x, 0, &ordering, &cfg, &stats).unwrap();
        let l = lerf_curve(&model, &x, 0, &ordering, &cfg, &stats).unwrap();
        prop_assert_eq!(m.aopc(), 0.0);
        prop_assert_eq!(abpc(&[l], &[m]).unwrap(), 0.0);
    }

    #[test]
    fn a_single_region_makes_lerf_equal_morf(seed in any::<u64>(), op in prop::sample::select(Operator::ALL.to_vec())) {
        let mut r = rng(seed);
        let (model, _) = planted_linear(&mut r, H, W, 0.1);
        let x = random_input(&mut r, &[1, H, W]);
        let stats = constant_stats(random_input(&mut r, &[1, H, W]));
        let h = random_heatmap(H, W, seed);
        let ordering = order_regions(&h, &[Region { row: 2, col: 1, height: 5, width: 6 }]).unwrap();
        let cfg = config(op, 5, 1, seed);
        if op == Operator::Dirichlet {
            prop_assert!(morf_curve(&model, &x, 0, &ordering, &cfg, &stats).is_err());
        } else {
            let m = morf_curve(&model, &x, 0, &ordering, &cfg, &stats).unwrap();
            let l = lerf_curve(&model, &x, 0, &ordering, &cfg, &stats).unwrap();
            prop_assert_eq!(m.values, l.values);
        }
    }
}

#[test]
fn true_ordering_beats_random_in_most_trials() {
    let trials = 200;
    let mut wins = 0;
    for t in 0..trials {
        let mut r = rng(1000 + t);
        let (model, w) = planted_linear(&mut r, H, W, 0.0);
        let x = random_input(&mut r, &[1, H, W]);
        let mean = random_input(&mut r, &[1, H, W]);
        let stats = constant_stats(mean.clone());
        let cfg = config(Operator::Constant, 2, 5, t);
        let truth = ordering_for(&contribution_heatmap(&w, &x, &mean), 2);
        let random = ordering_for(&random_heatmap(H, W, t), 2);
        let a = morf_curve(&model, &x, 0, &truth, &cfg, &stats).unwrap().aopc();
        let b = morf_curve(&model, &x, 0, &random, &cfg, &stats).unwrap().aopc();
        if a > b {
            wins += 1;
        }
    }
    assert!(wins * 100 >= 95 * trials, "true ordering won {wins} of {trials}");
}

#[test]
fn random_orderings_have_vanishing_abpc() {
    let mut r = rng(5);
    let (model, _) = planted_linear(&mut r, H, W, 0.0);
    let x = random_input(&mut r, &[1, H, W]);
    let stats = constant_stats(random_input(&mut r, &[1, H, W]));
    let cfg = config(Operator::Constant, 2, 8, 0);
    let values: Vec<f64> = (0..400)
        .map(|s| {
            let o = ordering_for(&random_heatmap(H, W, s), 2);
            let m = morf_curve(&model, &x, 0, &o, &cfg, &stats).unwrap();
            let l = lerf_curve(&model, &x, 0, &o, &cfg, &stats).unwrap();
            abpc(&[l], &[m]).unwrap()
        })
        .collect();
    let (mean, sem) = mean_and_sem(&values);
    let sem = sem.unwrap();
    let spread = values.iter().map(|v| v.abs()).fold(0.0, f64::max);
    assert!(mean.abs() <= 4.0 * sem, "mean {mean}, sem {sem}");
    assert!(mean.abs() < 0.1 * spread, "mean {mean}, largest |ABPC| {spread}");
}

#[test]
fn curves_are_deterministic_across_pool_sizes() {
    let mut r = rng(9);
    let (model, _) = planted_linear(&mut r, H, W, 0.0);
    let images: Vec<Tensor> = (0..12).map(|_| random_input(&mut r, &[1, H, W])).collect();
    let orderings: Vec<RegionOrdering> = (0..12).map(|s| ordering_for(&random_heatmap(H, W, s), 2)).collect();
    let items: Vec<(u64, &Tensor, &RegionOrdering)> = images
        .iter()
        .zip(&orderings)
        .enumerate()
        .map(|(i, (x, o))| (i as u64, x, o))
        .collect();
    let stats = constant_stats(Tensor::filled(vec![1, H, W], 0.5));
    let cfg = config(Operator::Uniform, 2, 10, 42);
    let run = |threads: usize| {
        rayon::ThreadPoolBuilder::new()
            .num_threads(threads)
            .build()
            .unwrap()
            .install(|| evaluate_curves(&model, &items, Direction::Morf, &cfg, &stats).unwrap())
    };
    let one = run(1);
    assert_eq!(one, run(4));
    assert_eq!(one, run(1));
    assert_eq!(aopc(&one).unwrap().to_bits(), aopc(&run(3)).unwrap().to_bits());
}
