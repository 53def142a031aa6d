mod common;

use common::{random_input, random_linear_net, random_net, rng};
use heatmap_eval::attribution::{
    deconv_heatmap, deconv_signal, lrp, lrp_relevances, random_heatmap, render_heatmap,
    sensitivity_heatmap, LrpParams, Method, Norm, RenderMode,
};
use heatmap_eval::netcore::{argmax, gradient_input, Layer, Linear, Model};
use heatmap_eval::perturbeval::{build_region_grid, order_regions};
use heatmap_eval::Tensor;
use proptest::prelude::*;
use rand::Rng;

fn tolerance(f: f64) -> f64 {
    1e-9 * f.abs().max(1.0)
}

fn alpha_strategy() -> impl Strategy<Value = f64> {
    // exactly representable so that alpha + (1 - alpha) == 1
    prop::sample::select(vec![1.0, 1.5, 2.0, 2.5, 3.0, 0.5, 0.75])
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(100))]

    #[test]
    fn alpha_beta_conserves_relevance(seed in any::<u64>(), alpha in alpha_strategy()) {
        let mut r = rng(seed);
        let model = random_net(&mut r, false);
        let x = random_input(&mut r, model.input_shape());
        let trace = model.forward(&x).unwrap();
        let class = r.random_range(0..3);
        let f = trace.logits().data()[class];
        let params = LrpParams::alpha_beta(alpha, 1.0 - alpha).unwrap();
        let rel = lrp_relevances(&model, &trace, class, &params).unwrap();
        for (l, layer_rel) in rel.iter().enumerate() {
            prop_assert!((layer_rel.sum() - f).abs() <= tolerance(f),
                "boundary {l}: {} vs f = {f}", layer_rel.sum());
        }
        for w in rel.windows(2) {
            prop_assert!((w[0].sum() - w[1].sum()).abs() <= tolerance(f));
        }
        let h = lrp(&model, &trace, class, &params).unwrap();
        prop_assert!((h.sum() - f).abs() <= tolerance(f));
        prop_assert_eq!((h.height(), h.width()), (8, 8));
    }

    #[test]
    fn pooled_heatmaps_are_nonnegative(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_net(&mut r, true);
        let x = random_input(&mut r, model.input_shape());
        let trace = model.forward(&x).unwrap();
        let class = argmax(trace.logits().data());
        let g = gradient_input(&model, &trace, class).unwrap();
        let s = deconv_signal(&model, &trace, class).unwrap();
        for q in [Norm::L2, Norm::Inf] {
            prop_assert!(sensitivity_heatmap(&g, q).unwrap().scores().iter().all(|&v| v >= 0.0));
            prop_assert!(deconv_heatmap(&s, q).unwrap().scores().iter().all(|&v| v >= 0.0));
        }
    }

    #[test]
    fn deconv_signal_below_relu_is_nonnegative(seed in any::<u64>()) {
        // a ReLU directly above the input: the signal it hands down is rectified
        let mut r = rng(seed);
        let model = Model::builder(vec![1, 6, 6])
            .relu()
            .conv2d(3, 3, 1, 1)
            .relu()
            .maxpool(2, 2)
            .flatten()
            .linear(5)
            .relu()
            .linear(3)
            .build(&mut r)
            .unwrap();
        let x = Tensor::from_fn(vec![1, 6, 6], |_| r.random_range(-1.0..1.0));
        let trace = model.forward(&x).unwrap();
        let s = deconv_signal(&model, &trace, r.random_range(0..3)).unwrap();
        prop_assert!(s.data().iter().all(|&v| v >= 0.0));
    }

    #[test]
    fn pure_linear_deconv_ignores_the_image_but_lrp_does_not(seed in any::<u64>()) {
        let mut r = rng(seed);
        let model = random_linear_net(&mut r, 6, false);
        let x1 = Tensor::from_fn(vec![1, 1, 6], |_| r.random::<f64>() + 0.1);
        let x2 = Tensor::from_fn(vec![1, 1, 6], |_| r.random::<f64>() + 0.1);
        let model = Model::new(vec![1, 1, 6],
            std::iter::once(Layer::Flatten).chain(model.layers().iter().cloned()).collect()).unwrap();
        let (t1, t2) = (model.forward(&x1).unwrap(), model.forward(&x2).unwrap());
        let class = 0;
        let (f1, f2) = (t1.logits().data()[class], t2.logits().data()[class]);
        let (s1, s2) = (deconv_signal(&model, &t1, class).unwrap(), deconv_signal(&model, &t2, class).unwrap());
        // the logit seed scales the signal; its direction depends on weights only
        if f1 > 0.0 && f2 > 0.0 {
            for (a, b) in s1.data().iter().zip(s2.data()) {
                prop_assert!((a / f1 - b / f2).abs() <= 1e-12 * (a / f1).abs().max(1.0));
            }
        }
        let p = LrpParams::epsilon_small();
        let (h1, h2) = (lrp(&model, &t1, class, &p).unwrap(), lrp(&model, &t2, class, &p).unwrap());
        if f1.abs() > 1e-6 {
            prop_assert_ne!(h1.scores().iter().map(|v| v / f1).collect::<Vec<_>>(),
                            h2.scores().iter().map(|v| v / f2).collect::<Vec<_>>());
        }
    }

    #[test]
    fn rescaling_scores_keeps_argmax_region_and_rendering(seed in any::<u64>(), c in 1e-3f64..1e3) {
        let mut r = rng(seed);
        let model = random_net(&mut r, true);
        let x = random_input(&mut r, model.input_shape());
        let trace = model.forward(&x).unwrap();
        let h = lrp(&model, &trace, 0, &LrpParams::alpha2_beta1()).unwrap();
        let scaled = h.scaled(c);
        let grid = build_region_grid(8, 8, 2).unwrap();
        let a = order_regions(&h, &grid).unwrap();
        let b = order_regions(&scaled, &grid).unwrap();
        prop_assert_eq!(a.entries()[0].0, b.entries()[0].0);
        for mode in [RenderMode::SignedDiverging, RenderMode::Magnitude] {
            prop_assert_eq!(render_heatmap(&h, mode), render_heatmap(&scaled, mode));
        }
    }

    #[test]
    fn epsilon_limit_on_one_linear_layer_is_w_times_x(seed in any::<u64>()) {
        let mut r = rng(seed);
        let n = r.random_range(2..10);
        let w: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let x: Vec<f64> = (0..n).map(|_| r.random_range(-1.0..1.0)).collect();
        let model = Model::new(vec![n], vec![Layer::Linear(Linear::new(n, 1, w.clone(), vec![0.0]).unwrap())]).unwrap();
        let f: f64 = w.iter().zip(&x).map(|(a, b)| a * b).sum();
        prop_assume!(f.abs() > 1e-3);
        let t = model.forward(&Tensor::new(vec![n], x.clone()).unwrap()).unwrap();
        let rel = lrp_relevances(&model, &t, 0, &LrpParams::epsilon(1e-12).unwrap()).unwrap();
        for ((r, wi), xi) in rel[0].data().iter().zip(&w).zip(&x) {
            let want = wi * xi;
            prop_assert!((r - want).abs() < 1e-8 * want.abs(), "{r} vs {want}");
        }
    }

    #[test]
    fn linear_sensitivity_is_weight_norm_everywhere(seed in any::<u64>()) {
        let mut r = rng(seed);
        let (c, h, w) = (3, 4, 5);
        let weights: Vec<f64> = (0..c * h * w).map(|_| r.random_range(-1.0..1.0)).collect();
        let model = Model::new(vec![c, h, w], vec![Layer::Flatten,
            Layer::Linear(Linear::new(c * h * w, 1, weights.clone(), vec![0.3]).unwrap())]).unwrap();
        let x = random_input(&mut r, &[c, h, w]);
        let t = model.forward(&x).unwrap();
        let g = gradient_input(&model, &t, 0).unwrap();
        let heat = sensitivity_heatmap(&g, Norm::L2).unwrap();
        for p in 0..h * w {
            let want = (0..c).map(|ch| weights[ch * h * w + p].powi(2)).sum::<f64>().sqrt();
            prop_assert_eq!(heat.scores()[p], want);
        }
    }
}

#[test]
fn random_heatmap_orderings_differ_between_seeds() {
    let grid = build_region_grid(25, 25, 5).unwrap();
    let a = order_regions(&random_heatmap(25, 25, 1), &grid).unwrap();
    let b = order_regions(&random_heatmap(25, 25, 2), &grid).unwrap();
    assert_ne!(a.regions().collect::<Vec<_>>(), b.regions().collect::<Vec<_>>());
}

#[test]
fn deconv_relu_rectifies_where_gradient_passes() {
    // y = relu(1 * x) then logit = -2 * y; pre-activation positive
    let model = Model::new(
        vec![1],
        vec![
            Layer::Linear(Linear::new(1, 1, vec![1.0], vec![0.0]).unwrap()),
            Layer::ReLU,
            Layer::Linear(Linear::new(1, 1, vec![-2.0], vec![0.0]).unwrap()),
        ],
    )
    .unwrap();
    let t = model.forward(&Tensor::new(vec![1], vec![1.0]).unwrap()).unwrap();
    // gradient: -2 passes the indicator (z > 0)
    assert_eq!(gradient_input(&model, &t, 0).unwrap().data(), &[-2.0]);
    // deconvolution: the seed f = -2, times the transposed weight -2, gives +4 above the ReLU
    let s = deconv_signal(&model, &t, 0).unwrap();
    assert_eq!(s.data(), &[4.0]);
    let t_neg = model.forward(&Tensor::new(vec![1], vec![-1.0]).unwrap()).unwrap();
    // logit 0: the one-hot seed is zero, so every signal vanishes
    assert_eq!(deconv_signal(&model, &t_neg, 0).unwrap().data(), &[0.0]);
}

#[test]
fn deconv_routes_through_argmax_on_positive_identity_path() {
    // pool -> flatten -> identity linear; signal equals f at the winners
    let model = Model::new(
        vec![1, 2, 2],
        vec![
            Layer::MaxPool2d(heatmap_eval::netcore::MaxPool2d::new(2, 2).unwrap()),
            Layer::Flatten,
            Layer::ReLU,
            Layer::Linear(Linear::new(1, 1, vec![1.0], vec![0.0]).unwrap()),
        ],
    )
    .unwrap();
    let x = Tensor::new(vec![1, 2, 2], vec![0.1, 0.7, 0.3, 0.2]).unwrap();
    let t = model.forward(&x).unwrap();
    let s = deconv_signal(&model, &t, 0).unwrap();
    assert_eq!(s.data(), &[0.0, 0.7, 0.0, 0.0]);
    let sens = Method::Sensitivity(Norm::Inf).explain(&model, &t, 0, 0).unwrap();
    assert_eq!(sens.scores(), &[0.0, 1.0, 0.0, 0.0]);
}
