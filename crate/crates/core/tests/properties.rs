mod common;

use common::uniform;
use proptest::prelude::*;
use relight_core::gradcheck::grad_check;
use relight_core::graph::Axis;
use relight_core::losses::{
    advanced_sobel_loss, l1_loss, l2_loss, perceptual_loss, ssim_value, PerceptualNet, SsimParams,
};
use relight_core::train::lr_at;
use relight_core::{psnr, ssim_metric, Graph, Shape, Tensor};

fn cfg(cases: u32) -> ProptestConfig {
    ProptestConfig {
        cases,
        ..ProptestConfig::default()
    }
}

proptest! {
    #![proptest_config(cfg(48))]

    #[test]
    fn conv_output_shape(n in 1usize..3, cin in 1usize..4, cout in 1usize..4, h in 3usize..12, w in 3usize..12,
                         k in prop::sample::select(vec![1usize, 3]), stride in 1usize..3, pad in 0usize..2, seed in any::<u64>()) {
        prop_assume!(h + 2 * pad >= k && w + 2 * pad >= k);
        let mut g = Graph::<f64>::new();
        let x = g.constant(uniform([n, cin, h, w], -1.0, 1.0, seed));
        let wt = g.constant(uniform([cout, cin, k, k], -1.0, 1.0, seed + 1));
        let y = g.conv2d(x, wt, None, stride, pad).unwrap();
        let expect = |d: usize| (d + 2 * pad - k) / stride + 1;
        prop_assert_eq!(g.shape(y), Shape([n, cout, expect(h), expect(w)]));
    }

    #[test]
    fn resampling_shapes(n in 1usize..3, c in 1usize..4, h in 1usize..8, w in 1usize..8) {
        let mut g = Graph::<f64>::new();
        let x = g.constant(uniform([n, c, 2 * h, 2 * w], -1.0, 1.0, 3));
        let d = g.downsample_avg2x(x).unwrap();
        prop_assert_eq!(g.shape(d), Shape([n, c, h, w]));
        let u = g.upsample_bilinear2x(d);
        prop_assert_eq!(g.shape(u), Shape([n, c, 2 * h, 2 * w]));
        let dh = g.diff(x, Axis::Horizontal).unwrap();
        prop_assert_eq!(g.shape(dh), Shape([n, c, 2 * h, 2 * w - 1]));
    }

    #[test]
    fn downsample_preserves_mean_and_upsample_preserves_constants(h in 1usize..6, w in 1usize..6, v in -2.0f64..2.0, seed in any::<u64>()) {
        let t = uniform([1, 2, 2 * h, 2 * w], -1.0, 1.0, seed);
        let mut g = Graph::<f64>::new();
        let x = g.constant(t.clone());
        let d = g.downsample_avg2x(x).unwrap();
        let (m0, m1) = (g.mean(x), g.mean(d));
        prop_assert!((g.scalar(m0).unwrap() - g.scalar(m1).unwrap()).abs() < 1e-12);
        let c = g.constant(Tensor::full(Shape([1, 2, h, w]), v));
        let u = g.upsample_bilinear2x(c);
        prop_assert!(g.value(u).data().iter().all(|&e| (e - v).abs() < 1e-12));
    }

    #[test]
    fn conv_is_linear_in_its_input(seed in any::<u64>(), a in -2.0f64..2.0) {
        let x1 = uniform([1, 2, 6, 6], -1.0, 1.0, seed);
        let x2 = uniform([1, 2, 6, 6], -1.0, 1.0, seed ^ 1);
        let w = uniform([3, 2, 3, 3], -1.0, 1.0, seed ^ 2);
        let mut g = Graph::<f64>::new();
        let (v1, v2, wv) = (g.constant(x1), g.constant(x2), g.constant(w));
        let s1 = g.scale(v1, a);
        let sum = g.add(s1, v2).unwrap();
        let lhs = g.conv2d(sum, wv, None, 1, 1).unwrap();
        let c1 = g.conv2d(v1, wv, None, 1, 1).unwrap();
        let c2 = g.conv2d(v2, wv, None, 1, 1).unwrap();
        let c1 = g.scale(c1, a);
        let rhs = g.add(c1, c2).unwrap();
        prop_assert!(g.value(lhs).max_abs_diff(g.value(rhs)).unwrap() < 1e-12);
    }

    #[test]
    fn relu_grad_check_away_from_kink(seed in any::<u64>()) {
        let mut x = uniform([2, 3, 4, 4], -1.0, 1.0, seed);
        for v in x.data_mut() {
            if v.abs() < 1e-3 {
                *v = 0.5;
            }
        }
        let err = grad_check(&x, 1e-5, None, |g, v| {
            let r = g.relu(v);
            let sq = g.mul(r, r)?;
            Ok(g.sum(sq))
        }).unwrap();
        prop_assert!(err <= 1e-4, "{}", err);
    }

    #[test]
    fn forward_replay_is_bitwise_identical(seed in any::<u64>()) {
        let x = uniform([1, 3, 8, 8], 0.0, 1.0, seed);
        let run = || {
            let mut g = Graph::<f64>::new();
            let v = g.param(x.clone());
            let y = g.upsample_bilinear2x(v);
            let y = g.mul(y, y).unwrap();
            let l = g.mean(y);
            let grad = g.backward(l).unwrap().get(v).unwrap().clone();
            (g.scalar(l).unwrap(), grad)
        };
        let (a, b) = (run(), run());
        prop_assert_eq!(a.0.to_bits(), b.0.to_bits());
        prop_assert_eq!(a.1, b.1);
    }

    #[test]
    fn lr_is_non_increasing(total in 1usize..500, a in 0usize..500, b in 0usize..500) {
        let (lo, hi) = (a.min(b).min(total), a.max(b).min(total));
        prop_assert!(lr_at(hi, total, 2e-3, 5e-5).unwrap() <= lr_at(lo, total, 2e-3, 5e-5).unwrap());
    }

    #[test]
    fn psnr_decreases_with_perturbation_scale(seed in any::<u64>(), s in 0.01f64..0.2, k in 1.1f64..3.0) {
        let t = uniform([1, 3, 8, 8], 0.3, 0.7, seed);
        let d = uniform([1, 3, 8, 8], -1.0, 1.0, seed ^ 9);
        let perturb = |scale: f64| {
            let mut p = t.clone();
            p.data_mut().iter_mut().zip(d.data()).for_each(|(v, e)| *v += scale * 0.1 * e);
            p
        };
        let near = psnr(&perturb(s), &t, 1.0).unwrap();
        let far = psnr(&perturb(s * k), &t, 1.0).unwrap();
        prop_assert!(far < near);
    }
}

proptest! {
    #![proptest_config(cfg(12))]

    #[test]
    fn pairwise_losses_are_symmetric(seed in any::<u64>()) {
        let a = uniform([1, 3, 16, 16], 0.0, 1.0, seed);
        let b = uniform([1, 3, 16, 16], 0.0, 1.0, seed ^ 7);
        let net = PerceptualNet::new();
        let mut g = Graph::<f64>::new();
        let (x, y) = (g.constant(a), g.constant(b));
        let pairs = [
            (l1_loss(&mut g, x, y).unwrap(), l1_loss(&mut g, y, x).unwrap()),
            (l2_loss(&mut g, x, y).unwrap(), l2_loss(&mut g, y, x).unwrap()),
            (ssim_value(&mut g, x, y, &SsimParams::default()).unwrap(), ssim_value(&mut g, y, x, &SsimParams::default()).unwrap()),
            (advanced_sobel_loss(&mut g, x, y).unwrap(), advanced_sobel_loss(&mut g, y, x).unwrap()),
            (perceptual_loss(&mut g, x, y, &net).unwrap(), perceptual_loss(&mut g, y, x, &net).unwrap()),
        ];
        for (i, (p, q)) in pairs.into_iter().enumerate() {
            let (p, q) = (g.scalar(p).unwrap(), g.scalar(q).unwrap());
            prop_assert!((p - q).abs() <= 1e-12 * p.abs().max(1.0), "{} vs {}", p, q);
            // Index 2 is SSIM, a similarity that may go negative.
            prop_assert!(i == 2 || p >= 0.0);
        }
    }

    #[test]
    fn ssim_of_an_image_with_itself_is_one(seed in any::<u64>(), lo in 0.0f64..0.5) {
        let a = uniform([2, 3, 16, 16], lo, 1.0, seed);
        let mut g = Graph::<f64>::new();
        let x = g.constant(a);
        let s = ssim_value(&mut g, x, x, &SsimParams::default()).unwrap();
        prop_assert!((g.scalar(s).unwrap() - 1.0).abs() <= 1e-9);
    }

    #[test]
    fn metrics_are_symmetric_and_batch_order_invariant(seed in any::<u64>()) {
        let a = uniform([2, 3, 16, 16], 0.0, 1.0, seed);
        let b = uniform([2, 3, 16, 16], 0.0, 1.0, seed ^ 3);
        let swap = |t: &Tensor<f64>| {
            let (i0, i1) = (t.batch_item(0).unwrap(), t.batch_item(1).unwrap());
            Tensor::stack(&[&i1, &i0]).unwrap()
        };
        let s = ssim_metric(&a, &b).unwrap();
        prop_assert!((s - ssim_metric(&b, &a).unwrap()).abs() < 1e-12);
        prop_assert!((s - ssim_metric(&swap(&a), &swap(&b)).unwrap()).abs() < 1e-12);
        let p = psnr(&a, &b, 1.0).unwrap();
        prop_assert!((p - psnr(&b, &a, 1.0).unwrap()).abs() < 1e-12);
        prop_assert!((p - psnr(&swap(&a), &swap(&b), 1.0).unwrap()).abs() < 1e-9);
    }
}
