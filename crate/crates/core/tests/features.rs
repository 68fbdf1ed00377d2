mod common;

use common::*;
use detalloc_core::features::{conv_layer, cross_correlate, max_pool, run_stack};
use detalloc_core::{FeatureTensor, FilterBank, Image};
use proptest::prelude::*;

fn tensor(w: usize, h: usize, planes: Vec<Vec<f64>>) -> FeatureTensor {
    FeatureTensor::new(0, w, h, planes).unwrap()
}

#[test]
fn conv_and_pool_match_direct_evaluation_over_three_layers() {
    let mut r = rng(6);
    for _ in 0..10 {
        let (w, h) = (16, 16);
        let specs = [
            random_layer(&mut r, 1, 4, true),
            random_layer(&mut r, 4, 5, true),
            random_layer(&mut r, 5, 3, false),
        ];
        let mut planes = vec![random_plane(&mut r, w * h)];
        let (mut cw, mut ch) = (w, h);
        let mut t = tensor(w, h, planes.clone());
        for (l, spec) in specs.iter().enumerate() {
            let got = conv_layer(&t, spec, l + 1).unwrap();
            let want: Vec<Vec<f64>> = conv_oracle(&planes, cw, ch, spec)
                .into_iter()
                .map(|p| p.into_iter().map(|v| leaky_oracle(v, spec.slope)).collect())
                .collect();
            for (g, o) in got.channels().iter().zip(&want) {
                for (a, b) in g.iter().zip(o) {
                    assert!(rel_close(*a, *b, 1e-9), "layer {}: {a} vs {b}", l + 1);
                }
            }
            planes = want;
            t = got;
            if spec.pool {
                let pooled = max_pool(&t).unwrap();
                for (g, src) in pooled.channels().iter().zip(t.channels()) {
                    assert_eq!(g, &pool_oracle(src, cw, ch).0);
                }
                let oracle: Vec<_> = planes.iter().map(|p| pool_oracle(p, cw, ch)).collect();
                cw = oracle[0].1;
                ch = oracle[0].2;
                planes = oracle.into_iter().map(|p| p.0).collect();
                t = pooled;
            }
        }
    }
}

#[test]
fn stop_layer_one_keeps_input_size() {
    let img = Image::from_fn(416, 416, |x, y| ((x * 7 + y * 3) % 256) as u8).unwrap();
    let bank = FilterBank::default_bank();
    let (t, info) = run_stack(&img, &bank, 1, 416).unwrap();
    assert_eq!((t.width(), t.height()), (416, 416));
    assert_eq!(t.num_channels(), bank.layers[0].filters.len());
    assert_eq!(info.layer_dim, 416.0);
}

#[test]
fn layer_three_after_two_pools_is_104() {
    let img = Image::from_fn(416, 416, |x, y| ((x ^ y) & 0xff) as u8).unwrap();
    let (t, info) = run_stack(&img, &FilterBank::default_bank(), 3, 416).unwrap();
    assert_eq!((t.width(), t.height()), (104, 104));
    assert_eq!(info.layer_dim, 104.0);
}

#[test]
fn dimension_law_on_aspect_scaled_input() {
    let img = Image::from_fn(500, 375, |x, y| ((x + 2 * y) % 256) as u8).unwrap();
    let bank = FilterBank::default_bank();
    for l in 1..=bank.depth() {
        let (t, _) = run_stack(&img, &bank, l, 416).unwrap();
        let k = bank.pools_before(l) as u32;
        assert_eq!(t.width(), 416 >> k);
        let short = 312usize >> k;
        assert!(t.height().abs_diff(short) <= 1, "layer {l}: {} vs {short}", t.height());
    }
}

#[test]
fn layer_beyond_depth_is_rejected() {
    let img = Image::filled(32, 32, 9).unwrap();
    let bank = FilterBank::default_bank();
    assert!(run_stack(&img, &bank, bank.depth() + 1, 416).is_err());
    assert!(run_stack(&img, &bank, 0, 416).is_err());
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn cross_correlation_is_linear(seed in any::<u64>(), a in -3.0f64..3.0, b in -3.0f64..3.0) {
        let mut r = rng(seed);
        let spec = random_layer(&mut r, 2, 3, false);
        let x: Vec<Vec<f64>> = (0..2).map(|_| random_plane(&mut r, 256)).collect();
        let y: Vec<Vec<f64>> = (0..2).map(|_| random_plane(&mut r, 256)).collect();
        let mix: Vec<Vec<f64>> = x.iter().zip(&y)
            .map(|(p, q)| p.iter().zip(q).map(|(u, v)| a * u + b * v).collect())
            .collect();
        let cx = cross_correlate(&tensor(16, 16, x), &spec).unwrap();
        let cy = cross_correlate(&tensor(16, 16, y), &spec).unwrap();
        let cm = cross_correlate(&tensor(16, 16, mix), &spec).unwrap();
        for n in 0..3 {
            for i in 0..256 {
                let want = a * cx[n][i] + b * cy[n][i];
                prop_assert!(rel_close(cm[n][i], want, 1e-9));
            }
        }
    }

    #[test]
    fn permuting_filters_permutes_channels(seed in any::<u64>()) {
        let mut r = rng(seed);
        let spec = random_layer(&mut r, 1, 5, false);
        let t = tensor(16, 16, vec![random_plane(&mut r, 256)]);
        let perm = [3usize, 0, 4, 1, 2];
        let mut shuffled = spec.clone();
        shuffled.filters = perm.iter().map(|&i| spec.filters[i].clone()).collect();
        let out = conv_layer(&t, &spec, 1).unwrap();
        let out_p = conv_layer(&t, &shuffled, 1).unwrap();
        for (k, &i) in perm.iter().enumerate() {
            prop_assert_eq!(out_p.channel(k), out.channel(i));
        }
    }

    #[test]
    fn pooled_value_is_window_max(seed in any::<u64>(), w in 2usize..21, h in 2usize..21) {
        let mut r = rng(seed);
        let plane = random_plane(&mut r, w * h);
        let p = max_pool(&tensor(w, h, vec![plane.clone()])).unwrap();
        let (want, ow, oh) = pool_oracle(&plane, w, h);
        prop_assert_eq!((p.width(), p.height()), (ow, oh));
        prop_assert_eq!(p.channel(0), &want[..]);
        for y in 0..oh {
            for x in 0..ow {
                let v = p.channel(0)[y * ow + x];
                for (dx, dy) in [(0, 0), (1, 0), (0, 1), (1, 1)] {
                    prop_assert!(v >= plane[(2 * y + dy) * w + 2 * x + dx]);
                }
            }
        }
    }
}
