mod common;

use common::*;
use genprompt::heatmap::{
    consensus, similarity_map, spatialize_and_upsample, ImageFeatures, Polarity, TextFeature,
};
use genprompt::image_ops::ImageTensor;
use genprompt::metrics::{adaptive_f, e_measure, mae, s_measure};
use genprompt::pmg::{reweight, select_final, SelectionNorm};
use genprompt::spatial_attention::{
    attention, attention_probabilities, dual_path_step, AttentionMode, BlockConfig, HeadProjections,
    IdentityFfn, TokenFeatures,
};
use genprompt::visual_prompts::{extract_points, max_iou_box, box_fill_iou, connected_components, BinaryMask};
use ndarray::{Array1, Array2, Array3};
use proptest::prelude::*;
use rand::seq::SliceRandom;
use rand::Rng;
use std::sync::Arc;

fn heads_and_width() -> impl Strategy<Value = (usize, usize, usize)> {
    (1usize..=12, prop::sample::select(vec![1usize, 2, 4]), 1usize..=6).prop_map(|(l, h, per)| (l, h, h * per))
}

fn attention_mode() -> impl Strategy<Value = AttentionMode> {
    prop::sample::select(AttentionMode::ALL.to_vec())
}

fn setup(seed: u64, l: usize, heads: usize, d: usize) -> (Array2<f64>, HeadProjections) {
    let mut r = rng(seed);
    let x = random_matrix(&mut r, l, d, 2.0);
    let proj = HeadProjections::new(
        random_matrix(&mut r, d, d, 1.0),
        random_matrix(&mut r, d, d, 1.0),
        random_matrix(&mut r, d, d, 1.0),
        heads,
    )
    .unwrap();
    (x, proj)
}

fn heat_like(grid: Array2<f64>) -> genprompt::heatmap::Heatmap {
    let (h, w) = grid.dim();
    let base = spatialize_and_upsample(Array1::zeros(4).view(), 2, 1.0, (h, w)).unwrap();
    genprompt::heatmap::Heatmap { grid, ..base }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn softmax_rows_are_distributions(seed in any::<u64>(), (l, heads, d) in heads_and_width(), mode in attention_mode()) {
        let (x, proj) = setup(seed, l, heads, d);
        let probs = attention_probabilities(&TokenFeatures::new(x, 1).unwrap(), &proj, mode).unwrap();
        prop_assert_eq!(probs.len(), heads);
        for p in probs {
            for row in p.rows() {
                prop_assert!(row.iter().all(|&v| v >= 0.0));
                prop_assert!((row.sum() - 1.0).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn attention_is_token_equivariant(seed in any::<u64>(), (l, heads, d) in heads_and_width(), mode in attention_mode()) {
        let (x, proj) = setup(seed, l, heads, d);
        let mut perm: Vec<usize> = (0..l).collect();
        perm.shuffle(&mut rng(seed ^ 1));
        let xp = Array2::from_shape_fn((l, d), |(i, j)| x[[perm[i], j]]);
        let out = attention(&TokenFeatures::new(x, 1).unwrap(), &proj, mode).unwrap();
        let out_p = attention(&TokenFeatures::new(xp, 1).unwrap(), &proj, mode).unwrap();
        for i in 0..l {
            for j in 0..out.ncols() {
                prop_assert!((out_p[[i, j]] - out[[perm[i], j]]).abs() < 1e-9);
            }
        }
    }

    #[test]
    fn shared_projections_collapse_modes(seed in any::<u64>(), (l, heads, d) in heads_and_width()) {
        let mut r = rng(seed);
        let x = TokenFeatures::new(random_matrix(&mut r, l, d, 1.0), 1).unwrap();
        let w = random_matrix(&mut r, d, d, 1.0);
        let wv = random_matrix(&mut r, d, d, 1.0);
        let kq = HeadProjections::new(w.clone(), w.clone(), wv, heads).unwrap();
        prop_assert_eq!(
            attention(&x, &kq, AttentionMode::Kkv).unwrap(),
            attention(&x, &kq, AttentionMode::Kqv).unwrap()
        );
        let all = HeadProjections::new(w.clone(), w.clone(), w, heads).unwrap();
        let kkv = attention(&x, &all, AttentionMode::Kkv).unwrap();
        prop_assert_eq!(&kkv, &attention(&x, &all, AttentionMode::Vvv).unwrap());
        prop_assert_eq!(&kkv, &attention(&x, &all, AttentionMode::Kqv).unwrap());
    }

    #[test]
    fn dual_path_step_is_pure(seed in any::<u64>(), (l, heads, d) in heads_and_width(), m in 1usize..5, delta in 1usize..5) {
        let (x, proj) = setup(seed, l, heads, d);
        let s = TokenFeatures::new(x, m).unwrap();
        let hat = (m > delta).then(|| TokenFeatures::new(s.tokens().mapv(|v| v * 0.5), m).unwrap());
        let cfg = BlockConfig::new(delta, AttentionMode::Kkv, Arc::new(IdentityFfn)).unwrap();
        let (s_copy, hat_copy) = (s.clone(), hat.clone());
        let a = dual_path_step(&s, hat.as_ref(), m, &cfg, &proj).unwrap();
        let b = dual_path_step(&s, hat.as_ref(), m, &cfg, &proj).unwrap();
        prop_assert_eq!(&s, &s_copy);
        prop_assert_eq!(&hat, &hat_copy);
        prop_assert_eq!(&a, &b);
        prop_assert_eq!(a.1.is_some(), m >= delta);
    }

    #[test]
    fn cosine_ignores_positive_scale(seed in any::<u64>(), g in 2usize..6, c in 2usize..10, lambda in prop::sample::select(vec![0.5, 3.0])) {
        let mut r = rng(seed);
        let patches = random_matrix(&mut r, g * g, c, 1.0);
        let text = Array1::from_shape_simple_fn(c, || r.random_range(-1.0..1.0));
        let base = similarity_map(
            &ImageFeatures::new(patches.clone(), g).unwrap(),
            &TextFeature::new(text.clone(), "k", 1, Polarity::Foreground).unwrap(),
        ).unwrap();
        let scaled_img = similarity_map(
            &ImageFeatures::new(&patches * lambda, g).unwrap(),
            &TextFeature::new(text.clone(), "k", 1, Polarity::Foreground).unwrap(),
        ).unwrap();
        let scaled_txt = similarity_map(
            &ImageFeatures::new(patches, g).unwrap(),
            &TextFeature::new(&text * lambda, "k", 1, Polarity::Foreground).unwrap(),
        ).unwrap();
        for i in 0..g * g {
            prop_assert!((base.values[i] - scaled_img.values[i]).abs() < 1e-6);
            prop_assert!((base.values[i] - scaled_txt.values[i]).abs() < 1e-6);
            prop_assert!(base.values[i].abs() <= 1.0 + 1e-6);
        }
    }

    #[test]
    fn consensus_ignores_chain_order(seed in any::<u64>(), n in 1usize..6) {
        let mut r = rng(seed);
        let img = ImageFeatures::new(random_matrix(&mut r, 9, 4, 1.0), 3).unwrap();
        let mut maps: Vec<_> = (0..n)
            .map(|j| {
                let t = Array1::from_shape_simple_fn(4, || r.random_range(0.1..1.0));
                similarity_map(&img, &TextFeature::new(t, "k", j + 1, Polarity::Foreground).unwrap()).unwrap()
            })
            .collect();
        let a = consensus(&maps, Polarity::Foreground).unwrap();
        maps.reverse();
        let b = consensus(&maps, Polarity::Foreground).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn heatmap_is_unit_range_with_raw_argmax(seed in any::<u64>(), g in 2usize..6, h in 4usize..40, w in 4usize..40) {
        let mut r = rng(seed);
        let si = Array1::from_shape_simple_fn(g * g, || r.random_range(-1.0..1.0));
        let hm = spatialize_and_upsample(si.view(), g, 2.0, (h, w)).unwrap();
        prop_assert!(hm.grid.iter().all(|v| (0.0..=1.0).contains(v)));
        let raw = bilinear_oracle(&si.into_shape_with_order((g, g)).unwrap(), h, w);
        let argmax = |a: &Array2<f64>| a.indexed_iter().fold(((0, 0), f64::MIN), |b, (i, &v)| if v > b.1 { (i, v) } else { b }).0;
        prop_assert_eq!(hm.grid[argmax(&raw)], 1.0);
    }

    #[test]
    fn negatives_match_positives_in_count(seed in any::<u64>(), side in 1usize..14, thr in 0.5f64..1.0) {
        let mut r = rng(seed);
        let lattice = Array2::from_shape_simple_fn((side, side), || r.random_range(0.0..1.0));
        let (h, w) = (r.random_range(4..80), r.random_range(4..80));
        let p = extract_points(lattice.view(), thr, (h, w)).unwrap();
        prop_assert_eq!(p.positives.len(), p.negatives.len());
        prop_assert!(!p.positives.is_empty());
        for q in p.positives.iter().chain(&p.negatives) {
            prop_assert!(q.x >= 0.0 && q.x <= w as f64 && q.y >= 0.0 && q.y <= h as f64);
        }
        // every positive value is at least every negative value
        let value = |q: &genprompt::visual_prompts::Point| {
            lattice[[(q.y / h as f64 * side as f64) as usize, (q.x / w as f64 * side as f64) as usize]]
        };
        let min_pos = p.positives.iter().map(value).fold(f64::MAX, f64::min);
        let max_neg = p.negatives.iter().map(value).fold(f64::MIN, f64::max);
        prop_assert!(min_pos >= max_neg || side * side < 2 * p.positives.len());
    }

    #[test]
    fn points_scale_with_image(seed in any::<u64>(), side in 1usize..10, k in 2usize..4) {
        let mut r = rng(seed);
        let lattice = Array2::from_shape_simple_fn((side, side), || r.random_range(0.0..1.0));
        let (h, w) = (r.random_range(4..40), r.random_range(4..40));
        let a = extract_points(lattice.view(), 0.9, (h, w)).unwrap();
        let b = extract_points(lattice.view(), 0.9, (h * k, w * k)).unwrap();
        for (p, q) in a.positives.iter().chain(&a.negatives).zip(b.positives.iter().chain(&b.negatives)) {
            prop_assert!((p.x * k as f64 - q.x).abs() < 1e-9 && (p.y * k as f64 - q.y).abs() < 1e-9);
        }
    }

    #[test]
    fn max_iou_box_beats_every_component(seed in any::<u64>(), h in 1usize..16, w in 1usize..16, p in 0.05f64..0.7) {
        let m = random_mask(&mut rng(seed), h, w, p);
        match max_iou_box(&m) {
            None => prop_assert!(m.is_empty()),
            Some(b) => {
                prop_assert!(b.x0 < b.x1 && b.y0 < b.y1);
                let best = box_fill_iou(&b, &m);
                prop_assert!(best > 0.0);
                for c in connected_components(&m) {
                    prop_assert!(box_fill_iou(&c.bbox, &m) <= best);
                }
            }
        }
    }

    #[test]
    fn reweight_is_monotone_in_heat(seed in any::<u64>(), h in 1usize..12, w in 1usize..12, wp in 0.0f64..=1.0) {
        let mut r = rng(seed);
        let x = ImageTensor::new(Array3::from_shape_simple_fn((h, w, 3), || r.random_range(0.0..1.0))).unwrap();
        let lo = Array2::from_shape_simple_fn((h, w), || r.random_range(0.0..1.0));
        let hi = lo.mapv(|v| (v + r.random_range(0.0f64..0.5)).min(1.0));
        let a = reweight(&x, &heat_like(hi.clone()), wp).unwrap();
        let b = reweight(&x, &heat_like(lo), wp).unwrap();
        prop_assert!(a.0.iter().zip(b.0.iter()).all(|(p, q)| p >= q));
        prop_assert_eq!(reweight(&x, &heat_like(hi), 0.0).unwrap(), x);
    }

    #[test]
    fn unique_selection_survives_permutation(seed in any::<u64>(), n in 1usize..7, h in 1usize..6, w in 1usize..6) {
        let mut r = rng(seed);
        let masks: Vec<BinaryMask> = (0..n).map(|_| random_mask(&mut r, h, w, 0.5)).collect();
        let (i, mean) = select_final(&masks, SelectionNorm::L1).unwrap();
        let d = |m: &BinaryMask| m.to_f64().iter().zip(mean.iter()).map(|(a, b)| (a - b).abs()).sum::<f64>();
        let best = d(&masks[i]);
        let unique = masks.iter().filter(|m| (d(m) - best).abs() < 1e-9).count() == 1;
        let mut shuffled = masks.clone();
        shuffled.shuffle(&mut r);
        let (j, _) = select_final(&shuffled, SelectionNorm::L1).unwrap();
        if unique {
            prop_assert_eq!(&shuffled[j], &masks[i]);
        } else {
            prop_assert!((d(&shuffled[j]) - best).abs() < 1e-9);
        }
    }

    #[test]
    fn mae_of_binary_complement_sums_to_one(seed in any::<u64>(), h in 1usize..40, w in 1usize..40) {
        let mut r = rng(seed);
        let gt = random_mask(&mut r, h, w, 0.4);
        let pred = random_mask(&mut r, h, w, 0.5).to_f64();
        let comp = pred.mapv(|v| 1.0 - v);
        prop_assert_eq!(mae(pred.view(), &gt).unwrap() + mae(comp.view(), &gt).unwrap(), 1.0);
    }

    #[test]
    fn metrics_survive_joint_flip(seed in any::<u64>(), h in 2usize..24, w in 2usize..24, binary in any::<bool>()) {
        let mut r = rng(seed);
        let gt = random_mixed_mask(&mut r, h, w);
        let pred = if binary {
            random_mask(&mut r, h, w, 0.5).to_f64()
        } else {
            Array2::from_shape_simple_fn((h, w), || r.random_range(0.0..1.0))
        };
        let (fp, fg) = flip_horizontal(&pred, &gt);
        let pairs = [
            (mae(pred.view(), &gt).unwrap(), mae(fp.view(), &fg).unwrap()),
            (adaptive_f(pred.view(), &gt).unwrap(), adaptive_f(fp.view(), &fg).unwrap()),
            (e_measure(pred.view(), &gt).unwrap(), e_measure(fp.view(), &fg).unwrap()),
            (s_measure(pred.view(), &gt).unwrap(), s_measure(fp.view(), &fg).unwrap()),
        ];
        for (a, b) in pairs {
            prop_assert!((a - b).abs() < 1e-12, "{} vs {}", a, b);
        }
    }
}
