mod common;

use std::f64::consts::PI;

use proptest::prelude::*;
use radar_obb::autolabel::*;
use radar_obb::dsp::polar_to_cartesian;
use radar_obb::formats::{FrameData, ProcessParams};
use radar_obb::geometry::box_iou;
use radar_obb::sim::{simulate_scene, Scene};
use radar_obb::{angle_diff, BoxSet, OrientedBox, RadarConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use common::replay_soft_nms;

fn arb_box() -> impl Strategy<Value = OrientedBox> {
    (-30.0..30.0, -30.0..30.0, 0.5..3.0, 1.0..6.0, -PI..PI, 0.0..1.0)
        .prop_map(|(x, y, w, h, t, s)| OrientedBox::new(x, y, w, h, t).with_score(s))
}

#[test]
fn composition_table_is_closed() {
    let all = SymmetryTransform::all();
    let probe = OrientedBox::new(3.0, 1.0, 1.0, 2.0, 0.3);
    for a in all {
        assert!(all.contains(&a.inverse()));
        for b in all {
            let ab = a.compose(b);
            assert!(all.contains(&ab));
            let direct = a.apply_box(&b.apply_box(&probe));
            let composed = ab.apply_box(&probe);
            assert!((direct.cx - composed.cx).abs() < 1e-12 && (direct.cy - composed.cy).abs() < 1e-12);
            assert!(angle_diff(direct.theta, composed.theta).abs() < 1e-12);
        }
    }
}

#[test]
fn sixteen_identical_copies_fuse_to_one() {
    let b = OrientedBox::new(12.0, -3.0, 1.8, 4.5, 0.4).with_score(0.9);
    let sets: Vec<BoxSet> = (0..16).map(|_| BoxSet::new(5, vec![b])).collect();
    let fused = fuse_detection_sets(&sets, DEFAULT_FUSION_THRESHOLD, 0.1).unwrap();
    assert_eq!(fused.frame_id, 5);
    assert_eq!(fused.boxes, vec![b]);
}

#[test]
fn disjoint_sets_fuse_to_union() {
    let a = OrientedBox::new(10.0, 0.0, 1.8, 4.5, 0.0).with_score(0.7);
    let b = OrientedBox::new(-10.0, 5.0, 1.8, 4.5, 1.0).with_score(0.8);
    let fused = fuse_detection_sets(&[BoxSet::new(1, vec![a]), BoxSet::new(1, vec![b])], 0.9, 0.1).unwrap();
    assert_eq!(fused.boxes, vec![b, a]);
    assert!(fuse_detection_sets(&[BoxSet::new(1, vec![a]), BoxSet::new(2, vec![b])], 0.9, 0.1).is_err());
}

#[test]
fn tta_fusion_matches_replay() {
    let gt = BoxSet::new(
        0,
        vec![OrientedBox::new(14.0, 3.0, 1.8, 4.5, 0.5), OrientedBox::new(20.0, -8.0, 1.9, 4.4, 2.0)],
    );
    let detectors = [NoisyDetector { center_std: 0.4, angle_std: 0.2, ..Default::default() }; 2];
    for seed in 0..5 {
        let sets = tta_detection_sets(&gt, &detectors, seed);
        assert_eq!(sets.len(), 16);
        let all: Vec<OrientedBox> = sets.iter().flat_map(|s| s.boxes.iter().copied()).collect();
        let scores: Vec<f64> = all.iter().map(|b| b.score.unwrap()).collect();
        let iou = |i: usize, j: usize| box_iou(&all[i], &all[j]);
        let expected = replay_soft_nms(&scores, &iou, 0.9, 0.1);
        let fused = fuse_detection_sets(&sets, 0.9, 0.1).unwrap();
        assert_eq!(fused.len(), expected.len());
        for (b, (i, s)) in fused.boxes.iter().zip(expected) {
            assert_eq!((b.cx, b.cy, b.theta), (all[i].cx, all[i].cy, all[i].theta));
            assert!((b.score.unwrap() - s).abs() < 1e-12);
        }
    }
}

#[test]
fn auc_closed_forms() {
    for n in [1usize, 4, 100, 10_000] {
        let auc = cumulative_auc(&vec![2.5; n]).unwrap();
        assert!((auc - (n as f64 + 1.0) / (2.0 * n as f64)).abs() < 1e-12);
        let mut hot = vec![0.0; n];
        hot[n / 2] = 7.0;
        assert!((cumulative_auc(&hot).unwrap() - 1.0 / n as f64).abs() < 1e-12);
    }
    assert!(cumulative_auc(&[]).is_err());
}

#[test]
fn concentrating_mass_lowers_auc() {
    // move mass step by step from a flat spread into one pixel
    let n = 50;
    let mut prev = f64::INFINITY;
    for k in 0..n {
        let mut v = vec![1.0; n];
        for x in v.iter_mut().take(k) {
            *x = 0.0;
        }
        v[n - 1] += k as f64;
        let auc = cumulative_auc(&v).unwrap();
        assert!(auc <= prev + 1e-12, "k={k}: {auc} > {prev}");
        prev = auc;
    }
}

fn car_bev() -> (radar_obb::BevImage, OrientedBox) {
    let cfg = RadarConfig::default();
    let car = OrientedBox::new(18.0, 4.0, 1.8, 4.5, 0.6);
    let scene = Scene { boxes: vec![car], seed: 12, ..Default::default() };
    let cube = simulate_scene(&scene, &cfg, Some(20.0)).unwrap();
    let params = ProcessParams::default();
    let frame = FrameData::new(&cube, &params);
    let bev = polar_to_cartesian(frame.music_map().unwrap(), &params.bev).unwrap();
    (bev, car)
}

#[test]
fn response_filter_separates_car_from_noise() {
    let (bev, car) = car_bev();
    let empty = OrientedBox::new(25.0, -15.0, 1.8, 4.5, 0.6);
    let dets = BoxSet::new(0, vec![car.with_score(0.9), empty.with_score(0.9)]);
    let c_car = 1.0 - response_auc(&bev, &car, DEFAULT_ENLARGE).unwrap();
    let c_empty = 1.0 - response_auc(&bev, &empty, DEFAULT_ENLARGE).unwrap();
    assert!(c_car > c_empty, "{c_car} vs {c_empty}");
    let kept = filter_low_response(&dets, &bev, DEFAULT_MIN_CONCENTRATION, DEFAULT_ENLARGE);
    assert_eq!(kept.boxes, vec![car.with_score(0.9)], "concentrations {c_car} / {c_empty}");

    assert!(filter_low_response(&BoxSet::new(0, vec![]), &bev, 0.6, 0.2).is_empty());
    assert_eq!(filter_low_response(&dets, &bev, 0.0, 0.2).len(), 2);
}

proptest! {
    #[test]
    fn transform_round_trip(boxes in prop::collection::vec(arb_box(), 0..6), k in 0u8..4, m in any::<bool>()) {
        let set = BoxSet::new(9, boxes);
        let t = SymmetryTransform::new(k, m);
        let back = inverse_transform_boxes(&transform_boxes(&set, t), t);
        prop_assert_eq!(back.frame_id, 9);
        for (a, b) in back.boxes.iter().zip(&set.boxes) {
            prop_assert!((a.cx - b.cx).abs() <= 1e-12 && (a.cy - b.cy).abs() <= 1e-12);
            prop_assert!(angle_diff(a.theta, b.theta).abs() <= 1e-12);
            prop_assert_eq!((a.w, a.h, a.score), (b.w, b.h, b.score));
        }
    }

    #[test]
    fn fusion_bounds(sets in prop::collection::vec(prop::collection::vec(arb_box(), 0..5), 1..5)) {
        let sets: Vec<BoxSet> = sets.into_iter().map(|b| BoxSet::new(0, b)).collect();
        let total: usize = sets.iter().map(BoxSet::len).sum();
        let max_in = sets.iter().flat_map(|s| s.boxes.iter().map(|b| b.score.unwrap())).fold(0.0, f64::max);
        let fused = fuse_detection_sets(&sets, 0.9, 0.1).unwrap();
        prop_assert!(fused.len() <= total);
        for b in &fused.boxes {
            prop_assert!(b.score.unwrap() <= max_in);
        }
    }

    #[test]
    fn auc_bounded_and_scale_invariant(v in prop::collection::vec(0.0..10.0f64, 1..200), s in 1e-3..1e3f64) {
        let a = cumulative_auc(&v).unwrap();
        prop_assert!((0.0..=1.0).contains(&a));
        let scaled: Vec<f64> = v.iter().map(|x| x * s).collect();
        prop_assert!((cumulative_auc(&scaled).unwrap() - a).abs() <= 1e-9);
    }

    #[test]
    fn stricter_threshold_keeps_subset(seed in 0u64..1000, lo in 0.0..1.0f64, hi in 0.0..1.0f64) {
        let (lo, hi) = (lo.min(hi), lo.max(hi));
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut bev = radar_obb::BevImage {
            values: ndarray::Array2::zeros((60, 60)),
            meters_per_pixel: 0.5,
            extent_forward: 30.0,
            extent_left: 15.0,
            extent_right: 15.0,
        };
        bev.values.mapv_inplace(|_| rand::Rng::random::<f64>(&mut rng).powi(8));
        let boxes: Vec<OrientedBox> = (0..8)
            .map(|_| OrientedBox::new(
                rand::Rng::random_range(&mut rng, 5.0..25.0),
                rand::Rng::random_range(&mut rng, -10.0..10.0),
                2.0, 4.0, 0.3).with_score(0.5))
            .collect();
        let dets = BoxSet::new(0, boxes);
        let loose = filter_low_response(&dets, &bev, lo, 0.2);
        let strict = filter_low_response(&dets, &bev, hi, 0.2);
        for b in &strict.boxes {
            prop_assert!(loose.boxes.contains(b));
        }
    }
}
