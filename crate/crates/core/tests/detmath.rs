mod common;

use std::f64::consts::PI;

use ndarray::Array2;
use proptest::prelude::*;
use radar_obb::detmath::*;
use radar_obb::{angle_diff, OrientedBox};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::{brute_assign, central_diff, golden_section, rel_err};

fn boxes_at(deg: &[f64]) -> Vec<OrientedBox> {
    deg.iter()
        .map(|d| OrientedBox::new(1.0, 2.0, 1.8, 4.5, d.to_radians()))
        .collect()
}

#[test]
fn kmeans_recovers_clustered_modes() {
    let n = Normal::new(0.0, 3f64.to_radians()).unwrap();
    let modes = [30.0f64, 115.0, 136.0];
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let mut b = Vec::new();
    for m in modes {
        for _ in 0..60 {
            b.push(OrientedBox::new(0.0, 0.0, 1.8, 4.5, m.to_radians() + n.sample(&mut rng)));
        }
    }
    let c = kmeans_orientations(&b, &KmeansParams::default()).unwrap();
    for (got, want) in c.iter().zip(modes) {
        assert!(orientation_distance(*got, want.to_radians()) < 2f64.to_radians(), "{c:?}");
    }
}

#[test]
fn kmeans_exact_and_k1() {
    let c = kmeans_orientations(&boxes_at(&[40.0, 100.0, 100.0, 150.0]), &KmeansParams::default()).unwrap();
    for (got, want) in c.iter().zip([40.0f64, 100.0, 150.0]) {
        assert!((got - want.to_radians()).abs() < 1e-9);
    }
    let c = kmeans_orientations(&boxes_at(&[60.0, 64.0]), &KmeansParams { k: 1, ..Default::default() }).unwrap();
    assert!((c[0] - 62f64.to_radians()).abs() < 1e-9);
    assert!(kmeans_orientations(&boxes_at(&[1.0, 2.0]), &KmeansParams::default()).is_err());
}

#[test]
fn mean_size_examples() {
    let one = [OrientedBox::new(0.0, 0.0, 1.8, 4.7, 0.0)];
    assert_eq!(mean_anchor_size(&one).unwrap(), (1.8, 4.7));
    let two = [OrientedBox::new(0.0, 0.0, 1.0, 4.0, 0.0), OrientedBox::new(0.0, 0.0, 3.0, 6.0, 1.0)];
    assert_eq!(mean_anchor_size(&two).unwrap(), (2.0, 5.0));
    assert!(mean_anchor_size(&[]).is_err());

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let many: Vec<OrientedBox> = (0..1000).map(|_| common::random_box(&mut rng, 10.0)).collect();
    let (mut sw, mut sh) = (0.0, 0.0);
    for b in &many {
        sw += b.w;
        sh += b.h;
    }
    let (w, h) = mean_anchor_size(&many).unwrap();
    assert!((w - sw / 1000.0).abs() < 1e-9 && (h - sh / 1000.0).abs() < 1e-9);
}

#[test]
fn anchor_grid_layout() {
    let cfg = AnchorConfig { grid_shape: (2, 2), cell_size: 0.5, origin: (1.0, -1.0), ..Default::default() };
    let a = build_anchor_grid(&cfg).unwrap();
    assert_eq!(a.len(), 12);
    for r in 0..2 {
        for c in 0..2 {
            for k in 0..3 {
                let x = &a[(r * 2 + c) * 3 + k];
                assert!((x.cx - (1.0 + (r as f64 + 0.5) * 0.5)).abs() < 1e-12);
                assert!((x.cy - (-1.0 + (c as f64 + 0.5) * 0.5)).abs() < 1e-12);
                assert_eq!(x.theta, cfg.anchor_orientations[k]);
            }
        }
    }
    let one = build_anchor_grid(&AnchorConfig { grid_shape: (1, 1), ..Default::default() }).unwrap();
    assert_eq!(one.len(), 3);
}

fn random_anchors(rng: &mut ChaCha8Rng, n: usize) -> Vec<Anchor> {
    (0..n)
        .map(|_| Anchor {
            cx: rng.random_range(0.0..20.0),
            cy: rng.random_range(0.0..20.0),
            w: 1.5,
            h: 4.2,
            theta: [0.5, 2.0, 2.4][rng.random_range(0..3)],
        })
        .collect()
}

#[test]
fn assignment_matches_exhaustive_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    for _ in 0..40 {
        let anchors = random_anchors(&mut rng, 300);
        let gts: Vec<OrientedBox> = (0..5)
            .map(|_| {
                OrientedBox::new(
                    rng.random_range(0.0..20.0),
                    rng.random_range(0.0..20.0),
                    rng.random_range(1.0..2.5),
                    rng.random_range(3.0..5.5),
                    rng.random_range(-PI..PI),
                )
            })
            .collect();
        assert_eq!(assign_targets(&anchors, &gts).unwrap(), brute_assign(&anchors, &gts));
    }
}

#[test]
fn assignment_examples() {
    let a = Anchor { cx: 3.0, cy: 4.0, w: 1.5, h: 4.2, theta: 0.2 };
    let b = Anchor { cx: 9.0, ..a };
    assert_eq!(assign_targets(&[b, a], &[a.as_box()]).unwrap(), vec![Some(1)]);
    let g = OrientedBox::new(3.1, 4.0, 1.5, 4.2, 0.2);
    assert_eq!(assign_targets(&[a, Anchor { cx: 3.3, ..a }], &[g]).unwrap(), vec![Some(0)]);
    assert!(assign_targets(&[], &[g]).is_err());
}

#[test]
fn encoding_examples() {
    let anchor = Anchor { cx: 1.0, cy: 2.0, w: 1.5, h: 4.2, theta: 30f64.to_radians() };
    let e = encode_box(&anchor, &anchor.as_box()).unwrap();
    assert!(e.to_array().iter().zip([0.0, 0.0, 0.0, 0.0, 1.0, 0.0]).all(|(a, b)| (a - b).abs() < 1e-12));

    let gt = OrientedBox::new(1.0, 2.0, 1.5, 4.2, 75f64.to_radians());
    let e = encode_box(&anchor, &gt).unwrap();
    let r = 0.5f64.sqrt();
    assert!((e.cos_theta_o - r).abs() < 1e-12 && (e.sin_theta_o - r).abs() < 1e-12);
    let d = decode_box(&anchor, &e).unwrap();
    assert!(angle_diff(d.theta, 75f64.to_radians()).abs() < 1e-12);

    assert!(encode_box(&anchor, &OrientedBox::new(0.0, 0.0, -1.0, 2.0, 0.0)).is_err());
    assert!(encode_box(&Anchor { w: 0.0, ..anchor }, &gt).is_err());
}

#[test]
fn loss_scalar_examples() {
    assert_eq!(smooth_l1(0.0), (0.0, 0.0));
    assert_eq!(smooth_l1(0.5), (0.125, 0.5));
    assert_eq!(smooth_l1(-2.0), (1.5, -1.0));

    let (v, _) = focal_loss(0.0, true, 0.25, 2.0);
    assert!((v - (-0.25 * 0.25 * 0.5f64.ln())).abs() < 1e-12);
    assert!((v - 0.04332).abs() < 1e-5);

    let mut rng = ChaCha8Rng::seed_from_u64(2);
    for _ in 0..200 {
        let z: f64 = rng.random_range(-6.0..6.0);
        let p = sigmoid(z);
        let (pos, _) = focal_loss(z, true, 0.5, 0.0);
        let (neg, _) = focal_loss(z, false, 0.5, 0.0);
        assert!((pos + 0.5 * p.ln()).abs() < 1e-10);
        assert!((neg + 0.5 * (1.0 - p).ln()).abs() < 1e-10);
    }

    let mut prev = f64::INFINITY;
    for z in [0.0, 2.0, 4.0, 8.0, 16.0, 30.0] {
        let (v, _) = focal_loss(z, true, 0.25, 2.0);
        assert!(v < prev);
        prev = v;
    }
    assert!(prev < 1e-15);
}

#[test]
fn aleatoric_examples() {
    let zero = [0.0; 6];
    assert_eq!(aleatoric_loss(&zero, &zero, &zero).0, 0.0);

    let mut rng = ChaCha8Rng::seed_from_u64(5);
    for _ in 0..100 {
        let r: f64 = rng.random_range(-3.0..3.0);
        let (v, _, _) = aleatoric_term(r, 0.0);
        assert!((v - smooth_l1(r).0).abs() < 1e-15);
        let sl1 = smooth_l1(r).0;
        if sl1 > 1e-3 {
            let s = golden_section(|s| sl1 / s + s.ln(), 1e-4, 10.0, 1e-10);
            assert!((s - sl1).abs() < 1e-6);
            let (best, _, _) = aleatoric_term(r, sl1.ln());
            assert!((best - (1.0 + sl1.ln())).abs() < 1e-12);
        }
    }
}

#[test]
fn aleatoric_gradients() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    for _ in 0..200 {
        let r: f64 = rng.random_range(-3.0..3.0);
        let l: f64 = rng.random_range(-2.0..2.0);
        let (_, dr, ds) = aleatoric_term(r, l);
        assert!(rel_err(dr, central_diff(|x| aleatoric_term(x, l).0, r, 1e-5)) < 1e-4);
        assert!(rel_err(ds, central_diff(|x| aleatoric_term(r, x).0, l, 1e-5)) < 1e-4);
    }
}

fn toy_problem() -> (Vec<Anchor>, Vec<OrientedBox>) {
    let anchors = build_anchor_grid(&AnchorConfig { grid_shape: (4, 4), cell_size: 2.0, ..Default::default() }).unwrap();
    let gts = vec![
        OrientedBox::new(1.2, 1.1, 1.6, 4.0, 0.6),
        OrientedBox::new(5.0, 6.5, 1.7, 4.4, 2.1),
    ];
    (anchors, gts)
}

#[test]
fn total_loss_identities() {
    let (anchors, gts) = toy_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pred = Array2::from_shape_fn((anchors.len(), PRED_WIDTH), |_| rng.random_range(-1.0..1.0));
    let r = total_loss(pred.view(), &anchors, &gts, &LossParams::default()).unwrap();
    assert!((r.total - (r.objectiveness + 100.0 * r.localization)).abs() <= 1e-9);
    assert_eq!(r.num_positives, 2);

    let empty = total_loss(pred.view(), &anchors, &[], &LossParams::default()).unwrap();
    assert_eq!(empty.localization, 0.0);
    assert_eq!(empty.total, empty.objectiveness);

    let bad = Array2::zeros((anchors.len(), PRED_WIDTH - 1));
    assert!(total_loss(bad.view(), &anchors, &gts, &LossParams::default()).is_err());
}

#[test]
fn perfect_predictions_near_zero_loss() {
    let (anchors, gts) = toy_problem();
    let eps: f64 = 1e-6;
    let logit = ((1.0 - eps) / eps).ln();
    let mut pred = Array2::zeros((anchors.len(), PRED_WIDTH));
    pred.column_mut(0).fill(-logit);
    for (a, enc) in encode_targets(&anchors, &gts).unwrap() {
        pred[[a, 0]] = logit;
        for (j, t) in enc.to_array().iter().enumerate() {
            pred[[a, 1 + j]] = *t;
        }
    }
    let r = total_loss(pred.view(), &anchors, &gts, &LossParams::default()).unwrap();
    assert!(r.total <= 1e-3, "{}", r.total);
}

#[test]
fn total_loss_gradient_spot_check() {
    let (anchors, gts) = toy_problem();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let pred = Array2::from_shape_fn((anchors.len(), PRED_WIDTH), |_| rng.random_range(-1.5..1.5));
    let params = LossParams::default();
    let r = total_loss(pred.view(), &anchors, &gts, &params).unwrap();
    let positives: Vec<usize> = encode_targets(&anchors, &gts).unwrap().iter().map(|t| t.0).collect();
    for &a in positives.iter().chain([0usize, 7].iter()) {
        for j in 0..PRED_WIDTH {
            let f = |x: f64| {
                let mut p = pred.clone();
                p[[a, j]] = x;
                total_loss(p.view(), &anchors, &gts, &params).unwrap().total
            };
            let fd = central_diff(f, pred[[a, j]], 1e-5);
            let g = r.gradients[[a, j]];
            assert!(g == 0.0 && fd.abs() < 1e-6 || rel_err(g, fd) < 1e-4, "({a},{j}) {g} vs {fd}");
        }
    }
}

#[test]
fn toy_head_trains() {
    let data = make_toy_dataset(&ToyConfig { frames: 6, grid: 4, ..Default::default() }).unwrap();
    let fit = fit_toy_head(&data, 300, DEFAULT_LR).unwrap();
    assert!(fit.trace.iter().all(|p| p.total.is_finite()));
    assert!(fit.trace.last().unwrap().total < fit.trace[0].total);
    let still = fit_toy_head(&data, 10, 0.0).unwrap();
    assert!(still.trace.windows(2).all(|w| w[0].total == w[1].total));
}

proptest! {
    #[test]
    fn encode_decode_round_trip(
        ax in -20.0..20.0f64, ay in -20.0..20.0f64, aw in 0.5..3.0f64, ah in 1.0..6.0f64, at in -PI..PI,
        gx in -20.0..20.0f64, gy in -20.0..20.0f64, gw in 0.5..3.0f64, gh in 1.0..6.0f64, gt in -PI..PI,
        lambda in 0.01..100.0f64,
    ) {
        let anchor = Anchor { cx: ax, cy: ay, w: aw, h: ah, theta: at };
        let g = OrientedBox::new(gx, gy, gw, gh, gt);
        let e = encode_box(&anchor, &g).unwrap();
        let d = decode_box(&anchor, &e).unwrap();
        prop_assert!((d.cx - g.cx).abs() < 1e-9 && (d.cy - g.cy).abs() < 1e-9);
        prop_assert!((d.w - g.w).abs() < 1e-9 && (d.h - g.h).abs() < 1e-9);
        prop_assert!(angle_diff(d.theta, g.theta).abs() < 1e-9);

        let scaled = BoxEncoding { cos_theta_o: e.cos_theta_o * lambda, sin_theta_o: e.sin_theta_o * lambda, ..e };
        let s = decode_box(&anchor, &scaled).unwrap();
        prop_assert!(angle_diff(s.theta, d.theta).abs() <= 1e-12);
    }

    #[test]
    fn kmeans_invariant_to_half_turns(flips in prop::collection::vec(any::<bool>(), 9), seed in 0u64..50) {
        let base = [28.0, 31.0, 33.0, 112.0, 115.0, 118.0, 134.0, 136.0, 139.0];
        let a: Vec<OrientedBox> = base.iter().map(|d| OrientedBox::new(0.0, 0.0, 1.0, 2.0, f64::to_radians(*d))).collect();
        let b: Vec<OrientedBox> = a.iter().zip(&flips).map(|(x, f)| OrientedBox { theta: x.theta + if *f { PI } else { 0.0 }, ..*x }).collect();
        let p = KmeansParams { seed, ..Default::default() };
        let ca = kmeans_orientations(&a, &p).unwrap();
        let cb = kmeans_orientations(&b, &p).unwrap();
        for (x, y) in ca.iter().zip(&cb) {
            prop_assert!(orientation_distance(*x, *y) < 1e-9);
        }
    }

    #[test]
    fn aleatoric_optimum_is_sl1(r in -4.0..4.0f64) {
        let sl1 = smooth_l1(r).0;
        prop_assume!(sl1 > 1e-3);
        let (_, _, ds) = aleatoric_term(r, sl1.ln());
        prop_assert!(ds.abs() < 1e-12);
    }
}
