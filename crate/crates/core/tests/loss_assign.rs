mod common;

use std::f64::consts::PI;

use hieraedge::assign::{anchor_points, assign, AssignConfig, Predictions};
use hieraedge::bbox::{ciou, BBox, GroundTruth};
use hieraedge::head::{HeadOutput, LevelOutput};
use hieraedge::loss::{dfl_decode, dfl_loss, focal_loss, total_loss, LossConfig};
use hieraedge::Tensor;
use proptest::prelude::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

#[test]
fn focal_reference_value() {
    // -alpha (1 - p)^gamma ln p at p = 0.9
    let want = -0.25 * 0.1f64.powi(2) * 0.9f64.ln();
    let got = focal_loss(0.9, true, 0.25, 2.0);
    assert!((got - want).abs() < 1e-15);
    assert!((got - 2.634e-4).abs() < 1e-7);
}

#[test]
fn dfl_uniform_is_midpoint() {
    assert_eq!(dfl_decode(&[0.0; 16]), 7.5);
    assert_eq!(dfl_decode(&[3.0; 8]), 3.5);
}

#[test]
fn iou_of_offset_squares() {
    let a = BBox::new(0.0, 0.0, 2.0, 2.0);
    let b = BBox::new(1.0, 1.0, 3.0, 3.0);
    assert!((a.iou(&b) - 1.0 / 7.0).abs() < 1e-12);
    assert!((common::iou(&a, &b) - 1.0 / 7.0).abs() < 1e-12);
}

fn ciou_formula(p: [f64; 4], g: [f64; 4]) -> f64 {
    let iou = common::iou(&BBox::from_array(p), &BBox::from_array(g));
    let (pcx, pcy) = ((p[0] + p[2]) / 2.0, (p[1] + p[3]) / 2.0);
    let (gcx, gcy) = ((g[0] + g[2]) / 2.0, (g[1] + g[3]) / 2.0);
    let rho2 = (pcx - gcx).powi(2) + (pcy - gcy).powi(2);
    let cw = p[2].max(g[2]) - p[0].min(g[0]);
    let ch = p[3].max(g[3]) - p[1].min(g[1]);
    let c2 = cw * cw + ch * ch;
    let v = 4.0 / (PI * PI) * ((g[2] - g[0]).atan2(g[3] - g[1]) - (p[2] - p[0]).atan2(p[3] - p[1])).powi(2);
    let alpha = v / (1.0 - iou + v);
    1.0 - iou + rho2 / c2 + alpha * v
}

#[test]
fn ciou_matches_formula_and_finite_differences() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    for _ in 0..200 {
        let p = common::random_box(&mut rng, 50.0, 50.0).to_array();
        let g = common::random_box(&mut rng, 50.0, 50.0).to_array();
        // enclosing-box min/max are not differentiable at coordinate ties
        if (0..4).any(|i| (p[i] - g[i]).abs() < 1e-3) {
            continue;
        }
        let r = ciou(&BBox::from_array(p), &BBox::from_array(g));
        let want = ciou_formula(p, g);
        assert!((r.loss - want).abs() < 1e-10, "{p:?} {g:?}: {} vs {want}", r.loss);
        let h = 1e-6;
        for i in 0..4 {
            let (mut a, mut b) = (p, p);
            a[i] += h;
            b[i] -= h;
            let num = (ciou_formula(a, g) - ciou_formula(b, g)) / (2.0 * h);
            assert!((r.grad[i] - num).abs() < 1e-5 * (1.0 + num.abs()), "coord {i}: {} vs {num} p {p:?} g {g:?} iou {}", r.grad[i], r.iou);
        }
    }
}

#[test]
fn ciou_of_identical_boxes_is_zero() {
    let b = BBox::new(3.0, 4.0, 9.0, 15.0);
    let r = ciou(&b, &b);
    assert!(r.loss.abs() < 1e-15);
    assert_eq!(r.iou, 1.0);
}

#[test]
fn assignment_matches_enumeration_on_grids() {
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let anchors = anchor_points(&[(4, 4, 8)]);
    let nc = 2;
    for trial in 0..300 {
        let boxes: Vec<BBox> = anchors
            .iter()
            .map(|a| {
                let (l, t, r, b) = (rng.random_range(1.0..12.0), rng.random_range(1.0..12.0), rng.random_range(1.0..12.0), rng.random_range(1.0..12.0));
                BBox::new(a.x - l, a.y - t, a.x + r, a.y + b)
            })
            .collect();
        // a few repeated probabilities produce score ties
        let probs: Vec<f64> = (0..anchors.len() * nc).map(|_| [0.2, 0.5, 0.5, 0.9][rng.random_range(0..4)]).collect();
        let gts: Vec<GroundTruth> = (0..rng.random_range(1..4))
            .map(|_| GroundTruth {
                class_id: rng.random_range(0..nc),
                bbox: common::random_box(&mut rng, 32.0, 32.0),
            })
            .collect();
        for topk in [1, 3, 10] {
            let cfg = AssignConfig { topk, score_power: 0.5 };
            let pred = Predictions {
                boxes: &boxes,
                scores: &probs,
                num_classes: nc,
            };
            let got = assign(&anchors, &pred, &gts, &cfg);
            let want = common::assign_enumerate(&anchors, &boxes, &probs, nc, &gts, topk, 0.5);
            assert_eq!(got, want, "trial {trial} topk {topk}");
        }
    }
}

#[test]
fn tiny_gt_falls_back_to_nearest_anchor() {
    let anchors = anchor_points(&[(4, 4, 8)]);
    let boxes = vec![BBox::new(0.0, 0.0, 1.0, 1.0); 16];
    let probs = vec![0.5; 16];
    let gts = [GroundTruth {
        class_id: 0,
        bbox: BBox::new(20.5, 12.5, 21.5, 13.5),
    }];
    let pred = Predictions {
        boxes: &boxes,
        scores: &probs,
        num_classes: 1,
    };
    let got = assign(&anchors, &pred, &gts, &AssignConfig::default());
    let hits: Vec<usize> = got.iter().enumerate().filter(|(_, g)| g.is_some()).map(|(i, _)| i).collect();
    // nearest center is (20, 12): row 1, col 2
    assert_eq!(hits, vec![6]);
}

fn random_head(rng: &mut ChaCha8Rng, n: usize, nc: usize, bins: usize) -> HeadOutput {
    let levels = [(4usize, 8usize), (2, 16), (1, 32)]
        .iter()
        .map(|&(g, s)| LevelOutput {
            reg: Tensor::randn(&[n, 4 * bins, g, g], 1.0, rng),
            cls: Tensor::randn(&[n, nc, g, g], 1.0, rng),
            stride: s,
        })
        .collect();
    HeadOutput {
        levels,
        dfl_bins: bins,
        num_classes: nc,
    }
}

#[test]
fn total_loss_without_targets_is_weighted_focal_sum() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let head = random_head(&mut rng, 2, 3, 4);
    let cfg = LossConfig::default();
    let out = total_loss(&head, &[vec![], vec![]], &cfg).unwrap();
    let mut want = 0.0;
    for l in &head.levels {
        for &z in l.cls.data() {
            want += focal_loss(1.0 / (1.0 + (-z).exp()), false, cfg.focal_alpha, cfg.focal_gamma);
        }
    }
    assert!((out.breakdown.cls - want).abs() < 1e-9 * want);
    assert!((out.breakdown.total - cfg.lambda_cls * want).abs() < 1e-9 * want);
    assert_eq!(out.breakdown.num_pos, 0);
    assert_eq!((out.breakdown.iou, out.breakdown.dfl), (0.0, 0.0));
}

#[test]
fn total_loss_rejects_wrong_batch() {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let head = random_head(&mut rng, 2, 3, 4);
    assert!(total_loss(&head, &[vec![]], &LossConfig::default()).is_err());
}

#[test]
fn total_loss_parts_are_finite_and_positive() {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let head = random_head(&mut rng, 2, 3, 4);
    let gts = hieraedge::check::loss_toy_gts();
    let out = total_loss(&head, &gts, &LossConfig::default()).unwrap();
    let b = out.breakdown;
    assert!(b.num_pos >= 3);
    for v in [b.total, b.cls, b.iou, b.dfl] {
        assert!(v.is_finite() && v > 0.0);
    }
    let cfg = LossConfig::default();
    let recombined = cfg.lambda_cls * b.cls + cfg.lambda_box * b.iou + cfg.lambda_dfl * b.dfl;
    assert!((recombined - b.total).abs() < 1e-9 * b.total);
}

proptest! {
    #[test]
    fn dfl_decode_within_bins(logits in prop::collection::vec(-20.0..20.0f64, 2..20)) {
        let d = dfl_decode(&logits);
        prop_assert!(d >= 0.0 && d <= (logits.len() - 1) as f64);
    }

    #[test]
    fn dfl_decode_monotone_in_top_logit(logits in prop::collection::vec(-5.0..5.0f64, 4..12), bump in 0.01..3.0f64) {
        let mut up = logits.clone();
        let last = up.len() - 1;
        up[last] += bump;
        prop_assert!(dfl_decode(&up) >= dfl_decode(&logits) - 1e-12);
    }

    #[test]
    fn dfl_loss_nonnegative(logits in prop::collection::vec(-8.0..8.0f64, 4..12), t in 0.0..1.0f64) {
        let target = t * (logits.len() - 1) as f64;
        prop_assert!(dfl_loss(&logits, target) >= -1e-12);
    }

    #[test]
    fn focal_decreases_with_confidence(p in 0.01..0.98f64, dp in 0.001..0.01f64, gamma in 0.0..3.0f64) {
        let a = focal_loss(p, true, 0.25, gamma);
        let b = focal_loss(p + dp, true, 0.25, gamma);
        prop_assert!(a >= 0.0 && b >= 0.0);
        prop_assert!(b < a);
        let neg = focal_loss(1.0 - p, false, 0.75, gamma);
        prop_assert!((neg - a).abs() <= 1e-12 * a.max(1e-300));
    }

    #[test]
    fn iou_symmetric_and_bounded(a in (0.0..50.0f64, 0.0..50.0f64, 0.5..30.0f64, 0.5..30.0f64),
                                 b in (0.0..50.0f64, 0.0..50.0f64, 0.5..30.0f64, 0.5..30.0f64)) {
        let x = BBox::new(a.0, a.1, a.0 + a.2, a.1 + a.3);
        let y = BBox::new(b.0, b.1, b.0 + b.2, b.1 + b.3);
        let v = x.iou(&y);
        prop_assert!((0.0..=1.0).contains(&v));
        prop_assert_eq!(v, y.iou(&x));
        prop_assert!((x.iou(&x) - 1.0).abs() < 1e-15);
    }
}
