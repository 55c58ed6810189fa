mod common;

use hieraedge::assign::{anchor_points, Anchor};
use hieraedge::bbox::{BBox, Detection};
use hieraedge::detect::{decode_boxes, nms, postprocess, read_jsonl, write_jsonl, DecodeConfig, DetectionRecord};
use hieraedge::head::{HeadOutput, LevelOutput};
use hieraedge::loss::{box_to_distances, encode_distance};
use hieraedge::Tensor;
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

#[test]
fn nms_matches_quadratic_reference() {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    for trial in 0..300 {
        let dets = common::random_dets(&mut rng, 100, 3);
        for thr in [0.3, 0.5, 0.7] {
            let got = nms(&dets, thr);
            let want = common::nms_quadratic(&dets, thr);
            assert_eq!(got, want, "trial {trial} thr {thr}");
        }
    }
}

#[test]
fn nms_on_identical_boxes_keeps_one_per_class() {
    let b = BBox::new(10.0, 10.0, 20.0, 20.0);
    let dets: Vec<Detection> = (0..6)
        .map(|i| Detection {
            bbox: b,
            class_id: i % 2,
            score: 0.5,
        })
        .collect();
    let kept = nms(&dets, 0.7);
    assert_eq!(kept.len(), 2);
    assert_eq!(kept[0], dets[0]);
    assert_eq!(kept[1], dets[1]);
}

fn arb_dets() -> impl Strategy<Value = Vec<Detection>> {
    prop::collection::vec(
        (0.0..80.0f64, 0.0..80.0f64, 1.0..30.0f64, 1.0..30.0f64, 0usize..3, 0.0..1.0f64),
        0..40,
    )
    .prop_map(|v| {
        v.into_iter()
            .map(|(x, y, w, h, c, s)| Detection {
                bbox: BBox::new(x, y, x + w, y + h),
                class_id: c,
                score: s,
            })
            .collect()
    })
}

proptest! {
    #[test]
    fn nms_output_is_subset_without_overlaps(dets in arb_dets(), thr in 0.1..0.9f64) {
        let kept = nms(&dets, thr);
        for k in &kept {
            prop_assert!(dets.contains(k));
        }
        for i in 0..kept.len() {
            for j in i + 1..kept.len() {
                if kept[i].class_id == kept[j].class_id {
                    prop_assert!(common::iou(&kept[i].bbox, &kept[j].bbox) <= thr);
                }
            }
            if i > 0 {
                prop_assert!(kept[i - 1].score >= kept[i].score);
            }
        }
        prop_assert_eq!(nms(&kept, thr), kept.clone());
    }

    #[test]
    fn encoded_distances_decode_back(d in 0.0..7.0f64) {
        let logits = encode_distance(d, 8);
        prop_assert!((hieraedge::loss::dfl_decode(&logits) - d).abs() < 1e-9);
    }
}

/// Builds a single-level head whose anchor at (row, col) encodes `target`
/// with probability `p`; every other logit is strongly negative.
fn planted_head(grid: usize, stride: usize, bins: usize, nc: usize, plants: &[(usize, usize, usize, BBox, f64)]) -> HeadOutput {
    let hw = grid * grid;
    let mut reg = vec![0.0; 4 * bins * hw];
    let mut cls = vec![-30.0; nc * hw];
    for &(row, col, class, b, p) in plants {
        let a = Anchor {
            x: (col as f64 + 0.5) * stride as f64,
            y: (row as f64 + 0.5) * stride as f64,
            stride,
        };
        let cell = row * grid + col;
        for (side, d) in box_to_distances(&b, &a).into_iter().enumerate() {
            for (k, v) in encode_distance(d, bins).into_iter().enumerate() {
                reg[(side * bins + k) * hw + cell] = v;
            }
        }
        cls[class * hw + cell] = (p / (1.0 - p)).ln();
    }
    HeadOutput {
        levels: vec![LevelOutput {
            reg: Tensor::from_vec(&[1, 4 * bins, grid, grid], reg).unwrap(),
            cls: Tensor::from_vec(&[1, nc, grid, grid], cls).unwrap(),
            stride,
        }],
        dfl_bins: bins,
        num_classes: nc,
    }
}

#[test]
fn decode_recovers_planted_boxes() {
    let b0 = BBox::new(4.0, 6.0, 28.0, 30.0);
    let b1 = BBox::new(40.0, 33.0, 60.0, 50.0);
    let head = planted_head(8, 8, 8, 2, &[(2, 2, 0, b0, 0.9), (5, 6, 1, b1, 0.6)]);
    let dets = decode_boxes(&head, (64, 64), 0.5).unwrap();
    assert_eq!(dets[0].len(), 2);
    for (d, (b, c, p)) in dets[0].iter().zip([(b0, 0, 0.9), (b1, 1, 0.6)]) {
        assert_eq!(d.class_id, c);
        assert!((d.score - p).abs() < 1e-12);
        for (x, y) in d.bbox.to_array().iter().zip(b.to_array()) {
            assert!((x - y).abs() < 1e-9, "{:?} vs {:?}", d.bbox, b);
        }
    }
    let none = decode_boxes(&head, (64, 64), 0.95).unwrap();
    assert!(none[0].is_empty());
}

#[test]
fn postprocess_suppresses_duplicate_plants() {
    let b = BBox::new(8.0, 8.0, 40.0, 40.0);
    let head = planted_head(8, 8, 8, 1, &[(2, 2, 0, b, 0.9), (2, 3, 0, b, 0.8), (3, 2, 0, b, 0.7)]);
    let out = postprocess(&head, (64, 64), &DecodeConfig::inference()).unwrap();
    assert_eq!(out[0].len(), 1);
    assert!((out[0][0].score - 0.9).abs() < 1e-12);
}

#[test]
fn anchors_cover_grid_centers() {
    let a = anchor_points(&[(2, 3, 8), (1, 1, 16)]);
    assert_eq!(a.len(), 7);
    assert_eq!((a[0].x, a[0].y), (4.0, 4.0));
    assert_eq!((a[5].x, a[5].y), (20.0, 12.0));
    assert_eq!((a[6].x, a[6].y, a[6].stride), (8.0, 8.0, 16));
}

#[test]
fn jsonl_round_trip() {
    let dets = [
        Detection {
            bbox: BBox::new(1.0, 2.0, 3.5, 4.25),
            class_id: 2,
            score: 0.75,
        },
        Detection {
            bbox: BBox::new(0.0, 0.0, 1.0, 1.0),
            class_id: 0,
            score: 0.125,
        },
    ];
    let recs: Vec<DetectionRecord> = dets.iter().map(|d| DetectionRecord::new("img_7", d)).collect();
    let mut buf = Vec::new();
    write_jsonl(&mut buf, &recs).unwrap();
    let text = String::from_utf8(buf).unwrap();
    assert_eq!(text.lines().count(), 2);
    assert_eq!(read_jsonl(&text).unwrap(), recs);
}
