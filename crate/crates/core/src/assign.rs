//! Center-prior top-k target assignment.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};

use crate::bbox::{BBox, GroundTruth};

/// Cell-center anchor point in input pixels.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Anchor {
    pub x: f64,
    pub y: f64,
    pub stride: usize,
}

/// Anchor points for grids given as (H, W, stride), ordered level, row, column.
pub fn anchor_points(grids: &[(usize, usize, usize)]) -> Vec<Anchor> {
    let mut out = Vec::new();
    for &(h, w, s) in grids {
        for i in 0..h {
            for j in 0..w {
                out.push(Anchor {
                    x: (j as f64 + 0.5) * s as f64,
                    y: (i as f64 + 0.5) * s as f64,
                    stride: s,
                });
            }
        }
    }
    out
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AssignConfig {
    pub topk: usize,
    /// Exponent on the predicted class probability in the candidate score.
    pub score_power: f64,
}

impl Default for AssignConfig {
    fn default() -> Self {
        AssignConfig {
            topk: 10,
            score_power: 0.5,
        }
    }
}

/// Detached per-image predictions the assigner scores against.
pub struct Predictions<'a> {
    pub boxes: &'a [BBox],
    /// Row-major (A, Nc) class probabilities.
    pub scores: &'a [f64],
    pub num_classes: usize,
}

impl Predictions<'_> {
    fn score(&self, a: usize, gt: &GroundTruth, power: f64) -> f64 {
        let p = self.scores[a * self.num_classes + gt.class_id];
        self.boxes[a].iou(&gt.bbox) * p.max(0.0).powf(power)
    }
}

fn center_dist2(a: &Anchor, b: &BBox) -> f64 {
    let (cx, cy) = b.center();
    (a.x - cx).powi(2) + (a.y - cy).powi(2)
}

/// Candidate order: higher score, then closer to the box center, then lower index.
fn rank(a: (f64, f64, usize), b: (f64, f64, usize)) -> Ordering {
    b.0.total_cmp(&a.0).then(a.1.total_cmp(&b.1)).then(a.2.cmp(&b.2))
}

/// Index of the gt assigned to each anchor, or `None` for negatives.
///
/// Candidates of a gt are the anchors strictly inside its box; a gt with no
/// such anchor falls back to its nearest anchor. Each gt keeps its `topk`
/// best candidates, and an anchor claimed by several gts goes to the one with
/// the highest score (lower gt index on ties). Zero-area gts are ignored.
pub fn assign(anchors: &[Anchor], pred: &Predictions, gts: &[GroundTruth], cfg: &AssignConfig) -> Vec<Option<usize>> {
    let mut best: Vec<Option<(usize, f64)>> = vec![None; anchors.len()];
    for (g, gt) in gts.iter().enumerate() {
        if gt.bbox.area() <= 0.0 || gt.class_id >= pred.num_classes {
            continue;
        }
        let mut cands: Vec<(f64, f64, usize)> = anchors
            .iter()
            .enumerate()
            .filter(|(_, a)| gt.bbox.contains_point(a.x, a.y))
            .map(|(i, a)| (pred.score(i, gt, cfg.score_power), center_dist2(a, &gt.bbox), i))
            .collect();
        if cands.is_empty() {
            if let Some((i, a)) = anchors
                .iter()
                .enumerate()
                .min_by(|x, y| center_dist2(x.1, &gt.bbox).total_cmp(&center_dist2(y.1, &gt.bbox)))
            {
                cands.push((pred.score(i, gt, cfg.score_power), center_dist2(a, &gt.bbox), i));
            }
        }
        cands.sort_by(|a, b| rank(*a, *b));
        for &(score, _, i) in cands.iter().take(cfg.topk) {
            match best[i] {
                Some((_, s)) if s >= score => {}
                _ => best[i] = Some((g, score)),
            }
        }
    }
    best.into_iter().map(|b| b.map(|(g, _)| g)).collect()
}
