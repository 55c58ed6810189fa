//! Test-side reference implementations. These are written from the
//! definitions, independently of the library code they check.
#![allow(dead_code)]

use hieraedge::assign::Anchor;
use hieraedge::bbox::{BBox, Detection, GroundTruth};
use rand::Rng;

pub fn iou(a: &BBox, b: &BBox) -> f64 {
    let iw = (a.x2.min(b.x2) - a.x1.max(b.x1)).max(0.0);
    let ih = (a.y2.min(b.y2) - a.y1.max(b.y1)).max(0.0);
    let inter = iw * ih;
    let union = (a.x2 - a.x1) * (a.y2 - a.y1) + (b.x2 - b.x1) * (b.y2 - b.y1) - inter;
    if union <= 0.0 {
        0.0
    } else {
        inter / union
    }
}

/// Quadratic greedy suppression: repeatedly take the best remaining box and
/// strike every same-class box overlapping it.
pub fn nms_quadratic(dets: &[Detection], thr: f64) -> Vec<Detection> {
    let mut alive = vec![true; dets.len()];
    let mut out = Vec::new();
    loop {
        let mut best: Option<usize> = None;
        for i in 0..dets.len() {
            if !alive[i] {
                continue;
            }
            best = match best {
                None => Some(i),
                Some(b) => {
                    let (x, y) = (&dets[i], &dets[b]);
                    let better = x.score > y.score || (x.score == y.score && x.class_id < y.class_id);
                    Some(if better { i } else { b })
                }
            };
        }
        let Some(b) = best else { break };
        alive[b] = false;
        out.push(dets[b]);
        for j in 0..dets.len() {
            if alive[j] && dets[j].class_id == dets[b].class_id && iou(&dets[j].bbox, &dets[b].bbox) > thr {
                alive[j] = false;
            }
        }
    }
    out
}

pub fn random_box(rng: &mut impl Rng, w: f64, h: f64) -> BBox {
    let x1 = rng.random_range(0.0..w * 0.8);
    let y1 = rng.random_range(0.0..h * 0.8);
    let bw = rng.random_range(2.0..w * 0.4);
    let bh = rng.random_range(2.0..h * 0.4);
    BBox::new(x1, y1, (x1 + bw).min(w), (y1 + bh).min(h))
}

pub fn random_dets(rng: &mut impl Rng, n: usize, classes: usize) -> Vec<Detection> {
    (0..n)
        .map(|_| Detection {
            bbox: random_box(rng, 100.0, 100.0),
            class_id: rng.random_range(0..classes),
            // Coarse scores so ties actually happen.
            score: (rng.random_range(0..50) as f64) / 50.0,
        })
        .collect()
}

/// Assignment by enumeration: for every (gt, anchor) pair count how many
/// other candidates of that gt outrank it; keep it when fewer than `topk` do.
/// Contested anchors go to the highest scoring gt, lowest index on ties.
pub fn assign_enumerate(
    anchors: &[Anchor],
    boxes: &[BBox],
    probs: &[f64],
    nc: usize,
    gts: &[GroundTruth],
    topk: usize,
    power: f64,
) -> Vec<Option<usize>> {
    let dist = |a: &Anchor, b: &BBox| {
        let (cx, cy) = ((b.x1 + b.x2) / 2.0, (b.y1 + b.y2) / 2.0);
        (a.x - cx).powi(2) + (a.y - cy).powi(2)
    };
    let inside = |a: &Anchor, b: &BBox| a.x > b.x1 && a.x < b.x2 && a.y > b.y1 && a.y < b.y2;
    let mut claims: Vec<Vec<(usize, f64)>> = vec![Vec::new(); anchors.len()];
    for (g, gt) in gts.iter().enumerate() {
        if (gt.bbox.x2 - gt.bbox.x1) * (gt.bbox.y2 - gt.bbox.y1) <= 0.0 || gt.class_id >= nc {
            continue;
        }
        let mut cands: Vec<usize> = (0..anchors.len()).filter(|&a| inside(&anchors[a], &gt.bbox)).collect();
        if cands.is_empty() {
            let mut near = 0;
            for a in 1..anchors.len() {
                if dist(&anchors[a], &gt.bbox) < dist(&anchors[near], &gt.bbox) {
                    near = a;
                }
            }
            cands.push(near);
        }
        let score = |a: usize| iou(&boxes[a], &gt.bbox) * probs[a * nc + gt.class_id].max(0.0).powf(power);
        for &a in &cands {
            let beaten_by = cands
                .iter()
                .filter(|&&o| {
                    let (so, sa) = (score(o), score(a));
                    let (dout, da) = (dist(&anchors[o], &gt.bbox), dist(&anchors[a], &gt.bbox));
                    so > sa || (so == sa && (dout < da || (dout == da && o < a)))
                })
                .count();
            if beaten_by < topk {
                claims[a].push((g, score(a)));
            }
        }
    }
    claims
        .into_iter()
        .map(|c| {
            c.iter()
                .fold(None, |best: Option<(usize, f64)>, &(g, s)| match best {
                    Some((_, bs)) if bs >= s => best,
                    _ => Some((g, s)),
                })
                .map(|(g, _)| g)
        })
        .collect()
}

/// 101-point AP from the definition: mean over r in {0, .01, .., 1} of the
/// best precision reached at any recall >= r.
pub fn ap101(tp: &[bool], num_gt: usize) -> f64 {
    let mut pts = Vec::new();
    let mut hits = 0;
    for (i, &t) in tp.iter().enumerate() {
        hits += t as usize;
        // integer comparisons below avoid rounding in recall
        pts.push((hits, hits as f64 / (i + 1) as f64));
    }
    (0..=100usize)
        .map(|k| {
            pts.iter()
                .filter(|(h, _)| h * 100 >= k * num_gt)
                .map(|p| p.1)
                .fold(0.0, f64::max)
        })
        .sum::<f64>()
        / 101.0
}

/// Greedy matching by enumeration for a score-sorted detection list.
pub fn tp_flags(dets: &[Detection], gts: &[GroundTruth], thr: f64) -> Vec<bool> {
    let mut used = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<usize> = None;
            for (g, gt) in gts.iter().enumerate() {
                if used[g] || gt.class_id != d.class_id {
                    continue;
                }
                let v = iou(&d.bbox, &gt.bbox);
                if v >= thr && best.is_none_or(|b| v > iou(&d.bbox, &gts[b].bbox)) {
                    best = Some(g);
                }
            }
            if let Some(b) = best {
                used[b] = true;
            }
            best.is_some()
        })
        .collect()
}
