//! Focal classification loss, distribution focal loss and CIoU box loss.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::assign::{anchor_points, assign, Anchor, AssignConfig, Predictions};
use crate::bbox::{ciou, BBox, GroundTruth};
use crate::error::{Error, Result};
use crate::head::HeadOutput;
use crate::tensor::{sigmoid_scalar, Tensor};

/// Floor applied to probabilities inside logarithms.
pub const PROB_FLOOR: f64 = 1e-9;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LossConfig {
    pub lambda_box: f64,
    pub lambda_dfl: f64,
    pub lambda_cls: f64,
    pub focal_alpha: f64,
    pub focal_gamma: f64,
    pub assign: AssignConfig,
}

impl Default for LossConfig {
    fn default() -> Self {
        LossConfig {
            lambda_box: 7.5,
            lambda_dfl: 1.5,
            lambda_cls: 0.5,
            focal_alpha: 0.25,
            focal_gamma: 2.0,
            assign: AssignConfig::default(),
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct LossBreakdown {
    pub total: f64,
    pub cls: f64,
    pub iou: f64,
    pub dfl: f64,
    pub num_pos: usize,
    /// Distance targets that fell outside `[0, R-1]` and were clamped.
    pub clamped: usize,
}

pub struct LossOutput {
    pub total: Tensor,
    pub breakdown: LossBreakdown,
}

/// `(q, 1 - q)` for `q = p_t`, computed without cancellation from the logit.
fn pt_pair(z: f64, positive: bool) -> (f64, f64) {
    let s = sigmoid_scalar(z);
    let c = sigmoid_scalar(-z);
    if positive {
        (s, c)
    } else {
        (c, s)
    }
}

fn focal_from_pt(q: f64, one_minus_q: f64, alpha_t: f64, gamma: f64) -> f64 {
    -alpha_t * one_minus_q.powf(gamma) * q.max(PROB_FLOOR).ln()
}

/// `-alpha_t (1 - p_t)^gamma log(p_t)` where `p_t = p` for positives and
/// `1 - p` otherwise, and `alpha_t` is `alpha` or `1 - alpha` likewise.
pub fn focal_loss(p: f64, positive: bool, alpha: f64, gamma: f64) -> f64 {
    let (q, alpha_t) = if positive { (p, alpha) } else { (1.0 - p, 1.0 - alpha) };
    focal_from_pt(q, 1.0 - q, alpha_t, gamma)
}

/// Sum of focal losses of `logits` against 0/1 `targets` of the same length.
pub fn focal_loss_sum(logits: &Tensor, targets: Arc<Vec<f64>>, alpha: f64, gamma: f64) -> Result<Tensor> {
    if targets.len() != logits.numel() {
        return Err(Error::Shape {
            op: "focal_loss_sum",
            msg: format!("{} targets for {} logits", targets.len(), logits.numel()),
        });
    }
    let z = logits.data_arc();
    let total: f64 = z
        .iter()
        .zip(targets.iter())
        .map(|(&zi, &y)| {
            let pos = y > 0.5;
            let (q, omq) = pt_pair(zi, pos);
            focal_from_pt(q, omq, if pos { alpha } else { 1.0 - alpha }, gamma)
        })
        .sum();
    let n = z.len();
    Ok(Tensor::from_op("focal", vec![], Arc::new(vec![total]), vec![logits.clone()], move |g, _| {
        let mut gx = vec![0.0; n];
        for i in 0..n {
            let pos = targets[i] > 0.5;
            let (q, omq) = pt_pair(z[i], pos);
            let a = if pos { alpha } else { 1.0 - alpha };
            // dL/dq, then dq/dz = +-q(1-q).
            let mut dq = 0.0;
            if gamma != 0.0 {
                dq += a * gamma * omq.powf(gamma - 1.0) * q.max(PROB_FLOOR).ln();
            }
            if q > PROB_FLOOR {
                dq -= a * omq.powf(gamma) / q;
            }
            let dz = if pos { q * omq } else { -q * omq };
            gx[i] = g[0] * dq * dz;
        }
        vec![Some(gx)]
    }))
}

/// Expected bin index under the softmax of `logits`.
pub fn dfl_decode(logits: &[f64]) -> f64 {
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = logits.iter().map(|v| (v - m).exp()).collect();
    let z: f64 = e.iter().sum();
    e.iter().enumerate().map(|(i, v)| i as f64 * v / z).sum()
}

/// Lower bin, its weight, and whether `target` was clamped into `[0, R-1]`.
pub fn dfl_target(target: f64, bins: usize) -> (usize, f64, bool) {
    let hi = (bins - 1) as f64;
    let t = target.clamp(0.0, hi);
    let clamped = t != target;
    let mut il = t.floor() as usize;
    if il >= bins - 1 {
        il = bins - 2;
    }
    let wl = (il + 1) as f64 - t;
    (il, wl, clamped)
}

/// `-wl log p_il - wr log p_ir` with the target split between its two
/// neighbouring bins.
pub fn dfl_loss(logits: &[f64], target: f64) -> f64 {
    let (il, wl, _) = dfl_target(target, logits.len());
    let m = logits.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let lse = m + logits.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
    -(wl * (logits[il] - lse) + (1.0 - wl) * (logits[il + 1] - lse))
}

/// Sum of CIoU losses of predicted boxes (P, 4) against `gts`, plus the IoUs.
pub fn ciou_loss_sum(boxes: &Tensor, gts: Vec<BBox>) -> Result<(Tensor, Vec<f64>)> {
    if boxes.shape() != [gts.len(), 4] {
        return Err(Error::Shape {
            op: "ciou_loss_sum",
            msg: format!("boxes {:?} for {} targets", boxes.shape(), gts.len()),
        });
    }
    let d = boxes.data();
    let results: Vec<_> = gts
        .iter()
        .enumerate()
        .map(|(i, gt)| ciou(&BBox::from_array([d[4 * i], d[4 * i + 1], d[4 * i + 2], d[4 * i + 3]]), gt))
        .collect();
    let total: f64 = results.iter().map(|r| r.loss).sum();
    let ious = results.iter().map(|r| r.iou).collect();
    let grads: Vec<f64> = results.iter().flat_map(|r| r.grad).collect();
    let t = Tensor::from_op("ciou", vec![], Arc::new(vec![total]), vec![boxes.clone()], move |g, _| {
        vec![Some(grads.iter().map(|v| v * g[0]).collect())]
    });
    Ok((t, ious))
}

/// Per-side distances (l, t, r, b) in stride units from 4R logits.
pub fn decode_distances(logits: &[f64]) -> [f64; 4] {
    let r = logits.len() / 4;
    [0, 1, 2, 3].map(|k| dfl_decode(&logits[k * r..(k + 1) * r]))
}

pub fn distances_to_box(d: [f64; 4], a: &Anchor) -> BBox {
    let s = a.stride as f64;
    BBox::new(a.x - d[0] * s, a.y - d[1] * s, a.x + d[2] * s, a.y + d[3] * s)
}

/// Stride-normalized (l, t, r, b) distances from an anchor to a box.
pub fn box_to_distances(b: &BBox, a: &Anchor) -> [f64; 4] {
    let s = a.stride as f64;
    [(a.x - b.x1) / s, (a.y - b.y1) / s, (b.x2 - a.x) / s, (b.y2 - a.y) / s]
}

/// Logits whose softmax expectation is exactly `d` (for `0 <= d <= bins-1`).
pub fn encode_distance(d: f64, bins: usize) -> Vec<f64> {
    let (il, wl, _) = dfl_target(d, bins);
    let mut out = vec![-60.0; bins];
    let wr = 1.0 - wl;
    if wl > 0.0 {
        out[il] = wl.ln();
    }
    if wr > 0.0 {
        out[il + 1] = wr.ln();
    }
    out
}

/// Total detection loss of a batch and its parts.
pub fn total_loss(head: &HeadOutput, gts: &[Vec<GroundTruth>], cfg: &LossConfig) -> Result<LossOutput> {
    let n = head.batch();
    if gts.len() != n {
        return Err(Error::Usage(format!("{} target lists for a batch of {}", gts.len(), n)));
    }
    let r = head.dfl_bins;
    let nc = head.num_classes;
    let anchors = anchor_points(&head.grids());
    let na = anchors.len();
    let (reg, cls) = head.flatten()?;
    let reg_d = reg.data();
    let cls_d = cls.data();

    let mut targets = vec![0.0; n * na * nc];
    // (flat anchor row, gt box, anchor)
    let mut positives: Vec<(usize, BBox, Anchor)> = Vec::new();
    for (img, img_gts) in gts.iter().enumerate() {
        let boxes: Vec<BBox> = (0..na)
            .map(|a| {
                let o = (img * na + a) * 4 * r;
                distances_to_box(decode_distances(&reg_d[o..o + 4 * r]), &anchors[a])
            })
            .collect();
        let scores: Vec<f64> = cls_d[img * na * nc..(img + 1) * na * nc].iter().map(|&z| sigmoid_scalar(z)).collect();
        let pred = Predictions {
            boxes: &boxes,
            scores: &scores,
            num_classes: nc,
        };
        for (a, g) in assign(&anchors, &pred, img_gts, &cfg.assign).into_iter().enumerate() {
            if let Some(g) = g {
                let gt = img_gts[g];
                targets[(img * na + a) * nc + gt.class_id] = 1.0;
                positives.push((img * na + a, gt.bbox, anchors[a]));
            }
        }
    }
    let num_pos = positives.len();
    let norm = 1.0 / num_pos.max(1) as f64;

    let cls_loss = focal_loss_sum(&cls, Arc::new(targets), cfg.focal_alpha, cfg.focal_gamma)?.scale(norm);
    let mut total = cls_loss.scale(cfg.lambda_cls);
    let mut breakdown = LossBreakdown {
        cls: cls_loss.item(),
        num_pos,
        ..Default::default()
    };

    if num_pos > 0 {
        let rows: Vec<usize> = positives.iter().map(|p| p.0).collect();
        let sel = reg.reshape(&[n * na, 4 * r])?.index_select0(&rows)?.reshape(&[num_pos * 4, r])?;

        let mut weights = vec![0.0; num_pos * 4 * r];
        for (k, (_, b, a)) in positives.iter().enumerate() {
            for (side, d) in box_to_distances(b, a).into_iter().enumerate() {
                let (il, wl, clamped) = dfl_target(d, r);
                breakdown.clamped += clamped as usize;
                let row = (k * 4 + side) * r;
                weights[row + il] = wl;
                weights[row + il + 1] = 1.0 - wl;
            }
        }
        let w = Tensor::from_vec(&[num_pos * 4, r], weights)?;
        let dfl = sel.log_softmax_lastdim()?.mul(&w)?.sum().scale(-0.25 * norm);

        let bins = Tensor::from_vec(&[r, 1], (0..r).map(|i| i as f64).collect())?;
        let dist = sel.softmax_lastdim()?.matmul(&bins)?.reshape(&[num_pos, 4])?;
        let mut signs = Vec::with_capacity(num_pos * 4);
        let mut offsets = Vec::with_capacity(num_pos * 4);
        for (_, _, a) in &positives {
            let s = a.stride as f64;
            signs.extend([-s, -s, s, s]);
            offsets.extend([a.x, a.y, a.x, a.y]);
        }
        let boxes = dist
            .mul(&Tensor::from_vec(&[num_pos, 4], signs)?)?
            .add(&Tensor::from_vec(&[num_pos, 4], offsets)?)?;
        let (iou_sum, _) = ciou_loss_sum(&boxes, positives.iter().map(|p| p.1).collect())?;
        let iou = iou_sum.scale(norm);

        breakdown.iou = iou.item();
        breakdown.dfl = dfl.item();
        total = total.add(&iou.scale(cfg.lambda_box))?.add(&dfl.scale(cfg.lambda_dfl))?;
    }
    breakdown.total = total.item();
    Ok(LossOutput { total, breakdown })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn focal_fixture() {
        let v = focal_loss(0.9, true, 0.25, 2.0);
        assert!((v - 2.634e-4).abs() < 1e-7, "{v}");
        assert!((focal_loss(0.3, false, 1.0, 0.0) - 0.0).abs() < 1e-15);
        assert!((focal_loss(0.3, true, 1.0, 0.0) + 0.3f64.ln()).abs() < 1e-15);
    }

    #[test]
    fn dfl_fixtures() {
        let mut l = vec![0.0; 16];
        assert_eq!(dfl_decode(&l), 7.5);
        l[7] = 20.0;
        assert!((dfl_decode(&l) - 7.0).abs() < 1e-5);
        assert!((dfl_decode(&[0.0, 3f64.ln()]) - 0.75).abs() < 1e-15);
        assert!((dfl_loss(&[0.0; 4], 1.0) - 4f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn dfl_target_edges() {
        assert_eq!(dfl_target(3.0, 4), (2, 0.0, false));
        assert_eq!(dfl_target(-1.0, 4), (0, 1.0, true));
        assert_eq!(dfl_target(2.25, 4), (2, 0.75, false));
    }

    #[test]
    fn encode_roundtrip() {
        for d in [0.0, 0.3, 2.0, 6.75, 7.0] {
            assert!((dfl_decode(&encode_distance(d, 8)) - d).abs() < 1e-12, "{d}");
        }
    }
}
