//! Detection metrics: AP over IoU thresholds, PR and F1 curves, confusion matrix.

use serde::{Deserialize, Serialize};

use crate::bbox::{Detection, GroundTruth};
use crate::error::{Error, Result};

/// IoU thresholds 0.50, 0.55, ..., 0.95.
pub fn coco_thresholds() -> Vec<f64> {
    (0..10).map(|i| 0.5 + 0.05 * i as f64).collect()
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum ApMethod {
    /// Mean of the precision envelope at recalls 0, 0.01, ..., 1.
    Interp101,
    /// Exact area under the precision envelope.
    Continuous,
}

/// For each detection (already sorted by descending score), the index of the
/// same-class gt it matches: the unmatched one with the highest IoU, provided
/// that IoU is at least `iou_threshold`. Equal IoUs go to the lower index.
pub fn match_detections(dets: &[Detection], gts: &[GroundTruth], iou_threshold: f64) -> Vec<Option<usize>> {
    let mut taken = vec![false; gts.len()];
    dets.iter()
        .map(|d| {
            let mut best: Option<(usize, f64)> = None;
            for (g, gt) in gts.iter().enumerate() {
                if taken[g] || gt.class_id != d.class_id {
                    continue;
                }
                let iou = d.bbox.iou(&gt.bbox);
                if iou >= iou_threshold && best.is_none_or(|(_, b)| iou > b) {
                    best = Some((g, iou));
                }
            }
            best.map(|(g, _)| {
                taken[g] = true;
                g
            })
        })
        .collect()
}

/// Sorts by descending score, keeping input order among equal scores.
pub fn sort_by_score(dets: &[Detection]) -> Vec<Detection> {
    let mut v = dets.to_vec();
    v.sort_by(|a, b| b.score.total_cmp(&a.score));
    v
}

/// Cumulative (recall, precision) after each ranked result.
pub fn pr_points(ranked_tp: &[bool], num_gt: usize) -> Vec<(f64, f64)> {
    let mut tp = 0usize;
    ranked_tp
        .iter()
        .enumerate()
        .map(|(i, &hit)| {
            tp += hit as usize;
            (tp as f64 / num_gt as f64, tp as f64 / (i + 1) as f64)
        })
        .collect()
}

/// Precision envelope sampled at recalls 0, 0.01, ..., 1 (0 beyond the reached recall).
pub fn interpolated_precision(points: &[(f64, f64)]) -> Vec<f64> {
    let mut env: Vec<f64> = points.iter().map(|p| p.1).collect();
    for i in (0..env.len().saturating_sub(1)).rev() {
        env[i] = env[i].max(env[i + 1]);
    }
    (0..=100)
        .map(|k| {
            let r = k as f64 / 100.0;
            // k / 100 and tp / n can differ in the last bit for equal rationals.
            points.iter().position(|p| p.0 >= r - 1e-12).map_or(0.0, |i| env[i])
        })
        .collect()
}

/// AP of ranked results; `None` when the class has no ground truth.
pub fn average_precision(ranked_tp: &[bool], num_gt: usize, method: ApMethod) -> Option<f64> {
    if num_gt == 0 {
        return None;
    }
    let points = pr_points(ranked_tp, num_gt);
    Some(match method {
        ApMethod::Interp101 => interpolated_precision(&points).iter().sum::<f64>() / 101.0,
        ApMethod::Continuous => {
            let mut env: Vec<f64> = points.iter().map(|p| p.1).collect();
            for i in (0..env.len().saturating_sub(1)).rev() {
                env[i] = env[i].max(env[i + 1]);
            }
            let mut prev = 0.0;
            let mut area = 0.0;
            for (p, e) in points.iter().zip(env) {
                area += (p.0 - prev) * e;
                prev = p.0;
            }
            area
        }
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalConfig {
    pub num_classes: usize,
    pub method: ApMethod,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrCurve {
    pub class_id: usize,
    pub recall: Vec<f64>,
    pub precision: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct F1Curve {
    pub confidence: Vec<f64>,
    pub f1: Vec<f64>,
    pub precision: Vec<f64>,
    pub recall: Vec<f64>,
    pub best_index: usize,
    pub best_confidence: f64,
    pub best_f1: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub iou_thresholds: Vec<f64>,
    /// `ap[class][threshold]`; `None` for classes without ground truth.
    pub ap: Vec<Vec<Option<f64>>>,
    pub num_gt: Vec<usize>,
    pub map50: f64,
    pub map75: f64,
    pub map5095: f64,
    pub pr_curves: Vec<PrCurve>,
    pub f1_curve: F1Curve,
    /// Rows: gt class then background; columns: predicted class then background.
    pub confusion: Vec<Vec<usize>>,
}

/// Ranked TP flags of one class across images at one IoU threshold.
fn ranked_class(
    dets: &[Vec<Detection>],
    gts: &[Vec<GroundTruth>],
    class_id: usize,
    iou_threshold: f64,
) -> (Vec<(f64, bool)>, usize) {
    let mut ranked = Vec::new();
    let mut num_gt = 0;
    for (d, g) in dets.iter().zip(gts) {
        let d: Vec<Detection> = sort_by_score(&d.iter().filter(|x| x.class_id == class_id).copied().collect::<Vec<_>>());
        let g: Vec<GroundTruth> = g.iter().filter(|x| x.class_id == class_id).copied().collect();
        num_gt += g.len();
        for (det, m) in d.iter().zip(match_detections(&d, &g, iou_threshold)) {
            ranked.push((det.score, m.is_some()));
        }
    }
    ranked.sort_by(|a, b| b.0.total_cmp(&a.0));
    (ranked, num_gt)
}

pub fn confusion_matrix(
    dets: &[Vec<Detection>],
    gts: &[Vec<GroundTruth>],
    num_classes: usize,
    iou_threshold: f64,
    conf: f64,
) -> Vec<Vec<usize>> {
    let bg = num_classes;
    let mut m = vec![vec![0usize; num_classes + 1]; num_classes + 1];
    for (d, g) in dets.iter().zip(gts) {
        let d = sort_by_score(&d.iter().filter(|x| x.score >= conf).copied().collect::<Vec<_>>());
        let mut taken = vec![false; g.len()];
        for det in &d {
            let best = g
                .iter()
                .enumerate()
                .filter(|(i, gt)| !taken[*i] && det.bbox.iou(&gt.bbox) >= iou_threshold)
                .max_by(|a, b| a.1.bbox.iou(&det.bbox).total_cmp(&b.1.bbox.iou(&det.bbox)).then(b.0.cmp(&a.0)));
            match best {
                Some((i, gt)) => {
                    taken[i] = true;
                    m[gt.class_id.min(bg)][det.class_id.min(bg)] += 1;
                }
                None => m[bg][det.class_id.min(bg)] += 1,
            }
        }
        for (i, gt) in g.iter().enumerate() {
            if !taken[i] {
                m[gt.class_id.min(bg)][bg] += 1;
            }
        }
    }
    m
}

fn mean(v: impl Iterator<Item = f64>) -> f64 {
    let (s, n) = v.fold((0.0, 0usize), |(s, n), x| (s + x, n + 1));
    if n == 0 {
        0.0
    } else {
        s / n as f64
    }
}

pub fn evaluate(dets: &[Vec<Detection>], gts: &[Vec<GroundTruth>], cfg: &EvalConfig) -> Result<EvalReport> {
    if dets.is_empty() || dets.len() != gts.len() {
        return Err(Error::Usage(format!(
            "evaluation needs matching non-empty image lists (got {} detection and {} gt lists)",
            dets.len(),
            gts.len()
        )));
    }
    let nc = cfg.num_classes;
    let thresholds = coco_thresholds();
    let mut ap = vec![vec![None; thresholds.len()]; nc];
    let mut num_gt = vec![0; nc];
    let mut pr_curves = Vec::new();
    let mut ranked50 = Vec::new();
    for c in 0..nc {
        for (t, &thr) in thresholds.iter().enumerate() {
            let (ranked, n) = ranked_class(dets, gts, c, thr);
            num_gt[c] = n;
            let flags: Vec<bool> = ranked.iter().map(|r| r.1).collect();
            ap[c][t] = average_precision(&flags, n, cfg.method);
            if t == 0 {
                if n > 0 {
                    pr_curves.push(PrCurve {
                        class_id: c,
                        recall: (0..=100).map(|k| k as f64 / 100.0).collect(),
                        precision: interpolated_precision(&pr_points(&flags, n)),
                    });
                }
                ranked50.push(ranked);
            }
        }
    }
    let present: Vec<usize> = (0..nc).filter(|&c| num_gt[c] > 0).collect();
    if present.is_empty() {
        return Err(Error::Usage("no ground-truth instances to evaluate against".into()));
    }
    let map_at = |t: usize| mean(present.iter().map(|&c| ap[c][t].unwrap_or(0.0)));
    let map50 = map_at(0);
    let map75 = map_at(5);
    let map5095 = mean((0..thresholds.len()).map(map_at));

    let confidence: Vec<f64> = (0..=100).map(|k| k as f64 / 100.0).collect();
    let mut f1 = Vec::new();
    let mut precision = Vec::new();
    let mut recall = Vec::new();
    for &tau in &confidence {
        let (mut ps, mut rs, mut fs) = (Vec::new(), Vec::new(), Vec::new());
        for &c in &present {
            let kept: Vec<bool> = ranked50[c].iter().filter(|r| r.0 >= tau).map(|r| r.1).collect();
            let tp = kept.iter().filter(|&&h| h).count() as f64;
            let p = if kept.is_empty() { 0.0 } else { tp / kept.len() as f64 };
            let r = tp / num_gt[c] as f64;
            ps.push(p);
            rs.push(r);
            fs.push(if p + r > 0.0 { 2.0 * p * r / (p + r) } else { 0.0 });
        }
        precision.push(mean(ps.into_iter()));
        recall.push(mean(rs.into_iter()));
        f1.push(mean(fs.into_iter()));
    }
    let best_index = f1
        .iter()
        .enumerate()
        .fold(0, |b, (i, &v)| if v > f1[b] { i } else { b });
    let f1_curve = F1Curve {
        best_confidence: confidence[best_index],
        best_f1: f1[best_index],
        best_index,
        confidence,
        f1,
        precision,
        recall,
    };
    let confusion = confusion_matrix(dets, gts, nc, 0.5, f1_curve.best_confidence);
    Ok(EvalReport {
        iou_thresholds: thresholds,
        ap,
        num_gt,
        map50,
        map75,
        map5095,
        pr_curves,
        f1_curve,
        confusion,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bbox::BBox;

    #[test]
    fn tp_fp_tp_fixture() {
        let ap = average_precision(&[true, false, true], 2, ApMethod::Interp101).unwrap();
        assert!((ap - (51.0 + 50.0 * 2.0 / 3.0) / 101.0).abs() < 1e-12);
        assert_eq!(average_precision(&[], 3, ApMethod::Interp101), Some(0.0));
        assert_eq!(average_precision(&[true, true], 2, ApMethod::Interp101), Some(1.0));
        assert_eq!(average_precision(&[true], 0, ApMethod::Interp101), None);
    }

    #[test]
    fn two_dets_one_gt() {
        let gt = GroundTruth {
            class_id: 0,
            bbox: BBox::new(0., 0., 10., 10.),
        };
        let d = |s| Detection {
            bbox: BBox::new(0., 0., 10., 10.),
            class_id: 0,
            score: s,
        };
        let m = match_detections(&[d(0.9), d(0.8)], &[gt], 0.5);
        assert_eq!(m, vec![Some(0), None]);
    }

    #[test]
    fn continuous_ap() {
        let ap = average_precision(&[true, false, true], 2, ApMethod::Continuous).unwrap();
        assert!((ap - (0.5 + 0.5 * 2.0 / 3.0)).abs() < 1e-12);
    }
}
