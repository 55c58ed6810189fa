//! Box decoding, non-maximum suppression and detection records.

use std::cmp::Ordering;
use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::assign::anchor_points;
use crate::bbox::{BBox, Detection};
use crate::error::{Error, Result};
use crate::head::HeadOutput;
use crate::loss::{decode_distances, distances_to_box};
use crate::tensor::sigmoid_scalar;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecodeConfig {
    /// Minimum class probability for a candidate.
    pub conf: f64,
    pub iou: f64,
    /// Candidates kept per image before suppression.
    pub pre_nms: usize,
    pub max_det: usize,
}

impl DecodeConfig {
    pub fn inference() -> Self {
        DecodeConfig {
            conf: 0.25,
            iou: 0.7,
            pre_nms: 3000,
            max_det: 300,
        }
    }

    /// Low threshold used when sweeping precision/recall.
    pub fn evaluation() -> Self {
        DecodeConfig {
            conf: 0.001,
            ..Self::inference()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.conf) {
            return Err(Error::Config(format!("conf {} outside [0, 1]", self.conf)));
        }
        if !(0.0..=1.0).contains(&self.iou) {
            return Err(Error::Config(format!("iou {} outside [0, 1]", self.iou)));
        }
        Ok(())
    }
}

/// Every (anchor, class) pair with probability above `conf`, boxes clamped to
/// the `(h, w)` image. Ordered anchor-major, then class.
pub fn decode_boxes(head: &HeadOutput, image_size: (usize, usize), conf: f64) -> Result<Vec<Vec<Detection>>> {
    let r = head.dfl_bins;
    let nc = head.num_classes;
    let anchors = anchor_points(&head.grids());
    let na = anchors.len();
    let (reg, cls) = head.flatten()?;
    let (reg, cls) = (reg.data(), cls.data());
    let (h, w) = (image_size.0 as f64, image_size.1 as f64);
    Ok((0..head.batch())
        .map(|img| {
            let mut dets = Vec::new();
            for (a, anchor) in anchors.iter().enumerate() {
                let row = img * na + a;
                let mut bbox = None;
                for c in 0..nc {
                    let score = sigmoid_scalar(cls[row * nc + c]);
                    if score > conf {
                        let b = *bbox.get_or_insert_with(|| {
                            distances_to_box(decode_distances(&reg[row * 4 * r..(row + 1) * 4 * r]), anchor).clamp(w, h)
                        });
                        dets.push(Detection {
                            bbox: b,
                            class_id: c,
                            score,
                        });
                    }
                }
            }
            dets
        })
        .collect())
}

fn order(a: &Detection, ia: usize, b: &Detection, ib: usize) -> Ordering {
    b.score.total_cmp(&a.score).then(a.class_id.cmp(&b.class_id)).then(ia.cmp(&ib))
}

/// Per-class greedy suppression. A detection is dropped when a kept
/// detection of its class overlaps it with IoU above `iou_threshold`.
/// Survivors come out by descending score, ties by class then input order.
pub fn nms(dets: &[Detection], iou_threshold: f64) -> Vec<Detection> {
    let mut idx: Vec<usize> = (0..dets.len()).collect();
    idx.sort_by(|&a, &b| order(&dets[a], a, &dets[b], b));
    let mut kept_by_class: std::collections::HashMap<usize, Vec<BBox>> = Default::default();
    let mut out = Vec::new();
    for i in idx {
        let d = dets[i];
        let kept = kept_by_class.entry(d.class_id).or_default();
        if kept.iter().all(|k| k.iou(&d.bbox) <= iou_threshold) {
            kept.push(d.bbox);
            out.push(d);
        }
    }
    out
}

/// Decoding, candidate capping, suppression and final capping.
pub fn postprocess(head: &HeadOutput, image_size: (usize, usize), cfg: &DecodeConfig) -> Result<Vec<Vec<Detection>>> {
    Ok(decode_boxes(head, image_size, cfg.conf)?
        .into_iter()
        .map(|mut dets| {
            if dets.len() > cfg.pre_nms {
                let mut idx: Vec<usize> = (0..dets.len()).collect();
                idx.sort_by(|&a, &b| order(&dets[a], a, &dets[b], b));
                idx.truncate(cfg.pre_nms);
                idx.sort_unstable();
                dets = idx.into_iter().map(|i| dets[i]).collect();
            }
            let mut kept = nms(&dets, cfg.iou);
            kept.truncate(cfg.max_det);
            kept
        })
        .collect())
}

/// One line of the detections file.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DetectionRecord {
    pub image_id: String,
    pub class_id: usize,
    pub score: f64,
    pub bbox: [f64; 4],
}

impl DetectionRecord {
    pub fn new(image_id: &str, d: &Detection) -> Self {
        DetectionRecord {
            image_id: image_id.to_string(),
            class_id: d.class_id,
            score: d.score,
            bbox: d.bbox.to_array(),
        }
    }
}

pub fn write_jsonl<W: Write>(mut out: W, records: &[DetectionRecord]) -> Result<()> {
    for r in records {
        serde_json::to_writer(&mut out, r)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn read_jsonl(text: &str) -> Result<Vec<DetectionRecord>> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| serde_json::from_str(l).map_err(Error::from))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn det(b: [f64; 4], c: usize, s: f64) -> Detection {
        Detection {
            bbox: BBox::from_array(b),
            class_id: c,
            score: s,
        }
    }

    #[test]
    fn identical_boxes_keep_best() {
        let d = [det([0., 0., 10., 10.], 0, 0.8), det([0., 0., 10., 10.], 0, 0.9)];
        let k = nms(&d, 0.5);
        assert_eq!(k.len(), 1);
        assert_eq!(k[0].score, 0.9);
    }

    #[test]
    fn classes_do_not_interact() {
        let d = [det([0., 0., 10., 10.], 0, 0.8), det([0., 0., 10., 10.], 1, 0.9)];
        assert_eq!(nms(&d, 0.5).len(), 2);
    }

    #[test]
    fn jsonl_roundtrip() {
        let recs = vec![DetectionRecord::new("img_0001", &det([1., 2., 3., 4.], 2, 0.5))];
        let mut buf = Vec::new();
        write_jsonl(&mut buf, &recs).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert!(text.contains("\"image_id\":\"img_0001\""));
        assert_eq!(read_jsonl(&text).unwrap(), recs);
    }
}
