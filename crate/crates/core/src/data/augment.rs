use rand::seq::IndexedRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{Image, Sample};
use crate::bbox::{BBox, GroundTruth};

/// Boxes smaller than this many square pixels after a mosaic are dropped.
pub const MIN_BOX_AREA: f64 = 4.0;

/// Per-sample probabilities of each transform.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AugmentPolicy {
    pub mosaic: f64,
    pub blur: f64,
    pub max_blur_sigma: f64,
    pub color: f64,
    /// Gains drawn from `1 +- color_strength`, biases from `+- color_strength / 2`.
    pub color_strength: f64,
    pub flip: f64,
}

impl AugmentPolicy {
    pub fn none() -> Self {
        AugmentPolicy {
            mosaic: 0.0,
            blur: 0.0,
            max_blur_sigma: 0.0,
            color: 0.0,
            color_strength: 0.0,
            flip: 0.0,
        }
    }

    pub fn is_identity(&self) -> bool {
        self.mosaic <= 0.0 && self.blur <= 0.0 && self.color <= 0.0 && self.flip <= 0.0
    }

    /// Transforms `sample`; mosaic partners are drawn from `pool`.
    pub fn apply<R: Rng + ?Sized>(&self, sample: &Sample, pool: &[&Sample], rng: &mut R) -> Sample {
        let mut s = if !pool.is_empty() && rng.random_bool(self.mosaic.clamp(0.0, 1.0)) {
            let others: Vec<&Sample> = (0..3).map(|_| *pool.choose(rng).expect("non-empty pool")).collect();
            mosaic([sample, others[0], others[1], others[2]])
        } else {
            sample.clone()
        };
        if rng.random_bool(self.flip.clamp(0.0, 1.0)) {
            s = hflip(&s);
        }
        if rng.random_bool(self.blur.clamp(0.0, 1.0)) {
            let sigma = rng.random_range(0.0..=self.max_blur_sigma.max(0.0));
            s.image = gaussian_blur(&s.image, sigma);
        }
        if rng.random_bool(self.color.clamp(0.0, 1.0)) {
            let k = self.color_strength;
            let gains = [0; 3].map(|_| 1.0 + rng.random_range(-k..=k));
            let biases = [0; 3].map(|_| rng.random_range(-k / 2.0..=k / 2.0));
            s.image = color_shift(&s.image, gains, biases);
        }
        s
    }
}

/// Mirrors the image left-right; `x -> W - x`.
pub fn hflip(s: &Sample) -> Sample {
    let img = &s.image;
    let mut out = Image::new(img.height, img.width);
    for c in 0..3 {
        for y in 0..img.height {
            for x in 0..img.width {
                out.set(c, y, img.width - 1 - x, img.get(c, y, x));
            }
        }
    }
    let w = img.width as f64;
    Sample {
        id: s.id.clone(),
        image: out,
        gts: s
            .gts
            .iter()
            .map(|g| GroundTruth {
                class_id: g.class_id,
                bbox: BBox::new(w - g.bbox.x2, g.bbox.y1, w - g.bbox.x1, g.bbox.y2),
            })
            .collect(),
    }
}

fn gaussian_kernel(sigma: f64) -> Vec<f64> {
    let r = (3.0 * sigma).ceil() as i64;
    let k: Vec<f64> = (-r..=r).map(|i| (-(i * i) as f64 / (2.0 * sigma * sigma)).exp()).collect();
    let s: f64 = k.iter().sum();
    k.into_iter().map(|v| v / s).collect()
}

/// Separable Gaussian blur with edge replication; `sigma <= 0` is the identity.
pub fn gaussian_blur(img: &Image, sigma: f64) -> Image {
    if sigma <= 0.0 {
        return img.clone();
    }
    let k = gaussian_kernel(sigma);
    let r = (k.len() / 2) as i64;
    let (h, w) = (img.height as i64, img.width as i64);
    let mut tmp = Image::new(img.height, img.width);
    let mut out = Image::new(img.height, img.width);
    for c in 0..3 {
        for y in 0..h {
            for x in 0..w {
                let v = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * img.get(c, y as usize, (x + i as i64 - r).clamp(0, w - 1) as usize))
                    .sum();
                tmp.set(c, y as usize, x as usize, v);
            }
        }
        for y in 0..h {
            for x in 0..w {
                let v = k
                    .iter()
                    .enumerate()
                    .map(|(i, kv)| kv * tmp.get(c, (y + i as i64 - r).clamp(0, h - 1) as usize, x as usize))
                    .sum();
                out.set(c, y as usize, x as usize, v);
            }
        }
    }
    out
}

/// `clamp(gain_c * v + bias_c, 0, 1)` per channel.
pub fn color_shift(img: &Image, gains: [f64; 3], biases: [f64; 3]) -> Image {
    let mut out = img.clone();
    for c in 0..3 {
        for v in out.plane_mut(c) {
            *v = (gains[c] * *v + biases[c]).clamp(0.0, 1.0);
        }
    }
    out
}

/// 2x2 tiling of four samples, each shrunk to a quadrant of the first
/// sample's size. Boxes follow `x -> x * qw / W_k + ox`.
pub fn mosaic(parts: [&Sample; 4]) -> Sample {
    let (h, w) = (parts[0].image.height, parts[0].image.width);
    let (qh, qw) = (h / 2, w / 2);
    let mut out = Image::new(h, w);
    let mut gts = Vec::new();
    for (k, s) in parts.iter().enumerate() {
        let (oy, ox) = ((k / 2) * qh, (k % 2) * qw);
        let small = s.image.resize(qh, qw);
        for c in 0..3 {
            for y in 0..qh {
                for x in 0..qw {
                    out.set(c, oy + y, ox + x, small.get(c, y, x));
                }
            }
        }
        let sx = qw as f64 / s.image.width as f64;
        let sy = qh as f64 / s.image.height as f64;
        for g in &s.gts {
            let b = BBox::new(
                g.bbox.x1 * sx + ox as f64,
                g.bbox.y1 * sy + oy as f64,
                g.bbox.x2 * sx + ox as f64,
                g.bbox.y2 * sy + oy as f64,
            );
            if b.area() >= MIN_BOX_AREA {
                gts.push(GroundTruth {
                    class_id: g.class_id,
                    bbox: b,
                });
            }
        }
    }
    Sample {
        id: parts[0].id.clone(),
        image: out,
        gts,
    }
}
