//! Gradient-weighted class activation maps at two network taps.

use serde::{Deserialize, Serialize};

use crate::data::{batch_tensor, Image};
use crate::error::{Error, Result};
use crate::model::HieraEdgeNet;
use crate::params::{Ctx, ParamStore};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum CamTap {
    /// Stride-8 feature map entering the detection head.
    DetectP3,
    /// Attention-refined deepest backbone feature.
    BackboneP5,
}

impl CamTap {
    pub fn name(self) -> &'static str {
        match self {
            CamTap::DetectP3 => "detect_p3",
            CamTap::BackboneP5 => "backbone_p5",
        }
    }
}

#[derive(Clone, Debug)]
pub struct CamMap {
    pub tap: CamTap,
    /// Normalized heatmap at input resolution, row-major (H, W).
    pub heat: Vec<f64>,
    pub height: usize,
    pub width: usize,
}

impl CamMap {
    /// Pixel-center coordinates of the hottest pixel (first on ties).
    pub fn argmax(&self) -> (f64, f64) {
        let i = self
            .heat
            .iter()
            .enumerate()
            .fold(0, |b, (i, &v)| if v > self.heat[b] { i } else { b });
        ((i % self.width) as f64 + 0.5, (i / self.width) as f64 + 0.5)
    }
}

#[derive(Clone, Debug)]
pub struct CamOutput {
    pub class_id: usize,
    /// Logit that was differentiated: the class's strongest anchor.
    pub score: f64,
    pub maps: Vec<CamMap>,
}

/// `relu(sum_k mean(grad_k) * act_k)` for one (C, h, w) activation, scaled
/// so the maximum is 1 (all zeros stay zeros).
pub fn cam_from(act: &[f64], grad: &[f64], channels: usize, hw: usize) -> Vec<f64> {
    let mut cam = vec![0.0; hw];
    for k in 0..channels {
        let g = &grad[k * hw..(k + 1) * hw];
        let alpha = g.iter().sum::<f64>() / hw as f64;
        if alpha == 0.0 {
            continue;
        }
        for (c, a) in cam.iter_mut().zip(&act[k * hw..(k + 1) * hw]) {
            *c += alpha * a;
        }
    }
    let mut max = 0.0f64;
    for c in cam.iter_mut() {
        *c = c.max(0.0);
        max = max.max(*c);
    }
    if max > 0.0 {
        cam.iter_mut().for_each(|c| *c /= max);
    }
    cam
}

/// Bilinear resize of a single-channel map with pixel-center alignment.
pub fn upsample_map(src: &[f64], h: usize, w: usize, out_h: usize, out_w: usize) -> Vec<f64> {
    let mut out = vec![0.0; out_h * out_w];
    let (sy, sx) = (h as f64 / out_h as f64, w as f64 / out_w as f64);
    for y in 0..out_h {
        let fy = ((y as f64 + 0.5) * sy - 0.5).clamp(0.0, (h - 1) as f64);
        let (y0, ty) = (fy.floor() as usize, fy.fract());
        let y1 = (y0 + 1).min(h - 1);
        for x in 0..out_w {
            let fx = ((x as f64 + 0.5) * sx - 0.5).clamp(0.0, (w - 1) as f64);
            let (x0, tx) = (fx.floor() as usize, fx.fract());
            let x1 = (x0 + 1).min(w - 1);
            let top = src[y0 * w + x0] * (1.0 - tx) + src[y0 * w + x1] * tx;
            let bot = src[y1 * w + x0] * (1.0 - tx) + src[y1 * w + x1] * tx;
            out[y * out_w + x] = top * (1.0 - ty) + bot * ty;
        }
    }
    out
}

/// Grad-CAM of `class_id` for one image, at both taps, in eval mode.
pub fn grad_cam(model: &HieraEdgeNet, store: &ParamStore, image: &Image, class_id: usize) -> Result<CamOutput> {
    let nc = model.config.num_classes;
    if class_id >= nc {
        return Err(Error::Usage(format!("class {class_id} not in model with {nc} classes")));
    }
    let (h, w) = model.config.input_size;
    let resized = image.resize(h, w);
    // The input is marked as a leaf so that the graph is recorded.
    let x = batch_tensor(&[&resized])?.requires_grad();
    let ctx = Ctx::eval(store);
    let trace = model.trace(&ctx, &x)?;
    let taps = [
        (CamTap::DetectP3, trace.features.detect_p3.clone()),
        (CamTap::BackboneP5, trace.backbone_p5.clone()),
    ];
    for (_, t) in &taps {
        t.retain_grad();
    }
    let head = model.head.forward(&ctx, trace.features.levels())?;
    let (_, cls) = head.flatten()?;
    let logits = cls.data();
    let anchors = logits.len() / nc;
    let best = (0..anchors)
        .max_by(|&a, &b| logits[a * nc + class_id].total_cmp(&logits[b * nc + class_id]).then(b.cmp(&a)))
        .unwrap_or(0);
    let mut onehot = vec![0.0; logits.len()];
    onehot[best * nc + class_id] = 1.0;
    let score = cls.mul(&Tensor::from_vec(cls.shape(), onehot)?)?.sum();
    score.backward()?;
    let maps = taps
        .iter()
        .map(|(tap, t)| {
            let (_, c, th, tw) = t.dims4("grad_cam")?;
            let grad = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
            let cam = cam_from(t.data(), &grad, c, th * tw);
            Ok(CamMap {
                tap: *tap,
                heat: upsample_map(&cam, th, tw, h, w),
                height: h,
                width: w,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CamOutput {
        class_id,
        score: score.item(),
        maps,
    })
}

/// Mean absolute activation per pixel of an (N, C, H, W) map for image 0,
/// scaled to [0, 1].
pub fn energy_map(t: &Tensor) -> Result<(Vec<f64>, usize, usize)> {
    let (_, c, h, w) = t.dims4("energy_map")?;
    let d = t.data();
    let mut e = vec![0.0; h * w];
    for k in 0..c {
        for (i, v) in e.iter_mut().enumerate() {
            *v += d[k * h * w + i].abs() / c as f64;
        }
    }
    let max = e.iter().cloned().fold(0.0, f64::max);
    if max > 0.0 {
        e.iter_mut().for_each(|v| *v /= max);
    }
    Ok((e, h, w))
}
