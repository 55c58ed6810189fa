//! Batched prediction and end-to-end evaluation of a model.

use crate::bbox::Detection;
use crate::data::{batch_tensor, Image, Sample};
use crate::detect::{postprocess, DecodeConfig};
use crate::error::Result;
use crate::eval::{evaluate, ApMethod, EvalConfig, EvalReport};
use crate::model::HieraEdgeNet;
use crate::params::{Ctx, ForwardOptions, ParamStore};
use crate::tensor::no_grad;

/// Detections per image in eval mode.
pub fn predict(
    model: &HieraEdgeNet,
    store: &ParamStore,
    images: &[&Image],
    decode: &DecodeConfig,
    batch: usize,
    opts: ForwardOptions,
) -> Result<Vec<Vec<Detection>>> {
    let size = model.config.input_size;
    let mut out = Vec::with_capacity(images.len());
    for chunk in images.chunks(batch.max(1)) {
        let resized: Vec<Image> = chunk.iter().map(|im| im.resize(size.0, size.1)).collect();
        let refs: Vec<&Image> = resized.iter().collect();
        let x = batch_tensor(&refs)?;
        let dets = no_grad(|| {
            let ctx = Ctx::eval(store).with_options(opts);
            let head = model.forward(&ctx, &x)?;
            postprocess(&head, size, decode)
        })?;
        // Map boxes back to each image's own pixel grid.
        for (im, d) in chunk.iter().zip(dets) {
            let sx = im.width as f64 / size.1 as f64;
            let sy = im.height as f64 / size.0 as f64;
            out.push(
                d.into_iter()
                    .map(|mut det| {
                        det.bbox.x1 *= sx;
                        det.bbox.x2 *= sx;
                        det.bbox.y1 *= sy;
                        det.bbox.y2 *= sy;
                        det
                    })
                    .collect(),
            );
        }
    }
    Ok(out)
}

/// Runs prediction with the evaluation decode settings and scores it.
pub fn evaluate_model(model: &HieraEdgeNet, store: &ParamStore, samples: &[&Sample], batch: usize) -> Result<EvalReport> {
    let images: Vec<&Image> = samples.iter().map(|s| &s.image).collect();
    let dets = predict(model, store, &images, &DecodeConfig::evaluation(), batch, ForwardOptions::default())?;
    let gts: Vec<_> = samples.iter().map(|s| s.gts.clone()).collect();
    evaluate(
        &dets,
        &gts,
        &EvalConfig {
            num_classes: model.config.num_classes,
            method: ApMethod::Interp101,
        },
    )
}
