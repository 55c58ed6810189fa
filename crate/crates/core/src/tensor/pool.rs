use std::sync::Arc;

use rayon::prelude::*;

use super::Tensor;
use crate::error::{shape_err, Result};

/// Max pooling with implicit -inf padding.
///
/// The gradient of each output cell flows to the first (row-major) position
/// attaining the window maximum.
pub fn maxpool2d(x: &Tensor, kernel: usize, stride: usize, padding: usize) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4("maxpool2d")?;
    if kernel == 0 || stride == 0 {
        return shape_err("maxpool2d", "kernel and stride must be >= 1");
    }
    if h + 2 * padding < kernel || w + 2 * padding < kernel {
        return shape_err(
            "maxpool2d",
            format!("window {} larger than padded input {}x{}", kernel, h + 2 * padding, w + 2 * padding),
        );
    }
    let ho = (h + 2 * padding - kernel) / stride + 1;
    let wo = (w + 2 * padding - kernel) / stride + 1;
    let xd = x.data();
    let planes: Vec<(Vec<f64>, Vec<usize>)> = (0..n * c)
        .into_par_iter()
        .map(|t| {
            let plane = &xd[t * h * w..(t + 1) * h * w];
            let mut vals = Vec::with_capacity(ho * wo);
            let mut arg = Vec::with_capacity(ho * wo);
            for oy in 0..ho {
                let y0 = (oy * stride) as isize - padding as isize;
                let ylo = y0.max(0) as usize;
                let yhi = ((y0 + kernel as isize) as usize).min(h);
                for ox in 0..wo {
                    let x0 = (ox * stride) as isize - padding as isize;
                    let xlo = x0.max(0) as usize;
                    let xhi = ((x0 + kernel as isize) as usize).min(w);
                    let mut best = f64::NEG_INFINITY;
                    let mut bi = usize::MAX;
                    for iy in ylo..yhi {
                        for ix in xlo..xhi {
                            let v = plane[iy * w + ix];
                            if v > best || bi == usize::MAX {
                                best = v;
                                bi = iy * w + ix;
                            }
                        }
                    }
                    vals.push(best);
                    arg.push(bi);
                }
            }
            (vals, arg)
        })
        .collect();
    let mut out = Vec::with_capacity(n * c * ho * wo);
    let mut argmax = Vec::with_capacity(n * c * ho * wo);
    for (t, (v, a)) in planes.into_iter().enumerate() {
        out.extend(v);
        // a window lying entirely in padding has no source; route nowhere
        argmax.extend(a.into_iter().map(|i| if i == usize::MAX { usize::MAX } else { t * h * w + i }));
    }
    let total = x.numel();
    let argmax = Arc::new(argmax);
    Ok(Tensor::from_op(
        "maxpool2d",
        vec![n, c, ho, wo],
        Arc::new(out),
        vec![x.clone()],
        move |g, _| {
            let mut gx = vec![0.0; total];
            for (k, &i) in argmax.iter().enumerate() {
                if i != usize::MAX {
                    gx[i] += g[k];
                }
            }
            vec![Some(gx)]
        },
    ))
}

/// Nearest-neighbour 2x upsampling: every pixel becomes a 2x2 block.
pub fn upsample_nearest2x(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4("upsample_nearest2x")?;
    let (h2, w2) = (2 * h, 2 * w);
    let xd = x.data();
    let mut out = vec![0.0; n * c * h2 * w2];
    out.par_chunks_mut(h2 * w2).enumerate().for_each(|(t, dst)| {
        let plane = &xd[t * h * w..(t + 1) * h * w];
        for oy in 0..h2 {
            let src = &plane[(oy / 2) * w..(oy / 2 + 1) * w];
            for ox in 0..w2 {
                dst[oy * w2 + ox] = src[ox / 2];
            }
        }
    });
    Ok(Tensor::from_op(
        "upsample_nearest2x",
        vec![n, c, h2, w2],
        Arc::new(out),
        vec![x.clone()],
        move |g, _| {
            let mut gx = vec![0.0; n * c * h * w];
            for t in 0..n * c {
                for oy in 0..h2 {
                    for ox in 0..w2 {
                        gx[t * h * w + (oy / 2) * w + ox / 2] += g[t * h2 * w2 + oy * w2 + ox];
                    }
                }
            }
            vec![Some(gx)]
        },
    ))
}
