use std::sync::Arc;

use rayon::prelude::*;

use super::Tensor;
use crate::error::{shape_err, Error, Result};

pub const BN_EPS: f64 = 1e-5;
/// Weight of the current batch in the running-statistics update.
pub const BN_MOMENTUM: f64 = 0.03;

/// Per-channel running mean and (unbiased) variance.
#[derive(Clone, Debug, PartialEq)]
pub struct BatchNormStats {
    pub mean: Vec<f64>,
    pub var: Vec<f64>,
}

impl BatchNormStats {
    pub fn new(channels: usize) -> Self {
        BatchNormStats {
            mean: vec![0.0; channels],
            var: vec![1.0; channels],
        }
    }
}

/// Batch normalization over (N, H, W) per channel, followed by the affine
/// map `gamma * xhat + beta`.
///
/// In training mode the batch statistics are used and the updated running
/// statistics are returned alongside the output; the caller decides whether
/// to commit them. In eval mode the running statistics are used.
pub fn batchnorm2d(
    x: &Tensor,
    gamma: &Tensor,
    beta: &Tensor,
    running: &BatchNormStats,
    training: bool,
    eps: f64,
) -> Result<(Tensor, Option<BatchNormStats>)> {
    let (n, c, h, w) = x.dims4("batchnorm2d")?;
    if gamma.shape() != [c] || beta.shape() != [c] || running.mean.len() != c || running.var.len() != c {
        return shape_err("batchnorm2d", format!("affine/statistics extents must equal C = {}", c));
    }
    let hw = h * w;
    let m = n * hw;
    if training && m < 2 {
        return Err(Error::Usage(format!(
            "batchnorm2d: training mode needs N*H*W >= 2, got {}",
            m
        )));
    }
    let xd = x.data();
    let (mean, var): (Vec<f64>, Vec<f64>) = if training {
        (0..c)
            .into_par_iter()
            .map(|ch| {
                let vals = || (0..n).flat_map(move |b| xd[(b * c + ch) * hw..(b * c + ch + 1) * hw].iter());
                let mu = vals().sum::<f64>() / m as f64;
                let var = vals().map(|v| (v - mu) * (v - mu)).sum::<f64>() / m as f64;
                (mu, var)
            })
            .unzip()
    } else {
        (running.mean.clone(), running.var.clone())
    };
    let inv_std: Vec<f64> = var.iter().map(|v| 1.0 / (v + eps).sqrt()).collect();
    let gd = gamma.data();
    let bd = beta.data();
    let mut xhat = vec![0.0; xd.len()];
    let mut out = vec![0.0; xd.len()];
    xhat.par_chunks_mut(hw)
        .zip(out.par_chunks_mut(hw))
        .enumerate()
        .for_each(|(t, (xh, o))| {
            let ch = t % c;
            let src = &xd[t * hw..(t + 1) * hw];
            for i in 0..hw {
                xh[i] = (src[i] - mean[ch]) * inv_std[ch];
                o[i] = gd[ch] * xh[i] + bd[ch];
            }
        });
    let updated = training.then(|| {
        let unbias = m as f64 / (m as f64 - 1.0);
        BatchNormStats {
            mean: running
                .mean
                .iter()
                .zip(&mean)
                .map(|(r, b)| (1.0 - BN_MOMENTUM) * r + BN_MOMENTUM * b)
                .collect(),
            var: running
                .var
                .iter()
                .zip(&var)
                .map(|(r, b)| (1.0 - BN_MOMENTUM) * r + BN_MOMENTUM * b * unbias)
                .collect(),
        }
    });
    let xhat = Arc::new(xhat);
    let gamma_v = Arc::new(gd.to_vec());
    let y = Tensor::from_op(
        "batchnorm2d",
        vec![n, c, h, w],
        Arc::new(out),
        vec![x.clone(), gamma.clone(), beta.clone()],
        move |g, needs| {
            let mut dgamma = vec![0.0; c];
            let mut dbeta = vec![0.0; c];
            for t in 0..n * c {
                let ch = t % c;
                let gs = &g[t * hw..(t + 1) * hw];
                let xs = &xhat[t * hw..(t + 1) * hw];
                dbeta[ch] += gs.iter().sum::<f64>();
                dgamma[ch] += gs.iter().zip(xs).map(|(a, b)| a * b).sum::<f64>();
            }
            let dx = needs[0].then(|| {
                let mut dx = vec![0.0; g.len()];
                let mf = m as f64;
                for t in 0..n * c {
                    let ch = t % c;
                    let gs = &g[t * hw..(t + 1) * hw];
                    let xs = &xhat[t * hw..(t + 1) * hw];
                    let d = &mut dx[t * hw..(t + 1) * hw];
                    let k = gamma_v[ch] * inv_std[ch];
                    if training {
                        // dxhat = g * gamma; dx = inv_std/M * (M dxhat - sum dxhat - xhat sum(dxhat xhat))
                        for i in 0..hw {
                            d[i] = k * (gs[i] - dbeta[ch] / mf - xs[i] * dgamma[ch] / mf);
                        }
                    } else {
                        for i in 0..hw {
                            d[i] = k * gs[i];
                        }
                    }
                }
                dx
            });
            vec![dx, needs[1].then_some(dgamma), needs[2].then_some(dbeta)]
        },
    );
    Ok((y, updated))
}
