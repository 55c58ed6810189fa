//! Decoupled per-level regression and classification branches.

use crate::blocks::{Conv, ConvBnAct};
use crate::config::{ModelConfig, STRIDES};
use crate::error::Result;
use crate::params::{Builder, Ctx};
use crate::tensor::Tensor;

/// Prior foreground probability encoded in the initial class bias.
pub const CLS_PRIOR: f64 = 0.01;

#[derive(Clone, Debug)]
pub struct Branch {
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
    pub out: Conv,
}

impl Branch {
    fn new(b: &mut Builder, c_in: usize, hidden: usize, c_out: usize, bias: f64) -> Self {
        let cv1 = ConvBnAct::new(&mut b.child("0"), c_in, hidden, 3, 1);
        let cv2 = ConvBnAct::new(&mut b.child("1"), hidden, hidden, 3, 1);
        let out = Conv::new(&mut b.child("2"), hidden, c_out, 1, 1);
        b.set(out.bias, Tensor::full(&[c_out], bias));
        Branch { cv1, cv2, out }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        self.out.forward(ctx, &self.cv2.forward(ctx, &self.cv1.forward(ctx, x)?)?)
    }
}

#[derive(Clone, Debug)]
pub struct LevelHead {
    pub reg: Branch,
    pub cls: Branch,
}

/// Raw outputs of one level: reg (N, 4R, H, W) and cls logits (N, Nc, H, W).
#[derive(Clone, Debug)]
pub struct LevelOutput {
    pub reg: Tensor,
    pub cls: Tensor,
    pub stride: usize,
}

#[derive(Clone, Debug)]
pub struct HeadOutput {
    pub levels: Vec<LevelOutput>,
    pub dfl_bins: usize,
    pub num_classes: usize,
}

#[derive(Clone, Debug)]
pub struct Head {
    pub levels: Vec<LevelHead>,
    pub dfl_bins: usize,
    pub num_classes: usize,
}

impl Head {
    pub fn new(b: &mut Builder, cfg: &ModelConfig) -> Self {
        let chans = cfg.detect_channels();
        let r = cfg.dfl_bins;
        let nc = cfg.num_classes;
        let c2 = 16.max(chans[0] / 4).max(4 * r);
        let c3 = chans[0].max(nc.min(100));
        let cls_bias = -((1.0 - CLS_PRIOR) / CLS_PRIOR).ln();
        let levels = chans
            .iter()
            .enumerate()
            .map(|(i, &c)| {
                let mut lb = b.child(&format!("p{}", i + 3));
                LevelHead {
                    reg: Branch::new(&mut lb.child("reg"), c, c2, 4 * r, 1.0),
                    cls: Branch::new(&mut lb.child("cls"), c, c3, nc, cls_bias),
                }
            })
            .collect();
        Head {
            levels,
            dfl_bins: r,
            num_classes: nc,
        }
    }

    pub fn forward(&self, ctx: &Ctx, features: [&Tensor; 3]) -> Result<HeadOutput> {
        let levels = self
            .levels
            .iter()
            .zip(features)
            .zip(STRIDES)
            .map(|((lh, x), stride)| {
                Ok(LevelOutput {
                    reg: lh.reg.forward(ctx, x)?,
                    cls: lh.cls.forward(ctx, x)?,
                    stride,
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(HeadOutput {
            levels,
            dfl_bins: self.dfl_bins,
            num_classes: self.num_classes,
        })
    }
}

impl HeadOutput {
    pub fn batch(&self) -> usize {
        self.levels[0].reg.dim(0)
    }

    /// Anchor grids per level as (H, W, stride).
    pub fn grids(&self) -> Vec<(usize, usize, usize)> {
        self.levels.iter().map(|l| (l.reg.dim(2), l.reg.dim(3), l.stride)).collect()
    }

    /// Levels flattened to anchors: (N, A, 4R) distance logits and
    /// (N, A, Nc) class logits, anchors ordered level, row, column.
    pub fn flatten(&self) -> Result<(Tensor, Tensor)> {
        let flat = |t: &Tensor| -> Result<Tensor> {
            let (n, c, h, w) = t.dims4("head.flatten")?;
            t.reshape(&[n, c, h * w])?.permute(&[0, 2, 1])
        };
        let regs = self.levels.iter().map(|l| flat(&l.reg)).collect::<Result<Vec<_>>>()?;
        let clss = self.levels.iter().map(|l| flat(&l.cls)).collect::<Result<Vec<_>>>()?;
        Ok((Tensor::concat(&regs, 1)?, Tensor::concat(&clss, 1)?))
    }
}
