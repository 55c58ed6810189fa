//! Omni-Kernel: a bank of depthwise square and strip kernels with
//! frequency-channel attention (FCA), squeeze-excitation channel attention
//! (SCA) and a frequency gating module (FGM), plus its CSP wrapper.

use crate::blocks::{Conv, ConvBnAct};
use crate::error::{shape_err, Error, Result};
use crate::params::{Builder, Ctx, ParamId, ParamKind};
use crate::tensor::{conv2d, irfft2, rfft2, Conv2dOptions, Tensor};

/// Depthwise convolution with bias and "same" padding of an odd kernel.
#[derive(Clone, Debug)]
pub struct DepthwiseConv {
    pub kernel: (usize, usize),
    pub weight: ParamId,
    pub bias: ParamId,
    opts: Conv2dOptions,
}

impl DepthwiseConv {
    pub fn new(b: &mut Builder, channels: usize, kernel: (usize, usize)) -> Self {
        let (kh, kw) = kernel;
        DepthwiseConv {
            kernel,
            weight: b.uniform_fan_in("weight", &[channels, 1, kh, kw], kh * kw),
            bias: b.uniform_fan_in("bias", &[channels], kh * kw),
            opts: Conv2dOptions {
                stride: 1,
                padding: (kh / 2, kw / 2),
                groups: channels,
            },
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        conv2d(x, ctx.p(self.weight), Some(ctx.p(self.bias)), self.opts)
    }
}

/// Per-channel weights from pooled statistics, applied to the spectrum.
#[derive(Clone, Debug)]
pub struct Fca {
    pub conv: Conv,
}

impl Fca {
    pub fn new(b: &mut Builder, channels: usize) -> Self {
        Fca {
            conv: Conv::new(&mut b.child("conv"), channels, channels, 1, 1),
        }
    }

    /// sigmoid(conv1x1(GAP(x))), shape (N, C, 1, 1).
    pub fn weights(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        Ok(self.conv.forward(ctx, &x.global_avg_pool()?)?.sigmoid())
    }

    pub fn apply(x: &Tensor, w: &Tensor) -> Result<Tensor> {
        irfft2(&rfft2(x)?.mul_real(w)?)
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        Self::apply(x, &self.weights(ctx, x)?)
    }
}

/// Squeeze-and-excitation channel attention.
#[derive(Clone, Debug)]
pub struct Sca {
    pub fc1: Conv,
    pub fc2: Conv,
}

pub const SCA_REDUCTION: usize = 4;

impl Sca {
    pub fn new(b: &mut Builder, channels: usize, reduction: usize) -> Self {
        let hidden = (channels / reduction).max(1);
        Sca {
            fc1: Conv::new(&mut b.child("fc1"), channels, hidden, 1, 1),
            fc2: Conv::new(&mut b.child("fc2"), hidden, channels, 1, 1),
        }
    }

    /// Channel gates in (0, 1), shape (N, C, 1, 1).
    pub fn excitation(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let s = self.fc1.forward(ctx, &x.global_avg_pool()?)?.silu();
        Ok(self.fc2.forward(ctx, &s)?.sigmoid())
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        x.mul(&self.excitation(ctx, x)?)
    }
}

/// Learned real gate over every (channel, frequency) bin of the half spectrum.
#[derive(Clone, Debug)]
pub struct Fgm {
    pub logits: ParamId,
    pub size: (usize, usize),
}

impl Fgm {
    pub fn new(b: &mut Builder, channels: usize, size: (usize, usize)) -> Self {
        let (h, w) = size;
        Fgm {
            logits: b.add("gate", ParamKind::Trainable, Tensor::zeros(&[1, channels, h, w / 2 + 1])),
            size,
        }
    }

    pub fn gate(&self, ctx: &Ctx) -> Tensor {
        ctx.p(self.logits).sigmoid()
    }

    pub fn apply(x: &Tensor, gate: &Tensor) -> Result<Tensor> {
        irfft2(&rfft2(x)?.mul_real(gate)?)
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let (_, _, h, w) = x.dims4("fgm")?;
        if (h, w) != self.size {
            return shape_err("fgm", format!("built for {:?}, got {}x{}", self.size, h, w));
        }
        Self::apply(x, &self.gate(ctx))
    }
}

/// Depthwise branch bank: 1x1, kxk, 1xk and kx1.
#[derive(Clone, Debug)]
pub struct OmniKernel {
    pub channels: usize,
    pub k: usize,
    pub pre: Conv,
    pub branches: [DepthwiseConv; 4],
    pub fca: Fca,
    pub sca: Sca,
    pub fgm: Fgm,
    pub post: Conv,
}

impl OmniKernel {
    pub fn new(b: &mut Builder, channels: usize, k: usize, size: (usize, usize)) -> Result<Self> {
        if k.is_multiple_of(2) {
            return Err(Error::Config(format!("omni-kernel size {} must be odd", k)));
        }
        let shapes = [(1, 1), (k, k), (1, k), (k, 1)];
        let names = ["dw_1x1", "dw_square", "dw_h", "dw_v"];
        let branches = [0, 1, 2, 3].map(|i| DepthwiseConv::new(&mut b.child(names[i]), channels, shapes[i]));
        Ok(OmniKernel {
            channels,
            k,
            pre: Conv::new(&mut b.child("pre"), channels, channels, 1, 1),
            branches,
            fca: Fca::new(&mut b.child("fca"), channels),
            sca: Sca::new(&mut b.child("sca"), channels, SCA_REDUCTION),
            fgm: Fgm::new(&mut b.child("fgm"), channels, size),
            post: Conv::new(&mut b.child("post"), channels, channels, 1, 1),
        })
    }

    /// Responses of the four depthwise branches to `u`.
    pub fn branch_responses(&self, ctx: &Ctx, u: &Tensor) -> Result<Vec<Tensor>> {
        self.branches.iter().map(|br| br.forward(ctx, u)).collect()
    }

    /// post(SCA(FCA(sum of branches(u))) + FGM(u)) with u = SiLU(pre(x)).
    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let u = self.pre.forward(ctx, x)?.silu();
        let resp = self.branch_responses(ctx, &u)?;
        let mut bsum = resp[0].clone();
        for r in &resp[1..] {
            bsum = bsum.add(r)?;
        }
        let a = self.sca.forward(ctx, &self.fca.forward(ctx, &bsum)?)?;
        let g = self.fgm.forward(ctx, &u)?;
        self.post.forward(ctx, &a.add(&g)?)
    }
}

/// Intermediates of a CSPOKM pass.
#[derive(Clone, Debug)]
pub struct CspTrace {
    pub okm_in: Tensor,
    pub skip: Tensor,
    /// concat(okm_out, skip), the input of the final 1x1 block.
    pub fused_in: Tensor,
    pub output: Tensor,
}

/// 1x1 block, channel split into an Omni-Kernel share and a bypass share,
/// concat, 1x1 block.
#[derive(Clone, Debug)]
pub struct Cspokm {
    pub c_okm: usize,
    pub c_skip: usize,
    pub cv1: ConvBnAct,
    pub okm: OmniKernel,
    pub cv2: ConvBnAct,
}

impl Cspokm {
    pub fn new(
        b: &mut Builder,
        c_in: usize,
        c1: usize,
        c2: usize,
        e: f64,
        k: usize,
        size: (usize, usize),
    ) -> Result<Self> {
        let c_okm = (e * c1 as f64).round() as usize;
        if c_okm < 1 || c_okm >= c1 {
            return Err(Error::Config(format!(
                "cspokm split e={} of {} channels leaves an empty share",
                e, c1
            )));
        }
        Ok(Cspokm {
            c_okm,
            c_skip: c1 - c_okm,
            cv1: ConvBnAct::new(&mut b.child("cv1"), c_in, c1, 1, 1),
            okm: OmniKernel::new(&mut b.child("okm"), c_okm, k, size)?,
            cv2: ConvBnAct::new(&mut b.child("cv2"), c1, c2, 1, 1),
        })
    }

    pub fn trace(&self, ctx: &Ctx, x: &Tensor) -> Result<CspTrace> {
        let feat = self.cv1.forward(ctx, x)?;
        let mut parts = feat.split_channels(&[self.c_okm, self.c_skip])?;
        let skip = parts.pop().expect("two parts");
        let okm_in = parts.pop().expect("two parts");
        let okm_out = self.okm.forward(ctx, &okm_in)?;
        let fused_in = Tensor::concat_channels(&[okm_out, skip.clone()])?;
        let output = self.cv2.forward(ctx, &fused_in)?;
        Ok(CspTrace {
            okm_in,
            skip,
            fused_in,
            output,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        Ok(self.trace(ctx, x)?.output)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn split_arithmetic() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let c = Cspokm::new(&mut Builder::new(&mut store, &mut rng), 256, 256, 256, 0.25, 5, (8, 8)).unwrap();
        assert_eq!((c.c_okm, c.c_skip), (64, 192));
        assert!(Cspokm::new(&mut Builder::new(&mut store, &mut rng).child("x"), 2, 2, 2, 0.1, 5, (8, 8)).is_err());
    }

    #[test]
    fn shape_preserving() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let okm = OmniKernel::new(&mut Builder::new(&mut store, &mut rng), 8, 5, (6, 7)).unwrap();
        let x = Tensor::randn(&[2, 8, 6, 7], 1.0, &mut rng);
        assert_eq!(okm.forward(&Ctx::eval(&store), &x).unwrap().shape(), &[2, 8, 6, 7]);
    }
}
