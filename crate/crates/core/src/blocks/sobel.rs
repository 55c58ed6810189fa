use crate::error::Result;
use crate::params::{Builder, Ctx, ParamId, ParamKind};
use crate::tensor::{conv2d, Conv2dOptions, Tensor};

pub const SOBEL_X: [f64; 9] = [-1.0, 0.0, 1.0, -2.0, 0.0, 2.0, -1.0, 0.0, 1.0];
pub const SOBEL_Y: [f64; 9] = [-1.0, -2.0, -1.0, 0.0, 0.0, 0.0, 1.0, 2.0, 1.0];

/// Fixed per-channel Sobel filtering; channel `c` of the output is
/// `|gx_c| + |gy_c|`, so channels and resolution are preserved. Borders are
/// replicated, so a constant map gives zero everywhere (up to rounding).
#[derive(Clone, Debug)]
pub struct SobelConv {
    pub channels: usize,
    kx: ParamId,
    ky: ParamId,
}

impl SobelConv {
    pub fn new(b: &mut Builder, channels: usize) -> Self {
        let stack = |k: &[f64; 9]| {
            Tensor::from_vec(&[channels, 1, 3, 3], k.repeat(channels)).expect("sobel kernel shape")
        };
        let kx = b.add("kx", ParamKind::Frozen, stack(&SOBEL_X));
        let ky = b.add("ky", ParamKind::Frozen, stack(&SOBEL_Y));
        SobelConv { channels, kx, ky }
    }

    /// The two directional responses (gx, gy).
    pub fn gradients(&self, ctx: &Ctx, x: &Tensor) -> Result<(Tensor, Tensor)> {
        let opts = Conv2dOptions::new(1, 0, self.channels);
        let xp = x.pad_replicate(1)?;
        Ok((conv2d(&xp, ctx.p(self.kx), None, opts)?, conv2d(&xp, ctx.p(self.ky), None, opts)?))
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let (gx, gy) = self.gradients(ctx, x)?;
        gx.abs().add(&gy.abs())
    }
}
