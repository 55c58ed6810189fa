use crate::error::Result;
use crate::params::{Builder, Ctx, ParamId, ParamKind};
use crate::tensor::{batchnorm2d, conv2d, Activation, BatchNormStats, Conv2dOptions, Tensor, BN_EPS};

/// Convolution (no bias) followed by batch normalization and an activation.
#[derive(Clone, Debug)]
pub struct ConvBnAct {
    pub c_in: usize,
    pub c_out: usize,
    pub kernel: (usize, usize),
    pub opts: Conv2dOptions,
    pub act: Activation,
    weight: ParamId,
    gamma: ParamId,
    beta: ParamId,
    running_mean: ParamId,
    running_var: ParamId,
}

impl ConvBnAct {
    /// Square kernel, "same" padding, SiLU.
    pub fn new(b: &mut Builder, c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        Self::with(b, c_in, c_out, (k, k), stride, 1, Activation::Silu)
    }

    pub fn with(
        b: &mut Builder,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: usize,
        groups: usize,
        act: Activation,
    ) -> Self {
        let (kh, kw) = kernel;
        let cg = c_in / groups;
        let weight = b.uniform_fan_in("conv.weight", &[c_out, cg, kh, kw], cg * kh * kw);
        let gamma = b.add("bn.weight", ParamKind::Trainable, Tensor::ones(&[c_out]));
        let beta = b.add("bn.bias", ParamKind::Trainable, Tensor::zeros(&[c_out]));
        let running_mean = b.add("bn.running_mean", ParamKind::Buffer, Tensor::zeros(&[c_out]));
        let running_var = b.add("bn.running_var", ParamKind::Buffer, Tensor::ones(&[c_out]));
        ConvBnAct {
            c_in,
            c_out,
            kernel,
            opts: Conv2dOptions {
                stride,
                padding: (kh / 2, kw / 2),
                groups,
            },
            act,
            weight,
            gamma,
            beta,
            running_mean,
            running_var,
        }
    }

    pub fn weight_id(&self) -> ParamId {
        self.weight
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let y = conv2d(x, ctx.p(self.weight), None, self.opts)?;
        let stats = BatchNormStats {
            mean: ctx.p(self.running_mean).to_vec(),
            var: ctx.p(self.running_var).to_vec(),
        };
        let (y, updated) = batchnorm2d(&y, ctx.p(self.gamma), ctx.p(self.beta), &stats, ctx.train, BN_EPS)?;
        if let Some(u) = updated {
            let c = self.c_out;
            ctx.push_update(self.running_mean, Tensor::from_vec(&[c], u.mean)?);
            ctx.push_update(self.running_var, Tensor::from_vec(&[c], u.var)?);
        }
        Ok(y.activate(self.act))
    }
}

/// Plain convolution with bias and no normalization.
#[derive(Clone, Debug)]
pub struct Conv {
    pub c_in: usize,
    pub c_out: usize,
    pub opts: Conv2dOptions,
    pub weight: ParamId,
    pub bias: ParamId,
}

impl Conv {
    pub fn new(b: &mut Builder, c_in: usize, c_out: usize, k: usize, stride: usize) -> Self {
        let fan_in = c_in * k * k;
        let weight = b.uniform_fan_in("weight", &[c_out, c_in, k, k], fan_in);
        let bias = b.uniform_fan_in("bias", &[c_out], fan_in);
        Conv {
            c_in,
            c_out,
            opts: Conv2dOptions::new(stride, k / 2, 1),
            weight,
            bias,
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        conv2d(x, ctx.p(self.weight), Some(ctx.p(self.bias)), self.opts)
    }
}
