use super::{C3k, Conv, ConvBnAct};
use crate::error::{Error, Result};
use crate::params::{Builder, Ctx, ParamId};
use crate::tensor::{scaled_dot_attention, Tensor};

/// Channels per head when the width allows it.
pub const HEAD_DIM: usize = 32;

pub fn heads_for(dim: usize) -> usize {
    if dim.is_multiple_of(HEAD_DIM) {
        dim / HEAD_DIM
    } else {
        1
    }
}

/// Multi-head self-attention over flattened spatial tokens, restricted to
/// `area` contiguous token segments (1 = global).
#[derive(Clone, Debug)]
pub struct AreaAttention {
    pub dim: usize,
    pub heads: usize,
    pub area: usize,
    pub qkv: Conv,
    pub proj: Conv,
}

/// q, k, v of an attention call, each (N * heads * area, L / area, head_dim).
pub struct Qkv {
    pub q: Tensor,
    pub k: Tensor,
    pub v: Tensor,
}

impl AreaAttention {
    pub fn new(b: &mut Builder, dim: usize, heads: usize, area: usize) -> Result<Self> {
        if heads == 0 || !dim.is_multiple_of(heads) {
            return Err(Error::Config(format!("attention dim {} not divisible by {} heads", dim, heads)));
        }
        Ok(AreaAttention {
            dim,
            heads,
            area,
            qkv: Conv::new(&mut b.child("qkv"), dim, 3 * dim, 1, 1),
            proj: Conv::new(&mut b.child("proj"), dim, dim, 1, 1),
        })
    }

    pub fn head_dim(&self) -> usize {
        self.dim / self.heads
    }

    pub fn scale(&self) -> f64 {
        1.0 / (self.head_dim() as f64).sqrt()
    }

    pub fn project_qkv(&self, ctx: &Ctx, x: &Tensor) -> Result<Qkv> {
        let (n, c, h, w) = x.dims4("area_attention")?;
        if c != self.dim {
            return Err(Error::Shape {
                op: "area_attention",
                msg: format!("input has {} channels, block expects {}", c, self.dim),
            });
        }
        let l = h * w;
        if self.area == 0 || l % self.area != 0 {
            return Err(Error::Usage(format!(
                "area_attention: {} tokens cannot be split into {} areas",
                l, self.area
            )));
        }
        let hd = self.head_dim();
        let t = self
            .qkv
            .forward(ctx, x)?
            .reshape(&[n, 3, self.heads, hd, l])?
            .permute(&[1, 0, 2, 4, 3])?;
        let part = |i: usize| -> Result<Tensor> {
            t.narrow(0, i, 1)?.reshape(&[n * self.heads * self.area, l / self.area, hd])
        };
        Ok(Qkv {
            q: part(0)?,
            k: part(1)?,
            v: part(2)?,
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let (n, c, h, w) = x.dims4("area_attention")?;
        let Qkv { q, k, v } = self.project_qkv(ctx, x)?;
        let o = scaled_dot_attention(&q, &k, &v, self.scale())?
            .reshape(&[n, self.heads, h * w, self.head_dim()])?
            .permute(&[0, 1, 3, 2])?
            .reshape(&[n, c, h, w])?;
        self.proj.forward(ctx, &o)
    }
}

/// Residual attention followed by a residual two-layer 1x1 MLP.
#[derive(Clone, Debug)]
pub struct ABlock {
    pub attn: AreaAttention,
    pub fc1: ConvBnAct,
    pub fc2: Conv,
}

pub const MLP_RATIO: f64 = 2.0;

impl ABlock {
    pub fn new(b: &mut Builder, dim: usize, heads: usize, area: usize) -> Result<Self> {
        let hidden = (dim as f64 * MLP_RATIO) as usize;
        Ok(ABlock {
            attn: AreaAttention::new(&mut b.child("attn"), dim, heads, area)?,
            fc1: ConvBnAct::new(&mut b.child("mlp.0"), dim, hidden, 1, 1),
            fc2: Conv::new(&mut b.child("mlp.1"), hidden, dim, 1, 1),
        })
    }

    /// Weights and biases of the two branch output layers.
    pub fn output_params(&self) -> [ParamId; 4] {
        [self.attn.proj.weight, self.attn.proj.bias, self.fc2.weight, self.fc2.bias]
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let x = x.add(&self.attn.forward(ctx, x)?)?;
        let m = self.fc2.forward(ctx, &self.fc1.forward(ctx, &x)?)?;
        x.add(&m)
    }
}

#[derive(Clone, Debug)]
pub enum A2Unit {
    Attention(Vec<ABlock>),
    C3k(C3k),
}

/// C2f-style wrapper whose units are pairs of ABlocks, or C3k units when
/// `use_c3k` is set.
#[derive(Clone, Debug)]
pub struct A2C2f {
    pub c_hidden: usize,
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
    pub units: Vec<A2Unit>,
}

impl A2C2f {
    pub fn new(b: &mut Builder, c_in: usize, c_out: usize, n: usize, area: usize, use_c3k: bool) -> Result<Self> {
        let c_ = (c_out / 2).max(1);
        let heads = heads_for(c_);
        let mut units = Vec::with_capacity(n);
        for i in 0..n {
            let mut ub = b.child(&format!("m.{i}"));
            units.push(if use_c3k {
                A2Unit::C3k(C3k::new(&mut ub, c_, c_, 2, 3))
            } else {
                A2Unit::Attention(vec![
                    ABlock::new(&mut ub.child("0"), c_, heads, area)?,
                    ABlock::new(&mut ub.child("1"), c_, heads, area)?,
                ])
            });
        }
        Ok(A2C2f {
            c_hidden: c_,
            cv1: ConvBnAct::new(&mut b.child("cv1"), c_in, c_, 1, 1),
            cv2: ConvBnAct::new(&mut b.child("cv2"), (1 + n) * c_, c_out, 1, 1),
            units,
        })
    }

    pub fn ablocks(&self) -> impl Iterator<Item = &ABlock> {
        self.units.iter().flat_map(|u| match u {
            A2Unit::Attention(v) => v.as_slice(),
            A2Unit::C3k(_) => &[],
        })
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let mut ys = vec![self.cv1.forward(ctx, x)?];
        for u in &self.units {
            let mut y = ys.last().expect("non-empty").clone();
            match u {
                A2Unit::Attention(blocks) => {
                    for blk in blocks {
                        y = blk.forward(ctx, &y)?;
                    }
                }
                A2Unit::C3k(c) => y = c.forward(ctx, &y)?,
            }
            ys.push(y);
        }
        self.cv2.forward(ctx, &Tensor::concat_channels(&ys)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn indivisible_area_is_usage_error() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let a = AreaAttention::new(&mut Builder::new(&mut store, &mut rng), 4, 2, 3).unwrap();
        let err = a.forward(&Ctx::eval(&store), &Tensor::zeros(&[1, 4, 2, 2])).unwrap_err();
        assert!(matches!(err, Error::Usage(_)));
    }

    #[test]
    fn heads_rule() {
        assert_eq!(heads_for(512), 16);
        assert_eq!(heads_for(16), 1);
    }
}
