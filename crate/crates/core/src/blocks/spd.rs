use super::ConvBnAct;
use crate::error::{shape_err, Result};
use crate::params::{Builder, Ctx};
use crate::tensor::Tensor;

/// Sub-pixel offsets (row, col) in the order their planes are stacked.
pub const SPD_ORDER: [(usize, usize); 4] = [(0, 0), (1, 0), (0, 1), (1, 1)];

/// (N, C, H, W) -> (N, 4C, H/2, W/2). Output channel `q*C + c` holds
/// `x[c, 2i + dy, 2j + dx]` with `(dy, dx) = SPD_ORDER[q]`.
pub fn space_to_depth(x: &Tensor) -> Result<Tensor> {
    let (n, c, h, w) = x.dims4("space_to_depth")?;
    if h % 2 != 0 || w % 2 != 0 {
        return shape_err("space_to_depth", format!("H = {} and W = {} must be even", h, w));
    }
    let (h2, w2) = (h / 2, w / 2);
    let mut src = Vec::with_capacity(x.numel());
    for b in 0..n {
        for &(dy, dx) in &SPD_ORDER {
            for ch in 0..c {
                for i in 0..h2 {
                    for j in 0..w2 {
                        src.push(((b * c + ch) * h + 2 * i + dy) * w + 2 * j + dx);
                    }
                }
            }
        }
    }
    Ok(x.rearrange("space_to_depth", vec![n, 4 * c, h2, w2], src))
}

/// Exact inverse of [`space_to_depth`].
pub fn depth_to_space(x: &Tensor) -> Result<Tensor> {
    let (n, c4, h2, w2) = x.dims4("depth_to_space")?;
    if c4 % 4 != 0 {
        return shape_err("depth_to_space", format!("C = {} must be divisible by 4", c4));
    }
    let c = c4 / 4;
    let (h, w) = (2 * h2, 2 * w2);
    let mut src = vec![0; x.numel()];
    for b in 0..n {
        for (q, &(dy, dx)) in SPD_ORDER.iter().enumerate() {
            for ch in 0..c {
                for i in 0..h2 {
                    for j in 0..w2 {
                        let from = ((b * c4 + q * c + ch) * h2 + i) * w2 + j;
                        src[((b * c + ch) * h + 2 * i + dy) * w + 2 * j + dx] = from;
                    }
                }
            }
        }
    }
    Ok(x.rearrange("depth_to_space", vec![n, c, h, w], src))
}

/// Space-to-depth followed by a 3x3 Conv-BN-SiLU.
#[derive(Clone, Debug)]
pub struct SpdConv {
    pub conv: ConvBnAct,
}

impl SpdConv {
    pub fn new(b: &mut Builder, c_in: usize, c_out: usize) -> Self {
        SpdConv {
            conv: ConvBnAct::new(&mut b.child("conv"), 4 * c_in, c_out, 3, 1),
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        self.conv.forward(ctx, &space_to_depth(x)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn documented_order() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        let y = space_to_depth(&x).unwrap();
        assert_eq!(y.shape(), &[1, 4, 1, 1]);
        assert_eq!(y.data(), &[1., 3., 2., 4.]);
        assert_eq!(depth_to_space(&y).unwrap().data(), x.data());
    }

    #[test]
    fn odd_extent_rejected() {
        assert!(space_to_depth(&Tensor::zeros(&[1, 1, 3, 4])).is_err());
    }
}
