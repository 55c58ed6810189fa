//! Hierarchical edge pyramid (HEM) and edge/semantic fusion (SEF).

use crate::blocks::{ConvBnAct, SobelConv};
use crate::error::{shape_err, Result};
use crate::params::{Builder, Ctx};
use crate::tensor::{maxpool2d, Tensor};

/// Edge features at strides 8, 16 and 32.
#[derive(Clone, Debug)]
pub struct EdgePyramid {
    pub e_p3: Tensor,
    pub e_p4: Tensor,
    pub e_p5: Tensor,
}

impl EdgePyramid {
    pub fn levels(&self) -> [&Tensor; 3] {
        [&self.e_p3, &self.e_p4, &self.e_p5]
    }

    /// Same shapes, all zeros.
    pub fn zeroed(&self) -> EdgePyramid {
        EdgePyramid {
            e_p3: Tensor::zeros(self.e_p3.shape()),
            e_p4: Tensor::zeros(self.e_p4.shape()),
            e_p5: Tensor::zeros(self.e_p5.shape()),
        }
    }
}

/// Sobel magnitude on the stride-4 map, three 2x2 max-pool stages, and a
/// 1x1 Conv-BN-SiLU per level. The first pool stage already brings the
/// edges to stride 8 so each level lines up with its fusion partner.
#[derive(Clone, Debug)]
pub struct Hem {
    pub sobel: SobelConv,
    pub proj: [ConvBnAct; 3],
}

impl Hem {
    pub fn new(b: &mut Builder, c_in: usize, c_out: [usize; 3]) -> Self {
        let sobel = SobelConv::new(&mut b.child("sobel"), c_in);
        let proj = [0, 1, 2].map(|i| ConvBnAct::new(&mut b.child(&format!("e_p{}", i + 3)), c_in, c_out[i], 1, 1));
        Hem { sobel, proj }
    }

    /// Sobel map followed by the three pooled stages, before projection.
    pub fn stages(&self, ctx: &Ctx, x_p2: &Tensor) -> Result<[Tensor; 4]> {
        let (_, _, h, w) = x_p2.dims4("hem")?;
        if h % 8 != 0 || w % 8 != 0 {
            return shape_err("hem", format!("spatial dims {}x{} must be divisible by 8", h, w));
        }
        let x0 = self.sobel.forward(ctx, x_p2)?;
        let x1 = maxpool2d(&x0, 2, 2, 0)?;
        let x2 = maxpool2d(&x1, 2, 2, 0)?;
        let x3 = maxpool2d(&x2, 2, 2, 0)?;
        Ok([x0, x1, x2, x3])
    }

    pub fn forward(&self, ctx: &Ctx, x_p2: &Tensor) -> Result<EdgePyramid> {
        let [_, x1, x2, x3] = self.stages(ctx, x_p2)?;
        Ok(EdgePyramid {
            e_p3: self.proj[0].forward(ctx, &x1)?,
            e_p4: self.proj[1].forward(ctx, &x2)?,
            e_p5: self.proj[2].forward(ctx, &x3)?,
        })
    }
}

/// concat(main, edge) -> 1x1 (out/2) -> 3x3 (out/2) -> 1x1 (out).
#[derive(Clone, Debug)]
pub struct Sef {
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
    pub cv3: ConvBnAct,
}

impl Sef {
    pub fn new(b: &mut Builder, c_main: usize, c_edge: usize, c_out: usize) -> Self {
        let mid = (c_out / 2).max(1);
        Sef {
            cv1: ConvBnAct::new(&mut b.child("cv1"), c_main + c_edge, mid, 1, 1),
            cv2: ConvBnAct::new(&mut b.child("cv2"), mid, mid, 3, 1),
            cv3: ConvBnAct::new(&mut b.child("cv3"), mid, c_out, 1, 1),
        }
    }

    pub fn forward(&self, ctx: &Ctx, x_main: &Tensor, x_edge: &Tensor) -> Result<Tensor> {
        let (n, _, h, w) = x_main.dims4("sef")?;
        let (ne, _, he, we) = x_edge.dims4("sef")?;
        if (n, h, w) != (ne, he, we) {
            return shape_err(
                "sef",
                format!("main (N={}, H={}, W={}) and edge (N={}, H={}, W={}) disagree", n, h, w, ne, he, we),
            );
        }
        let x = Tensor::concat_channels(&[x_main.clone(), x_edge.clone()])?;
        self.cv3.forward(ctx, &self.cv2.forward(ctx, &self.cv1.forward(ctx, &x)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn pyramid_halves_and_rejects_bad_size() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let hem = Hem::new(&mut Builder::new(&mut store, &mut rng), 4, [2, 3, 5]);
        let x = Tensor::randn(&[1, 4, 16, 24], 1.0, &mut rng);
        let ctx = Ctx::eval(&store);
        let p = hem.forward(&ctx, &x).unwrap();
        assert_eq!(p.e_p3.shape(), &[1, 2, 8, 12]);
        assert_eq!(p.e_p4.shape(), &[1, 3, 4, 6]);
        assert_eq!(p.e_p5.shape(), &[1, 5, 2, 3]);
        assert!(hem.forward(&ctx, &Tensor::zeros(&[1, 4, 12, 16])).is_err());
    }

    #[test]
    fn sef_rejects_spatial_mismatch() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let sef = Sef::new(&mut Builder::new(&mut store, &mut rng), 4, 2, 8);
        let ctx = Ctx::eval(&store);
        assert!(sef.forward(&ctx, &Tensor::zeros(&[1, 4, 4, 4]), &Tensor::zeros(&[1, 2, 2, 2])).is_err());
        let y = sef.forward(&ctx, &Tensor::zeros(&[1, 4, 4, 4]), &Tensor::zeros(&[1, 2, 4, 4])).unwrap();
        assert_eq!(y.shape(), &[1, 8, 4, 4]);
    }
}
