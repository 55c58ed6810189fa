use super::ConvBnAct;
use crate::error::Result;
use crate::params::{Builder, Ctx};
use crate::tensor::{maxpool2d, Tensor};

/// Serial max-pool pyramid: three stride-1 pools of size `k` whose stacked
/// receptive fields are k, 2k-1 and 3k-2.
#[derive(Clone, Debug)]
pub struct Sppf {
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
    pub k: usize,
}

impl Sppf {
    pub fn new(b: &mut Builder, c_in: usize, c_out: usize, k: usize) -> Self {
        let c_ = c_in / 2;
        Sppf {
            cv1: ConvBnAct::new(&mut b.child("cv1"), c_in, c_, 1, 1),
            cv2: ConvBnAct::new(&mut b.child("cv2"), 4 * c_, c_out, 1, 1),
            k,
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let mut ys = vec![self.cv1.forward(ctx, x)?];
        for _ in 0..3 {
            let last = ys.last().expect("non-empty");
            ys.push(maxpool2d(last, self.k, 1, self.k / 2)?);
        }
        self.cv2.forward(ctx, &Tensor::concat_channels(&ys)?)
    }
}
