use super::ConvBnAct;
use crate::error::Result;
use crate::params::{Builder, Ctx};
use crate::tensor::Tensor;

/// Two stacked convolutions with a residual add when shapes allow it.
#[derive(Clone, Debug)]
pub struct Bottleneck {
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
    pub residual: bool,
}

impl Bottleneck {
    /// `e` scales the hidden width relative to `c_out`.
    pub fn new(b: &mut Builder, c_in: usize, c_out: usize, k: usize, e: f64, shortcut: bool) -> Self {
        let c_ = ((c_out as f64 * e) as usize).max(1);
        Bottleneck {
            cv1: ConvBnAct::new(&mut b.child("cv1"), c_in, c_, k, 1),
            cv2: ConvBnAct::new(&mut b.child("cv2"), c_, c_out, k, 1),
            residual: shortcut && c_in == c_out,
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let y = self.cv2.forward(ctx, &self.cv1.forward(ctx, x)?)?;
        if self.residual {
            x.add(&y)
        } else {
            Ok(y)
        }
    }
}

/// CSP unit with two parallel 1x1 paths, one running `n` bottlenecks.
#[derive(Clone, Debug)]
pub struct C3k {
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
    pub cv3: ConvBnAct,
    pub m: Vec<Bottleneck>,
}

impl C3k {
    pub fn new(b: &mut Builder, c_in: usize, c_out: usize, n: usize, k: usize) -> Self {
        let c_ = (c_out / 2).max(1);
        let m = (0..n)
            .map(|i| Bottleneck::new(&mut b.child(&format!("m.{i}")), c_, c_, k, 1.0, true))
            .collect();
        C3k {
            cv1: ConvBnAct::new(&mut b.child("cv1"), c_in, c_, 1, 1),
            cv2: ConvBnAct::new(&mut b.child("cv2"), c_in, c_, 1, 1),
            cv3: ConvBnAct::new(&mut b.child("cv3"), 2 * c_, c_out, 1, 1),
            m,
        }
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        let mut a = self.cv1.forward(ctx, x)?;
        for u in &self.m {
            a = u.forward(ctx, &a)?;
        }
        let b = self.cv2.forward(ctx, x)?;
        self.cv3.forward(ctx, &Tensor::concat_channels(&[a, b])?)
    }
}

#[derive(Clone, Debug)]
enum Unit {
    Bottleneck(Bottleneck),
    C3k(C3k),
}

impl Unit {
    fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        match self {
            Unit::Bottleneck(u) => u.forward(ctx, x),
            Unit::C3k(u) => u.forward(ctx, x),
        }
    }
}

/// C2f-style block: 1x1 conv, split in two halves, `n` serial units on the
/// second half with every intermediate kept, dense concat, 1x1 conv.
#[derive(Clone, Debug)]
pub struct C3k2 {
    pub c_hidden: usize,
    pub cv1: ConvBnAct,
    pub cv2: ConvBnAct,
    units: Vec<Unit>,
}

impl C3k2 {
    pub fn new(b: &mut Builder, c_in: usize, c_out: usize, n: usize, use_c3k: bool) -> Self {
        let c = (c_out / 2).max(1);
        let units = (0..n)
            .map(|i| {
                let mut ub = b.child(&format!("m.{i}"));
                if use_c3k {
                    Unit::C3k(C3k::new(&mut ub, c, c, 2, 3))
                } else {
                    Unit::Bottleneck(Bottleneck::new(&mut ub, c, c, 3, 0.5, true))
                }
            })
            .collect();
        C3k2 {
            c_hidden: c,
            cv1: ConvBnAct::new(&mut b.child("cv1"), c_in, 2 * c, 1, 1),
            cv2: ConvBnAct::new(&mut b.child("cv2"), (2 + n) * c, c_out, 1, 1),
            units,
        }
    }

    pub fn n_units(&self) -> usize {
        self.units.len()
    }

    /// Feature groups entering the final 1x1 conv: both halves plus one per unit.
    pub fn branches(&self, ctx: &Ctx, x: &Tensor) -> Result<Vec<Tensor>> {
        let y = self.cv1.forward(ctx, x)?;
        let mut ys = y.split_channels(&[self.c_hidden, self.c_hidden])?;
        for u in &self.units {
            let next = u.forward(ctx, ys.last().expect("non-empty"))?;
            ys.push(next);
        }
        Ok(ys)
    }

    pub fn forward(&self, ctx: &Ctx, x: &Tensor) -> Result<Tensor> {
        self.cv2.forward(ctx, &Tensor::concat_channels(&self.branches(ctx, x)?)?)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::params::ParamStore;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn branch_count_and_shape() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let blk = C3k2::new(&mut Builder::new(&mut store, &mut rng), 8, 16, 2, false);
        let c3k = C3k2::new(&mut Builder::new(&mut store, &mut rng).child("b"), 8, 16, 1, true);
        let x = Tensor::randn(&[1, 8, 6, 6], 1.0, &mut rng);
        let ctx = Ctx::eval(&store);
        assert_eq!(blk.branches(&ctx, &x).unwrap().len(), 4);
        assert_eq!(blk.forward(&ctx, &x).unwrap().shape(), &[1, 16, 6, 6]);
        assert_eq!(c3k.forward(&ctx, &x).unwrap().shape(), &[1, 16, 6, 6]);
    }
}
