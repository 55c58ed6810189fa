use std::sync::Arc;

use super::{numel, strides, Tensor};
use crate::error::{shape_err, Result};

/// Broadcast layout for a binary op on equal-rank operands.
struct Broadcast {
    out_shape: Vec<usize>,
    a_index: Vec<usize>,
    b_index: Vec<usize>,
}

fn broadcast(op: &'static str, a: &[usize], b: &[usize]) -> Result<Option<Broadcast>> {
    if a == b {
        return Ok(None);
    }
    if a.len() != b.len() {
        return shape_err(op, format!("rank mismatch {:?} vs {:?}", a, b));
    }
    let mut out = Vec::with_capacity(a.len());
    for (axis, (&x, &y)) in a.iter().zip(b).enumerate() {
        if x == y || y == 1 {
            out.push(x);
        } else if x == 1 {
            out.push(y);
        } else {
            return shape_err(op, format!("axis {} extents {} and {} do not broadcast", axis, x, y));
        }
    }
    let os = strides(&out);
    let sa = strides(a);
    let sb = strides(b);
    let n = numel(&out);
    let mut a_index = Vec::with_capacity(n);
    let mut b_index = Vec::with_capacity(n);
    for flat in 0..n {
        let (mut ia, mut ib, mut rem) = (0, 0, flat);
        for d in 0..out.len() {
            let coord = rem / os[d];
            rem %= os[d];
            if a[d] != 1 {
                ia += coord * sa[d];
            }
            if b[d] != 1 {
                ib += coord * sb[d];
            }
        }
        a_index.push(ia);
        b_index.push(ib);
    }
    Ok(Some(Broadcast {
        out_shape: out,
        a_index,
        b_index,
    }))
}

#[derive(Clone, Copy)]
enum BinOp {
    Add,
    Sub,
    Mul,
    Div,
}

impl BinOp {
    fn name(self) -> &'static str {
        match self {
            BinOp::Add => "add",
            BinOp::Sub => "sub",
            BinOp::Mul => "mul",
            BinOp::Div => "div",
        }
    }

    fn apply(self, x: f64, y: f64) -> f64 {
        match self {
            BinOp::Add => x + y,
            BinOp::Sub => x - y,
            BinOp::Mul => x * y,
            BinOp::Div => x / y,
        }
    }

    /// Partial derivatives (d/dx, d/dy) at (x, y).
    fn partials(self, x: f64, y: f64) -> (f64, f64) {
        match self {
            BinOp::Add => (1.0, 1.0),
            BinOp::Sub => (1.0, -1.0),
            BinOp::Mul => (y, x),
            BinOp::Div => (1.0 / y, -x / (y * y)),
        }
    }
}

fn binary(a: &Tensor, b: &Tensor, op: BinOp) -> Result<Tensor> {
    let layout = broadcast(op.name(), a.shape(), b.shape())?;
    let ad = a.data_arc();
    let bd = b.data_arc();
    match layout {
        None => {
            let data: Vec<f64> = ad.iter().zip(bd.iter()).map(|(&x, &y)| op.apply(x, y)).collect();
            Ok(Tensor::from_op(
                op.name(),
                a.shape().to_vec(),
                Arc::new(data),
                vec![a.clone(), b.clone()],
                move |g, needs| {
                    let mut ga = needs[0].then(|| Vec::with_capacity(g.len()));
                    let mut gb = needs[1].then(|| Vec::with_capacity(g.len()));
                    for i in 0..g.len() {
                        let (dx, dy) = op.partials(ad[i], bd[i]);
                        if let Some(v) = ga.as_mut() {
                            v.push(g[i] * dx);
                        }
                        if let Some(v) = gb.as_mut() {
                            v.push(g[i] * dy);
                        }
                    }
                    vec![ga, gb]
                },
            ))
        }
        Some(bc) => {
            let data: Vec<f64> = bc
                .a_index
                .iter()
                .zip(&bc.b_index)
                .map(|(&i, &j)| op.apply(ad[i], bd[j]))
                .collect();
            let out_shape = bc.out_shape.clone();
            let bc = Arc::new(bc);
            Ok(Tensor::from_op(
                op.name(),
                out_shape,
                Arc::new(data),
                vec![a.clone(), b.clone()],
                move |g, needs| {
                    let mut ga = needs[0].then(|| vec![0.0; ad.len()]);
                    let mut gb = needs[1].then(|| vec![0.0; bd.len()]);
                    for (k, (&i, &j)) in bc.a_index.iter().zip(&bc.b_index).enumerate() {
                        let (dx, dy) = op.partials(ad[i], bd[j]);
                        if let Some(v) = ga.as_mut() {
                            v[i] += g[k] * dx;
                        }
                        if let Some(v) = gb.as_mut() {
                            v[j] += g[k] * dy;
                        }
                    }
                    vec![ga, gb]
                },
            ))
        }
    }
}

/// Elementwise map with derivative expressed through input and output values.
pub(crate) fn unary(
    x: &Tensor,
    op: &'static str,
    f: impl Fn(f64) -> f64,
    df: impl Fn(f64, f64) -> f64 + Send + Sync + 'static,
) -> Tensor {
    let xd = x.data_arc();
    let yd = Arc::new(xd.iter().map(|&v| f(v)).collect::<Vec<f64>>());
    let y_saved = yd.clone();
    Tensor::from_op(op, x.shape().to_vec(), yd, vec![x.clone()], move |g, _| {
        let gx = g
            .iter()
            .zip(xd.iter().zip(y_saved.iter()))
            .map(|(&gi, (&xi, &yi))| gi * df(xi, yi))
            .collect();
        vec![Some(gx)]
    })
}

impl Tensor {
    /// Elementwise sum with broadcasting over extents of 1 (equal ranks).
    pub fn add(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, BinOp::Add)
    }

    pub fn sub(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, BinOp::Sub)
    }

    /// Elementwise product with broadcasting over extents of 1 (equal ranks).
    pub fn mul(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, BinOp::Mul)
    }

    pub fn div(&self, other: &Tensor) -> Result<Tensor> {
        binary(self, other, BinOp::Div)
    }

    pub fn scale(&self, s: f64) -> Tensor {
        unary(self, "scale", move |v| v * s, move |_, _| s)
    }

    pub fn add_scalar(&self, s: f64) -> Tensor {
        unary(self, "add_scalar", move |v| v + s, |_, _| 1.0)
    }

    pub fn neg(&self) -> Tensor {
        self.scale(-1.0)
    }

    pub fn exp(&self) -> Tensor {
        unary(self, "exp", f64::exp, |_, y| y)
    }

    /// Natural log of values clamped below at `floor`; the gradient is zero where clamped.
    pub fn log_clamped(&self, floor: f64) -> Tensor {
        unary(
            self,
            "log",
            move |v| v.max(floor).ln(),
            move |x, _| if x > floor { 1.0 / x } else { 0.0 },
        )
    }

    pub fn square(&self) -> Tensor {
        unary(self, "square", |v| v * v, |x, _| 2.0 * x)
    }

    /// Absolute value; derivative sign(x), taken as 0 at 0.
    pub fn abs(&self) -> Tensor {
        unary(self, "abs", f64::abs, |x, _| {
            if x > 0.0 {
                1.0
            } else if x < 0.0 {
                -1.0
            } else {
                0.0
            }
        })
    }
}
