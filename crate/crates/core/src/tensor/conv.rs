//! 2D cross-correlation (no kernel flip) over NCHW maps.
//!
//! Grouped convolutions lower to im2col + GEMM per (image, group). The
//! depthwise case (one filter per channel) uses direct loops. Work is split
//! across images and groups only, and partial weight gradients are reduced
//! in a fixed order, so results do not depend on the thread count.

use std::sync::Arc;

use rayon::prelude::*;

use super::matmul::{gemm, Layout};
use super::Tensor;
use crate::error::{shape_err, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Conv2dOptions {
    pub stride: usize,
    /// Zero padding as (rows, cols) added on both sides.
    pub padding: (usize, usize),
    pub groups: usize,
}

impl Default for Conv2dOptions {
    fn default() -> Self {
        Conv2dOptions {
            stride: 1,
            padding: (0, 0),
            groups: 1,
        }
    }
}

impl Conv2dOptions {
    pub fn new(stride: usize, padding: usize, groups: usize) -> Self {
        Conv2dOptions {
            stride,
            padding: (padding, padding),
            groups,
        }
    }
}

#[derive(Clone, Copy)]
struct Geometry {
    n: usize,
    c: usize,
    h: usize,
    w: usize,
    o: usize,
    cg: usize,
    og: usize,
    kh: usize,
    kw: usize,
    ho: usize,
    wo: usize,
    stride: usize,
    ph: usize,
    pw: usize,
    groups: usize,
}

impl Geometry {
    fn k(&self) -> usize {
        self.cg * self.kh * self.kw
    }

    fn p(&self) -> usize {
        self.ho * self.wo
    }

    fn is_pointwise(&self) -> bool {
        self.kh == 1 && self.kw == 1 && self.stride == 1 && self.ph == 0 && self.pw == 0
    }

    fn is_depthwise(&self) -> bool {
        self.groups == self.c && self.cg == 1 && self.og == 1
    }
}

fn geometry(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, opts: Conv2dOptions) -> Result<Geometry> {
    let (n, c, h, w) = x.dims4("conv2d")?;
    let (o, cg, kh, kw) = weight.dims4("conv2d")?;
    let Conv2dOptions { stride, padding: (ph, pw), groups } = opts;
    if stride == 0 || groups == 0 {
        return shape_err("conv2d", "stride and groups must be >= 1");
    }
    if c % groups != 0 || o % groups != 0 {
        return shape_err(
            "conv2d",
            format!("channels in={} out={} not divisible by groups={}", c, o, groups),
        );
    }
    if cg != c / groups {
        return shape_err(
            "conv2d",
            format!("weight in-channel axis is {}, expected C/groups = {}", cg, c / groups),
        );
    }
    if let Some(b) = bias {
        if b.shape() != [o] {
            return shape_err("conv2d", format!("bias shape {:?}, expected [{}]", b.shape(), o));
        }
    }
    if h + 2 * ph < kh || w + 2 * pw < kw {
        return shape_err(
            "conv2d",
            format!("kernel {}x{} larger than padded input {}x{}", kh, kw, h + 2 * ph, w + 2 * pw),
        );
    }
    Ok(Geometry {
        n,
        c,
        h,
        w,
        o,
        cg,
        og: o / groups,
        kh,
        kw,
        ho: (h + 2 * ph - kh) / stride + 1,
        wo: (w + 2 * pw - kw) / stride + 1,
        stride,
        ph,
        pw,
        groups,
    })
}

/// Valid output range along one axis for kernel tap `k`: output indices
/// `o` with `0 <= o*stride + k - pad < extent`.
fn tap_range(k: usize, pad: usize, stride: usize, extent: usize, out: usize) -> (usize, usize) {
    let lo = if k >= pad { 0 } else { (pad - k).div_ceil(stride) };
    let hi = if extent + pad > k {
        ((extent + pad - k - 1) / stride + 1).min(out)
    } else {
        0
    };
    (lo.min(hi), hi)
}

fn im2col(x: &[f64], g: &Geometry, cols: &mut [f64]) {
    let p = g.p();
    for c in 0..g.cg {
        let plane = &x[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (ylo, yhi) = tap_range(ki, g.ph, g.stride, g.h, g.ho);
            for kj in 0..g.kw {
                let (xlo, xhi) = tap_range(kj, g.pw, g.stride, g.w, g.wo);
                let row = (c * g.kh + ki) * g.kw + kj;
                let dst = &mut cols[row * p..(row + 1) * p];
                dst.fill(0.0);
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ki - g.ph;
                    let src = &plane[iy * g.w..(iy + 1) * g.w];
                    let d = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    for ox in xlo..xhi {
                        d[ox] = src[ox * g.stride + kj - g.pw];
                    }
                }
            }
        }
    }
}

fn col2im(cols: &[f64], g: &Geometry, dx: &mut [f64]) {
    let p = g.p();
    for c in 0..g.cg {
        let plane = &mut dx[c * g.h * g.w..(c + 1) * g.h * g.w];
        for ki in 0..g.kh {
            let (ylo, yhi) = tap_range(ki, g.ph, g.stride, g.h, g.ho);
            for kj in 0..g.kw {
                let (xlo, xhi) = tap_range(kj, g.pw, g.stride, g.w, g.wo);
                let row = (c * g.kh + ki) * g.kw + kj;
                let src = &cols[row * p..(row + 1) * p];
                for oy in ylo..yhi {
                    let iy = oy * g.stride + ki - g.ph;
                    let s = &src[oy * g.wo..(oy + 1) * g.wo];
                    let d = &mut plane[iy * g.w..(iy + 1) * g.w];
                    for ox in xlo..xhi {
                        d[ox * g.stride + kj - g.pw] += s[ox];
                    }
                }
            }
        }
    }
}

fn forward_grouped(x: &[f64], w: &[f64], g: &Geometry) -> Vec<f64> {
    let (k, p) = (g.k(), g.p());
    let block = g.og * p;
    let in_block = g.cg * g.h * g.w;
    let mut out = vec![0.0; g.n * g.o * p];
    out.par_chunks_mut(block).enumerate().for_each(|(t, dst)| {
        let (n, grp) = (t / g.groups, t % g.groups);
        let xin = &x[(n * g.c + grp * g.cg) * g.h * g.w..][..in_block];
        let wg = &w[grp * g.og * k..(grp + 1) * g.og * k];
        if g.is_pointwise() {
            gemm(g.og, k, p, wg, Layout::row_major(k), xin, Layout::row_major(p), 0.0, dst);
        } else {
            let mut cols = vec![0.0; k * p];
            im2col(xin, g, &mut cols);
            gemm(g.og, k, p, wg, Layout::row_major(k), &cols, Layout::row_major(p), 0.0, dst);
        }
    });
    out
}

/// Returns (dx, dw) for the grouped path; either may be skipped.
fn backward_grouped(
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    g: &Geometry,
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let (k, p) = (g.k(), g.p());
    let in_block = g.cg * g.h * g.w;
    let tasks: Vec<(Option<Vec<f64>>, Option<Vec<f64>>)> = (0..g.n * g.groups)
        .into_par_iter()
        .map(|t| {
            let (n, grp) = (t / g.groups, t % g.groups);
            let xin = &x[(n * g.c + grp * g.cg) * g.h * g.w..][..in_block];
            let go = &gout[(n * g.o + grp * g.og) * p..][..g.og * p];
            let wg = &w[grp * g.og * k..(grp + 1) * g.og * k];
            let pointwise = g.is_pointwise();
            let cols_owned;
            let cols: &[f64] = if pointwise {
                xin
            } else if need_w {
                let mut c = vec![0.0; k * p];
                im2col(xin, g, &mut c);
                cols_owned = c;
                &cols_owned
            } else {
                &[]
            };
            let dw = need_w.then(|| {
                let mut dw = vec![0.0; g.og * k];
                // dW = dOut (og x p) * cols^T (p x k)
                gemm(g.og, p, k, go, Layout::row_major(p), cols, Layout::transposed(p), 0.0, &mut dw);
                dw
            });
            let dx = need_x.then(|| {
                let mut dcols = vec![0.0; k * p];
                // dCols = W^T (k x og) * dOut (og x p)
                gemm(k, g.og, p, wg, Layout::transposed(k), go, Layout::row_major(p), 0.0, &mut dcols);
                if pointwise {
                    dcols
                } else {
                    let mut dx = vec![0.0; in_block];
                    col2im(&dcols, g, &mut dx);
                    dx
                }
            });
            (dx, dw)
        })
        .collect();
    let dx = need_x.then(|| {
        let mut dx = Vec::with_capacity(g.n * g.c * g.h * g.w);
        for (d, _) in &tasks {
            dx.extend_from_slice(d.as_ref().expect("dx block"));
        }
        dx
    });
    let dw = need_w.then(|| {
        let mut dw = vec![0.0; w.len()];
        for (t, (_, part)) in tasks.iter().enumerate() {
            let grp = t % g.groups;
            let dst = &mut dw[grp * g.og * k..(grp + 1) * g.og * k];
            dst.iter_mut()
                .zip(part.as_ref().expect("dw block"))
                .for_each(|(a, b)| *a += b);
        }
        dw
    });
    (dx, dw)
}

fn forward_depthwise(x: &[f64], w: &[f64], g: &Geometry) -> Vec<f64> {
    let p = g.p();
    let mut out = vec![0.0; g.n * g.c * p];
    out.par_chunks_mut(p).enumerate().for_each(|(t, dst)| {
        let c = t % g.c;
        let plane = &x[t * g.h * g.w..(t + 1) * g.h * g.w];
        let ker = &w[c * g.kh * g.kw..(c + 1) * g.kh * g.kw];
        for ki in 0..g.kh {
            let (ylo, yhi) = tap_range(ki, g.ph, g.stride, g.h, g.ho);
            for kj in 0..g.kw {
                let (xlo, xhi) = tap_range(kj, g.pw, g.stride, g.w, g.wo);
                let wv = ker[ki * g.kw + kj];
                for oy in ylo..yhi {
                    let row = &plane[(oy * g.stride + ki - g.ph) * g.w..][..g.w];
                    let d = &mut dst[oy * g.wo..(oy + 1) * g.wo];
                    for ox in xlo..xhi {
                        d[ox] += wv * row[ox * g.stride + kj - g.pw];
                    }
                }
            }
        }
    });
    out
}

fn backward_depthwise(
    x: &[f64],
    w: &[f64],
    gout: &[f64],
    g: &Geometry,
    need_x: bool,
    need_w: bool,
) -> (Option<Vec<f64>>, Option<Vec<f64>>) {
    let p = g.p();
    let hw = g.h * g.w;
    let kk = g.kh * g.kw;
    let tasks: Vec<(Vec<f64>, Vec<f64>)> = (0..g.n * g.c)
        .into_par_iter()
        .map(|t| {
            let c = t % g.c;
            let plane = &x[t * hw..(t + 1) * hw];
            let go = &gout[t * p..(t + 1) * p];
            let ker = &w[c * kk..(c + 1) * kk];
            let mut dx = if need_x { vec![0.0; hw] } else { Vec::new() };
            let mut dw = if need_w { vec![0.0; kk] } else { Vec::new() };
            for ki in 0..g.kh {
                let (ylo, yhi) = tap_range(ki, g.ph, g.stride, g.h, g.ho);
                for kj in 0..g.kw {
                    let (xlo, xhi) = tap_range(kj, g.pw, g.stride, g.w, g.wo);
                    let wv = ker[ki * g.kw + kj];
                    let mut acc = 0.0;
                    for oy in ylo..yhi {
                        let base = (oy * g.stride + ki - g.ph) * g.w;
                        let grow = &go[oy * g.wo..(oy + 1) * g.wo];
                        for ox in xlo..xhi {
                            let ix = base + ox * g.stride + kj - g.pw;
                            if need_w {
                                acc += grow[ox] * plane[ix];
                            }
                            if need_x {
                                dx[ix] += grow[ox] * wv;
                            }
                        }
                    }
                    if need_w {
                        dw[ki * g.kw + kj] = acc;
                    }
                }
            }
            (dx, dw)
        })
        .collect();
    let dx = need_x.then(|| tasks.iter().flat_map(|(d, _)| d.iter().copied()).collect());
    let dw = need_w.then(|| {
        let mut dw = vec![0.0; w.len()];
        for (t, (_, part)) in tasks.iter().enumerate() {
            let c = t % g.c;
            dw[c * kk..(c + 1) * kk].iter_mut().zip(part).for_each(|(a, b)| *a += b);
        }
        dw
    });
    (dx, dw)
}

/// 2D cross-correlation of `x` (N, C, H, W) with `weight` (O, C/groups, kh, kw).
///
/// Output is (N, O, (H + 2ph - kh)/s + 1, (W + 2pw - kw)/s + 1) with floor
/// division. Differentiable w.r.t. input, weight and bias.
pub fn conv2d(x: &Tensor, weight: &Tensor, bias: Option<&Tensor>, opts: Conv2dOptions) -> Result<Tensor> {
    let g = geometry(x, weight, bias, opts)?;
    let xd = x.data_arc();
    let wd = weight.data_arc();
    let depthwise = g.is_depthwise();
    let mut out = if depthwise {
        forward_depthwise(&xd, &wd, &g)
    } else {
        forward_grouped(&xd, &wd, &g)
    };
    let p = g.p();
    if let Some(b) = bias {
        let bd = b.data();
        out.par_chunks_mut(p).enumerate().for_each(|(t, dst)| {
            let bv = bd[t % g.o];
            dst.iter_mut().for_each(|v| *v += bv);
        });
    }
    let mut parents = vec![x.clone(), weight.clone()];
    if let Some(b) = bias {
        parents.push(b.clone());
    }
    let has_bias = bias.is_some();
    Ok(Tensor::from_op(
        "conv2d",
        vec![g.n, g.o, g.ho, g.wo],
        Arc::new(out),
        parents,
        move |gout, needs| {
            let (dx, dw) = if depthwise {
                backward_depthwise(&xd, &wd, gout, &g, needs[0], needs[1])
            } else {
                backward_grouped(&xd, &wd, gout, &g, needs[0], needs[1])
            };
            let mut grads = vec![dx, dw];
            if has_bias {
                grads.push(needs[2].then(|| {
                    let mut db = vec![0.0; g.o];
                    for (t, chunk) in gout.chunks(p).enumerate() {
                        db[t % g.o] += chunk.iter().sum::<f64>();
                    }
                    db
                }));
            }
            grads
        },
    ))
}
