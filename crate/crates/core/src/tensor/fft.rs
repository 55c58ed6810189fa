//! Real 2D FFT pair over the last two axes of NCHW maps.
//!
//! Convention: the forward transform is unnormalized,
//! `Y[k,l] = sum_{y,x} x[y,x] exp(-2 pi i (k y / H + l x / W))`,
//! and only the half spectrum `l = 0..=W/2` is kept. The inverse scales by
//! `1/(H W)` and rebuilds the missing columns from conjugate symmetry:
//! `x[y,x] = 1/(HW) sum_k sum_l c_l Re(Y[k,l] exp(+2 pi i (...)))` with
//! `c_l = 1` for the DC column (and the Nyquist column when W is even) and
//! `c_l = 2` otherwise. The inverse is defined by that formula for any
//! half spectrum, so it is a real-linear map and always yields a real signal.

use std::sync::Arc;

use rayon::prelude::*;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use super::Tensor;
use crate::error::{shape_err, Result};

/// Half spectrum of a real (N, C, H, W) signal, stored as a real tensor of
/// shape (N, C, H, W/2 + 1, 2) holding (re, im) pairs.
#[derive(Clone, Debug)]
pub struct ComplexSpectrum {
    tensor: Tensor,
    width: usize,
}

impl ComplexSpectrum {
    /// Wraps a (N, C, H, W/2+1, 2) tensor as the spectrum of a width-`width` signal.
    pub fn from_tensor(tensor: Tensor, width: usize) -> Result<Self> {
        let s = tensor.shape();
        if s.len() != 5 || s[4] != 2 || s[3] != width / 2 + 1 {
            return shape_err(
                "spectrum",
                format!("shape {:?} is not a half spectrum of width {}", s, width),
            );
        }
        Ok(ComplexSpectrum { tensor, width })
    }

    pub fn tensor(&self) -> &Tensor {
        &self.tensor
    }

    /// Width of the real signal this spectrum came from.
    pub fn width(&self) -> usize {
        self.width
    }

    pub fn shape(&self) -> (usize, usize, usize, usize) {
        let s = self.tensor.shape();
        (s[0], s[1], s[2], s[3])
    }

    /// Complex value at (n, c, k, l).
    pub fn at(&self, n: usize, c: usize, k: usize, l: usize) -> Complex64 {
        let (_, cc, h, wh) = self.shape();
        let i = (((n * cc + c) * h + k) * wh + l) * 2;
        let d = self.tensor.data();
        Complex64::new(d[i], d[i + 1])
    }

    /// Multiplies every bin by a real gate of shape broadcastable to
    /// (N, C, H, W/2+1), e.g. (1, C, H, W/2+1) or (N, C, 1, 1).
    pub fn mul_real(&self, gate: &Tensor) -> Result<ComplexSpectrum> {
        if gate.ndim() != 4 {
            return shape_err("spectrum.mul_real", format!("gate must be rank 4, got {:?}", gate.shape()));
        }
        let mut gs = gate.shape().to_vec();
        gs.push(1);
        let g = gate.reshape(&gs)?;
        Ok(ComplexSpectrum {
            tensor: self.tensor.mul(&g)?,
            width: self.width,
        })
    }
}

struct Plans {
    h: usize,
    w: usize,
    wh: usize,
    fwd_w: Arc<dyn Fft<f64>>,
    fwd_h: Arc<dyn Fft<f64>>,
    inv_w: Arc<dyn Fft<f64>>,
    inv_h: Arc<dyn Fft<f64>>,
}

impl Plans {
    fn new(h: usize, w: usize) -> Self {
        let mut p = FftPlanner::new();
        Plans {
            h,
            w,
            wh: w / 2 + 1,
            fwd_w: p.plan_fft_forward(w),
            fwd_h: p.plan_fft_forward(h),
            inv_w: p.plan_fft_inverse(w),
            inv_h: p.plan_fft_inverse(h),
        }
    }

    fn column_weight(&self, l: usize) -> f64 {
        if l == 0 || (self.w.is_multiple_of(2) && l == self.w / 2) {
            1.0
        } else {
            2.0
        }
    }

    /// Half spectrum of one real plane, written as interleaved (re, im).
    fn forward_plane(&self, x: &[f64], out: &mut [f64]) {
        let (h, w, wh) = (self.h, self.w, self.wh);
        let mut half = vec![Complex64::default(); h * wh];
        let mut row = vec![Complex64::default(); w];
        for y in 0..h {
            for (r, &v) in row.iter_mut().zip(&x[y * w..(y + 1) * w]) {
                *r = Complex64::new(v, 0.0);
            }
            self.fwd_w.process(&mut row);
            half[y * wh..(y + 1) * wh].copy_from_slice(&row[..wh]);
        }
        let mut col = vec![Complex64::default(); h];
        for l in 0..wh {
            for y in 0..h {
                col[y] = half[y * wh + l];
            }
            self.fwd_h.process(&mut col);
            for k in 0..h {
                out[(k * wh + l) * 2] = col[k].re;
                out[(k * wh + l) * 2 + 1] = col[k].im;
            }
        }
    }

    /// `out[y,x] = scale * sum_k sum_{l<wh} c_l Re(Y[k,l] e^{+i theta})`, with
    /// `c_l` from `column_weight` when `weighted`, else 1.
    fn inverse_plane(&self, spec: &[f64], weighted: bool, scale: f64, out: &mut [f64]) {
        let (h, w, wh) = (self.h, self.w, self.wh);
        let mut z = vec![Complex64::default(); h * wh];
        let mut col = vec![Complex64::default(); h];
        for l in 0..wh {
            for k in 0..h {
                col[k] = Complex64::new(spec[(k * wh + l) * 2], spec[(k * wh + l) * 2 + 1]);
            }
            self.inv_h.process(&mut col);
            for y in 0..h {
                z[y * wh + l] = col[y];
            }
        }
        let mut row = vec![Complex64::default(); w];
        for y in 0..h {
            row.fill(Complex64::default());
            for l in 0..wh {
                let c = if weighted { self.column_weight(l) } else { 1.0 };
                row[l] = z[y * wh + l] * c;
            }
            self.inv_w.process(&mut row);
            for (o, r) in out[y * w..(y + 1) * w].iter_mut().zip(&row) {
                *o = r.re * scale;
            }
        }
    }

    fn forward_all(&self, x: &[f64], planes: usize) -> Vec<f64> {
        let (h, w, wh) = (self.h, self.w, self.wh);
        let mut out = vec![0.0; planes * h * wh * 2];
        out.par_chunks_mut(h * wh * 2)
            .zip(x.par_chunks(h * w))
            .for_each(|(o, xp)| self.forward_plane(xp, o));
        out
    }

    fn inverse_all(&self, spec: &[f64], planes: usize, weighted: bool, scale: f64) -> Vec<f64> {
        let (h, w, wh) = (self.h, self.w, self.wh);
        let mut out = vec![0.0; planes * h * w];
        out.par_chunks_mut(h * w)
            .zip(spec.par_chunks(h * wh * 2))
            .for_each(|(o, sp)| self.inverse_plane(sp, weighted, scale, o));
        out
    }
}

/// Forward real 2D FFT over the spatial axes (unnormalized).
pub fn rfft2(x: &Tensor) -> Result<ComplexSpectrum> {
    let (n, c, h, w) = x.dims4("rfft2")?;
    if h == 0 || w == 0 {
        return shape_err("rfft2", "empty spatial extent");
    }
    let plans = Arc::new(Plans::new(h, w));
    let out = plans.forward_all(x.data(), n * c);
    let wh = plans.wh;
    let tensor = Tensor::from_op(
        "rfft2",
        vec![n, c, h, wh, 2],
        Arc::new(out),
        vec![x.clone()],
        move |g, _| vec![Some(plans.inverse_all(g, n * c, false, 1.0))],
    );
    Ok(ComplexSpectrum { tensor, width: w })
}

/// Inverse of [`rfft2`] with 1/(HW) scaling; always returns a real map.
pub fn irfft2(spec: &ComplexSpectrum) -> Result<Tensor> {
    let (n, c, h, _) = spec.shape();
    let w = spec.width;
    let plans = Arc::new(Plans::new(h, w));
    let scale = 1.0 / (h * w) as f64;
    let out = plans.inverse_all(spec.tensor.data(), n * c, true, scale);
    Ok(Tensor::from_op(
        "irfft2",
        vec![n, c, h, w],
        Arc::new(out),
        vec![spec.tensor.clone()],
        move |g, _| {
            let mut gs = plans.forward_all(g, n * c);
            let wh = plans.wh;
            for (i, v) in gs.iter_mut().enumerate() {
                let l = (i / 2) % wh;
                *v *= plans.column_weight(l) * scale;
            }
            vec![Some(gs)]
        },
    ))
}
