use std::sync::Arc;

use super::Tensor;
use crate::error::{shape_err, Result};

impl Tensor {
    /// Sum of all elements as a scalar tensor.
    pub fn sum(&self) -> Tensor {
        let n = self.numel();
        let s: f64 = self.data().iter().sum();
        Tensor::from_op("sum", vec![], Arc::new(vec![s]), vec![self.clone()], move |g, _| {
            vec![Some(vec![g[0]; n])]
        })
    }

    pub fn mean(&self) -> Tensor {
        let n = self.numel().max(1);
        self.sum().scale(1.0 / n as f64)
    }

    /// Spatial mean of an NCHW map, giving (N, C, 1, 1).
    pub fn global_avg_pool(&self) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("global_avg_pool")?;
        let hw = h * w;
        if hw == 0 {
            return shape_err("global_avg_pool", "empty spatial extent");
        }
        let x = self.data();
        let out: Vec<f64> = (0..n * c)
            .map(|i| x[i * hw..(i + 1) * hw].iter().sum::<f64>() / hw as f64)
            .collect();
        Ok(Tensor::from_op(
            "global_avg_pool",
            vec![n, c, 1, 1],
            Arc::new(out),
            vec![self.clone()],
            move |g, _| {
                let mut gx = Vec::with_capacity(n * c * hw);
                for &gi in g {
                    gx.extend(std::iter::repeat_n(gi / hw as f64, hw));
                }
                vec![Some(gx)]
            },
        ))
    }

    /// Sum over the last axis, dropping it.
    pub fn sum_lastdim(&self) -> Result<Tensor> {
        let Some((&k, lead)) = self.shape().split_last() else {
            return shape_err("sum_lastdim", "scalar input");
        };
        let rows = self.numel() / k.max(1);
        let x = self.data();
        let out: Vec<f64> = (0..rows).map(|r| x[r * k..(r + 1) * k].iter().sum()).collect();
        Ok(Tensor::from_op(
            "sum_lastdim",
            lead.to_vec(),
            Arc::new(out),
            vec![self.clone()],
            move |g, _| {
                let mut gx = Vec::with_capacity(rows * k);
                for &gi in g {
                    gx.extend(std::iter::repeat_n(gi, k));
                }
                vec![Some(gx)]
            },
        ))
    }

    /// Softmax along the last axis.
    pub fn softmax_lastdim(&self) -> Result<Tensor> {
        let Some(&k) = self.shape().last() else {
            return shape_err("softmax_lastdim", "scalar input");
        };
        let y = Arc::new(softmax_rows(self.data(), k));
        let ys = y.clone();
        Ok(Tensor::from_op(
            "softmax_lastdim",
            self.shape().to_vec(),
            y,
            vec![self.clone()],
            move |g, _| {
                let mut gx = vec![0.0; g.len()];
                for r in 0..g.len() / k {
                    let yr = &ys[r * k..(r + 1) * k];
                    let gr = &g[r * k..(r + 1) * k];
                    let dot: f64 = yr.iter().zip(gr).map(|(a, b)| a * b).sum();
                    for j in 0..k {
                        gx[r * k + j] = yr[j] * (gr[j] - dot);
                    }
                }
                vec![Some(gx)]
            },
        ))
    }

    /// Log-softmax along the last axis.
    pub fn log_softmax_lastdim(&self) -> Result<Tensor> {
        let Some(&k) = self.shape().last() else {
            return shape_err("log_softmax_lastdim", "scalar input");
        };
        let x = self.data();
        let mut out = vec![0.0; x.len()];
        for r in 0..x.len() / k {
            let row = &x[r * k..(r + 1) * k];
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let lse = m + row.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
            for j in 0..k {
                out[r * k + j] = row[j] - lse;
            }
        }
        let y = Arc::new(out);
        let ys = y.clone();
        Ok(Tensor::from_op(
            "log_softmax_lastdim",
            self.shape().to_vec(),
            y,
            vec![self.clone()],
            move |g, _| {
                let mut gx = vec![0.0; g.len()];
                for r in 0..g.len() / k {
                    let gs: f64 = g[r * k..(r + 1) * k].iter().sum();
                    for j in 0..k {
                        gx[r * k + j] = g[r * k + j] - ys[r * k + j].exp() * gs;
                    }
                }
                vec![Some(gx)]
            },
        ))
    }
}

pub(crate) fn softmax_rows(x: &[f64], k: usize) -> Vec<f64> {
    let mut out = vec![0.0; x.len()];
    for r in 0..x.len() / k {
        let row = &x[r * k..(r + 1) * k];
        let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut z = 0.0;
        for j in 0..k {
            let e = (row[j] - m).exp();
            out[r * k + j] = e;
            z += e;
        }
        out[r * k..(r + 1) * k].iter_mut().for_each(|v| *v /= z);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_of_zeros_is_uniform() {
        let x = Tensor::zeros(&[4]);
        assert_eq!(x.softmax_lastdim().unwrap().data(), &[0.25; 4]);
    }

    #[test]
    fn gap_is_arithmetic_mean() {
        let x = Tensor::from_vec(&[1, 1, 2, 2], vec![1., 2., 3., 4.]).unwrap();
        assert_eq!(x.global_avg_pool().unwrap().data(), &[2.5]);
    }

    #[test]
    fn log_softmax_matches_log_of_softmax() {
        let x = Tensor::from_vec(&[2, 3], vec![0.3, -1.0, 2.0, 5.0, 5.0, -3.0]).unwrap();
        let a = x.log_softmax_lastdim().unwrap();
        let b = x.softmax_lastdim().unwrap();
        for (u, v) in a.data().iter().zip(b.data()) {
            assert!((u - v.ln()).abs() < 1e-12);
        }
    }
}
