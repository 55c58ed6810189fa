use std::sync::Arc;

use super::matmul::{gemm, Layout};
use super::reduce::softmax_rows;
use super::{grad_enabled, Tensor};
use crate::error::{shape_err, Result};

/// Query rows processed at once when no graph is recorded.
const ROW_BLOCK: usize = 256;

/// softmax(scale * Q K^T) for one (L, d) slice, as an (L, L) row-major matrix.
fn probs(q: &[f64], k: &[f64], l: usize, d: usize, scale: f64) -> Vec<f64> {
    let mut s = vec![0.0; l * l];
    gemm(l, d, l, q, Layout::row_major(d), k, Layout::transposed(d), 0.0, &mut s);
    s.iter_mut().for_each(|v| *v *= scale);
    softmax_rows(&s, l)
}

/// Attention weights softmax(scale * Q K^T) for q, k of shape (B, L, d).
pub fn attention_weights(q: &Tensor, k: &Tensor, scale: f64) -> Result<Vec<f64>> {
    let (b, l, d) = dims3(q, "attention_weights")?;
    if k.shape() != q.shape() {
        return shape_err("attention_weights", format!("q {:?} vs k {:?}", q.shape(), k.shape()));
    }
    let (qd, kd) = (q.data(), k.data());
    let mut out = Vec::with_capacity(b * l * l);
    for i in 0..b {
        out.extend(probs(&qd[i * l * d..][..l * d], &kd[i * l * d..][..l * d], l, d, scale));
    }
    Ok(out)
}

fn dims3(t: &Tensor, op: &'static str) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [b, l, d] => Ok((b, l, d)),
        ref s => shape_err(op, format!("expected (B, L, d), got {:?}", s)),
    }
}

/// Scaled dot-product attention `softmax(scale * Q K^T) V` over independent
/// slices: q, k, v are (B, L, d) and the output is (B, L, d).
///
/// Without a recorded graph the weights are formed block by block so memory
/// stays O(L) per query row; with a graph they are kept for backward.
pub fn scaled_dot_attention(q: &Tensor, k: &Tensor, v: &Tensor, scale: f64) -> Result<Tensor> {
    let (b, l, d) = dims3(q, "attention")?;
    if k.shape() != q.shape() || v.shape() != q.shape() {
        return shape_err(
            "attention",
            format!("q {:?}, k {:?}, v {:?} must agree", q.shape(), k.shape(), v.shape()),
        );
    }
    let (qd, kd, vd) = (q.data_arc(), k.data_arc(), v.data_arc());
    let track = grad_enabled() && (q.is_requires_grad() || k.is_requires_grad() || v.is_requires_grad());
    let mut out = vec![0.0; b * l * d];
    let mut saved = Vec::new();
    for i in 0..b {
        let (qs, ks, vs) = (&qd[i * l * d..][..l * d], &kd[i * l * d..][..l * d], &vd[i * l * d..][..l * d]);
        let os = &mut out[i * l * d..(i + 1) * l * d];
        if track {
            let p = probs(qs, ks, l, d, scale);
            gemm(l, l, d, &p, Layout::row_major(l), vs, Layout::row_major(d), 0.0, os);
            saved.push(p);
        } else {
            let mut r0 = 0;
            while r0 < l {
                let rows = ROW_BLOCK.min(l - r0);
                let mut s = vec![0.0; rows * l];
                gemm(rows, d, l, &qs[r0 * d..], Layout::row_major(d), ks, Layout::transposed(d), 0.0, &mut s);
                s.iter_mut().for_each(|x| *x *= scale);
                let p = softmax_rows(&s, l);
                gemm(rows, l, d, &p, Layout::row_major(l), vs, Layout::row_major(d), 0.0, &mut os[r0 * d..(r0 + rows) * d]);
                r0 += rows;
            }
        }
    }
    let saved = Arc::new(saved);
    Ok(Tensor::from_op(
        "attention",
        vec![b, l, d],
        Arc::new(out),
        vec![q.clone(), k.clone(), v.clone()],
        move |g, needs| {
            let mut dq = vec![0.0; b * l * d];
            let mut dk = vec![0.0; b * l * d];
            let mut dv = vec![0.0; b * l * d];
            for i in 0..b {
                let p = &saved[i];
                let off = i * l * d;
                let (qs, ks, vs, gs) = (&qd[off..off + l * d], &kd[off..off + l * d], &vd[off..off + l * d], &g[off..off + l * d]);
                // dV = P^T dO
                gemm(l, l, d, p, Layout::transposed(l), gs, Layout::row_major(d), 0.0, &mut dv[off..off + l * d]);
                if !(needs[0] || needs[1]) {
                    continue;
                }
                // dP = dO V^T, dS = P * (dP - rowsum(dP * P)) * scale
                let mut ds = vec![0.0; l * l];
                gemm(l, d, l, gs, Layout::row_major(d), vs, Layout::transposed(d), 0.0, &mut ds);
                for r in 0..l {
                    let row = &mut ds[r * l..(r + 1) * l];
                    let pr = &p[r * l..(r + 1) * l];
                    let dot: f64 = row.iter().zip(pr).map(|(a, b)| a * b).sum();
                    for (x, &pp) in row.iter_mut().zip(pr) {
                        *x = pp * (*x - dot) * scale;
                    }
                }
                gemm(l, l, d, &ds, Layout::row_major(l), ks, Layout::row_major(d), 0.0, &mut dq[off..off + l * d]);
                gemm(l, l, d, &ds, Layout::transposed(l), qs, Layout::row_major(d), 0.0, &mut dk[off..off + l * d]);
            }
            vec![needs[0].then_some(dq), needs[1].then_some(dk), needs[2].then_some(dv)]
        },
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::no_grad;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn streaming_matches_recorded_path() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let q = Tensor::randn(&[2, 300, 4], 1.0, &mut rng);
        let k = Tensor::randn(&[2, 300, 4], 1.0, &mut rng);
        let v = Tensor::randn(&[2, 300, 4], 1.0, &mut rng);
        let a = no_grad(|| scaled_dot_attention(&q, &k, &v, 0.5)).unwrap();
        let b = scaled_dot_attention(&q.clone().requires_grad(), &k, &v, 0.5).unwrap();
        for (x, y) in a.data().iter().zip(b.data()) {
            assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn rows_sum_to_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let q = Tensor::randn(&[3, 7, 2], 2.0, &mut rng);
        let k = Tensor::randn(&[3, 7, 2], 2.0, &mut rng);
        let p = attention_weights(&q, &k, 0.7).unwrap();
        for row in p.chunks(7) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() < 1e-10);
        }
    }

    #[test]
    fn single_token_returns_value() {
        let q = Tensor::from_vec(&[2, 1, 2], vec![1., 2., 3., 4.]).unwrap();
        let v = Tensor::from_vec(&[2, 1, 2], vec![5., 6., 7., 8.]).unwrap();
        let y = scaled_dot_attention(&q, &q, &v, 1.0).unwrap();
        assert_eq!(y.data(), v.data());
    }
}
