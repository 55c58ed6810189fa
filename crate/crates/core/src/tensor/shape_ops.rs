use std::sync::Arc;

use super::{numel, strides, Tensor};
use crate::error::{shape_err, Result};

impl Tensor {
    /// Same values viewed under a new shape with equal element count.
    pub fn reshape(&self, shape: &[usize]) -> Result<Tensor> {
        if numel(shape) != self.numel() {
            return shape_err(
                "reshape",
                format!("cannot view {:?} as {:?}", self.shape(), shape),
            );
        }
        Ok(Tensor::from_op(
            "reshape",
            shape.to_vec(),
            self.data_arc(),
            vec![self.clone()],
            |g, _| vec![Some(g.to_vec())],
        ))
    }

    /// Reorders axes so that output axis `i` is input axis `perm[i]`.
    pub fn permute(&self, perm: &[usize]) -> Result<Tensor> {
        let nd = self.ndim();
        let mut seen = vec![false; nd];
        if perm.len() != nd || perm.iter().any(|&p| p >= nd || std::mem::replace(&mut seen[p], true)) {
            return shape_err("permute", format!("{:?} is not a permutation of {} axes", perm, nd));
        }
        let in_shape = self.shape().to_vec();
        let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
        let src_index = permute_index(&in_shape, perm);
        let x = self.data();
        let out: Vec<f64> = src_index.iter().map(|&i| x[i]).collect();
        let idx = Arc::new(src_index);
        Ok(Tensor::from_op("permute", out_shape, Arc::new(out), vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; g.len()];
            for (k, &i) in idx.iter().enumerate() {
                gx[i] = g[k];
            }
            vec![Some(gx)]
        }))
    }

    /// Swaps the last two axes.
    pub fn transpose_last2(&self) -> Result<Tensor> {
        let nd = self.ndim();
        if nd < 2 {
            return shape_err("transpose", "need at least 2 axes");
        }
        let mut perm: Vec<usize> = (0..nd).collect();
        perm.swap(nd - 1, nd - 2);
        self.permute(&perm)
    }

    /// Concatenates tensors along `axis`; all other extents must agree.
    pub fn concat(parts: &[Tensor], axis: usize) -> Result<Tensor> {
        let Some(first) = parts.first() else {
            return shape_err("concat", "no inputs");
        };
        let nd = first.ndim();
        if axis >= nd {
            return shape_err("concat", format!("axis {} out of range for rank {}", axis, nd));
        }
        for (i, p) in parts.iter().enumerate() {
            let ok = p.ndim() == nd
                && (0..nd).all(|d| d == axis || p.shape()[d] == first.shape()[d]);
            if !ok {
                return shape_err(
                    "concat",
                    format!(
                        "input {} has shape {:?}, incompatible with {:?} off axis {}",
                        i,
                        p.shape(),
                        first.shape(),
                        axis
                    ),
                );
            }
        }
        let outer: usize = first.shape()[..axis].iter().product();
        let inner: usize = first.shape()[axis + 1..].iter().product();
        let extents: Vec<usize> = parts.iter().map(|p| p.shape()[axis]).collect();
        let total: usize = extents.iter().sum();
        let mut out_shape = first.shape().to_vec();
        out_shape[axis] = total;
        let mut out = Vec::with_capacity(outer * total * inner);
        for o in 0..outer {
            for (p, &e) in parts.iter().zip(&extents) {
                out.extend_from_slice(&p.data()[o * e * inner..(o + 1) * e * inner]);
            }
        }
        let ext = extents.clone();
        Ok(Tensor::from_op("concat", out_shape, Arc::new(out), parts.to_vec(), move |g, needs| {
            let mut grads: Vec<Option<Vec<f64>>> = ext
                .iter()
                .zip(needs)
                .map(|(&e, &n)| n.then(|| Vec::with_capacity(outer * e * inner)))
                .collect();
            let mut off = 0;
            for _ in 0..outer {
                for (gp, &e) in grads.iter_mut().zip(&ext) {
                    if let Some(v) = gp.as_mut() {
                        v.extend_from_slice(&g[off..off + e * inner]);
                    }
                    off += e * inner;
                }
            }
            grads
        }))
    }

    /// Channel concatenation of NCHW maps.
    pub fn concat_channels(parts: &[Tensor]) -> Result<Tensor> {
        for p in parts {
            p.dims4("concat_channels")?;
        }
        Tensor::concat(parts, 1)
    }

    /// Slice `[start, start+len)` along `axis`.
    pub fn narrow(&self, axis: usize, start: usize, len: usize) -> Result<Tensor> {
        if axis >= self.ndim() || start + len > self.shape()[axis] {
            return shape_err(
                "narrow",
                format!("range {}..{} on axis {} of {:?}", start, start + len, axis, self.shape()),
            );
        }
        let e = self.shape()[axis];
        let outer: usize = self.shape()[..axis].iter().product();
        let inner: usize = self.shape()[axis + 1..].iter().product();
        let x = self.data();
        let mut out = Vec::with_capacity(outer * len * inner);
        for o in 0..outer {
            let base = o * e * inner + start * inner;
            out.extend_from_slice(&x[base..base + len * inner]);
        }
        let mut shape = self.shape().to_vec();
        shape[axis] = len;
        let total = self.numel();
        Ok(Tensor::from_op("narrow", shape, Arc::new(out), vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; total];
            for o in 0..outer {
                let base = o * e * inner + start * inner;
                gx[base..base + len * inner].copy_from_slice(&g[o * len * inner..(o + 1) * len * inner]);
            }
            vec![Some(gx)]
        }))
    }

    /// Splits an NCHW map into channel groups of the given sizes.
    pub fn split_channels(&self, sizes: &[usize]) -> Result<Vec<Tensor>> {
        let (_, c, _, _) = self.dims4("split_channels")?;
        if sizes.iter().sum::<usize>() != c {
            return shape_err(
                "split_channels",
                format!("sizes {:?} do not sum to {} channels", sizes, c),
            );
        }
        let mut start = 0;
        let mut out = Vec::with_capacity(sizes.len());
        for &s in sizes {
            out.push(self.narrow(1, start, s)?);
            start += s;
        }
        Ok(out)
    }

    /// Rearranges elements by a bijective flat index: `out[i] = self[src[i]]`.
    pub(crate) fn rearrange(&self, op: &'static str, shape: Vec<usize>, src: Vec<usize>) -> Tensor {
        debug_assert_eq!(numel(&shape), src.len());
        debug_assert_eq!(src.len(), self.numel());
        let x = self.data();
        let out: Vec<f64> = src.iter().map(|&i| x[i]).collect();
        let idx = Arc::new(src);
        Tensor::from_op(op, shape, Arc::new(out), vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; g.len()];
            for (k, &i) in idx.iter().enumerate() {
                gx[i] = g[k];
            }
            vec![Some(gx)]
        })
    }

    /// Pads H and W by `p` on every side, repeating the border values.
    pub fn pad_replicate(&self, p: usize) -> Result<Tensor> {
        let (n, c, h, w) = self.dims4("pad_replicate")?;
        if h == 0 || w == 0 {
            return shape_err("pad_replicate", "empty spatial dims");
        }
        let (hp, wp) = (h + 2 * p, w + 2 * p);
        let mut src = Vec::with_capacity(n * c * hp * wp);
        for plane in 0..n * c {
            for i in 0..hp {
                let y = i.saturating_sub(p).min(h - 1);
                for j in 0..wp {
                    let x = j.saturating_sub(p).min(w - 1);
                    src.push((plane * h + y) * w + x);
                }
            }
        }
        let x = self.data();
        let out: Vec<f64> = src.iter().map(|&i| x[i]).collect();
        let numel = self.numel();
        let idx = Arc::new(src);
        Ok(Tensor::from_op("pad_replicate", vec![n, c, hp, wp], Arc::new(out), vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; numel];
            for (k, &i) in idx.iter().enumerate() {
                gx[i] += g[k];
            }
            vec![Some(gx)]
        }))
    }

    /// Gathers rows of a tensor along axis 0.
    pub fn index_select0(&self, indices: &[usize]) -> Result<Tensor> {
        let Some((&rows, rest)) = self.shape().split_first() else {
            return shape_err("index_select0", "scalar input");
        };
        if let Some(&bad) = indices.iter().find(|&&i| i >= rows) {
            return shape_err("index_select0", format!("index {} out of {} rows", bad, rows));
        }
        let inner: usize = rest.iter().product();
        let x = self.data();
        let mut out = Vec::with_capacity(indices.len() * inner);
        for &i in indices {
            out.extend_from_slice(&x[i * inner..(i + 1) * inner]);
        }
        let mut shape = vec![indices.len()];
        shape.extend_from_slice(rest);
        let idx = indices.to_vec();
        let total = self.numel();
        Ok(Tensor::from_op("index_select0", shape, Arc::new(out), vec![self.clone()], move |g, _| {
            let mut gx = vec![0.0; total];
            for (k, &i) in idx.iter().enumerate() {
                for j in 0..inner {
                    gx[i * inner + j] += g[k * inner + j];
                }
            }
            vec![Some(gx)]
        }))
    }
}

/// For each output position (row-major), the flat input index it reads.
fn permute_index(in_shape: &[usize], perm: &[usize]) -> Vec<usize> {
    let in_strides = strides(in_shape);
    let out_shape: Vec<usize> = perm.iter().map(|&p| in_shape[p]).collect();
    let src_strides: Vec<usize> = perm.iter().map(|&p| in_strides[p]).collect();
    let n = numel(in_shape);
    let mut idx = Vec::with_capacity(n);
    let nd = out_shape.len();
    let mut coord = vec![0usize; nd];
    let mut src = 0usize;
    for _ in 0..n {
        idx.push(src);
        for d in (0..nd).rev() {
            coord[d] += 1;
            src += src_strides[d];
            if coord[d] < out_shape[d] {
                break;
            }
            src -= src_strides[d] * coord[d];
            coord[d] = 0;
        }
    }
    idx
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn concat_then_split_round_trips() {
        let a = Tensor::from_vec(&[2, 3, 2, 2], (0..24).map(f64::from).collect()).unwrap();
        let b = Tensor::from_vec(&[2, 5, 2, 2], (100..140).map(f64::from).collect()).unwrap();
        let c = Tensor::concat_channels(&[a.clone(), b.clone()]).unwrap();
        assert_eq!(c.shape(), &[2, 8, 2, 2]);
        let parts = c.split_channels(&[3, 5]).unwrap();
        assert_eq!(parts[0].data(), a.data());
        assert_eq!(parts[1].data(), b.data());
    }

    #[test]
    fn concat_rejects_mismatched_spatial() {
        let a = Tensor::zeros(&[1, 2, 4, 4]);
        let b = Tensor::zeros(&[1, 2, 4, 3]);
        let err = Tensor::concat_channels(&[a, b]).unwrap_err().to_string();
        assert!(err.contains("concat"), "{err}");
    }

    #[test]
    fn split_rejects_bad_sizes() {
        assert!(Tensor::zeros(&[1, 4, 1, 1]).split_channels(&[1, 2]).is_err());
    }

    #[test]
    fn permute_matches_manual_transpose() {
        let x = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let t = x.transpose_last2().unwrap();
        assert_eq!(t.shape(), &[3, 2]);
        assert_eq!(t.data(), &[1., 4., 2., 5., 3., 6.]);
        let y = Tensor::from_vec(&[2, 3, 4], (0..24).map(f64::from).collect()).unwrap();
        let p = y.permute(&[2, 0, 1]).unwrap();
        assert_eq!(p.shape(), &[4, 2, 3]);
        // out[k][i][j] = in[i][j][k]
        assert_eq!(p.data()[6 + 3 + 2], y.data()[12 + 2 * 4 + 1]);
        assert!(y.permute(&[0, 0, 1]).is_err());
    }

    #[test]
    fn index_select_accumulates_repeated_rows() {
        let x = Tensor::from_vec(&[3, 2], vec![1., 2., 3., 4., 5., 6.]).unwrap().requires_grad();
        let y = x.index_select0(&[2, 0, 2]).unwrap();
        assert_eq!(y.data(), &[5., 6., 1., 2., 5., 6.]);
        y.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1., 1., 0., 0., 2., 2.]);
    }
}
