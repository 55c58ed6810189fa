use std::sync::Arc;

use super::Tensor;
use crate::error::{shape_err, Result};

/// Row/column strides of a dense matrix operand.
#[derive(Clone, Copy)]
pub(crate) struct Layout {
    pub rs: isize,
    pub cs: isize,
}

impl Layout {
    pub fn row_major(cols: usize) -> Self {
        Layout { rs: cols as isize, cs: 1 }
    }

    /// The transpose of a row-major matrix with `cols` columns.
    pub fn transposed(cols: usize) -> Self {
        Layout { rs: 1, cs: cols as isize }
    }
}

/// C (m x n, row-major) = A (m x k) * B (k x n) + beta * C.
#[allow(clippy::too_many_arguments)]
pub(crate) fn gemm(
    m: usize,
    k: usize,
    n: usize,
    a: &[f64],
    la: Layout,
    b: &[f64],
    lb: Layout,
    beta: f64,
    c: &mut [f64],
) {
    assert!(c.len() >= m * n);
    if m == 0 || n == 0 {
        return;
    }
    if k == 0 {
        c[..m * n].iter_mut().for_each(|v| *v *= beta);
        return;
    }
    let max_a = (m as isize - 1) * la.rs + (k as isize - 1) * la.cs;
    let max_b = (k as isize - 1) * lb.rs + (n as isize - 1) * lb.cs;
    assert!((max_a as usize) < a.len() && (max_b as usize) < b.len());
    // SAFETY: the asserts above bound every index the kernel reads from A and
    // B, and C is a dense m x n row-major block within `c`.
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            1.0,
            a.as_ptr(),
            la.rs,
            la.cs,
            b.as_ptr(),
            lb.rs,
            lb.cs,
            beta,
            c.as_mut_ptr(),
            n as isize,
            1,
        );
    }
}

impl Tensor {
    /// Batched matrix product over the last two axes.
    ///
    /// `self` is (..., M, K); `rhs` is either (..., K, N) with identical
    /// leading extents or a plain (K, N) matrix shared across the batch.
    pub fn matmul(&self, rhs: &Tensor) -> Result<Tensor> {
        let (ash, bsh) = (self.shape(), rhs.shape());
        if ash.len() < 2 || bsh.len() < 2 {
            return shape_err("matmul", format!("need rank >= 2, got {:?} and {:?}", ash, bsh));
        }
        let (m, k) = (ash[ash.len() - 2], ash[ash.len() - 1]);
        let (k2, n) = (bsh[bsh.len() - 2], bsh[bsh.len() - 1]);
        let batch_a = &ash[..ash.len() - 2];
        let batch_b = &bsh[..bsh.len() - 2];
        let shared_rhs = batch_b.is_empty();
        if k != k2 || (!shared_rhs && batch_a != batch_b) {
            return shape_err("matmul", format!("incompatible operands {:?} x {:?}", ash, bsh));
        }
        let batch: usize = batch_a.iter().product();
        let a = self.data_arc();
        let b = rhs.data_arc();
        let b_off = move |i: usize| if shared_rhs { 0 } else { i * k * n };
        let mut out = vec![0.0; batch * m * n];
        for i in 0..batch {
            gemm(
                m,
                k,
                n,
                &a[i * m * k..],
                Layout::row_major(k),
                &b[b_off(i)..],
                Layout::row_major(n),
                0.0,
                &mut out[i * m * n..(i + 1) * m * n],
            );
        }
        let mut shape = batch_a.to_vec();
        shape.extend([m, n]);
        let b_len = b.len();
        Ok(Tensor::from_op(
            "matmul",
            shape,
            Arc::new(out),
            vec![self.clone(), rhs.clone()],
            move |g, needs| {
                let ga = needs[0].then(|| {
                    let mut ga = vec![0.0; batch * m * k];
                    for i in 0..batch {
                        // dA = dC * B^T
                        gemm(
                            m,
                            n,
                            k,
                            &g[i * m * n..],
                            Layout::row_major(n),
                            &b[b_off(i)..],
                            Layout::transposed(n),
                            0.0,
                            &mut ga[i * m * k..(i + 1) * m * k],
                        );
                    }
                    ga
                });
                let gb = needs[1].then(|| {
                    let mut gb = vec![0.0; b_len];
                    for i in 0..batch {
                        // dB += A^T * dC
                        let off = b_off(i);
                        gemm(
                            k,
                            m,
                            n,
                            &a[i * m * k..],
                            Layout::transposed(k),
                            &g[i * m * n..],
                            Layout::row_major(n),
                            1.0,
                            &mut gb[off..off + k * n],
                        );
                    }
                    gb
                });
                vec![ga, gb]
            },
        ))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn small_product() {
        let a = Tensor::from_vec(&[2, 3], vec![1., 2., 3., 4., 5., 6.]).unwrap();
        let b = Tensor::from_vec(&[3, 2], vec![7., 8., 9., 10., 11., 12.]).unwrap();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[58., 64., 139., 154.]);
    }

    #[test]
    fn batched_grad_matches_manual() {
        let a = Tensor::from_vec(&[2, 1, 2], vec![1., 2., 3., 4.]).unwrap().requires_grad();
        let b = Tensor::from_vec(&[2, 2, 1], vec![5., 6., 7., 8.]).unwrap().requires_grad();
        let c = a.matmul(&b).unwrap();
        assert_eq!(c.data(), &[17., 53.]);
        c.sum().backward().unwrap();
        assert_eq!(a.grad().unwrap(), vec![5., 6., 7., 8.]);
        assert_eq!(b.grad().unwrap(), vec![1., 2., 3., 4.]);
    }

    #[test]
    fn rejects_inner_mismatch() {
        assert!(Tensor::zeros(&[2, 3]).matmul(&Tensor::zeros(&[2, 3])).is_err());
    }
}
