use super::elementwise::unary;
use super::Tensor;

/// Activation kinds used by the convolution blocks.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Activation {
    Silu,
    Sigmoid,
    Relu,
    Identity,
}

pub fn sigmoid_scalar(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

impl Tensor {
    pub fn sigmoid(&self) -> Tensor {
        unary(self, "sigmoid", sigmoid_scalar, |_, y| y * (1.0 - y))
    }

    /// x * sigmoid(x).
    pub fn silu(&self) -> Tensor {
        unary(
            self,
            "silu",
            |x| x * sigmoid_scalar(x),
            |x, _| {
                let s = sigmoid_scalar(x);
                s * (1.0 + x * (1.0 - s))
            },
        )
    }

    pub fn relu(&self) -> Tensor {
        unary(self, "relu", |x| x.max(0.0), |x, _| if x > 0.0 { 1.0 } else { 0.0 })
    }

    pub fn activate(&self, kind: Activation) -> Tensor {
        match kind {
            Activation::Silu => self.silu(),
            Activation::Sigmoid => self.sigmoid(),
            Activation::Relu => self.relu(),
            Activation::Identity => self.clone(),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fixed_points() {
        let x = Tensor::from_vec(&[2], vec![0.0, 1.0]).unwrap();
        assert_eq!(x.sigmoid().data()[0], 0.5);
        assert_eq!(x.silu().data()[0], 0.0);
        // 1 / (1 + e^-1)
        assert!((x.silu().data()[1] - 0.731_058_578_630_004_9).abs() < 1e-12);
        assert_eq!(x.relu().data(), &[0.0, 1.0]);
    }

    #[test]
    fn sigmoid_is_stable_for_large_inputs() {
        let x = Tensor::from_vec(&[2], vec![-800.0, 800.0]).unwrap();
        assert_eq!(x.sigmoid().data(), &[0.0, 1.0]);
    }
}
