//! Dense f64 tensors with reverse-mode automatic differentiation.
//!
//! A [`Tensor`] is an immutable, reference-counted buffer in row-major order.
//! Operations on tensors that require gradients record a node holding the
//! parents and a closure computing the vector-Jacobian product. Calling
//! [`Tensor::backward`] on a scalar walks the recorded graph once in reverse
//! topological order and accumulates gradients into every leaf that has
//! `requires_grad` set (and into intermediates marked with
//! [`Tensor::retain_grad`]).
//!
//! Feature maps use NCHW layout throughout. Complex spectra are stored as real
//! tensors with a trailing extent of 2 holding (re, im).

mod activation;
mod attention;
mod conv;
mod elementwise;
mod fft;
mod matmul;
mod norm;
mod pool;
mod reduce;
mod shape_ops;

pub use activation::{sigmoid_scalar, Activation};
pub use attention::{attention_weights, scaled_dot_attention};
pub use conv::{conv2d, Conv2dOptions};
pub use fft::{irfft2, rfft2, ComplexSpectrum};
pub use norm::{batchnorm2d, BatchNormStats, BN_EPS, BN_MOMENTUM};
pub use pool::{maxpool2d, upsample_nearest2x};

use std::cell::Cell;
use std::collections::HashMap;
use std::fmt;
use std::sync::atomic::{AtomicBool, AtomicU64, Ordering};
use std::sync::{Arc, Mutex};

use rand::Rng;
use rand_distr::StandardNormal;

use crate::error::{Error, Result};

/// Vector-Jacobian product of one recorded operation.
///
/// Receives the gradient of the loss w.r.t. the operation's output and a flag
/// per parent telling whether that parent needs a gradient. Returns one entry
/// per parent.
pub(crate) type BackwardFn = Box<dyn Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync>;

struct Node {
    op: &'static str,
    parents: Vec<Tensor>,
    backward: BackwardFn,
}

struct Inner {
    id: u64,
    shape: Vec<usize>,
    data: Arc<Vec<f64>>,
    requires_grad: bool,
    retain: AtomicBool,
    grad: Mutex<Option<Vec<f64>>>,
    node: Option<Node>,
}

static NEXT_ID: AtomicU64 = AtomicU64::new(1);

thread_local! {
    static GRAD_ENABLED: Cell<bool> = const { Cell::new(true) };
    static BACKWARD_FAULT: Cell<Option<&'static str>> = const { Cell::new(None) };
}

/// Test hook: negates the vector-Jacobian product of every op named `op`
/// during backward passes on this thread. `None` clears it.
pub fn inject_backward_fault(op: Option<&'static str>) {
    BACKWARD_FAULT.with(|f| f.set(op));
}

/// Runs `f` without recording any graph nodes on this thread.
pub fn no_grad<T>(f: impl FnOnce() -> T) -> T {
    struct Restore(bool);
    impl Drop for Restore {
        fn drop(&mut self) {
            GRAD_ENABLED.with(|g| g.set(self.0));
        }
    }
    let prev = GRAD_ENABLED.with(|g| g.replace(false));
    let _restore = Restore(prev);
    f()
}

pub fn grad_enabled() -> bool {
    GRAD_ENABLED.with(|g| g.get())
}

/// Dense N-dimensional array of f64 with optional gradient tracking.
#[derive(Clone)]
pub struct Tensor(Arc<Inner>);

impl fmt::Debug for Tensor {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("Tensor")
            .field("shape", &self.0.shape)
            .field("requires_grad", &self.0.requires_grad)
            .field("op", &self.0.node.as_ref().map(|n| n.op))
            .finish()
    }
}

pub(crate) fn numel(shape: &[usize]) -> usize {
    shape.iter().product()
}

impl Tensor {
    fn build(shape: Vec<usize>, data: Arc<Vec<f64>>, requires_grad: bool, node: Option<Node>) -> Self {
        debug_assert_eq!(numel(&shape), data.len());
        Tensor(Arc::new(Inner {
            id: NEXT_ID.fetch_add(1, Ordering::Relaxed),
            shape,
            data,
            requires_grad,
            retain: AtomicBool::new(false),
            grad: Mutex::new(None),
            node,
        }))
    }

    /// Creates a constant tensor. Fails if the data length does not match the shape.
    pub fn from_vec(shape: &[usize], data: Vec<f64>) -> Result<Self> {
        if numel(shape) != data.len() {
            return Err(Error::Shape {
                op: "from_vec",
                msg: format!("shape {:?} holds {} values, got {}", shape, numel(shape), data.len()),
            });
        }
        Ok(Self::build(shape.to_vec(), Arc::new(data), false, None))
    }

    pub fn zeros(shape: &[usize]) -> Self {
        Self::full(shape, 0.0)
    }

    pub fn ones(shape: &[usize]) -> Self {
        Self::full(shape, 1.0)
    }

    pub fn full(shape: &[usize], value: f64) -> Self {
        Self::build(shape.to_vec(), Arc::new(vec![value; numel(shape)]), false, None)
    }

    pub fn scalar(value: f64) -> Self {
        Self::build(vec![], Arc::new(vec![value]), false, None)
    }

    /// Standard-normal samples scaled by `std`.
    pub fn randn<R: Rng + ?Sized>(shape: &[usize], std: f64, rng: &mut R) -> Self {
        let data = (0..numel(shape))
            .map(|_| rng.sample::<f64, _>(StandardNormal) * std)
            .collect();
        Self::build(shape.to_vec(), Arc::new(data), false, None)
    }

    /// Uniform samples in `[lo, hi)`.
    pub fn rand_uniform<R: Rng + ?Sized>(shape: &[usize], lo: f64, hi: f64, rng: &mut R) -> Self {
        let data = (0..numel(shape)).map(|_| rng.random_range(lo..hi)).collect();
        Self::build(shape.to_vec(), Arc::new(data), false, None)
    }

    /// A new leaf sharing this tensor's values with gradient tracking enabled.
    pub fn requires_grad(self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), true, None)
    }

    /// A new constant leaf sharing this tensor's values.
    pub fn detach(&self) -> Self {
        Self::build(self.0.shape.clone(), self.0.data.clone(), false, None)
    }

    /// Records `data` as the result of an operation on `parents`.
    ///
    /// A graph node is only created when gradients are enabled and at least
    /// one parent requires them.
    pub(crate) fn from_op(
        op: &'static str,
        shape: Vec<usize>,
        data: Arc<Vec<f64>>,
        parents: Vec<Tensor>,
        backward: impl Fn(&[f64], &[bool]) -> Vec<Option<Vec<f64>>> + Send + Sync + 'static,
    ) -> Self {
        let track = grad_enabled() && parents.iter().any(|p| p.0.requires_grad);
        if track {
            Self::build(
                shape,
                data,
                true,
                Some(Node {
                    op,
                    parents,
                    backward: Box::new(backward),
                }),
            )
        } else {
            Self::build(shape, data, false, None)
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.0.shape
    }

    pub fn ndim(&self) -> usize {
        self.0.shape.len()
    }

    pub fn numel(&self) -> usize {
        self.0.data.len()
    }

    pub fn data(&self) -> &[f64] {
        &self.0.data
    }

    pub(crate) fn data_arc(&self) -> Arc<Vec<f64>> {
        self.0.data.clone()
    }

    pub fn to_vec(&self) -> Vec<f64> {
        self.0.data.as_ref().clone()
    }

    /// The single value of a one-element tensor.
    pub fn item(&self) -> f64 {
        assert_eq!(self.numel(), 1, "item() on tensor with shape {:?}", self.shape());
        self.0.data[0]
    }

    pub fn is_requires_grad(&self) -> bool {
        self.0.requires_grad
    }

    pub fn id(&self) -> u64 {
        self.0.id
    }

    /// Name of the operation that produced this tensor, if it is a graph node.
    pub fn op_name(&self) -> Option<&'static str> {
        self.0.node.as_ref().map(|n| n.op)
    }

    /// Extent along `axis`; panics when out of range.
    pub fn dim(&self, axis: usize) -> usize {
        self.0.shape[axis]
    }

    /// Unpacks a rank-4 shape.
    pub fn dims4(&self, op: &'static str) -> Result<(usize, usize, usize, usize)> {
        match self.shape() {
            &[n, c, h, w] => Ok((n, c, h, w)),
            s => Err(Error::Shape {
                op,
                msg: format!("expected NCHW tensor, got shape {:?}", s),
            }),
        }
    }

    /// Gradient accumulated by the last backward passes, if any.
    pub fn grad(&self) -> Option<Vec<f64>> {
        self.0.grad.lock().expect("grad lock").clone()
    }

    pub fn zero_grad(&self) {
        *self.0.grad.lock().expect("grad lock") = None;
    }

    /// Keeps this intermediate's gradient after backward (used for activation taps).
    pub fn retain_grad(&self) {
        self.0.retain.store(true, Ordering::Relaxed);
    }

    /// Populates gradients of this scalar w.r.t. every leaf that requires them.
    ///
    /// Gradients add onto whatever a previous backward left behind.
    pub fn backward(&self) -> Result<()> {
        if self.numel() != 1 {
            return Err(Error::Usage(format!(
                "backward requires a scalar loss, got shape {:?}",
                self.shape()
            )));
        }
        if !self.0.requires_grad {
            return Ok(());
        }
        let order = self.topo_order();
        let mut grads: HashMap<u64, Vec<f64>> = HashMap::new();
        grads.insert(self.id(), vec![1.0]);
        for t in order.iter().rev() {
            let Some(g) = grads.remove(&t.id()) else {
                continue;
            };
            if t.0.retain.load(Ordering::Relaxed) || t.0.node.is_none() {
                accumulate_into(&t.0.grad, &g);
            }
            let Some(node) = &t.0.node else {
                continue;
            };
            let needs: Vec<bool> = node.parents.iter().map(|p| p.0.requires_grad).collect();
            let mut parent_grads = (node.backward)(&g, &needs);
            if BACKWARD_FAULT.with(|f| f.get()) == Some(node.op) {
                for v in parent_grads.iter_mut().flatten() {
                    v.iter_mut().for_each(|x| *x = -*x);
                }
            }
            debug_assert_eq!(parent_grads.len(), node.parents.len(), "op {}", node.op);
            for ((p, pg), need) in node.parents.iter().zip(parent_grads).zip(needs) {
                let Some(pg) = pg else { continue };
                if !need {
                    continue;
                }
                debug_assert_eq!(pg.len(), p.numel(), "op {} grad length", node.op);
                match grads.get_mut(&p.id()) {
                    Some(acc) => acc.iter_mut().zip(&pg).for_each(|(a, b)| *a += b),
                    None => {
                        grads.insert(p.id(), pg);
                    }
                }
            }
        }
        Ok(())
    }

    /// Post-order over the subgraph of tensors requiring gradients.
    fn topo_order(&self) -> Vec<Tensor> {
        let mut order = Vec::new();
        let mut visited = std::collections::HashSet::new();
        let mut stack: Vec<(Tensor, usize)> = vec![(self.clone(), 0)];
        visited.insert(self.id());
        while let Some((t, next)) = stack.pop() {
            let parents = t.0.node.as_ref().map(|n| n.parents.as_slice()).unwrap_or(&[]);
            if next < parents.len() {
                let p = parents[next].clone();
                stack.push((t, next + 1));
                if p.0.requires_grad && visited.insert(p.id()) {
                    stack.push((p, 0));
                }
            } else {
                order.push(t);
            }
        }
        order
    }
}

impl Drop for Inner {
    // Iterative teardown so long graphs cannot overflow the stack.
    fn drop(&mut self) {
        let Some(node) = self.node.take() else {
            return;
        };
        let mut stack = node.parents;
        while let Some(t) = stack.pop() {
            if let Ok(mut inner) = Arc::try_unwrap(t.0) {
                if let Some(n) = inner.node.take() {
                    stack.extend(n.parents);
                }
            }
        }
    }
}

fn accumulate_into(slot: &Mutex<Option<Vec<f64>>>, g: &[f64]) {
    let mut guard = slot.lock().expect("grad lock");
    match guard.as_mut() {
        Some(acc) => acc.iter_mut().zip(g).for_each(|(a, b)| *a += b),
        None => *guard = Some(g.to_vec()),
    }
}

/// Row-major strides of a shape.
pub(crate) fn strides(shape: &[usize]) -> Vec<usize> {
    let mut s = vec![1; shape.len()];
    for i in (0..shape.len().saturating_sub(1)).rev() {
        s[i] = s[i + 1] * shape[i + 1];
    }
    s
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn constants_do_not_require_grad() {
        let t = Tensor::from_vec(&[2, 2], vec![1.0, 2.0, 3.0, 4.0]).unwrap();
        assert!(!t.is_requires_grad());
        assert!(Tensor::from_vec(&[3], vec![1.0]).is_err());
    }

    #[test]
    fn sum_gives_ones() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap().requires_grad();
        x.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0; 3]);
    }

    #[test]
    fn square_sum_gives_two_x() {
        let x = Tensor::from_vec(&[3], vec![1.0, -2.0, 0.5]).unwrap().requires_grad();
        x.mul(&x).unwrap().sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![2.0, -4.0, 1.0]);
    }

    #[test]
    fn reuse_accumulates() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap().requires_grad();
        let y = x.add(&x).unwrap().add(&x).unwrap();
        y.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![3.0, 3.0]);
    }

    #[test]
    fn backward_on_non_scalar_is_usage_error() {
        let x = Tensor::ones(&[2]).requires_grad();
        assert!(matches!(x.scale(2.0).backward(), Err(Error::Usage(_))));
    }

    #[test]
    fn no_grad_skips_graph() {
        let x = Tensor::ones(&[2]).requires_grad();
        let y = no_grad(|| x.scale(3.0));
        assert!(!y.is_requires_grad());
        assert!(grad_enabled());
    }

    #[test]
    fn retained_intermediate_grad() {
        let x = Tensor::from_vec(&[2], vec![1.0, 2.0]).unwrap().requires_grad();
        let y = x.scale(3.0);
        y.retain_grad();
        y.mul(&y).unwrap().sum().backward().unwrap();
        assert_eq!(y.grad().unwrap(), vec![6.0, 12.0]);
        assert_eq!(x.grad().unwrap(), vec![18.0, 36.0]);
    }

    #[test]
    fn deep_chain_backward_visits_each_node_once() {
        let x = Tensor::from_vec(&[1], vec![1.0]).unwrap().requires_grad();
        let mut y = x.clone();
        for _ in 0..5000 {
            y = y.scale(1.0);
        }
        y.sum().backward().unwrap();
        assert_eq!(x.grad().unwrap(), vec![1.0]);
    }
}
