//! Named parameter storage shared by every block.
//!
//! Blocks hold [`ParamId`]s into a [`ParamStore`] instead of owning tensors,
//! so a whole network can be swapped to fresh gradient leaves, perturbed for
//! finite differences, checkpointed, or updated by an optimizer by walking a
//! single flat list of dotted names.

use std::collections::HashMap;
use std::sync::Mutex;

use rand::Rng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::tensor::Tensor;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(pub(crate) usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum ParamKind {
    /// Updated by the optimizer.
    Trainable,
    /// Fixed weights, e.g. Sobel kernels.
    Frozen,
    /// Non-gradient state such as batch-norm running statistics.
    Buffer,
}

#[derive(Clone, Debug)]
pub struct Param {
    pub name: String,
    pub kind: ParamKind,
    pub value: Tensor,
}

#[derive(Clone, Debug, Default)]
pub struct ParamStore {
    params: Vec<Param>,
    index: HashMap<String, usize>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, name: impl Into<String>, kind: ParamKind, value: Tensor) -> ParamId {
        let name = name.into();
        assert!(!self.index.contains_key(&name), "duplicate parameter name {name}");
        let id = self.params.len();
        self.index.insert(name.clone(), id);
        self.params.push(Param {
            name,
            kind,
            value: value.detach(),
        });
        ParamId(id)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.params[id.0].value
    }

    pub fn param(&self, id: ParamId) -> &Param {
        &self.params[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.params[id.0].name
    }

    pub fn kind(&self, id: ParamId) -> ParamKind {
        self.params[id.0].kind
    }

    pub fn lookup(&self, name: &str) -> Option<ParamId> {
        self.index.get(name).map(|&i| ParamId(i))
    }

    /// Replaces a value; the shape must stay the same.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let p = &mut self.params[id.0];
        if p.value.shape() != value.shape() {
            return Err(Error::Shape {
                op: "ParamStore::set",
                msg: format!("{}: {:?} -> {:?}", p.name, p.value.shape(), value.shape()),
            });
        }
        p.value = value;
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> + '_ {
        (0..self.params.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (ParamId, &Param)> {
        self.params.iter().enumerate().map(|(i, p)| (ParamId(i), p))
    }

    pub fn trainable_ids(&self) -> Vec<ParamId> {
        self.iter()
            .filter(|(_, p)| p.kind == ParamKind::Trainable)
            .map(|(id, _)| id)
            .collect()
    }

    /// Number of trainable scalars, optionally restricted to a name prefix.
    pub fn count_trainable(&self, prefix: &str) -> usize {
        self.params
            .iter()
            .filter(|p| p.kind == ParamKind::Trainable && has_prefix(&p.name, prefix))
            .map(|p| p.value.numel())
            .sum()
    }

    /// A copy whose trainable entries are fresh gradient leaves.
    pub fn with_grad_leaves(&self) -> ParamStore {
        let mut s = self.clone();
        for p in &mut s.params {
            if p.kind == ParamKind::Trainable {
                p.value = p.value.detach().requires_grad();
            }
        }
        s
    }

    /// A copy with the given entries replaced (shapes unchecked beyond debug).
    pub fn with_values(&self, ids: &[ParamId], values: &[Tensor]) -> ParamStore {
        let mut s = self.clone();
        for (&id, v) in ids.iter().zip(values) {
            debug_assert_eq!(s.params[id.0].value.shape(), v.shape());
            s.params[id.0].value = v.clone();
        }
        s
    }
}

/// `name` equals `prefix` or starts with `prefix.`; an empty prefix matches all.
pub fn has_prefix(name: &str, prefix: &str) -> bool {
    prefix.is_empty() || name == prefix || (name.starts_with(prefix) && name.as_bytes().get(prefix.len()) == Some(&b'.'))
}

/// Registers parameters under a dotted name prefix.
pub struct Builder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> Builder<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        Builder {
            store,
            rng,
            prefix: String::new(),
        }
    }

    pub fn child(&mut self, name: &str) -> Builder<'_> {
        Builder {
            prefix: self.path(name),
            store: self.store,
            rng: self.rng,
        }
    }

    pub fn prefix(&self) -> &str {
        &self.prefix
    }

    pub fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            format!("{}.{}", self.prefix, name)
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    pub fn store(&self) -> &ParamStore {
        self.store
    }

    pub fn add(&mut self, name: &str, kind: ParamKind, value: Tensor) -> ParamId {
        let full = self.path(name);
        self.store.add(full, kind, value)
    }

    /// Overwrites the initial value of an already registered entry.
    pub fn set(&mut self, id: ParamId, value: Tensor) {
        self.store.set(id, value).expect("initial value keeps its shape");
    }

    /// Uniform(-1/sqrt(fan_in), 1/sqrt(fan_in)) weights.
    pub fn uniform_fan_in(&mut self, name: &str, shape: &[usize], fan_in: usize) -> ParamId {
        let bound = 1.0 / (fan_in.max(1) as f64).sqrt();
        let data = (0..shape.iter().product::<usize>())
            .map(|_| self.rng.random_range(-bound..bound))
            .collect();
        let t = Tensor::from_vec(shape, data).expect("shape and data agree");
        self.add(name, ParamKind::Trainable, t)
    }
}

/// Toggles that alter a forward pass without touching parameters.
#[derive(Clone, Copy, Debug, Default)]
pub struct ForwardOptions {
    /// Replace every HEM edge feature by zeros before fusion.
    pub zero_edges: bool,
}

/// Per-call forward state: parameters, mode and collected buffer updates.
pub struct Ctx<'a> {
    pub store: &'a ParamStore,
    pub train: bool,
    pub opts: ForwardOptions,
    updates: Mutex<Vec<(ParamId, Tensor)>>,
}

impl<'a> Ctx<'a> {
    pub fn new(store: &'a ParamStore, train: bool) -> Self {
        Ctx {
            store,
            train,
            opts: ForwardOptions::default(),
            updates: Mutex::new(Vec::new()),
        }
    }

    pub fn eval(store: &'a ParamStore) -> Self {
        Self::new(store, false)
    }

    pub fn with_options(mut self, opts: ForwardOptions) -> Self {
        self.opts = opts;
        self
    }

    pub fn p(&self, id: ParamId) -> &Tensor {
        self.store.get(id)
    }

    pub(crate) fn push_update(&self, id: ParamId, value: Tensor) {
        self.updates.lock().expect("updates lock").push((id, value));
    }

    /// Buffer updates recorded during the forward pass, in call order.
    pub fn take_updates(&self) -> Vec<(ParamId, Tensor)> {
        std::mem::take(&mut *self.updates.lock().expect("updates lock"))
    }
}

/// Commits buffer updates (e.g. batch-norm running statistics) to a store.
pub fn apply_updates(store: &mut ParamStore, updates: Vec<(ParamId, Tensor)>) -> Result<()> {
    for (id, v) in updates {
        store.set(id, v)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;

    #[test]
    fn builder_prefixes_and_counts() {
        let mut store = ParamStore::new();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut b = Builder::new(&mut store, &mut rng);
        {
            let mut c = b.child("stem");
            c.uniform_fan_in("w", &[16, 8, 1, 1], 8);
            c.add("b", ParamKind::Trainable, Tensor::zeros(&[16]));
            c.add("sobel", ParamKind::Frozen, Tensor::zeros(&[2, 1, 3, 3]));
        }
        b.child("stemx").add("w", ParamKind::Trainable, Tensor::zeros(&[3]));
        assert_eq!(store.count_trainable("stem"), 144);
        assert_eq!(store.count_trainable(""), 147);
        assert!(store.lookup("stem.w").is_some());
    }

    #[test]
    fn leaves_are_fresh() {
        let mut store = ParamStore::new();
        let id = store.add("a", ParamKind::Trainable, Tensor::ones(&[2]));
        let f = store.add("f", ParamKind::Frozen, Tensor::ones(&[2]));
        let l = store.with_grad_leaves();
        assert!(l.get(id).is_requires_grad());
        assert!(!l.get(f).is_requires_grad());
        assert!(!store.get(id).is_requires_grad());
    }
}
