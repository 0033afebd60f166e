//! Named parameter storage, seeded initialisation, and per-pass binding of
//! parameters onto a [`Graph`].

use alloc::string::{String, ToString};
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::error::{Error, Result};
use crate::graph::{Gradients, Graph, Var};
use crate::tensor::Tensor;

/// Index of a tensor inside a [`ParamStore`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ParamId(usize);

impl ParamId {
    pub fn index(self) -> usize {
        self.0
    }
}

/// Ordered map from canonical parameter path (`encoder.cell0.W_f`) to tensor.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    names: Vec<String>,
    tensors: Vec<Tensor>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor) -> Result<ParamId> {
        let name = name.into();
        if self.names.contains(&name) {
            return Err(Error::Invalid(alloc::format!("duplicate parameter `{name}`")));
        }
        self.names.push(name);
        self.tensors.push(value);
        Ok(ParamId(self.tensors.len() - 1))
    }

    pub fn len(&self) -> usize {
        self.tensors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tensors.is_empty()
    }

    pub fn get(&self, id: ParamId) -> &Tensor {
        &self.tensors[id.0]
    }

    pub fn name(&self, id: ParamId) -> &str {
        &self.names[id.0]
    }

    pub fn find(&self, name: &str) -> Option<ParamId> {
        self.names.iter().position(|n| n == name).map(ParamId)
    }

    /// Replaces a tensor, keeping its shape.
    pub fn set(&mut self, id: ParamId, value: Tensor) -> Result<()> {
        let old = &self.tensors[id.0];
        if old.shape() != value.shape() {
            return Err(Error::shape("ParamStore::set", old.shape(), value.shape()));
        }
        self.tensors[id.0] = value;
        Ok(())
    }

    pub fn ids(&self) -> impl Iterator<Item = ParamId> {
        (0..self.tensors.len()).map(ParamId)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.names.iter().map(String::as_str).zip(&self.tensors)
    }

    pub fn tensors(&self) -> &[Tensor] {
        &self.tensors
    }

    /// Replaces every tensor at once (snapshot restore); shapes must match.
    pub fn load_tensors(&mut self, tensors: Vec<Tensor>) -> Result<()> {
        if tensors.len() != self.tensors.len() {
            return Err(Error::Invalid("snapshot has a different parameter count".into()));
        }
        for (old, new) in self.tensors.iter().zip(&tensors) {
            if old.shape() != new.shape() {
                return Err(Error::shape("load_tensors", old.shape(), new.shape()));
            }
        }
        self.tensors = tensors;
        Ok(())
    }

    /// Total number of trainable scalars.
    pub fn count(&self) -> usize {
        self.tensors.iter().map(Tensor::len).sum()
    }

    /// Scalar counts grouped by the first path segment, in first-seen order.
    pub fn breakdown(&self) -> Vec<(String, usize)> {
        let mut groups: Vec<(String, usize)> = Vec::new();
        for (name, t) in self.iter() {
            let group = name.split('.').next().unwrap_or(name);
            match groups.iter_mut().find(|(g, _)| g == group) {
                Some((_, n)) => *n += t.len(),
                None => groups.push((group.to_string(), t.len())),
            }
        }
        groups
    }
}

/// Creates named, seeded parameters under a dotted prefix.
pub struct ParamBuilder<'a> {
    store: &'a mut ParamStore,
    rng: &'a mut ChaCha8Rng,
    prefix: String,
}

impl<'a> ParamBuilder<'a> {
    pub fn new(store: &'a mut ParamStore, rng: &'a mut ChaCha8Rng) -> Self {
        ParamBuilder {
            store,
            rng,
            prefix: String::new(),
        }
    }

    /// A builder whose names are prefixed with `name.`.
    pub fn scope(&mut self, name: &str) -> ParamBuilder<'_> {
        ParamBuilder {
            prefix: self.path(name),
            store: self.store,
            rng: self.rng,
        }
    }

    fn path(&self, name: &str) -> String {
        if self.prefix.is_empty() {
            name.to_string()
        } else {
            alloc::format!("{}.{}", self.prefix, name)
        }
    }

    pub fn rng(&mut self) -> &mut ChaCha8Rng {
        self.rng
    }

    pub fn tensor(&mut self, name: &str, value: Tensor) -> Result<ParamId> {
        let path = self.path(name);
        self.store.insert(path, value)
    }

    pub fn zeros(&mut self, name: &str, shape: &[usize]) -> Result<ParamId> {
        self.tensor(name, Tensor::zeros(shape))
    }

    pub fn full(&mut self, name: &str, shape: &[usize], value: f64) -> Result<ParamId> {
        self.tensor(name, Tensor::full(shape, value))
    }

    pub fn uniform(&mut self, name: &str, shape: &[usize], bound: f64) -> Result<ParamId> {
        let n = shape.iter().product();
        let data = (0..n).map(|_| self.rng.random_range(-bound..=bound)).collect();
        self.tensor(name, Tensor::new(shape, data)?)
    }

    pub fn normal(&mut self, name: &str, shape: &[usize], std: f64) -> Result<ParamId> {
        let dist = Normal::new(0.0, std).map_err(|e| Error::Invalid(alloc::format!("{e}")))?;
        let n = shape.iter().product();
        let data = (0..n).map(|_| dist.sample(self.rng)).collect();
        self.tensor(name, Tensor::new(shape, data)?)
    }

    /// Glorot-uniform matrix `[rows, cols]`, bound `sqrt(6 / (rows + cols))`.
    pub fn glorot(&mut self, name: &str, rows: usize, cols: usize) -> Result<ParamId> {
        let bound = libm::sqrt(6.0 / (rows + cols) as f64);
        self.uniform(name, &[rows, cols], bound)
    }
}

/// Builds a store from a seed and a construction closure.
pub fn build_params<T>(seed: u64, f: impl FnOnce(&mut ParamBuilder<'_>) -> Result<T>) -> Result<(ParamStore, T)> {
    let mut store = ParamStore::new();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let out = {
        let mut b = ParamBuilder::new(&mut store, &mut rng);
        f(&mut b)?
    };
    Ok((store, out))
}

/// One forward/backward pass: a fresh graph with every parameter bound as a leaf.
pub struct Ctx {
    pub graph: Graph,
    vars: Vec<Var>,
}

impl Ctx {
    /// Parameters are grad-enabled leaves.
    pub fn train(store: &ParamStore) -> Self {
        let graph = Graph::new();
        let vars = store.tensors.iter().map(|t| graph.param(t.clone())).collect();
        Ctx { graph, vars }
    }

    /// Parameters are constants; no gradient bookkeeping.
    pub fn inference(store: &ParamStore) -> Self {
        let graph = Graph::new();
        let vars = store.tensors.iter().map(|t| graph.constant(t.clone())).collect();
        Ctx { graph, vars }
    }

    pub fn p(&self, id: ParamId) -> Var {
        self.vars[id.0]
    }

    pub fn g(&self) -> &Graph {
        &self.graph
    }

    /// Gradients of every parameter, aligned with the store.
    pub fn param_grads(&self, grads: &mut Gradients) -> Vec<Tensor> {
        self.vars.iter().map(|&v| grads.take(v)).collect()
    }
}
