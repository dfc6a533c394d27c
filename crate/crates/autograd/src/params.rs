use std::collections::BTreeMap;
use std::rc::Rc;

use crate::error::{Error, Result};
use crate::graph::{Gradients, Graph, Var};
use crate::scalar::Scalar;
use crate::tensor::Tensor;

/// Named parameter tensors, ordered by hierarchical name (`enc1.conv0.weight`).
#[derive(Clone, Default)]
pub struct ParamStore<T: Scalar> {
    params: BTreeMap<String, Rc<Tensor<T>>>,
}

impl<T: Scalar> std::fmt::Debug for ParamStore<T> {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_map().entries(self.params.iter().map(|(k, v)| (k, v.shape()))).finish()
    }
}

impl<T: Scalar> PartialEq for ParamStore<T> {
    fn eq(&self, other: &Self) -> bool {
        self.params.len() == other.params.len()
            && self.params.iter().zip(&other.params).all(|((ka, va), (kb, vb))| ka == kb && va == vb)
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        Self { params: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, value: Tensor<T>) {
        self.params.insert(name.into(), Rc::new(value));
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.params.get(name).map(|v| v.as_ref())
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.params.get_mut(name).map(Rc::make_mut)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.params.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v.as_ref()))
    }

    /// Total number of scalar parameters.
    pub fn count(&self) -> usize {
        self.params.values().map(|t| t.numel()).sum()
    }

    /// Scalar count of parameters whose name starts with `prefix`.
    pub fn count_prefix(&self, prefix: &str) -> usize {
        self.params.iter().filter(|(k, _)| k.starts_with(prefix)).map(|(_, t)| t.numel()).sum()
    }

    pub fn cast<U: Scalar>(&self) -> ParamStore<U> {
        ParamStore {
            params: self.params.iter().map(|(k, v)| (k.clone(), Rc::new(v.cast::<U>()))).collect(),
        }
    }

    /// Register every parameter as a graph leaf. Names rejected by
    /// `trainable` become constants.
    pub fn bind<'g>(&self, graph: &'g Graph<T>, trainable: impl Fn(&str) -> bool) -> Bound<'g, T> {
        let vars = self
            .params
            .iter()
            .map(|(k, v)| (k.clone(), graph.leaf_rc(Rc::clone(v), trainable(k))))
            .collect();
        Bound { vars }
    }
}

/// Parameters registered on one graph.
pub struct Bound<'g, T: Scalar> {
    vars: BTreeMap<String, Var<'g, T>>,
}

impl<'g, T: Scalar> Bound<'g, T> {
    /// Wrap already-registered variables, e.g. leaves perturbed by a gradient check.
    pub fn from_vars(vars: impl IntoIterator<Item = (String, Var<'g, T>)>) -> Self {
        Self { vars: vars.into_iter().collect() }
    }

    pub fn get(&self, name: &str) -> Result<Var<'g, T>> {
        self.vars.get(name).copied().ok_or_else(|| Error::UnknownParam(name.to_string()))
    }

    /// Like [`Bound::get`] but panics; for layer code whose names are fixed
    /// at construction.
    pub fn var(&self, name: &str) -> Var<'g, T> {
        self.get(name).unwrap_or_else(|e| panic!("{e}"))
    }

    /// Gradients for every trainable parameter that took part in the output.
    pub fn grads(&self, grads: &Gradients<T>) -> BTreeMap<String, Tensor<T>> {
        self.vars
            .iter()
            .filter_map(|(k, v)| grads.get(*v).map(|g| (k.clone(), g.clone())))
            .collect()
    }
}
