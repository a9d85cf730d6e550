//! Named parameter tensors and their per-tape bindings.

use std::collections::HashMap;

use crate::error::AdError;
use crate::scalar::Scalar;
use crate::tape::{Tape, Var};
use crate::tensor::Tensor;

/// Ordered collection of named parameter tensors. Iteration follows insertion
/// order, which keeps optimizer updates and serialization deterministic.
pub struct ParamStore<T> {
    entries: Vec<(String, Tensor<T>)>,
    index: HashMap<String, usize>,
}

impl<T: Scalar> Default for ParamStore<T> {
    fn default() -> Self {
        Self::new()
    }
}

impl<T: Scalar> ParamStore<T> {
    pub fn new() -> Self {
        ParamStore { entries: Vec::new(), index: HashMap::new() }
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor<T>) -> Result<(), AdError> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(AdError::DuplicateParam(name));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push((name, tensor));
        Ok(())
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.index.get(name).map(|&i| &self.entries[i].1)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        self.index.get(name).map(|&i| &mut self.entries[i].1)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor<T>)> {
        self.entries.iter().map(|(n, t)| (n.as_str(), t))
    }

    pub fn iter_mut(&mut self) -> impl Iterator<Item = (&str, &mut Tensor<T>)> {
        self.entries.iter_mut().map(|(n, t)| (n.as_str(), t))
    }

    /// Total number of scalar parameters.
    pub fn total_params(&self) -> usize {
        self.entries.iter().map(|(_, t)| t.numel()).sum()
    }

    /// Register every parameter on `tape` (in insertion order) and return the
    /// name -> Var binding. `trainable` controls whether gradients flow.
    pub fn bind(&self, tape: &mut Tape<T>, trainable: bool) -> BoundParams {
        let mut map = HashMap::with_capacity(self.entries.len());
        let mut order = Vec::with_capacity(self.entries.len());
        for (name, tensor) in &self.entries {
            let var = tape.leaf(tensor.clone(), trainable);
            map.insert(name.clone(), var);
            order.push(name.clone());
        }
        BoundParams { map, order }
    }

    /// Convert precision element-wise (used by checkpoint I/O).
    pub fn convert<U: Scalar>(&self) -> ParamStore<U> {
        let mut out = ParamStore::new();
        for (name, t) in &self.entries {
            let data = t.data().iter().map(|&v| U::of(v.into_f64())).collect();
            out.insert(name.clone(), Tensor::new(t.shape(), data).expect("same shape"))
                .expect("names already unique");
        }
        out
    }
}

/// Name -> Var lookup for one tape.
pub struct BoundParams {
    map: HashMap<String, Var>,
    order: Vec<String>,
}

impl BoundParams {
    /// Panics on unknown names: parameter paths are static strings owned by
    /// the model code, so a miss is a programming error.
    pub fn var(&self, name: &str) -> Var {
        *self
            .map
            .get(name)
            .unwrap_or_else(|| panic!("parameter {name:?} is not in the store"))
    }

    pub fn contains(&self, name: &str) -> bool {
        self.map.contains_key(name)
    }

    /// Names in store order.
    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.order.iter().map(|s| s.as_str())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Shape;

    #[test]
    fn duplicate_names_rejected() {
        let mut store = ParamStore::<f64>::new();
        store.insert("a.w", Tensor::zeros(Shape::new(1, 1, 1, 1))).unwrap();
        assert!(store.insert("a.w", Tensor::zeros(Shape::new(1, 1, 1, 1))).is_err());
    }

    #[test]
    fn bind_registers_in_order() {
        let mut store = ParamStore::<f64>::new();
        store.insert("b", Tensor::full(Shape::new(1, 1, 1, 1), 2.0)).unwrap();
        store.insert("a", Tensor::full(Shape::new(1, 1, 1, 1), 1.0)).unwrap();
        let mut tape = Tape::new();
        let bound = store.bind(&mut tape, true);
        let names: Vec<_> = bound.names().collect();
        assert_eq!(names, vec!["b", "a"]);
        assert_eq!(tape.value(bound.var("a")).item(), 1.0);
    }
}
