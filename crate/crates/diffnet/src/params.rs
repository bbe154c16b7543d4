//! Named parameter storage with one gradient slot per parameter.

use indexmap::IndexMap;

use crate::error::{DiffnetError, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Vec<f64>,
}

impl Param {
    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn value(&self) -> &[f64] {
        &self.value
    }

    pub fn value_mut(&mut self) -> &mut [f64] {
        &mut self.value
    }

    pub fn grad(&self) -> &[f64] {
        &self.grad
    }

    pub fn grad_mut(&mut self) -> &mut [f64] {
        &mut self.grad
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub(crate) fn value_and_grad_mut(&mut self) -> (&mut [f64], &mut [f64]) {
        (&mut self.value, &mut self.grad)
    }
}

/// Insertion-ordered map from parameter name to values and gradients.
///
/// Names are unique and shapes never change once a parameter is added.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamStore {
    params: IndexMap<String, Param>,
}

impl ParamStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds a parameter and returns its index.
    pub fn add(&mut self, name: impl Into<String>, shape: Vec<usize>, value: Vec<f64>) -> Result<usize> {
        let name = name.into();
        let expected: usize = shape.iter().product();
        if expected != value.len() {
            return Err(DiffnetError::Dimension(format!(
                "parameter {name}: shape {shape:?} needs {expected} values, got {}",
                value.len()
            )));
        }
        if self.params.contains_key(&name) {
            return Err(DiffnetError::State(format!("duplicate parameter name {name}")));
        }
        let grad = vec![0.0; value.len()];
        let (idx, _) = self.params.insert_full(name, Param { shape, value, grad });
        Ok(idx)
    }

    pub fn len(&self) -> usize {
        self.params.len()
    }

    pub fn is_empty(&self) -> bool {
        self.params.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.params.values().map(Param::len).sum()
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.params.get(name)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        self.params.get_mut(name)
    }

    pub fn index_of(&self, name: &str) -> Option<usize> {
        self.params.get_index_of(name)
    }

    pub fn by_index(&self, idx: usize) -> (&str, &Param) {
        let (k, v) = self.params.get_index(idx).expect("parameter index in range");
        (k.as_str(), v)
    }

    pub fn by_index_mut(&mut self, idx: usize) -> &mut Param {
        self.params.get_index_mut(idx).expect("parameter index in range").1
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Param)> {
        self.params.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.params.keys().map(String::as_str)
    }

    pub fn zero_grads(&mut self) {
        for p in self.params.values_mut() {
            p.grad.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    /// Replaces the leading `from` prefix of every name with `to`.
    pub fn renamed(&self, from: &str, to: &str) -> Result<ParamStore> {
        let mut out = ParamStore::new();
        for (name, p) in self.iter() {
            let rest = name.strip_prefix(from).ok_or_else(|| {
                DiffnetError::State(format!("parameter {name} lacks prefix {from}"))
            })?;
            out.params.insert(format!("{to}{rest}"), p.clone());
        }
        Ok(out)
    }

    fn check_aligned(&self, other: &ParamStore) -> Result<()> {
        if self.len() != other.len() {
            return Err(DiffnetError::Dimension(format!(
                "parameter count {} vs {}",
                self.len(),
                other.len()
            )));
        }
        for ((na, a), (nb, b)) in self.iter().zip(other.iter()) {
            if a.shape != b.shape {
                return Err(DiffnetError::Dimension(format!(
                    "{na} has shape {:?} but {nb} has shape {:?}",
                    a.shape, b.shape
                )));
            }
        }
        Ok(())
    }

    /// Copies values positionally from a store with identical shapes.
    pub fn copy_values_from(&mut self, other: &ParamStore) -> Result<()> {
        self.check_aligned(other)?;
        for (a, b) in self.params.values_mut().zip(other.params.values()) {
            a.value.copy_from_slice(&b.value);
        }
        Ok(())
    }

    /// Polyak averaging: `self ← rho·self + (1 − rho)·online`, positionally.
    pub fn soft_update_from(&mut self, online: &ParamStore, rho: f64) -> Result<()> {
        self.check_aligned(online)?;
        for (t, o) in self.params.values_mut().zip(online.params.values()) {
            for (tv, ov) in t.value.iter_mut().zip(&o.value) {
                *tv = rho * *tv + (1.0 - rho) * ov;
            }
        }
        Ok(())
    }

    /// Euclidean distance between the concatenated values of two aligned stores.
    pub fn distance(&self, other: &ParamStore) -> Result<f64> {
        self.check_aligned(other)?;
        let sq: f64 = self
            .params
            .values()
            .zip(other.params.values())
            .flat_map(|(a, b)| a.value.iter().zip(&b.value))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(sq.sqrt())
    }

    pub fn all_finite(&self) -> bool {
        self.params.values().all(|p| p.value.iter().all(|v| v.is_finite()))
    }
}
