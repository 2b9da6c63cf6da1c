use std::collections::HashMap;

use crate::{Error, Result};

/// One named weight array with its gradient slot.
#[derive(Debug, Clone, PartialEq)]
pub struct Param {
    pub name: String,
    pub shape: Vec<usize>,
    pub values: Vec<f64>,
    pub grads: Vec<f64>,
}

impl Param {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Ordered collection of named parameter arrays for one network (or a group of
/// sub-networks sharing a name prefix).
///
/// Values and gradients of an entry always have the same length, and names are
/// unique within the store.
#[derive(Debug, Clone, Default)]
pub struct ParameterStore {
    entries: Vec<Param>,
    index: HashMap<String, usize>,
}

impl PartialEq for ParameterStore {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries
    }
}

impl ParameterStore {
    pub fn new() -> Self {
        Self::default()
    }

    /// Adds an entry with the given values and zeroed gradients.
    pub fn insert(&mut self, name: &str, shape: &[usize], values: Vec<f64>) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(Error::Config(format!("duplicate parameter name '{name}'")));
        }
        let expected: usize = shape.iter().product();
        if expected != values.len() {
            return Err(Error::Shape(format!(
                "parameter '{name}': shape {shape:?} holds {expected} values, got {}",
                values.len()
            )));
        }
        let id = self.entries.len();
        self.entries.push(Param {
            name: name.to_owned(),
            shape: shape.to_vec(),
            grads: vec![0.0; values.len()],
            values,
        });
        self.index.insert(name.to_owned(), id);
        Ok(id)
    }

    pub fn insert_zeros(&mut self, name: &str, shape: &[usize]) -> Result<usize> {
        let n = shape.iter().product();
        self.insert(name, shape, vec![0.0; n])
    }

    pub fn get(&self, name: &str) -> Option<&Param> {
        self.index.get(name).map(|&i| &self.entries[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param> {
        match self.index.get(name) {
            Some(&i) => Some(&mut self.entries[i]),
            None => None,
        }
    }

    /// Looks up an entry and checks its shape.
    pub fn expect(&self, name: &str, shape: &[usize]) -> Result<&Param> {
        let p = self
            .get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter '{name}'")))?;
        if p.shape != shape {
            return Err(Error::Config(format!(
                "parameter '{name}' has shape {:?}, expected {shape:?}",
                p.shape
            )));
        }
        Ok(p)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn entries(&self) -> &[Param] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Param] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Total number of scalar parameters.
    pub fn num_scalars(&self) -> usize {
        self.entries.iter().map(Param::len).sum()
    }

    pub fn zero_grads(&mut self) {
        for p in &mut self.entries {
            p.grads.iter_mut().for_each(|g| *g = 0.0);
        }
    }

    pub fn grad_norm(&self) -> f64 {
        self.entries
            .iter()
            .flat_map(|p| p.grads.iter())
            .map(|g| g * g)
            .sum::<f64>()
            .sqrt()
    }

    /// Errors unless both stores have the same entry names and shapes in the same order.
    pub fn check_same_layout(&self, other: &ParameterStore) -> Result<()> {
        if self.entries.len() != other.entries.len() {
            return Err(Error::Shape(format!(
                "stores hold {} and {} entries",
                self.entries.len(),
                other.entries.len()
            )));
        }
        for (a, b) in self.entries.iter().zip(&other.entries) {
            if a.name != b.name || a.shape != b.shape {
                return Err(Error::Shape(format!(
                    "entry mismatch: '{}' {:?} vs '{}' {:?}",
                    a.name, a.shape, b.name, b.shape
                )));
            }
        }
        Ok(())
    }

    /// Copies values (not gradients) from a store with the same layout.
    pub fn copy_values_from(&mut self, other: &ParameterStore) -> Result<()> {
        self.check_same_layout(other)?;
        for (a, b) in self.entries.iter_mut().zip(&other.entries) {
            a.values.copy_from_slice(&b.values);
        }
        Ok(())
    }

    /// Euclidean distance between the values of two stores with the same layout.
    pub fn distance(&self, other: &ParameterStore) -> Result<f64> {
        self.check_same_layout(other)?;
        let sq: f64 = self
            .entries
            .iter()
            .zip(&other.entries)
            .flat_map(|(a, b)| a.values.iter().zip(&b.values))
            .map(|(x, y)| (x - y) * (x - y))
            .sum();
        Ok(sq.sqrt())
    }

    /// Scalar at a flat position (entry, offset).
    pub fn value_at(&self, entry: usize, offset: usize) -> f64 {
        self.entries[entry].values[offset]
    }

    pub fn set_value_at(&mut self, entry: usize, offset: usize, v: f64) {
        self.entries[entry].values[offset] = v;
    }
}
