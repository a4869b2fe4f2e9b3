use alloc::collections::BTreeMap;
use alloc::string::{String, ToString};
use alloc::vec::Vec;

use crate::error::{config_err, Result};
use crate::real::Real;
use crate::tensor::Tensor;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ParamKind {
    Weight,
    Bias,
    Scale,
    Shift,
    RunningMean,
    RunningVar,
}

impl ParamKind {
    /// Running statistics are state, not optimised parameters.
    pub fn trainable(self) -> bool {
        !matches!(self, ParamKind::RunningMean | ParamKind::RunningVar)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Param<S> {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor<S>,
}

/// Named model tensors in registration order.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct ParamStore<S> {
    entries: Vec<Param<S>>,
    index: BTreeMap<String, usize>,
}

impl<S: Real> ParamStore<S> {
    pub fn new() -> Self {
        Self { entries: Vec::new(), index: BTreeMap::new() }
    }

    pub fn insert(&mut self, name: &str, kind: ParamKind, tensor: Tensor<S>) -> Result<usize> {
        if self.index.contains_key(name) {
            return Err(config_err!("duplicate parameter '{}'", name));
        }
        self.entries.push(Param { name: name.to_string(), kind, tensor });
        self.index.insert(name.to_string(), self.entries.len() - 1);
        Ok(self.entries.len() - 1)
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Param<S>> {
        self.position(name).map(|i| &self.entries[i])
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Param<S>> {
        self.position(name).map(move |i| &mut self.entries[i])
    }

    pub fn entries(&self) -> &[Param<S>] {
        &self.entries
    }

    pub fn entries_mut(&mut self) -> &mut [Param<S>] {
        &mut self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn trainable_count(&self) -> usize {
        self.entries.iter().filter(|p| p.kind.trainable()).map(|p| p.tensor.len()).sum()
    }

    /// Checks that `other` holds exactly the same names, kinds and shapes.
    pub fn ensure_same_layout<T: Real>(&self, other: &ParamStore<T>) -> Result<()> {
        if self.len() != other.len() {
            return Err(config_err!("expected {} parameters, found {}", self.len(), other.len()));
        }
        for (a, b) in self.entries.iter().zip(other.entries()) {
            if a.name != b.name || a.kind != b.kind {
                return Err(config_err!("expected parameter '{}', found '{}'", a.name, b.name));
            }
            if a.tensor.shape() != b.tensor.shape() {
                return Err(config_err!(
                    "parameter '{}' should have shape {:?}, found {:?}",
                    a.name,
                    a.tensor.shape(),
                    b.tensor.shape()
                ));
            }
        }
        Ok(())
    }

    pub fn cast<T: Real>(&self) -> ParamStore<T> {
        ParamStore {
            entries: self
                .entries
                .iter()
                .map(|p| Param { name: p.name.clone(), kind: p.kind, tensor: p.tensor.cast() })
                .collect(),
            index: self.index.clone(),
        }
    }
}
