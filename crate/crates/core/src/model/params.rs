use std::collections::HashMap;

use prores_tensor::{Element, Tensor};

use crate::Error;

/// Role of a parameter tensor, as seen by initialization.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamSlot {
    /// RMSNorm gain; `layer` is `None` for the final norm.
    Gain { layer: Option<usize> },
    Weight {
        /// 1-based block index, `None` for embedding and head.
        layer: Option<usize>,
        /// Projection that writes back into the residual stream.
        residual_out: bool,
        /// Scaled by the DeepNorm init gain.
        deepnorm_scaled: bool,
        /// Receives decoupled weight decay.
        decay: bool,
    },
}

/// Role of a parameter tensor, as seen by the optimizer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ParamKind {
    Gain,
    Matrix,
    Embedding,
}

impl ParamKind {
    pub fn decays(self) -> bool {
        self == ParamKind::Matrix
    }
}

impl From<ParamSlot> for ParamKind {
    fn from(slot: ParamSlot) -> Self {
        match slot {
            ParamSlot::Gain { .. } => ParamKind::Gain,
            ParamSlot::Weight { decay: true, .. } => ParamKind::Matrix,
            ParamSlot::Weight { decay: false, .. } => ParamKind::Embedding,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParamEntry<T> {
    pub name: String,
    pub kind: ParamKind,
    pub tensor: Tensor<T>,
}

/// Named parameter tensors in a fixed insertion order.
#[derive(Debug, Clone, PartialEq)]
pub struct ParamSet<T> {
    entries: Vec<ParamEntry<T>>,
    index: HashMap<String, usize>,
}

impl<T> Default for ParamSet<T> {
    fn default() -> Self {
        Self {
            entries: Vec::new(),
            index: HashMap::new(),
        }
    }
}

impl<T: Element> ParamSet<T> {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, kind: ParamKind, tensor: Tensor<T>) -> Result<(), Error> {
        let name = name.into();
        if self.index.contains_key(&name) {
            return Err(Error::Config(format!("duplicate parameter `{name}`")));
        }
        self.index.insert(name.clone(), self.entries.len());
        self.entries.push(ParamEntry { name, kind, tensor });
        Ok(())
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn position(&self, name: &str) -> Option<usize> {
        self.index.get(name).copied()
    }

    pub fn get(&self, name: &str) -> Option<&Tensor<T>> {
        self.position(name).map(|i| &self.entries[i].tensor)
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor<T>> {
        let i = self.position(name)?;
        Some(&mut self.entries[i].tensor)
    }

    /// Looks up a tensor that the layout guarantees to exist.
    pub fn expect(&self, name: &str) -> Result<&Tensor<T>, Error> {
        self.get(name)
            .ok_or_else(|| Error::Config(format!("missing parameter `{name}`")))
    }

    pub fn entry(&self, i: usize) -> &ParamEntry<T> {
        &self.entries[i]
    }

    pub fn iter(&self) -> std::slice::Iter<'_, ParamEntry<T>> {
        self.entries.iter()
    }

    pub fn iter_mut(&mut self) -> std::slice::IterMut<'_, ParamEntry<T>> {
        self.entries.iter_mut()
    }

    pub fn numel(&self) -> usize {
        self.entries.iter().map(|e| e.tensor.numel()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.entries.iter().all(|e| e.tensor.is_finite())
    }

    /// Tensors with the same names, kinds and shapes in the same order.
    pub fn same_layout<U: Element>(&self, other: &ParamSet<U>) -> bool {
        self.len() == other.len()
            && self
                .iter()
                .zip(other.iter())
                .all(|(a, b)| a.name == b.name && a.kind == b.kind && a.tensor.shape() == b.tensor.shape())
    }
}
