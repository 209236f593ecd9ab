//! Dense row-major tensors and named parameter collections.
//!
//! [`ParamSet`] is the unit of checkpointing and freezing. Its JSON form is
//! `{"version":1,"entries":[{"name":..,"shape":[..],"data":[..]}, ..]}` with
//! entries sorted by name; a write/read cycle reproduces every value bitwise.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const PARAMSET_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Tensor {
    shape: Vec<usize>,
    data: Vec<f64>,
}

impl Tensor {
    pub fn new(shape: Vec<usize>, data: Vec<f64>) -> Result<Self> {
        if shape.contains(&0) {
            return Err(Error::Contract(format!(
                "tensor shape {shape:?} has a zero extent"
            )));
        }
        let numel: usize = shape.iter().product();
        if numel != data.len() {
            return Err(Error::dim("tensor data", numel, data.len()));
        }
        if let Some(pos) = data.iter().position(|v| !v.is_finite()) {
            return Err(Error::Numeric(format!(
                "non-finite entry {} at flat index {pos}",
                data[pos]
            )));
        }
        Ok(Tensor { shape, data })
    }

    pub fn vector(data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![data.len()], data)
    }

    pub fn matrix(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        Tensor::new(vec![rows, cols], data)
    }

    pub fn zeros(shape: Vec<usize>) -> Self {
        let numel = shape.iter().product();
        Tensor {
            shape,
            data: vec![0.0; numel],
        }
    }

    pub fn shape(&self) -> &[usize] {
        &self.shape
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn numel(&self) -> usize {
        self.data.len()
    }

    /// Mutable access for in-place updates. Callers must keep entries finite.
    pub(crate) fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    /// (rows, cols) view; vectors are a single column.
    pub fn as_matrix_dims(&self) -> Result<(usize, usize)> {
        match self.shape.as_slice() {
            [n] => Ok((*n, 1)),
            [r, c] => Ok((*r, *c)),
            other => Err(Error::Contract(format!(
                "rank-{} tensor where a vector or matrix was expected",
                other.len()
            ))),
        }
    }

    pub fn bitwise_eq(&self, other: &Tensor) -> bool {
        self.shape == other.shape
            && self
                .data
                .iter()
                .zip(&other.data)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Ordered map of named tensors. Iteration is lexicographic by name.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct ParamSet {
    entries: BTreeMap<String, Tensor>,
}

impl ParamSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, name: impl Into<String>, tensor: Tensor) -> Option<Tensor> {
        self.entries.insert(name.into(), tensor)
    }

    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.entries.get(name)
    }

    pub fn require(&self, name: &str) -> Result<&Tensor> {
        self.entries
            .get(name)
            .ok_or_else(|| Error::Contract(format!("missing parameter `{name}`")))
    }

    pub fn get_mut(&mut self, name: &str) -> Option<&mut Tensor> {
        self.entries.get_mut(name)
    }

    pub fn remove(&mut self, name: &str) -> Option<Tensor> {
        self.entries.remove(name)
    }

    pub fn contains(&self, name: &str) -> bool {
        self.entries.contains_key(name)
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.entries.keys().map(String::as_str)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Tensor)> {
        self.entries.iter().map(|(k, v)| (k.as_str(), v))
    }

    pub fn scalar_count(&self) -> usize {
        self.entries.values().map(Tensor::numel).sum()
    }

    /// Entries whose name starts with `prefix`, with the prefix stripped.
    pub fn with_prefix_stripped(&self, prefix: &str) -> ParamSet {
        let entries = self
            .entries
            .iter()
            .filter_map(|(k, v)| k.strip_prefix(prefix).map(|rest| (rest.to_string(), v.clone())))
            .collect();
        ParamSet { entries }
    }

    /// Copies every entry of `other` into `self` under `prefix`.
    pub fn extend_prefixed(&mut self, prefix: &str, other: &ParamSet) {
        for (name, t) in other.iter() {
            self.entries.insert(format!("{prefix}{name}"), t.clone());
        }
    }

    /// Names of tensors whose contents differ bitwise (or exist on one side only).
    pub fn bitwise_diff(&self, other: &ParamSet) -> Vec<String> {
        let mut names: Vec<String> = Vec::new();
        for (name, t) in &self.entries {
            match other.entries.get(name) {
                Some(u) if t.bitwise_eq(u) => {}
                _ => names.push(name.clone()),
            }
        }
        for name in other.entries.keys() {
            if !self.entries.contains_key(name) {
                names.push(name.clone());
            }
        }
        names
    }

    pub fn to_json(&self) -> String {
        let file = ParamSetFile {
            version: PARAMSET_VERSION,
            entries: self
                .entries
                .iter()
                .map(|(name, t)| EntryFile {
                    name: name.clone(),
                    shape: t.shape.clone(),
                    data: t.data.clone(),
                })
                .collect(),
        };
        serde_json::to_string(&file).expect("param set serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let file: ParamSetFile =
            serde_json::from_str(text).map_err(|e| Error::Schema(format!("param set: {e}")))?;
        if file.version != PARAMSET_VERSION {
            return Err(Error::Schema(format!(
                "unsupported param set version {}",
                file.version
            )));
        }
        let mut set = ParamSet::new();
        for entry in file.entries {
            let tensor = Tensor::new(entry.shape, entry.data)
                .map_err(|e| Error::Schema(format!("entry `{}`: {e}", entry.name)))?;
            if set.insert(entry.name.clone(), tensor).is_some() {
                return Err(Error::Schema(format!("duplicate entry `{}`", entry.name)));
            }
        }
        Ok(set)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_json()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}

#[derive(Serialize, Deserialize)]
struct ParamSetFile {
    version: u32,
    entries: Vec<EntryFile>,
}

#[derive(Serialize, Deserialize)]
struct EntryFile {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}
