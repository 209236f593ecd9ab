//! SGD and Adam with a parameter mask.
//!
//! Only names in the mask are touched; everything else in the [`ParamSet`]
//! stays bitwise identical, which is how frozen tensors are enforced.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tape::Gradients;
use crate::tensor::ParamSet;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamHyper {
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamHyper {
    fn default() -> Self {
        AdamHyper {
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// Set of parameter names an optimizer step may modify.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Mask(BTreeSet<String>);

impl Mask {
    pub fn empty() -> Self {
        Mask::default()
    }

    pub fn all(params: &ParamSet) -> Self {
        Mask(params.names().map(str::to_string).collect())
    }

    pub fn with_prefix(params: &ParamSet, prefix: &str) -> Self {
        Mask(
            params
                .names()
                .filter(|n| n.starts_with(prefix))
                .map(str::to_string)
                .collect(),
        )
    }

    pub fn from_names<I, S>(names: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Mask(names.into_iter().map(Into::into).collect())
    }

    pub fn contains(&self, name: &str) -> bool {
        self.0.contains(name)
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(String::as_str)
    }
}

#[derive(Debug, Clone)]
pub struct OptimizerState {
    kind: OptimizerKind,
    learning_rate: f64,
    adam: AdamHyper,
    step: u64,
    first_moment: BTreeMap<String, Vec<f64>>,
    second_moment: BTreeMap<String, Vec<f64>>,
}

impl OptimizerState {
    pub fn new(kind: OptimizerKind, learning_rate: f64) -> Result<Self> {
        if !(learning_rate >= 0.0 && learning_rate.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {learning_rate}"
            )));
        }
        Ok(OptimizerState {
            kind,
            learning_rate,
            adam: AdamHyper::default(),
            step: 0,
            first_moment: BTreeMap::new(),
            second_moment: BTreeMap::new(),
        })
    }

    pub fn sgd(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Sgd, learning_rate)
    }

    pub fn adam(learning_rate: f64) -> Result<Self> {
        Self::new(OptimizerKind::Adam, learning_rate)
    }

    pub fn with_adam_hyper(mut self, hyper: AdamHyper) -> Self {
        self.adam = hyper;
        self
    }

    pub fn kind(&self) -> OptimizerKind {
        self.kind
    }

    pub fn step_count(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.learning_rate
    }

    /// First/second moment for `name`, once Adam has touched it.
    pub fn moments(&self, name: &str) -> Option<(&[f64], &[f64])> {
        Some((
            self.first_moment.get(name)?.as_slice(),
            self.second_moment.get(name)?.as_slice(),
        ))
    }

    /// Applies one update to the masked parameters. Masked parameters absent
    /// from `grads` are treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamSet, grads: &Gradients, mask: &Mask) -> Result<()> {
        for name in mask.iter() {
            let p = params
                .get(name)
                .ok_or_else(|| Error::Contract(format!("mask names missing parameter `{name}`")))?;
            if let Some(g) = grads.get(name) {
                if g.shape() != p.shape() {
                    return Err(Error::dim(
                        format!("gradient of {name}"),
                        format!("{:?}", p.shape()),
                        format!("{:?}", g.shape()),
                    ));
                }
            }
        }
        self.step += 1;
        let lr = self.learning_rate;
        for name in mask.iter() {
            let grad = grads.get(name).map(|g| g.data());
            let param = params.get_mut(name).expect("checked above").data_mut();
            match self.kind {
                OptimizerKind::Sgd => {
                    if let Some(g) = grad {
                        for (w, gi) in param.iter_mut().zip(g) {
                            *w -= lr * gi;
                        }
                    }
                }
                OptimizerKind::Adam => {
                    let AdamHyper { beta1, beta2, eps } = self.adam;
                    let n = param.len();
                    let m = self
                        .first_moment
                        .entry(name.to_string())
                        .or_insert_with(|| vec![0.0; n]);
                    let v = self
                        .second_moment
                        .entry(name.to_string())
                        .or_insert_with(|| vec![0.0; n]);
                    let t = self.step as i32;
                    let bias1 = 1.0 - beta1.powi(t);
                    let bias2 = 1.0 - beta2.powi(t);
                    for i in 0..n {
                        let gi = grad.map_or(0.0, |g| g[i]);
                        m[i] = beta1 * m[i] + (1.0 - beta1) * gi;
                        v[i] = beta2 * v[i] + (1.0 - beta2) * gi * gi;
                        let m_hat = m[i] / bias1;
                        let v_hat = v[i] / bias2;
                        param[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                    }
                }
            }
        }
        Ok(())
    }
}
