//! Training protocols for every family, model bundles and online embedding
//! adaptation.

mod adapt;
mod train;

pub use adapt::{adapt_embedding_online, AdaptStep, OnlineAdapter};
pub use train::{train, train_blstm, train_bnn, train_clustered, train_ffn, train_lstm};

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::clustering::ClusterModel;
use crate::error::{Error, Result};
use crate::models::{EmbeddingVector, Family, ModelSpec};
use crate::optim::OptimizerKind;
use crate::tensor::ParamSet;

/// Optimization hyperparameters shared by all families.
///
/// `batch_size` counts steps. Recurrent families batch whole trajectories,
/// as many as make up roughly `batch_size` steps.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub embedding_learning_rate: f64,
    pub seed: u64,
    pub optimizer: OptimizerKind,
    pub phase2_epochs: usize,
    pub adapt_steps_per_observation: usize,
    #[serde(default = "default_bptt")]
    pub bptt_truncation: usize,
    /// Most recent observations in the online adaptation loss; `None` keeps all.
    #[serde(default)]
    pub adapt_window: Option<usize>,
    /// Step size for test-time ω updates; `embedding_learning_rate` when absent.
    #[serde(default)]
    pub adapt_learning_rate: Option<f64>,
}

fn default_bptt() -> usize {
    16
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 30,
            batch_size: 32,
            learning_rate: 0.01,
            embedding_learning_rate: 0.001,
            seed: 0,
            optimizer: OptimizerKind::Adam,
            phase2_epochs: 20,
            adapt_steps_per_observation: 1,
            bptt_truncation: default_bptt(),
            adapt_window: None,
            adapt_learning_rate: Some(0.01),
        }
    }
}

impl TrainConfig {
    pub fn adapt_rate(&self) -> f64 {
        self.adapt_learning_rate.unwrap_or(self.embedding_learning_rate)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.epochs == 0 {
            return bad("epochs must be >= 1");
        }
        if self.batch_size == 0 {
            return bad("batch_size must be >= 1");
        }
        if self.bptt_truncation == 0 {
            return bad("bptt_truncation must be >= 1");
        }
        if self.adapt_window == Some(0) {
            return bad("adapt_window must be >= 1 when set");
        }
        for (name, v) in [
            ("learning_rate", self.learning_rate),
            ("embedding_learning_rate", self.embedding_learning_rate),
            ("adapt_learning_rate", self.adapt_rate()),
        ] {
            if !(v.is_finite() && v >= 0.0) {
                return Err(Error::Config(format!("{name} must be finite and >= 0, got {v}")));
            }
        }
        Ok(())
    }
}

/// Where a trained model came from.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Provenance {
    pub config: TrainConfig,
    /// SHA-256 of the canonical training dataset file.
    pub dataset_fingerprint: String,
    pub train_demonstrators: Vec<String>,
    /// Mean training loss per epoch (phase 1 for BNN; concatenated over
    /// clusters for ClusteredFFN).
    pub epoch_losses: Vec<f64>,
    #[serde(default)]
    pub phase2_losses: Vec<f64>,
    /// Demonstrator → cluster index, ClusteredFFN only.
    #[serde(default)]
    pub cluster_assignments: BTreeMap<String, usize>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainedModel {
    pub spec: ModelSpec,
    pub params: ParamSet,
    pub train_embeddings: BTreeMap<String, EmbeddingVector>,
    pub cluster_model: Option<ClusterModel>,
    pub provenance: Provenance,
}

const PARAMS_FILE: &str = "params.json";
const SPEC_FILE: &str = "spec.json";
const EMBEDDINGS_FILE: &str = "embeddings.json";
const CLUSTERS_FILE: &str = "clusters.json";
const PROVENANCE_FILE: &str = "provenance.json";

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn read_file(path: &Path) -> Result<String> {
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

fn parse_json<T: serde::de::DeserializeOwned>(path: &Path, text: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Schema(format!("{}: {e}", path.display())))
}

impl TrainedModel {
    pub fn family(&self) -> Family {
        self.spec.family
    }

    /// Mean of the training embeddings, or zeros when there are none.
    pub fn mean_embedding(&self) -> Vec<f64> {
        let l = self.spec.embedding_length;
        let mut mean = vec![0.0; l];
        if self.train_embeddings.is_empty() {
            return mean;
        }
        for e in self.train_embeddings.values() {
            for (m, v) in mean.iter_mut().zip(e.values()) {
                *m += v;
            }
        }
        for m in &mut mean {
            *m /= self.train_embeddings.len() as f64;
        }
        mean
    }

    pub fn check_invariants(&self) -> Result<()> {
        self.spec.validate()?;
        let family = self.spec.family;
        if family.has_embedding() != !self.train_embeddings.is_empty() {
            return Err(Error::Schema(format!(
                "{family} model with {} training embeddings",
                self.train_embeddings.len()
            )));
        }
        if let Some(e) = self
            .train_embeddings
            .values()
            .find(|e| e.len() != self.spec.embedding_length)
        {
            return Err(Error::Schema(format!(
                "embedding for `{}` has length {}, expected {}",
                e.demonstrator_id,
                e.len(),
                self.spec.embedding_length
            )));
        }
        match (&self.cluster_model, family == Family::ClusteredFfn) {
            (Some(c), true) if c.k != self.spec.cluster_count || c.centroids.len() != c.k => {
                Err(Error::Schema(format!(
                    "cluster model has k = {} with {} centroids, spec says {}",
                    c.k,
                    c.centroids.len(),
                    self.spec.cluster_count
                )))
            }
            (Some(_), true) | (None, false) => Ok(()),
            (None, true) => Err(Error::Schema("ClusteredFFN model without clusters".into())),
            (Some(_), false) => Err(Error::Schema(format!("{family} model with a cluster model"))),
        }
    }

    /// Writes the bundle directory, creating it if needed.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        self.params.save(&dir.join(PARAMS_FILE))?;
        write_file(&dir.join(SPEC_FILE), &to_pretty(&self.spec))?;
        if self.spec.family.has_embedding() {
            let map: BTreeMap<&str, &[f64]> = self
                .train_embeddings
                .iter()
                .map(|(k, v)| (k.as_str(), v.values()))
                .collect();
            write_file(&dir.join(EMBEDDINGS_FILE), &to_pretty(&map))?;
        }
        if let Some(c) = &self.cluster_model {
            write_file(&dir.join(CLUSTERS_FILE), &to_pretty(c))?;
        }
        write_file(&dir.join(PROVENANCE_FILE), &to_pretty(&self.provenance))
    }

    pub fn load(dir: &Path) -> Result<Self> {
        let params = ParamSet::load(&dir.join(PARAMS_FILE))?;
        let spec_path = dir.join(SPEC_FILE);
        let spec: ModelSpec = parse_json(&spec_path, &read_file(&spec_path)?)?;
        let mut train_embeddings = BTreeMap::new();
        let emb_path = dir.join(EMBEDDINGS_FILE);
        if emb_path.exists() {
            let map: BTreeMap<String, Vec<f64>> = parse_json(&emb_path, &read_file(&emb_path)?)?;
            for (id, values) in map {
                let e = EmbeddingVector::new(id.clone(), values)
                    .map_err(|e| Error::Schema(format!("embedding `{id}`: {e}")))?;
                train_embeddings.insert(id, e);
            }
        }
        let clusters_path = dir.join(CLUSTERS_FILE);
        let cluster_model = if clusters_path.exists() {
            Some(parse_json(&clusters_path, &read_file(&clusters_path)?)?)
        } else {
            None
        };
        let prov_path = dir.join(PROVENANCE_FILE);
        let provenance = parse_json(&prov_path, &read_file(&prov_path)?)?;
        let model = TrainedModel {
            spec,
            params,
            train_embeddings,
            cluster_model,
            provenance,
        };
        model.check_invariants()?;
        Ok(model)
    }
}

fn to_pretty<T: Serialize>(value: &T) -> String {
    let mut s = serde_json::to_string_pretty(value).expect("serializable");
    s.push('\n');
    s
}
