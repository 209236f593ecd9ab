use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use super::evaluate::{evaluate_model, LossRecord};
use super::report::{
    emit_reports, normalized_report, pretty_json, timestep_curve, write_text, CiSettings, CurveReport,
    EvalReport, ModelKey, SeedRecords,
};
use crate::data::synthetic::{generate, load_oracle, oracle_floor, OracleTable, SyntheticConfig};
use crate::data::{load_dataset, split_dataset, Dataset, SplitMode};
use crate::error::{Error, Result};
use crate::models::{Family, ModelSpec};
use crate::pipeline::{train, TrainConfig};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DatasetSource {
    /// A dataset file. An `oracle.json` next to it supplies the entropy floor.
    Path(PathBuf),
    /// Regenerated for every seed with the generator seed offset by that seed.
    Synthetic(SyntheticConfig),
}

fn default_split() -> SplitMode {
    SplitMode::HeldOutDemonstrators
}

fn default_fraction() -> f64 {
    0.25
}

fn default_lengths() -> Vec<usize> {
    vec![3]
}

fn default_clusters() -> usize {
    3
}

fn default_bins() -> usize {
    10
}

/// Full experiment description. Each seed `s` sets the split seed and the
/// training seed to `s`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    pub dataset: DatasetSource,
    #[serde(default = "default_split")]
    pub split: SplitMode,
    /// Share of demonstrators (or episodes) held out for testing.
    #[serde(default = "default_fraction")]
    pub split_fraction: f64,
    pub families: Vec<Family>,
    /// Swept for every embedding family.
    #[serde(default = "default_lengths")]
    pub embedding_lengths: Vec<usize>,
    #[serde(default = "default_clusters")]
    pub cluster_count: usize,
    /// Feedforward hidden widths; library default when absent.
    #[serde(default)]
    pub hidden_widths: Option<Vec<usize>>,
    #[serde(default)]
    pub lstm_hidden: Option<usize>,
    #[serde(default)]
    pub train: TrainConfig,
    pub seeds: Vec<u64>,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default)]
    pub ci: CiSettings,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let c: RunConfig =
            serde_json::from_str(text).map_err(|e| Error::Config(format!("run config: {e}")))?;
        c.validate()?;
        Ok(c)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.to_string()));
        if self.families.is_empty() {
            return bad("families must not be empty");
        }
        if !self.families.contains(&Family::Ffn) {
            return bad("families must include FFN, the normalization baseline");
        }
        if self.seeds.is_empty() {
            return bad("seeds must not be empty");
        }
        if self.families.iter().any(|f| f.has_embedding())
            && (self.embedding_lengths.is_empty() || self.embedding_lengths.contains(&0))
        {
            return bad("embedding_lengths must be nonempty and positive");
        }
        if self.bins < 2 {
            return bad("bins must be >= 2");
        }
        if !(self.split_fraction > 0.0 && self.split_fraction < 1.0) {
            return bad("split_fraction must be in (0, 1)");
        }
        if self.families.contains(&Family::ClusteredFfn) && self.cluster_count == 0 {
            return bad("cluster_count must be >= 1");
        }
        if let DatasetSource::Synthetic(s) = &self.dataset {
            s.validate()?;
        }
        self.train.validate()
    }

    /// Every (family, embedding length) pair the run trains, in report order.
    pub fn model_keys(&self) -> Vec<ModelKey> {
        let mut keys = Vec::new();
        for &f in &self.families {
            if f.has_embedding() {
                keys.extend(self.embedding_lengths.iter().map(|&l| ModelKey::new(f, l)));
            } else {
                keys.push(ModelKey::new(f, 0));
            }
        }
        keys.sort();
        keys.dedup();
        keys
    }

    pub fn model_spec(&self, key: ModelKey, state_dim: usize, action_count: usize) -> ModelSpec {
        let mut spec = ModelSpec::with_defaults(
            key.family,
            state_dim,
            action_count,
            key.embedding_length,
            self.cluster_count,
        );
        if key.family.is_recurrent() {
            if let Some(h) = self.lstm_hidden {
                spec.hidden_widths = vec![h];
            }
        } else if let Some(w) = &self.hidden_widths {
            spec.hidden_widths = w.clone();
        }
        spec
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SeedCurve {
    pub seed: u64,
    pub curve: CurveReport,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentOutcome {
    pub report: EvalReport,
    /// Pooled over seeds.
    pub curve: CurveReport,
    pub seed_curves: Vec<SeedCurve>,
    pub per_seed: Vec<SeedRecords>,
    /// Wall-clock training plus evaluation seconds per model and seed.
    pub timing: BTreeMap<String, Vec<f64>>,
}

fn load_source(path: &Path) -> Result<(Dataset, Option<OracleTable>)> {
    let ds = load_dataset(path)?;
    let oracle_path = path.parent().unwrap_or(Path::new(".")).join("oracle.json");
    let oracle = if oracle_path.exists() {
        Some(load_oracle(&oracle_path)?)
    } else {
        None
    };
    Ok((ds, oracle))
}

pub fn run_experiment(config: &RunConfig) -> Result<ExperimentOutcome> {
    run_experiment_with(config, |_| {})
}

/// Like [`run_experiment`], reporting progress lines to `progress`.
pub fn run_experiment_with(config: &RunConfig, mut progress: impl FnMut(&str)) -> Result<ExperimentOutcome> {
    config.validate()?;
    let fixed = match &config.dataset {
        DatasetSource::Path(p) => Some(load_source(p)?),
        DatasetSource::Synthetic(_) => None,
    };
    let keys = config.model_keys();
    let mut per_seed = Vec::with_capacity(config.seeds.len());
    let mut timing: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for &seed in &config.seeds {
        let (ds, oracle) = match (&fixed, &config.dataset) {
            (Some((ds, oracle)), _) => (ds.clone(), oracle.clone()),
            (None, DatasetSource::Synthetic(s)) => {
                let generated = generate(&SyntheticConfig {
                    seed: s.seed.wrapping_add(seed),
                    ..s.clone()
                })?;
                (generated.dataset, Some(generated.oracle))
            }
            (None, DatasetSource::Path(_)) => unreachable!("path datasets are loaded up front"),
        };
        let (train_ds, test_ds) = split_dataset(&ds, config.split, config.split_fraction, seed)?;
        let train_config = TrainConfig {
            seed,
            ..config.train.clone()
        };
        let mut models: BTreeMap<ModelKey, Vec<LossRecord>> = BTreeMap::new();
        for &key in &keys {
            let started = Instant::now();
            let spec = config.model_spec(key, ds.state_dim(), ds.action_count());
            let model = train(&train_ds, &spec, &train_config)?;
            let records = evaluate_model(&model, &test_ds)?;
            let secs = started.elapsed().as_secs_f64();
            progress(&format!("seed {seed}: {key} done in {secs:.1}s"));
            timing.entry(key.to_string()).or_default().push(secs);
            models.insert(key, records);
        }
        per_seed.push(SeedRecords {
            seed,
            models,
            oracle_floor: oracle.as_ref().and_then(|o| oracle_floor(&test_ds, o)),
        });
    }
    let report = normalized_report(&per_seed, &config.ci)?;
    let mut pooled: BTreeMap<ModelKey, Vec<LossRecord>> = BTreeMap::new();
    let mut seed_curves = Vec::with_capacity(per_seed.len());
    for run in &per_seed {
        seed_curves.push(SeedCurve {
            seed: run.seed,
            curve: timestep_curve(&run.models, config.bins)?,
        });
        for (key, records) in &run.models {
            pooled.entry(*key).or_default().extend(records.iter().cloned());
        }
    }
    let curve = timestep_curve(&pooled, config.bins)?;
    Ok(ExperimentOutcome {
        report,
        curve,
        seed_curves,
        per_seed,
        timing,
    })
}

/// Writes the reports plus `seed_curves.json` and `timing.json`. Everything
/// except `timing.json` is a deterministic function of the run config.
pub fn write_experiment(outcome: &ExperimentOutcome, dir: &Path) -> Result<()> {
    emit_reports(&outcome.report, &outcome.curve, dir)?;
    write_text(&dir.join("seed_curves.json"), &pretty_json(&outcome.seed_curves))?;
    write_text(&dir.join("timing.json"), &pretty_json(&outcome.timing))
}

pub fn load_run_config(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
    RunConfig::from_json(&text)
}
