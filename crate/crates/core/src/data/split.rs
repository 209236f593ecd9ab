use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum SplitMode {
    /// Every episode of a test demonstrator goes to the test side.
    HeldOutDemonstrators,
    /// Each demonstrator's episodes are divided between the sides.
    HeldOutEpisodes,
}

impl SplitMode {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "held-out-demonstrators" => Ok(SplitMode::HeldOutDemonstrators),
            "held-out-episodes" => Ok(SplitMode::HeldOutEpisodes),
            _ => Err(Error::Config(format!("unknown split mode `{s}`"))),
        }
    }
}

fn test_count(n: usize, fraction: f64) -> usize {
    ((fraction * n as f64).round() as usize).clamp(1, n - 1)
}

/// Returns `(train, test)`; `fraction` is the share sent to the test side.
pub fn split_dataset(ds: &Dataset, mode: SplitMode, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(fraction > 0.0 && fraction < 1.0) {
        return Err(Error::Config(format!(
            "split fraction must be in (0, 1), got {fraction}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    match mode {
        SplitMode::HeldOutDemonstrators => {
            let mut ids: Vec<String> = ds.demonstrators().into_iter().map(str::to_string).collect();
            if ids.len() < 2 {
                return Err(Error::Contract(format!(
                    "held-out-demonstrators split needs at least 2 demonstrators, found {}",
                    ids.len()
                )));
            }
            ids.shuffle(&mut rng);
            let n_test = test_count(ids.len(), fraction);
            let test_ids: BTreeSet<String> = ids[..n_test].iter().cloned().collect();
            Ok((
                ds.filter(|t| !test_ids.contains(&t.demonstrator_id)),
                ds.filter(|t| test_ids.contains(&t.demonstrator_id)),
            ))
        }
        SplitMode::HeldOutEpisodes => {
            let mut test_keys = BTreeSet::new();
            for (demo, trajs) in ds.by_demonstrator() {
                if trajs.len() < 2 {
                    continue;
                }
                let mut episodes: Vec<&str> = trajs.iter().map(|t| t.episode_id.as_str()).collect();
                episodes.shuffle(&mut rng);
                for e in &episodes[..test_count(episodes.len(), fraction)] {
                    test_keys.insert((demo.to_string(), e.to_string()));
                }
            }
            if test_keys.is_empty() {
                return Err(Error::Contract(
                    "held-out-episodes split needs a demonstrator with at least 2 episodes".into(),
                ));
            }
            let is_test = |t: &super::Trajectory| {
                test_keys.contains(&(t.demonstrator_id.clone(), t.episode_id.clone()))
            };
            Ok((ds.filter(|t| !is_test(t)), ds.filter(is_test)))
        }
    }
}
