//! Demonstration datasets: types, the JSONL file format, splitting and
//! synthetic generators.

mod io;
mod split;
pub mod synthetic;

pub use io::{load_dataset, parse_dataset, save_dataset, write_dataset, DatasetHeader, SCHEMA_VERSION};
pub use split::{split_dataset, SplitMode};

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Step {
    pub state: Vec<f64>,
    pub action: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Trajectory {
    pub demonstrator_id: String,
    pub episode_id: String,
    pub steps: Vec<Step>,
}

impl Trajectory {
    pub fn len(&self) -> usize {
        self.steps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.steps.is_empty()
    }

    fn key(&self) -> (&str, &str) {
        (&self.demonstrator_id, &self.episode_id)
    }
}

/// Immutable, validated collection of trajectories in canonical order
/// (sorted by demonstrator then episode id).
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    state_dim: usize,
    action_count: usize,
    trajectories: Vec<Trajectory>,
}

impl Dataset {
    pub fn new(state_dim: usize, action_count: usize, mut trajectories: Vec<Trajectory>) -> Result<Self> {
        if state_dim == 0 || action_count == 0 {
            return Err(Error::Schema(format!(
                "state_dim and action_count must be positive (got {state_dim}, {action_count})"
            )));
        }
        let mut seen = BTreeSet::new();
        for t in &trajectories {
            let name = format!("{}/{}", t.demonstrator_id, t.episode_id);
            if t.steps.is_empty() {
                return Err(Error::Schema(format!("trajectory {name} has no steps")));
            }
            if !seen.insert((t.demonstrator_id.clone(), t.episode_id.clone())) {
                return Err(Error::Schema(format!("duplicate trajectory {name}")));
            }
            for (i, s) in t.steps.iter().enumerate() {
                if s.state.len() != state_dim {
                    return Err(Error::Schema(format!(
                        "trajectory {name} step {i}: state has {} entries, expected {state_dim}",
                        s.state.len()
                    )));
                }
                if s.action >= action_count {
                    return Err(Error::Schema(format!(
                        "trajectory {name} step {i}: action {} outside [0, {action_count})",
                        s.action
                    )));
                }
                if s.state.iter().any(|v| !v.is_finite()) {
                    return Err(Error::Schema(format!(
                        "trajectory {name} step {i}: non-finite state entry"
                    )));
                }
            }
        }
        trajectories.sort_by(|a, b| a.key().cmp(&b.key()));
        Ok(Dataset {
            state_dim,
            action_count,
            trajectories,
        })
    }

    pub fn state_dim(&self) -> usize {
        self.state_dim
    }

    pub fn action_count(&self) -> usize {
        self.action_count
    }

    pub fn trajectories(&self) -> &[Trajectory] {
        &self.trajectories
    }

    pub fn is_empty(&self) -> bool {
        self.trajectories.is_empty()
    }

    pub fn step_count(&self) -> usize {
        self.trajectories.iter().map(Trajectory::len).sum()
    }

    /// Sorted, distinct demonstrator ids.
    pub fn demonstrators(&self) -> Vec<&str> {
        let mut ids: Vec<&str> = self
            .trajectories
            .iter()
            .map(|t| t.demonstrator_id.as_str())
            .collect();
        ids.dedup();
        ids
    }

    /// Each demonstrator's trajectories in episode order.
    pub fn by_demonstrator(&self) -> BTreeMap<&str, Vec<&Trajectory>> {
        let mut map: BTreeMap<&str, Vec<&Trajectory>> = BTreeMap::new();
        for t in &self.trajectories {
            map.entry(t.demonstrator_id.as_str()).or_default().push(t);
        }
        map
    }

    /// Keeps the trajectories for which `keep` returns true.
    pub fn filter(&self, keep: impl Fn(&Trajectory) -> bool) -> Dataset {
        Dataset {
            state_dim: self.state_dim,
            action_count: self.action_count,
            trajectories: self.trajectories.iter().filter(|t| keep(t)).cloned().collect(),
        }
    }

    /// Canonical JSONL bytes, identical to what [`save_dataset`] writes.
    pub fn to_jsonl(&self) -> String {
        let mut out = Vec::new();
        write_dataset(self, &mut out).expect("writing to memory");
        String::from_utf8(out).expect("json is utf-8")
    }

    /// SHA-256 of the canonical file, lowercase hex.
    pub fn fingerprint(&self) -> String {
        let digest = Sha256::digest(self.to_jsonl().as_bytes());
        digest.iter().map(|b| format!("{b:02x}")).collect()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn traj(d: &str, e: &str, actions: &[usize]) -> Trajectory {
        Trajectory {
            demonstrator_id: d.into(),
            episode_id: e.into(),
            steps: actions
                .iter()
                .map(|&a| Step {
                    state: vec![a as f64],
                    action: a,
                })
                .collect(),
        }
    }

    #[test]
    fn canonical_order_and_grouping() {
        let ds = Dataset::new(
            1,
            2,
            vec![
                traj("b", "e1", &[0]),
                traj("a", "e2", &[1]),
                traj("a", "e1", &[0, 1]),
            ],
        )
        .unwrap();
        let keys: Vec<_> = ds.trajectories().iter().map(|t| t.key()).collect();
        assert_eq!(keys, vec![("a", "e1"), ("a", "e2"), ("b", "e1")]);
        assert_eq!(ds.demonstrators(), vec!["a", "b"]);
        assert_eq!(ds.by_demonstrator()["a"].len(), 2);
        assert_eq!(ds.step_count(), 4);
    }

    #[test]
    fn schema_violations() {
        let e = Dataset::new(1, 2, vec![traj("a", "e", &[2])]).unwrap_err();
        assert!(matches!(&e, Error::Schema(m) if m.contains("a/e")));
        assert!(Dataset::new(1, 2, vec![traj("a", "e", &[0]), traj("a", "e", &[1])]).is_err());
        assert!(Dataset::new(1, 2, vec![traj("a", "e", &[])]).is_err());
        let mut bad_dim = traj("a", "e", &[0]);
        bad_dim.steps[0].state = vec![0.0, 1.0];
        assert!(Dataset::new(1, 2, vec![bad_dim]).is_err());
    }

    #[test]
    fn fingerprint_is_stable_hex() {
        let ds = Dataset::new(1, 2, vec![traj("a", "e", &[0, 1])]).unwrap();
        let f = ds.fingerprint();
        assert_eq!(f.len(), 64);
        assert_eq!(f, ds.clone().fingerprint());
    }
}
