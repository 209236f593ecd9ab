//! Synthetic heterogeneous-demonstrator populations.
//!
//! Each demonstrator has a hidden style θ. Generators return the dataset, the
//! ground-truth styles, and an oracle table with the closed-form entropy of
//! the true action distribution summed over each trajectory's steps.
//!
//! Gridworld: an n×n grid walked from (0, 0) to (n−1, n−1) with actions
//! right (0) and up (1); a move is legal when it stays on the grid. Where
//! both moves are legal (and therefore both shortest-path moves) the
//! demonstrator goes right with probability θ, otherwise takes the only legal
//! move. With probability ε the intended action is replaced by a uniformly
//! random legal action.
//!
//! Handedness: a hand on a line moves toward a target and grasps it (actions
//! left 0, right 1, grasp 2). Left-handed demonstrators (θ = 1) start on the
//! left of the target, right-handed ones on the right.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::{save_dataset, Dataset, Step, Trajectory};
use crate::error::{Error, Result};

pub const GRID_RIGHT: usize = 0;
pub const GRID_UP: usize = 1;
pub const GRID_STATE_DIM: usize = 7;
pub const GRID_ACTIONS: usize = 2;

pub const HAND_LEFT: usize = 0;
pub const HAND_RIGHT: usize = 1;
pub const HAND_GRASP: usize = 2;
pub const HAND_STATE_DIM: usize = 3;
pub const HAND_ACTIONS: usize = 3;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Generator {
    Gridworld,
    Handedness,
}

fn default_two_point_values() -> [f64; 2] {
    [0.0, 1.0]
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum StyleDistribution {
    /// θ = `values[1]` with probability `p`, else `values[0]`.
    TwoPoint {
        p: f64,
        #[serde(default = "default_two_point_values")]
        values: [f64; 2],
    },
    /// θ ~ Uniform[0, 1].
    Uniform,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SyntheticConfig {
    pub generator: Generator,
    pub demonstrator_count: usize,
    pub episodes_per_demonstrator: usize,
    pub grid_size: usize,
    pub style: StyleDistribution,
    pub noise: f64,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        SyntheticConfig {
            generator: Generator::Gridworld,
            demonstrator_count: 20,
            episodes_per_demonstrator: 50,
            grid_size: 8,
            style: StyleDistribution::TwoPoint {
                p: 0.5,
                values: default_two_point_values(),
            },
            noise: 0.05,
            seed: 0,
        }
    }
}

impl SyntheticConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.demonstrator_count == 0 || self.episodes_per_demonstrator == 0 {
            return bad("demonstrator and episode counts must be positive".into());
        }
        if self.grid_size < 2 {
            return bad(format!("grid_size must be >= 2, got {}", self.grid_size));
        }
        if !(0.0..1.0).contains(&self.noise) {
            return bad(format!("noise must be in [0, 1), got {}", self.noise));
        }
        if let StyleDistribution::TwoPoint { p, values } = &self.style {
            if !(0.0..=1.0).contains(p) {
                return bad(format!("two-point p must be in [0, 1], got {p}"));
            }
            if values.iter().any(|v| !(0.0..=1.0).contains(v)) {
                return bad(format!("two-point values must lie in [0, 1], got {values:?}"));
            }
        }
        Ok(())
    }
}

/// Closed-form entropy (nats) of the true action distribution, summed per
/// trajectory: `demonstrator_id -> episode_id -> entropy sum`.
pub type OracleTable = BTreeMap<String, BTreeMap<String, f64>>;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub dataset: Dataset,
    pub styles: BTreeMap<String, f64>,
    pub oracle: OracleTable,
}

impl SyntheticDataset {
    /// Writes `dataset.jsonl`, `styles.json` and `oracle.json` into `dir`.
    pub fn save(&self, dir: &Path) -> Result<()> {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
        save_dataset(&self.dataset, &dir.join("dataset.jsonl"))?;
        let styles = serde_json::to_string(&self.styles).expect("styles serialize");
        let path = dir.join("styles.json");
        fs::write(&path, styles).map_err(|e| Error::io(&path, e))?;
        let oracle = serde_json::to_string(&self.oracle).expect("oracle serializes");
        let path = dir.join("oracle.json");
        fs::write(&path, oracle).map_err(|e| Error::io(&path, e))
    }
}

pub fn load_styles(path: &Path) -> Result<BTreeMap<String, f64>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("styles file: {e}")))
}

pub fn load_oracle(path: &Path) -> Result<OracleTable> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Schema(format!("oracle file: {e}")))
}

/// Mean per-step oracle entropy over the trajectories of `ds` listed in `oracle`.
pub fn oracle_floor(ds: &Dataset, oracle: &OracleTable) -> Option<f64> {
    let mut total = 0.0;
    let mut steps = 0usize;
    for t in ds.trajectories() {
        let h = oracle.get(&t.demonstrator_id)?.get(&t.episode_id)?;
        total += h;
        steps += t.len();
    }
    (steps > 0).then(|| total / steps as f64)
}

/// Entropy in nats of a categorical distribution.
pub fn entropy(probs: &[f64]) -> f64 {
    probs.iter().filter(|&&p| p > 0.0).map(|&p| -p * p.ln()).sum()
}

fn id_width(count: usize) -> usize {
    count.saturating_sub(1).to_string().len().max(3)
}

/// Seed for one episode, independent of every other episode's draws.
pub fn episode_seed(seed: u64, demonstrator: usize, episode: usize) -> u64 {
    let mut z = seed
        ^ (demonstrator as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15)
        ^ (episode as u64).wrapping_mul(0xC2B2_AE3D_27D4_EB4F);
    // splitmix64 finalizer
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

fn draw_styles(config: &SyntheticConfig, rng: &mut ChaCha8Rng) -> Vec<f64> {
    (0..config.demonstrator_count)
        .map(|_| match &config.style {
            StyleDistribution::TwoPoint { p, values } => {
                if rng.random::<f64>() < *p {
                    values[1]
                } else {
                    values[0]
                }
            }
            StyleDistribution::Uniform => rng.random::<f64>(),
        })
        .collect()
}

pub fn generate(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    match config.generator {
        Generator::Gridworld => generate_gridworld(config),
        Generator::Handedness => generate_handedness(config),
    }
}

fn population<F>(
    config: &SyntheticConfig,
    state_dim: usize,
    action_count: usize,
    episode: F,
) -> Result<SyntheticDataset>
where
    F: Fn(f64, u64) -> (Vec<Step>, f64),
{
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let thetas = draw_styles(config, &mut rng);
    let dw = id_width(config.demonstrator_count);
    let ew = id_width(config.episodes_per_demonstrator);
    let mut trajectories = Vec::new();
    let mut styles = BTreeMap::new();
    let mut oracle = OracleTable::new();
    for (d, &theta) in thetas.iter().enumerate() {
        let demo = format!("d{d:0dw$}");
        styles.insert(demo.clone(), theta);
        let table = oracle.entry(demo.clone()).or_default();
        for e in 0..config.episodes_per_demonstrator {
            let ep = format!("e{e:0ew$}");
            let (steps, h) = episode(theta, episode_seed(config.seed, d, e));
            table.insert(ep.clone(), h);
            trajectories.push(Trajectory {
                demonstrator_id: demo.clone(),
                episode_id: ep,
                steps,
            });
        }
    }
    Ok(SyntheticDataset {
        dataset: Dataset::new(state_dim, action_count, trajectories)?,
        styles,
        oracle,
    })
}

pub fn generate_gridworld(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    let (n, eps) = (config.grid_size, config.noise);
    population(config, GRID_STATE_DIM, GRID_ACTIONS, |theta, seed| {
        gridworld_episode(n, theta, eps, seed)
    })
}

pub fn generate_handedness(config: &SyntheticConfig) -> Result<SyntheticDataset> {
    let (n, eps) = (config.grid_size, config.noise);
    population(config, HAND_STATE_DIM, HAND_ACTIONS, |theta, seed| {
        handedness_episode(n, theta >= 0.5, eps, seed)
    })
}

pub fn gridworld_state(n: usize, x: usize, y: usize) -> Vec<f64> {
    let nf = n as f64;
    let flag = |b: bool| if b { 1.0 } else { 0.0 };
    let dist = (n - 1 - x) + (n - 1 - y);
    vec![
        x as f64 / nf,
        y as f64 / nf,
        dist as f64 / (2.0 * nf),
        flag(x == n - 1),
        flag(y == n - 1),
        flag(x == 0),
        flag(y == 0),
    ]
}

/// True probability of "right" at a cell where both moves are legal.
pub fn gridworld_right_probability(theta: f64, noise: f64) -> f64 {
    (1.0 - noise) * theta + noise / 2.0
}

/// One gridworld episode and the oracle entropy summed over its steps.
pub fn gridworld_episode(n: usize, theta: f64, noise: f64, seed: u64) -> (Vec<Step>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut x, mut y) = (0usize, 0usize);
    let mut steps = Vec::with_capacity(2 * (n - 1));
    let mut entropy_sum = 0.0;
    let decision_entropy = {
        let p = gridworld_right_probability(theta, noise);
        entropy(&[p, 1.0 - p])
    };
    while x < n - 1 || y < n - 1 {
        let state = gridworld_state(n, x, y);
        let both = x < n - 1 && y < n - 1;
        let action = if both {
            entropy_sum += decision_entropy;
            let intended = if rng.random::<f64>() < theta {
                GRID_RIGHT
            } else {
                GRID_UP
            };
            if rng.random::<f64>() < noise {
                if rng.random::<bool>() {
                    GRID_RIGHT
                } else {
                    GRID_UP
                }
            } else {
                intended
            }
        } else if x < n - 1 {
            GRID_RIGHT
        } else {
            GRID_UP
        };
        steps.push(Step { state, action });
        if action == GRID_RIGHT {
            x += 1;
        } else {
            y += 1;
        }
    }
    (steps, entropy_sum)
}

pub fn handedness_state(n: usize, hand: i64, target: i64) -> Vec<f64> {
    let nf = n as f64;
    vec![hand as f64 / nf, target as f64 / nf, (target - hand) as f64 / nf]
}

/// One reach-and-grasp episode. The episode ends at the first grasp or after
/// `4n` steps.
pub fn handedness_episode(n: usize, left_handed: bool, noise: f64, seed: u64) -> (Vec<Step>, f64) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let target = rng.random_range(0..n as i64);
    let reach = rng.random_range(1..=(n as i64 / 2).max(1));
    let mut hand = if left_handed {
        target - reach
    } else {
        target + reach
    };
    let k = HAND_ACTIONS as f64;
    let step_entropy = {
        let off = noise / k;
        entropy(&[1.0 - noise + off, off, off])
    };
    let mut steps = Vec::new();
    let mut entropy_sum = 0.0;
    for _ in 0..4 * n {
        let intended = match hand.cmp(&target) {
            std::cmp::Ordering::Less => HAND_RIGHT,
            std::cmp::Ordering::Greater => HAND_LEFT,
            std::cmp::Ordering::Equal => HAND_GRASP,
        };
        let action = if rng.random::<f64>() < noise {
            rng.random_range(0..HAND_ACTIONS)
        } else {
            intended
        };
        steps.push(Step {
            state: handedness_state(n, hand, target),
            action,
        });
        entropy_sum += step_entropy;
        match action {
            HAND_LEFT => hand -= 1,
            HAND_RIGHT => hand += 1,
            _ => break,
        }
    }
    (steps, entropy_sum)
}
