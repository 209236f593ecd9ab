//! Demonstrator features, k-means and nearest-centroid routing.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::data::Trajectory;
use crate::error::{Error, Result};

/// Mean state followed by the empirical action frequencies.
#[derive(Debug, Clone, PartialEq)]
pub struct DemonstratorFeatures {
    pub demonstrator_id: String,
    pub vector: Vec<f64>,
}

/// Features over every step of one demonstrator's trajectories.
pub fn demonstrator_features(
    demonstrator_id: &str,
    trajectories: &[&Trajectory],
    action_count: usize,
) -> Result<DemonstratorFeatures> {
    let steps: Vec<_> = trajectories.iter().flat_map(|t| t.steps.iter()).collect();
    if steps.is_empty() {
        return Err(Error::Contract(format!(
            "demonstrator `{demonstrator_id}` has no steps"
        )));
    }
    let dim = steps[0].state.len();
    let mut vector = vec![0.0; dim + action_count];
    for s in &steps {
        if s.state.len() != dim {
            return Err(Error::dim("state", dim, s.state.len()));
        }
        if s.action >= action_count {
            return Err(Error::Index {
                index: s.action,
                len: action_count,
            });
        }
        for (acc, v) in vector.iter_mut().zip(&s.state) {
            *acc += v;
        }
        vector[dim + s.action] += 1.0;
    }
    let n = steps.len() as f64;
    for v in &mut vector {
        *v /= n;
    }
    Ok(DemonstratorFeatures {
        demonstrator_id: demonstrator_id.to_string(),
        vector,
    })
}

/// Routing features from what has been observed so far in an episode: the
/// mean of the observed states and the frequencies of the observed actions
/// (uniform when no action has been observed yet).
pub fn prefix_features(states: &[&[f64]], actions: &[usize], action_count: usize) -> Result<Vec<f64>> {
    let Some(first) = states.first() else {
        return Err(Error::Contract("no observed states".into()));
    };
    let dim = first.len();
    let mut out = vec![0.0; dim + action_count];
    for s in states {
        for (acc, v) in out.iter_mut().zip(s.iter()) {
            *acc += v;
        }
    }
    for v in &mut out[..dim] {
        *v /= states.len() as f64;
    }
    if actions.is_empty() {
        out[dim..].fill(1.0 / action_count as f64);
    } else {
        for &a in actions {
            out[dim + a] += 1.0;
        }
        for v in &mut out[dim..] {
            *v /= actions.len() as f64;
        }
    }
    Ok(out)
}

/// Serialized as `{"k","seed","centroids","inertia"}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClusterModel {
    pub k: usize,
    pub seed: u64,
    pub centroids: Vec<Vec<f64>>,
    pub inertia: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct KMeansOptions {
    pub max_iters: usize,
    /// Independent k-means++ starts; the lowest-inertia run is kept.
    pub restarts: usize,
}

impl Default for KMeansOptions {
    fn default() -> Self {
        KMeansOptions {
            max_iters: 100,
            restarts: 10,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KMeansFit {
    pub model: ClusterModel,
    pub labels: Vec<usize>,
    /// Inertia after every centroid update of the kept run.
    pub inertia_history: Vec<f64>,
}

pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn nearest(centroids: &[Vec<f64>], p: &[f64]) -> usize {
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, c) in centroids.iter().enumerate() {
        let d = squared_distance(c, p);
        if d < best_d {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Member means in point order, then summed squared distances in point order.
fn centroids_of(points: &[Vec<f64>], labels: &[usize], k: usize) -> Vec<Vec<f64>> {
    let dim = points[0].len();
    let mut sums = vec![vec![0.0; dim]; k];
    let mut counts = vec![0usize; k];
    for (p, &l) in points.iter().zip(labels) {
        for (acc, v) in sums[l].iter_mut().zip(p) {
            *acc += v;
        }
        counts[l] += 1;
    }
    for (s, &c) in sums.iter_mut().zip(&counts) {
        if c > 0 {
            for v in s.iter_mut() {
                *v /= c as f64;
            }
        }
    }
    sums
}

/// Within-cluster sum of squared distances for a labelling.
pub fn partition_inertia(points: &[Vec<f64>], labels: &[usize], k: usize) -> f64 {
    let centroids = centroids_of(points, labels, k);
    points
        .iter()
        .zip(labels)
        .map(|(p, &l)| squared_distance(p, &centroids[l]))
        .sum()
}

fn plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let n = points.len();
    let mut chosen = vec![rng.random_range(0..n)];
    let mut d2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &points[chosen[0]]))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let mut target = rng.random::<f64>() * total;
            let mut pick = n - 1;
            for (i, &w) in d2.iter().enumerate() {
                if w > 0.0 {
                    if target < w {
                        pick = i;
                        break;
                    }
                    target -= w;
                }
            }
            // Guard against rounding landing on a zero-weight tail.
            if d2[pick] == 0.0 {
                pick = (0..n).rev().find(|&i| d2[i] > 0.0).expect("total > 0");
            }
            pick
        } else {
            (0..n).find(|i| !chosen.contains(i)).expect("k <= n")
        };
        chosen.push(next);
        for (slot, p) in d2.iter_mut().zip(points) {
            *slot = slot.min(squared_distance(p, &points[next]));
        }
    }
    chosen.into_iter().map(|i| points[i].clone()).collect()
}

/// Gives every empty cluster the point farthest from its current centroid,
/// taken from a cluster that keeps at least one member.
fn reseed_empty(points: &[Vec<f64>], labels: &mut [usize], centroids: &[Vec<f64>], k: usize) {
    loop {
        let mut counts = vec![0usize; k];
        for &l in labels.iter() {
            counts[l] += 1;
        }
        let Some(empty) = counts.iter().position(|&c| c == 0) else {
            return;
        };
        let mut best: Option<(usize, f64)> = None;
        for (i, p) in points.iter().enumerate() {
            if counts[labels[i]] < 2 {
                continue;
            }
            let d = squared_distance(p, &centroids[labels[i]]);
            if best.is_none_or(|(_, bd)| d > bd) {
                best = Some((i, d));
            }
        }
        let (i, _) = best.expect("k <= n leaves a cluster with two members");
        labels[i] = empty;
    }
}

fn lloyd(
    points: &[Vec<f64>],
    k: usize,
    max_iters: usize,
    rng: &mut ChaCha8Rng,
) -> (Vec<Vec<f64>>, Vec<usize>, Vec<f64>) {
    let mut centroids = plus_plus(points, k, rng);
    let mut labels: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
    let mut history = Vec::new();
    for iter in 1..=max_iters {
        reseed_empty(points, &mut labels, &centroids, k);
        centroids = centroids_of(points, &labels, k);
        history.push(
            points
                .iter()
                .zip(&labels)
                .map(|(p, &l)| squared_distance(p, &centroids[l]))
                .sum(),
        );
        if iter == max_iters {
            break;
        }
        let next: Vec<usize> = points.iter().map(|p| nearest(&centroids, p)).collect();
        if next == labels {
            break;
        }
        labels = next;
    }
    (centroids, labels, history)
}

pub fn kmeans_fit(points: &[Vec<f64>], k: usize, seed: u64, options: KMeansOptions) -> Result<KMeansFit> {
    if k == 0 {
        return Err(Error::Contract("k must be >= 1".into()));
    }
    if k > points.len() {
        return Err(Error::Contract(format!(
            "k = {k} exceeds the number of points ({})",
            points.len()
        )));
    }
    if options.max_iters == 0 || options.restarts == 0 {
        return Err(Error::Contract("max_iters and restarts must be >= 1".into()));
    }
    let dim = points[0].len();
    if let Some(p) = points.iter().find(|p| p.len() != dim) {
        return Err(Error::dim("point", dim, p.len()));
    }
    if points.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("non-finite point coordinate".into()));
    }
    let mut best: Option<KMeansFit> = None;
    for restart in 0..options.restarts {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add((restart as u64) << 32));
        let (centroids, labels, history) = lloyd(points, k, options.max_iters, &mut rng);
        let inertia = *history.last().expect("at least one iteration");
        if best.as_ref().is_none_or(|b| inertia < b.model.inertia) {
            best = Some(KMeansFit {
                model: ClusterModel {
                    k,
                    seed,
                    centroids,
                    inertia,
                },
                labels,
                inertia_history: history,
            });
        }
    }
    Ok(best.expect("restarts >= 1"))
}

/// k-means++ seeding, Lloyd iterations, default restarts.
pub fn kmeans(points: &[Vec<f64>], k: usize, seed: u64, max_iters: usize) -> Result<ClusterModel> {
    let options = KMeansOptions {
        max_iters,
        ..KMeansOptions::default()
    };
    Ok(kmeans_fit(points, k, seed, options)?.model)
}

/// Index of the nearest centroid; ties go to the lowest index.
pub fn assign_cluster(model: &ClusterModel, features: &[f64]) -> Result<usize> {
    let dim = model.centroids[0].len();
    if features.len() != dim {
        return Err(Error::dim("features", dim, features.len()));
    }
    Ok(nearest(&model.centroids, features))
}
