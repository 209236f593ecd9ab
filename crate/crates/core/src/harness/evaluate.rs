use serde::{Deserialize, Serialize};

use crate::clustering::{assign_cluster, prefix_features};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{ffn_forward, lstm_forward, Family};
use crate::pipeline::{OnlineAdapter, TrainedModel};
use crate::tape::softmax_cross_entropy;
use crate::tensor::ParamSet;

/// Cross-entropy of one test step under the prediction made before the step's
/// action was revealed.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LossRecord {
    pub demonstrator_id: String,
    pub episode_id: String,
    pub step_index: usize,
    pub episode_length: usize,
    pub loss: f64,
}

fn ce(logits: &[f64], action: usize) -> Result<f64> {
    Ok(softmax_cross_entropy(logits, action)?.0)
}

/// One record per test step, in dataset order.
///
/// Embedding families see each test demonstrator's episodes as one stream:
/// ω keeps adapting across episodes of the same demonstrator.
pub fn evaluate_model(model: &TrainedModel, test: &Dataset) -> Result<Vec<LossRecord>> {
    if test.state_dim() != model.spec.state_dim {
        return Err(Error::dim("state_dim", model.spec.state_dim, test.state_dim()));
    }
    if test.action_count() != model.spec.action_count {
        return Err(Error::dim(
            "action_count",
            model.spec.action_count,
            test.action_count(),
        ));
    }
    let mut out = Vec::with_capacity(test.step_count());
    let mut push = |t: &crate::data::Trajectory, i: usize, loss: f64| {
        out.push(LossRecord {
            demonstrator_id: t.demonstrator_id.clone(),
            episode_id: t.episode_id.clone(),
            step_index: i,
            episode_length: t.len(),
            loss,
        })
    };
    match model.family() {
        Family::Ffn => {
            for t in test.trajectories() {
                for (i, s) in t.steps.iter().enumerate() {
                    push(t, i, ce(&ffn_forward(&model.params, &s.state)?.logits, s.action)?);
                }
            }
        }
        Family::ClusteredFfn => {
            let clusters = model
                .cluster_model
                .as_ref()
                .ok_or_else(|| Error::Contract("ClusteredFFN model without clusters".into()))?;
            let nets: Vec<ParamSet> = (0..clusters.k)
                .map(|i| model.params.with_prefix_stripped(&format!("cluster{i}.")))
                .collect();
            let k = model.spec.action_count;
            for t in test.trajectories() {
                let mut states: Vec<&[f64]> = Vec::with_capacity(t.len());
                let mut actions = Vec::with_capacity(t.len());
                for (i, s) in t.steps.iter().enumerate() {
                    states.push(&s.state);
                    let cluster = assign_cluster(clusters, &prefix_features(&states, &actions, k)?)?;
                    let logits = ffn_forward(&nets[cluster], &s.state)?.logits;
                    push(t, i, ce(&logits, s.action)?);
                    actions.push(s.action);
                }
            }
        }
        Family::Lstm => {
            for t in test.trajectories() {
                let xs: Vec<Vec<f64>> = t.steps.iter().map(|s| s.state.clone()).collect();
                for (i, (logits, s)) in lstm_forward(&model.params, &xs)?.iter().zip(&t.steps).enumerate() {
                    push(t, i, ce(logits, s.action)?);
                }
            }
        }
        Family::Bnn | Family::Blstm => {
            for trajs in test.by_demonstrator().values() {
                let mut adapter = OnlineAdapter::new(model)?;
                for t in trajs {
                    adapter.begin_episode();
                    for (i, s) in t.steps.iter().enumerate() {
                        let logits = adapter.predict(&s.state)?;
                        push(t, i, ce(&logits, s.action)?);
                        adapter.observe(&s.state, s.action)?;
                    }
                }
            }
        }
    }
    Ok(out)
}

pub fn mean_loss(records: &[LossRecord]) -> Result<f64> {
    if records.is_empty() {
        return Err(Error::Contract("no loss records".into()));
    }
    Ok(records.iter().map(|r| r.loss).sum::<f64>() / records.len() as f64)
}
