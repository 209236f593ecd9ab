use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::{Provenance, TrainConfig, TrainedModel};
use crate::clustering::{demonstrator_features, kmeans_fit, KMeansOptions};
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::models::{
    ffn_depth, init_params, record_ffn, record_ffn_features, record_lstm_logits, record_lstm_step,
    EmbeddingVector, Family, ModelSpec,
};
use crate::optim::{Mask, OptimizerState};
use crate::tape::{ParamVars, Tape, Var};
use crate::tensor::{ParamSet, Tensor};

const OMEGA_PREFIX: &str = "omega.";

fn omega_name(id: &str) -> String {
    format!("{OMEGA_PREFIX}{id}")
}

/// Minibatch order stream; kept apart from the initialization stream.
fn shuffle_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn expect_family(spec: &ModelSpec, family: Family) -> Result<()> {
    spec.validate()?;
    if spec.family != family {
        return Err(Error::Contract(format!(
            "expected a {family} spec, got {}",
            spec.family
        )));
    }
    Ok(())
}

fn check_dataset(ds: &Dataset, spec: &ModelSpec) -> Result<()> {
    if ds.is_empty() {
        return Err(Error::Contract("training dataset is empty".into()));
    }
    if ds.state_dim() != spec.state_dim {
        return Err(Error::dim("state_dim", spec.state_dim, ds.state_dim()));
    }
    if ds.action_count() != spec.action_count {
        return Err(Error::dim("action_count", spec.action_count, ds.action_count()));
    }
    Ok(())
}

fn finite(loss: f64) -> Result<f64> {
    if loss.is_finite() {
        Ok(loss)
    } else {
        Err(Error::Numeric(format!("training loss became {loss}")))
    }
}

fn provenance(ds: &Dataset, config: &TrainConfig, epoch_losses: Vec<f64>) -> Provenance {
    Provenance {
        config: config.clone(),
        dataset_fingerprint: ds.fingerprint(),
        train_demonstrators: ds.demonstrators().into_iter().map(str::to_string).collect(),
        epoch_losses,
        phase2_losses: Vec::new(),
        cluster_assignments: BTreeMap::new(),
    }
}

/// Trains any family according to `spec.family`.
pub fn train(ds: &Dataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainedModel> {
    match spec.family {
        Family::Ffn => train_ffn(ds, spec, config),
        Family::ClusteredFfn => train_clustered(ds, spec, config),
        Family::Bnn => train_bnn(ds, spec, config),
        Family::Lstm => train_lstm(ds, spec, config),
        Family::Blstm => train_blstm(ds, spec, config),
    }
}

/// Pooled feedforward policy on every step of every demonstrator.
pub fn train_ffn(ds: &Dataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainedModel> {
    expect_family(spec, Family::Ffn)?;
    config.validate()?;
    check_dataset(ds, spec)?;
    let mut params = init_params(spec, config.seed)?;
    let samples: Vec<(&[f64], usize)> = ds
        .trajectories()
        .iter()
        .flat_map(|t| t.steps.iter().map(|s| (s.state.as_slice(), s.action)))
        .collect();
    let losses = fit_ffn(&mut params, &samples, config)?;
    Ok(TrainedModel {
        spec: spec.clone(),
        params,
        train_embeddings: BTreeMap::new(),
        cluster_model: None,
        provenance: provenance(ds, config, losses),
    })
}

fn fit_ffn(params: &mut ParamSet, samples: &[(&[f64], usize)], config: &TrainConfig) -> Result<Vec<f64>> {
    let depth = ffn_depth(params)?;
    let mut opt = OptimizerState::new(config.optimizer, config.learning_rate)?;
    let mask = Mask::all(params);
    let mut rng = shuffle_rng(config.seed, 1);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let vars = ParamVars::register(&mut tape, params, None)?;
            let mut terms = Vec::with_capacity(batch.len());
            for &i in batch {
                let (x, a) = samples[i];
                let xv = tape.constant(x);
                let (_, logits) = record_ffn(&mut tape, &vars, depth, xv)?;
                terms.push(tape.softmax_ce(logits, a)?);
            }
            let sum = tape.sum(&terms)?;
            total += tape.scalar(sum)?;
            let loss = tape.scale(sum, 1.0 / batch.len() as f64);
            let grads = tape.backward(loss)?;
            opt.step(params, &grads, &mask)?;
        }
        losses.push(finite(total / samples.len() as f64)?);
    }
    Ok(losses)
}

/// Clusters demonstrators with k-means on their feature vectors and trains
/// one feedforward policy per cluster on that cluster's data only.
pub fn train_clustered(ds: &Dataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainedModel> {
    expect_family(spec, Family::ClusteredFfn)?;
    config.validate()?;
    check_dataset(ds, spec)?;
    let groups = ds.by_demonstrator();
    let k = spec.cluster_count;
    if k > groups.len() {
        return Err(Error::Contract(format!(
            "cluster_count {k} exceeds the {} training demonstrators",
            groups.len()
        )));
    }
    let mut ids = Vec::with_capacity(groups.len());
    let mut points = Vec::with_capacity(groups.len());
    for (id, trajs) in &groups {
        ids.push(*id);
        points.push(demonstrator_features(id, trajs, ds.action_count())?.vector);
    }
    let fit = kmeans_fit(&points, k, config.seed, KMeansOptions::default())?;
    let base = spec.base_ffn();
    let mut params = ParamSet::new();
    let mut losses = Vec::new();
    for cluster in 0..k {
        let members: BTreeSet<&str> = ids
            .iter()
            .zip(&fit.labels)
            .filter(|(_, &l)| l == cluster)
            .map(|(id, _)| *id)
            .collect();
        let subset = ds.filter(|t| members.contains(t.demonstrator_id.as_str()));
        let cluster_config = TrainConfig {
            seed: config.seed.wrapping_add(cluster as u64),
            ..config.clone()
        };
        let m = train_ffn(&subset, &base, &cluster_config)?;
        params.extend_prefixed(&format!("cluster{cluster}."), &m.params);
        losses.extend(m.provenance.epoch_losses);
    }
    let mut prov = provenance(ds, config, losses);
    prov.cluster_assignments = ids
        .iter()
        .zip(&fit.labels)
        .map(|(id, &l)| (id.to_string(), l))
        .collect();
    Ok(TrainedModel {
        spec: spec.clone(),
        params,
        train_embeddings: BTreeMap::new(),
        cluster_model: Some(fit.model),
        provenance: prov,
    })
}

/// Phase 1 trains the feedforward base. Phase 2 freezes it and fits a head on
/// `[features; ω]` together with one ω per demonstrator.
///
/// The head starts from the base output layer on the feature columns and
/// random weights on the ω columns, so phase 2 starts at the phase-1 policy
/// only when ω = 0.
pub fn train_bnn(ds: &Dataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainedModel> {
    expect_family(spec, Family::Bnn)?;
    config.validate()?;
    check_dataset(ds, spec)?;
    let phase1 = train_ffn(ds, &spec.base_ffn(), config)?;
    let mut params = phase1.params;
    let depth = ffn_depth(&params)?;
    let hidden = spec.last_hidden();
    let l = spec.embedding_length;
    let k = spec.action_count;

    let init = init_params(spec, config.seed)?;
    let random_head = init.require("head.W")?.data();
    let wout = params.require("base.Wout")?.data();
    let mut head_w = Vec::with_capacity(k * (hidden + l));
    for r in 0..k {
        head_w.extend_from_slice(&wout[r * hidden..(r + 1) * hidden]);
        head_w.extend_from_slice(&random_head[r * (hidden + l) + hidden..(r + 1) * (hidden + l)]);
    }
    let mut trainable = ParamSet::new();
    trainable.insert("head.W", Tensor::matrix(k, hidden + l, head_w)?);
    trainable.insert("head.b", params.require("base.bout")?.clone());
    let ids: Vec<&str> = ds.demonstrators();
    for id in &ids {
        trainable.insert(omega_name(id), Tensor::zeros(vec![l]));
    }

    // The base is frozen, so its features are computed once.
    let mut feature_tape = Tape::untaped();
    let base_vars = ParamVars::constants(&mut feature_tape, &params)?;
    let names: Vec<String> = ids.iter().map(|id| omega_name(id)).collect();
    let mut samples = Vec::with_capacity(ds.step_count());
    for t in ds.trajectories() {
        let d = ids
            .binary_search(&t.demonstrator_id.as_str())
            .expect("id from this dataset");
        for s in &t.steps {
            let x = feature_tape.constant(&s.state);
            let h = record_ffn_features(&mut feature_tape, &base_vars, depth, x)?;
            samples.push((names[d].as_str(), feature_tape.value(h).to_vec(), s.action));
        }
    }
    drop(feature_tape);

    let mut head_opt = OptimizerState::new(config.optimizer, config.learning_rate)?;
    let mut omega_opt = OptimizerState::new(config.optimizer, config.embedding_learning_rate)?;
    let head_mask = Mask::from_names(["head.W", "head.b"]);
    let omega_mask = Mask::with_prefix(&trainable, OMEGA_PREFIX);
    let mut rng = shuffle_rng(config.seed, 2);
    let mut order: Vec<usize> = (0..samples.len()).collect();
    let mut phase2_losses = Vec::with_capacity(config.phase2_epochs);
    for _ in 0..config.phase2_epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            let mut tape = Tape::new();
            let w = tape.param("head.W", trainable.require("head.W")?)?;
            let b = tape.param("head.b", trainable.require("head.b")?)?;
            let mut omegas: BTreeMap<&str, Var> = BTreeMap::new();
            let mut terms = Vec::with_capacity(batch.len());
            for &i in batch {
                let (name, ref h, a) = samples[i];
                let omega = match omegas.get(name) {
                    Some(&v) => v,
                    None => {
                        let v = tape.param(name, trainable.require(name)?)?;
                        omegas.insert(name, v);
                        v
                    }
                };
                let hv = tape.constant(h);
                let joined = tape.concat(&[hv, omega])?;
                let logits = tape.affine(w, b, joined)?;
                terms.push(tape.softmax_ce(logits, a)?);
            }
            let sum = tape.sum(&terms)?;
            total += tape.scalar(sum)?;
            let loss = tape.scale(sum, 1.0 / batch.len() as f64);
            let grads = tape.backward(loss)?;
            head_opt.step(&mut trainable, &grads, &head_mask)?;
            omega_opt.step(&mut trainable, &grads, &omega_mask)?;
        }
        phase2_losses.push(finite(total / samples.len() as f64)?);
    }

    let mut train_embeddings = BTreeMap::new();
    for id in &ids {
        let values = trainable.require(&omega_name(id))?.data().to_vec();
        train_embeddings.insert(id.to_string(), EmbeddingVector::new(*id, values)?);
    }
    for name in ["head.W", "head.b"] {
        params.insert(name, trainable.require(name)?.clone());
    }
    let mut prov = provenance(ds, config, phase1.provenance.epoch_losses);
    prov.phase2_losses = phase2_losses;
    Ok(TrainedModel {
        spec: spec.clone(),
        params,
        train_embeddings,
        cluster_model: None,
        provenance: prov,
    })
}

/// Sequence training with truncated backpropagation through time.
pub fn train_lstm(ds: &Dataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainedModel> {
    expect_family(spec, Family::Lstm)?;
    train_recurrent(ds, spec, config)
}

/// Joint single-phase training of the recurrent net and one ω per
/// demonstrator, with ω appended to every input.
pub fn train_blstm(ds: &Dataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainedModel> {
    expect_family(spec, Family::Blstm)?;
    train_recurrent(ds, spec, config)
}

fn train_recurrent(ds: &Dataset, spec: &ModelSpec, config: &TrainConfig) -> Result<TrainedModel> {
    config.validate()?;
    check_dataset(ds, spec)?;
    let with_omega = spec.family.has_embedding();
    let hidden = spec.lstm_hidden();
    let mut work = init_params(spec, config.seed)?;
    let net_mask = Mask::all(&work);
    let ids: Vec<&str> = ds.demonstrators();
    if with_omega {
        for id in &ids {
            work.insert(omega_name(id), Tensor::zeros(vec![spec.embedding_length]));
        }
    }
    let omega_mask = Mask::with_prefix(&work, OMEGA_PREFIX);
    let mut net_opt = OptimizerState::new(config.optimizer, config.learning_rate)?;
    let mut omega_opt = OptimizerState::new(config.optimizer, config.embedding_learning_rate)?;

    let trajs = ds.trajectories();
    let mean_len = ds.step_count() as f64 / trajs.len() as f64;
    let per_batch = ((config.batch_size as f64 / mean_len).round() as usize).max(1);
    let truncation = config.bptt_truncation;
    let zeros = vec![0.0; hidden];
    let mut rng = shuffle_rng(config.seed, 1);
    let mut order: Vec<usize> = (0..trajs.len()).collect();
    let mut losses = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for batch in order.chunks(per_batch) {
            let mut tape = Tape::new();
            let vars = ParamVars::register(&mut tape, &work, None)?;
            let mut terms = Vec::new();
            for &i in batch {
                let t = &trajs[i];
                let omega = if with_omega {
                    Some(vars.get(&omega_name(&t.demonstrator_id))?)
                } else {
                    None
                };
                let mut h = tape.constant(&zeros);
                let mut c = tape.constant(&zeros);
                for (step_index, s) in t.steps.iter().enumerate() {
                    if step_index > 0 && step_index % truncation == 0 {
                        let (hv, cv) = (tape.value(h).to_vec(), tape.value(c).to_vec());
                        h = tape.constant(&hv);
                        c = tape.constant(&cv);
                    }
                    let x = tape.constant(&s.state);
                    let input = match omega {
                        Some(w) => tape.concat(&[x, w])?,
                        None => x,
                    };
                    (h, c) = record_lstm_step(&mut tape, &vars, hidden, h, c, input)?;
                    let logits = record_lstm_logits(&mut tape, &vars, h)?;
                    terms.push(tape.softmax_ce(logits, s.action)?);
                }
            }
            let sum = tape.sum(&terms)?;
            total += tape.scalar(sum)?;
            let loss = tape.scale(sum, 1.0 / terms.len() as f64);
            let grads = tape.backward(loss)?;
            net_opt.step(&mut work, &grads, &net_mask)?;
            if with_omega {
                omega_opt.step(&mut work, &grads, &omega_mask)?;
            }
        }
        losses.push(finite(total / ds.step_count() as f64)?);
    }

    let mut train_embeddings = BTreeMap::new();
    for id in &ids {
        if let Some(t) = work.remove(&omega_name(id)) {
            train_embeddings.insert(id.to_string(), EmbeddingVector::new(*id, t.data().to_vec())?);
        }
    }
    Ok(TrainedModel {
        spec: spec.clone(),
        params: work,
        train_embeddings,
        cluster_model: None,
        provenance: provenance(ds, config, losses),
    })
}
