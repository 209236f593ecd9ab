use super::{TrainConfig, TrainedModel};
use crate::data::Step;
use crate::error::{Error, Result};
use crate::models::{
    blstm_forward, ffn_depth, record_ffn_features, record_lstm_logits, record_lstm_step, Family,
};
use crate::optim::{Mask, OptimizerState};
use crate::tape::{ParamVars, Tape};
use crate::tensor::{ParamSet, Tensor};

const OMEGA: &str = "omega";

/// One processed observation: the logits predicted before the action was
/// seen and ω after the update that followed.
#[derive(Debug, Clone, PartialEq)]
pub struct AdaptStep {
    pub logits: Vec<f64>,
    pub omega: Vec<f64>,
}

#[derive(Debug, Clone, Copy)]
enum Kind {
    Bnn { depth: usize },
    Blstm { hidden: usize },
}

/// What an observation keeps: base features for BNN, the raw state for BLSTM.
#[derive(Debug, Clone)]
struct Observation {
    input: Vec<f64>,
    action: usize,
}

/// Test-time fitting of ω for a new demonstrator. Network weights are only
/// read. The stream may span several episodes; ω and the optimizer state
/// carry over between them while recurrent state restarts at each episode.
#[derive(Debug)]
pub struct OnlineAdapter<'a> {
    model: &'a TrainedModel,
    kind: Kind,
    omega: ParamSet,
    opt: OptimizerState,
    mask: Mask,
    steps: usize,
    window: Option<usize>,
    episodes: Vec<Vec<Observation>>,
    observed: usize,
}

impl<'a> OnlineAdapter<'a> {
    /// Uses the adaptation settings the model was trained with.
    pub fn new(model: &'a TrainedModel) -> Result<Self> {
        Self::with_config(model, &model.provenance.config)
    }

    /// Reads `optimizer`, the adaptation rate, `adapt_steps_per_observation`
    /// and `adapt_window` from `config`.
    pub fn with_config(model: &'a TrainedModel, config: &TrainConfig) -> Result<Self> {
        let kind = match model.family() {
            Family::Bnn => Kind::Bnn {
                depth: ffn_depth(&model.params)?,
            },
            Family::Blstm => Kind::Blstm {
                hidden: model.spec.lstm_hidden(),
            },
            other => {
                return Err(Error::Contract(format!(
                    "online adaptation needs a BNN or BLSTM model, got {other}"
                )))
            }
        };
        config.validate()?;
        let mut omega = ParamSet::new();
        omega.insert(OMEGA, Tensor::vector(model.mean_embedding())?);
        let mask = Mask::all(&omega);
        Ok(OnlineAdapter {
            model,
            kind,
            omega,
            opt: OptimizerState::new(config.optimizer, config.adapt_rate())?,
            mask,
            steps: config.adapt_steps_per_observation,
            window: config.adapt_window,
            episodes: vec![Vec::new()],
            observed: 0,
        })
    }

    pub fn omega(&self) -> &[f64] {
        self.omega.require(OMEGA).expect("always present").data()
    }

    /// Starts a new episode of the same demonstrator.
    pub fn begin_episode(&mut self) {
        if self.episodes.last().is_some_and(|e| !e.is_empty()) {
            self.episodes.push(Vec::new());
        }
    }

    fn check_state(&self, state: &[f64]) -> Result<()> {
        if state.len() != self.model.spec.state_dim {
            return Err(Error::dim("state", self.model.spec.state_dim, state.len()));
        }
        Ok(())
    }

    fn features(&self, depth: usize, state: &[f64]) -> Result<Vec<f64>> {
        let mut tape = Tape::untaped();
        let vars = ParamVars::constants(&mut tape, &self.model.params)?;
        let x = tape.constant(state);
        let h = record_ffn_features(&mut tape, &vars, depth, x)?;
        Ok(tape.value(h).to_vec())
    }

    fn head_logits(&self, features: &[f64]) -> Result<Vec<f64>> {
        let w = self.model.params.require("head.W")?;
        let b = self.model.params.require("head.b")?;
        let mut joined = features.to_vec();
        joined.extend_from_slice(self.omega());
        crate::tape::affine_forward(w, b, &joined)
    }

    /// Logits for `state` under the current ω. Does not change the adapter.
    pub fn predict(&self, state: &[f64]) -> Result<Vec<f64>> {
        self.check_state(state)?;
        match self.kind {
            Kind::Bnn { depth } => self.head_logits(&self.features(depth, state)?),
            Kind::Blstm { .. } => {
                let mut xs: Vec<Vec<f64>> = self
                    .episodes
                    .last()
                    .expect("nonempty")
                    .iter()
                    .map(|o| o.input.clone())
                    .collect();
                xs.push(state.to_vec());
                let mut logits = blstm_forward(&self.model.params, self.omega(), &xs)?;
                Ok(logits.pop().expect("nonempty"))
            }
        }
    }

    /// Records the demonstrator's action and updates ω. Returns the new ω.
    pub fn observe(&mut self, state: &[f64], action: usize) -> Result<Vec<f64>> {
        self.check_state(state)?;
        let k = self.model.spec.action_count;
        if action >= k {
            return Err(Error::Index {
                index: action,
                len: k,
            });
        }
        let input = match self.kind {
            Kind::Bnn { depth } => self.features(depth, state)?,
            Kind::Blstm { .. } => state.to_vec(),
        };
        self.episodes
            .last_mut()
            .expect("nonempty")
            .push(Observation { input, action });
        self.observed += 1;
        for _ in 0..self.steps {
            self.gradient_step()?;
        }
        Ok(self.omega().to_vec())
    }

    /// Global index of the first observation inside the loss window.
    fn window_start(&self) -> usize {
        self.window.map_or(0, |w| self.observed.saturating_sub(w))
    }

    fn gradient_step(&mut self) -> Result<()> {
        let start = self.window_start();
        let mut tape = Tape::new();
        let omega = tape.param(OMEGA, self.omega.require(OMEGA)?)?;
        let mut terms = Vec::new();
        match self.kind {
            Kind::Bnn { .. } => {
                let w = tape.constant_tensor(self.model.params.require("head.W")?)?;
                let b = tape.constant_tensor(self.model.params.require("head.b")?)?;
                let observations = self.episodes.iter().flatten().skip(start);
                for o in observations {
                    let h = tape.constant(&o.input);
                    let joined = tape.concat(&[h, omega])?;
                    let logits = tape.affine(w, b, joined)?;
                    terms.push(tape.softmax_ce(logits, o.action)?);
                }
            }
            Kind::Blstm { hidden } => {
                let vars = ParamVars::constants(&mut tape, &self.model.params)?;
                let zeros = vec![0.0; hidden];
                let mut index = 0;
                for episode in &self.episodes {
                    if index + episode.len() <= start {
                        index += episode.len();
                        continue;
                    }
                    let mut h = tape.constant(&zeros);
                    let mut c = tape.constant(&zeros);
                    for o in episode {
                        let x = tape.constant(&o.input);
                        let input = tape.concat(&[x, omega])?;
                        (h, c) = record_lstm_step(&mut tape, &vars, hidden, h, c, input)?;
                        if index >= start {
                            let logits = record_lstm_logits(&mut tape, &vars, h)?;
                            terms.push(tape.softmax_ce(logits, o.action)?);
                        }
                        index += 1;
                    }
                }
            }
        }
        let sum = tape.sum(&terms)?;
        let loss = tape.scale(sum, 1.0 / terms.len() as f64);
        let value = tape.scalar(loss)?;
        if !value.is_finite() {
            return Err(Error::Numeric(format!("adaptation loss became {value}")));
        }
        let grads = tape.backward(loss)?;
        self.opt.step(&mut self.omega, &grads, &self.mask)
    }
}

/// Runs a fresh adapter over `episodes` of one demonstrator, in order.
pub fn adapt_embedding_online(model: &TrainedModel, episodes: &[&[Step]]) -> Result<Vec<AdaptStep>> {
    let mut adapter = OnlineAdapter::new(model)?;
    let mut out = Vec::with_capacity(episodes.iter().map(|e| e.len()).sum());
    for episode in episodes {
        adapter.begin_episode();
        for s in *episode {
            let logits = adapter.predict(&s.state)?;
            let omega = adapter.observe(&s.state, s.action)?;
            out.push(AdaptStep { logits, omega });
        }
    }
    Ok(out)
}
