//! The five policy families and their parameter layouts.
//!
//! Parameter naming:
//! - feedforward base: `base.W{i}`, `base.b{i}` (1-based hidden layers), `base.Wout`, `base.bout`
//! - embedding head: `head.W` (`K × (H_last + L)`, features first), `head.b`
//! - recurrent cell: `lstm.W` (`4H × (in + H)`, gate blocks input, forget, candidate, output),
//!   `lstm.b`, output layer `out.W`, `out.b`
//! - clustered: each cluster's feedforward set under `cluster{i}.`

mod ffn;
mod lstm;

pub use ffn::{
    bnn_forward, ffn_depth, ffn_forward, record_bnn_head, record_ffn, record_ffn_features, FfnOutput,
};
pub use lstm::{blstm_forward, lstm_forward, lstm_step, record_lstm_logits, record_lstm_step, LstmState};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub enum Family {
    #[serde(rename = "FFN")]
    Ffn,
    #[serde(rename = "ClusteredFFN")]
    ClusteredFfn,
    #[serde(rename = "BNN")]
    Bnn,
    #[serde(rename = "LSTM")]
    Lstm,
    #[serde(rename = "BLSTM")]
    Blstm,
}

impl Family {
    pub const ALL: [Family; 5] = [
        Family::Ffn,
        Family::ClusteredFfn,
        Family::Bnn,
        Family::Lstm,
        Family::Blstm,
    ];

    pub fn name(self) -> &'static str {
        match self {
            Family::Ffn => "FFN",
            Family::ClusteredFfn => "ClusteredFFN",
            Family::Bnn => "BNN",
            Family::Lstm => "LSTM",
            Family::Blstm => "BLSTM",
        }
    }

    /// Accepts canonical names and common lowercase aliases.
    pub fn parse(s: &str) -> Result<Self> {
        let lower = s.to_ascii_lowercase();
        Ok(match lower.as_str() {
            "ffn" | "nn" => Family::Ffn,
            "clusteredffn" | "clustered" | "nn(i)" => Family::ClusteredFfn,
            "bnn" => Family::Bnn,
            "lstm" => Family::Lstm,
            "blstm" | "b-lstm" => Family::Blstm,
            _ => return Err(Error::Config(format!("unknown model family `{s}`"))),
        })
    }

    pub fn has_embedding(self) -> bool {
        matches!(self, Family::Bnn | Family::Blstm)
    }

    pub fn is_recurrent(self) -> bool {
        matches!(self, Family::Lstm | Family::Blstm)
    }
}

impl std::fmt::Display for Family {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

/// Architecture description. Serialized as
/// `{"family","state_dim","action_count","hidden_widths","embedding_length","cluster_count"}`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ModelSpec {
    pub family: Family,
    pub state_dim: usize,
    pub action_count: usize,
    pub hidden_widths: Vec<usize>,
    pub embedding_length: usize,
    pub cluster_count: usize,
}

pub const DEFAULT_FFN_WIDTHS: [usize; 2] = [32, 32];
pub const DEFAULT_LSTM_HIDDEN: usize = 32;

impl ModelSpec {
    /// Spec with the default widths for `family`. `embedding_length` and
    /// `cluster_count` are only kept where the family uses them.
    pub fn with_defaults(
        family: Family,
        state_dim: usize,
        action_count: usize,
        embedding_length: usize,
        cluster_count: usize,
    ) -> Self {
        let hidden_widths = if family.is_recurrent() {
            vec![DEFAULT_LSTM_HIDDEN]
        } else {
            DEFAULT_FFN_WIDTHS.to_vec()
        };
        ModelSpec {
            family,
            state_dim,
            action_count,
            hidden_widths,
            embedding_length: if family.has_embedding() {
                embedding_length
            } else {
                0
            },
            cluster_count: if family == Family::ClusteredFfn {
                cluster_count
            } else {
                0
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.state_dim == 0 {
            return bad("state_dim must be positive".into());
        }
        if self.action_count == 0 {
            return bad("action_count must be positive".into());
        }
        if self.hidden_widths.is_empty() || self.hidden_widths.contains(&0) {
            return bad(format!(
                "hidden widths must be positive, got {:?}",
                self.hidden_widths
            ));
        }
        if self.family.is_recurrent() && self.hidden_widths.len() != 1 {
            return bad(format!(
                "{} takes a single hidden width, got {:?}",
                self.family, self.hidden_widths
            ));
        }
        match (self.family.has_embedding(), self.embedding_length) {
            (true, 0) => return bad(format!("{} needs embedding_length >= 1", self.family)),
            (false, l) if l != 0 => return bad(format!("{} takes embedding_length 0, got {l}", self.family)),
            _ => {}
        }
        match (self.family == Family::ClusteredFfn, self.cluster_count) {
            (true, 0) => return bad("ClusteredFFN needs cluster_count >= 1".into()),
            (false, k) if k != 0 => return bad(format!("{} takes cluster_count 0, got {k}", self.family)),
            _ => {}
        }
        Ok(())
    }

    /// The plain feedforward spec a clustered or embedding model is built on.
    pub fn base_ffn(&self) -> ModelSpec {
        ModelSpec {
            family: Family::Ffn,
            embedding_length: 0,
            cluster_count: 0,
            ..self.clone()
        }
    }

    pub fn lstm_hidden(&self) -> usize {
        self.hidden_widths[0]
    }

    pub fn last_hidden(&self) -> usize {
        *self.hidden_widths.last().expect("validated nonempty")
    }
}

/// A demonstrator's latent style vector.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingVector {
    pub demonstrator_id: String,
    values: Vec<f64>,
}

impl EmbeddingVector {
    pub fn new(demonstrator_id: impl Into<String>, values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::Contract("embedding must have length >= 1".into()));
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::Numeric("embedding has a non-finite entry".into()));
        }
        Ok(EmbeddingVector {
            demonstrator_id: demonstrator_id.into(),
            values,
        })
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

pub fn xavier_bound(fan_in: usize, fan_out: usize) -> f64 {
    (6.0 / (fan_in + fan_out) as f64).sqrt()
}

fn xavier(rng: &mut ChaCha8Rng, rows: usize, cols: usize) -> Tensor {
    let bound = xavier_bound(cols, rows);
    let data = (0..rows * cols)
        .map(|_| rng.random_range(-bound..=bound))
        .collect();
    Tensor::matrix(rows, cols, data).expect("finite by construction")
}

fn init_ffn_base(spec: &ModelSpec, rng: &mut ChaCha8Rng, out: &mut ParamSet) {
    let mut fan_in = spec.state_dim;
    for (i, &w) in spec.hidden_widths.iter().enumerate() {
        out.insert(format!("base.W{}", i + 1), xavier(rng, w, fan_in));
        out.insert(format!("base.b{}", i + 1), Tensor::zeros(vec![w]));
        fan_in = w;
    }
    out.insert("base.Wout", xavier(rng, spec.action_count, fan_in));
    out.insert("base.bout", Tensor::zeros(vec![spec.action_count]));
}

/// Xavier-uniform weights, zero biases, LSTM forget-gate bias 1.
/// Deterministic in `(spec, seed)`.
pub fn init_params(spec: &ModelSpec, seed: u64) -> Result<ParamSet> {
    spec.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = ParamSet::new();
    let k = spec.action_count;
    match spec.family {
        Family::Ffn => init_ffn_base(spec, &mut rng, &mut out),
        Family::ClusteredFfn => {
            let base = spec.base_ffn();
            for i in 0..spec.cluster_count {
                let p = init_params(&base, seed.wrapping_add(i as u64))?;
                out.extend_prefixed(&format!("cluster{i}."), &p);
            }
        }
        Family::Bnn => {
            init_ffn_base(spec, &mut rng, &mut out);
            let cols = spec.last_hidden() + spec.embedding_length;
            out.insert("head.W", xavier(&mut rng, k, cols));
            out.insert("head.b", Tensor::zeros(vec![k]));
        }
        Family::Lstm | Family::Blstm => {
            let h = spec.lstm_hidden();
            let input = spec.state_dim + spec.embedding_length;
            out.insert("lstm.W", xavier(&mut rng, 4 * h, input + h));
            let mut bias = vec![0.0; 4 * h];
            bias[h..2 * h].fill(1.0);
            out.insert("lstm.b", Tensor::vector(bias)?);
            out.insert("out.W", xavier(&mut rng, k, h));
            out.insert("out.b", Tensor::zeros(vec![k]));
        }
    }
    Ok(out)
}
