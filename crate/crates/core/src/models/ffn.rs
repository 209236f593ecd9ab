use crate::error::{Error, Result};
use crate::tape::{ParamVars, Tape, Var};
use crate::tensor::ParamSet;

/// Number of hidden layers in a feedforward base, read off the parameter names.
pub fn ffn_depth(params: &ParamSet) -> Result<usize> {
    let mut depth = 0;
    while params.contains(&format!("base.W{}", depth + 1)) {
        depth += 1;
    }
    if depth == 0 {
        return Err(Error::Contract("parameter set has no `base.W1`".into()));
    }
    Ok(depth)
}

/// Hidden tanh layers only; returns the penultimate feature vector.
pub fn record_ffn_features(tape: &mut Tape, vars: &ParamVars, depth: usize, x: Var) -> Result<Var> {
    let mut h = x;
    for i in 1..=depth {
        let z = tape.affine(
            vars.get(&format!("base.W{i}"))?,
            vars.get(&format!("base.b{i}"))?,
            h,
        )?;
        h = tape.tanh(z);
    }
    Ok(h)
}

/// Full feedforward pass. Returns `(features, logits)`.
pub fn record_ffn(tape: &mut Tape, vars: &ParamVars, depth: usize, x: Var) -> Result<(Var, Var)> {
    let h = record_ffn_features(tape, vars, depth, x)?;
    let logits = tape.affine(vars.get("base.Wout")?, vars.get("base.bout")?, h)?;
    Ok((h, logits))
}

/// Embedding head: `head.W · [features; omega] + head.b`.
pub fn record_bnn_head(tape: &mut Tape, vars: &ParamVars, features: Var, omega: Var) -> Result<Var> {
    let joined = tape.concat(&[features, omega])?;
    tape.affine(vars.get("head.W")?, vars.get("head.b")?, joined)
}

#[derive(Debug, Clone, PartialEq)]
pub struct FfnOutput {
    pub logits: Vec<f64>,
    /// Output of the last hidden layer.
    pub features: Vec<f64>,
}

pub fn ffn_forward(params: &ParamSet, x: &[f64]) -> Result<FfnOutput> {
    let depth = ffn_depth(params)?;
    let mut tape = Tape::untaped();
    let vars = ParamVars::constants(&mut tape, params)?;
    let xv = tape.constant(x);
    let (h, logits) = record_ffn(&mut tape, &vars, depth, xv)?;
    Ok(FfnOutput {
        logits: tape.value(logits).to_vec(),
        features: tape.value(h).to_vec(),
    })
}

/// Embedding-conditioned logits. The base output layer is not used.
pub fn bnn_forward(params: &ParamSet, omega: &[f64], x: &[f64]) -> Result<Vec<f64>> {
    let depth = ffn_depth(params)?;
    let head = params.require("head.W")?;
    let features = params.require(&format!("base.W{depth}"))?.shape()[0];
    let expected = head.shape()[1].saturating_sub(features);
    if omega.len() != expected {
        return Err(Error::dim("omega", expected, omega.len()));
    }
    let mut tape = Tape::untaped();
    let vars = ParamVars::constants(&mut tape, params)?;
    let xv = tape.constant(x);
    let h = record_ffn_features(&mut tape, &vars, depth, xv)?;
    let w = tape.constant(omega);
    let logits = record_bnn_head(&mut tape, &vars, h, w)?;
    Ok(tape.value(logits).to_vec())
}
