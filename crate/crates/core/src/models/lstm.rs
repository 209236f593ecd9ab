use crate::error::{Error, Result};
use crate::tape::{ParamVars, Tape, Var};
use crate::tensor::ParamSet;

#[derive(Debug, Clone, PartialEq)]
pub struct LstmState {
    pub h: Vec<f64>,
    pub c: Vec<f64>,
}

impl LstmState {
    pub fn zeros(hidden: usize) -> Self {
        LstmState {
            h: vec![0.0; hidden],
            c: vec![0.0; hidden],
        }
    }

    pub fn hidden(&self) -> usize {
        self.h.len()
    }
}

/// One cell update. `h`, `c` and `x` are tape nodes; returns `(h', c')`.
///
/// Gates come from `z = lstm.W · [x; h] + lstm.b`, split into input, forget,
/// candidate and output blocks of width `hidden`.
pub fn record_lstm_step(
    tape: &mut Tape,
    vars: &ParamVars,
    hidden: usize,
    h: Var,
    c: Var,
    x: Var,
) -> Result<(Var, Var)> {
    let joined = tape.concat(&[x, h])?;
    let z = tape.affine(vars.get("lstm.W")?, vars.get("lstm.b")?, joined)?;
    let zi = tape.slice(z, 0, hidden)?;
    let zf = tape.slice(z, hidden, hidden)?;
    let zg = tape.slice(z, 2 * hidden, hidden)?;
    let zo = tape.slice(z, 3 * hidden, hidden)?;
    let i = tape.sigmoid(zi);
    let f = tape.sigmoid(zf);
    let g = tape.tanh(zg);
    let o = tape.sigmoid(zo);
    let carried = tape.mul(f, c)?;
    let written = tape.mul(i, g)?;
    let c_next = tape.add(carried, written)?;
    let squashed = tape.tanh(c_next);
    let h_next = tape.mul(o, squashed)?;
    Ok((h_next, c_next))
}

pub fn record_lstm_logits(tape: &mut Tape, vars: &ParamVars, h: Var) -> Result<Var> {
    tape.affine(vars.get("out.W")?, vars.get("out.b")?, h)
}

fn hidden_of(params: &ParamSet) -> Result<(usize, usize)> {
    let w = params.require("lstm.W")?;
    match w.shape() {
        [rows, cols] if rows % 4 == 0 && *cols > rows / 4 => Ok((rows / 4, cols - rows / 4)),
        other => Err(Error::Contract(format!("malformed lstm.W shape {other:?}"))),
    }
}

pub fn lstm_step(params: &ParamSet, state: &LstmState, x: &[f64]) -> Result<(LstmState, Vec<f64>)> {
    let (hidden, input) = hidden_of(params)?;
    if state.h.len() != hidden || state.c.len() != hidden {
        return Err(Error::dim("state", hidden, state.h.len()));
    }
    if x.len() != input {
        return Err(Error::dim("x", input, x.len()));
    }
    let mut tape = Tape::untaped();
    let vars = ParamVars::constants(&mut tape, params)?;
    let h = tape.constant(&state.h);
    let c = tape.constant(&state.c);
    let xv = tape.constant(x);
    let (h2, c2) = record_lstm_step(&mut tape, &vars, hidden, h, c, xv)?;
    let logits = record_lstm_logits(&mut tape, &vars, h2)?;
    Ok((
        LstmState {
            h: tape.value(h2).to_vec(),
            c: tape.value(c2).to_vec(),
        },
        tape.value(logits).to_vec(),
    ))
}

/// Per-step logits of a sequence from the zero state.
pub fn lstm_forward(params: &ParamSet, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    blstm_forward(params, &[], xs)
}

/// Per-step logits where every input is `[x_t; omega]`.
pub fn blstm_forward(params: &ParamSet, omega: &[f64], xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    if xs.is_empty() {
        return Err(Error::Contract("empty input sequence".into()));
    }
    let (hidden, input) = hidden_of(params)?;
    let mut tape = Tape::untaped();
    let vars = ParamVars::constants(&mut tape, params)?;
    let w = tape.constant(omega);
    let mut h = tape.constant(&vec![0.0; hidden]);
    let mut c = tape.constant(&vec![0.0; hidden]);
    let mut out = Vec::with_capacity(xs.len());
    for x in xs {
        if x.len() + omega.len() != input {
            return Err(Error::dim("x", input - omega.len().min(input), x.len()));
        }
        let xv = tape.constant(x);
        let step_in = if omega.is_empty() {
            xv
        } else {
            tape.concat(&[xv, w])?
        };
        let (h2, c2) = record_lstm_step(&mut tape, &vars, hidden, h, c, step_in)?;
        let logits = record_lstm_logits(&mut tape, &vars, h2)?;
        out.push(tape.value(logits).to_vec());
        h = h2;
        c = c2;
    }
    Ok(out)
}
