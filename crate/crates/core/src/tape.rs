//! Reverse-mode differentiation over a linear tape of primitive ops.
//!
//! Every op computes its value eagerly and appends a node. When the tape is
//! recording, nodes also remember their inputs so [`Tape::backward`] can walk
//! them once each, newest first. A non-recording tape runs the identical
//! kernels, so its values match a recording tape bit for bit.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::tensor::{ParamSet, Tensor};

/// Handle to a node on a [`Tape`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Var(usize);

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Activation {
    Tanh,
    Relu,
    Sigmoid,
}

impl Activation {
    #[inline]
    pub fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Tanh => x.tanh(),
            Activation::Relu => x.max(0.0),
            Activation::Sigmoid => sigmoid(x),
        }
    }

    /// Derivative expressed through the output value `y = apply(x)`.
    #[inline]
    fn derivative_from_output(self, y: f64) -> f64 {
        match self {
            Activation::Tanh => 1.0 - y * y,
            Activation::Relu => {
                if y > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Sigmoid => y * (1.0 - y),
        }
    }
}

#[inline]
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Max-shifted softmax cross-entropy. Returns the loss in nats and the
/// softmax probabilities.
pub fn softmax_cross_entropy(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    if label >= logits.len() {
        return Err(Error::Index {
            index: label,
            len: logits.len(),
        });
    }
    let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut probs: Vec<f64> = logits.iter().map(|&l| (l - max).exp()).collect();
    let total: f64 = probs.iter().sum();
    let loss = total.ln() - (logits[label] - max);
    for p in &mut probs {
        *p /= total;
    }
    Ok((loss, probs))
}

/// Gradient of [`softmax_cross_entropy`] with respect to the logits.
pub fn softmax_cross_entropy_grad(logits: &[f64], label: usize) -> Result<(f64, Vec<f64>)> {
    let (loss, mut grad) = softmax_cross_entropy(logits, label)?;
    grad[label] -= 1.0;
    Ok((loss, grad))
}

fn affine_kernel(w: &[f64], rows: usize, cols: usize, b: &[f64], x: &[f64]) -> Vec<f64> {
    let mut out = Vec::with_capacity(rows);
    for r in 0..rows {
        let row = &w[r * cols..(r + 1) * cols];
        let dot: f64 = row.iter().zip(x).map(|(a, b)| a * b).sum();
        out.push(dot + b[r]);
    }
    out
}

/// `W x + b` without a tape.
pub fn affine_forward(w: &Tensor, b: &Tensor, x: &[f64]) -> Result<Vec<f64>> {
    let (rows, cols) = matrix_dims(w, "W")?;
    if b.numel() != rows || b.shape().len() != 1 {
        return Err(Error::dim("b", format!("[{rows}]"), format!("{:?}", b.shape())));
    }
    if x.len() != cols {
        return Err(Error::dim("x", cols, x.len()));
    }
    Ok(affine_kernel(w.data(), rows, cols, b.data(), x))
}

fn matrix_dims(w: &Tensor, operand: &str) -> Result<(usize, usize)> {
    match w.shape() {
        [r, c] => Ok((*r, *c)),
        other => Err(Error::dim(operand, "a matrix", format!("{other:?}"))),
    }
}

#[derive(Debug)]
enum Op {
    Leaf,
    Param {
        name: String,
        shape: Vec<usize>,
    },
    Affine {
        w: Var,
        b: Var,
        x: Var,
    },
    Act {
        kind: Activation,
        input: Var,
    },
    Concat(Vec<Var>),
    Slice {
        input: Var,
        start: usize,
    },
    Add(Var, Var),
    Mul(Var, Var),
    SoftmaxCe {
        logits: Var,
        label: usize,
        probs: Vec<f64>,
    },
    Sum(Vec<Var>),
    Scale(Var, f64),
}

#[derive(Debug)]
struct Node {
    value: Vec<f64>,
    /// Matrix row count; vectors use `rows == value.len()`, `cols == 1`.
    rows: usize,
    cols: usize,
    op: Op,
    requires_grad: bool,
}

/// Gradients of a scalar with respect to every parameter recorded on a tape.
#[derive(Debug, Clone, Default)]
pub struct Gradients {
    by_name: BTreeMap<String, Tensor>,
}

impl Gradients {
    pub fn get(&self, name: &str) -> Option<&Tensor> {
        self.by_name.get(name)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.by_name.keys().map(String::as_str)
    }

    /// Gradient for every entry of `params`; entries never touched by the
    /// tape get zeros.
    pub fn dense_for(&self, params: &ParamSet) -> ParamSet {
        let mut out = ParamSet::new();
        for (name, t) in params.iter() {
            let g = match self.by_name.get(name) {
                Some(g) => g.clone(),
                None => Tensor::zeros(t.shape().to_vec()),
            };
            out.insert(name, g);
        }
        out
    }

    pub(crate) fn insert(&mut self, name: &str, grad: Tensor) {
        self.by_name.insert(name.to_string(), grad);
    }
}

#[derive(Debug)]
pub struct Tape {
    nodes: Vec<Node>,
    recording: bool,
}

impl Default for Tape {
    fn default() -> Self {
        Self::new()
    }
}

impl Tape {
    /// A recording tape.
    pub fn new() -> Self {
        Tape {
            nodes: Vec::new(),
            recording: true,
        }
    }

    /// Evaluates only; [`Tape::backward`] on it is a contract error.
    pub fn untaped() -> Self {
        Tape {
            nodes: Vec::new(),
            recording: false,
        }
    }

    pub fn is_recording(&self) -> bool {
        self.recording
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    pub fn value(&self, v: Var) -> &[f64] {
        &self.nodes[v.0].value
    }

    pub fn scalar(&self, v: Var) -> Result<f64> {
        match self.nodes[v.0].value.as_slice() {
            [x] => Ok(*x),
            other => Err(Error::Contract(format!(
                "expected a scalar node, found length {}",
                other.len()
            ))),
        }
    }

    fn push(&mut self, value: Vec<f64>, rows: usize, cols: usize, op: Op, inputs: &[Var]) -> Var {
        let requires_grad = self.recording
            && match &op {
                Op::Param { .. } => true,
                Op::Leaf => false,
                _ => inputs.iter().any(|v| self.nodes[v.0].requires_grad),
            };
        let op = if self.recording { op } else { Op::Leaf };
        self.nodes.push(Node {
            value,
            rows,
            cols,
            op,
            requires_grad,
        });
        Var(self.nodes.len() - 1)
    }

    fn vector_len(&self, v: Var, operand: &str) -> Result<usize> {
        let n = &self.nodes[v.0];
        if n.cols != 1 {
            return Err(Error::dim(operand, "a vector", format!("{}x{}", n.rows, n.cols)));
        }
        Ok(n.rows)
    }

    /// Constant input; receives no gradient.
    pub fn constant(&mut self, values: &[f64]) -> Var {
        self.push(values.to_vec(), values.len(), 1, Op::Leaf, &[])
    }

    pub fn constant_tensor(&mut self, t: &Tensor) -> Result<Var> {
        let (rows, cols) = t.as_matrix_dims()?;
        Ok(self.push(t.data().to_vec(), rows, cols, Op::Leaf, &[]))
    }

    /// Trainable leaf; its gradient is reported under `name`.
    pub fn param(&mut self, name: &str, t: &Tensor) -> Result<Var> {
        let (rows, cols) = t.as_matrix_dims()?;
        Ok(self.push(
            t.data().to_vec(),
            rows,
            cols,
            Op::Param {
                name: name.to_string(),
                shape: t.shape().to_vec(),
            },
            &[],
        ))
    }

    /// `W x + b` for `W: m×n`, `b: m`, `x: n`.
    pub fn affine(&mut self, w: Var, b: Var, x: Var) -> Result<Var> {
        let (rows, cols) = {
            let n = &self.nodes[w.0];
            (n.rows, n.cols)
        };
        let b_len = self.vector_len(b, "b")?;
        if b_len != rows {
            return Err(Error::dim("b", rows, b_len));
        }
        let x_len = self.vector_len(x, "x")?;
        if x_len != cols {
            return Err(Error::dim("x", cols, x_len));
        }
        let out = affine_kernel(
            &self.nodes[w.0].value,
            rows,
            cols,
            &self.nodes[b.0].value,
            &self.nodes[x.0].value,
        );
        Ok(self.push(out, rows, 1, Op::Affine { w, b, x }, &[w, b, x]))
    }

    pub fn activation(&mut self, kind: Activation, input: Var) -> Var {
        let n = &self.nodes[input.0];
        let (rows, cols) = (n.rows, n.cols);
        let out: Vec<f64> = n.value.iter().map(|&x| kind.apply(x)).collect();
        self.push(out, rows, cols, Op::Act { kind, input }, &[input])
    }

    pub fn tanh(&mut self, input: Var) -> Var {
        self.activation(Activation::Tanh, input)
    }

    pub fn sigmoid(&mut self, input: Var) -> Var {
        self.activation(Activation::Sigmoid, input)
    }

    pub fn concat(&mut self, parts: &[Var]) -> Result<Var> {
        let mut out = Vec::new();
        for (i, &p) in parts.iter().enumerate() {
            self.vector_len(p, &format!("concat part {i}"))?;
            out.extend_from_slice(&self.nodes[p.0].value);
        }
        let len = out.len();
        Ok(self.push(out, len, 1, Op::Concat(parts.to_vec()), parts))
    }

    pub fn slice(&mut self, input: Var, start: usize, len: usize) -> Result<Var> {
        let n = self.vector_len(input, "slice input")?;
        if start + len > n || len == 0 {
            return Err(Error::dim(
                "slice range",
                format!("nonempty range within 0..{n}"),
                format!("{start}..{}", start + len),
            ));
        }
        let out = self.nodes[input.0].value[start..start + len].to_vec();
        Ok(self.push(out, len, 1, Op::Slice { input, start }, &[input]))
    }

    fn check_same(&self, a: Var, b: Var, operand: &str) -> Result<(usize, usize)> {
        let (na, nb) = (&self.nodes[a.0], &self.nodes[b.0]);
        if (na.rows, na.cols) != (nb.rows, nb.cols) {
            return Err(Error::dim(
                operand,
                format!("{}x{}", na.rows, na.cols),
                format!("{}x{}", nb.rows, nb.cols),
            ));
        }
        Ok((na.rows, na.cols))
    }

    pub fn add(&mut self, a: Var, b: Var) -> Result<Var> {
        let (rows, cols) = self.check_same(a, b, "add rhs")?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x + y)
            .collect();
        Ok(self.push(out, rows, cols, Op::Add(a, b), &[a, b]))
    }

    /// Elementwise product.
    pub fn mul(&mut self, a: Var, b: Var) -> Result<Var> {
        let (rows, cols) = self.check_same(a, b, "mul rhs")?;
        let out = self.nodes[a.0]
            .value
            .iter()
            .zip(&self.nodes[b.0].value)
            .map(|(x, y)| x * y)
            .collect();
        Ok(self.push(out, rows, cols, Op::Mul(a, b), &[a, b]))
    }

    /// Scalar cross-entropy node of `softmax(logits)` against `label`.
    pub fn softmax_ce(&mut self, logits: Var, label: usize) -> Result<Var> {
        self.vector_len(logits, "logits")?;
        let (loss, probs) = softmax_cross_entropy(&self.nodes[logits.0].value, label)?;
        Ok(self.push(
            vec![loss],
            1,
            1,
            Op::SoftmaxCe { logits, label, probs },
            &[logits],
        ))
    }

    /// Sum of scalar nodes.
    pub fn sum(&mut self, terms: &[Var]) -> Result<Var> {
        let mut total = 0.0;
        for &t in terms {
            total += self.scalar(t)?;
        }
        Ok(self.push(vec![total], 1, 1, Op::Sum(terms.to_vec()), terms))
    }

    pub fn scale(&mut self, input: Var, factor: f64) -> Var {
        let n = &self.nodes[input.0];
        let (rows, cols) = (n.rows, n.cols);
        let out = n.value.iter().map(|x| x * factor).collect();
        self.push(out, rows, cols, Op::Scale(input, factor), &[input])
    }

    /// Reverse pass from a scalar `loss`. Each recorded node is visited once,
    /// newest first.
    pub fn backward(&self, loss: Var) -> Result<Gradients> {
        if !self.recording {
            return Err(Error::Contract("backward on a non-recording tape".into()));
        }
        self.scalar(loss)?;
        let mut grads: Vec<Option<Vec<f64>>> = vec![None; loss.0 + 1];
        grads[loss.0] = Some(vec![1.0]);
        let mut out = Gradients::default();

        for idx in (0..=loss.0).rev() {
            let Some(g) = grads[idx].take() else { continue };
            let node = &self.nodes[idx];
            match &node.op {
                Op::Leaf => {}
                Op::Param { name, shape } => {
                    let t = Tensor::new(shape.clone(), g)?;
                    match out.by_name.get_mut(name) {
                        Some(acc) => {
                            for (a, b) in acc.data_mut().iter_mut().zip(t.data()) {
                                *a += b;
                            }
                        }
                        None => out.insert(name, t),
                    }
                }
                Op::Affine { w, b, x } => {
                    let wn = &self.nodes[w.0];
                    let (rows, cols) = (wn.rows, wn.cols);
                    if wn.requires_grad {
                        let xv = &self.nodes[x.0].value;
                        let gw = grad_slot(&mut grads, *w, rows * cols);
                        for r in 0..rows {
                            let gr = g[r];
                            if gr != 0.0 {
                                let row = &mut gw[r * cols..(r + 1) * cols];
                                for (slot, xc) in row.iter_mut().zip(xv) {
                                    *slot += gr * xc;
                                }
                            }
                        }
                    }
                    if self.nodes[b.0].requires_grad {
                        let gb = grad_slot(&mut grads, *b, rows);
                        for (slot, gr) in gb.iter_mut().zip(&g) {
                            *slot += gr;
                        }
                    }
                    if self.nodes[x.0].requires_grad {
                        let wv = &self.nodes[w.0].value;
                        let gx = grad_slot(&mut grads, *x, cols);
                        for r in 0..rows {
                            let gr = g[r];
                            if gr != 0.0 {
                                let row = &wv[r * cols..(r + 1) * cols];
                                for (slot, wrc) in gx.iter_mut().zip(row) {
                                    *slot += gr * wrc;
                                }
                            }
                        }
                    }
                }
                Op::Act { kind, input } => {
                    if self.nodes[input.0].requires_grad {
                        let gi = grad_slot(&mut grads, *input, g.len());
                        for ((slot, gy), y) in gi.iter_mut().zip(&g).zip(&node.value) {
                            *slot += gy * kind.derivative_from_output(*y);
                        }
                    }
                }
                Op::Concat(parts) => {
                    let mut offset = 0;
                    for p in parts {
                        let len = self.nodes[p.0].value.len();
                        if self.nodes[p.0].requires_grad {
                            let gp = grad_slot(&mut grads, *p, len);
                            for (slot, gv) in gp.iter_mut().zip(&g[offset..offset + len]) {
                                *slot += gv;
                            }
                        }
                        offset += len;
                    }
                }
                Op::Slice { input, start } => {
                    if self.nodes[input.0].requires_grad {
                        let len = self.nodes[input.0].value.len();
                        let gi = grad_slot(&mut grads, *input, len);
                        for (slot, gv) in gi[*start..*start + g.len()].iter_mut().zip(&g) {
                            *slot += gv;
                        }
                    }
                }
                Op::Add(a, b) => {
                    for v in [a, b] {
                        if self.nodes[v.0].requires_grad {
                            let gv = grad_slot(&mut grads, *v, g.len());
                            for (slot, gi) in gv.iter_mut().zip(&g) {
                                *slot += gi;
                            }
                        }
                    }
                }
                Op::Mul(a, b) => {
                    for (v, other) in [(a, b), (b, a)] {
                        if self.nodes[v.0].requires_grad {
                            let ov = &self.nodes[other.0].value;
                            let gv = grad_slot(&mut grads, *v, g.len());
                            for ((slot, gi), o) in gv.iter_mut().zip(&g).zip(ov) {
                                *slot += gi * o;
                            }
                        }
                    }
                }
                Op::SoftmaxCe { logits, label, probs } => {
                    if self.nodes[logits.0].requires_grad {
                        let scale = g[0];
                        let gl = grad_slot(&mut grads, *logits, probs.len());
                        for (k, (slot, p)) in gl.iter_mut().zip(probs).enumerate() {
                            let onehot = if k == *label { 1.0 } else { 0.0 };
                            *slot += scale * (p - onehot);
                        }
                    }
                }
                Op::Sum(terms) => {
                    for t in terms {
                        if self.nodes[t.0].requires_grad {
                            grad_slot(&mut grads, *t, 1)[0] += g[0];
                        }
                    }
                }
                Op::Scale(input, factor) => {
                    if self.nodes[input.0].requires_grad {
                        let gi = grad_slot(&mut grads, *input, g.len());
                        for (slot, gv) in gi.iter_mut().zip(&g) {
                            *slot += gv * factor;
                        }
                    }
                }
            }
        }
        Ok(out)
    }
}

fn grad_slot(grads: &mut [Option<Vec<f64>>], v: Var, len: usize) -> &mut Vec<f64> {
    grads[v.0].get_or_insert_with(|| vec![0.0; len])
}

/// Parameters registered on a tape, looked up by name.
#[derive(Debug, Default, Clone)]
pub struct ParamVars {
    vars: BTreeMap<String, Var>,
}

impl ParamVars {
    /// Registers every entry of `params`: names in `trainable` (or all of them
    /// when `trainable` is `None`) as parameters, the rest as constants.
    pub fn register(
        tape: &mut Tape,
        params: &ParamSet,
        trainable: Option<&dyn Fn(&str) -> bool>,
    ) -> Result<Self> {
        let mut vars = BTreeMap::new();
        for (name, t) in params.iter() {
            let is_param = trainable.is_none_or(|f| f(name));
            let v = if is_param {
                tape.param(name, t)?
            } else {
                tape.constant_tensor(t)?
            };
            vars.insert(name.to_string(), v);
        }
        Ok(ParamVars { vars })
    }

    /// Registers everything as constants.
    pub fn constants(tape: &mut Tape, params: &ParamSet) -> Result<Self> {
        let none = |_: &str| false;
        Self::register(tape, params, Some(&none))
    }

    pub fn get(&self, name: &str) -> Result<Var> {
        self.vars
            .get(name)
            .copied()
            .ok_or_else(|| Error::Contract(format!("parameter `{name}` is not registered")))
    }

    pub fn insert(&mut self, name: &str, v: Var) {
        self.vars.insert(name.to_string(), v);
    }
}
