//! Naive reference implementations and small fixtures shared by the
//! integration tests. Everything here is written out loop by loop and
//! does not call into the library's numeric code.

#![allow(dead_code)]

use hetlfd::data::{Dataset, Step, Trajectory};
use hetlfd::models::{init_params, ModelSpec};
use hetlfd::tensor::{ParamSet, Tensor};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn naive_affine(w: &Tensor, b: &Tensor, x: &[f64]) -> Vec<f64> {
    let (rows, cols) = (w.shape()[0], w.shape()[1]);
    assert_eq!(cols, x.len());
    let mut out = vec![0.0; rows];
    for r in 0..rows {
        let mut s = 0.0;
        for c in 0..cols {
            s += w.data()[r * cols + c] * x[c];
        }
        out[r] = s + b.data()[r];
    }
    out
}

pub fn naive_sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

/// Cross-entropy without any max shift; fine for moderate logits.
pub fn naive_ce(logits: &[f64], label: usize) -> f64 {
    let total: f64 = logits.iter().map(|z| z.exp()).sum();
    total.ln() - logits[label]
}

/// Returns `(features, logits)` of a `base.*` feedforward net.
pub fn naive_ffn(p: &ParamSet, x: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let mut h = x.to_vec();
    let mut i = 1;
    while let Some(w) = p.get(&format!("base.W{i}")) {
        let b = p.get(&format!("base.b{i}")).unwrap();
        h = naive_affine(w, b, &h).into_iter().map(f64::tanh).collect();
        i += 1;
    }
    let logits = naive_affine(p.get("base.Wout").unwrap(), p.get("base.bout").unwrap(), &h);
    (h, logits)
}

pub fn naive_bnn(p: &ParamSet, omega: &[f64], x: &[f64]) -> Vec<f64> {
    let (mut h, _) = naive_ffn(p, x);
    h.extend_from_slice(omega);
    naive_affine(p.get("head.W").unwrap(), p.get("head.b").unwrap(), &h)
}

/// One LSTM cell update written gate by gate. Returns `(h, c, logits)`.
pub fn naive_lstm_step(p: &ParamSet, h: &[f64], c: &[f64], x: &[f64]) -> (Vec<f64>, Vec<f64>, Vec<f64>) {
    let w = p.get("lstm.W").unwrap();
    let b = p.get("lstm.b").unwrap();
    let hidden = h.len();
    let cols = w.shape()[1];
    assert_eq!(cols, x.len() + hidden);
    let row = |r: usize| -> f64 {
        let mut s = b.data()[r];
        for (j, xj) in x.iter().chain(h.iter()).enumerate() {
            s += w.data()[r * cols + j] * xj;
        }
        s
    };
    let mut h2 = vec![0.0; hidden];
    let mut c2 = vec![0.0; hidden];
    for u in 0..hidden {
        let ig = naive_sigmoid(row(u));
        let fg = naive_sigmoid(row(hidden + u));
        let gg = row(2 * hidden + u).tanh();
        let og = naive_sigmoid(row(3 * hidden + u));
        c2[u] = fg * c[u] + ig * gg;
        h2[u] = og * c2[u].tanh();
    }
    let logits = naive_affine(p.get("out.W").unwrap(), p.get("out.b").unwrap(), &h2);
    (h2, c2, logits)
}

/// Unrolled logits for a whole sequence from the zero state, with `omega`
/// appended to every input.
pub fn naive_blstm(p: &ParamSet, omega: &[f64], xs: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let hidden = p.get("out.W").unwrap().shape()[1];
    let mut h = vec![0.0; hidden];
    let mut c = vec![0.0; hidden];
    let mut out = Vec::new();
    for x in xs {
        let mut input = x.clone();
        input.extend_from_slice(omega);
        let (h2, c2, logits) = naive_lstm_step(p, &h, &c, &input);
        h = h2;
        c = c2;
        out.push(logits);
    }
    out
}

/// Initialized parameters with every entry (biases included) redrawn from
/// Uniform[-1, 1].
pub fn random_params(spec: &ModelSpec, seed: u64) -> ParamSet {
    let template = init_params(spec, seed).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x5eed);
    let mut out = ParamSet::new();
    for (name, t) in template.iter() {
        let data = (0..t.numel()).map(|_| rng.random_range(-1.0..1.0)).collect();
        out.insert(name, Tensor::new(t.shape().to_vec(), data).unwrap());
    }
    out
}

pub fn random_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random_range(-1.0..1.0)).collect()
}

pub fn trajectory(demo: &str, episode: usize, steps: Vec<(Vec<f64>, usize)>) -> Trajectory {
    Trajectory {
        demonstrator_id: demo.to_string(),
        episode_id: format!("e{episode:03}"),
        steps: steps
            .into_iter()
            .map(|(state, action)| Step { state, action })
            .collect(),
    }
}

/// Every demonstrator repeats action `style` (flipped with probability
/// `noise`) on uninformative random states, so only an embedding can tell
/// demonstrators apart.
pub fn style_dataset(styles: &[usize], episodes: usize, len: usize, noise: f64, seed: u64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut trajs = Vec::new();
    for (d, &style) in styles.iter().enumerate() {
        for e in 0..episodes {
            let steps = (0..len)
                .map(|_| {
                    let flip = rng.random::<f64>() < noise;
                    (random_vec(&mut rng, 2), if flip { 1 - style } else { style })
                })
                .collect();
            trajs.push(trajectory(&format!("d{d:02}"), e, steps));
        }
    }
    Dataset::new(2, 2, trajs).unwrap()
}

/// Rewrites the entries of `name` through `f(flat_index, value)`.
pub fn edit_tensor(p: &mut ParamSet, name: &str, f: impl Fn(usize, f64) -> f64) {
    let t = p.get(name).unwrap();
    let data = t.data().iter().enumerate().map(|(i, &v)| f(i, v)).collect();
    let edited = Tensor::new(t.shape().to_vec(), data).unwrap();
    p.insert(name, edited);
}
