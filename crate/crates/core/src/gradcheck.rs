//! Central-difference verification of tape gradients.

use crate::error::{Error, Result};
use crate::tape::{ParamVars, Tape, Var};
use crate::tensor::ParamSet;

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub max_relative_error: f64,
    /// Parameter name and flat index where the maximum occurred.
    pub worst: Option<(String, usize)>,
    pub checked: usize,
}

/// Compares the tape gradient of `build` against central differences for
/// every scalar in `params`.
///
/// `build` records a scalar loss on the tape from the registered params.
/// Relative error is `|a - f| / max(|a|, |f|, 1e-8)`.
pub fn grad_check<F>(params: &ParamSet, eps: f64, build: F) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &ParamVars) -> Result<Var>,
{
    if !(eps.is_finite() && eps > 0.0) {
        return Err(Error::Contract(format!("eps must be positive, got {eps}")));
    }
    let mut tape = Tape::new();
    let vars = ParamVars::register(&mut tape, params, None)?;
    let loss = build(&mut tape, &vars)?;
    finite(tape.scalar(loss)?)?;
    let analytic = tape.backward(loss)?.dense_for(params);

    let eval = |p: &ParamSet| -> Result<f64> {
        let mut tape = Tape::untaped();
        let vars = ParamVars::register(&mut tape, p, None)?;
        let loss = build(&mut tape, &vars)?;
        finite(tape.scalar(loss)?)
    };

    let mut report = GradCheckReport {
        max_relative_error: 0.0,
        worst: None,
        checked: 0,
    };
    let mut probe = params.clone();
    for (name, tensor) in params.iter() {
        let grad = analytic.require(name)?.data().to_vec();
        for (i, &ai) in grad.iter().enumerate() {
            let original = tensor.data()[i];
            probe.get_mut(name).expect("cloned").data_mut()[i] = original + eps;
            let up = eval(&probe)?;
            probe.get_mut(name).expect("cloned").data_mut()[i] = original - eps;
            let down = eval(&probe)?;
            probe.get_mut(name).expect("cloned").data_mut()[i] = original;
            let numeric = (up - down) / (2.0 * eps);
            let err = (ai - numeric).abs() / ai.abs().max(numeric.abs()).max(1e-8);
            report.checked += 1;
            if err > report.max_relative_error || report.worst.is_none() {
                report.max_relative_error = err;
                report.worst = Some((name.to_string(), i));
            }
        }
    }
    Ok(report)
}

fn finite(x: f64) -> Result<f64> {
    if x.is_finite() {
        Ok(x)
    } else {
        Err(Error::Numeric(format!("non-finite loss {x}")))
    }
}
