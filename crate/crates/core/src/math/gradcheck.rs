//! Central finite-difference verification of tape gradients.

use serde::Serialize;

use super::{ParamStore, Tape, Var};
use crate::error::{Error, Result};

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckEntry {
    pub name: String,
    pub worst_error: f64,
    /// Flat index of the element with the worst error.
    pub worst_index: usize,
}

#[derive(Clone, Debug, Serialize)]
pub struct GradCheckReport {
    pub tolerance: f64,
    pub entries: Vec<GradCheckEntry>,
}

impl GradCheckReport {
    pub fn worst(&self) -> f64 {
        self.entries.iter().map(|e| e.worst_error).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.worst() < self.tolerance
    }
}

/// `|a - n| / max(1, |a|, |n|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / 1f64.max(analytic.abs()).max(numeric.abs())
}

fn register<'a>(tape: &mut Tape<'a>, params: &'a ParamStore) -> Vec<Var> {
    params.iter().map(|(id, _, v)| tape.param(id, v)).collect()
}

fn evaluate<F>(params: &ParamStore, loss_fn: &mut F) -> Result<f64>
where
    F: for<'a> FnMut(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let mut tape = Tape::inference();
    let vars = register(&mut tape, params);
    let loss = loss_fn(&mut tape, &vars)?;
    let v = tape.value(loss);
    if v.shape() != (1, 1) {
        return Err(Error::Contract("grad_check closure must return a scalar".into()));
    }
    Ok(v.get(0, 0))
}

/// Compares analytic gradients of `loss_fn` with central differences of step
/// `step` for every element of every parameter.
///
/// `loss_fn` receives the tape and one leaf per parameter in store order. It
/// must be deterministic; two evaluations at the same point that differ are
/// rejected.
pub fn grad_check<F>(params: &ParamStore, step: f64, tolerance: f64, mut loss_fn: F) -> Result<GradCheckReport>
where
    F: for<'a> FnMut(&mut Tape<'a>, &[Var]) -> Result<Var>,
{
    let first = evaluate(params, &mut loss_fn)?;
    let second = evaluate(params, &mut loss_fn)?;
    if first.to_bits() != second.to_bits() {
        return Err(Error::Contract(format!(
            "loss closure is not deterministic ({first} vs {second})"
        )));
    }

    let analytic = {
        let mut tape = Tape::new();
        let vars = register(&mut tape, params);
        let loss = loss_fn(&mut tape, &vars)?;
        tape.backward(loss)?.into_dense(params)
    };

    let mut probe = params.clone();
    let mut entries = Vec::with_capacity(params.len());
    for id in params.ids() {
        let mut worst = 0.0f64;
        let mut worst_index = 0;
        for k in 0..params.get(id).len() {
            let orig = params.get(id).data()[k];
            probe.get_mut(id).data_mut()[k] = orig + step;
            let plus = evaluate(&probe, &mut loss_fn)?;
            probe.get_mut(id).data_mut()[k] = orig - step;
            let minus = evaluate(&probe, &mut loss_fn)?;
            probe.get_mut(id).data_mut()[k] = orig;
            let numeric = (plus - minus) / (2.0 * step);
            let err = relative_error(analytic[id.index()].data()[k], numeric);
            if err > worst {
                worst = err;
                worst_index = k;
            }
        }
        entries.push(GradCheckEntry {
            name: params.name(id).to_string(),
            worst_error: worst,
            worst_index,
        });
    }
    Ok(GradCheckReport { tolerance, entries })
}
