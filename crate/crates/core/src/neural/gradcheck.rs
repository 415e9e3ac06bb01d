//! Central finite-difference check of tape gradients.

use super::params::ParamStore;
use super::tape::{Tape, Var};
use crate::error::Result;
use crate::exec::Exec;

pub const FD_STEP: f64 = 1e-4;

#[derive(Debug, Clone, PartialEq)]
pub struct TensorCheck {
    pub name: String,
    /// `||analytic - numeric|| / max(||analytic||, ||numeric||, 1e-7)`.
    pub rel_err: f64,
    pub analytic_norm: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct GradReport {
    pub tensors: Vec<TensorCheck>,
    pub max_rel_err: f64,
}

impl GradReport {
    pub fn worst(&self) -> Option<&TensorCheck> {
        self.tensors
            .iter()
            .max_by(|a, b| a.rel_err.total_cmp(&b.rel_err))
    }
}

/// Compares the tape gradient of the scalar built by `f` against central
/// differences with step [`FD_STEP`], parameter tensor by tensor.
pub fn check_gradients<F>(store: &ParamStore, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape) -> Result<Var> + Sync,
{
    check_gradients_with(store, Exec::default(), f)
}

pub fn check_gradients_with<F>(store: &ParamStore, exec: Exec, f: F) -> Result<GradReport>
where
    F: Fn(&mut Tape) -> Result<Var> + Sync,
{
    let analytic = {
        let mut tape = Tape::new(store);
        let out = f(&mut tape)?;
        tape.backward(out)
    };
    let coords: Vec<(usize, usize)> = store
        .ids()
        .flat_map(|id| (0..store.get(id).len()).map(move |k| (id.index(), k)))
        .collect();
    let eval = |s: &ParamStore| -> Result<f64> {
        let mut tape = Tape::new(s);
        let out = f(&mut tape)?;
        Ok(tape.value(out).item())
    };
    let ids: Vec<_> = store.ids().collect();
    let numeric = exec.try_map_range(coords.len(), |c| {
        let (p, k) = coords[c];
        let mut s = store.clone();
        let orig = s.get(ids[p]).data()[k];
        s.get_mut(ids[p]).data_mut()[k] = orig + FD_STEP;
        let plus = eval(&s)?;
        s.get_mut(ids[p]).data_mut()[k] = orig - FD_STEP;
        let minus = eval(&s)?;
        Ok((plus - minus) / (2.0 * FD_STEP))
    })?;

    let mut tensors = Vec::new();
    let mut offset = 0;
    for id in store.ids() {
        let a = analytic.get(id).data();
        let n = &numeric[offset..offset + a.len()];
        offset += a.len();
        let diff = a
            .iter()
            .zip(n)
            .map(|(x, y)| (x - y).powi(2))
            .sum::<f64>()
            .sqrt();
        let na = a.iter().map(|x| x * x).sum::<f64>().sqrt();
        let nn = n.iter().map(|x| x * x).sum::<f64>().sqrt();
        tensors.push(TensorCheck {
            name: store.name(id).to_string(),
            rel_err: diff / na.max(nn).max(1e-7),
            analytic_norm: na,
        });
    }
    let max_rel_err = tensors.iter().map(|t| t.rel_err).fold(0.0, f64::max);
    Ok(GradReport {
        tensors,
        max_rel_err,
    })
}
