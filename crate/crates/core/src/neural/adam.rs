use super::params::{Gradients, ParamStore};
use super::tensor::Tensor;
use crate::error::{Result, SsgnError};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam moments plus a step-decay learning-rate schedule.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    /// Updates applied so far.
    pub step: u64,
    pub base_lr: f64,
    /// The rate is multiplied by 0.1 once the step passes each milestone.
    pub milestones: Vec<u64>,
}

impl AdamState {
    pub fn new(store: &ParamStore, base_lr: f64, milestones: Vec<u64>) -> Self {
        let zeros = |t: &Tensor| Tensor::zeros(t.shape().to_vec());
        AdamState {
            m: store.iter().map(|(_, t)| zeros(t)).collect(),
            v: store.iter().map(|(_, t)| zeros(t)).collect(),
            step: 0,
            base_lr,
            milestones,
        }
    }

    /// Learning rate used for update number `step` (1-based).
    pub fn lr_at(&self, step: u64) -> f64 {
        let passed = self.milestones.iter().filter(|&&m| step > m).count();
        self.base_lr * 0.1f64.powi(passed as i32)
    }
}

/// One bias-corrected Adam update. Returns the learning rate applied.
/// Nothing is modified when any gradient is non-finite.
pub fn adam_step(store: &mut ParamStore, grads: &Gradients, state: &mut AdamState) -> Result<f64> {
    if state.m.len() != store.len() {
        return Err(SsgnError::Shape(format!(
            "optimizer holds {} moments for {} parameters",
            state.m.len(),
            store.len()
        )));
    }
    for (id, g) in grads.iter() {
        if g.shape() != store.get(id).shape() {
            return Err(SsgnError::Shape(format!(
                "gradient for {} has shape {:?}, parameter {:?}",
                store.name(id),
                g.shape(),
                store.get(id).shape()
            )));
        }
        if !g.is_finite() {
            return Err(SsgnError::NonFinite {
                name: format!("gradient of {}", store.name(id)),
            });
        }
    }
    state.step += 1;
    let t = state.step as i32;
    let lr = state.lr_at(state.step);
    let c1 = 1.0 - BETA1.powi(t);
    let c2 = 1.0 - BETA2.powi(t);
    for (id, g) in grads.iter() {
        let m = state.m[id.index()].data_mut();
        let v = state.v[id.index()].data_mut();
        let p = store.get_mut(id).data_mut();
        for k in 0..p.len() {
            let gk = g.data()[k];
            m[k] = BETA1 * m[k] + (1.0 - BETA1) * gk;
            v[k] = BETA2 * v[k] + (1.0 - BETA2) * gk * gk;
            let mhat = m[k] / c1;
            let vhat = v[k] / c2;
            p[k] -= lr * mhat / (vhat.sqrt() + EPSILON);
        }
    }
    Ok(lr)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn store_with(values: Vec<f64>) -> ParamStore {
        let mut s = ParamStore::new();
        s.add("p", Tensor::row(values));
        s
    }

    #[test]
    fn zero_gradient_leaves_parameters_and_decays_moments() {
        let mut store = store_with(vec![1.0, -2.0]);
        let before = store.clone();
        let mut state = AdamState::new(&store, 1e-3, vec![]);
        state.v[0] = Tensor::row(vec![1.0, 4.0]);
        let g = Gradients::zeros_like(&store);
        adam_step(&mut store, &g, &mut state).unwrap();
        assert_eq!(store, before);
        assert_eq!(state.v[0].data(), &[BETA2, 4.0 * BETA2]);
        assert_eq!(state.m[0].data(), &[0.0, 0.0]);
    }

    #[test]
    fn single_step_matches_hand_computation() {
        let mut store = store_with(vec![1.0]);
        let mut state = AdamState::new(&store, 0.1, vec![]);
        let mut g = Gradients::zeros_like(&store);
        g.accumulate(store.id("p").unwrap(), &[0.5]);
        adam_step(&mut store, &g, &mut state).unwrap();
        // m = 0.05, v = 0.00025; mhat = 0.5, vhat = 0.25; step = 0.1 * 0.5 / (0.5 + 1e-8)
        let expected = 1.0 - 0.1 * 0.5 / (0.5 + 1e-8);
        assert!((store.get(store.id("p").unwrap()).data()[0] - expected).abs() < 1e-15);
        assert!((state.m[0].data()[0] - 0.05).abs() < 1e-15);
        assert!((state.v[0].data()[0] - 0.00025).abs() < 1e-15);
    }

    #[test]
    fn milestone_schedule() {
        let store = store_with(vec![0.0]);
        let state = AdamState::new(&store, 1e-4, vec![10_000, 21_000]);
        assert_eq!(state.lr_at(1), 1e-4);
        assert_eq!(state.lr_at(10_000), 1e-4);
        assert!((state.lr_at(10_001) - 1e-5).abs() < 1e-20);
        assert!((state.lr_at(21_001) - 1e-6).abs() < 1e-21);
    }

    #[test]
    fn non_finite_gradient_names_parameter() {
        let mut store = store_with(vec![0.0]);
        let mut state = AdamState::new(&store, 1e-3, vec![]);
        let mut g = Gradients::zeros_like(&store);
        g.accumulate(store.id("p").unwrap(), &[f64::NAN]);
        let err = adam_step(&mut store, &g, &mut state).unwrap_err();
        assert!(err.to_string().contains("p"));
        assert_eq!(state.step, 0);
    }
}
