//! Nadam: Adam with a Nesterov look-ahead on the first moment.

use super::{DuelingNet, Real};

#[derive(Debug, Clone, PartialEq)]
pub struct NadamState<T> {
    pub m: DuelingNet<T>,
    pub v: DuelingNet<T>,
    pub step: u64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<T: Real> NadamState<T> {
    pub fn new(params: &DuelingNet<T>) -> Self {
        Self {
            m: DuelingNet::zeros(params.architecture()),
            v: DuelingNet::zeros(params.architecture()),
            step: 0,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

pub struct Nadam;

impl Nadam {
    /// One update with constant β₁:
    ///
    /// ```text
    /// m ← β₁m + (1−β₁)g          v ← β₂v + (1−β₂)g²
    /// m̂ = β₁m/(1−β₁^{t+1}) + (1−β₁)g/(1−β₁^t)
    /// θ ← θ − lr·m̂ / (√(v/(1−β₂^t)) + ε)
    /// ```
    pub fn step<T: Real>(state: &mut NadamState<T>, params: &mut DuelingNet<T>, grads: &DuelingNet<T>, lr: f64) {
        state.step += 1;
        let t = state.step as i32;
        let (b1, b2) = (state.beta1, state.beta2);
        let c_m = T::from_f64(b1 / (1.0 - b1.powi(t + 1)));
        let c_g = T::from_f64((1.0 - b1) / (1.0 - b1.powi(t)));
        let c_v = T::from_f64(1.0 / (1.0 - b2.powi(t)));
        let (b1t, b2t) = (T::from_f64(b1), T::from_f64(b2));
        let (one_b1, one_b2) = (T::from_f64(1.0 - b1), T::from_f64(1.0 - b2));
        let lr = T::from_f64(lr);
        let eps = T::from_f64(state.eps);
        let it = params.slices_mut().zip(grads.slices()).zip(state.m.slices_mut()).zip(state.v.slices_mut());
        for (((ps, gs), ms), vs) in it {
            for (((p, &g), m), v) in ps.iter_mut().zip(gs).zip(ms.iter_mut()).zip(vs.iter_mut()) {
                *m = b1t * *m + one_b1 * g;
                *v = b2t * *v + one_b2 * g * g;
                let m_hat = c_m * *m + c_g * g;
                let v_hat = c_v * *v;
                *p -= lr * m_hat / (v_hat.sqrt() + eps);
            }
        }
    }
}
