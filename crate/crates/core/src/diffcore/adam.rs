use super::params::NetworkParams;
use super::tensor::Scalar;
use crate::Result;

/// First/second-moment buffers and step counter for Adam.
#[derive(Debug, Clone)]
pub struct AdamState<F> {
    m: Vec<Vec<F>>,
    v: Vec<Vec<F>>,
    t: u64,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl<F: Scalar> AdamState<F> {
    pub fn new(params: &NetworkParams<F>, lr: f64) -> Self {
        let m = params.entries().iter().map(|(_, t)| vec![F::zero(); t.numel()]).collect();
        let v = params.entries().iter().map(|(_, t)| vec![F::zero(); t.numel()]).collect();
        AdamState { m, v, t: 0, lr, beta1: 0.9, beta2: 0.999, eps: 1e-8 }
    }

    pub fn step_count(&self) -> u64 {
        self.t
    }
}

/// Standard Adam update with bias correction; zeroes gradients afterward.
pub fn adam_step<F: Scalar>(params: &mut NetworkParams<F>, state: &mut AdamState<F>) -> Result<()> {
    params.require_grads()?;
    state.t += 1;
    let t = state.t as i32;
    let b1 = F::from_f64(state.beta1).unwrap();
    let b2 = F::from_f64(state.beta2).unwrap();
    let lr = F::from_f64(state.lr).unwrap();
    let eps = F::from_f64(state.eps).unwrap();
    let one = F::one();
    let bc1 = one - b1.powi(t);
    let bc2 = one - b2.powi(t);
    for (idx, (_, tensor)) in params.entries_mut().iter_mut().enumerate() {
        let n = tensor.numel();
        // Split borrows: read grad, write data.
        let grads = tensor.grad().expect("checked above").to_vec();
        let m = &mut state.m[idx];
        let v = &mut state.v[idx];
        let data = tensor.data_mut();
        for i in 0..n {
            let g = grads[i];
            m[i] = b1 * m[i] + (one - b1) * g;
            v[i] = b2 * v[i] + (one - b2) * g * g;
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            data[i] = data[i] - lr * mhat / (vhat.sqrt() + eps);
        }
        tensor.ensure_grad().fill(F::zero());
    }
    Ok(())
}
