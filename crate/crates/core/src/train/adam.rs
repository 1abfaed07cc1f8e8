use crate::autodiff::Tensor;
use crate::error::{Error, Result};
use crate::model::EncoderParams;

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment estimates, one pair per parameter tensor.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Vec<Tensor>,
    pub v: Vec<Tensor>,
    pub step: u64,
}

impl AdamState {
    pub fn new(params: &EncoderParams) -> Self {
        let zeros: Vec<Tensor> = params.tensors().iter().map(|t| Tensor::zeros(t.rows(), t.cols())).collect();
        Self {
            m: zeros.clone(),
            v: zeros,
            step: 0,
        }
    }

    /// Checks that the moments line up with `params`.
    pub fn check_matches(&self, params: &EncoderParams) -> Result<()> {
        let ok = self.m.len() == params.tensors().len()
            && self.v.len() == self.m.len()
            && params
                .tensors()
                .iter()
                .zip(self.m.iter().zip(&self.v))
                .all(|(p, (m, v))| p.shape() == m.shape() && p.shape() == v.shape());
        if ok {
            Ok(())
        } else {
            Err(Error::Checkpoint("optimizer state does not match the parameters".into()))
        }
    }
}

/// One bias-corrected Adam update. Parameters are left untouched when any
/// gradient is not finite.
pub fn adam_step(params: &mut EncoderParams, grads: &[Tensor], state: &mut AdamState, cfg: &AdamConfig) -> Result<()> {
    state.check_matches(params)?;
    if grads.len() != params.tensors().len() {
        return Err(Error::shape(
            "adam_step",
            format!("{} gradients for {} parameters", grads.len(), params.tensors().len()),
        ));
    }
    for ((name, p), g) in params.names().iter().zip(params.tensors()).zip(grads) {
        if g.shape() != p.shape() {
            return Err(Error::shape("adam_step", format!("gradient of {name} is {:?}, parameter is {:?}", g.shape(), p.shape())));
        }
        if !g.is_finite() {
            return Err(Error::NonFinite(format!("gradient of parameter {name}")));
        }
    }

    state.step += 1;
    let t = state.step as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (i, p) in params.tensors_mut().iter_mut().enumerate() {
        let g = grads[i].data();
        let m = state.m[i].data_mut();
        let v = state.v[i].data_mut();
        for (j, w) in p.data_mut().iter_mut().enumerate() {
            m[j] = cfg.beta1 * m[j] + (1.0 - cfg.beta1) * g[j];
            v[j] = cfg.beta2 * v[j] + (1.0 - cfg.beta2) * g[j] * g[j];
            let m_hat = m[j] / c1;
            let v_hat = v[j] / c2;
            *w -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}
