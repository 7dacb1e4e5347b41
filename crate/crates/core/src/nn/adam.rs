use super::model::{Gradients, ModelParams};
use super::tensor::Real;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First/second moment estimates and the step counter.
#[derive(Debug, Clone, PartialEq)]
pub struct AdamState<T> {
    pub m: Vec<T>,
    pub v: Vec<T>,
    pub t: u64,
}

impl<T: Real> AdamState<T> {
    pub fn new(len: usize) -> Self {
        Self {
            m: vec![T::zero(); len],
            v: vec![T::zero(); len],
            t: 0,
        }
    }
}

/// One bias-corrected Adam update, in place.
pub fn adam_step<T: Real>(
    params: &mut ModelParams<T>,
    grads: &Gradients<T>,
    state: &mut AdamState<T>,
    cfg: &AdamConfig,
) -> Result<()> {
    let n = params.len();
    if grads.len() != n || state.m.len() != n || state.v.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "adam: params {n}, grads {}, state {}",
            grads.len(),
            state.m.len()
        )));
    }
    state.t += 1;
    let t = state.t as i32;
    let b1 = T::of(cfg.beta1);
    let b2 = T::of(cfg.beta2);
    let c1 = T::of(1.0 - cfg.beta1.powi(t));
    let c2 = T::of(1.0 - cfg.beta2.powi(t));
    let lr = T::of(cfg.lr);
    let eps = T::of(cfg.eps);
    let one = T::one();
    for (((p, &g), m), v) in params
        .data_mut()
        .iter_mut()
        .zip(grads.data())
        .zip(state.m.iter_mut())
        .zip(state.v.iter_mut())
    {
        *m = b1 * *m + (one - b1) * g;
        *v = b2 * *v + (one - b2) * g * g;
        let m_hat = *m / c1;
        let v_hat = *v / c2;
        *p = *p - lr * m_hat / (v_hat.sqrt() + eps);
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::model::{init_params, Architecture};

    #[test]
    fn zero_gradient_from_fresh_state_is_a_no_op() {
        let mut p: ModelParams<f64> = init_params(Architecture::default(), 1);
        let before = p.clone();
        let g = ModelParams::zeros(*p.arch());
        let mut s = AdamState::new(p.len());
        for _ in 0..5 {
            adam_step(&mut p, &g, &mut s, &AdamConfig::with_lr(1e-3)).unwrap();
        }
        assert_eq!(p, before);
    }

    #[test]
    fn zero_learning_rate_is_a_no_op() {
        let mut p: ModelParams<f32> = init_params(Architecture::default(), 1);
        let before = p.clone();
        let mut g = ModelParams::zeros(*p.arch());
        g.data_mut().iter_mut().enumerate().for_each(|(i, v)| *v = (i % 7) as f32 - 3.0);
        let mut s = AdamState::new(p.len());
        adam_step(&mut p, &g, &mut s, &AdamConfig::with_lr(0.0)).unwrap();
        assert_eq!(p, before);
    }

    #[test]
    fn constant_gradient_steps_match_scalar_recurrence() {
        let arch = Architecture::default();
        let mut p: ModelParams<f64> = ModelParams::zeros(arch);
        let mut g = ModelParams::zeros(arch);
        g.data_mut()[0] = 0.37;
        g.data_mut()[1] = -2.5;
        let cfg = AdamConfig::with_lr(1e-2);
        let mut s = AdamState::new(p.len());
        // independent scalar recurrence
        let (mut m, mut v, mut x) = ([0.0f64; 2], [0.0f64; 2], [0.0f64; 2]);
        let gs = [0.37, -2.5];
        for t in 1..=50 {
            let prev = [p.data()[0], p.data()[1]];
            adam_step(&mut p, &g, &mut s, &cfg).unwrap();
            for k in 0..2 {
                m[k] = 0.9 * m[k] + 0.1 * gs[k];
                v[k] = 0.999 * v[k] + 0.001 * gs[k] * gs[k];
                let mh = m[k] / (1.0 - 0.9f64.powi(t));
                let vh = v[k] / (1.0 - 0.999f64.powi(t));
                x[k] -= 1e-2 * mh / (vh.sqrt() + 1e-8);
                assert!((p.data()[k] - x[k]).abs() < 1e-12);
                let step = p.data()[k] - prev[k];
                assert!((step + 1e-2 * gs[k].signum()).abs() < 1e-8);
            }
        }
    }

    #[test]
    fn mismatched_shapes_error() {
        let mut p: ModelParams<f32> = ModelParams::zeros(Architecture::default());
        let g = p.clone();
        let mut s = AdamState::new(3);
        assert!(adam_step(&mut p, &g, &mut s, &AdamConfig::with_lr(1e-3)).is_err());
    }
}
