use crate::error::{Result, TensorError};
use crate::store::ParameterStore;

#[derive(Clone, Copy, Debug, PartialEq)]
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
            ..Self::default()
        }
    }
}

impl Default for AdamConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// One bias-corrected Adam update over every parameter, then clears the
/// gradients. Fails without touching anything if a gradient is missing.
pub fn adam_step(store: &mut ParameterStore, cfg: &AdamConfig) -> Result<()> {
    if let Some((name, _)) = store.iter().find(|(_, p)| p.grad.is_none()) {
        return Err(TensorError::State(format!("parameter {name:?} has no gradient")));
    }
    store.step += 1;
    let t = store.step as i32;
    let bc1 = 1.0 - cfg.beta1.powi(t);
    let bc2 = 1.0 - cfg.beta2.powi(t);
    for (_, p) in store.iter_mut() {
        let g = p.grad.take().expect("checked above");
        let (m, v) = (p.m.data_mut(), p.v.data_mut());
        for i in 0..g.len() {
            let gi = g.data()[i];
            m[i] = cfg.beta1 * m[i] + (1.0 - cfg.beta1) * gi;
            v[i] = cfg.beta2 * v[i] + (1.0 - cfg.beta2) * gi * gi;
        }
        let (m, v) = (p.m.data(), p.v.data());
        for (i, w) in p.value.data_mut().iter_mut().enumerate() {
            let mhat = m[i] / bc1;
            let vhat = v[i] / bc2;
            *w -= cfg.lr * mhat / (vhat.sqrt() + cfg.eps);
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::Tensor;

    #[test]
    fn first_step_moves_by_lr() {
        let mut s = ParameterStore::new();
        s.insert("p", Tensor::scalar(1.0)).unwrap();
        s.get_mut("p").unwrap().grad = Some(Tensor::scalar(1.0));
        adam_step(&mut s, &AdamConfig::with_lr(0.1)).unwrap();
        // m̂ = 1, v̂ = 1, step = lr / (1 + eps)
        let expected = 1.0 - 0.1 / (1.0 + 1e-8);
        assert!((s.value("p").unwrap().item() - expected).abs() < 1e-15);
        assert!(s.get("p").unwrap().grad.is_none());
    }

    #[test]
    fn zero_gradient_leaves_value() {
        let mut s = ParameterStore::new();
        s.insert("p", Tensor::scalar(0.25)).unwrap();
        s.get_mut("p").unwrap().grad = Some(Tensor::scalar(0.0));
        adam_step(&mut s, &AdamConfig::with_lr(0.1)).unwrap();
        assert_eq!(s.value("p").unwrap().item(), 0.25);
    }

    #[test]
    fn missing_gradient_is_state_error() {
        let mut s = ParameterStore::new();
        s.insert("p", Tensor::scalar(0.25)).unwrap();
        assert!(matches!(
            adam_step(&mut s, &AdamConfig::default()),
            Err(TensorError::State(_))
        ));
        assert_eq!(s.step_count(), 0);
    }
}
