//! SGD and bias-corrected Adam over named weight maps.

use super::{NnError, Tensor};
use serde::{Deserialize, Serialize};
use std::collections::BTreeMap;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Optimizer {
    Sgd { lr: f64 },
    Adam { lr: f64, beta1: f64, beta2: f64, eps: f64 },
}

impl Optimizer {
    pub fn adam(lr: f64) -> Self {
        Optimizer::Adam {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }

    pub fn lr(&self) -> f64 {
        match *self {
            Optimizer::Sgd { lr } | Optimizer::Adam { lr, .. } => lr,
        }
    }
}

/// Adam moment estimates, keyed like the weight map. Empty for SGD.
#[derive(Debug, Clone, Default)]
pub struct OptState {
    step: u64,
    m: BTreeMap<String, Vec<f64>>,
    v: BTreeMap<String, Vec<f64>>,
}

impl OptState {
    pub fn new() -> Self {
        Self::default()
    }
}

/// Applies one update to every weight tensor in place. Every weight must have
/// a gradient of matching shape.
pub fn optimizer_step(
    weights: &mut BTreeMap<String, Tensor>,
    grads: &BTreeMap<String, Tensor>,
    opt: &Optimizer,
    state: &mut OptState,
) -> Result<(), NnError> {
    state.step += 1;
    for (name, w) in weights.iter_mut() {
        let g = grads.get(name).ok_or_else(|| NnError::ShapeMismatch {
            context: format!("no gradient for weight {}", name),
        })?;
        if g.shape() != w.shape() {
            return Err(NnError::ShapeMismatch {
                context: format!(
                    "gradient shape {:?} does not match weight {} shape {:?}",
                    g.shape(),
                    name,
                    w.shape()
                ),
            });
        }
        match *opt {
            Optimizer::Sgd { lr } => {
                for (wv, gv) in w.data_mut().iter_mut().zip(g.data()) {
                    *wv -= lr * gv;
                }
            }
            Optimizer::Adam { lr, beta1, beta2, eps } => {
                let n = w.numel();
                let m = state.m.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
                let v = state.v.entry(name.clone()).or_insert_with(|| vec![0.0; n]);
                let t = state.step as f64;
                let bc1 = 1.0 - beta1.powf(t);
                let bc2 = 1.0 - beta2.powf(t);
                for i in 0..n {
                    let gv = g.data()[i];
                    m[i] = beta1 * m[i] + (1.0 - beta1) * gv;
                    v[i] = beta2 * v[i] + (1.0 - beta2) * gv * gv;
                    let m_hat = m[i] / bc1;
                    let v_hat = v[i] / bc2;
                    w.data_mut()[i] -= lr * m_hat / (v_hat.sqrt() + eps);
                }
            }
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn single(name: &str, v: f64) -> BTreeMap<String, Tensor> {
        let mut m = BTreeMap::new();
        m.insert(name.to_string(), Tensor::from_vec(vec![v]));
        m
    }

    #[test]
    fn sgd_step_subtracts_scaled_gradient() {
        let mut w = single("w", 1.0);
        let g = single("w", 1.0);
        let mut st = OptState::new();
        optimizer_step(&mut w, &g, &Optimizer::Sgd { lr: 0.1 }, &mut st).unwrap();
        assert!((w["w"].data()[0] - 0.9).abs() < 1e-15);
    }

    #[test]
    fn adam_first_step_is_approximately_lr() {
        // First Adam step: m_hat = g, v_hat = g^2, update = lr·g/(|g| + eps').
        for g0 in [0.5, -2.0, 1e-3] {
            let mut w = single("w", 0.0);
            let g = single("w", g0);
            let mut st = OptState::new();
            optimizer_step(&mut w, &g, &Optimizer::adam(0.05), &mut st).unwrap();
            let expected = -0.05 * g0 / (g0.abs() + 1e-8);
            assert!(
                (w["w"].data()[0] - expected).abs() < 1e-9,
                "g={}: {} vs {}",
                g0,
                w["w"].data()[0],
                expected
            );
        }
    }

    #[test]
    fn zero_gradient_leaves_weights_almost_unchanged() {
        let mut w = single("w", 1.0);
        let g = single("w", 0.0);
        let mut st = OptState::new();
        optimizer_step(&mut w, &g, &Optimizer::Sgd { lr: 0.1 }, &mut st).unwrap();
        assert_eq!(w["w"].data()[0], 1.0);

        let mut w = single("w", 1.0);
        let mut st = OptState::new();
        optimizer_step(&mut w, &g, &Optimizer::adam(0.1), &mut st).unwrap();
        assert!((w["w"].data()[0] - 1.0).abs() < 0.1 * 1e-6);
    }

    #[test]
    fn missing_or_mismatched_gradient_rejected() {
        let mut w = single("w", 1.0);
        let mut st = OptState::new();
        let empty = BTreeMap::new();
        assert!(optimizer_step(&mut w, &empty, &Optimizer::Sgd { lr: 0.1 }, &mut st).is_err());

        let mut g = BTreeMap::new();
        g.insert("w".to_string(), Tensor::from_vec(vec![1.0, 2.0]));
        assert!(optimizer_step(&mut w, &g, &Optimizer::Sgd { lr: 0.1 }, &mut st).is_err());
    }
}
