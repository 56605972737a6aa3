use serde::{Deserialize, Serialize};

use super::{Gradients, Model};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct AdamConfig {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig {
            lr: 0.01,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
        }
    }
}

/// First and second moment buffers shaped like the model parameters.
#[derive(Clone, Debug, PartialEq)]
pub struct AdamState {
    pub m: Gradients,
    pub v: Gradients,
    pub step_count: u64,
}

impl AdamState {
    pub fn new(model: &Model) -> Self {
        AdamState {
            m: Gradients::zeros_like(model),
            v: Gradients::zeros_like(model),
            step_count: 0,
        }
    }
}

#[inline]
fn update(p: &mut f64, g: f64, m: &mut f64, v: &mut f64, cfg: &AdamConfig, c1: f64, c2: f64) {
    *m = cfg.beta1 * *m + (1.0 - cfg.beta1) * g;
    *v = cfg.beta2 * *v + (1.0 - cfg.beta2) * g * g;
    let m_hat = *m / c1;
    let v_hat = *v / c2;
    *p -= cfg.lr * m_hat / (v_hat.sqrt() + cfg.eps);
}

/// One bias-corrected Adam update of every parameter.
pub fn adam_step(model: &mut Model, grads: &Gradients, state: &mut AdamState, cfg: &AdamConfig) {
    state.step_count += 1;
    let t = state.step_count as i32;
    let c1 = 1.0 - cfg.beta1.powi(t);
    let c2 = 1.0 - cfg.beta2.powi(t);
    for (l, layer) in model.layers.iter_mut().enumerate() {
        let g = grads.theta[l].as_slice();
        let m = state.m.theta[l].as_mut_slice();
        let v = state.v.theta[l].as_mut_slice();
        for (idx, p) in layer.theta.as_mut_slice().iter_mut().enumerate() {
            update(p, g[idx], &mut m[idx], &mut v[idx], cfg, c1, c2);
        }
        update(
            &mut layer.omega,
            grads.omega[l],
            &mut state.m.omega[l],
            &mut state.v.omega[l],
            cfg,
            c1,
            c2,
        );
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::gnn::LayerParams;
    use crate::linalg::Matrix;

    fn scalar_model(w: f64) -> Model {
        Model {
            layers: vec![LayerParams {
                theta: Matrix::from_vec(1, 1, vec![w]).unwrap(),
                omega: 0.0,
            }],
        }
    }

    fn grad(g: f64) -> Gradients {
        Gradients {
            theta: vec![Matrix::from_vec(1, 1, vec![g]).unwrap()],
            omega: vec![0.0],
        }
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        let mut model = scalar_model(0.3);
        let before = model.clone();
        let mut st = AdamState::new(&model);
        adam_step(&mut model, &grad(0.0), &mut st, &AdamConfig::default());
        assert_eq!(model, before);
        assert_eq!(st.step_count, 1);
    }

    #[test]
    fn first_step_moves_by_lr() {
        let mut model = scalar_model(0.0);
        let mut st = AdamState::new(&model);
        adam_step(&mut model, &grad(1.0), &mut st, &AdamConfig::default());
        // m̂ = 1, v̂ = 1 after bias correction
        let w = model.layers[0].theta[(0, 0)];
        assert!((w + 0.01 / (1.0 + 1e-8)).abs() < 1e-15);
    }

    #[test]
    fn two_constant_steps_follow_recurrence() {
        let cfg = AdamConfig::default();
        let mut model = scalar_model(1.0);
        let mut st = AdamState::new(&model);
        let g = 0.5;
        adam_step(&mut model, &grad(g), &mut st, &cfg);
        adam_step(&mut model, &grad(g), &mut st, &cfg);
        // hand recurrence
        let (mut m, mut v, mut p) = (0.0f64, 0.0f64, 1.0f64);
        for t in 1..=2 {
            m = 0.9 * m + 0.1 * g;
            v = 0.999 * v + 0.001 * g * g;
            let mh = m / (1.0 - 0.9f64.powi(t));
            let vh = v / (1.0 - 0.999f64.powi(t));
            p -= 0.01 * mh / (vh.sqrt() + 1e-8);
        }
        assert!((model.layers[0].theta[(0, 0)] - p).abs() < 1e-15);
        assert!((p - (1.0 - 0.02)).abs() < 1e-9);
    }
}
