use serde::{Deserialize, Serialize};

use super::ParamStore;

/// RMSprop hyperparameters.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RmsProp {
    pub lr: f64,
    pub decay: f64,
    pub eps: f64,
}

impl Default for RmsProp {
    fn default() -> Self {
        RmsProp {
            lr: 1e-5,
            decay: 0.99,
            eps: 1e-8,
        }
    }
}

/// One RMSprop update of every parameter holding a gradient; clears grads.
///
/// `acc ← decay·acc + (1−decay)·g²`, `θ ← θ − lr·g/(√acc + eps)`.
pub fn rmsprop_step(params: &mut ParamStore, lr: f64, decay: f64, eps: f64) {
    let ids: Vec<_> = params.ids().collect();
    for id in ids {
        let (t, acc) = params.parts_mut(id);
        let Some(g) = t.grad.take() else { continue };
        for ((w, a), g) in t.values.iter_mut().zip(acc.iter_mut()).zip(&g) {
            *a = decay * *a + (1.0 - decay) * g * g;
            *w -= lr * g / (a.sqrt() + eps);
        }
    }
}
