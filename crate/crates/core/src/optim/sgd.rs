use indexmap::IndexMap;

use crate::error::{shape_err, Result};
use crate::unet::ParamStore;

/// One Nesterov update in place: `v = m*v + g; w -= lr*(g + m*v)`.
pub fn sgd_nesterov_step(w: &mut [f64], g: &[f64], v: &mut [f64], lr: f64, momentum: f64) -> Result<()> {
    if w.len() != g.len() || w.len() != v.len() {
        return Err(shape_err!(
            "sgd step: weights {}, grads {}, velocity {} elements",
            w.len(),
            g.len(),
            v.len()
        ));
    }
    for ((wi, &gi), vi) in w.iter_mut().zip(g).zip(v.iter_mut()) {
        *vi = momentum * *vi + gi;
        *wi -= lr * (gi + momentum * *vi);
    }
    Ok(())
}

/// Optimizer state for a parameter store: one velocity buffer per tensor.
#[derive(Debug, Clone)]
pub struct SgdNesterov {
    pub momentum: f64,
    velocity: IndexMap<String, Vec<f64>>,
}

impl SgdNesterov {
    pub fn new(momentum: f64) -> Self {
        SgdNesterov {
            momentum,
            velocity: IndexMap::new(),
        }
    }

    pub fn with_velocity(momentum: f64, velocity: IndexMap<String, Vec<f64>>) -> Self {
        SgdNesterov { momentum, velocity }
    }

    pub fn velocity(&self) -> &IndexMap<String, Vec<f64>> {
        &self.velocity
    }

    /// Applies accumulated gradients to every tensor in the store and
    /// replaces each with a fresh leaf. Tensors without a gradient are
    /// treated as having a zero gradient.
    pub fn step(&mut self, params: &mut ParamStore, lr: f64) -> Result<()> {
        let updates: Vec<(String, Vec<f64>, Vec<f64>)> = params
            .iter()
            .map(|(k, t)| {
                let g = t.grad().unwrap_or_else(|| vec![0.0; t.numel()]);
                (k.clone(), t.to_vec(), g)
            })
            .collect();
        for (k, mut w, g) in updates {
            let v = self.velocity.entry(k.clone()).or_insert_with(|| vec![0.0; w.len()]);
            sgd_nesterov_step(&mut w, &g, v, lr, self.momentum)?;
            params.set(&k, w)?;
        }
        Ok(())
    }
}
