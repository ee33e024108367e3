use candle_core::backprop::GradStore;
use candle_core::{DType, Tensor, Var};

use crate::error::{Error, Result};

struct Slot {
    name: String,
    var: Var,
    beta1: f64,
    m: Tensor,
    v: Tensor,
}

/// Adam with per-parameter first-moment decay and exportable moment state.
pub struct Adam {
    slots: Vec<Slot>,
    lr: f64,
    beta2: f64,
    eps: f64,
    step: u64,
}

impl Adam {
    /// `params` carries `(name, var, beta1)` triples.
    pub fn new(params: Vec<(String, Var, f64)>, lr: f64, beta2: f64, eps: f64) -> Result<Self> {
        let slots = params
            .into_iter()
            .map(|(name, var, beta1)| {
                let m = var.zeros_like()?;
                let v = var.zeros_like()?;
                Ok(Slot {
                    name,
                    var,
                    beta1,
                    m,
                    v,
                })
            })
            .collect::<Result<_>>()?;
        Ok(Self {
            slots,
            lr,
            beta2,
            eps,
            step: 0,
        })
    }

    pub fn steps_taken(&self) -> u64 {
        self.step
    }

    pub fn learning_rate(&self) -> f64 {
        self.lr
    }

    pub fn vars(&self) -> impl Iterator<Item = &Var> + Clone {
        self.slots.iter().map(|s| &s.var)
    }

    /// Applies one update. Parameters without a gradient are left untouched.
    pub fn step(&mut self, grads: &GradStore) -> Result<()> {
        self.step += 1;
        let t = self.step as i32;
        for slot in &mut self.slots {
            let Some(g) = grads.get(slot.var.as_tensor()) else {
                continue;
            };
            let g = g.detach();
            slot.m = ((&slot.m * slot.beta1)? + (&g * (1.0 - slot.beta1))?)?;
            slot.v = ((&slot.v * self.beta2)? + (g.sqr()? * (1.0 - self.beta2))?)?;
            let m_hat = (&slot.m / (1.0 - slot.beta1.powi(t)))?;
            let v_hat = (&slot.v / (1.0 - self.beta2.powi(t)))?;
            let update = (m_hat / (v_hat.sqrt()? + self.eps)?)?;
            let next = (slot.var.as_tensor().detach() - (update * self.lr)?)?;
            slot.var.set(&next)?;
        }
        Ok(())
    }

    /// Moment tensors keyed `m.<param>` / `v.<param>`.
    pub fn state(&self) -> Vec<(String, Tensor)> {
        self.slots
            .iter()
            .flat_map(|s| {
                [
                    (format!("m.{}", s.name), s.m.clone()),
                    (format!("v.{}", s.name), s.v.clone()),
                ]
            })
            .collect()
    }

    pub fn load_state(&mut self, step: u64, lookup: impl Fn(&str) -> Option<Tensor>) -> Result<()> {
        for slot in &mut self.slots {
            for (key, target) in [("m", &mut slot.m), ("v", &mut slot.v)] {
                let name = format!("{key}.{}", slot.name);
                let t = lookup(&name).ok_or_else(|| {
                    Error::Validation(format!("optimizer state missing '{name}'"))
                })?;
                if t.dims() != slot.var.dims() {
                    return Err(Error::Shape(format!("optimizer state '{name}' has wrong shape")));
                }
                *target = t.to_dtype(slot.var.dtype())?;
            }
        }
        self.step = step;
        Ok(())
    }
}

/// Rescales the gradients of `vars` so their joint L2 norm is at most `max_norm`.
/// Returns the norm before clipping.
pub fn clip_grad_norm<'a>(
    grads: &mut GradStore,
    vars: impl Iterator<Item = &'a Var> + Clone,
    max_norm: f64,
) -> Result<f64> {
    let mut sq = 0.0f64;
    for var in vars.clone() {
        if let Some(g) = grads.get(var.as_tensor()) {
            sq += g.to_dtype(DType::F64)?.sqr()?.sum_all()?.to_scalar::<f64>()?;
        }
    }
    let norm = sq.sqrt();
    if norm.is_finite() && norm > max_norm {
        let scale = max_norm / (norm + 1e-6);
        for var in vars {
            if let Some(g) = grads.get(var.as_tensor()) {
                let scaled = (g * scale)?;
                grads.insert(var.as_tensor(), scaled);
            }
        }
    }
    Ok(norm)
}
