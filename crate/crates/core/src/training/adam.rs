use crate::numcore::{Matrix, ParamStore};
use crate::{Error, Result};

pub const BETA1: f64 = 0.9;
pub const BETA2: f64 = 0.999;
pub const EPSILON: f64 = 1e-8;

/// Adam with bias correction; moments mirror the parameter blocks.
#[derive(Clone, Debug)]
pub struct Adam {
    pub lr: f64,
    pub step: u64,
    m: Vec<Matrix>,
    v: Vec<Matrix>,
}

impl Adam {
    pub fn new(store: &ParamStore, lr: f64) -> Self {
        Self { lr, step: 0, m: store.zeros_like(), v: store.zeros_like() }
    }

    pub fn moments(&self) -> (&[Matrix], &[Matrix]) {
        (&self.m, &self.v)
    }

    /// Applies one update. Nothing changes if any gradient is non-finite.
    pub fn apply(&mut self, store: &mut ParamStore, grads: &[Matrix]) -> Result<()> {
        assert_eq!(grads.len(), store.len(), "one gradient per block");
        for (block, g) in store.blocks().iter().zip(grads) {
            if !g.is_finite() {
                return Err(Error::NonFiniteGradient { block: block.name.clone() });
            }
        }
        self.step += 1;
        let c1 = 1.0 - BETA1.powi(self.step as i32);
        let c2 = 1.0 - BETA2.powi(self.step as i32);
        for (k, block) in store.blocks_mut().iter_mut().enumerate() {
            let (m, v, g) = (self.m[k].as_mut_slice(), self.v[k].as_mut_slice(), grads[k].as_slice());
            for (i, p) in block.value.as_mut_slice().iter_mut().enumerate() {
                m[i] = BETA1 * m[i] + (1.0 - BETA1) * g[i];
                v[i] = BETA2 * v[i] + (1.0 - BETA2) * g[i] * g[i];
                let m_hat = m[i] / c1;
                let v_hat = v[i] / c2;
                *p -= self.lr * m_hat / (v_hat.sqrt() + EPSILON);
            }
        }
        Ok(())
    }
}
