use serde::{Deserialize, Serialize};

use super::network::Network;
use crate::error::{Error, Result};

/// Bias-corrected Adam with per-parameter moments.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Adam {
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    pub step: u64,
    #[serde(skip)]
    pub(crate) m: Vec<Vec<f64>>,
    #[serde(skip)]
    pub(crate) v: Vec<Vec<f64>>,
}

impl Adam {
    pub fn new(lr: f64) -> Self {
        Self {
            lr,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            step: 0,
            m: Vec::new(),
            v: Vec::new(),
        }
    }

    /// First and second moments, one vector per parameter group.
    pub fn moments(&self) -> (&[Vec<f64>], &[Vec<f64>]) {
        (&self.m, &self.v)
    }

    /// One update of `params` along `grads` (paired by group).
    pub fn update(&mut self, pairs: Vec<(&mut [f64], &[f64])>) -> Result<()> {
        if self.m.is_empty() {
            self.m = pairs.iter().map(|(p, _)| vec![0.0; p.len()]).collect();
            self.v = self.m.clone();
        }
        if self.m.len() != pairs.len() || self.m.iter().zip(&pairs).any(|(m, (p, g))| m.len() != p.len() || g.len() != p.len()) {
            return Err(Error::Dimension("optimizer state does not match the parameters".into()));
        }
        self.step += 1;
        let t = self.step as i32;
        let c1 = 1.0 - self.beta1.powi(t);
        let c2 = 1.0 - self.beta2.powi(t);
        for ((params, grads), (m, v)) in pairs.into_iter().zip(self.m.iter_mut().zip(self.v.iter_mut())) {
            for i in 0..params.len() {
                let g = grads[i];
                m[i] = self.beta1 * m[i] + (1.0 - self.beta1) * g;
                v[i] = self.beta2 * v[i] + (1.0 - self.beta2) * g * g;
                let mh = m[i] / c1;
                let vh = v[i] / c2;
                params[i] -= self.lr * mh / (vh.sqrt() + self.eps);
            }
        }
        Ok(())
    }

    pub fn step_network(&mut self, net: &mut Network) -> Result<()> {
        self.update(net.params_and_grads())
    }
}
