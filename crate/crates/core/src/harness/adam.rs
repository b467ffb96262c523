//! Adam optimizer with bias correction; epsilon is added outside the square
//! root: theta -= lr * m_hat / (sqrt(v_hat) + eps).

use serde::{Deserialize, Serialize};

use crate::engine::{ParamStore, Scalar};
use crate::error::{LabError, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AdamConfig {
    pub lr: f64,
    #[serde(default = "default_beta1")]
    pub beta1: f64,
    #[serde(default = "default_beta2")]
    pub beta2: f64,
    #[serde(default = "default_eps")]
    pub eps: f64,
}

fn default_beta1() -> f64 {
    0.9
}
fn default_beta2() -> f64 {
    0.999
}
fn default_eps() -> f64 {
    1e-7
}

impl Default for AdamConfig {
    fn default() -> Self {
        AdamConfig { lr: 1e-3, beta1: 0.9, beta2: 0.999, eps: 1e-7 }
    }
}

impl AdamConfig {
    pub fn with_lr(lr: f64) -> Self {
        AdamConfig { lr, ..Default::default() }
    }
}

#[derive(Debug, Clone)]
pub struct Adam {
    pub cfg: AdamConfig,
    /// First and second moments in f64 regardless of the model scalar, so
    /// the update math is immune to f32 accumulation drift.
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
    pub step: usize,
}

impl Adam {
    pub fn new<T: Scalar>(store: &ParamStore<T>, cfg: AdamConfig) -> Self {
        let shapes: Vec<usize> = store.pids().map(|p| store.get(p).len()).collect();
        Adam {
            cfg,
            m: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            v: shapes.iter().map(|&n| vec![0.0; n]).collect(),
            step: 0,
        }
    }

    /// Applies one update from the gradients accumulated in the store.
    /// A non-finite gradient aborts, naming the offending parameter.
    pub fn step<T: Scalar>(&mut self, store: &mut ParamStore<T>) -> Result<()> {
        self.step += 1;
        let t = self.step as f64;
        let bc1 = 1.0 - self.cfg.beta1.powf(t);
        let bc2 = 1.0 - self.cfg.beta2.powf(t);
        let pids: Vec<_> = store.pids().collect();
        if pids.len() != self.m.len() {
            return Err(LabError::contract(format!(
                "optimizer tracks {} parameters but the store has {}",
                self.m.len(),
                pids.len()
            )));
        }
        for (k, &pid) in pids.iter().enumerate() {
            let name = store.name(pid).to_string();
            let tensor = store.get_mut(pid);
            let has_grad = tensor.grad().is_some();
            let n = tensor.len();
            if self.m[k].len() != n {
                return Err(LabError::contract(format!(
                    "optimizer moment for {name} has {} entries, parameter has {n}",
                    self.m[k].len()
                )));
            }
            for i in 0..n {
                let g = if has_grad { tensor.grad().unwrap()[i].to_f64() } else { 0.0 };
                if !g.is_finite() {
                    return Err(LabError::Aborted(format!(
                        "non-finite gradient in parameter {name} at index {i}"
                    )));
                }
                let m = self.cfg.beta1 * self.m[k][i] + (1.0 - self.cfg.beta1) * g;
                let v = self.cfg.beta2 * self.v[k][i] + (1.0 - self.cfg.beta2) * g * g;
                self.m[k][i] = m;
                self.v[k][i] = v;
                let m_hat = m / bc1;
                let v_hat = v / bc2;
                let delta = self.cfg.lr * m_hat / (v_hat.sqrt() + self.cfg.eps);
                let cur = tensor.data()[i].to_f64();
                tensor.data_mut()[i] = T::from_f64(cur - delta);
            }
        }
        Ok(())
    }
}
