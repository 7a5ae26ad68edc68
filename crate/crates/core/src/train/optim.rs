use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::ParamStore;

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPS: f64 = 1e-8;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    #[default]
    Adam,
}

impl fmt::Display for OptimizerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            OptimizerKind::Sgd => "sgd",
            OptimizerKind::Adam => "adam",
        })
    }
}

impl FromStr for OptimizerKind {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "sgd" => Ok(OptimizerKind::Sgd),
            "adam" => Ok(OptimizerKind::Adam),
            other => Err(Error::Config(format!("unknown optimizer '{other}' (expected sgd or adam)"))),
        }
    }
}

/// First-order optimizer. Adam keeps per-parameter moment buffers that
/// persist across [`Optimizer::step`] calls.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    t: i32,
    m: Vec<Vec<f64>>,
    v: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64) -> Self {
        Optimizer { kind, lr, t: 0, m: Vec::new(), v: Vec::new() }
    }

    pub fn steps_taken(&self) -> i32 {
        self.t
    }

    /// Applies one update from the gradients accumulated in `params`.
    /// Parameters without a gradient are treated as having zero gradient.
    pub fn step(&mut self, params: &mut ParamStore) -> Result<()> {
        let tensors = params.tensors_mut();
        if self.kind == OptimizerKind::Adam && self.m.is_empty() {
            self.m = tensors.iter().map(|t| vec![0.0; t.len()]).collect();
            self.v = self.m.clone();
        }
        self.t += 1;
        let (b1, b2) = (ADAM_BETA1, ADAM_BETA2);
        let c1 = 1.0 - b1.powi(self.t);
        let c2 = 1.0 - b2.powi(self.t);
        for (i, t) in tensors.iter_mut().enumerate() {
            let Some(g) = t.grad().map(<[f64]>::to_vec) else { continue };
            if g.len() != t.len() {
                return Err(Error::shape("optimizer", format!("parameter {i} has {} values but {} gradients", t.len(), g.len())));
            }
            match self.kind {
                OptimizerKind::Sgd => {
                    for (p, gi) in t.data_mut().iter_mut().zip(&g) {
                        *p -= self.lr * gi;
                    }
                }
                OptimizerKind::Adam => {
                    let (m, v) = (&mut self.m[i], &mut self.v[i]);
                    if m.len() != g.len() {
                        return Err(Error::shape("optimizer", format!("moment buffer {i} does not match its parameter")));
                    }
                    for (((p, gi), mi), vi) in t.data_mut().iter_mut().zip(&g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        *mi = b1 * *mi + (1.0 - b1) * gi;
                        *vi = b2 * *vi + (1.0 - b2) * gi * gi;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *p -= self.lr * m_hat / (v_hat.sqrt() + ADAM_EPS);
                    }
                }
            }
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Tensor;

    fn store(value: f64, grad: f64) -> ParamStore {
        let mut s = ParamStore::default();
        s.insert("theta", Tensor::scalar(value));
        s.tensors_mut()[0].accumulate_grad(&[grad]).unwrap();
        s
    }

    #[test]
    fn sgd_hand_step() {
        let mut s = store(1.0, 0.5);
        Optimizer::new(OptimizerKind::Sgd, 0.1).step(&mut s).unwrap();
        assert!((s.by_name("theta").unwrap().data()[0] - 0.95).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_leaves_parameters() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::Adam] {
            let mut s = store(1.0, 0.0);
            Optimizer::new(kind, 0.1).step(&mut s).unwrap();
            assert_eq!(s.by_name("theta").unwrap().data()[0], 1.0);
        }
    }

    #[test]
    fn first_adam_step_moves_by_learning_rate() {
        // m̂ = g = 1, v̂ = g² = 1 so Δθ = lr / (1 + ε)
        let mut s = store(0.0, 1.0);
        Optimizer::new(OptimizerKind::Adam, 1e-3).step(&mut s).unwrap();
        let want = -1e-3 / (1.0 + ADAM_EPS);
        assert!((s.by_name("theta").unwrap().data()[0] - want).abs() < 1e-18);
    }

    #[test]
    fn adam_second_step_matches_hand_recursion() {
        let mut s = store(0.0, 1.0);
        let mut opt = Optimizer::new(OptimizerKind::Adam, 0.01);
        opt.step(&mut s).unwrap();
        s.zero_grad();
        s.tensors_mut()[0].accumulate_grad(&[-2.0]).unwrap();
        opt.step(&mut s).unwrap();
        let m1 = 0.1;
        let v1 = 0.001;
        let theta1 = -0.01 * (m1 / 0.1) / ((v1 / 0.001f64).sqrt() + ADAM_EPS);
        let m2 = 0.9 * m1 + 0.1 * -2.0;
        let v2 = 0.999 * v1 + 0.001 * 4.0;
        let (c1, c2) = (1.0 - 0.9f64.powi(2), 1.0 - 0.999f64.powi(2));
        let theta2 = theta1 - 0.01 * (m2 / c1) / ((v2 / c2).sqrt() + ADAM_EPS);
        assert!((s.by_name("theta").unwrap().data()[0] - theta2).abs() < 1e-15);
        assert_eq!(opt.steps_taken(), 2);
    }

    #[test]
    fn step_decreases_convex_quadratic() {
        // f(θ) = ½·a·θ², gradient aθ; any lr < 2/a decreases f under sgd
        let a = 4.0;
        for lr in [0.01, 0.1, 0.4] {
            let theta = 1.5;
            let mut s = store(theta, a * theta);
            Optimizer::new(OptimizerKind::Sgd, lr).step(&mut s).unwrap();
            let after = s.by_name("theta").unwrap().data()[0];
            assert!(0.5 * a * after * after < 0.5 * a * theta * theta);
        }
    }
}
