use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum OptimizerKind {
    Sgd,
    Adam { beta1: f64, beta2: f64, eps_hat: f64 },
}

impl OptimizerKind {
    pub fn adam_default() -> Self {
        OptimizerKind::Adam {
            beta1: 0.9,
            beta2: 0.999,
            eps_hat: 1e-8,
        }
    }
}

/// SGD or bias-corrected Adam over a list of parameter tensors.
///
/// `weight_decay` adds `λ·θ` to the gradient before the update.
#[derive(Debug, Clone)]
pub struct Optimizer {
    kind: OptimizerKind,
    lr: f64,
    weight_decay: f64,
    steps: u64,
    first: Vec<Vec<f64>>,
    second: Vec<Vec<f64>>,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, lr: f64, weight_decay: f64, tensor_lens: &[usize]) -> Self {
        let zeros = || tensor_lens.iter().map(|&n| vec![0.0; n]).collect::<Vec<_>>();
        let adam = matches!(kind, OptimizerKind::Adam { .. });
        Optimizer {
            kind,
            lr,
            weight_decay,
            steps: 0,
            first: if adam { zeros() } else { Vec::new() },
            second: if adam { zeros() } else { Vec::new() },
        }
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    pub fn step(&mut self, params: &mut [&mut [f64]], grads: &[Vec<f64>]) -> Result<()> {
        if params.len() != grads.len() || params.iter().zip(grads).any(|(p, g)| p.len() != g.len()) {
            return Err(Error::dim("parameter and gradient shapes differ"));
        }
        self.steps += 1;
        let (lr, wd) = (self.lr, self.weight_decay);
        match self.kind {
            OptimizerKind::Sgd => {
                for (p, g) in params.iter_mut().zip(grads) {
                    for (x, &dx) in p.iter_mut().zip(g) {
                        *x -= lr * (dx + wd * *x);
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps_hat } => {
                if self.first.len() != params.len() || self.first.iter().zip(params.iter()).any(|(m, p)| m.len() != p.len()) {
                    return Err(Error::dim("optimizer state does not match parameters"));
                }
                let t = self.steps as i32;
                let c1 = 1.0 - beta1.powi(t);
                let c2 = 1.0 - beta2.powi(t);
                for (((p, g), m), v) in params
                    .iter_mut()
                    .zip(grads)
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    for (((x, &dx), mi), vi) in p.iter_mut().zip(g).zip(m.iter_mut()).zip(v.iter_mut()) {
                        let dx = dx + wd * *x;
                        *mi = beta1 * *mi + (1.0 - beta1) * dx;
                        *vi = beta2 * *vi + (1.0 - beta2) * dx * dx;
                        let m_hat = *mi / c1;
                        let v_hat = *vi / c2;
                        *x -= lr * m_hat / (v_hat.sqrt() + eps_hat);
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

    #[test]
    fn sgd_arithmetic() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 0.0, &[1]);
        let mut theta = vec![1.0];
        opt.step(&mut [&mut theta], &[vec![2.0]]).unwrap();
        assert!((theta[0] - 0.8).abs() < 1e-15);
    }

    #[test]
    fn zero_gradient_is_a_no_op() {
        for kind in [OptimizerKind::Sgd, OptimizerKind::adam_default()] {
            let mut opt = Optimizer::new(kind, 0.1, 0.0, &[2]);
            let mut theta = vec![0.5, -3.0];
            opt.step(&mut [&mut theta], &[vec![0.0, 0.0]]).unwrap();
            assert_eq!(theta, vec![0.5, -3.0]);
        }
    }

    #[test]
    fn shape_mismatch() {
        let mut opt = Optimizer::new(OptimizerKind::Sgd, 0.1, 0.0, &[2]);
        let mut theta = vec![0.0; 2];
        assert!(opt.step(&mut [&mut theta], &[vec![0.0; 3]]).is_err());
    }
}
