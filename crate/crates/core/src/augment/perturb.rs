use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StrategyConfig;
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// How the perturbation gradient is turned into an ascent direction.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum NormMode {
    /// Elementwise sign, `sign(0) = 0`.
    Sign,
    /// Divide by the Frobenius norm of the whole gradient.
    #[serde(rename = "l2")]
    L2Global,
}

/// Step size of every row: `alpha_l` on labeled rows, `alpha_u` elsewhere.
/// Without a labeled mask every row uses `alpha_l`.
pub fn row_step_sizes(rows: usize, alpha_l: f64, alpha_u: f64, labeled: Option<&[bool]>) -> Result<Vec<f64>> {
    if !(alpha_l >= 0.0 && alpha_u >= 0.0) {
        return Err(Error::Config(format!(
            "step sizes must be non-negative (alpha_l = {alpha_l}, alpha_u = {alpha_u})"
        )));
    }
    match labeled {
        None => Ok(vec![alpha_l; rows]),
        Some(mask) if mask.len() == rows => Ok(mask
            .iter()
            .map(|&l| if l { alpha_l } else { alpha_u })
            .collect()),
        Some(mask) => Err(Error::dim(format!(
            "labeled mask of {} rows for a {rows}-row perturbation",
            mask.len()
        ))),
    }
}

/// The adversarial perturbation `δ` and its step bookkeeping.
#[derive(Debug, Clone, PartialEq)]
pub struct PerturbState {
    pub delta: Matrix,
    /// Ascent steps taken since initialization.
    pub step_idx: usize,
    pub alpha_l: f64,
    pub alpha_u: f64,
    pub norm: NormMode,
    pub epsilon: Option<f64>,
    row_alpha: Vec<f64>,
}

impl PerturbState {
    /// `δ = 0` with the configured step sizes.
    pub fn zeros(shape: (usize, usize), cfg: &StrategyConfig, labeled: Option<&[bool]>) -> Result<Self> {
        let row_alpha = row_step_sizes(shape.0, cfg.alpha_l, cfg.alpha_u, labeled)?;
        Ok(PerturbState {
            delta: Matrix::zeros(shape.0, shape.1),
            step_idx: 0,
            alpha_l: cfg.alpha_l,
            alpha_u: cfg.alpha_u,
            norm: cfg.norm,
            epsilon: cfg.epsilon,
            row_alpha,
        })
    }

    pub fn row_alpha(&self) -> &[f64] {
        &self.row_alpha
    }

    /// `δ[i,·] += α_row(i) · direction[i,·]` where the direction is the
    /// normalized gradient. No projection happens here.
    pub fn ascent_step(&mut self, grad: &Matrix) -> Result<()> {
        if grad.shape() != self.delta.shape() {
            return Err(Error::dim(format!(
                "perturbation gradient {:?} vs perturbation {:?}",
                grad.shape(),
                self.delta.shape()
            )));
        }
        grad.ensure_finite("perturbation gradient")?;
        let scale = match self.norm {
            NormMode::Sign => 1.0,
            NormMode::L2Global => {
                let norm = grad.frobenius_norm();
                if norm == 0.0 {
                    0.0
                } else {
                    1.0 / norm
                }
            }
        };
        for (i, &alpha) in self.row_alpha.iter().enumerate() {
            if alpha == 0.0 || scale == 0.0 {
                continue;
            }
            for (d, &g) in self.delta.row_mut(i).iter_mut().zip(grad.row(i)) {
                *d += alpha * direction(g, self.norm, scale);
            }
        }
        self.step_idx += 1;
        Ok(())
    }

    /// Clamps every entry of `δ` into `[-ε, ε]`.
    pub fn project_linf(&mut self, epsilon: f64) -> Result<()> {
        if !(epsilon >= 0.0) {
            return Err(Error::Config(format!("epsilon must be non-negative, got {epsilon}")));
        }
        for d in self.delta.as_mut_slice() {
            *d = d.clamp(-epsilon, epsilon);
        }
        Ok(())
    }
}

/// `δ₀` with row `i` drawn i.i.d. from `U(-α_row(i), α_row(i))`.
pub fn init_perturbation<R: Rng + ?Sized>(
    shape: (usize, usize),
    cfg: &StrategyConfig,
    labeled: Option<&[bool]>,
    rng: &mut R,
) -> Result<PerturbState> {
    let mut state = PerturbState::zeros(shape, cfg, labeled)?;
    for i in 0..shape.0 {
        let alpha = state.row_alpha[i];
        for d in state.delta.row_mut(i) {
            *d = (2.0 * rng.gen::<f64>() - 1.0) * alpha;
        }
    }
    Ok(state)
}

#[inline]
fn direction(g: f64, mode: NormMode, inv_norm: f64) -> f64 {
    match mode {
        NormMode::Sign => {
            if g > 0.0 {
                1.0
            } else if g < 0.0 {
                -1.0
            } else {
                0.0
            }
        }
        NormMode::L2Global => g * inv_norm,
    }
}

/// Ascent direction: elementwise sign, or the gradient divided by its
/// Frobenius norm. A zero gradient gives a zero direction.
pub fn normalize_gradient(g: &Matrix, mode: NormMode) -> Result<Matrix> {
    g.ensure_finite("perturbation gradient")?;
    let norm = g.frobenius_norm();
    let inv = if norm == 0.0 { 0.0 } else { 1.0 / norm };
    Ok(g.map(|v| direction(v, mode, inv)))
}
