//! Deterministic f64 neural-network kernel: dense layers, dropout, the LSTM
//! cell, binary cross-entropy and SGD/Adam, all with analytic gradients.
//!
//! Gradients are stored in containers of the same type as the parameters
//! (see [`ParamSet`]), so optimizers and finite-difference checks can walk
//! parameters and gradients side by side.

mod dense;
mod loss;
mod lstm;
mod matrix;
mod optim;

pub use dense::{dropout_apply, Activation, DenseCache, DenseLayer, DropoutMode, DropoutSpec};
pub use loss::{bce_grad_logits, bce_grad_probs, bce_loss, bce_loss_weighted, PROB_EPS};
pub use lstm::{lstm_cell, LstmCache, LstmCellParams};
pub use matrix::{axpy, dot, Matrix};
pub use optim::{Optimizer, OptimizerKind};

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

pub type Rng = ChaCha8Rng;

pub fn seeded_rng(seed: u64) -> Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Parameter containers expose their tensors as flat slices in a fixed order.
pub trait ParamSet {
    fn param_slices(&self) -> Vec<&[f64]>;
    fn param_slices_mut(&mut self) -> Vec<&mut [f64]>;

    /// Same shapes, every value zero. Used as a gradient accumulator.
    fn zeros_like(&self) -> Self
    where
        Self: Sized + Clone,
    {
        let mut z = self.clone();
        for s in z.param_slices_mut() {
            s.fill(0.0);
        }
        z
    }

    fn param_count(&self) -> usize {
        self.param_slices().iter().map(|s| s.len()).sum()
    }

    /// `self += scale * other`, slice by slice.
    fn add_scaled(&mut self, other: &Self, scale: f64)
    where
        Self: Sized,
    {
        for (d, s) in self.param_slices_mut().into_iter().zip(other.param_slices()) {
            for (a, b) in d.iter_mut().zip(s) {
                *a += scale * b;
            }
        }
    }

    /// Euclidean norm over every parameter.
    fn l2_norm(&self) -> f64 {
        self.param_slices().iter().flat_map(|s| s.iter()).map(|v| v * v).sum::<f64>().sqrt()
    }

    fn all_finite(&self) -> bool {
        self.param_slices().iter().all(|s| s.iter().all(|v| v.is_finite()))
    }
}

impl<T: ParamSet> ParamSet for Vec<T> {
    fn param_slices(&self) -> Vec<&[f64]> {
        self.iter().flat_map(|p| p.param_slices()).collect()
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        self.iter_mut().flat_map(|p| p.param_slices_mut()).collect()
    }
}
