//! Three ReLU hidden layers of `0.75 × input` units, each followed by
//! dropout, and a single sigmoid output.

use super::{Standardizer, TrainConfig};
use crate::nn::{
    dropout_apply, seeded_rng, Activation, DenseCache, DenseLayer, DropoutMode, DropoutSpec, Optimizer, ParamSet,
};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub const HIDDEN_LAYERS: usize = 3;

/// `0.75 × input_dim` rounded half to even, at least 1.
pub fn hidden_size(input_dim: usize) -> usize {
    ((0.75 * input_dim as f64).round_ties_even() as usize).max(1)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MlpModel {
    pub input_dim: usize,
    pub hidden_dim: usize,
    pub dropout_rate: f64,
    pub with_dropout: bool,
    pub seed: u64,
    pub scaler: Standardizer,
    /// Three hidden layers then the output layer.
    pub layers: Vec<DenseLayer>,
    pub loss_curve: Vec<f64>,
}

pub fn build_mlp(input_dim: usize, dropout_rate: f64, with_dropout: bool, seed: u64) -> Result<MlpModel> {
    if input_dim == 0 {
        return Err(Error::InvalidConfig("MLP input dimension must be at least 1".into()));
    }
    DropoutSpec::new(dropout_rate, DropoutMode::Train)?;
    let h = hidden_size(input_dim);
    let mut rng = seeded_rng(seed);
    let mut layers: Vec<DenseLayer> = Vec::with_capacity(HIDDEN_LAYERS + 1);
    let mut fan_in = input_dim;
    for _ in 0..HIDDEN_LAYERS {
        layers.push(DenseLayer::new(fan_in, h, Activation::Relu, &mut rng));
        fan_in = h;
    }
    layers.push(DenseLayer::new(h, 1, Activation::Sigmoid, &mut rng));
    Ok(MlpModel {
        input_dim,
        hidden_dim: h,
        dropout_rate,
        with_dropout,
        seed,
        scaler: Standardizer::identity(input_dim),
        layers,
        loss_curve: Vec::new(),
    })
}

struct TrainPass {
    hidden: Vec<(DenseCache, Vec<f64>)>,
    out: DenseCache,
}

impl MlpModel {
    fn check(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim {
            return Err(Error::ModelShape(format!("MLP expects {} features, got {}", self.input_dim, x.len())));
        }
        Ok(())
    }

    /// Forward pass on already standardized input.
    fn forward_scaled(&self, x: &[f64]) -> Result<f64> {
        let mut a = x.to_vec();
        for l in &self.layers {
            a = l.forward(&a)?;
        }
        Ok(a[0])
    }

    /// Attack probability; dropout is inactive.
    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        self.check(x)?;
        self.forward_scaled(&self.scaler.apply(x))
    }

    fn forward_train(&self, x: &[f64], spec: DropoutSpec, rng: &mut crate::nn::Rng) -> Result<TrainPass> {
        let mut a = x.to_vec();
        let mut hidden = Vec::with_capacity(HIDDEN_LAYERS);
        for l in &self.layers[..HIDDEN_LAYERS] {
            let cache = l.forward_cached(&a)?;
            let (out, mask) = dropout_apply(spec, &cache.y, rng);
            a = out;
            hidden.push((cache, mask));
        }
        let out = self.layers[HIDDEN_LAYERS].forward_cached(&a)?;
        Ok(TrainPass { hidden, out })
    }

    /// Accumulates gradients for one sample given `dL/dz` at the output logit.
    fn backward(&self, pass: &TrainPass, dz: f64, grads: &mut [DenseLayer]) {
        let out_layer = &self.layers[HIDDEN_LAYERS];
        let g = &mut grads[HIDDEN_LAYERS];
        g.w.add_outer(&[dz], &pass.out.x, 1.0);
        g.b[0] += dz;
        let mut da = vec![0.0; out_layer.input_dim()];
        out_layer.w.matvec_t_acc(&[dz], &mut da);
        for l in (0..HIDDEN_LAYERS).rev() {
            let (cache, mask) = &pass.hidden[l];
            let dy: Vec<f64> = da.iter().zip(mask).map(|(d, m)| d * m).collect();
            da = self.layers[l].backward(cache, &dy, &mut grads[l]);
        }
    }

    /// Loss and gradient over one batch of standardized rows.
    fn batch_gradient(
        &self,
        rows: &[&[f64]],
        ys: &[f64],
        pos_weight: f64,
        spec: DropoutSpec,
        rng: &mut crate::nn::Rng,
    ) -> Result<(f64, Vec<DenseLayer>)> {
        let mut grads = self.layers.zeros_like();
        let n = rows.len() as f64;
        let mut loss = 0.0;
        for (x, &y) in rows.iter().zip(ys) {
            let pass = self.forward_train(x, spec, rng)?;
            let p = pass.out.y[0];
            loss += crate::nn::bce_loss_weighted(&[p], &[y], pos_weight) / n;
            let dz = (p * (pos_weight * y + 1.0 - y) - pos_weight * y) / n;
            self.backward(&pass, dz, &mut grads);
        }
        Ok((loss, grads))
    }

    /// Mini-batch training with BCE; fits the input standardizer first.
    pub fn train(&mut self, rows: &[Vec<f64>], y: &[f64], cfg: &TrainConfig) -> Result<()> {
        cfg.validate()?;
        if rows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if rows.len() != y.len() {
            return Err(Error::InvalidInput(format!("{} rows but {} labels", rows.len(), y.len())));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != self.input_dim) {
            return Err(Error::ModelShape(format!("MLP expects {} features, got {}", self.input_dim, r.len())));
        }
        if rows.iter().flatten().any(|v| !v.is_finite()) {
            return Err(Error::InvalidInput("feature rows contain non-finite values".into()));
        }
        let pos_weight = cfg.resolve_pos_weight(y)?;
        self.scaler = Standardizer::fit(rows)?;
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| self.scaler.apply(r)).collect();
        let mode = if self.with_dropout { DropoutMode::Train } else { DropoutMode::Infer };
        let spec = DropoutSpec::new(self.dropout_rate, mode)?;
        let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
        let mut shuffle_rng = seeded_rng(cfg.seed ^ 0x5_4ff1e);
        let mut dropout_rng = seeded_rng(cfg.seed ^ 0xd_0b0a7);
        let mut order: Vec<usize> = (0..rows.len()).collect();
        self.loss_curve.clear();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let xs: Vec<&[f64]> = chunk.iter().map(|&i| scaled[i].as_slice()).collect();
                let ys: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
                let (loss, grads) = self.batch_gradient(&xs, &ys, pos_weight, spec, &mut dropout_rng)?;
                opt.step(&mut self.layers, &grads);
                epoch_loss += loss * chunk.len() as f64;
            }
            let mean = epoch_loss / rows.len() as f64;
            if !mean.is_finite() || !self.layers.all_finite() {
                return Err(Error::DivergedTraining { epoch });
            }
            log::debug!("mlp epoch {epoch}: loss {mean:.6}");
            self.loss_curve.push(mean);
        }
        Ok(())
    }
}
