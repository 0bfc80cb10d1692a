//! Sparse autoencoder over 12,144-bit frames.
//!
//! ```text
//! H1 = W1·x + b1            (affine, no activation)
//! H2 = σ(W2·H1 + b2)        (code, 128 values in (0,1))
//! H3 = W3·H2 + b3           (affine)
//! x̂  = σ(W4·H3 + b4)
//! ```
//!
//! Loss over a batch of N frames:
//!
//! ```text
//! L = 1/(2N) Σᵢ ‖xᵢ − x̂ᵢ‖² + α Σᵢ Σⱼ xᵢⱼ log(xᵢⱼ / x̂ᵢⱼ) + β Σᵢ Σₖ |H2ᵢₖ|
//! ```
//!
//! with `0·log(0/q) = 0` and `x̂` clamped to `[1e−7, 1 − 1e−7]`. The model is
//! trained with mini-batch gradient descent on benign frames only, optionally
//! clipping each batch gradient by norm.

use crate::features::{column_names, ExtractorKind, FeatureSet};
use crate::ingest::{pad_and_bitize, BitVector12144, PacketRecord, FRAME_BITS};
use crate::nn::{axpy, dot, seeded_rng, sigmoid, Matrix, ParamSet, PROB_EPS};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

pub const CODE_DIM: usize = 128;
pub const CHECKPOINT_FORMAT: &str = "zdl-autoencoder";
pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct AeConfig {
    pub h1: usize,
    pub h3: usize,
    pub alpha: f64,
    pub beta: f64,
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Rescales any batch gradient whose norm exceeds this before the step.
    pub clip_norm: Option<f64>,
}

impl Default for AeConfig {
    fn default() -> Self {
        Self {
            h1: 512,
            h3: 512,
            alpha: 1e-3,
            beta: 1e-5,
            lr: 1e-3,
            epochs: 10,
            batch_size: 64,
            seed: 0,
            clip_norm: None,
        }
    }
}

/// Layer sizes: `input → h1 → code → h3 → input`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct AeDims {
    pub input: usize,
    pub h1: usize,
    pub code: usize,
    pub h3: usize,
}

impl AeDims {
    pub fn frames(h1: usize, h3: usize) -> Self {
        Self { input: FRAME_BITS, h1, code: CODE_DIM, h3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeParams {
    pub w1: Matrix,
    pub b1: Vec<f64>,
    pub w2: Matrix,
    pub b2: Vec<f64>,
    pub w3: Matrix,
    pub b3: Vec<f64>,
    pub w4: Matrix,
    pub b4: Vec<f64>,
}

impl ParamSet for AeParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![&self.w1.data, &self.b1, &self.w2.data, &self.b2, &self.w3.data, &self.b3, &self.w4.data, &self.b4]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![
            &mut self.w1.data,
            &mut self.b1,
            &mut self.w2.data,
            &mut self.b2,
            &mut self.w3.data,
            &mut self.b3,
            &mut self.w4.data,
            &mut self.b4,
        ]
    }
}

impl AeParams {
    pub fn zeros(d: AeDims) -> Self {
        Self {
            w1: Matrix::zeros(d.h1, d.input),
            b1: vec![0.0; d.h1],
            w2: Matrix::zeros(d.code, d.h1),
            b2: vec![0.0; d.code],
            w3: Matrix::zeros(d.h3, d.code),
            b3: vec![0.0; d.h3],
            w4: Matrix::zeros(d.input, d.h3),
            b4: vec![0.0; d.input],
        }
    }

    /// Weights uniform in `±1/sqrt(fan_in)`, biases zero.
    pub fn init(d: AeDims, seed: u64) -> Self {
        let mut rng = seeded_rng(seed);
        Self {
            w1: Matrix::init_uniform(d.h1, d.input, &mut rng),
            b1: vec![0.0; d.h1],
            w2: Matrix::init_uniform(d.code, d.h1, &mut rng),
            b2: vec![0.0; d.code],
            w3: Matrix::init_uniform(d.h3, d.code, &mut rng),
            b3: vec![0.0; d.h3],
            w4: Matrix::init_uniform(d.input, d.h3, &mut rng),
            b4: vec![0.0; d.input],
        }
    }

    fn dims(&self) -> AeDims {
        AeDims { input: self.w1.cols, h1: self.w1.rows, code: self.w2.rows, h3: self.w3.rows }
    }

    fn shapes_consistent(&self) -> bool {
        let d = self.dims();
        self.b1.len() == d.h1
            && self.w2.cols == d.h1
            && self.b2.len() == d.code
            && self.w3.cols == d.code
            && self.b3.len() == d.h3
            && self.w4.rows == d.input
            && self.w4.cols == d.h3
            && self.b4.len() == d.input
            && self.param_slices().iter().zip(self.expected_lens()).all(|(s, n)| s.len() == n)
    }

    fn expected_lens(&self) -> [usize; 8] {
        let d = self.dims();
        [d.h1 * d.input, d.h1, d.code * d.h1, d.code, d.h3 * d.code, d.h3, d.input * d.h3, d.input]
    }
}

/// A binary input frame stored as the indices of its set bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryInput {
    pub dim: usize,
    pub ones: Vec<usize>,
}

impl BinaryInput {
    pub fn from_bits(bits: &BitVector12144) -> Self {
        Self { dim: bits.len(), ones: bits.ones() }
    }

    /// Fails unless every value is exactly 0 or 1.
    pub fn from_dense(x: &[f64]) -> Result<Self> {
        let mut ones = Vec::new();
        for (j, &v) in x.iter().enumerate() {
            if v == 1.0 {
                ones.push(j);
            } else if v != 0.0 {
                return Err(Error::InvalidInput(format!("autoencoder input must be binary, x[{j}] = {v}")));
            }
        }
        Ok(Self { dim: x.len(), ones })
    }

    pub fn to_dense(&self) -> Vec<f64> {
        let mut x = vec![0.0; self.dim];
        for &j in &self.ones {
            x[j] = 1.0;
        }
        x
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AeModel {
    pub format: String,
    pub version: u32,
    pub dims: AeDims,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub config: AeConfig,
    pub epoch_losses: Vec<f64>,
    pub params: AeParams,
}

/// Intermediate activations of one forward pass.
#[derive(Debug, Clone)]
pub struct AeForward {
    pub h1: Vec<f64>,
    pub h2: Vec<f64>,
    pub h3: Vec<f64>,
    pub xhat: Vec<f64>,
}

impl AeModel {
    pub fn new(dims: AeDims, cfg: &AeConfig) -> Self {
        Self::from_params(AeParams::init(dims, cfg.seed), cfg)
    }

    pub fn from_params(params: AeParams, cfg: &AeConfig) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            dims: params.dims(),
            alpha: cfg.alpha,
            beta: cfg.beta,
            seed: cfg.seed,
            config: *cfg,
            epoch_losses: Vec::new(),
            params,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidInput(format!(
                "not an autoencoder checkpoint ({} v{})",
                self.format, self.version
            )));
        }
        if !self.params.shapes_consistent() || self.params.dims() != self.dims {
            return Err(Error::ModelShape("autoencoder weight shapes disagree with recorded dims".into()));
        }
        if !self.params.all_finite() {
            return Err(Error::ModelShape("autoencoder weights contain non-finite values".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: AeModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    fn check_input(&self, dim: usize) -> Result<()> {
        if dim != self.dims.input {
            return Err(Error::ModelShape(format!("autoencoder expects {} inputs, got {dim}", self.dims.input)));
        }
        Ok(())
    }

    fn forward_from_h1(&self, h1: Vec<f64>) -> AeForward {
        let p = &self.params;
        let mut z2 = p.b2.clone();
        p.w2.matvec_acc(&h1, &mut z2);
        let h2: Vec<f64> = z2.into_iter().map(sigmoid).collect();
        let mut h3 = p.b3.clone();
        p.w3.matvec_acc(&h2, &mut h3);
        let mut z4 = p.b4.clone();
        p.w4.matvec_acc(&h3, &mut z4);
        let xhat = z4.into_iter().map(sigmoid).collect();
        AeForward { h1, h2, h3, xhat }
    }

    pub fn forward_binary(&self, x: &BinaryInput) -> Result<AeForward> {
        self.check_input(x.dim)?;
        Ok(self.forward_from_h1(self.encoder_h1(x)))
    }

    pub fn forward_dense(&self, x: &[f64]) -> Result<AeForward> {
        self.check_input(x.len())?;
        let mut h1 = self.params.b1.clone();
        self.params.w1.matvec_acc(x, &mut h1);
        Ok(self.forward_from_h1(h1))
    }

    /// The training loss for a single frame (N = 1).
    pub fn reconstruction_loss(&self, x: &BinaryInput) -> Result<f64> {
        let fw = self.forward_binary(x)?;
        Ok(ae_loss(&[x.to_dense()], &[fw.xhat], &[fw.h2], self.alpha, self.beta))
    }

    fn encoder_h1(&self, x: &BinaryInput) -> Vec<f64> {
        let p = &self.params;
        (0..self.dims.h1)
            .map(|r| {
                let row = p.w1.row(r);
                p.b1[r] + x.ones.iter().map(|&j| row[j]).sum::<f64>()
            })
            .collect()
    }

    /// Batch loss and its gradient.
    ///
    /// The decoder output layer is processed one output unit at a time for
    /// the whole batch, so each row of `w4` is read and updated once per
    /// batch rather than once per frame.
    pub fn loss_and_gradient(&self, batch: &[BinaryInput]) -> Result<(f64, AeParams)> {
        for x in batch {
            self.check_input(x.dim)?;
        }
        let p = &self.params;
        let d = self.dims;
        let nf = batch.len() as f64;
        let mut grads = p.zeros_like();
        let mut loss = 0.0;

        let fronts: Vec<AeForward> = batch
            .iter()
            .map(|x| {
                let h1 = self.encoder_h1(x);
                let mut z2 = p.b2.clone();
                p.w2.matvec_acc(&h1, &mut z2);
                let h2: Vec<f64> = z2.into_iter().map(sigmoid).collect();
                let mut h3 = p.b3.clone();
                p.w3.matvec_acc(&h2, &mut h3);
                AeForward { h1, h2, h3, xhat: Vec::new() }
            })
            .collect();
        let masks: Vec<Vec<bool>> = batch
            .iter()
            .map(|x| {
                let mut m = vec![false; d.input];
                for &j in &x.ones {
                    m[j] = true;
                }
                m
            })
            .collect();

        let mut dh3 = vec![vec![0.0; d.h3]; batch.len()];
        for (j, &bias) in p.b4.iter().enumerate() {
            let w_row = p.w4.row(j);
            let g_row = grads.w4.row_mut(j);
            let mut g_bias = 0.0;
            for (b, fw) in fronts.iter().enumerate() {
                let q = sigmoid(bias + dot(w_row, &fw.h3));
                let one = masks[b][j];
                let qc = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
                let diff = qc - if one { 1.0 } else { 0.0 };
                loss += diff * diff / (2.0 * nf);
                // d/dx̂ of the squared-error term uses the clamped value; the
                // clamp is flat outside its range.
                let inside = q == qc;
                let mut dq = if inside { diff / nf } else { 0.0 };
                if one {
                    loss += -self.alpha * qc.ln();
                    if inside {
                        dq -= self.alpha / q;
                    }
                }
                let dz = dq * q * (1.0 - q);
                if dz != 0.0 {
                    axpy(dz, &fw.h3, g_row);
                    axpy(dz, w_row, &mut dh3[b]);
                    g_bias += dz;
                }
            }
            grads.b4[j] += g_bias;
        }

        for ((x, fw), dh3) in batch.iter().zip(&fronts).zip(&dh3) {
            loss += self.beta * fw.h2.iter().map(|v| v.abs()).sum::<f64>();
            grads.w3.add_outer(dh3, &fw.h2, 1.0);
            for (g, v) in grads.b3.iter_mut().zip(dh3) {
                *g += v;
            }
            let mut dh2 = vec![0.0; d.code];
            p.w3.matvec_t_acc(dh3, &mut dh2);
            let dz2: Vec<f64> =
                dh2.iter().zip(&fw.h2).map(|(g, &h)| (g + self.beta * h.signum()) * h * (1.0 - h)).collect();
            grads.w2.add_outer(&dz2, &fw.h1, 1.0);
            for (g, v) in grads.b2.iter_mut().zip(&dz2) {
                *g += v;
            }
            let mut dh1 = vec![0.0; d.h1];
            p.w2.matvec_t_acc(&dz2, &mut dh1);
            for (r, &v) in dh1.iter().enumerate() {
                let row = grads.w1.row_mut(r);
                for &j in &x.ones {
                    row[j] += v;
                }
                grads.b1[r] += v;
            }
        }
        Ok((loss, grads))
    }

    pub fn encode(&self, x: &BitVector12144) -> Result<Vec<f64>> {
        Ok(self.forward_binary(&BinaryInput::from_bits(x))?.h2)
    }
}

/// `(H2, X̂)` for a dense input.
pub fn ae_forward(m: &AeModel, x: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let fw = m.forward_dense(x)?;
    Ok((fw.h2, fw.xhat))
}

pub fn encode(m: &AeModel, x: &BitVector12144) -> Result<Vec<f64>> {
    m.encode(x)
}

/// The batch loss above, evaluated directly from its three terms.
pub fn ae_loss(x: &[Vec<f64>], xhat: &[Vec<f64>], h2: &[Vec<f64>], alpha: f64, beta: f64) -> f64 {
    assert!(x.len() == xhat.len() && x.len() == h2.len(), "ae_loss: batch length mismatch");
    let n = x.len() as f64;
    let (mut mse, mut kl, mut sparsity) = (0.0, 0.0, 0.0);
    for ((xi, qi), hi) in x.iter().zip(xhat).zip(h2) {
        for (&xv, &q) in xi.iter().zip(qi) {
            let q = q.clamp(PROB_EPS, 1.0 - PROB_EPS);
            mse += (xv - q) * (xv - q);
            if xv != 0.0 {
                kl += xv * (xv / q).ln();
            }
        }
        sparsity += hi.iter().map(|v| v.abs()).sum::<f64>();
    }
    mse / (2.0 * n) + alpha * kl + beta * sparsity
}

/// Trains on benign frames with plain mini-batch gradient descent, optionally
/// clipping each batch gradient to `clip_norm`.
pub fn train_ae(benign: &[BinaryInput], dims: AeDims, cfg: &AeConfig) -> Result<AeModel> {
    if benign.is_empty() {
        return Err(Error::EmptyDataset);
    }
    if cfg.batch_size == 0 {
        return Err(Error::InvalidConfig("batch_size must be positive".into()));
    }
    if cfg.clip_norm.is_some_and(|c| c.is_nan() || c <= 0.0) {
        return Err(Error::InvalidConfig("clip_norm must be positive".into()));
    }
    if let Some(bad) = benign.iter().find(|x| x.dim != dims.input) {
        return Err(Error::ModelShape(format!("frame of {} bits, model expects {}", bad.dim, dims.input)));
    }
    let mut model = AeModel::new(dims, cfg);
    let mut rng = seeded_rng(cfg.seed ^ 0x5eed_ae00);
    let mut order: Vec<usize> = (0..benign.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        let mut batches = 0usize;
        let mut max_norm = 0.0f64;
        for chunk in order.chunks(cfg.batch_size) {
            let batch: Vec<BinaryInput> = chunk.iter().map(|&i| benign[i].clone()).collect();
            let (loss, grads) = model.loss_and_gradient(&batch)?;
            if !loss.is_finite() {
                return Err(Error::DivergedTraining { epoch });
            }
            let norm = grads.l2_norm();
            max_norm = max_norm.max(norm);
            let scale = match cfg.clip_norm {
                Some(c) if norm > c => c / norm,
                _ => 1.0,
            };
            model.params.add_scaled(&grads, -cfg.lr * scale);
            total += loss;
            batches += 1;
        }
        let mean = total / batches as f64;
        log::debug!("autoencoder epoch {epoch}: mean batch loss {mean:.6}, max gradient norm {max_norm:.3}");
        model.epoch_losses.push(mean);
        if !model.params.all_finite() {
            return Err(Error::DivergedTraining { epoch });
        }
    }
    Ok(model)
}

pub fn frames_from_packets(packets: &[PacketRecord]) -> Vec<BinaryInput> {
    packets.iter().map(|p| BinaryInput::from_bits(&pad_and_bitize(&p.raw))).collect()
}

pub fn ae_feature_set(model: &AeModel, packets: &[PacketRecord]) -> Result<FeatureSet> {
    let mut set = FeatureSet::new(ExtractorKind::Ae, column_names("c", model.dims.code));
    for p in packets {
        set.push(p.index, model.encode(&pad_and_bitize(&p.raw))?, p.label);
    }
    Ok(set)
}
