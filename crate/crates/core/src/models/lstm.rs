//! Stacked LSTM over sequence windows: each layer's outputs pass through
//! dropout into the next, and a dense sigmoid unit reads the top layer's
//! last output. Windows are independent samples; gradients flow back
//! through the window only.

use super::sequence::{InputMode, SequenceWindow};
use super::{Standardizer, TrainConfig};
use crate::nn::{
    dropout_apply, seeded_rng, Activation, DenseLayer, DropoutMode, DropoutSpec, LstmCache, LstmCellParams, Optimizer,
    ParamSet, Rng,
};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

/// Depth and width of the stack. The default is four layers of 128 units.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct LstmArch {
    pub layers: usize,
    pub hidden: usize,
}

impl Default for LstmArch {
    fn default() -> Self {
        Self { layers: 4, hidden: 128 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmParams {
    pub cells: Vec<LstmCellParams>,
    pub head: DenseLayer,
}

impl ParamSet for LstmParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        let mut v = self.cells.param_slices();
        v.extend(self.head.param_slices());
        v
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        let mut v = self.cells.param_slices_mut();
        v.extend(self.head.param_slices_mut());
        v
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LstmModel {
    pub input_dim: usize,
    pub arch: LstmArch,
    pub time_step: usize,
    pub mode: InputMode,
    pub dropout_rate: f64,
    pub seed: u64,
    pub scaler: Standardizer,
    pub params: LstmParams,
    pub loss_curve: Vec<f64>,
}

struct LayerTrace {
    caches: Vec<LstmCache>,
    masks: Vec<Vec<f64>>,
}

struct WindowTrace {
    layers: Vec<LayerTrace>,
    head_input: Vec<f64>,
    prob: f64,
}

impl LstmModel {
    pub fn new(input_dim: usize, arch: LstmArch, time_step: usize, mode: InputMode, cfg: &TrainConfig) -> Result<Self> {
        if input_dim == 0 || arch.layers == 0 || arch.hidden == 0 || time_step == 0 {
            return Err(Error::InvalidConfig(format!(
                "LSTM needs positive sizes: input {input_dim}, layers {}, hidden {}, time step {time_step}",
                arch.layers, arch.hidden
            )));
        }
        DropoutSpec::new(cfg.dropout, DropoutMode::Train)?;
        let mut rng = seeded_rng(cfg.seed);
        let cells = (0..arch.layers)
            .map(|l| LstmCellParams::new(if l == 0 { input_dim } else { arch.hidden }, arch.hidden, &mut rng))
            .collect();
        let head = DenseLayer::new(arch.hidden, 1, Activation::Sigmoid, &mut rng);
        Ok(Self {
            input_dim,
            arch,
            time_step,
            mode,
            dropout_rate: cfg.dropout,
            seed: cfg.seed,
            scaler: Standardizer::identity(input_dim),
            params: LstmParams { cells, head },
            loss_curve: Vec::new(),
        })
    }

    fn forward_trace(&self, xs: &[Vec<f64>], spec: DropoutSpec, rng: &mut Rng) -> Result<WindowTrace> {
        let mut inputs: Vec<Vec<f64>> = xs.to_vec();
        let mut layers = Vec::with_capacity(self.params.cells.len());
        for cell in &self.params.cells {
            let h_dim = cell.hidden_dim();
            let (mut h, mut c) = (vec![0.0; h_dim], vec![0.0; h_dim]);
            let mut caches = Vec::with_capacity(inputs.len());
            let mut masks = Vec::with_capacity(inputs.len());
            let mut outputs = Vec::with_capacity(inputs.len());
            for x in &inputs {
                let cache = cell.forward_cached(x, &h, &c)?;
                h.clone_from(&cache.h);
                c.clone_from(&cache.c);
                let (out, mask) = dropout_apply(spec, &cache.h, rng);
                outputs.push(out);
                masks.push(mask);
                caches.push(cache);
            }
            layers.push(LayerTrace { caches, masks });
            inputs = outputs;
        }
        let head_input = inputs.pop().ok_or_else(|| Error::InvalidInput("empty sequence window".into()))?;
        let prob = self.params.head.forward(&head_input)?[0];
        Ok(WindowTrace { layers, head_input, prob })
    }

    fn backward(&self, trace: &WindowTrace, dz: f64, grads: &mut LstmParams) {
        let head = &self.params.head;
        grads.head.w.add_outer(&[dz], &trace.head_input, 1.0);
        grads.head.b[0] += dz;
        let mut d_last = vec![0.0; head.input_dim()];
        head.w.matvec_t_acc(&[dz], &mut d_last);

        let steps = trace.layers[0].caches.len();
        let mut d_out: Vec<Vec<f64>> = vec![Vec::new(); steps];
        d_out[steps - 1] = d_last;
        for (l, layer) in trace.layers.iter().enumerate().rev() {
            let cell = &self.params.cells[l];
            let h_dim = cell.hidden_dim();
            let mut dh_next = vec![0.0; h_dim];
            let mut dc_next = vec![0.0; h_dim];
            let mut d_in: Vec<Vec<f64>> = vec![Vec::new(); steps];
            for t in (0..steps).rev() {
                let mut dh = dh_next.clone();
                if !d_out[t].is_empty() {
                    for ((a, d), m) in dh.iter_mut().zip(&d_out[t]).zip(&layer.masks[t]) {
                        *a += d * m;
                    }
                }
                let (dx, dh_prev, dc_prev) = cell.backward(&layer.caches[t], &dh, &dc_next, &mut grads.cells[l]);
                d_in[t] = dx;
                dh_next = dh_prev;
                dc_next = dc_prev;
            }
            d_out = d_in;
        }
    }

    fn scaled_window(&self, scaled: &[Vec<f64>], w: &SequenceWindow) -> Vec<Vec<f64>> {
        w.materialize(scaled, self.input_dim)
    }

    /// Attack probability for one window over unscaled feature rows.
    pub fn predict_window(&self, rows: &[Vec<f64>], w: &SequenceWindow) -> Result<f64> {
        let xs: Vec<Vec<f64>> = w
            .members
            .iter()
            .map(|m| match m {
                None => Ok(vec![0.0; self.input_dim]),
                Some(i) => {
                    let r = &rows[*i];
                    if r.len() != self.input_dim {
                        return Err(Error::ModelShape(format!(
                            "LSTM expects {} features, got {}",
                            self.input_dim,
                            r.len()
                        )));
                    }
                    Ok(self.scaler.apply(r))
                }
            })
            .collect::<Result<_>>()?;
        let spec = DropoutSpec::new(0.0, DropoutMode::Infer)?;
        Ok(self.forward_trace(&xs, spec, &mut seeded_rng(0))?.prob)
    }

    fn batch_gradient(
        &self,
        windows: &[Vec<Vec<f64>>],
        ys: &[f64],
        pos_weight: f64,
        spec: DropoutSpec,
        rng: &mut Rng,
    ) -> Result<(f64, LstmParams)> {
        let mut grads = self.params.zeros_like();
        let n = windows.len() as f64;
        let mut loss = 0.0;
        for (xs, &y) in windows.iter().zip(ys) {
            let trace = self.forward_trace(xs, spec, rng)?;
            let p = trace.prob;
            loss += crate::nn::bce_loss_weighted(&[p], &[y], pos_weight) / n;
            let dz = (p * (pos_weight * y + 1.0 - y) - pos_weight * y) / n;
            self.backward(&trace, dz, &mut grads);
        }
        Ok((loss, grads))
    }

    /// Trains on one window per labeled row; `rows` are unscaled features.
    pub fn train(&mut self, rows: &[Vec<f64>], windows: &[SequenceWindow], y: &[f64], cfg: &TrainConfig) -> Result<()> {
        cfg.validate()?;
        if windows.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if windows.len() != y.len() {
            return Err(Error::InvalidInput(format!("{} windows but {} labels", windows.len(), y.len())));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != self.input_dim) {
            return Err(Error::ModelShape(format!("LSTM expects {} features, got {}", self.input_dim, r.len())));
        }
        let pos_weight = cfg.resolve_pos_weight(y)?;
        self.scaler = Standardizer::fit(rows)?;
        let scaled: Vec<Vec<f64>> = rows.iter().map(|r| self.scaler.apply(r)).collect();
        let spec = DropoutSpec::new(self.dropout_rate, DropoutMode::Train)?;
        let mut opt = Optimizer::new(cfg.optimizer, cfg.lr);
        let mut shuffle_rng = seeded_rng(cfg.seed ^ 0x5_4ff1e);
        let mut dropout_rng = seeded_rng(cfg.seed ^ 0xd_0b0a7);
        let mut order: Vec<usize> = (0..windows.len()).collect();
        self.loss_curve.clear();
        for epoch in 0..cfg.epochs {
            order.shuffle(&mut shuffle_rng);
            let mut epoch_loss = 0.0;
            for chunk in order.chunks(cfg.batch_size) {
                let xs: Vec<Vec<Vec<f64>>> = chunk.iter().map(|&i| self.scaled_window(&scaled, &windows[i])).collect();
                let ys: Vec<f64> = chunk.iter().map(|&i| y[i]).collect();
                let (loss, grads) = self.batch_gradient(&xs, &ys, pos_weight, spec, &mut dropout_rng)?;
                opt.step(&mut self.params, &grads);
                epoch_loss += loss * chunk.len() as f64;
            }
            let mean = epoch_loss / windows.len() as f64;
            if !mean.is_finite() || !self.params.all_finite() {
                return Err(Error::DivergedTraining { epoch });
            }
            log::debug!("lstm epoch {epoch}: loss {mean:.6}");
            self.loss_curve.push(mean);
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::PacketRecord;
    use crate::models::sequence::make_sequence_inputs;
    use crate::nn::gradcheck::max_param_error;
    use rand::Rng as _;

    fn cfg(seed: u64) -> TrainConfig {
        TrainConfig { seed, ..TrainConfig::default() }
    }

    #[test]
    fn default_arch_is_four_by_128() {
        let m = LstmModel::new(16, LstmArch::default(), 64, InputMode::Sequential, &cfg(0)).unwrap();
        assert_eq!(m.params.cells.len(), 4);
        assert!(m.params.cells.iter().all(|c| c.hidden_dim() == 128));
        assert_eq!(m.params.cells[0].input_dim(), 16);
        assert_eq!(m.params.head.output_dim(), 1);
        assert!(LstmModel::new(16, LstmArch { layers: 0, hidden: 4 }, 4, InputMode::Single, &cfg(0)).is_err());
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = seeded_rng(31);
        let arch = LstmArch { layers: 2, hidden: 3 };
        for draw in 0..100 {
            let m = LstmModel::new(2, arch, 3, InputMode::Sequential, &cfg(draw)).unwrap();
            let windows: Vec<Vec<Vec<f64>>> =
                (0..2).map(|_| (0..3).map(|_| (0..2).map(|_| rng.gen_range(-1.5..1.5)).collect()).collect()).collect();
            let ys: Vec<f64> = (0..2).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
            let spec = DropoutSpec::new(0.0, DropoutMode::Infer).unwrap();
            let (_, g) = m.batch_gradient(&windows, &ys, 1.5, spec, &mut seeded_rng(0)).unwrap();
            let err = max_param_error(&m.params, &g, |p| {
                let probe = LstmModel { params: p.clone(), ..m.clone() };
                let probs: Vec<f64> =
                    windows.iter().map(|xs| probe.forward_trace(xs, spec, &mut seeded_rng(0)).unwrap().prob).collect();
                crate::nn::bce_loss_weighted(&probs, &ys, 1.5)
            });
            assert!(err < 1e-4, "draw {draw}: {err}");
        }
    }

    #[test]
    fn learns_a_sequence_pattern() {
        // Attack iff the previous packet's feature was high: needs memory.
        let mut rng = seeded_rng(2);
        let xs: Vec<f64> = (0..300).map(|_| f64::from(rng.gen_range(0..2u8))).collect();
        let rows: Vec<Vec<f64>> = xs.iter().map(|&v| vec![v]).collect();
        let y: Vec<f64> = (0..xs.len()).map(|i| if i > 0 { xs[i - 1] } else { 0.0 }).collect();
        let packets: Vec<PacketRecord> =
            (0..xs.len()).map(|i| PacketRecord::from_frame(i, i as f64, 60, vec![])).collect();
        let windows = make_sequence_inputs(&packets, 2, InputMode::Sequential).unwrap();
        let arch = LstmArch { layers: 1, hidden: 6 };
        let tc = TrainConfig { epochs: 60, lr: 2e-2, batch_size: 16, dropout: 0.0, ..TrainConfig::default() };
        let mut m = LstmModel::new(1, arch, 2, InputMode::Sequential, &tc).unwrap();
        m.train(&rows, &windows, &y, &tc).unwrap();
        let correct =
            windows.iter().zip(&y).filter(|(w, &t)| (m.predict_window(&rows, w).unwrap() >= 0.5) == (t == 1.0)).count();
        assert!(correct as f64 / y.len() as f64 >= 0.95, "{correct}/{}", y.len());
        let mut again = LstmModel::new(1, arch, 2, InputMode::Sequential, &tc).unwrap();
        again.train(&rows, &windows, &y, &tc).unwrap();
        assert_eq!(again, m);
    }
}
