//! Classifiers: the dropout MLP and its K-means variants, and the stacked
//! LSTM over per-packet sequence windows.

pub mod kmeans;
pub mod lstm;
pub mod mlp;
pub mod sequence;

pub use kmeans::{ensemble_average, kmeans_as_feature, kmeans_fit, KMeansModel};
pub use lstm::{LstmArch, LstmModel};
pub use mlp::{build_mlp, hidden_size, MlpModel};
pub use sequence::{make_sequence_inputs, InputMode, SequenceWindow};

use crate::features::{ExtractorKind, FeatureSet};
use crate::ingest::{Label, PacketRecord};
use crate::nn::OptimizerKind;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

pub const CHECKPOINT_FORMAT: &str = "zdl-classifier";
pub const CHECKPOINT_VERSION: u32 = 1;
pub const DEFAULT_THRESHOLD: f64 = 0.5;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub lr: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Weight on the attack term of the loss. Setting it also permits
    /// training on a single-class corpus.
    pub pos_weight: Option<f64>,
    pub dropout: f64,
    pub optimizer: OptimizerKind,
    pub threshold: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-3,
            epochs: 50,
            batch_size: 64,
            seed: 0,
            pos_weight: None,
            dropout: 0.2,
            optimizer: OptimizerKind::Adam,
            threshold: DEFAULT_THRESHOLD,
        }
    }
}

impl TrainConfig {
    fn validate(&self) -> Result<()> {
        if self.batch_size == 0 || self.lr.is_nan() || self.lr <= 0.0 || !(0.0..1.0).contains(&self.dropout) {
            return Err(Error::InvalidConfig(format!(
                "need batch_size > 0, lr > 0, dropout in [0, 1); got {}, {}, {}",
                self.batch_size, self.lr, self.dropout
            )));
        }
        Ok(())
    }

    /// Positive-class weight, after checking that the labels allow training.
    fn resolve_pos_weight(&self, labels: &[f64]) -> Result<f64> {
        let pos = labels.iter().filter(|&&y| y == 1.0).count();
        match self.pos_weight {
            Some(w) if w.is_finite() && w > 0.0 => Ok(w),
            Some(w) => Err(Error::InvalidConfig(format!("pos_weight must be positive, got {w}"))),
            None if pos == 0 || pos == labels.len() => Err(Error::SingleClassCorpus),
            None => Ok(1.0),
        }
    }
}

/// Per-column z-scoring fitted on training rows. Constant columns keep a
/// scale of 1.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

impl Standardizer {
    pub fn fit(rows: &[Vec<f64>]) -> Result<Self> {
        let first = rows.first().ok_or(Error::EmptyDataset)?;
        let d = first.len();
        let n = rows.len() as f64;
        let mut mean = vec![0.0; d];
        for r in rows {
            if r.len() != d {
                return Err(Error::ModelShape(format!("ragged feature rows: {} vs {d}", r.len())));
            }
            for (m, v) in mean.iter_mut().zip(r) {
                *m += v / n;
            }
        }
        let mut var = vec![0.0; d];
        for r in rows {
            for ((s, v), m) in var.iter_mut().zip(r).zip(&mean) {
                *s += (v - m) * (v - m) / n;
            }
        }
        let std = var.into_iter().map(|v| if v.sqrt() > 1e-12 { v.sqrt() } else { 1.0 }).collect();
        Ok(Self { mean, std })
    }

    pub fn identity(d: usize) -> Self {
        Self { mean: vec![0.0; d], std: vec![1.0; d] }
    }

    pub fn dim(&self) -> usize {
        self.mean.len()
    }

    pub fn apply(&self, x: &[f64]) -> Vec<f64> {
        x.iter().zip(self.mean.iter().zip(&self.std)).map(|(v, (m, s))| (v - m) / s).collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ModelKind {
    Mlp,
    MlpNodrop,
    MlpKmeansAvg,
    MlpKmeansFeat,
    Lstm,
}

impl ModelKind {
    pub const ALL: [ModelKind; 5] =
        [ModelKind::Mlp, ModelKind::MlpNodrop, ModelKind::MlpKmeansAvg, ModelKind::MlpKmeansFeat, ModelKind::Lstm];

    pub fn name(self) -> &'static str {
        match self {
            ModelKind::Mlp => "mlp",
            ModelKind::MlpNodrop => "mlp-nodrop",
            ModelKind::MlpKmeansAvg => "mlp-kmeans-avg",
            ModelKind::MlpKmeansFeat => "mlp-kmeans-feat",
            ModelKind::Lstm => "lstm",
        }
    }
}

impl fmt::Display for ModelKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown model {s:?}")))
    }
}

/// Everything needed to train any of the model kinds.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelConfig {
    pub train: TrainConfig,
    pub lstm: LstmArch,
    pub time_step: usize,
    pub mode: InputMode,
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self { train: TrainConfig::default(), lstm: LstmArch::default(), time_step: 64, mode: InputMode::Sequential }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum TrainedModel {
    Mlp { mlp: MlpModel },
    MlpNodrop { mlp: MlpModel },
    MlpKmeansAvg { mlp: MlpModel, kmeans: KMeansModel, scaler: Standardizer },
    MlpKmeansFeat { mlp: MlpModel, kmeans: KMeansModel, scaler: Standardizer },
    Lstm { lstm: LstmModel },
}

/// Versioned checkpoint wrapper recording what the model was trained on.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelCheckpoint {
    pub format: String,
    pub version: u32,
    pub extractor: Option<ExtractorKind>,
    pub feature_dim: usize,
    pub config: ModelConfig,
    pub model: TrainedModel,
}

impl ModelCheckpoint {
    pub fn new(extractor: Option<ExtractorKind>, feature_dim: usize, config: ModelConfig, model: TrainedModel) -> Self {
        Self { format: CHECKPOINT_FORMAT.into(), version: CHECKPOINT_VERSION, extractor, feature_dim, config, model }
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let c: ModelCheckpoint = serde_json::from_str(text)?;
        if c.format != CHECKPOINT_FORMAT || c.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidInput(format!("not a classifier checkpoint ({} v{})", c.format, c.version)));
        }
        if c.model.input_dim() != c.feature_dim {
            return Err(Error::ModelShape(format!(
                "checkpoint expects {} features but its model takes {}",
                c.feature_dim,
                c.model.input_dim()
            )));
        }
        Ok(c)
    }
}

impl TrainedModel {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::Mlp { .. } => ModelKind::Mlp,
            TrainedModel::MlpNodrop { .. } => ModelKind::MlpNodrop,
            TrainedModel::MlpKmeansAvg { .. } => ModelKind::MlpKmeansAvg,
            TrainedModel::MlpKmeansFeat { .. } => ModelKind::MlpKmeansFeat,
            TrainedModel::Lstm { .. } => ModelKind::Lstm,
        }
    }

    /// Width of the feature rows the model consumes.
    pub fn input_dim(&self) -> usize {
        match self {
            TrainedModel::Mlp { mlp } | TrainedModel::MlpNodrop { mlp } | TrainedModel::MlpKmeansAvg { mlp, .. } => {
                mlp.input_dim
            }
            TrainedModel::MlpKmeansFeat { mlp, .. } => mlp.input_dim - 1,
            TrainedModel::Lstm { lstm } => lstm.input_dim,
        }
    }

    pub fn loss_curve(&self) -> &[f64] {
        match self {
            TrainedModel::Mlp { mlp }
            | TrainedModel::MlpNodrop { mlp }
            | TrainedModel::MlpKmeansAvg { mlp, .. }
            | TrainedModel::MlpKmeansFeat { mlp, .. } => &mlp.loss_curve,
            TrainedModel::Lstm { lstm } => &lstm.loss_curve,
        }
    }
}

fn float_labels(set: &FeatureSet) -> Result<Vec<f64>> {
    Ok(set.binary_labels()?.into_iter().map(f64::from).collect())
}

/// Packets aligned one-to-one with the rows of `set`.
fn aligned_packets<'a>(set: &FeatureSet, packets: Option<&'a [PacketRecord]>) -> Result<&'a [PacketRecord]> {
    let packets = packets.ok_or_else(|| Error::InvalidConfig("sequence models need the packet store".into()))?;
    if packets.len() != set.len() || packets.iter().zip(&set.indices).any(|(p, &i)| p.index != i) {
        return Err(Error::InvalidInput("packet store does not align with the feature rows".into()));
    }
    Ok(packets)
}

/// Trains `kind` on a labeled feature set. `packets` must be the packets the
/// rows were extracted from when `kind` is [`ModelKind::Lstm`].
pub fn train_model(
    kind: ModelKind,
    set: &FeatureSet,
    packets: Option<&[PacketRecord]>,
    cfg: &ModelConfig,
) -> Result<ModelCheckpoint> {
    if set.is_empty() {
        return Err(Error::EmptyDataset);
    }
    let y = float_labels(set)?;
    let dim = set.dim();
    let t = &cfg.train;
    let model = match kind {
        ModelKind::Mlp | ModelKind::MlpNodrop => {
            let mut mlp = build_mlp(dim, t.dropout, kind == ModelKind::Mlp, t.seed)?;
            mlp.train(&set.rows, &y, t)?;
            if kind == ModelKind::Mlp {
                TrainedModel::Mlp { mlp }
            } else {
                TrainedModel::MlpNodrop { mlp }
            }
        }
        ModelKind::MlpKmeansAvg => {
            let scaler = Standardizer::fit(&set.rows)?;
            let scaled: Vec<Vec<f64>> = set.rows.iter().map(|r| scaler.apply(r)).collect();
            let kmeans = kmeans_fit(&scaled, &y, 2, t.seed)?;
            let mut mlp = build_mlp(dim, t.dropout, true, t.seed)?;
            mlp.train(&set.rows, &y, t)?;
            TrainedModel::MlpKmeansAvg { mlp, kmeans, scaler }
        }
        ModelKind::MlpKmeansFeat => {
            let scaler = Standardizer::fit(&set.rows)?;
            let scaled: Vec<Vec<f64>> = set.rows.iter().map(|r| scaler.apply(r)).collect();
            let kmeans = kmeans_fit(&scaled, &y, 2, t.seed)?;
            let augmented = kmeans_as_feature(&set.rows, &kmeans, &scaler);
            let mut mlp = build_mlp(dim + 1, t.dropout, true, t.seed)?;
            mlp.train(&augmented, &y, t)?;
            TrainedModel::MlpKmeansFeat { mlp, kmeans, scaler }
        }
        ModelKind::Lstm => {
            if set.extractor.is_some_and(|e| !e.supports_sequences()) {
                return Err(Error::InvalidConfig(
                    "flow records carry no packet order; the LSTM cannot use them".into(),
                ));
            }
            let packets = aligned_packets(set, packets)?;
            let windows = make_sequence_inputs(packets, cfg.time_step, cfg.mode)?;
            let mut lstm = LstmModel::new(dim, cfg.lstm, windows_time_step(&windows), cfg.mode, t)?;
            lstm.train(&set.rows, &windows, &y, t)?;
            TrainedModel::Lstm { lstm }
        }
    };
    Ok(ModelCheckpoint::new(set.extractor, dim, cfg.clone(), model))
}

fn windows_time_step(windows: &[SequenceWindow]) -> usize {
    windows.first().map_or(1, |w| w.members.len())
}

/// Attack probability per row and its class at the model's threshold.
#[derive(Debug, Clone, PartialEq)]
pub struct Predictions {
    pub indices: Vec<usize>,
    pub probs: Vec<f64>,
    pub classes: Vec<u8>,
    pub labels: Vec<Label>,
}

impl Predictions {
    pub fn to_csv(&self) -> String {
        let mut out = String::from("idx,prob,class,label\n");
        for i in 0..self.indices.len() {
            let label = self.labels[i].as_bit().map(|b| b.to_string()).unwrap_or_default();
            out.push_str(&format!("{},{},{},{}\n", self.indices[i], self.probs[i], self.classes[i], label));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let mut p = Predictions { indices: vec![], probs: vec![], classes: vec![], labels: vec![] };
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        match lines.next() {
            Some((_, h)) if h.trim() == "idx,prob,class,label" => {}
            _ => return Err(Error::Parse { line: 1, message: "expected header idx,prob,class,label".into() }),
        }
        for (n, line) in lines {
            let perr = |m: &str| Error::Parse { line: n + 1, message: m.to_string() };
            let f: Vec<&str> = line.split(',').map(str::trim).collect();
            if f.len() != 4 {
                return Err(perr("expected 4 fields"));
            }
            p.indices.push(f[0].parse().map_err(|_| perr("bad idx"))?);
            p.probs.push(f[1].parse().map_err(|_| perr("bad prob"))?);
            p.classes.push(match f[2] {
                "0" => 0,
                "1" => 1,
                _ => return Err(perr("class must be 0 or 1")),
            });
            p.labels.push(match f[3] {
                "" => Label::Unlabeled,
                "0" => Label::Benign,
                "1" => Label::Attack,
                _ => return Err(perr("label must be 0, 1 or empty")),
            });
        }
        Ok(p)
    }
}

pub fn predict_model(ck: &ModelCheckpoint, set: &FeatureSet, packets: Option<&[PacketRecord]>) -> Result<Predictions> {
    if set.dim() != ck.feature_dim {
        return Err(Error::ModelShape(format!("model expects {} features, got {}", ck.feature_dim, set.dim())));
    }
    let threshold = ck.config.train.threshold;
    let classify = |p: f64| u8::from(p >= threshold);
    let (probs, classes): (Vec<f64>, Vec<u8>) = match &ck.model {
        TrainedModel::Mlp { mlp } | TrainedModel::MlpNodrop { mlp } => {
            let probs: Vec<f64> = set.rows.iter().map(|r| mlp.predict(r)).collect::<Result<_>>()?;
            let classes = probs.iter().map(|&p| classify(p)).collect();
            (probs, classes)
        }
        TrainedModel::MlpKmeansAvg { mlp, kmeans, scaler } => {
            let mut probs = Vec::with_capacity(set.len());
            let mut classes = Vec::with_capacity(set.len());
            for r in &set.rows {
                let p = mlp.predict(r)?;
                let k = kmeans.classify(&scaler.apply(r));
                probs.push((p + f64::from(k)) / 2.0);
                classes.push(ensemble_average(p, k));
            }
            (probs, classes)
        }
        TrainedModel::MlpKmeansFeat { mlp, kmeans, scaler } => {
            let augmented = kmeans_as_feature(&set.rows, kmeans, scaler);
            let probs: Vec<f64> = augmented.iter().map(|r| mlp.predict(r)).collect::<Result<_>>()?;
            let classes = probs.iter().map(|&p| classify(p)).collect();
            (probs, classes)
        }
        TrainedModel::Lstm { lstm } => {
            let packets = aligned_packets(set, packets)?;
            let windows = make_sequence_inputs(packets, lstm.time_step, lstm.mode)?;
            let probs: Vec<f64> = windows.iter().map(|w| lstm.predict_window(&set.rows, w)).collect::<Result<_>>()?;
            let classes = probs.iter().map(|&p| classify(p)).collect();
            (probs, classes)
        }
    };
    Ok(Predictions { indices: set.indices.clone(), probs, classes, labels: set.labels.clone() })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::column_names;
    use crate::nn::seeded_rng;
    use rand::Rng;
    use std::net::Ipv4Addr;

    fn blobs(n: usize, seed: u64) -> FeatureSet {
        let mut rng = seeded_rng(seed);
        let mut set = FeatureSet::new(ExtractorKind::Manual, column_names("f", 3));
        for i in 0..n {
            let attack = i % 3 == 0;
            let c = if attack { 3.0 } else { -3.0 };
            let row = (0..3).map(|_| c + rng.gen_range(-1.0..1.0)).collect();
            set.push(i, row, if attack { Label::Attack } else { Label::Benign });
        }
        set
    }

    fn packets_for(set: &FeatureSet) -> Vec<PacketRecord> {
        set.indices
            .iter()
            .map(|&i| {
                let mut p = PacketRecord::from_frame(i, i as f64, 60, vec![]);
                p.src_ip = Ipv4Addr::new(10, 0, 0, (i % 3) as u8);
                p.dst_ip = Ipv4Addr::new(10, 0, 1, 1);
                p
            })
            .collect()
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let s = Standardizer::fit(&[vec![1.0, 5.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(s.mean, vec![2.0, 5.0]);
        assert_eq!(s.std, vec![1.0, 1.0]);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
        assert!(Standardizer::fit(&[]).is_err());
    }

    #[test]
    fn every_kind_trains_predicts_and_round_trips() {
        let train = blobs(90, 1);
        let test = blobs(30, 2);
        let cfg = ModelConfig {
            train: TrainConfig { epochs: 30, lr: 1e-2, batch_size: 16, ..TrainConfig::default() },
            lstm: LstmArch { layers: 1, hidden: 4 },
            time_step: 3,
            mode: InputMode::Sequential,
        };
        let (ptrain, ptest) = (packets_for(&train), packets_for(&test));
        for kind in ModelKind::ALL {
            let ck = train_model(kind, &train, Some(&ptrain), &cfg).unwrap();
            assert_eq!(ck.model.kind(), kind);
            let back = ModelCheckpoint::from_json(&ck.to_json().unwrap()).unwrap();
            assert_eq!(back, ck);
            let pred = predict_model(&back, &test, Some(&ptest)).unwrap();
            let correct = pred.classes.iter().zip(&test.labels).filter(|(c, l)| **c == l.as_bit().unwrap()).count();
            assert!(correct as f64 / test.len() as f64 >= 0.9, "{kind}: {correct}/{}", test.len());
            assert!(pred.probs.iter().all(|p| (0.0..=1.0).contains(p)));
            assert_eq!(Predictions::from_csv(&pred.to_csv()).unwrap(), pred);
        }
    }

    #[test]
    fn lstm_rejects_flow_features_and_missing_packets() {
        let mut set = blobs(10, 3);
        let cfg = ModelConfig::default();
        assert!(matches!(train_model(ModelKind::Lstm, &set, None, &cfg), Err(Error::InvalidConfig(_))));
        set.extractor = Some(ExtractorKind::Flowstats);
        let p = packets_for(&set);
        assert!(matches!(train_model(ModelKind::Lstm, &set, Some(&p), &cfg), Err(Error::InvalidConfig(_))));
    }

    #[test]
    fn dimension_mismatch_at_prediction() {
        let ck = train_model(ModelKind::Mlp, &blobs(30, 1), None, &ModelConfig::default()).unwrap();
        let mut other = FeatureSet::new(ExtractorKind::Manual, column_names("f", 2));
        other.push(0, vec![0.0, 0.0], Label::Benign);
        assert!(matches!(predict_model(&ck, &other, None), Err(Error::ModelShape(_))));
    }

    #[test]
    fn model_names_round_trip() {
        for k in ModelKind::ALL {
            assert_eq!(k.name().parse::<ModelKind>().unwrap(), k);
        }
    }
}
