//! Token embeddings of packet info strings.
//!
//! Info strings are tokenized with a frozen rule set, tokens are looked up in
//! a trainable embedding table and mean-pooled into one vector per packet.
//! The table is trained through a logistic probe on benign/attack labels.
//!
//! Tokenizer rules (version 1), applied to each whitespace-separated word of
//! the lowercased string:
//!
//! 1. `key=value` with an alphanumeric key: an `a.b.c.d:port` value becomes
//!    `key=ip:port`, an address becomes `key=ip`, an unsigned integer becomes
//!    `key=b<bits>` where `<bits>` is its binary magnitude, any other
//!    alphanumeric value is kept. Other values fall through to rule 3.
//! 2. A bare `a.b.c.d:port` becomes `ip:port`, a bare address `ip`.
//! 3. Otherwise the word is split on non-alphanumeric characters and each
//!    all-digit piece is replaced by `b<bits>`.
//!
//! Every token produced is a fixed point of the rules, so re-tokenizing a
//! space-joined token list returns it unchanged.

use crate::features::{column_names, ExtractorKind, FeatureSet};
use crate::ingest::{Label, PacketRecord};
use crate::nn::{bce_loss_weighted, dot, seeded_rng, sigmoid, Matrix, ParamSet};
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap, VecDeque};
use std::net::Ipv4Addr;

pub const TOKENIZER_VERSION: u32 = 1;
pub const UNKNOWN_TOKEN: &str = "<unk>";
pub const DEFAULT_DIM: usize = 64;
/// Output width of the transformer extractor this module stands in for.
pub const REFERENCE_DIM: usize = 768;
pub const DEFAULT_WINDOW: usize = 10;
pub const CHECKPOINT_FORMAT: &str = "zdl-embedding";
pub const CHECKPOINT_VERSION: u32 = 1;

const IP_PORT: &str = "ip:port";
const IP: &str = "ip";

fn magnitude_bucket(digits: &str) -> String {
    // Leading zeros and values beyond u128 still bucket by digit count.
    let bits = match digits.parse::<u128>() {
        Ok(n) => 128 - n.leading_zeros(),
        Err(_) => (digits.trim_start_matches('0').len() as f64 * std::f64::consts::LOG2_10).ceil() as u32,
    };
    format!("b{bits}")
}

fn is_digits(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit())
}

fn is_alnum(s: &str) -> bool {
    !s.is_empty() && s.bytes().all(|b| b.is_ascii_alphanumeric())
}

fn is_ip_port(s: &str) -> bool {
    s == IP_PORT
        || s.rsplit_once(':').is_some_and(|(ip, port)| ip.parse::<Ipv4Addr>().is_ok() && port.parse::<u16>().is_ok())
}

fn generic_pieces(word: &str, out: &mut Vec<String>) {
    for piece in word.split(|c: char| !c.is_ascii_alphanumeric()).filter(|p| !p.is_empty()) {
        out.push(if is_digits(piece) { magnitude_bucket(piece) } else { piece.to_string() });
    }
}

pub fn tokenize(info: &str) -> Vec<String> {
    let mut out = Vec::new();
    for word in info.to_lowercase().split_whitespace() {
        if let Some((key, value)) = word.split_once('=') {
            if is_alnum(key) {
                if is_ip_port(value) {
                    out.push(format!("{key}={IP_PORT}"));
                    continue;
                }
                if value.parse::<Ipv4Addr>().is_ok() {
                    out.push(format!("{key}={IP}"));
                    continue;
                }
                if is_digits(value) {
                    out.push(format!("{key}={}", magnitude_bucket(value)));
                    continue;
                }
                if is_alnum(value) {
                    out.push(word.to_string());
                    continue;
                }
            }
        }
        if is_ip_port(word) {
            out.push(IP_PORT.into());
        } else if word.parse::<Ipv4Addr>().is_ok() {
            out.push(IP.into());
        } else {
            generic_pieces(word, &mut out);
        }
    }
    out
}

/// Token → id map. Id 0 is the unknown token; known tokens follow in
/// lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TokenVocab {
    pub tokenizer_version: u32,
    pub min_freq: usize,
    pub tokens: Vec<String>,
}

impl TokenVocab {
    pub fn build<'a>(corpus: impl IntoIterator<Item = &'a [String]>, min_freq: usize) -> Self {
        let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
        for doc in corpus {
            for t in doc {
                *counts.entry(t.as_str()).or_default() += 1;
            }
        }
        let mut tokens = vec![UNKNOWN_TOKEN.to_string()];
        tokens.extend(counts.into_iter().filter(|&(_, c)| c >= min_freq.max(1)).map(|(t, _)| t.to_string()));
        Self { tokenizer_version: TOKENIZER_VERSION, min_freq, tokens }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn id(&self, token: &str) -> usize {
        self.tokens[1..].binary_search_by(|t| t.as_str().cmp(token)).map_or(0, |i| i + 1)
    }

    pub fn ids(&self, tokens: &[String]) -> Vec<usize> {
        tokens.iter().map(|t| self.id(t)).collect()
    }

    fn validate(&self) -> Result<()> {
        let sorted = self.tokens[1..].windows(2).all(|w| w[0] < w[1]);
        if self.tokens.first().map(String::as_str) != Some(UNKNOWN_TOKEN) || !sorted {
            return Err(Error::InvalidInput("vocabulary must start with <unk> and be strictly sorted".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct EmbedConfig {
    pub dim: usize,
    pub min_freq: usize,
    pub epochs: usize,
    pub lr: f64,
    /// Weight on attack examples in the probe loss; `None` balances the
    /// classes by their training counts.
    pub pos_weight: Option<f64>,
    pub seed: u64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        Self { dim: DEFAULT_DIM, min_freq: 1, epochs: 10, lr: 0.5, pos_weight: None, seed: 0 }
    }
}

/// Embedding table plus the logistic probe it was trained through.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedParams {
    pub table: Matrix,
    pub probe_w: Vec<f64>,
    pub probe_b: Vec<f64>,
}

impl ParamSet for EmbedParams {
    fn param_slices(&self) -> Vec<&[f64]> {
        vec![&self.table.data, &self.probe_w, &self.probe_b]
    }

    fn param_slices_mut(&mut self) -> Vec<&mut [f64]> {
        vec![&mut self.table.data, &mut self.probe_w, &mut self.probe_b]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbeddingModel {
    pub format: String,
    pub version: u32,
    pub vocab: TokenVocab,
    pub dim: usize,
    pub reference_dim: usize,
    pub pooling: String,
    pub seed: u64,
    pub config: EmbedConfig,
    pub epoch_losses: Vec<f64>,
    pub params: EmbedParams,
}

impl EmbeddingModel {
    /// Table rows uniform in `±1/sqrt(dim)`.
    pub fn init(vocab: TokenVocab, cfg: &EmbedConfig) -> Result<Self> {
        if cfg.dim == 0 {
            return Err(Error::InvalidConfig("embedding dimension must be at least 1".into()));
        }
        let mut rng = seeded_rng(cfg.seed);
        let table = Matrix::init_uniform(vocab.len(), cfg.dim, &mut rng);
        let probe = Matrix::init_uniform(1, cfg.dim, &mut rng);
        Ok(Self {
            format: CHECKPOINT_FORMAT.into(),
            version: CHECKPOINT_VERSION,
            vocab,
            dim: cfg.dim,
            reference_dim: REFERENCE_DIM,
            pooling: "mean".into(),
            seed: cfg.seed,
            config: *cfg,
            epoch_losses: Vec::new(),
            params: EmbedParams { table, probe_w: probe.data, probe_b: vec![0.0] },
        })
    }

    pub fn validate(&self) -> Result<()> {
        if self.format != CHECKPOINT_FORMAT || self.version != CHECKPOINT_VERSION {
            return Err(Error::InvalidInput(format!(
                "not an embedding checkpoint ({} v{})",
                self.format, self.version
            )));
        }
        self.vocab.validate()?;
        let p = &self.params;
        if self.dim == 0
            || p.table.rows != self.vocab.len()
            || p.table.cols != self.dim
            || p.table.data.len() != self.dim * self.vocab.len()
            || p.probe_w.len() != self.dim
            || p.probe_b.len() != 1
        {
            return Err(Error::ModelShape("embedding table shape disagrees with vocabulary/dim".into()));
        }
        if !p.all_finite() {
            return Err(Error::ModelShape("embedding table contains non-finite values".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: EmbeddingModel = serde_json::from_str(text)?;
        m.validate()?;
        Ok(m)
    }

    fn pool_ids(&self, ids: &[usize]) -> Vec<f64> {
        let mut v = vec![0.0; self.dim];
        if ids.is_empty() {
            return v;
        }
        for &id in ids {
            for (a, b) in v.iter_mut().zip(self.params.table.row(id)) {
                *a += b;
            }
        }
        let n = ids.len() as f64;
        v.iter_mut().for_each(|a| *a /= n);
        v
    }

    /// Probe probability that a token list is attack traffic.
    pub fn probe(&self, tokens: &[String]) -> f64 {
        let v = self.pool_ids(&self.vocab.ids(tokens));
        sigmoid(dot(&self.params.probe_w, &v) + self.params.probe_b[0])
    }

    fn probe_loss(&self, docs: &[(Vec<usize>, f64)], pos_weight: f64) -> f64 {
        let p: Vec<f64> = docs
            .iter()
            .map(|(ids, _)| sigmoid(dot(&self.params.probe_w, &self.pool_ids(ids)) + self.params.probe_b[0]))
            .collect();
        let y: Vec<f64> = docs.iter().map(|(_, y)| *y).collect();
        bce_loss_weighted(&p, &y, pos_weight)
    }

    /// Gradient of the weighted probe loss averaged over `docs`.
    fn probe_gradient(&self, docs: &[(Vec<usize>, f64)], pos_weight: f64) -> EmbedParams {
        let mut g = self.params.zeros_like();
        let n = docs.len() as f64;
        for (ids, y) in docs {
            let v = self.pool_ids(ids);
            let p = sigmoid(dot(&self.params.probe_w, &v) + self.params.probe_b[0]);
            let dz = (p * (pos_weight * y + 1.0 - y) - pos_weight * y) / n;
            for (gw, vi) in g.probe_w.iter_mut().zip(&v) {
                *gw += dz * vi;
            }
            g.probe_b[0] += dz;
            if ids.is_empty() {
                continue;
            }
            let share = dz / ids.len() as f64;
            for &id in ids {
                for (ge, w) in g.table.row_mut(id).iter_mut().zip(&self.params.probe_w) {
                    *ge += share * w;
                }
            }
        }
        g
    }
}

pub fn embed_packet(m: &EmbeddingModel, tokens: &[String]) -> Vec<f64> {
    m.pool_ids(&m.vocab.ids(tokens))
}

/// Builds the vocabulary from `corpus` and trains the table with per-example
/// SGD through the probe.
pub fn train_embeddings(corpus: &[(String, Label)], cfg: &EmbedConfig) -> Result<EmbeddingModel> {
    let labeled: Vec<(Vec<String>, f64)> =
        corpus.iter().filter_map(|(info, l)| l.as_bit().map(|b| (tokenize(info), f64::from(b)))).collect();
    let pos = labeled.iter().filter(|(_, y)| *y == 1.0).count();
    if pos == 0 || pos == labeled.len() {
        return Err(Error::SingleClassCorpus);
    }
    let pos_weight = cfg.pos_weight.unwrap_or((labeled.len() - pos) as f64 / pos as f64);
    let vocab = TokenVocab::build(labeled.iter().map(|(t, _)| t.as_slice()), cfg.min_freq);
    let mut m = EmbeddingModel::init(vocab, cfg)?;
    let docs: Vec<(Vec<usize>, f64)> = labeled.iter().map(|(t, y)| (m.vocab.ids(t), *y)).collect();
    let mut rng = seeded_rng(cfg.seed ^ 0xe1b_ed00);
    let mut order: Vec<usize> = (0..docs.len()).collect();
    for epoch in 0..cfg.epochs {
        order.shuffle(&mut rng);
        for &i in &order {
            let g = m.probe_gradient(std::slice::from_ref(&docs[i]), pos_weight);
            m.params.add_scaled(&g, -cfg.lr);
        }
        let loss = m.probe_loss(&docs, pos_weight);
        if !loss.is_finite() || !m.params.all_finite() {
            return Err(Error::DivergedTraining { epoch });
        }
        log::debug!("embedding epoch {epoch}: probe loss {loss:.6}");
        m.epoch_losses.push(loss);
    }
    Ok(m)
}

/// Per-packet mean of the last `window` embeddings from the same source
/// address, including the packet itself.
pub fn embed_batched(stream: &[PacketRecord], m: &EmbeddingModel, window: usize) -> Vec<Vec<f64>> {
    let window = window.max(1);
    let mut per_src: HashMap<Ipv4Addr, VecDeque<Vec<f64>>> = HashMap::new();
    stream
        .iter()
        .map(|p| {
            let q = per_src.entry(p.src_ip).or_default();
            q.push_back(embed_packet(m, &tokenize(&p.info)));
            if q.len() > window {
                q.pop_front();
            }
            let mut mean = vec![0.0; m.dim];
            for v in q.iter() {
                for (a, b) in mean.iter_mut().zip(v) {
                    *a += b;
                }
            }
            let n = q.len() as f64;
            mean.iter_mut().for_each(|a| *a /= n);
            mean
        })
        .collect()
}

pub fn embed_feature_set(packets: &[PacketRecord], m: &EmbeddingModel) -> FeatureSet {
    let mut set = FeatureSet::new(ExtractorKind::Embed, column_names("e", m.dim));
    for p in packets {
        set.push(p.index, embed_packet(m, &tokenize(&p.info)), p.label);
    }
    set
}

pub fn embed_batched_feature_set(packets: &[PacketRecord], m: &EmbeddingModel, window: usize) -> FeatureSet {
    let mut set = FeatureSet::new(ExtractorKind::EmbedBatched, column_names("e", m.dim));
    for (p, row) in packets.iter().zip(embed_batched(packets, m, window)) {
        set.push(p.index, row, p.label);
    }
    set
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::gradcheck::max_param_error;
    use proptest::prelude::*;
    use rand::Rng;

    fn toks(s: &[&str]) -> Vec<String> {
        s.iter().map(|t| t.to_string()).collect()
    }

    #[test]
    fn tokenizer_examples() {
        assert_eq!(tokenize("TCP SYN src=10.0.0.1:4242"), toks(&["tcp", "syn", "src=ip:port"]));
        assert!(tokenize("").is_empty());
        assert_eq!(
            tokenize("UDP src=1.2.3.4 dst=5.6.7.8 len=60 DNS query www.example.com"),
            toks(&["udp", "src=ip", "dst=ip", "len=b6", "dns", "query", "www", "example", "com"])
        );
        assert_eq!(
            tokenize("ICMP Echo (ping) request type=8 code=0"),
            toks(&["icmp", "echo", "ping", "request", "type=b4", "code=b0"])
        );
        assert_eq!(tokenize("GET /a/1.html HTTP/1.1"), toks(&["get", "a", "b1", "html", "http", "b1", "b1"]));
        assert_eq!(tokenize("10.0.0.1:80 10.0.0.1"), toks(&["ip:port", "ip"]));
        assert_eq!(tokenize("x=a/b"), toks(&["x", "a", "b"]));
        assert_eq!(tokenize("a b"), tokenize("a b"));
    }

    #[test]
    fn huge_numbers_bucket() {
        let t = tokenize("seq=123456789012345678901234567890123456789012345678901234567890");
        assert_eq!(t.len(), 1);
        assert!(t[0].starts_with("seq=b"));
    }

    proptest! {
        #[test]
        fn retokenizing_is_stable(words in proptest::collection::vec("[A-Za-z0-9=:./()-]{0,12}", 0..8)) {
            let t = tokenize(&words.join(" "));
            prop_assert_eq!(tokenize(&t.join(" ")), t);
        }

        #[test]
        fn retokenizing_synthesized_info(a in any::<u32>(), b in any::<u16>(), n in any::<u64>()) {
            let info = format!("TCP ACK src={}:{b} dst={} len={n} plen=0", Ipv4Addr::from(a), Ipv4Addr::from(a ^ 1));
            let t = tokenize(&info);
            prop_assert_eq!(tokenize(&t.join(" ")), t);
        }
    }

    fn hand_model(rows: &[Vec<f64>], tokens: &[&str]) -> EmbeddingModel {
        let vocab = TokenVocab { tokenizer_version: 1, min_freq: 1, tokens: toks(tokens) };
        let mut m = EmbeddingModel::init(vocab, &EmbedConfig { dim: rows[0].len(), ..EmbedConfig::default() }).unwrap();
        m.params.table = Matrix::from_rows(rows).unwrap();
        m
    }

    #[test]
    fn pooling_examples() {
        let m = hand_model(&[vec![9.0, 9.0], vec![1.0, 0.0], vec![0.0, 1.0]], &[UNKNOWN_TOKEN, "a", "b"]);
        assert_eq!(embed_packet(&m, &[]), vec![0.0, 0.0]);
        assert_eq!(embed_packet(&m, &toks(&["a"])), vec![1.0, 0.0]);
        assert_eq!(embed_packet(&m, &toks(&["a", "b"])), vec![0.5, 0.5]);
        assert_eq!(embed_packet(&m, &toks(&["zzz"])), vec![9.0, 9.0]);
        assert_eq!(embed_packet(&m, &toks(&["b", "a", "b"])), embed_packet(&m, &toks(&["b", "b", "a"])));
    }

    #[test]
    fn vocab_is_sorted_and_thresholded() {
        let docs = [toks(&["b", "a", "c"]), toks(&["b", "a"])];
        let v = TokenVocab::build(docs.iter().map(Vec::as_slice), 2);
        assert_eq!(v.tokens, toks(&[UNKNOWN_TOKEN, "a", "b"]));
        assert_eq!(v.id("a"), 1);
        assert_eq!(v.id("c"), 0);
        assert_eq!(v, TokenVocab::build(docs.iter().map(Vec::as_slice), 2));
    }

    fn separable_corpus() -> Vec<(String, Label)> {
        (0..40)
            .map(
                |i| {
                    if i % 4 == 0 {
                        ("flood".to_string(), Label::Attack)
                    } else {
                        ("normal".to_string(), Label::Benign)
                    }
                },
            )
            .collect()
    }

    #[test]
    fn probe_separates_token_identity() {
        let cfg = EmbedConfig { dim: 4, epochs: 30, ..EmbedConfig::default() };
        let m = train_embeddings(&separable_corpus(), &cfg).unwrap();
        for (info, label) in separable_corpus() {
            assert_eq!(m.probe(&tokenize(&info)) >= 0.5, label.is_attack());
        }
        let again = train_embeddings(&separable_corpus(), &cfg).unwrap();
        assert_eq!(m, again);
    }

    #[test]
    fn zero_epochs_leaves_initialization() {
        let cfg = EmbedConfig { dim: 3, epochs: 0, seed: 5, ..EmbedConfig::default() };
        let m = train_embeddings(&separable_corpus(), &cfg).unwrap();
        let fresh = EmbeddingModel::init(m.vocab.clone(), &cfg).unwrap();
        assert_eq!(m.params, fresh.params);
        let id = m.vocab.id("flood");
        assert_eq!(embed_packet(&m, &toks(&["flood"])), fresh.params.table.row(id).to_vec());
    }

    #[test]
    fn single_class_is_rejected() {
        let c = vec![("x".to_string(), Label::Benign); 3];
        assert!(matches!(train_embeddings(&c, &EmbedConfig::default()), Err(Error::SingleClassCorpus)));
        assert!(
            EmbeddingModel::init(TokenVocab::build([], 1), &EmbedConfig { dim: 0, ..EmbedConfig::default() }).is_err()
        );
    }

    #[test]
    fn probe_gradient_matches_finite_differences() {
        let mut rng = seeded_rng(8);
        for draw in 0..100 {
            let vocab = TokenVocab { tokenizer_version: 1, min_freq: 1, tokens: toks(&[UNKNOWN_TOKEN, "a", "b", "c"]) };
            let m = EmbeddingModel::init(vocab, &EmbedConfig { dim: 3, seed: draw, ..EmbedConfig::default() }).unwrap();
            let docs: Vec<(Vec<usize>, f64)> = (0..3)
                .map(|_| {
                    let n = rng.gen_range(0..4);
                    ((0..n).map(|_| rng.gen_range(0..4)).collect(), f64::from(rng.gen_range(0..2u8)))
                })
                .collect();
            let w = rng.gen_range(0.5..3.0);
            let g = m.probe_gradient(&docs, w);
            let err = max_param_error(&m.params, &g, |p| {
                EmbeddingModel { params: p.clone(), ..m.clone() }.probe_loss(&docs, w)
            });
            assert!(err < 1e-4, "draw {draw}: {err}");
        }
    }

    fn pkt(index: usize, src: u8, info: &str) -> PacketRecord {
        let mut p = PacketRecord::from_frame(index, index as f64, 0, vec![]);
        p.src_ip = Ipv4Addr::new(10, 0, 0, src);
        p.info = info.into();
        p
    }

    #[test]
    fn batched_examples() {
        let m = hand_model(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], &[UNKNOWN_TOKEN, "a", "b"]);
        let same = vec![pkt(0, 1, "a"), pkt(1, 1, "a"), pkt(2, 1, "a")];
        assert!(embed_batched(&same, &m, 10).iter().all(|v| v == &vec![1.0, 0.0]));
        let mixed = vec![pkt(0, 1, "a"), pkt(1, 2, "b"), pkt(2, 1, "b")];
        let out = embed_batched(&mixed, &m, 2);
        assert_eq!(out, vec![vec![1.0, 0.0], vec![0.0, 1.0], vec![0.5, 0.5]]);
        let singles: Vec<Vec<f64>> = mixed.iter().map(|p| embed_packet(&m, &tokenize(&p.info))).collect();
        assert_eq!(embed_batched(&mixed, &m, 1), singles);
    }

    #[test]
    fn batched_sources_are_independent() {
        let m = hand_model(&[vec![0.0, 0.0], vec![1.0, 0.0], vec![0.0, 1.0]], &[UNKNOWN_TOKEN, "a", "b"]);
        let stream: Vec<PacketRecord> =
            (0..30).map(|i| pkt(i, (i * 7 % 3) as u8, if i % 5 < 2 { "a" } else { "b a" })).collect();
        let joint = embed_batched(&stream, &m, 4);
        for src in 0..3u8 {
            let mine: Vec<usize> = (0..stream.len()).filter(|&i| stream[i].src_ip.octets()[3] == src).collect();
            let alone: Vec<PacketRecord> = mine.iter().map(|&i| stream[i].clone()).collect();
            let solo = embed_batched(&alone, &m, 4);
            for (k, &i) in mine.iter().enumerate() {
                assert_eq!(joint[i], solo[k]);
            }
        }
    }

    #[test]
    fn checkpoint_round_trip() {
        let m = train_embeddings(&separable_corpus(), &EmbedConfig { dim: 4, epochs: 2, ..EmbedConfig::default() })
            .unwrap();
        assert_eq!(EmbeddingModel::from_json(&m.to_json().unwrap()).unwrap(), m);
        let mut bad = m.clone();
        bad.vocab.tokens.swap(1, 2);
        assert!(EmbeddingModel::from_json(&bad.to_json().unwrap()).is_err());
    }
}
