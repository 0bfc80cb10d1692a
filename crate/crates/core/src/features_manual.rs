//! Keyword/protocol/port indicator features and their per-source batched form.
//!
//! Batched vector layout (22 slots):
//!
//! | slot  | meaning                                                    |
//! |-------|------------------------------------------------------------|
//! | 0–15  | count of each manual feature over the source's window      |
//! | 16    | unique protocol ids in the window                          |
//! | 17    | window fill (packets in the window, < window at start)     |
//! | 18    | unique destination addresses                               |
//! | 19    | unique destination ports (portless packets not counted)    |
//! | 20    | mean wire length                                           |
//! | 21    | timespan in seconds (max − min timestamp)                  |
//!
//! Slots 18–21 are toolkit-defined.

use crate::features::{column_names, ExtractorKind, FeatureSet};
use crate::ingest::PacketRecord;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeSet, HashMap, VecDeque};
use std::net::Ipv4Addr;

pub const MANUAL_DIM: usize = 16;
pub const BATCHED_DIM: usize = 22;
pub const DEFAULT_WINDOW: usize = 10;

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "pattern", rename_all = "kebab-case")]
pub enum RuleKind {
    /// Case-insensitive substring of the info string.
    KeywordMatch(String),
    ProtocolIdEquals(u8),
    /// Matches either the source or the destination port.
    PortEquals(u16),
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Rule {
    pub slot: usize,
    #[serde(flatten)]
    pub kind: RuleKind,
}

impl Rule {
    fn matches(&self, p: &PacketRecord, info_lower: &str) -> bool {
        match &self.kind {
            RuleKind::KeywordMatch(k) => info_lower.contains(&k.to_lowercase()),
            RuleKind::ProtocolIdEquals(id) => p.protocol_id == *id,
            RuleKind::PortEquals(port) => p.src_port == Some(*port) || p.dst_port == Some(*port),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct KeywordTable {
    pub entries: Vec<Rule>,
}

impl Default for KeywordTable {
    fn default() -> Self {
        use RuleKind::*;
        let kinds = [
            KeywordMatch("SYN".into()),
            KeywordMatch("ACK".into()),
            KeywordMatch("FIN".into()),
            KeywordMatch("RST".into()),
            KeywordMatch("Echo (ping)".into()),
            ProtocolIdEquals(1),
            ProtocolIdEquals(6),
            ProtocolIdEquals(17),
            KeywordMatch("GET".into()),
            KeywordMatch("len=0".into()),
            KeywordMatch("FRAG".into()),
            PortEquals(53),
            PortEquals(80),
            PortEquals(123),
            PortEquals(389),
            PortEquals(1434),
        ];
        KeywordTable { entries: kinds.into_iter().enumerate().map(|(slot, kind)| Rule { slot, kind }).collect() }
    }
}

impl KeywordTable {
    pub fn validate(&self) -> Result<()> {
        if self.entries.len() != MANUAL_DIM {
            return Err(Error::InvalidConfig(format!(
                "keyword table needs {MANUAL_DIM} entries, has {}",
                self.entries.len()
            )));
        }
        let slots: BTreeSet<usize> = self.entries.iter().map(|r| r.slot).collect();
        if slots != (0..MANUAL_DIM).collect() {
            return Err(Error::InvalidConfig("keyword table slots must be exactly 0..16".into()));
        }
        Ok(())
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let t: KeywordTable = serde_json::from_str(text)?;
        t.validate()?;
        Ok(t)
    }
}

pub fn extract_manual(p: &PacketRecord, table: &KeywordTable) -> [f64; MANUAL_DIM] {
    let info = p.info.to_lowercase();
    let mut out = [0.0; MANUAL_DIM];
    for rule in &table.entries {
        if rule.matches(p, &info) {
            out[rule.slot] = 1.0;
        }
    }
    out
}

struct WindowEntry {
    manual: [f64; MANUAL_DIM],
    protocol: u8,
    dst_ip: Ipv4Addr,
    dst_port: Option<u16>,
    length: u32,
    timestamp: f64,
}

fn batch_vector(window: &VecDeque<WindowEntry>) -> Vec<f64> {
    let mut v = vec![0.0; BATCHED_DIM];
    for e in window {
        for (slot, x) in e.manual.iter().enumerate() {
            v[slot] += x;
        }
    }
    let n = window.len() as f64;
    v[16] = window.iter().map(|e| e.protocol).collect::<BTreeSet<_>>().len() as f64;
    v[17] = n;
    v[18] = window.iter().map(|e| e.dst_ip).collect::<BTreeSet<_>>().len() as f64;
    v[19] = window.iter().filter_map(|e| e.dst_port).collect::<BTreeSet<_>>().len() as f64;
    v[20] = window.iter().map(|e| f64::from(e.length)).sum::<f64>() / n;
    let (lo, hi) = window
        .iter()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), e| (lo.min(e.timestamp), hi.max(e.timestamp)));
    v[21] = hi - lo;
    v
}

/// One batched vector per packet, computed over that packet and the
/// preceding `window - 1` packets from the same source address.
pub fn extract_batched(stream: &[PacketRecord], table: &KeywordTable, window: usize) -> Vec<Vec<f64>> {
    assert!(window >= 1, "batch window must be at least 1");
    let mut per_src: HashMap<Ipv4Addr, VecDeque<WindowEntry>> = HashMap::new();
    stream
        .iter()
        .map(|p| {
            let q = per_src.entry(p.src_ip).or_default();
            if q.len() == window {
                q.pop_front();
            }
            q.push_back(WindowEntry {
                manual: extract_manual(p, table),
                protocol: p.protocol_id,
                dst_ip: p.dst_ip,
                dst_port: p.dst_port,
                length: p.length,
                timestamp: p.timestamp,
            });
            batch_vector(q)
        })
        .collect()
}

pub fn manual_feature_set(packets: &[PacketRecord], table: &KeywordTable) -> FeatureSet {
    let mut set = FeatureSet::new(ExtractorKind::Manual, column_names("f", MANUAL_DIM));
    for p in packets {
        set.push(p.index, extract_manual(p, table).to_vec(), p.label);
    }
    set
}

pub fn batched_feature_set(packets: &[PacketRecord], table: &KeywordTable, window: usize) -> FeatureSet {
    let mut set = FeatureSet::new(ExtractorKind::ManualBatched, column_names("f", BATCHED_DIM));
    for (p, row) in packets.iter().zip(extract_batched(packets, table, window)) {
        set.push(p.index, row, p.label);
    }
    set
}
