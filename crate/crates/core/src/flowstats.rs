//! Host-pair flows and their statistical features.
//!
//! Packets between the same two addresses (either direction) form one flow
//! until the pair is idle for longer than the timeout. The forward direction
//! is the source of the flow's first packet.
//!
//! Feature layout (24 columns):
//!
//! | col | feature            | col | feature         |
//! |-----|--------------------|-----|-----------------|
//! | 0   | duration (s)       | 12  | fwd_len_std     |
//! | 1   | fwd_pkts           | 13  | bwd_len_mean    |
//! | 2   | bwd_pkts           | 14  | bwd_len_std     |
//! | 3   | fwd_bytes          | 15  | iat_mean        |
//! | 4   | bwd_bytes          | 16  | iat_std         |
//! | 5   | pkts_per_sec       | 17  | syn_count       |
//! | 6   | bytes_per_sec      | 18  | ack_count       |
//! | 7   | len_min            | 19  | fin_count       |
//! | 8   | len_max            | 20  | rst_count       |
//! | 9   | len_mean           | 21  | psh_count       |
//! | 10  | len_std            | 22  | urg_count       |
//! | 11  | fwd_len_mean       | 23  | down_up_ratio   |
//!
//! Rates over a zero duration equal the plain totals. Standard deviations
//! are population deviations; statistics over no packets are 0. The
//! down/up ratio is `bwd_pkts / fwd_pkts` (0 without forward packets).

use crate::features::{column_names, ExtractorKind, FeatureSet};
use crate::ingest::decode::{TCP_ACK, TCP_FIN, TCP_PSH, TCP_RST, TCP_SYN, TCP_URG};
use crate::ingest::{Label, PacketRecord};
use crate::{Error, Result};
use std::collections::HashMap;
use std::net::Ipv4Addr;

pub const FLOW_DIM: usize = 24;
pub const DEFAULT_IDLE_TIMEOUT: f64 = 120.0;

pub const FEATURE_NAMES: [&str; FLOW_DIM] = [
    "duration",
    "fwd_pkts",
    "bwd_pkts",
    "fwd_bytes",
    "bwd_bytes",
    "pkts_per_sec",
    "bytes_per_sec",
    "len_min",
    "len_max",
    "len_mean",
    "len_std",
    "fwd_len_mean",
    "fwd_len_std",
    "bwd_len_mean",
    "bwd_len_std",
    "iat_mean",
    "iat_std",
    "syn_count",
    "ack_count",
    "fin_count",
    "rst_count",
    "psh_count",
    "urg_count",
    "down_up_ratio",
];

/// Column pairs exchanged when a flow's forward direction is flipped.
pub const DIRECTIONAL_PAIRS: [(usize, usize); 4] = [(1, 2), (3, 4), (11, 13), (12, 14)];
pub const DOWN_UP_RATIO: usize = 23;

/// Unordered address pair, smaller address first.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct FlowKey {
    pub ip_a: Ipv4Addr,
    pub ip_b: Ipv4Addr,
}

impl FlowKey {
    pub fn new(x: Ipv4Addr, y: Ipv4Addr) -> Self {
        Self { ip_a: x.min(y), ip_b: x.max(y) }
    }

    pub fn of(p: &PacketRecord) -> Self {
        Self::new(p.src_ip, p.dst_ip)
    }
}

/// The per-packet facts a flow keeps about its members.
#[derive(Debug, Clone, PartialEq)]
pub struct FlowPacket {
    pub index: usize,
    pub timestamp: f64,
    pub length: u32,
    pub forward: bool,
    pub tcp_flags: u8,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FlowRecord {
    pub key: FlowKey,
    pub fwd_src: Ipv4Addr,
    pub members: Vec<FlowPacket>,
    pub first_ts: f64,
    pub last_ts: f64,
    pub features: Vec<f64>,
}

impl FlowRecord {
    pub fn packets(&self) -> Vec<usize> {
        self.members.iter().map(|m| m.index).collect()
    }

    /// Majority label of the labeled members; ties count as attack.
    pub fn label(&self) -> Label {
        let attack = self.members.iter().filter(|m| m.label == Label::Attack).count();
        let benign = self.members.iter().filter(|m| m.label == Label::Benign).count();
        match (attack, benign) {
            (0, 0) => Label::Unlabeled,
            (a, b) if a >= b => Label::Attack,
            _ => Label::Benign,
        }
    }

    /// The same flow seen with the other endpoint as forward.
    pub fn reoriented(&self) -> Result<Self> {
        let fwd_src = if self.fwd_src == self.key.ip_a { self.key.ip_b } else { self.key.ip_a };
        let members: Vec<FlowPacket> =
            self.members.iter().map(|m| FlowPacket { forward: !m.forward, ..m.clone() }).collect();
        let mut f = Self { fwd_src, members, ..self.clone() };
        f.features = flow_features(&f)?;
        Ok(f)
    }
}

fn mean_std(xs: &[f64]) -> (f64, f64) {
    if xs.is_empty() {
        return (0.0, 0.0);
    }
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

pub fn flow_features(f: &FlowRecord) -> Result<Vec<f64>> {
    if f.members.is_empty() {
        return Err(Error::EmptyFlow);
    }
    let lens = |pred: &dyn Fn(&FlowPacket) -> bool| -> Vec<f64> {
        f.members.iter().filter(|m| pred(m)).map(|m| f64::from(m.length)).collect()
    };
    let all = lens(&|_| true);
    let fwd = lens(&|m| m.forward);
    let bwd = lens(&|m| !m.forward);
    let duration = f.last_ts - f.first_ts;
    let count = all.len() as f64;
    let bytes: f64 = all.iter().sum();
    let per_sec = |v: f64| if duration > 0.0 { v / duration } else { v };
    let (len_mean, len_std) = mean_std(&all);
    let (fwd_mean, fwd_std) = mean_std(&fwd);
    let (bwd_mean, bwd_std) = mean_std(&bwd);
    let iats: Vec<f64> = f.members.windows(2).map(|w| w[1].timestamp - w[0].timestamp).collect();
    let (iat_mean, iat_std) = mean_std(&iats);
    let flag = |bit: u8| f.members.iter().filter(|m| m.tcp_flags & bit != 0).count() as f64;
    let ratio = if fwd.is_empty() { 0.0 } else { bwd.len() as f64 / fwd.len() as f64 };
    Ok(vec![
        duration,
        fwd.len() as f64,
        bwd.len() as f64,
        fwd.iter().sum(),
        bwd.iter().sum(),
        per_sec(count),
        per_sec(bytes),
        all.iter().copied().fold(f64::INFINITY, f64::min),
        all.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        len_mean,
        len_std,
        fwd_mean,
        fwd_std,
        bwd_mean,
        bwd_std,
        iat_mean,
        iat_std,
        flag(TCP_SYN),
        flag(TCP_ACK),
        flag(TCP_FIN),
        flag(TCP_RST),
        flag(TCP_PSH),
        flag(TCP_URG),
        ratio,
    ])
}

/// Groups packets into flows. Packets are taken in timestamp order (ties by
/// input position); flows are returned in order of their first packet.
pub fn assign_flows(packets: &[PacketRecord], idle_timeout: f64) -> Vec<FlowRecord> {
    let mut order: Vec<usize> = (0..packets.len()).collect();
    order.sort_by(|&a, &b| packets[a].timestamp.total_cmp(&packets[b].timestamp));
    let mut active: HashMap<FlowKey, usize> = HashMap::new();
    let mut flows: Vec<FlowRecord> = Vec::new();
    for &pos in &order {
        let p = &packets[pos];
        let key = FlowKey::of(p);
        let open = active.get(&key).copied().filter(|&i| p.timestamp - flows[i].last_ts <= idle_timeout);
        let slot = match open {
            Some(i) => i,
            None => {
                flows.push(FlowRecord {
                    key,
                    fwd_src: p.src_ip,
                    members: Vec::new(),
                    first_ts: p.timestamp,
                    last_ts: p.timestamp,
                    features: Vec::new(),
                });
                active.insert(key, flows.len() - 1);
                flows.len() - 1
            }
        };
        let f = &mut flows[slot];
        f.last_ts = p.timestamp;
        f.members.push(FlowPacket {
            index: p.index,
            timestamp: p.timestamp,
            length: p.length,
            forward: p.src_ip == f.fwd_src,
            tcp_flags: p.tcp_flags(),
            label: p.label,
        });
    }
    for f in &mut flows {
        f.features = flow_features(f).expect("flows are created with a packet");
    }
    flows
}

pub fn flow_feature_set(flows: &[FlowRecord]) -> FeatureSet {
    let mut set = FeatureSet::new(ExtractorKind::Flowstats, column_names("fl", FLOW_DIM));
    for (i, f) in flows.iter().enumerate() {
        set.push(i, f.features.clone(), f.label());
    }
    set
}

/// Flow CSV: `idx,ip_a,ip_b,fwd_src,first_ts,last_ts,packets,fl0..fl23,label`
/// with member indices joined by `;`.
pub fn flows_to_csv(flows: &[FlowRecord]) -> String {
    let mut out = String::from("idx,ip_a,ip_b,fwd_src,first_ts,last_ts,packets");
    for c in column_names("fl", FLOW_DIM) {
        out.push(',');
        out.push_str(&c);
    }
    out.push_str(",label\n");
    for (i, f) in flows.iter().enumerate() {
        let members: Vec<String> = f.packets().iter().map(usize::to_string).collect();
        out.push_str(&format!(
            "{i},{},{},{},{},{},{}",
            f.key.ip_a,
            f.key.ip_b,
            f.fwd_src,
            f.first_ts,
            f.last_ts,
            members.join(";")
        ));
        for v in &f.features {
            out.push_str(&format!(",{v}"));
        }
        out.push(',');
        if let Some(b) = f.label().as_bit() {
            out.push_str(&b.to_string());
        }
        out.push('\n');
    }
    out
}

/// Member packet indices of each row of a flow CSV, in row order.
pub fn flow_members_from_csv(text: &str) -> Result<Vec<Vec<usize>>> {
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate().skip(1).filter(|(_, l)| !l.trim().is_empty()) {
        let field =
            line.split(',').nth(6).ok_or(Error::Parse { line: n + 1, message: "missing packets column".into() })?;
        let members = field
            .split(';')
            .filter(|s| !s.is_empty())
            .map(|s| s.parse().map_err(|_| Error::Parse { line: n + 1, message: format!("bad packet index {s:?}") }))
            .collect::<Result<Vec<usize>>>()?;
        out.push(members);
    }
    Ok(out)
}

/// Copies each flow's score to its member packets, sorted by packet index.
pub fn expand_to_packets<T: Clone>(members: &[Vec<usize>], per_flow: &[T]) -> Vec<(usize, T)> {
    let mut out: Vec<(usize, T)> =
        members.iter().zip(per_flow).flat_map(|(m, v)| m.iter().map(move |&i| (i, v.clone()))).collect();
    out.sort_by_key(|(i, _)| *i);
    out
}
