//! Capture parsing, canonical info strings, the JSON Lines packet store and
//! label sidecars.

pub mod bits;
pub mod decode;
pub mod frame;
pub mod hexdump;
pub mod info;
pub mod labels;
pub mod pcap;

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use std::io::{BufRead, Write};
use std::net::Ipv4Addr;

pub use bits::{pad_and_bitize, BitVector12144, FRAME_BITS, FRAME_BYTES};
pub use hexdump::{parse_hexdump, render_hexdump};
pub use info::synthesize_info;
pub use labels::{apply_labels, parse_label_sidecar, LabelSidecar};
pub use pcap::parse_pcap;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Default)]
pub enum Label {
    Benign,
    Attack,
    #[default]
    Unlabeled,
}

impl Label {
    pub fn from_bit(v: u8) -> Option<Self> {
        match v {
            0 => Some(Label::Benign),
            1 => Some(Label::Attack),
            _ => None,
        }
    }

    pub fn as_bit(self) -> Option<u8> {
        match self {
            Label::Benign => Some(0),
            Label::Attack => Some(1),
            Label::Unlabeled => None,
        }
    }

    pub fn is_attack(self) -> bool {
        self == Label::Attack
    }
}

impl Serialize for Label {
    fn serialize<S: Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        self.as_bit().serialize(s)
    }
}

impl<'de> Deserialize<'de> for Label {
    fn deserialize<D: Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        match Option::<u8>::deserialize(d)? {
            None => Ok(Label::Unlabeled),
            Some(v) => {
                Label::from_bit(v).ok_or_else(|| serde::de::Error::custom(format!("label must be 0 or 1, got {v}")))
            }
        }
    }
}

mod hex_bytes {
    use serde::{Deserialize, Deserializer, Serializer};

    pub fn serialize<S: Serializer>(v: &[u8], s: S) -> Result<S::Ok, S::Error> {
        s.serialize_str(&hex::encode(v))
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<u8>, D::Error> {
        let s = String::deserialize(d)?;
        hex::decode(s).map_err(serde::de::Error::custom)
    }
}

/// One captured packet.
///
/// Non-IPv4 frames carry `0.0.0.0` addresses and `protocol_id` 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PacketRecord {
    pub index: usize,
    pub timestamp: f64,
    pub src_ip: Ipv4Addr,
    pub dst_ip: Ipv4Addr,
    pub src_port: Option<u16>,
    pub dst_port: Option<u16>,
    pub protocol_id: u8,
    /// Bytes on the wire (pcap original length).
    pub length: u32,
    #[serde(with = "hex_bytes")]
    pub raw: Vec<u8>,
    pub info: String,
    pub label: Label,
}

impl PacketRecord {
    /// Builds a record from a normalized Ethernet frame.
    pub fn from_frame(index: usize, timestamp: f64, length: u32, mut raw: Vec<u8>) -> Self {
        raw.truncate(FRAME_BYTES);
        let (src_ip, dst_ip, protocol_id, src_port, dst_port) = match decode::decode_ethernet(&raw) {
            Some(h) => {
                let (sp, dp) = h.ports();
                (h.src, h.dst, h.protocol, sp, dp)
            }
            None => (Ipv4Addr::UNSPECIFIED, Ipv4Addr::UNSPECIFIED, 0, None, None),
        };
        let info = synthesize_info(&raw);
        Self {
            index,
            timestamp,
            src_ip,
            dst_ip,
            src_port,
            dst_port,
            protocol_id,
            length,
            raw,
            info,
            label: Label::Unlabeled,
        }
    }

    pub fn headers(&self) -> Option<decode::Ipv4Headers> {
        decode::decode_ethernet(&self.raw)
    }

    pub fn tcp_flags(&self) -> u8 {
        self.headers().map(|h| h.tcp_flags()).unwrap_or(0)
    }
}

/// Rewrites frames from non-Ethernet link types as Ethernet frames so the
/// rest of the toolkit sees one layout.
pub fn normalize_frame(data: &[u8], linktype: u32) -> Vec<u8> {
    let with_eth = |ip: &[u8]| {
        let mut f = Vec::with_capacity(14 + ip.len());
        f.extend_from_slice(&[0u8; 12]);
        f.extend_from_slice(&decode::ETHERTYPE_IPV4.to_be_bytes());
        f.extend_from_slice(ip);
        f
    };
    match linktype {
        pcap::LINKTYPE_RAW | pcap::LINKTYPE_IPV4 if data.first().map(|b| b >> 4) == Some(4) => with_eth(data),
        pcap::LINKTYPE_LINUX_SLL if data.len() >= 16 && data[14..16] == decode::ETHERTYPE_IPV4.to_be_bytes() => {
            with_eth(&data[16..])
        }
        _ => data.to_vec(),
    }
}

/// Packets from a hex dump have no capture metadata: timestamps are the
/// packet ordinal in seconds and the wire length is the dump length.
pub fn records_from_hexdump(text: &str) -> Result<Vec<PacketRecord>> {
    Ok(parse_hexdump(text)?
        .into_iter()
        .enumerate()
        .map(|(i, bytes)| {
            let len = bytes.len() as u32;
            PacketRecord::from_frame(i, i as f64, len, bytes)
        })
        .collect())
}

pub fn write_store<W: Write>(mut w: W, packets: &[PacketRecord]) -> Result<()> {
    for p in packets {
        serde_json::to_writer(&mut w, p)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub fn store_to_string(packets: &[PacketRecord]) -> String {
    let mut buf = Vec::new();
    write_store(&mut buf, packets).expect("writing to memory");
    String::from_utf8(buf).expect("json is utf-8")
}

pub fn read_store<R: BufRead>(r: R) -> Result<Vec<PacketRecord>> {
    let mut out = Vec::new();
    for (n, line) in r.lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PacketRecord =
            serde_json::from_str(&line).map_err(|e| Error::Parse { line: n + 1, message: e.to_string() })?;
        out.push(rec);
    }
    Ok(out)
}
