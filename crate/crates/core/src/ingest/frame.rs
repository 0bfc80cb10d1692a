//! Ethernet/IPv4 frame construction with valid checksums.
//!
//! Used by the synthetic capture generator and by tests that need
//! byte-accurate packets.

use super::decode::{PROTO_ICMP, PROTO_TCP, PROTO_UDP};
use std::net::Ipv4Addr;

/// Shortest Ethernet frame (without FCS).
pub const MIN_FRAME: usize = 60;

#[derive(Debug, Clone)]
pub struct FrameBuilder {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub ttl: u8,
    pub ip_id: u16,
    pub dont_fragment: bool,
}

#[derive(Debug, Clone, Default)]
pub struct TcpSpec {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
    pub window: u16,
    /// Raw option bytes; padded with NOPs to a multiple of 4.
    pub options: Vec<u8>,
    pub payload: Vec<u8>,
}

/// Locally administered MAC derived from an IPv4 address.
pub fn mac_for(ip: Ipv4Addr) -> [u8; 6] {
    let o = ip.octets();
    [0x02, 0x00, o[0], o[1], o[2], o[3]]
}

fn checksum(chunks: &[&[u8]]) -> u16 {
    let mut sum: u32 = 0;
    let mut odd: Option<u8> = None;
    for chunk in chunks {
        for &b in *chunk {
            match odd.take() {
                Some(hi) => sum += u32::from(u16::from_be_bytes([hi, b])),
                None => odd = Some(b),
            }
        }
    }
    if let Some(hi) = odd {
        sum += u32::from(u16::from_be_bytes([hi, 0]));
    }
    while sum >> 16 != 0 {
        sum = (sum & 0xffff) + (sum >> 16);
    }
    !(sum as u16)
}

impl FrameBuilder {
    pub fn new(src: Ipv4Addr, dst: Ipv4Addr) -> Self {
        Self { src, dst, ttl: 64, ip_id: 0, dont_fragment: true }
    }

    pub fn ttl(mut self, ttl: u8) -> Self {
        self.ttl = ttl;
        self
    }

    pub fn ip_id(mut self, id: u16) -> Self {
        self.ip_id = id;
        self
    }

    fn pseudo_header(&self, proto: u8, len: usize) -> [u8; 12] {
        let mut p = [0u8; 12];
        p[0..4].copy_from_slice(&self.src.octets());
        p[4..8].copy_from_slice(&self.dst.octets());
        p[9] = proto;
        p[10..12].copy_from_slice(&(len as u16).to_be_bytes());
        p
    }

    fn wrap(&self, proto: u8, segment: &[u8]) -> Vec<u8> {
        let total = 20 + segment.len();
        let mut f = Vec::with_capacity((14 + total).max(MIN_FRAME));
        f.extend_from_slice(&mac_for(self.dst));
        f.extend_from_slice(&mac_for(self.src));
        f.extend_from_slice(&[0x08, 0x00]);
        let mut ip = [0u8; 20];
        ip[0] = 0x45;
        ip[2..4].copy_from_slice(&(total as u16).to_be_bytes());
        ip[4..6].copy_from_slice(&self.ip_id.to_be_bytes());
        if self.dont_fragment {
            ip[6] = 0x40;
        }
        ip[8] = self.ttl;
        ip[9] = proto;
        ip[12..16].copy_from_slice(&self.src.octets());
        ip[16..20].copy_from_slice(&self.dst.octets());
        let c = checksum(&[&ip]);
        ip[10..12].copy_from_slice(&c.to_be_bytes());
        f.extend_from_slice(&ip);
        f.extend_from_slice(segment);
        if f.len() < MIN_FRAME {
            f.resize(MIN_FRAME, 0);
        }
        f
    }

    pub fn tcp(&self, spec: TcpSpec) -> Vec<u8> {
        let mut options = spec.options;
        while !options.len().is_multiple_of(4) {
            options.push(1);
        }
        let hlen = 20 + options.len();
        let mut seg = vec![0u8; hlen];
        seg[0..2].copy_from_slice(&spec.src_port.to_be_bytes());
        seg[2..4].copy_from_slice(&spec.dst_port.to_be_bytes());
        seg[4..8].copy_from_slice(&spec.seq.to_be_bytes());
        seg[8..12].copy_from_slice(&spec.ack.to_be_bytes());
        seg[12] = ((hlen / 4) as u8) << 4;
        seg[13] = spec.flags;
        seg[14..16].copy_from_slice(&spec.window.to_be_bytes());
        seg[20..].copy_from_slice(&options);
        seg.extend_from_slice(&spec.payload);
        let c = checksum(&[&self.pseudo_header(PROTO_TCP, seg.len()), &seg]);
        seg[16..18].copy_from_slice(&c.to_be_bytes());
        self.wrap(PROTO_TCP, &seg)
    }

    pub fn udp(&self, src_port: u16, dst_port: u16, payload: &[u8]) -> Vec<u8> {
        let len = 8 + payload.len();
        let mut seg = vec![0u8; 8];
        seg[0..2].copy_from_slice(&src_port.to_be_bytes());
        seg[2..4].copy_from_slice(&dst_port.to_be_bytes());
        seg[4..6].copy_from_slice(&(len as u16).to_be_bytes());
        seg.extend_from_slice(payload);
        let c = checksum(&[&self.pseudo_header(PROTO_UDP, len), &seg]);
        seg[6..8].copy_from_slice(&c.to_be_bytes());
        self.wrap(PROTO_UDP, &seg)
    }

    pub fn icmp(&self, icmp_type: u8, code: u8, rest: &[u8]) -> Vec<u8> {
        let mut seg = vec![icmp_type, code, 0, 0];
        seg.extend_from_slice(rest);
        let c = checksum(&[&seg]);
        seg[2..4].copy_from_slice(&c.to_be_bytes());
        self.wrap(PROTO_ICMP, &seg)
    }
}

/// DNS message with a single A-record question (and a single answer when
/// `response` is set).
pub fn dns_query(id: u16, name: &str, response: bool) -> Vec<u8> {
    let mut m = Vec::with_capacity(64);
    m.extend_from_slice(&id.to_be_bytes());
    m.extend_from_slice(if response { &[0x81, 0x80] } else { &[0x01, 0x00] });
    m.extend_from_slice(&[0, 1, 0, u8::from(response), 0, 0, 0, 0]);
    for label in name.split('.') {
        m.push(label.len() as u8);
        m.extend_from_slice(label.as_bytes());
    }
    m.push(0);
    m.extend_from_slice(&[0, 1, 0, 1]);
    if response {
        // Compressed pointer to the question name, type A, class IN, TTL 300, 4 bytes.
        m.extend_from_slice(&[0xc0, 0x0c, 0, 1, 0, 1, 0, 0, 1, 0x2c, 0, 4]);
        let h = name.bytes().fold(0u32, |acc, b| acc.wrapping_mul(31).wrapping_add(u32::from(b)));
        m.extend_from_slice(&[93, (h >> 16) as u8, (h >> 8) as u8, h as u8]);
    }
    m
}
