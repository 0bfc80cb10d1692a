//! Minimal Ethernet / IPv4 / TCP / UDP / ICMP header decoding.
//!
//! Everything here works on a normalized Ethernet frame. Anything that is not
//! IPv4 over Ethernet (optionally 802.1Q tagged) decodes to `None`.

use std::net::Ipv4Addr;

pub const ETHERTYPE_IPV4: u16 = 0x0800;
const ETHERTYPE_VLAN: u16 = 0x8100;

pub const PROTO_ICMP: u8 = 1;
pub const PROTO_TCP: u8 = 6;
pub const PROTO_UDP: u8 = 17;

pub const TCP_FIN: u8 = 0x01;
pub const TCP_SYN: u8 = 0x02;
pub const TCP_RST: u8 = 0x04;
pub const TCP_PSH: u8 = 0x08;
pub const TCP_ACK: u8 = 0x10;
pub const TCP_URG: u8 = 0x20;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Ipv4Headers {
    pub src: Ipv4Addr,
    pub dst: Ipv4Addr,
    pub protocol: u8,
    /// IPv4 total length field.
    pub total_len: u16,
    pub more_fragments: bool,
    /// Fragment offset in 8-byte units.
    pub frag_offset: u16,
    pub transport: Transport,
}

impl Ipv4Headers {
    pub fn is_fragment(&self) -> bool {
        self.more_fragments || self.frag_offset != 0
    }

    pub fn ports(&self) -> (Option<u16>, Option<u16>) {
        match &self.transport {
            Transport::Tcp(t) => (Some(t.src_port), Some(t.dst_port)),
            Transport::Udp(u) => (Some(u.src_port), Some(u.dst_port)),
            _ => (None, None),
        }
    }

    pub fn tcp_flags(&self) -> u8 {
        match &self.transport {
            Transport::Tcp(t) => t.flags,
            _ => 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Transport {
    Tcp(TcpHeader),
    Udp(UdpHeader),
    Icmp {
        icmp_type: u8,
        code: u8,
    },
    /// Non-first fragment, an unparsed protocol, or a truncated transport header.
    None,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TcpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub seq: u32,
    pub ack: u32,
    pub flags: u8,
    pub window: u16,
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UdpHeader {
    pub src_port: u16,
    pub dst_port: u16,
    pub payload: Vec<u8>,
}

fn be16(b: &[u8], at: usize) -> u16 {
    u16::from_be_bytes([b[at], b[at + 1]])
}

fn be32(b: &[u8], at: usize) -> u32 {
    u32::from_be_bytes([b[at], b[at + 1], b[at + 2], b[at + 3]])
}

/// Decodes an Ethernet frame carrying IPv4.
pub fn decode_ethernet(frame: &[u8]) -> Option<Ipv4Headers> {
    if frame.len() < 14 {
        return None;
    }
    let mut ethertype = be16(frame, 12);
    let mut offset = 14;
    if ethertype == ETHERTYPE_VLAN {
        if frame.len() < 18 {
            return None;
        }
        ethertype = be16(frame, 16);
        offset = 18;
    }
    if ethertype != ETHERTYPE_IPV4 {
        return None;
    }
    decode_ipv4(&frame[offset..])
}

pub fn decode_ipv4(ip: &[u8]) -> Option<Ipv4Headers> {
    if ip.len() < 20 || ip[0] >> 4 != 4 {
        return None;
    }
    let ihl = usize::from(ip[0] & 0x0f) * 4;
    if ihl < 20 || ip.len() < ihl {
        return None;
    }
    let total_len = be16(ip, 2);
    let frag = be16(ip, 6);
    let more_fragments = frag & 0x2000 != 0;
    let frag_offset = frag & 0x1fff;
    let protocol = ip[9];
    let src = Ipv4Addr::new(ip[12], ip[13], ip[14], ip[15]);
    let dst = Ipv4Addr::new(ip[16], ip[17], ip[18], ip[19]);

    // Ethernet padding sits past the IP total length; ignore it.
    let end = usize::from(total_len).clamp(ihl, ip.len());
    let body = &ip[ihl..end];
    let transport = if frag_offset != 0 {
        Transport::None
    } else {
        match protocol {
            PROTO_TCP if body.len() >= 20 => {
                let data_off = usize::from(body[12] >> 4) * 4;
                let payload = body.get(data_off.max(20)..).unwrap_or(&[]).to_vec();
                Transport::Tcp(TcpHeader {
                    src_port: be16(body, 0),
                    dst_port: be16(body, 2),
                    seq: be32(body, 4),
                    ack: be32(body, 8),
                    flags: body[13] & 0x3f,
                    window: be16(body, 14),
                    payload,
                })
            }
            PROTO_UDP if body.len() >= 8 => Transport::Udp(UdpHeader {
                src_port: be16(body, 0),
                dst_port: be16(body, 2),
                payload: body[8..].to_vec(),
            }),
            PROTO_ICMP if body.len() >= 2 => Transport::Icmp { icmp_type: body[0], code: body[1] },
            _ => Transport::None,
        }
    };
    Some(Ipv4Headers { src, dst, protocol, total_len, more_fragments, frag_offset, transport })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn non_ipv4_frames_do_not_decode() {
        let mut arp = vec![0u8; 42];
        arp[12] = 0x08;
        arp[13] = 0x06;
        assert!(decode_ethernet(&arp).is_none());
        assert!(decode_ethernet(&[0u8; 5]).is_none());
    }

    #[test]
    fn vlan_tagged_ipv4_decodes() {
        let mut f = vec![0u8; 18 + 28];
        f[12] = 0x81;
        f[13] = 0x00;
        f[16] = 0x08;
        f[17] = 0x00;
        let ip = &mut f[18..];
        ip[0] = 0x45;
        ip[3] = 28;
        ip[9] = PROTO_UDP;
        ip[12..16].copy_from_slice(&[10, 0, 0, 1]);
        ip[16..20].copy_from_slice(&[10, 0, 0, 2]);
        ip[20..22].copy_from_slice(&53u16.to_be_bytes());
        ip[22..24].copy_from_slice(&1000u16.to_be_bytes());
        let h = decode_ethernet(&f).unwrap();
        assert_eq!(h.protocol, PROTO_UDP);
        assert_eq!(h.ports(), (Some(53), Some(1000)));
    }
}
