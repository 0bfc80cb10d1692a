//! Classic libpcap reading and writing.
//!
//! Both byte orders and both timestamp resolutions (micro/nano) are read.
//! Frames from raw-IP and Linux cooked captures are normalized to Ethernet so
//! every downstream consumer sees the same layout.

use super::{normalize_frame, PacketRecord};
use crate::{Error, Result};

const MAGIC_USEC: u32 = 0xa1b2_c3d4;
const MAGIC_NSEC: u32 = 0xa1b2_3c4d;

pub const LINKTYPE_ETHERNET: u32 = 1;
pub const LINKTYPE_RAW: u32 = 101;
pub const LINKTYPE_LINUX_SLL: u32 = 113;
pub const LINKTYPE_IPV4: u32 = 228;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PcapHeader {
    pub big_endian: bool,
    pub nanosecond: bool,
    pub version_major: u16,
    pub version_minor: u16,
    pub snaplen: u32,
    pub linktype: u32,
}

fn read_u32(b: &[u8], big: bool) -> u32 {
    let a = [b[0], b[1], b[2], b[3]];
    if big {
        u32::from_be_bytes(a)
    } else {
        u32::from_le_bytes(a)
    }
}

fn read_u16(b: &[u8], big: bool) -> u16 {
    if big {
        u16::from_be_bytes([b[0], b[1]])
    } else {
        u16::from_le_bytes([b[0], b[1]])
    }
}

pub fn parse_header(bytes: &[u8]) -> Result<PcapHeader> {
    if bytes.len() < 24 {
        return Err(Error::UnsupportedFormat(format!(
            "file is {} bytes, shorter than a pcap global header",
            bytes.len()
        )));
    }
    let le = u32::from_le_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let be = u32::from_be_bytes([bytes[0], bytes[1], bytes[2], bytes[3]]);
    let (big_endian, nanosecond) = match (le, be) {
        (MAGIC_USEC, _) => (false, false),
        (MAGIC_NSEC, _) => (false, true),
        (_, MAGIC_USEC) => (true, false),
        (_, MAGIC_NSEC) => (true, true),
        _ => return Err(Error::UnsupportedFormat(format!("bad pcap magic 0x{be:08x}"))),
    };
    Ok(PcapHeader {
        big_endian,
        nanosecond,
        version_major: read_u16(&bytes[4..], big_endian),
        version_minor: read_u16(&bytes[6..], big_endian),
        snaplen: read_u32(&bytes[16..], big_endian),
        linktype: read_u32(&bytes[20..], big_endian),
    })
}

/// Parses a whole capture held in memory. Labels are left unset.
pub fn parse_pcap(bytes: &[u8]) -> Result<Vec<PacketRecord>> {
    let hdr = parse_header(bytes)?;
    let mut out = Vec::new();
    let mut at = 24;
    while at < bytes.len() {
        let last_good_index = out.len().checked_sub(1);
        if bytes.len() - at < 16 {
            return Err(Error::TruncatedCapture { last_good_index });
        }
        let rec = &bytes[at..at + 16];
        let ts_sec = read_u32(rec, hdr.big_endian);
        let ts_frac = read_u32(&rec[4..], hdr.big_endian);
        let incl_len = read_u32(&rec[8..], hdr.big_endian) as usize;
        let orig_len = read_u32(&rec[12..], hdr.big_endian);
        at += 16;
        if bytes.len() - at < incl_len {
            return Err(Error::TruncatedCapture { last_good_index });
        }
        let data = &bytes[at..at + incl_len];
        at += incl_len;
        let scale = if hdr.nanosecond { 1e-9 } else { 1e-6 };
        let timestamp = f64::from(ts_sec) + f64::from(ts_frac) * scale;
        let raw = normalize_frame(data, hdr.linktype);
        out.push(PacketRecord::from_frame(out.len(), timestamp, orig_len, raw));
    }
    Ok(out)
}

/// Writes a little-endian, microsecond-resolution Ethernet capture.
/// Timestamps are given in whole microseconds so the file is byte-stable.
#[derive(Debug, Default)]
pub struct PcapWriter {
    buf: Vec<u8>,
}

impl PcapWriter {
    pub fn new() -> Self {
        let mut buf = Vec::with_capacity(1 << 16);
        buf.extend_from_slice(&MAGIC_USEC.to_le_bytes());
        buf.extend_from_slice(&2u16.to_le_bytes());
        buf.extend_from_slice(&4u16.to_le_bytes());
        buf.extend_from_slice(&0i32.to_le_bytes());
        buf.extend_from_slice(&0u32.to_le_bytes());
        buf.extend_from_slice(&65535u32.to_le_bytes());
        buf.extend_from_slice(&LINKTYPE_ETHERNET.to_le_bytes());
        Self { buf }
    }

    pub fn push(&mut self, ts_micros: u64, frame: &[u8]) {
        let sec = (ts_micros / 1_000_000) as u32;
        let usec = (ts_micros % 1_000_000) as u32;
        self.buf.extend_from_slice(&sec.to_le_bytes());
        self.buf.extend_from_slice(&usec.to_le_bytes());
        self.buf.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(&(frame.len() as u32).to_le_bytes());
        self.buf.extend_from_slice(frame);
    }

    pub fn finish(self) -> Vec<u8> {
        self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    // 60-byte ICMP echo request 192.168.0.1 -> 192.168.0.2, written out by hand.
    const ICMP_FRAME: [u8; 60] = [
        0x02, 0x00, 0xc0, 0xa8, 0x00, 0x02, 0x02, 0x00, 0xc0, 0xa8, 0x00, 0x01, 0x08, 0x00, // eth
        0x45, 0x00, 0x00, 0x1c, 0x00, 0x01, 0x00, 0x00, 0x40, 0x01, 0xf9, 0x8c, // ip: len 28, ttl 64, icmp
        0xc0, 0xa8, 0x00, 0x01, 0xc0, 0xa8, 0x00, 0x02, // src, dst
        0x08, 0x00, 0xf7, 0xfe, 0x00, 0x01, 0x00, 0x00, // icmp echo id=1 seq=0
        0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 0, // padding
    ];

    fn capture(big: bool, frames: &[&[u8]]) -> Vec<u8> {
        let w32 = |v: u32| if big { v.to_be_bytes() } else { v.to_le_bytes() };
        let w16 = |v: u16| if big { v.to_be_bytes() } else { v.to_le_bytes() };
        let mut b = Vec::new();
        b.extend_from_slice(&w32(MAGIC_USEC));
        b.extend_from_slice(&w16(2));
        b.extend_from_slice(&w16(4));
        b.extend_from_slice(&[0; 8]);
        b.extend_from_slice(&w32(65535));
        b.extend_from_slice(&w32(1));
        for (i, f) in frames.iter().enumerate() {
            b.extend_from_slice(&w32(1000 + i as u32));
            b.extend_from_slice(&w32(250_000));
            b.extend_from_slice(&w32(f.len() as u32));
            b.extend_from_slice(&w32(f.len() as u32));
            b.extend_from_slice(f);
        }
        b
    }

    #[test]
    fn icmp_echo_fields() {
        for big in [false, true] {
            let recs = parse_pcap(&capture(big, &[&ICMP_FRAME])).unwrap();
            assert_eq!(recs.len(), 1);
            let r = &recs[0];
            assert_eq!(r.protocol_id, 1);
            assert_eq!(r.length, 60);
            assert_eq!(r.src_ip.to_string(), "192.168.0.1");
            assert_eq!(r.dst_ip.to_string(), "192.168.0.2");
            assert_eq!(r.src_port, None);
            assert_eq!(r.timestamp, 1000.25);
            assert!(r.info.contains("Echo (ping) request"), "{}", r.info);
        }
    }

    #[test]
    fn two_frames_indexed_in_order() {
        let recs = parse_pcap(&capture(false, &[&ICMP_FRAME, &ICMP_FRAME])).unwrap();
        assert_eq!(recs.iter().map(|r| r.index).collect::<Vec<_>>(), vec![0, 1]);
    }

    #[test]
    fn header_only_is_empty() {
        assert!(parse_pcap(&capture(false, &[])).unwrap().is_empty());
    }

    #[test]
    fn bad_magic_and_short_header() {
        let mut c = capture(false, &[]);
        c[0] = 0;
        assert!(matches!(parse_pcap(&c), Err(Error::UnsupportedFormat(_))));
        assert!(matches!(parse_pcap(&[0xd4, 0xc3]), Err(Error::UnsupportedFormat(_))));
    }

    #[test]
    fn truncation_reports_last_good_index() {
        let c = capture(false, &[&ICMP_FRAME, &ICMP_FRAME]);
        let cut = &c[..c.len() - 5];
        match parse_pcap(cut) {
            Err(Error::TruncatedCapture { last_good_index }) => assert_eq!(last_good_index, Some(0)),
            other => panic!("unexpected {other:?}"),
        }
        let cut = &c[..24 + 10];
        assert!(matches!(parse_pcap(cut), Err(Error::TruncatedCapture { last_good_index: None })));
    }

    #[test]
    fn writer_round_trips() {
        let mut w = PcapWriter::new();
        w.push(5_000_001, &ICMP_FRAME);
        let recs = parse_pcap(&w.finish()).unwrap();
        assert_eq!(recs[0].raw, ICMP_FRAME.to_vec());
        assert_eq!(recs[0].timestamp, 5.000001);
    }

    #[test]
    fn nanosecond_magic() {
        let mut c = capture(false, &[&ICMP_FRAME]);
        c[0..4].copy_from_slice(&MAGIC_NSEC.to_le_bytes());
        let recs = parse_pcap(&c).unwrap();
        assert!((recs[0].timestamp - 1000.00025).abs() < 1e-9);
    }
}
