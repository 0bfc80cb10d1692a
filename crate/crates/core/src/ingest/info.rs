//! Canonical one-line packet summaries.
//!
//! Grammar (version [`INFO_GRAMMAR_VERSION`]):
//!
//! ```text
//! <PROTO> [<flag tokens>] src=<ip>[:<port>] dst=<ip>[:<port>] len=<ip total length> [<proto tokens>]
//! ```
//!
//! * `PROTO` is `TCP`, `UDP` or `ICMP`. Anything else renders as `RAW len=<frame bytes>`.
//! * TCP flag tokens are emitted in the fixed order `SYN ACK FIN RST PSH URG`.
//! * TCP segments without SYN carry `plen=<payload bytes>`. When either port is
//!   80 or 8080 and the payload starts with an HTTP method, the request line is
//!   appended verbatim.
//! * UDP: `DNS query <name>` / `DNS response <name>` on port 53, `NTP` on port
//!   123, otherwise `plen=<n>` for non-empty payloads.
//! * ICMP: `type=<t> code=<c>` followed by a name for common types.
//! * Fragments append `FRAG mf` (first fragment) or `FRAG off=<n>` (later ones,
//!   which carry no ports).

use super::decode::{self, Ipv4Headers, Transport};

pub const INFO_GRAMMAR_VERSION: u32 = 1;

const HTTP_METHODS: [&str; 9] = ["GET", "POST", "HEAD", "PUT", "DELETE", "OPTIONS", "PATCH", "CONNECT", "TRACE"];

const FLAG_TOKENS: [(u8, &str); 6] = [
    (decode::TCP_SYN, "SYN"),
    (decode::TCP_ACK, "ACK"),
    (decode::TCP_FIN, "FIN"),
    (decode::TCP_RST, "RST"),
    (decode::TCP_PSH, "PSH"),
    (decode::TCP_URG, "URG"),
];

/// Summarizes a normalized Ethernet frame. Never fails.
pub fn synthesize_info(raw: &[u8]) -> String {
    match decode::decode_ethernet(raw) {
        Some(h) => render(&h).unwrap_or_else(|| raw_info(raw)),
        None => raw_info(raw),
    }
}

fn raw_info(raw: &[u8]) -> String {
    format!("RAW len={}", raw.len())
}

fn endpoint(ip: std::net::Ipv4Addr, port: Option<u16>) -> String {
    match port {
        Some(p) => format!("{ip}:{p}"),
        None => ip.to_string(),
    }
}

fn render(h: &Ipv4Headers) -> Option<String> {
    let proto = match h.protocol {
        decode::PROTO_TCP => "TCP",
        decode::PROTO_UDP => "UDP",
        decode::PROTO_ICMP => "ICMP",
        _ => return None,
    };
    // A first fragment whose transport header is cut short cannot be summarized.
    if h.frag_offset == 0 && matches!(h.transport, Transport::None) {
        return None;
    }
    let mut parts: Vec<String> = vec![proto.to_string()];
    if let Transport::Tcp(t) = &h.transport {
        parts.extend(FLAG_TOKENS.iter().filter(|(bit, _)| t.flags & bit != 0).map(|(_, n)| n.to_string()));
    }
    let (sp, dp) = h.ports();
    parts.push(format!("src={}", endpoint(h.src, sp)));
    parts.push(format!("dst={}", endpoint(h.dst, dp)));
    parts.push(format!("len={}", h.total_len));

    match &h.transport {
        Transport::Tcp(t) => {
            if t.flags & decode::TCP_SYN == 0 {
                parts.push(format!("plen={}", t.payload.len()));
            }
            if [80, 8080].contains(&t.src_port) || [80, 8080].contains(&t.dst_port) {
                if let Some(line) = http_request_line(&t.payload) {
                    parts.push(line);
                }
            }
        }
        Transport::Udp(u) => {
            if u.src_port == 53 || u.dst_port == 53 {
                match dns_summary(&u.payload) {
                    Some(s) => parts.push(s),
                    None => parts.push("DNS".to_string()),
                }
            } else if u.src_port == 123 || u.dst_port == 123 {
                parts.push("NTP".to_string());
            } else if !u.payload.is_empty() {
                parts.push(format!("plen={}", u.payload.len()));
            }
        }
        Transport::Icmp { icmp_type, code } => {
            parts.push(format!("type={icmp_type} code={code}"));
            if let Some(name) = icmp_name(*icmp_type) {
                parts.push(name.to_string());
            }
        }
        Transport::None => {}
    }
    if h.frag_offset != 0 {
        parts.push(format!("FRAG off={}", u32::from(h.frag_offset) * 8));
    } else if h.more_fragments {
        parts.push("FRAG mf".to_string());
    }
    Some(parts.join(" "))
}

fn icmp_name(t: u8) -> Option<&'static str> {
    Some(match t {
        0 => "Echo (ping) reply",
        3 => "Destination unreachable",
        5 => "Redirect",
        8 => "Echo (ping) request",
        11 => "Time-to-live exceeded",
        _ => return None,
    })
}

fn http_request_line(payload: &[u8]) -> Option<String> {
    let end = payload.iter().position(|&b| b == b'\r' || b == b'\n').unwrap_or(payload.len());
    let line = &payload[..end];
    if !line.iter().all(|b| (0x20..0x7f).contains(b)) {
        return None;
    }
    let text = std::str::from_utf8(line).ok()?;
    let method = text.split(' ').next()?;
    (HTTP_METHODS.contains(&method) && text.len() > method.len()).then(|| text.to_string())
}

/// `DNS query <name>` / `DNS response <name>` from the first question.
fn dns_summary(payload: &[u8]) -> Option<String> {
    if payload.len() < 12 {
        return None;
    }
    let is_response = payload[2] & 0x80 != 0;
    let qdcount = u16::from_be_bytes([payload[4], payload[5]]);
    let kind = if is_response { "response" } else { "query" };
    if qdcount == 0 {
        return Some(format!("DNS {kind}"));
    }
    let mut labels = Vec::new();
    let mut at = 12;
    loop {
        let n = usize::from(*payload.get(at)?);
        if n == 0 {
            break;
        }
        if n & 0xc0 != 0 || labels.len() > 32 {
            return None;
        }
        let label = payload.get(at + 1..at + 1 + n)?;
        if !label.iter().all(|b| b.is_ascii_alphanumeric() || *b == b'-' || *b == b'_') {
            return None;
        }
        labels.push(std::str::from_utf8(label).ok()?.to_string());
        at += 1 + n;
    }
    Some(format!("DNS {kind} {}", labels.join(".")))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ingest::frame::{FrameBuilder, TcpSpec};
    use std::net::Ipv4Addr;

    fn a(s: &str) -> Ipv4Addr {
        s.parse().unwrap()
    }

    #[test]
    fn tcp_syn_with_options() {
        let f = FrameBuilder::new(a("10.0.0.1"), a("10.0.0.2")).tcp(TcpSpec {
            src_port: 4242,
            dst_port: 80,
            flags: decode::TCP_SYN,
            options: vec![0; 20],
            ..TcpSpec::default()
        });
        assert_eq!(synthesize_info(&f), "TCP SYN src=10.0.0.1:4242 dst=10.0.0.2:80 len=60");
    }

    #[test]
    fn empty_udp() {
        let f = FrameBuilder::new(a("192.168.1.5"), a("192.168.1.9")).udp(5000, 6000, &[]);
        assert_eq!(synthesize_info(&f), "UDP src=192.168.1.5:5000 dst=192.168.1.9:6000 len=28");
    }

    #[test]
    fn garbage_falls_back_to_raw() {
        assert_eq!(synthesize_info(&[0xde; 12]), "RAW len=12");
        assert_eq!(synthesize_info(&[]), "RAW len=0");
    }

    #[test]
    fn http_request_line_is_echoed() {
        let f = FrameBuilder::new(a("10.0.0.1"), a("10.0.0.2")).tcp(TcpSpec {
            src_port: 50000,
            dst_port: 80,
            flags: decode::TCP_ACK | decode::TCP_PSH,
            payload: b"GET /index.html HTTP/1.1\r\nHost: x\r\n\r\n".to_vec(),
            ..TcpSpec::default()
        });
        assert_eq!(
            synthesize_info(&f),
            "TCP ACK PSH src=10.0.0.1:50000 dst=10.0.0.2:80 len=77 plen=37 GET /index.html HTTP/1.1"
        );
    }

    #[test]
    fn pure_ack_reports_zero_payload() {
        let f = FrameBuilder::new(a("10.0.0.1"), a("10.0.0.2")).tcp(TcpSpec {
            src_port: 1,
            dst_port: 2,
            flags: decode::TCP_ACK,
            ..TcpSpec::default()
        });
        assert_eq!(synthesize_info(&f), "TCP ACK src=10.0.0.1:1 dst=10.0.0.2:2 len=40 plen=0");
    }

    #[test]
    fn icmp_echo_and_dns() {
        let f = FrameBuilder::new(a("1.1.1.1"), a("2.2.2.2")).icmp(8, 0, &[0; 4]);
        assert_eq!(synthesize_info(&f), "ICMP src=1.1.1.1 dst=2.2.2.2 len=28 type=8 code=0 Echo (ping) request");
        let q = crate::ingest::frame::dns_query(0x1234, "www.example.com", false);
        let f = FrameBuilder::new(a("1.1.1.1"), a("2.2.2.2")).udp(3333, 53, &q);
        assert!(synthesize_info(&f).ends_with("DNS query www.example.com"));
    }

    #[test]
    fn fragments_are_tagged() {
        let mut f = FrameBuilder::new(a("1.1.1.1"), a("2.2.2.2")).udp(1, 2, &[1, 2, 3]);
        // Mark as a later fragment: offset 185 * 8 = 1480.
        f[20..22].copy_from_slice(&185u16.to_be_bytes());
        assert_eq!(synthesize_info(&f), "UDP src=1.1.1.1 dst=2.2.2.2 len=31 FRAG off=1480");
    }
}
