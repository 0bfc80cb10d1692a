//! Synthetic labeled captures for desk-scale experiments.
//!
//! Benign traffic is built from whole sessions. The modern mix has DNS
//! lookups, HTTP page loads over parallel connections, SFTP-style uploads,
//! NTP and a health-check monitor that probes the web servers with half-open
//! connections. The legacy mix has telnet, FTP, SMTP, ping and a little DNS.
//!
//! Attack packets come from a small fixed set of attacker addresses that never
//! send benign traffic. Only attacker-sent packets are generated (no victim
//! replies), so a packet is labeled attack exactly when its source is an
//! attacker. The attack starts 30% into the benign timeline.

use crate::ingest::decode::{TCP_ACK, TCP_FIN, TCP_PSH, TCP_RST, TCP_SYN};
use crate::ingest::frame::{dns_query, FrameBuilder, TcpSpec};
use crate::ingest::labels::render_index_sidecar;
use crate::ingest::pcap::PcapWriter;
use crate::ingest::{Label, PacketRecord};
use crate::nn::{seeded_rng, Rng};
use crate::{Error, Result};
use rand::Rng as _;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::fmt;
use std::net::Ipv4Addr;
use std::str::FromStr;

pub const DEFAULT_START_MICROS: u64 = 1_700_000_000_000_000;
pub const SLOW_HTTP_MIN_GAP: f64 = 5.0;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BenignMix {
    Modern,
    Legacy,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackType {
    SynFlood,
    UdpFlood,
    SlowHttp,
}

impl BenignMix {
    pub const ALL: [BenignMix; 2] = [BenignMix::Modern, BenignMix::Legacy];

    pub fn name(self) -> &'static str {
        match self {
            BenignMix::Modern => "modern",
            BenignMix::Legacy => "legacy",
        }
    }
}

impl AttackType {
    pub const ALL: [AttackType; 3] = [AttackType::SynFlood, AttackType::UdpFlood, AttackType::SlowHttp];

    pub fn name(self) -> &'static str {
        match self {
            AttackType::SynFlood => "syn_flood",
            AttackType::UdpFlood => "udp_flood",
            AttackType::SlowHttp => "slow_http",
        }
    }

    pub fn attackers(self) -> Vec<Ipv4Addr> {
        match self {
            AttackType::SynFlood => [7, 23, 41].map(|h| Ipv4Addr::new(203, 0, 113, h)).to_vec(),
            AttackType::UdpFlood => [9, 77, 140].map(|h| Ipv4Addr::new(198, 51, 100, h)).to_vec(),
            AttackType::SlowHttp => (99..107).map(|h| Ipv4Addr::new(203, 0, 113, h)).collect(),
        }
    }
}

impl fmt::Display for BenignMix {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl fmt::Display for AttackType {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for BenignMix {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown benign mix {s:?}")))
    }
}

impl FromStr for AttackType {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|a| a.name() == s || a.name().replace('_', "-") == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown attack type {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub benign_mix: BenignMix,
    pub attack: Option<AttackType>,
    pub benign_count: usize,
    pub attack_count: usize,
    pub seed: u64,
    pub start_micros: u64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            benign_mix: BenignMix::Modern,
            attack: Some(AttackType::SynFlood),
            benign_count: 9000,
            attack_count: 1000,
            seed: 0,
            start_micros: DEFAULT_START_MICROS,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        if self.benign_count == 0 {
            return Err(Error::InvalidConfig("benign_count must be positive".into()));
        }
        match (self.attack, self.attack_count) {
            (Some(a), 0) => Err(Error::InvalidConfig(format!("attack {a} needs a positive attack_count"))),
            (None, n) if n > 0 => Err(Error::InvalidConfig("attack_count given without an attack type".into())),
            _ => Ok(()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthPacket {
    pub ts_micros: u64,
    pub frame: Vec<u8>,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCapture {
    pub config: SynthConfig,
    pub packets: Vec<SynthPacket>,
    pub attackers: Vec<Ipv4Addr>,
}

/// Same conversion as the pcap reader, so generated records match re-read ones.
fn micros_to_secs(ts: u64) -> f64 {
    f64::from((ts / 1_000_000) as u32) + f64::from((ts % 1_000_000) as u32) * 1e-6
}

impl SynthCapture {
    pub fn to_pcap(&self) -> Vec<u8> {
        let mut w = PcapWriter::new();
        for p in &self.packets {
            w.push(p.ts_micros, &p.frame);
        }
        w.finish()
    }

    /// `index,label` sidecar covering every packet.
    pub fn index_sidecar(&self) -> String {
        render_index_sidecar(self.packets.iter().enumerate().map(|(i, p)| (i, p.label)))
    }

    /// `src_ip,start_ts,end_ts,label` sidecar with one window per attacker
    /// spanning its first to last packet.
    pub fn window_sidecar(&self) -> String {
        let records = self.records();
        let mut out = String::from("src_ip,start_ts,end_ts,label\n");
        for a in &self.attackers {
            let ts: Vec<f64> =
                records.iter().filter(|r| r.src_ip == *a && r.label == Label::Attack).map(|r| r.timestamp).collect();
            if let (Some(lo), Some(hi)) = (ts.first(), ts.last()) {
                out.push_str(&format!("{a},{lo},{hi},1\n"));
            }
        }
        out
    }

    /// Labeled records, identical to parsing [`Self::to_pcap`] and applying
    /// [`Self::index_sidecar`].
    pub fn records(&self) -> Vec<PacketRecord> {
        self.packets
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let mut r =
                    PacketRecord::from_frame(i, micros_to_secs(p.ts_micros), p.frame.len() as u32, p.frame.clone());
                r.label = p.label;
                r
            })
            .collect()
    }

    pub fn attack_count(&self) -> usize {
        self.packets.iter().filter(|p| p.label == Label::Attack).count()
    }
}

const MODERN_SYN_OPTIONS: [u8; 20] = [2, 4, 5, 180, 4, 2, 8, 10, 0, 0, 0, 0, 0, 0, 0, 0, 1, 3, 3, 7];
const LEGACY_SYN_OPTIONS: [u8; 4] = [2, 4, 5, 180];
const MSS: usize = 1460;

fn exp_gap(rng: &mut Rng, mean: f64) -> f64 {
    -mean * (1.0 - rng.gen::<f64>()).ln()
}

struct Pending {
    t: f64,
    frame: Vec<u8>,
}

struct Emitter {
    rng: Rng,
    out: Vec<Pending>,
    ip_ids: HashMap<Ipv4Addr, u16>,
    ttls: HashMap<Ipv4Addr, u8>,
}

impl Emitter {
    fn new(seed: u64) -> Self {
        Self { rng: seeded_rng(seed), out: Vec::new(), ip_ids: HashMap::new(), ttls: HashMap::new() }
    }

    fn builder(&mut self, src: Ipv4Addr, dst: Ipv4Addr) -> FrameBuilder {
        let rng = &mut self.rng;
        let id = self.ip_ids.entry(src).or_insert_with(|| rng.gen());
        *id = id.wrapping_add(1);
        let ttl = *self.ttls.entry(src).or_insert(64);
        FrameBuilder::new(src, dst).ip_id(*id).ttl(ttl)
    }

    fn push(&mut self, t: f64, frame: Vec<u8>) {
        self.out.push(Pending { t, frame });
    }

    fn udp(&mut self, t: f64, src: Ipv4Addr, dst: Ipv4Addr, sport: u16, dport: u16, payload: &[u8]) {
        let f = self.builder(src, dst).udp(sport, dport, payload);
        self.push(t, f);
    }

    fn icmp(&mut self, t: f64, src: Ipv4Addr, dst: Ipv4Addr, icmp_type: u8, rest: &[u8]) {
        self.icmp_code(t, src, dst, icmp_type, 0, rest);
    }

    fn icmp_code(&mut self, t: f64, src: Ipv4Addr, dst: Ipv4Addr, icmp_type: u8, code: u8, rest: &[u8]) {
        let f = self.builder(src, dst).icmp(icmp_type, code, rest);
        self.push(t, f);
    }

    fn ephemeral(&mut self) -> u16 {
        self.rng.gen_range(32768..=60999)
    }
}

/// One TCP connection; tracks both sides' sequence numbers.
struct Conn {
    client: Ipv4Addr,
    server: Ipv4Addr,
    cport: u16,
    sport: u16,
    cseq: u32,
    sseq: u32,
    window: u16,
    syn_options: &'static [u8],
}

impl Conn {
    fn open(e: &mut Emitter, client: Ipv4Addr, server: Ipv4Addr, sport: u16, legacy: bool) -> Self {
        let cport = if legacy { e.rng.gen_range(1024..=5000) } else { e.ephemeral() };
        Conn {
            client,
            server,
            cport,
            sport,
            cseq: e.rng.gen(),
            sseq: e.rng.gen(),
            window: if legacy { 8760 } else { 64240 },
            syn_options: if legacy { &LEGACY_SYN_OPTIONS } else { &MODERN_SYN_OPTIONS },
        }
    }

    fn send(&mut self, e: &mut Emitter, t: f64, from_client: bool, flags: u8, payload: &[u8]) {
        let (src, dst, sport, dport) = if from_client {
            (self.client, self.server, self.cport, self.sport)
        } else {
            (self.server, self.client, self.sport, self.cport)
        };
        let (seq, ack) = if from_client { (self.cseq, self.sseq) } else { (self.sseq, self.cseq) };
        let options = if flags & TCP_SYN != 0 { self.syn_options.to_vec() } else { Vec::new() };
        let spec = TcpSpec {
            src_port: sport,
            dst_port: dport,
            seq,
            ack: if flags & TCP_ACK != 0 { ack } else { 0 },
            flags,
            window: self.window,
            options,
            payload: payload.to_vec(),
        };
        let f = e.builder(src, dst).tcp(spec);
        e.push(t, f);
        let advance = payload.len() as u32 + u32::from(flags & (TCP_SYN | TCP_FIN) != 0);
        if from_client {
            self.cseq = self.cseq.wrapping_add(advance);
        } else {
            self.sseq = self.sseq.wrapping_add(advance);
        }
    }

    /// SYN, SYN/ACK, ACK; returns the time the client may send data.
    fn handshake(&mut self, e: &mut Emitter, t: f64, rtt: f64) -> f64 {
        self.send(e, t, true, TCP_SYN, &[]);
        self.send(e, t + 0.0003, false, TCP_SYN | TCP_ACK, &[]);
        self.send(e, t + rtt, true, TCP_ACK, &[]);
        t + rtt + 0.0001
    }

    /// Client FIN/ACK, server FIN/ACK, client ACK.
    fn close(&mut self, e: &mut Emitter, t: f64, rtt: f64) -> f64 {
        self.send(e, t, true, TCP_FIN | TCP_ACK, &[]);
        self.send(e, t + 0.0003, false, TCP_FIN | TCP_ACK, &[]);
        self.send(e, t + rtt, true, TCP_ACK, &[]);
        t + rtt
    }

    /// Bulk transfer in flights of ten segments with delayed ACKs every two
    /// segments; returns the time of the last ACK.
    fn bulk(&mut self, e: &mut Emitter, t: f64, rtt: f64, from_client: bool, segments: &[Vec<u8>]) -> f64 {
        let mut now = t;
        let mut last_ack = t;
        for flight in segments.chunks(10) {
            for (k, seg) in flight.iter().enumerate() {
                let flags = if k + 1 == flight.len() { TCP_PSH | TCP_ACK } else { TCP_ACK };
                self.send(e, now, from_client, flags, seg);
                if k % 2 == 1 || k + 1 == flight.len() {
                    last_ack = now + rtt / 2.0;
                    self.send(e, last_ack, !from_client, TCP_ACK, &[]);
                }
                now += 0.00012;
            }
            now = now.max(last_ack + rtt / 2.0);
        }
        last_ack
    }

    /// One request/response exchange of small payloads; returns the time of the reply.
    fn exchange(&mut self, e: &mut Emitter, t: f64, rtt: f64, request: &[u8], reply: &[u8]) -> f64 {
        self.send(e, t, true, TCP_PSH | TCP_ACK, request);
        let r = t + rtt * 0.5 + 0.001;
        self.send(e, r, false, TCP_PSH | TCP_ACK, reply);
        r
    }
}

fn text_block(seed: usize, len: usize) -> Vec<u8> {
    const WORDS: [&str; 12] = [
        "alpha", "beacon", "cobalt", "delta", "ember", "fjord", "garnet", "harbor", "indigo", "juniper", "kestrel",
        "lumen",
    ];
    let mut s = String::with_capacity(len + 64);
    let mut line = 0;
    while s.len() < len {
        s.push_str(&format!(
            "<p class=\"c{}\">{} {}</p>\n",
            seed % 7,
            WORDS[(seed + line) % 12],
            WORDS[(seed * 5 + line * 3) % 12]
        ));
        line += 1;
    }
    s.truncate(len);
    s.into_bytes()
}

/// Fixed pseudo-random blocks standing in for encrypted file transfer data.
fn opaque_blocks() -> Vec<Vec<u8>> {
    let mut rng = seeded_rng(0x5f7);
    (0..4).map(|_| (0..1400).map(|_| rng.gen()).collect()).collect()
}

struct Modern {
    clients: Vec<Ipv4Addr>,
    dns: Ipv4Addr,
    web: [Ipv4Addr; 3],
    sftp: Ipv4Addr,
    ntp: Ipv4Addr,
    monitor: Ipv4Addr,
    scanner: Ipv4Addr,
    pages: Vec<Vec<u8>>,
    blocks: Vec<Vec<u8>>,
}

impl Modern {
    fn new() -> Self {
        Self {
            clients: (10..34).map(|h| Ipv4Addr::new(192, 168, 1, h)).collect(),
            dns: Ipv4Addr::new(10, 0, 0, 53),
            web: [80, 81, 82].map(|h| Ipv4Addr::new(10, 0, 0, h)),
            sftp: Ipv4Addr::new(10, 0, 0, 22),
            ntp: Ipv4Addr::new(10, 0, 0, 123),
            monitor: Ipv4Addr::new(10, 0, 0, 5),
            scanner: Ipv4Addr::new(10, 0, 0, 9),
            pages: (0..6).map(|k| text_block(k, MSS)).collect(),
            blocks: opaque_blocks(),
        }
    }

    fn dns_lookup(&self, e: &mut Emitter, t: f64, client: Ipv4Addr, name: &str) -> f64 {
        let sport = e.ephemeral();
        let id = e.rng.gen();
        e.udp(t, client, self.dns, sport, 53, &dns_query(id, name, false));
        let r = t + e.rng.gen_range(0.0008..0.004);
        e.udp(r, self.dns, client, 53, sport, &dns_query(id, name, true));
        r
    }

    fn web(&self, e: &mut Emitter, t: f64, client: Ipv4Addr) {
        const OBJECTS: [&str; 4] = ["/", "/style.css", "/app.js", "/logo.png"];
        let site = e.rng.gen_range(0..6);
        let server = self.web[site % 3];
        let host = format!("www.site{site}.example");
        let t0 = self.dns_lookup(e, t, client, &host) + 0.0005;
        let rtt = e.rng.gen_range(0.01..0.06);
        let conns = e.rng.gen_range(1..=4);
        for (j, object) in OBJECTS.iter().take(conns).enumerate() {
            let mut c = Conn::open(e, client, server, 80, false);
            let start = c.handshake(e, t0 + j as f64 * 0.002, rtt);
            let request =
                format!("GET {} HTTP/1.1\r\nHost: {host}\r\nUser-Agent: Mozilla/5.0\r\nAccept: */*\r\n\r\n", object);
            c.send(e, start, true, TCP_PSH | TCP_ACK, request.as_bytes());
            let n = e.rng.gen_range(1..=6);
            let tail = e.rng.gen_range(200..MSS);
            let page = &self.pages[(site + j) % self.pages.len()];
            let header = format!(
                "HTTP/1.1 200 OK\r\nContent-Type: text/html\r\nContent-Length: {}\r\n\r\n",
                (n - 1) * MSS + tail
            );
            let mut segments: Vec<Vec<u8>> = (0..n).map(|_| page.clone()).collect();
            segments[0].splice(..header.len(), header.bytes());
            segments[n - 1].truncate(tail);
            let served = start + rtt * 0.5 + e.rng.gen_range(0.001..0.02);
            let done = c.bulk(e, served, rtt, false, &segments);
            let idle = e.rng.gen_range(0.05..2.0);
            c.close(e, done + idle, rtt);
        }
    }

    fn sftp(&self, e: &mut Emitter, t: f64, client: Ipv4Addr) {
        let rtt = e.rng.gen_range(0.01..0.04);
        let mut c = Conn::open(e, client, self.sftp, 22, false);
        let start = c.handshake(e, t, rtt);
        c.send(e, start, false, TCP_PSH | TCP_ACK, b"SSH-2.0-OpenSSH_8.9\r\n");
        let r = c.exchange(e, start + rtt, rtt, b"SSH-2.0-OpenSSH_9.0\r\n", &self.blocks[0][..256]);
        let n = e.rng.gen_range(4..=40);
        let first = e.rng.gen_range(0..self.blocks.len());
        let segments: Vec<Vec<u8>> = (0..n).map(|k| self.blocks[(first + k) % self.blocks.len()].clone()).collect();
        let done = c.bulk(e, r + rtt, rtt, true, &segments);
        let idle = e.rng.gen_range(0.01..0.5);
        c.close(e, done + idle, rtt);
    }

    fn ntp(&self, e: &mut Emitter, t: f64, client: Ipv4Addr) {
        let mut msg = [0u8; 48];
        msg[0] = 0x23;
        msg[40..48].copy_from_slice(&e.rng.gen::<u64>().to_be_bytes());
        e.udp(t, client, self.ntp, 123, 123, &msg);
        msg[0] = 0x24;
        msg[1] = 2;
        let r = t + e.rng.gen_range(0.001..0.005);
        e.udp(r, self.ntp, client, 123, 123, &msg);
    }

    fn session(&self, e: &mut Emitter, t: f64) {
        let client = self.clients[e.rng.gen_range(0..self.clients.len())];
        match e.rng.gen_range(0..100) {
            0..=59 => self.web(e, t, client),
            60..=74 => self.sftp(e, t, client),
            75..=89 => {
                let name = format!("api{}.example", e.rng.gen_range(0..20));
                self.dns_lookup(e, t, client, &name);
            }
            _ => self.ntp(e, t, client),
        }
    }

    /// SYN-ping liveness checks against the main web server once a second.
    /// Probes are never completed or reset by the monitor.
    fn monitor(&self, e: &mut Emitter, until: f64) {
        let mut t = e.rng.gen_range(0.0..1.0);
        while t < until {
            let mut c = Conn::open(e, self.monitor, self.web[0], 80, false);
            c.syn_options = &[];
            c.send(e, t, true, TCP_SYN, &[]);
            c.send(e, t + 0.0003, false, TCP_SYN | TCP_ACK, &[]);
            t += 1.0 + e.rng.gen_range(-0.01..0.01);
        }
    }

    /// Internal vulnerability scanner: slow sweeps of TCP SYN or empty UDP
    /// probes over low ports of one host at a time. Closed TCP ports answer
    /// RST/ACK and closed UDP ports ICMP port unreachable.
    fn scan(&self, e: &mut Emitter, until: f64) {
        let mut targets = self.clients.clone();
        targets.extend(self.web);
        targets.extend([self.dns, self.sftp, self.ntp]);
        let mut t = e.rng.gen_range(0.0..5.0);
        while t < until {
            let target = targets[e.rng.gen_range(0..targets.len())];
            let tcp = e.rng.gen_bool(0.5);
            let sport = e.ephemeral();
            for _ in 0..e.rng.gen_range(15..40) {
                let port = e.rng.gen_range(1..=1024);
                let reply = t + e.rng.gen_range(0.0002..0.002);
                if tcp {
                    let mut c = Conn::open(e, self.scanner, target, port, false);
                    c.cport = sport;
                    c.syn_options = &[];
                    c.send(e, t, true, TCP_SYN, &[]);
                    let open = [(self.web[0], 80), (self.web[1], 80), (self.web[2], 80), (self.sftp, 22)]
                        .contains(&(target, port));
                    if open {
                        c.send(e, reply, false, TCP_SYN | TCP_ACK, &[]);
                    } else {
                        c.sseq = 0;
                        c.send(e, reply, false, TCP_RST | TCP_ACK, &[]);
                    }
                } else {
                    let probe = e.builder(self.scanner, target).udp(sport, port, &[]);
                    let mut quoted = vec![0u8; 4];
                    quoted.extend_from_slice(&probe[14..42]);
                    e.push(t, probe);
                    if !(target == self.dns && port == 53 || target == self.ntp && port == 123) {
                        e.icmp_code(reply, target, self.scanner, 3, 3, &quoted);
                    }
                }
                t += exp_gap(&mut e.rng, 0.3);
            }
            t += exp_gap(&mut e.rng, 5.0);
        }
    }
}

struct Legacy {
    clients: Vec<Ipv4Addr>,
    telnet: Ipv4Addr,
    ftp: Ipv4Addr,
    smtp: Ipv4Addr,
    dns: Ipv4Addr,
    files: Vec<Vec<u8>>,
}

impl Legacy {
    fn new() -> Self {
        Self {
            clients: (100..120).map(|h| Ipv4Addr::new(172, 16, 112, h)).collect(),
            telnet: Ipv4Addr::new(172, 16, 112, 50),
            ftp: Ipv4Addr::new(172, 16, 112, 60),
            smtp: Ipv4Addr::new(172, 16, 112, 70),
            dns: Ipv4Addr::new(172, 16, 112, 20),
            files: (10..14).map(|k| text_block(k, MSS)).collect(),
        }
    }

    fn telnet(&self, e: &mut Emitter, t: f64, client: Ipv4Addr) {
        const COMMANDS: [&str; 5] = ["ls -l\r", "cat notes.txt\r", "who\r", "ps aux\r", "df -h\r"];
        let rtt = e.rng.gen_range(0.002..0.02);
        let mut c = Conn::open(e, client, self.telnet, 23, true);
        let mut now = c.handshake(e, t, rtt);
        c.send(e, now, false, TCP_PSH | TCP_ACK, b"\r\nSunOS 5.6\r\n\r\nlogin: ");
        now += e.rng.gen_range(0.5..2.0);
        let n = e.rng.gen_range(1..=3);
        let mut typed = String::from("alice\r");
        for _ in 0..n {
            typed.push_str(COMMANDS[e.rng.gen_range(0..COMMANDS.len())]);
        }
        for ch in typed.bytes() {
            c.send(e, now, true, TCP_PSH | TCP_ACK, &[ch]);
            c.send(e, now + rtt * 0.5, false, TCP_PSH | TCP_ACK, &[ch]);
            if ch == b'\r' {
                let out = self.files[e.rng.gen_range(0..self.files.len())][..e.rng.gen_range(40..600)].to_vec();
                c.send(e, now + rtt, false, TCP_PSH | TCP_ACK, &out);
                c.send(e, now + rtt * 1.5, true, TCP_ACK, &[]);
            }
            now += e.rng.gen_range(0.1..0.4);
        }
        c.close(e, now, rtt);
    }

    fn ftp(&self, e: &mut Emitter, t: f64, client: Ipv4Addr) {
        let rtt = e.rng.gen_range(0.002..0.02);
        let mut c = Conn::open(e, client, self.ftp, 21, true);
        let mut now = c.handshake(e, t, rtt);
        c.send(e, now, false, TCP_PSH | TCP_ACK, b"220 FTP server ready.\r\n");
        now += rtt;
        now = c.exchange(e, now, rtt, b"USER anonymous\r\n", b"331 Guest login ok.\r\n") + 0.3;
        now = c.exchange(e, now, rtt, b"PASS guest@\r\n", b"230 Guest login ok.\r\n") + 0.5;
        let k = e.rng.gen_range(0..self.files.len());
        let retr = format!("RETR file{k}.txt\r\n");
        now = c.exchange(e, now, rtt, retr.as_bytes(), b"150 Opening ASCII mode data connection.\r\n");
        let port = e.rng.gen_range(1024..=5000);
        let mut data = Conn::open(e, self.ftp, client, port, true);
        data.cport = 20;
        let start = data.handshake(e, now + 0.001, rtt);
        let n = e.rng.gen_range(1..=20);
        let segments: Vec<Vec<u8>> = (0..n).map(|i| self.files[(k + i) % self.files.len()].clone()).collect();
        let done = data.bulk(e, start, rtt, true, &segments);
        data.close(e, done, rtt);
        now = done + rtt + 0.01;
        c.send(e, now, false, TCP_PSH | TCP_ACK, b"226 Transfer complete.\r\n");
        now = c.exchange(e, now + 1.0, rtt, b"QUIT\r\n", b"221 Goodbye.\r\n");
        c.close(e, now + rtt, rtt);
    }

    fn smtp(&self, e: &mut Emitter, t: f64, client: Ipv4Addr) {
        let rtt = e.rng.gen_range(0.002..0.02);
        let mut c = Conn::open(e, client, self.smtp, 25, true);
        let mut now = c.handshake(e, t, rtt);
        c.send(e, now, false, TCP_PSH | TCP_ACK, b"220 mail.example ESMTP Sendmail 8.8.8\r\n");
        now += rtt;
        let steps: [(&[u8], &[u8]); 4] = [
            (b"HELO pc.example\r\n", b"250 Hello\r\n"),
            (b"MAIL FROM:<alice@example>\r\n", b"250 Sender ok\r\n"),
            (b"RCPT TO:<bob@example>\r\n", b"250 Recipient ok\r\n"),
            (b"DATA\r\n", b"354 Enter mail\r\n"),
        ];
        for (req, rep) in steps {
            now = c.exchange(e, now, rtt, req, rep) + 0.002;
        }
        let n = e.rng.gen_range(1..=3);
        let body: Vec<Vec<u8>> = (0..n).map(|i| self.files[i % self.files.len()].clone()).collect();
        now = c.bulk(e, now, rtt, true, &body);
        now = c.exchange(e, now + 0.001, rtt, b"\r\n.\r\n", b"250 Message accepted\r\n");
        now = c.exchange(e, now + 0.001, rtt, b"QUIT\r\n", b"221 Closing\r\n");
        c.close(e, now + rtt, rtt);
    }

    fn ping(&self, e: &mut Emitter, t: f64, client: Ipv4Addr) {
        let target = [self.telnet, self.ftp, self.smtp][e.rng.gen_range(0..3)];
        let ident: u16 = e.rng.gen();
        for seq in 0..4u16 {
            let mut rest = Vec::with_capacity(60);
            rest.extend_from_slice(&ident.to_be_bytes());
            rest.extend_from_slice(&seq.to_be_bytes());
            rest.extend((0..56u8).map(|b| b.wrapping_add(8)));
            let s = t + f64::from(seq);
            e.icmp(s, client, target, 8, &rest);
            let r = s + e.rng.gen_range(0.0005..0.003);
            e.icmp(r, target, client, 0, &rest);
        }
    }

    fn session(&self, e: &mut Emitter, t: f64) {
        let client = self.clients[e.rng.gen_range(0..self.clients.len())];
        match e.rng.gen_range(0..100) {
            0..=34 => self.telnet(e, t, client),
            35..=54 => self.ftp(e, t, client),
            55..=79 => self.smtp(e, t, client),
            80..=89 => self.ping(e, t, client),
            _ => {
                let sport = e.rng.gen_range(1024..=5000);
                let id = e.rng.gen();
                let name = format!("host{}.lab.example", e.rng.gen_range(0..10));
                e.udp(t, client, self.dns, sport, 53, &dns_query(id, &name, false));
                e.udp(t + 0.002, self.dns, client, 53, sport, &dns_query(id, &name, true));
            }
        }
    }
}

fn nth_time(out: &[Pending], n: usize) -> f64 {
    let mut ts: Vec<f64> = out.iter().map(|p| p.t).collect();
    let (_, nth, _) = ts.select_nth_unstable_by(n - 1, f64::total_cmp);
    *nth
}

fn benign(cfg: &SynthConfig) -> Vec<Pending> {
    let mut e = Emitter::new(cfg.seed);
    let modern = Modern::new();
    let legacy = Legacy::new();
    let mean_gap = match cfg.benign_mix {
        BenignMix::Modern => 0.25,
        BenignMix::Legacy => 0.5,
    };
    let mut t = 0.0;
    let mut sessions = 0usize;
    loop {
        match cfg.benign_mix {
            BenignMix::Modern => modern.session(&mut e, t),
            BenignMix::Legacy => legacy.session(&mut e, t),
        }
        sessions += 1;
        t += exp_gap(&mut e.rng, mean_gap);
        // Stop once every packet that can land in the first `benign_count`
        // has been generated: later sessions all start after the cutoff.
        if e.out.len() >= cfg.benign_count && sessions.is_multiple_of(16) && nth_time(&e.out, cfg.benign_count) < t {
            break;
        }
    }
    if cfg.benign_mix == BenignMix::Modern {
        modern.monitor(&mut e, t);
        modern.scan(&mut e, t);
    }
    let mut out = e.out;
    out.sort_by(|a, b| a.t.total_cmp(&b.t));
    out.truncate(cfg.benign_count);
    out
}

fn attack(kind: AttackType, mix: BenignMix, count: usize, start: f64, seed: u64) -> Vec<Pending> {
    let mut e = Emitter::new(seed ^ 0xa77a_c4ed);
    let attackers = kind.attackers();
    for (k, a) in attackers.iter().enumerate() {
        e.ttls.insert(*a, 48 + (5 * k % 16) as u8);
    }
    let (web, udp_target) = match mix {
        BenignMix::Modern => (Ipv4Addr::new(10, 0, 0, 80), Ipv4Addr::new(10, 0, 0, 53)),
        BenignMix::Legacy => (Ipv4Addr::new(172, 16, 112, 50), Ipv4Addr::new(172, 16, 112, 20)),
    };
    match kind {
        AttackType::SynFlood => {
            let mut t = start;
            for _ in 0..count {
                let a = attackers[e.rng.gen_range(0..attackers.len())];
                let spec = TcpSpec {
                    src_port: e.rng.gen_range(1024..=65535),
                    dst_port: e.rng.gen_range(1..=65535),
                    seq: e.rng.gen(),
                    flags: TCP_SYN,
                    window: 512,
                    ..TcpSpec::default()
                };
                let f = e.builder(a, web).tcp(spec);
                e.push(t, f);
                t += exp_gap(&mut e.rng, 0.00025);
            }
        }
        AttackType::UdpFlood => {
            let mut t = start;
            for _ in 0..count {
                let a = attackers[e.rng.gen_range(0..attackers.len())];
                let len = e.rng.gen_range(1..=18);
                let payload: Vec<u8> = (0..len).map(|_| e.rng.gen()).collect();
                let (sport, dport) = (e.rng.gen_range(1024..=65535), e.rng.gen_range(1..=65535));
                e.udp(t, a, udp_target, sport, dport, &payload);
                t += exp_gap(&mut e.rng, 0.00025);
            }
        }
        AttackType::SlowHttp => {
            let n = attackers.len();
            for (k, &a) in attackers.iter().enumerate() {
                let quota = count / n + usize::from(k < count % n);
                if quota == 0 {
                    continue;
                }
                let mut c = Conn::open(&mut e, a, web, 80, false);
                let mut t = start + e.rng.gen_range(0.0..SLOW_HTTP_MIN_GAP);
                for i in 0..quota {
                    match i {
                        0 => c.send(&mut e, t, true, TCP_SYN, &[]),
                        1 => {
                            c.sseq = c.sseq.wrapping_add(1);
                            c.send(&mut e, t, true, TCP_ACK, &[])
                        }
                        2 => {
                            let line = format!("GET /?{} HTTP/1.1\r\n", e.rng.gen::<u32>());
                            c.send(&mut e, t, true, TCP_PSH | TCP_ACK, line.as_bytes())
                        }
                        _ => {
                            let line = format!("X-a: {}\r\n", e.rng.gen_range(1..5000));
                            c.send(&mut e, t, true, TCP_PSH | TCP_ACK, line.as_bytes())
                        }
                    }
                    t += e.rng.gen_range(SLOW_HTTP_MIN_GAP..3.0 * SLOW_HTTP_MIN_GAP);
                }
            }
        }
    }
    e.out
}

/// Generates a capture with exactly `benign_count` benign packets and
/// `attack_count` attack packets. The same config always yields the same bytes.
pub fn generate_synthetic(cfg: &SynthConfig) -> Result<SynthCapture> {
    cfg.validate()?;
    let benign = benign(cfg);
    let span = benign.last().map_or(0.0, |p| p.t);
    let mut all: Vec<(Pending, Label)> = benign.into_iter().map(|p| (p, Label::Benign)).collect();
    let attackers = match cfg.attack {
        Some(kind) => {
            let burst = attack(kind, cfg.benign_mix, cfg.attack_count, 0.3 * span, cfg.seed);
            all.extend(burst.into_iter().map(|p| (p, Label::Attack)));
            kind.attackers()
        }
        None => Vec::new(),
    };
    let to_micros = |t: f64| cfg.start_micros + (t * 1e6).round() as u64;
    let mut packets: Vec<SynthPacket> =
        all.into_iter().map(|(p, label)| SynthPacket { ts_micros: to_micros(p.t), frame: p.frame, label }).collect();
    packets.sort_by_key(|p| p.ts_micros);
    Ok(SynthCapture { config: cfg.clone(), packets, attackers })
}
