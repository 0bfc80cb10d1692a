//! Label sidecar files.
//!
//! Two CSV forms are accepted, told apart by the header row:
//!
//! * `index,label` labels packets by capture index. Packets not listed stay
//!   unlabeled.
//! * `src_ip,start_ts,end_ts,label` labels every packet whose source address
//!   matches and whose timestamp lies in `[start_ts, end_ts]`. Packets matched by
//!   no window are benign. When windows overlap, the first listed window wins.

use super::{Label, PacketRecord};
use crate::{Error, Result};
use std::collections::BTreeMap;
use std::net::Ipv4Addr;

#[derive(Debug, Clone, PartialEq)]
pub struct LabelWindow {
    pub src_ip: Ipv4Addr,
    pub start_ts: f64,
    pub end_ts: f64,
    pub label: Label,
}

#[derive(Debug, Clone, PartialEq)]
pub enum LabelSidecar {
    ByIndex(BTreeMap<usize, Label>),
    Windows(Vec<LabelWindow>),
}

fn parse_err(line: usize, message: impl Into<String>) -> Error {
    Error::Parse { line, message: message.into() }
}

fn parse_label(field: &str, line: usize) -> Result<Label> {
    field
        .trim()
        .parse::<u8>()
        .ok()
        .and_then(Label::from_bit)
        .ok_or_else(|| parse_err(line, format!("label must be 0 or 1, got {field:?}")))
}

pub fn parse_label_sidecar(text: &str) -> Result<LabelSidecar> {
    let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
    let (_, header) = lines.next().ok_or_else(|| parse_err(1, "empty label file"))?;
    let cols: Vec<&str> = header.split(',').map(str::trim).collect();
    match cols.as_slice() {
        ["index", "label"] => {
            let mut map = BTreeMap::new();
            for (n, line) in lines {
                let f: Vec<&str> = line.split(',').collect();
                if f.len() != 2 {
                    return Err(parse_err(n + 1, "expected index,label"));
                }
                let idx = f[0].trim().parse().map_err(|_| parse_err(n + 1, format!("bad index {:?}", f[0])))?;
                map.insert(idx, parse_label(f[1], n + 1)?);
            }
            Ok(LabelSidecar::ByIndex(map))
        }
        ["src_ip", "start_ts", "end_ts", "label"] => {
            let mut windows = Vec::new();
            for (n, line) in lines {
                let f: Vec<&str> = line.split(',').map(str::trim).collect();
                if f.len() != 4 {
                    return Err(parse_err(n + 1, "expected src_ip,start_ts,end_ts,label"));
                }
                let num = |s: &str| s.parse::<f64>().map_err(|_| parse_err(n + 1, format!("bad timestamp {s:?}")));
                windows.push(LabelWindow {
                    src_ip: f[0].parse().map_err(|_| parse_err(n + 1, format!("bad address {:?}", f[0])))?,
                    start_ts: num(f[1])?,
                    end_ts: num(f[2])?,
                    label: parse_label(f[3], n + 1)?,
                });
            }
            Ok(LabelSidecar::Windows(windows))
        }
        _ => Err(parse_err(1, format!("unrecognized label header {header:?}"))),
    }
}

pub fn apply_labels(packets: &mut [PacketRecord], sidecar: &LabelSidecar) {
    match sidecar {
        LabelSidecar::ByIndex(map) => {
            for p in packets.iter_mut() {
                if let Some(l) = map.get(&p.index) {
                    p.label = *l;
                }
            }
        }
        LabelSidecar::Windows(windows) => {
            for p in packets.iter_mut() {
                p.label = windows
                    .iter()
                    .find(|w| w.src_ip == p.src_ip && p.timestamp >= w.start_ts && p.timestamp <= w.end_ts)
                    .map_or(Label::Benign, |w| w.label);
            }
        }
    }
}

/// Index-form sidecar text for a labeled packet sequence.
pub fn render_index_sidecar(labels: impl IntoIterator<Item = (usize, Label)>) -> String {
    let mut out = String::from("index,label\n");
    for (i, l) in labels {
        if let Some(b) = l.as_bit() {
            out.push_str(&format!("{i},{b}\n"));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn pkt(index: usize, ts: f64, src: [u8; 4]) -> PacketRecord {
        let mut p = PacketRecord::from_frame(index, ts, 0, vec![]);
        p.src_ip = Ipv4Addr::from(src);
        p
    }

    #[test]
    fn index_form() {
        let s = parse_label_sidecar("index,label\n0,1\n2,0\n").unwrap();
        let mut ps = vec![pkt(0, 0.0, [1, 1, 1, 1]), pkt(1, 0.0, [1, 1, 1, 1]), pkt(2, 0.0, [1, 1, 1, 1])];
        apply_labels(&mut ps, &s);
        assert_eq!(ps.iter().map(|p| p.label).collect::<Vec<_>>(), [Label::Attack, Label::Unlabeled, Label::Benign]);
    }

    #[test]
    fn window_form() {
        let s = parse_label_sidecar("src_ip,start_ts,end_ts,label\n10.0.0.9,5,10,1\n").unwrap();
        let mut ps = vec![
            pkt(0, 4.0, [10, 0, 0, 9]),
            pkt(1, 5.0, [10, 0, 0, 9]),
            pkt(2, 7.0, [10, 0, 0, 8]),
            pkt(3, 10.0, [10, 0, 0, 9]),
        ];
        apply_labels(&mut ps, &s);
        assert_eq!(
            ps.iter().map(|p| p.label).collect::<Vec<_>>(),
            [Label::Benign, Label::Attack, Label::Benign, Label::Attack]
        );
    }

    #[test]
    fn bad_rows_are_rejected() {
        assert!(parse_label_sidecar("index,label\n0,2\n").is_err());
        assert!(parse_label_sidecar("foo,bar\n").is_err());
        assert!(parse_label_sidecar("").is_err());
    }

    #[test]
    fn render_round_trip() {
        let text = render_index_sidecar([(0, Label::Benign), (1, Label::Attack), (2, Label::Unlabeled)]);
        let s = parse_label_sidecar(&text).unwrap();
        assert_eq!(s, LabelSidecar::ByIndex([(0, Label::Benign), (1, Label::Attack)].into_iter().collect()));
    }
}
