//! Per-packet metrics, attack lag and per-source breakdowns, plus report
//! rendering.

use crate::ingest::{Label, PacketRecord};
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{BTreeMap, HashMap};
use std::fmt;
use std::fmt::Write as _;
use std::net::Ipv4Addr;
use std::str::FromStr;

pub const REPORT_FORMAT: &str = "zdl-report";
pub const REPORT_VERSION: u32 = 1;
/// Per-source rows below this detection rate are flagged in rendered tables.
pub const LOW_DETECTION_FLAG: f64 = 0.5;

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub fp: u64,
    pub tn: u64,
    #[serde(rename = "fn")]
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn record(&mut self, pred: u8, label: u8) {
        match (pred != 0, label != 0) {
            (true, true) => self.tp += 1,
            (true, false) => self.fp += 1,
            (false, false) => self.tn += 1,
            (false, true) => self.fn_ += 1,
        }
    }

    pub fn total(&self) -> u64 {
        self.tp + self.fp + self.tn + self.fn_
    }

    /// `tp / (tp + fn)`; `None` without attack packets.
    pub fn detection_rate(&self) -> Option<f64> {
        ratio(self.tp, self.tp + self.fn_)
    }

    /// `fp / (fp + tn)`; `None` without benign packets.
    pub fn false_positive_rate(&self) -> Option<f64> {
        ratio(self.fp, self.fp + self.tn)
    }
}

fn ratio(num: u64, den: u64) -> Option<f64> {
    (den > 0).then(|| num as f64 / den as f64)
}

/// A rate as a two-decimal percentage ("61.32%"), or "n/a".
pub fn format_rate(rate: Option<f64>) -> String {
    rate.map_or_else(|| "n/a".to_string(), |r| format!("{:.2}%", r * 100.0))
}

fn check_lengths(n: usize, others: &[(&str, usize)]) -> Result<()> {
    for (what, len) in others {
        if *len != n {
            return Err(Error::InvalidInput(format!("{what} has {len} entries, predictions have {n}")));
        }
    }
    Ok(())
}

fn check_binary(name: &str, xs: &[u8]) -> Result<()> {
    match xs.iter().position(|&v| v > 1) {
        Some(i) => Err(Error::InvalidInput(format!("{name}[{i}] = {} is not 0 or 1", xs[i]))),
        None => Ok(()),
    }
}

pub fn confusion(preds: &[u8], labels: &[u8]) -> Result<ConfusionMatrix> {
    check_lengths(preds.len(), &[("labels", labels.len())])?;
    check_binary("preds", preds)?;
    check_binary("labels", labels)?;
    let mut m = ConfusionMatrix::default();
    for (&p, &l) in preds.iter().zip(labels) {
        m.record(p, l);
    }
    Ok(m)
}

/// One maximal run of attack labels within a single source's packets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Episode {
    pub src_ip: Ipv4Addr,
    /// Stream position of the episode's first packet.
    pub start: usize,
    pub packets: usize,
    /// Stream position of the first detected packet of the episode.
    pub first_detection: Option<usize>,
    /// Packets of any source between the episode start and its first detection.
    pub lag_packets: Option<usize>,
    /// Packets of this episode before its first detection.
    pub lag_source_packets: Option<usize>,
    pub lag_seconds: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimingReport {
    pub episodes: Vec<Episode>,
    pub detected: usize,
    pub missed: usize,
    pub mean_lag_packets: Option<f64>,
    pub mean_lag_source_packets: Option<f64>,
}

/// Attack episodes and their detection lag. Episodes are listed by start.
pub fn attack_lag(preds: &[u8], labels: &[u8], sources: &[Ipv4Addr], timestamps: &[f64]) -> Result<TimingReport> {
    check_lengths(
        preds.len(),
        &[("labels", labels.len()), ("sources", sources.len()), ("timestamps", timestamps.len())],
    )?;
    let mut open: HashMap<Ipv4Addr, usize> = HashMap::new();
    let mut episodes: Vec<Episode> = Vec::new();
    for i in 0..preds.len() {
        let src = sources[i];
        if labels[i] == 0 {
            open.remove(&src);
            continue;
        }
        let e = *open.entry(src).or_insert_with(|| {
            episodes.push(Episode {
                src_ip: src,
                start: i,
                packets: 0,
                first_detection: None,
                lag_packets: None,
                lag_source_packets: None,
                lag_seconds: None,
            });
            episodes.len() - 1
        });
        let ep = &mut episodes[e];
        if preds[i] != 0 && ep.first_detection.is_none() {
            ep.first_detection = Some(i);
            ep.lag_packets = Some(i - ep.start);
            ep.lag_source_packets = Some(ep.packets);
            ep.lag_seconds = Some(timestamps[i] - timestamps[ep.start]);
        }
        ep.packets += 1;
    }
    let detected = episodes.iter().filter(|e| e.first_detection.is_some()).count();
    let mean = |f: fn(&Episode) -> Option<usize>| {
        let lags: Vec<usize> = episodes.iter().filter_map(f).collect();
        (!lags.is_empty()).then(|| lags.iter().sum::<usize>() as f64 / lags.len() as f64)
    };
    Ok(TimingReport {
        detected,
        missed: episodes.len() - detected,
        mean_lag_packets: mean(|e| e.lag_packets),
        mean_lag_source_packets: mean(|e| e.lag_source_packets),
        episodes,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SourceRow {
    pub src_ip: Ipv4Addr,
    pub attack_packets: u64,
    pub detected: u64,
    pub benign_packets: u64,
    pub false_alarms: u64,
}

impl SourceRow {
    pub fn detection_rate(&self) -> Option<f64> {
        ratio(self.detected, self.attack_packets)
    }

    pub fn false_alarm_rate(&self) -> Option<f64> {
        ratio(self.false_alarms, self.benign_packets)
    }
}

/// Confusion counts grouped by source address, sorted by address.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PerIpReport {
    pub rows: Vec<SourceRow>,
}

impl PerIpReport {
    /// The global matrix implied by the rows.
    pub fn marginals(&self) -> ConfusionMatrix {
        let mut m = ConfusionMatrix::default();
        for r in &self.rows {
            m.tp += r.detected;
            m.fn_ += r.attack_packets - r.detected;
            m.fp += r.false_alarms;
            m.tn += r.benign_packets - r.false_alarms;
        }
        m
    }
}

pub fn per_ip_breakdown(sources: &[Ipv4Addr], preds: &[u8], labels: &[u8]) -> Result<PerIpReport> {
    check_lengths(preds.len(), &[("labels", labels.len()), ("sources", sources.len())])?;
    check_binary("preds", preds)?;
    check_binary("labels", labels)?;
    let mut rows: BTreeMap<Ipv4Addr, SourceRow> = BTreeMap::new();
    for i in 0..preds.len() {
        let r = rows.entry(sources[i]).or_insert_with(|| SourceRow {
            src_ip: sources[i],
            attack_packets: 0,
            detected: 0,
            benign_packets: 0,
            false_alarms: 0,
        });
        let hit = u64::from(preds[i] != 0);
        if labels[i] != 0 {
            r.attack_packets += 1;
            r.detected += hit;
        } else {
            r.benign_packets += 1;
            r.false_alarms += hit;
        }
    }
    Ok(PerIpReport { rows: rows.into_values().collect() })
}

/// What produced the predictions being evaluated.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportMeta {
    pub model: String,
    pub extractor: String,
    pub threshold: f64,
    pub time_step: Option<usize>,
    pub mode: Option<String>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvalReport {
    pub format: String,
    pub version: u32,
    pub meta: ReportMeta,
    pub packets: u64,
    /// Packets left out because they carry no label.
    pub unlabeled: u64,
    pub confusion: ConfusionMatrix,
    pub detection_rate: Option<f64>,
    pub false_positive_rate: Option<f64>,
    pub timing: TimingReport,
    pub per_ip: PerIpReport,
}

impl EvalReport {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)? + "\n")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let r: Self = serde_json::from_str(text)?;
        if r.format != REPORT_FORMAT || r.version != REPORT_VERSION {
            return Err(Error::InvalidInput(format!(
                "expected {REPORT_FORMAT} v{REPORT_VERSION}, found {} v{}",
                r.format, r.version
            )));
        }
        Ok(r)
    }
}

/// Builds the full report. `preds[i]` belongs to `packets[i]`; unlabeled
/// packets are counted and skipped. Episode positions in the report are
/// packet indices; lags count evaluated packets.
pub fn evaluate(meta: ReportMeta, packets: &[PacketRecord], preds: &[u8]) -> Result<EvalReport> {
    check_lengths(preds.len(), &[("packets", packets.len())])?;
    let kept: Vec<usize> = (0..packets.len()).filter(|&i| packets[i].label != Label::Unlabeled).collect();
    let labels: Vec<u8> = kept.iter().filter_map(|&i| packets[i].label.as_bit()).collect();
    let preds: Vec<u8> = kept.iter().map(|&i| preds[i]).collect();
    let sources: Vec<Ipv4Addr> = kept.iter().map(|&i| packets[i].src_ip).collect();
    let times: Vec<f64> = kept.iter().map(|&i| packets[i].timestamp).collect();
    let m = confusion(&preds, &labels)?;
    let mut timing = attack_lag(&preds, &labels, &sources, &times)?;
    for e in &mut timing.episodes {
        e.start = packets[kept[e.start]].index;
        e.first_detection = e.first_detection.map(|f| packets[kept[f]].index);
    }
    Ok(EvalReport {
        format: REPORT_FORMAT.into(),
        version: REPORT_VERSION,
        meta,
        packets: m.total(),
        unlabeled: (packets.len() - kept.len()) as u64,
        confusion: m,
        detection_rate: m.detection_rate(),
        false_positive_rate: m.false_positive_rate(),
        timing,
        per_ip: per_ip_breakdown(&sources, &preds, &labels)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportFormat {
    Json,
    Csv,
    Markdown,
}

impl ReportFormat {
    pub fn name(self) -> &'static str {
        match self {
            ReportFormat::Json => "json",
            ReportFormat::Csv => "csv",
            ReportFormat::Markdown => "markdown",
        }
    }
}

impl fmt::Display for ReportFormat {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            "markdown" | "md" => Ok(ReportFormat::Markdown),
            _ => Err(Error::InvalidConfig(format!("unknown report format {s:?}"))),
        }
    }
}

pub fn render_report(r: &EvalReport, format: ReportFormat) -> Result<String> {
    match format {
        ReportFormat::Json => r.to_json(),
        ReportFormat::Csv => Ok(render_csv(r)),
        ReportFormat::Markdown => Ok(render_markdown(r)),
    }
}

fn csv_rate(rate: Option<f64>) -> String {
    rate.map(|v| v.to_string()).unwrap_or_default()
}

fn render_csv(r: &EvalReport) -> String {
    let mut out =
        String::from("src_ip,attack_packets,detected,benign_packets,false_alarms,detection_rate,false_alarm_rate\n");
    for row in &r.per_ip.rows {
        let _ = writeln!(
            out,
            "{},{},{},{},{},{},{}",
            row.src_ip,
            row.attack_packets,
            row.detected,
            row.benign_packets,
            row.false_alarms,
            csv_rate(row.detection_rate()),
            csv_rate(row.false_alarm_rate())
        );
    }
    out
}

fn opt<T: fmt::Display>(v: &Option<T>) -> String {
    v.as_ref().map_or_else(|| "-".to_string(), |x| x.to_string())
}

fn render_markdown(r: &EvalReport) -> String {
    let m = &r.meta;
    let c = &r.confusion;
    let t = &r.timing;
    let mut s = String::from("# Evaluation report\n\n| field | value |\n|---|---|\n");
    let _ = writeln!(s, "| model | {} |", m.model);
    let _ = writeln!(s, "| extractor | {} |", m.extractor);
    let _ = writeln!(s, "| threshold | {} |", m.threshold);
    let _ = writeln!(s, "| time step | {} |", opt(&m.time_step));
    let _ = writeln!(s, "| mode | {} |", opt(&m.mode));
    let _ = writeln!(s, "| seed | {} |", opt(&m.seed));
    let _ = writeln!(s, "| packets | {} |", r.packets);
    let _ = writeln!(s, "| unlabeled (skipped) | {} |", r.unlabeled);
    let _ = writeln!(s, "| detection rate | {} |", format_rate(r.detection_rate));
    let _ = writeln!(s, "| false positive rate | {} |", format_rate(r.false_positive_rate));

    s.push_str("\n## Confusion matrix\n\n| | predicted attack | predicted benign |\n|---|---|---|\n");
    let _ = writeln!(s, "| attack | {} | {} |", c.tp, c.fn_);
    let _ = writeln!(s, "| benign | {} | {} |", c.fp, c.tn);

    s.push_str("\n## Attack lag\n\n");
    let _ = writeln!(
        s,
        "{} episodes, {} detected, {} missed; mean lag {} packets ({} from the same source).\n",
        t.episodes.len(),
        t.detected,
        t.missed,
        t.mean_lag_packets.map_or("-".into(), |v| format!("{v:.2}")),
        t.mean_lag_source_packets.map_or("-".into(), |v| format!("{v:.2}")),
    );
    s.push_str("| src_ip | start | packets | first detection | lag (packets) | lag (same source) | lag (s) |\n");
    s.push_str("|---|---|---|---|---|---|---|\n");
    for e in &t.episodes {
        let secs = e.lag_seconds.map_or("-".into(), |v| format!("{v:.6}"));
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} |",
            e.src_ip,
            e.start,
            e.packets,
            opt(&e.first_detection),
            opt(&e.lag_packets),
            opt(&e.lag_source_packets),
            secs
        );
    }

    s.push_str("\n## Per source\n\n");
    s.push_str("| src_ip | attack packets | detected | detection rate | benign packets | false alarms | false alarm rate | flag |\n");
    s.push_str("|---|---|---|---|---|---|---|---|\n");
    for row in &r.per_ip.rows {
        let low = row.detection_rate().is_some_and(|d| d < LOW_DETECTION_FLAG);
        let _ = writeln!(
            s,
            "| {} | {} | {} | {} | {} | {} | {} | {} |",
            row.src_ip,
            row.attack_packets,
            row.detected,
            format_rate(row.detection_rate()),
            row.benign_packets,
            row.false_alarms,
            format_rate(row.false_alarm_rate()),
            if low { "low detection" } else { "" }
        );
    }
    s
}
