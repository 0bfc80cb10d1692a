//! Feature matrices shared by every extractor, and their CSV form
//! `idx,<col0>..<colN>[,label]`.

use crate::ingest::Label;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ExtractorKind {
    Manual,
    ManualBatched,
    Embed,
    EmbedBatched,
    Ae,
    Flowstats,
}

impl ExtractorKind {
    pub const ALL: [ExtractorKind; 6] = [
        ExtractorKind::Manual,
        ExtractorKind::ManualBatched,
        ExtractorKind::Embed,
        ExtractorKind::EmbedBatched,
        ExtractorKind::Ae,
        ExtractorKind::Flowstats,
    ];

    pub fn name(self) -> &'static str {
        match self {
            ExtractorKind::Manual => "manual",
            ExtractorKind::ManualBatched => "manual-batched",
            ExtractorKind::Embed => "embed",
            ExtractorKind::EmbedBatched => "embed-batched",
            ExtractorKind::Ae => "ae",
            ExtractorKind::Flowstats => "flowstats",
        }
    }

    /// Column prefix used in feature CSV headers.
    pub fn column_prefix(self) -> &'static str {
        match self {
            ExtractorKind::Manual | ExtractorKind::ManualBatched => "f",
            ExtractorKind::Embed | ExtractorKind::EmbedBatched => "e",
            ExtractorKind::Ae => "c",
            ExtractorKind::Flowstats => "fl",
        }
    }

    /// Flow records discard packet order, so they cannot feed sequence models.
    pub fn supports_sequences(self) -> bool {
        self != ExtractorKind::Flowstats
    }
}

impl fmt::Display for ExtractorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for ExtractorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|k| k.name() == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown extractor {s:?}")))
    }
}

pub fn column_names(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// Row-per-sample feature matrix with its provenance.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureSet {
    pub extractor: Option<ExtractorKind>,
    pub columns: Vec<String>,
    pub indices: Vec<usize>,
    pub rows: Vec<Vec<f64>>,
    pub labels: Vec<Label>,
}

impl FeatureSet {
    pub fn new(extractor: ExtractorKind, columns: Vec<String>) -> Self {
        Self { extractor: Some(extractor), columns, indices: Vec::new(), rows: Vec::new(), labels: Vec::new() }
    }

    pub fn push(&mut self, index: usize, row: Vec<f64>, label: Label) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.indices.push(index);
        self.rows.push(row);
        self.labels.push(label);
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.columns.len()
    }

    /// Labels as 0/1; fails on the first unlabeled row.
    pub fn binary_labels(&self) -> Result<Vec<u8>> {
        self.labels
            .iter()
            .zip(&self.indices)
            .map(|(l, &i)| l.as_bit().ok_or(Error::UnlabeledPacket { index: i }))
            .collect()
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("idx");
        for c in &self.columns {
            out.push(',');
            out.push_str(c);
        }
        out.push_str(",label\n");
        for ((idx, row), label) in self.indices.iter().zip(&self.rows).zip(&self.labels) {
            out.push_str(&idx.to_string());
            for v in row {
                out.push(',');
                out.push_str(&v.to_string());
            }
            out.push(',');
            if let Some(b) = label.as_bit() {
                out.push_str(&b.to_string());
            }
            out.push('\n');
        }
        out
    }

    /// Reads `idx,<cols>[,label]`. Also accepts externally produced embedding
    /// files, which carry no label column.
    pub fn from_csv(text: &str, extractor: Option<ExtractorKind>) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let (_, header) = lines.next().ok_or(Error::EmptyDataset)?;
        let mut cols: Vec<String> = header.split(',').map(|s| s.trim().to_string()).collect();
        if cols.first().map(String::as_str) != Some("idx") {
            return Err(Error::Parse { line: 1, message: "feature header must start with idx".into() });
        }
        cols.remove(0);
        let has_label = cols.last().map(String::as_str) == Some("label");
        if has_label {
            cols.pop();
        }
        let mut set = FeatureSet { extractor, columns: cols, indices: vec![], rows: vec![], labels: vec![] };
        let width = set.columns.len() + 1 + usize::from(has_label);
        for (n, line) in lines {
            let fields: Vec<&str> = line.split(',').map(str::trim).collect();
            let perr = |m: String| Error::Parse { line: n + 1, message: m };
            if fields.len() != width {
                return Err(perr(format!("expected {width} fields, found {}", fields.len())));
            }
            let idx = fields[0].parse().map_err(|_| perr(format!("bad idx {:?}", fields[0])))?;
            let row = fields[1..1 + set.columns.len()]
                .iter()
                .map(|s| s.parse::<f64>().map_err(|_| perr(format!("bad number {s:?}"))))
                .collect::<Result<Vec<_>>>()?;
            let label = if has_label {
                match *fields.last().expect("width checked") {
                    "" => Label::Unlabeled,
                    "0" => Label::Benign,
                    "1" => Label::Attack,
                    other => return Err(perr(format!("bad label {other:?}"))),
                }
            } else {
                Label::Unlabeled
            };
            set.push(idx, row, label);
        }
        Ok(set)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut s = FeatureSet::new(ExtractorKind::Manual, column_names("f", 2));
        s.push(0, vec![1.0, 0.1 + 0.2], Label::Attack);
        s.push(5, vec![-3.5e-12, 7.0], Label::Unlabeled);
        let text = s.to_csv();
        assert!(text.starts_with("idx,f0,f1,label\n"));
        assert_eq!(FeatureSet::from_csv(&text, Some(ExtractorKind::Manual)).unwrap(), s);
    }

    #[test]
    fn external_embedding_without_labels() {
        let s = FeatureSet::from_csv("idx,e0,e1\n0,0.5,1\n1,2,3\n", None).unwrap();
        assert_eq!(s.dim(), 2);
        assert_eq!(s.labels, vec![Label::Unlabeled; 2]);
        assert!(s.binary_labels().is_err());
    }

    #[test]
    fn extractor_names_round_trip() {
        for k in ExtractorKind::ALL {
            assert_eq!(k.name().parse::<ExtractorKind>().unwrap(), k);
        }
        assert!("nope".parse::<ExtractorKind>().is_err());
    }
}
