//! Declarative train/test dataset assembly, 80/20 splits and synthetic captures.
//!
//! A [`ScenarioSpec`] lists capture slices for each side. Assembly
//! concatenates the slices in spec order, re-indexes packets from zero and
//! records where every packet came from in a [`DatasetManifest`], which is
//! enough to rebuild the dataset byte for byte.

pub mod synth;

pub use synth::{generate_synthetic, AttackType, BenignMix, SynthCapture, SynthConfig};

use crate::digest::{file_sha256, sha256_hex};
use crate::ingest::pcap::parse_header;
use crate::ingest::{apply_labels, parse_label_sidecar, parse_pcap, read_store, records_from_hexdump, store_to_string};
use crate::ingest::{Label, PacketRecord};
use crate::nn::seeded_rng;
use crate::{Error, Result};
use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};
use std::collections::HashMap;
use std::path::{Path, PathBuf};

pub const MANIFEST_FORMAT: &str = "zdl-dataset";
pub const MANIFEST_VERSION: u32 = 1;

/// A half-open packet index range `[start, end)` within one capture.
pub type IndexRange = [usize; 2];

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PartSpec {
    pub capture: PathBuf,
    /// Empty means the whole capture.
    #[serde(default)]
    pub ranges: Vec<IndexRange>,
    /// Label sidecar; without one the capture must carry labels itself.
    #[serde(default)]
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioSpec {
    pub name: String,
    pub train_parts: Vec<PartSpec>,
    pub test_parts: Vec<PartSpec>,
    pub train_count: usize,
    pub test_count: usize,
}

impl ScenarioSpec {
    /// Parses JSON (text starting with `{`) or TOML.
    pub fn parse(text: &str) -> Result<Self> {
        let spec: ScenarioSpec = if text.trim_start().starts_with('{') {
            serde_json::from_str(text)?
        } else {
            toml::from_str(text).map_err(|e| Error::InvalidConfig(format!("scenario spec: {e}")))?
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|_| Error::MissingSource(path.to_path_buf()))?;
        Self::parse(&text)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("scenario spec serializes to TOML")
    }

    pub fn validate(&self) -> Result<()> {
        if self.train_count == 0 || self.test_count == 0 {
            return Err(Error::InvalidConfig("train_count and test_count must be positive".into()));
        }
        for part in self.train_parts.iter().chain(&self.test_parts) {
            validate_ranges(&part.ranges, None).map_err(|e| match e {
                Error::InvalidConfig(m) => Error::InvalidConfig(format!("{}: {m}", part.capture.display())),
                other => other,
            })?;
        }
        Ok(())
    }
}

fn validate_ranges(ranges: &[IndexRange], len: Option<usize>) -> Result<()> {
    let mut sorted = ranges.to_vec();
    sorted.sort();
    for r in &sorted {
        if r[0] >= r[1] {
            return Err(Error::InvalidConfig(format!("empty or reversed range [{}, {})", r[0], r[1])));
        }
        if let Some(n) = len {
            if r[1] > n {
                return Err(Error::InvalidConfig(format!("range [{}, {}) exceeds capture of {n} packets", r[0], r[1])));
            }
        }
    }
    for w in sorted.windows(2) {
        if w[1][0] < w[0][1] {
            return Err(Error::InvalidConfig(format!(
                "ranges [{}, {}) and [{}, {}) overlap",
                w[0][0], w[0][1], w[1][0], w[1][1]
            )));
        }
    }
    Ok(())
}

/// Reads a pcap, a JSON Lines packet store or a hex dump, telling them apart
/// by content.
pub fn read_capture(path: &Path) -> Result<Vec<PacketRecord>> {
    let bytes = std::fs::read(path).map_err(|_| Error::MissingSource(path.to_path_buf()))?;
    if parse_header(&bytes).is_ok() {
        return parse_pcap(&bytes);
    }
    let text = String::from_utf8(bytes)
        .map_err(|_| Error::UnsupportedFormat(format!("{} is neither pcap nor text", path.display())))?;
    if text.trim_start().starts_with('{') {
        read_store(text.as_bytes())
    } else {
        records_from_hexdump(&text)
    }
}

/// Reads a capture and applies its label sidecar, if any.
pub fn load_labeled(capture: &Path, labels: Option<&Path>) -> Result<Vec<PacketRecord>> {
    let mut packets = read_capture(capture)?;
    if let Some(l) = labels {
        let text = std::fs::read_to_string(l).map_err(|_| Error::MissingSource(l.to_path_buf()))?;
        apply_labels(&mut packets, &parse_label_sidecar(&text)?);
    }
    Ok(packets)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub capture: PathBuf,
    pub labels: Option<PathBuf>,
    pub range: IndexRange,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub format: String,
    pub version: u32,
    pub name: String,
    /// Runs of consecutive source packets, in dataset order.
    pub entries: Vec<ManifestEntry>,
    /// The dataset's own packet indices, as runs of consecutive values.
    pub index_ranges: Vec<IndexRange>,
    pub count: usize,
    pub attack_count: usize,
    pub target_count: Option<usize>,
    /// Digest of every capture and label file used, keyed by path.
    pub source_sha256: Vec<(PathBuf, String)>,
    /// Digest of the dataset in packet store form.
    pub store_sha256: String,
}

impl DatasetManifest {
    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("manifest serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let m: DatasetManifest = serde_json::from_str(text)?;
        if m.format != MANIFEST_FORMAT || m.version != MANIFEST_VERSION {
            return Err(Error::UnsupportedFormat(format!("dataset manifest {} v{}", m.format, m.version)));
        }
        Ok(m)
    }
}

/// Where one dataset packet came from.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Origin {
    pub source: usize,
    pub index: usize,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Source {
    pub capture: PathBuf,
    pub labels: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct LabeledDataset {
    pub name: String,
    pub packets: Vec<PacketRecord>,
    pub origins: Vec<Origin>,
    pub sources: Vec<Source>,
    pub target_count: Option<usize>,
}

fn compress(values: impl IntoIterator<Item = usize>) -> Vec<IndexRange> {
    let mut out: Vec<IndexRange> = Vec::new();
    for v in values {
        match out.last_mut() {
            Some(r) if r[1] == v => r[1] += 1,
            _ => out.push([v, v + 1]),
        }
    }
    out
}

impl LabeledDataset {
    pub fn len(&self) -> usize {
        self.packets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.packets.is_empty()
    }

    pub fn attack_count(&self) -> usize {
        self.packets.iter().filter(|p| p.label == Label::Attack).count()
    }

    pub fn store(&self) -> String {
        store_to_string(&self.packets)
    }

    /// Builds the manifest. Paths are digested relative to `base`.
    pub fn manifest(&self, base: &Path) -> Result<DatasetManifest> {
        let mut entries: Vec<ManifestEntry> = Vec::new();
        let mut last: Option<&Origin> = None;
        for o in &self.origins {
            let extends = matches!(last, Some(l) if l.source == o.source && l.index + 1 == o.index);
            if extends {
                entries.last_mut().unwrap().range[1] += 1;
            } else {
                let s = &self.sources[o.source];
                entries.push(ManifestEntry {
                    capture: s.capture.clone(),
                    labels: s.labels.clone(),
                    range: [o.index, o.index + 1],
                });
            }
            last = Some(o);
        }
        let mut source_sha256: Vec<(PathBuf, String)> = Vec::new();
        for s in &self.sources {
            for p in std::iter::once(&s.capture).chain(&s.labels) {
                if !source_sha256.iter().any(|(q, _)| q == p) {
                    let digest = file_sha256(&base.join(p)).map_err(|_| Error::MissingSource(base.join(p)))?;
                    source_sha256.push((p.clone(), digest));
                }
            }
        }
        Ok(DatasetManifest {
            format: MANIFEST_FORMAT.into(),
            version: MANIFEST_VERSION,
            name: self.name.clone(),
            entries,
            index_ranges: compress(self.packets.iter().map(|p| p.index)),
            count: self.len(),
            attack_count: self.attack_count(),
            target_count: self.target_count,
            source_sha256,
            store_sha256: sha256_hex(self.store().as_bytes()),
        })
    }
}

type SourceKey = (PathBuf, Option<PathBuf>);

struct Loader<'a> {
    base: &'a Path,
    cache: HashMap<SourceKey, Vec<PacketRecord>>,
    sources: Vec<Source>,
}

impl<'a> Loader<'a> {
    fn new(base: &'a Path) -> Self {
        Self { base, cache: HashMap::new(), sources: Vec::new() }
    }

    fn source(&mut self, capture: &Path, labels: Option<&Path>) -> Result<(usize, &[PacketRecord])> {
        let key = (capture.to_path_buf(), labels.map(Path::to_path_buf));
        if !self.cache.contains_key(&key) {
            let packets = load_labeled(&self.base.join(capture), labels.map(|l| self.base.join(l)).as_deref())?;
            self.cache.insert(key.clone(), packets);
        }
        let src = Source { capture: key.0.clone(), labels: key.1.clone() };
        let id = match self.sources.iter().position(|s| *s == src) {
            Some(i) => i,
            None => {
                self.sources.push(src);
                self.sources.len() - 1
            }
        };
        Ok((id, &self.cache[&key]))
    }

    /// Appends `packets[range]` of a source, re-indexed from the current length.
    fn take(
        &mut self,
        capture: &Path,
        labels: Option<&Path>,
        range: IndexRange,
        out: &mut LabeledDataset,
    ) -> Result<()> {
        let (id, packets) = self.source(capture, labels)?;
        if range[1] > packets.len() {
            return Err(Error::InvalidConfig(format!(
                "range [{}, {}) exceeds {} ({} packets)",
                range[0],
                range[1],
                capture.display(),
                packets.len()
            )));
        }
        for p in &packets[range[0]..range[1]] {
            if p.label == Label::Unlabeled {
                return Err(Error::UnlabeledPacket { index: p.index });
            }
            let mut q = p.clone();
            q.index = out.packets.len();
            out.packets.push(q);
            out.origins.push(Origin { source: id, index: p.index });
        }
        Ok(())
    }
}

fn assemble_side(name: String, parts: &[PartSpec], target: usize, loader: &mut Loader) -> Result<LabeledDataset> {
    let mut ds = LabeledDataset {
        name,
        packets: Vec::new(),
        origins: Vec::new(),
        sources: Vec::new(),
        target_count: Some(target),
    };
    for part in parts {
        let ranges = if part.ranges.is_empty() {
            let n = loader.source(&part.capture, part.labels.as_deref())?.1.len();
            vec![[0, n]]
        } else {
            let n = loader.source(&part.capture, part.labels.as_deref())?.1.len();
            validate_ranges(&part.ranges, Some(n))?;
            part.ranges.clone()
        };
        for r in ranges {
            loader.take(&part.capture, part.labels.as_deref(), r, &mut ds)?;
        }
    }
    if ds.len() != target {
        log::warn!("{}: assembled {} packets, target was {target}", ds.name, ds.len());
    }
    ds.sources = loader.sources.clone();
    Ok(ds)
}

/// Materializes both sides of a scenario. Relative paths resolve against `base`.
pub fn assemble(spec: &ScenarioSpec, base: &Path) -> Result<(LabeledDataset, LabeledDataset)> {
    spec.validate()?;
    let mut loader = Loader::new(base);
    let train = assemble_side(format!("{}/train", spec.name), &spec.train_parts, spec.train_count, &mut loader)?;
    let test = assemble_side(format!("{}/test", spec.name), &spec.test_parts, spec.test_count, &mut loader)?;
    Ok((train, test))
}

/// Rebuilds a dataset from its manifest, checking source and result digests.
pub fn rebuild(manifest: &DatasetManifest, base: &Path) -> Result<LabeledDataset> {
    for (path, digest) in &manifest.source_sha256 {
        let actual = file_sha256(&base.join(path)).map_err(|_| Error::MissingSource(base.join(path)))?;
        if actual != *digest {
            return Err(Error::InvalidInput(format!("{} changed since the manifest was written", path.display())));
        }
    }
    let mut loader = Loader::new(base);
    let mut ds = LabeledDataset {
        name: manifest.name.clone(),
        packets: Vec::new(),
        origins: Vec::new(),
        sources: Vec::new(),
        target_count: manifest.target_count,
    };
    for e in &manifest.entries {
        loader.take(&e.capture, e.labels.as_deref(), e.range, &mut ds)?;
    }
    let indices: Vec<usize> = manifest.index_ranges.iter().flat_map(|r| r[0]..r[1]).collect();
    if indices.len() != ds.len() {
        return Err(Error::InvalidInput("manifest index ranges do not match its entries".into()));
    }
    for (p, i) in ds.packets.iter_mut().zip(indices) {
        p.index = i;
    }
    ds.sources = loader.sources;
    if sha256_hex(ds.store().as_bytes()) != manifest.store_sha256 {
        return Err(Error::InvalidInput("rebuilt dataset does not match the manifest digest".into()));
    }
    Ok(ds)
}

/// Seeded uniform shuffle; the first `floor(0.8 n)` packets train, the rest
/// test. Each side is then put back in dataset order and keeps the parent's
/// packet indices.
pub fn split_80_20(ds: &LabeledDataset, seed: u64) -> Result<(LabeledDataset, LabeledDataset)> {
    if ds.len() < 5 {
        return Err(Error::InvalidConfig(format!("an 80/20 split needs at least 5 packets, got {}", ds.len())));
    }
    let mut order: Vec<usize> = (0..ds.len()).collect();
    order.shuffle(&mut seeded_rng(seed));
    let cut = ds.len() * 4 / 5;
    let side = |suffix: &str, picked: &[usize]| {
        let mut picked = picked.to_vec();
        picked.sort_unstable();
        LabeledDataset {
            name: format!("{}/{suffix}", ds.name),
            packets: picked.iter().map(|&i| ds.packets[i].clone()).collect(),
            origins: picked.iter().map(|&i| ds.origins[i].clone()).collect(),
            sources: ds.sources.clone(),
            target_count: None,
        }
    };
    Ok((side("train80", &order[..cut]), side("test20", &order[cut..])))
}
