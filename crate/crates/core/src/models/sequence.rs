//! Per-packet input windows for the sequence model.
//!
//! A window holds positions into the packet/feature arrays, oldest first,
//! with `None` for the leading zero-vector padding. The last entry is always
//! the current packet.

use crate::flowstats::FlowKey;
use crate::ingest::PacketRecord;
use crate::{Error, Result};
use serde::{Deserialize, Serialize};
use std::collections::{HashMap, VecDeque};
use std::fmt;
use std::str::FromStr;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InputMode {
    /// The current packet alone; the time step is forced to 1.
    Single,
    /// The last T packets of the stream.
    Sequential,
    /// The last T packets exchanged between the current packet's two hosts.
    FlowGrouped,
}

impl InputMode {
    pub const ALL: [InputMode; 3] = [InputMode::Single, InputMode::Sequential, InputMode::FlowGrouped];

    pub fn name(self) -> &'static str {
        match self {
            InputMode::Single => "single",
            InputMode::Sequential => "sequential",
            InputMode::FlowGrouped => "flow-grouped",
        }
    }
}

impl fmt::Display for InputMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for InputMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Self::ALL
            .into_iter()
            .find(|m| m.name() == s || m.name().replace('-', "_") == s)
            .ok_or_else(|| Error::InvalidConfig(format!("unknown input mode {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SequenceWindow {
    pub current: usize,
    pub members: Vec<Option<usize>>,
    pub pad_count: usize,
}

impl SequenceWindow {
    fn from_history(current: usize, history: impl ExactSizeIterator<Item = usize>, t: usize) -> Self {
        let pad_count = t - history.len();
        let members = std::iter::repeat_n(None, pad_count).chain(history.map(Some)).collect();
        Self { current, members, pad_count }
    }

    /// Feature vectors for the window; padding becomes zero vectors.
    pub fn materialize(&self, rows: &[Vec<f64>], dim: usize) -> Vec<Vec<f64>> {
        self.members.iter().map(|m| m.map_or_else(|| vec![0.0; dim], |i| rows[i].clone())).collect()
    }
}

/// One window per packet, in packet order. `packets` must be in capture
/// order; windows only look backwards.
pub fn make_sequence_inputs(packets: &[PacketRecord], t: usize, mode: InputMode) -> Result<Vec<SequenceWindow>> {
    if t < 1 {
        return Err(Error::InvalidConfig("time step must be at least 1".into()));
    }
    let out = match mode {
        InputMode::Single => {
            (0..packets.len()).map(|i| SequenceWindow::from_history(i, std::iter::once(i), 1)).collect()
        }
        InputMode::Sequential => {
            (0..packets.len()).map(|i| SequenceWindow::from_history(i, (i + 1).saturating_sub(t)..i + 1, t)).collect()
        }
        InputMode::FlowGrouped => {
            let mut history: HashMap<FlowKey, VecDeque<usize>> = HashMap::new();
            packets
                .iter()
                .enumerate()
                .map(|(i, p)| {
                    let h = history.entry(FlowKey::of(p)).or_default();
                    h.push_back(i);
                    if h.len() > t {
                        h.pop_front();
                    }
                    SequenceWindow::from_history(i, h.iter().copied(), t)
                })
                .collect()
        }
    };
    Ok(out)
}
