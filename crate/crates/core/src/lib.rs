//! Experiment toolkit for zero-day DDoS detection on raw packet captures.
//!
//! The pipeline runs in stages, each owned by one module:
//!
//! * [`ingest`] turns pcap / hex-dump input into [`ingest::PacketRecord`]s with a
//!   canonical info string and a fixed-width bit encoding.
//! * [`features_manual`], [`features_embed`], [`features_ae`] and [`flowstats`]
//!   are the four feature extractors.
//! * [`nn`] is a small deterministic neural-network kernel; [`models`] builds
//!   the MLP, LSTM and K-means classifiers on top of it.
//! * [`scenarios`] assembles train/test datasets and generates synthetic captures.
//! * [`eval`] computes per-packet metrics, attack lag and per-source breakdowns.

pub mod digest;
pub mod error;
pub mod eval;
pub mod features;
pub mod features_ae;
pub mod features_embed;
pub mod features_manual;
pub mod flowstats;
pub mod ingest;
pub mod models;
pub mod nn;
pub mod scenarios;

pub use error::{Error, Result};
