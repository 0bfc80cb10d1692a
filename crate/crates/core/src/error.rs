use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("unsupported capture format: {0}")]
    UnsupportedFormat(String),
    #[error("truncated capture after packet index {last_good_index:?}")]
    TruncatedCapture { last_good_index: Option<usize> },
    #[error("parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("model shape error: {0}")]
    ModelShape(String),
    #[error("invalid configuration: {0}")]
    InvalidConfig(String),
    #[error("invalid input: {0}")]
    InvalidInput(String),
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("training diverged (non-finite loss) at epoch {epoch}")]
    DivergedTraining { epoch: usize },
    #[error("training corpus contains a single class")]
    SingleClassCorpus,
    #[error("clustering input is degenerate (fewer distinct points than clusters)")]
    DegenerateClustering,
    #[error("flow has no packets")]
    EmptyFlow,
    #[error("missing source file {0}")]
    MissingSource(PathBuf),
    #[error("packet {index} has no label")]
    UnlabeledPacket { index: usize },
    #[error("missing model: {0}")]
    MissingModel(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}
