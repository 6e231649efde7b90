use crate::autodiff::TensorError;
use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Tensor(#[from] TensorError),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    /// Malformed binary or text input; `offset` is the byte (or line) where
    /// parsing stopped.
    #[error("{format}: {detail} (at offset {offset})")]
    Format { format: &'static str, offset: u64, detail: String },
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("insufficient data: {0}")]
    InsufficientData(String),
    #[error("missing modality: {0}")]
    MissingModality(String),
    #[error("config error: {0}")]
    Config(String),
    #[error("unknown ablation variant `{0}`")]
    UnknownVariant(String),
    /// The upper bound was asked to train on data with missing modality 2.
    #[error("upper bound needs complete data: {0}")]
    IncompleteData(String),
}

impl Error {
    /// Short kebab-case reason used for machine-readable CLI failures.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Tensor(_) => "shape-error",
            Error::Io(_) => "io-error",
            Error::Format { .. } => "format-error",
            Error::InvalidArgument(_) => "invalid-argument",
            Error::InsufficientData(_) => "insufficient-data",
            Error::MissingModality(_) => "missing-modality",
            Error::Config(_) => "config-error",
            Error::UnknownVariant(_) => "unknown-ablation-variant",
            Error::IncompleteData(_) => "incomplete-data",
        }
    }

    pub(crate) fn format(format: &'static str, offset: u64, detail: impl Into<String>) -> Self {
        Error::Format { format, offset, detail: detail.into() }
    }
}
