// SPDX-License-Identifier: Apache-2.0

use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the assessment pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("illegal threat model: black-box access without auxiliary data is not assessed")]
    IllegalThreatModel,

    #[error("capability error: `{op}` requires white-box access")]
    Capability { op: &'static str },

    #[error("attack {attack} is not applicable under threat model {threat_model}")]
    InapplicableAttack { attack: String, threat_model: String },

    #[error("dataset too small: need at least {needed} samples, got {got}")]
    DatasetTooSmall { needed: usize, got: usize },

    #[error("invalid fraction {0}: must be in (0, 1]")]
    InvalidFraction(f64),

    #[error("empty dataset")]
    EmptyDataset,

    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),

    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),

    #[error("class {0} has no samples")]
    ClassMissing(usize),

    #[error("zero variance input")]
    ZeroVariance,

    #[error("infeasible privacy budget: {0}")]
    InfeasibleBudget(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("unknown architecture `{0}`")]
    UnknownArchitecture(String),

    #[error("unknown dataset `{0}`")]
    UnknownDataset(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("serialization: {0}")]
    Serde(String),

    #[error("image encoding: {0}")]
    Image(String),

    #[error("{stage}: {source}")]
    Stage {
        stage: String,
        #[source]
        source: Box<Error>,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    /// Wraps this error with the name of the pipeline stage that produced it.
    pub fn in_stage(self, stage: impl Into<String>) -> Self {
        Error::Stage {
            stage: stage.into(),
            source: Box::new(self),
        }
    }

    /// The innermost error, skipping stage context.
    pub fn root(&self) -> &Error {
        match self {
            Error::Stage { source, .. } => source.root(),
            other => other,
        }
    }

    /// Stable machine-readable identifier of the error kind.
    pub fn kind(&self) -> &'static str {
        match self.root() {
            Error::IllegalThreatModel => "IllegalThreatModel",
            Error::Capability { .. } => "CapabilityError",
            Error::InapplicableAttack { .. } => "InapplicableAttack",
            Error::DatasetTooSmall { .. } => "DatasetTooSmall",
            Error::InvalidFraction(_) => "InvalidFraction",
            Error::EmptyDataset => "EmptyDataset",
            Error::ShapeMismatch(_) => "ShapeMismatch",
            Error::DegenerateLabels(_) => "DegenerateLabels",
            Error::ClassMissing(_) => "ClassMissing",
            Error::ZeroVariance => "ZeroVariance",
            Error::InfeasibleBudget(_) => "InfeasibleBudget",
            Error::Config(_) => "ConfigError",
            Error::UnknownArchitecture(_) => "UnknownArchitecture",
            Error::UnknownDataset(_) => "UnknownDataset",
            Error::Io { .. } => "IoError",
            Error::Serde(_) => "SerializationError",
            Error::Image(_) => "ImageError",
            Error::Stage { .. } => unreachable!("root() strips stage context"),
        }
    }

    /// Process exit code: 2 config, 3 capability, 4 runtime.
    pub fn exit_code(&self) -> i32 {
        match self.root() {
            Error::IllegalThreatModel
            | Error::InapplicableAttack { .. }
            | Error::Config(_)
            | Error::InvalidFraction(_)
            | Error::UnknownArchitecture(_)
            | Error::UnknownDataset(_) => 2,
            Error::Capability { .. } => 3,
            _ => 4,
        }
    }
}

impl From<serde_json::Error> for Error {
    fn from(e: serde_json::Error) -> Self {
        Error::Serde(e.to_string())
    }
}

impl From<serde_yaml::Error> for Error {
    fn from(e: serde_yaml::Error) -> Self {
        Error::Config(e.to_string())
    }
}
