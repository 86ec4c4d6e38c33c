use std::fmt;
use std::path::PathBuf;

use thiserror::Error;

/// Pipeline stages, in execution order.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Stage {
    Synth,
    Decompose,
    Extract,
    Train,
    FuseSearch,
    Eval,
    Report,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Synth => "synth",
            Stage::Decompose => "decompose",
            Stage::Extract => "extract",
            Stage::Train => "train",
            Stage::FuseSearch => "fuse-search",
            Stage::Eval => "eval",
            Stage::Report => "report",
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error("{stage} stage: {source}")]
    Core {
        stage: Stage,
        #[source]
        source: morphdet::Error,
    },

    #[error("{stage} stage: missing {what} at {path}; run the `{producer}` stage first")]
    MissingArtifact {
        stage: Stage,
        producer: Stage,
        what: String,
        path: PathBuf,
    },

    #[error("configuration error: {0}")]
    Config(String),
}

impl PipelineError {
    /// Process exit code: 2 validation, 3 I/O, 4 numeric failure.
    pub fn exit_code(&self) -> i32 {
        use morphdet::Error as E;
        match self {
            PipelineError::Config(_) => 2,
            PipelineError::MissingArtifact { .. } => 3,
            PipelineError::Core { source, .. } => match source {
                E::Validation(_) | E::Parse { .. } | E::DimensionMismatch(_) => 2,
                E::Io { .. }
                | E::MissingFile { .. }
                | E::BadMagic(_)
                | E::Truncated { .. }
                | E::UnsupportedFormat(_)
                | E::Decode(_) => 3,
                E::NonFinite(_) | E::Degenerate(_) | E::Numeric(_) => 4,
            },
        }
    }

    pub fn stage(&self) -> Option<Stage> {
        match self {
            PipelineError::Core { stage, .. } | PipelineError::MissingArtifact { stage, .. } => {
                Some(*stage)
            }
            PipelineError::Config(_) => None,
        }
    }
}

pub type Result<T, E = PipelineError> = std::result::Result<T, E>;

/// Tags core errors with the stage they surfaced in.
pub trait InStage<T> {
    fn in_stage(self, stage: Stage) -> Result<T>;
}

impl<T> InStage<T> for morphdet::Result<T> {
    fn in_stage(self, stage: Stage) -> Result<T> {
        self.map_err(|source| PipelineError::Core { stage, source })
    }
}
