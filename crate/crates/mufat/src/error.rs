use thiserror::Error;

use crate::volume::Violation;

/// Crate-wide error type.
#[derive(Debug, Error)]
pub enum Error {
    /// Bad configuration: invalid timing parameters, misaligned capacity,
    /// unparseable config files, degenerate workloads.
    #[error("configuration error: {0}")]
    Config(String),

    /// No free cluster is left and no claim can be split.
    #[error("volume full")]
    VolumeFull,

    /// The file directory table has no free entry slot.
    #[error("file directory table full")]
    FdtFull,

    /// Attempt to link a cluster that is not free.
    #[error("cluster {0} is already allocated")]
    DoubleAllocate(u32),

    /// A FAT chain is malformed (wrong tail, unallocated cluster, cycle).
    #[error("corrupt chain at cluster {0}: {1}")]
    CorruptChain(u32, String),

    /// The chosen strategy cannot run on the given workload.
    #[error("strategy not applicable: {0}")]
    InapplicableStrategy(String),

    /// Post-run consistency verification failed.
    #[error("volume consistency violated: {0:?}")]
    Consistency(Vec<Violation>),

    /// No strategy in an oracle grid was applicable to a sample.
    #[error("no applicable strategy in grid")]
    NoApplicableStrategy,

    /// Model file or model structure problems.
    #[error("model error: {0}")]
    Model(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code for the CLI: 2 config, 3 inapplicable, 4 consistency.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::InapplicableStrategy(_) | Error::NoApplicableStrategy => 3,
            Error::Consistency(_) => 4,
            _ => 2,
        }
    }
}
