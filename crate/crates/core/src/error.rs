use thiserror::Error;

use crate::backend::BackendError;
use crate::journal::JournalError;
use crate::kernel::{CommandError, KernelError};
use crate::memory::MemoryError;
use crate::models::ModelError;
use crate::sandbox::{EnvError, ScenarioError};
use crate::system1::System1Error;
use crate::system2::ParseError;
use crate::system3::System3Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("kernel: {0}")]
    Kernel(#[from] KernelError),
    #[error("command: {0}")]
    Command(#[from] CommandError),
    #[error("scenario: {0}")]
    Scenario(#[from] ScenarioError),
    #[error("sandbox-env: {0}")]
    Env(#[from] EnvError),
    #[error("system1: {0}")]
    System1(#[from] System1Error),
    #[error("system2: {0}")]
    Parse(#[from] ParseError),
    #[error("system3: {0}")]
    System3(#[from] System3Error),
    #[error("memory: {0}")]
    Memory(#[from] MemoryError),
    #[error("models: {0}")]
    Model(#[from] ModelError),
    #[error("journal: {0}")]
    Journal(#[from] JournalError),
    #[error("backend: {0}")]
    Backend(#[from] BackendError),
    /// A runtime invariant broke; `module` names the owner.
    #[error("invariant violated in {module}: {detail}")]
    Invariant { module: &'static str, detail: String },
    #[error("i/o on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

impl Error {
    pub fn invariant(module: &'static str, detail: impl Into<String>) -> Self {
        Error::Invariant {
            module,
            detail: detail.into(),
        }
    }

    pub fn is_invariant(&self) -> bool {
        matches!(self, Error::Invariant { .. })
    }
}
