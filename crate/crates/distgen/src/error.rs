use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error("malformed frame: {0}")]
    Malformed(String),
    #[error("unsupported protocol version {0}")]
    UnsupportedVersion(u8),
    #[error("worker reported: {0}")]
    Remote(String),
    #[error("unexpected {0} message")]
    Unexpected(&'static str),
    #[error("job encoding: {0}")]
    Job(String),
    #[error(transparent)]
    Core(#[from] pcmg_core::Error),
    #[error("at least one worker is required")]
    NoWorkers,
    #[error("timed out after {0:?}")]
    Timeout(std::time::Duration),
    #[error("incomplete result: {0}")]
    Incomplete(String),
    #[error("every worker failed: {}", .0.join("; "))]
    AllWorkersFailed(Vec<String>),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
