use thiserror::Error;

/// Errors produced by simulation, synthesis and I/O routines.
///
/// The variants are grouped so a front end can map them onto coarse exit
/// categories: configuration problems, physics-rule violations (hologram
/// overlay constraints) and capacity limits (window allocation).
#[derive(Debug, Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("parameter error: {0}")]
    Parameter(String),

    #[error("hologram rule violation: {0}")]
    RuleViolation(String),

    #[error("capacity exceeded: {0}")]
    Capacity(String),

    #[error("no beam found: {0}")]
    NoBeam(String),

    #[error("format error: {0}")]
    Format(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    /// Process exit code used by the command-line front end.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) | Error::Shape(_) | Error::Parameter(_) | Error::Format(_) => 2,
            Error::RuleViolation(_) | Error::NoBeam(_) => 3,
            Error::Capacity(_) => 4,
            Error::Io(_) => 1,
        }
    }
}
