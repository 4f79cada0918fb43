//! Command-line front end for `ddeid`: data generation, single fits, batch
//! experiments and gradient checks, all driven by a TOML config.

pub mod commands;
pub mod config;

use std::fmt;

pub use config::Config;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FailureKind {
    /// Bad arguments or config.
    Config,
    /// Unreadable or malformed data, or an output that could not be written.
    Data,
    /// Blow-up, failed gradient check.
    Numerical,
}

impl FailureKind {
    pub fn exit_code(self) -> u8 {
        match self {
            FailureKind::Config => 1,
            FailureKind::Data => 2,
            FailureKind::Numerical => 3,
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub kind: FailureKind,
    pub source: anyhow::Error,
}

impl CliError {
    pub fn new(kind: FailureKind, source: impl Into<anyhow::Error>) -> Self {
        Self { kind, source: source.into() }
    }

    pub fn exit_code(&self) -> u8 {
        self.kind.exit_code()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:#}", self.source)
    }
}

/// Sorts a core error into the exit-code buckets.
pub fn classify(err: &ddeid::Error) -> FailureKind {
    use ddeid::Error as E;
    match err {
        E::NonFiniteState { .. } | E::SingularDynamics(_) => FailureKind::Numerical,
        E::Parse(_) | E::Io(_) | E::DegenerateInput(_) | E::NotOnGrid { .. } => FailureKind::Data,
        E::InvalidValue(_) | E::DimensionMismatch { .. } | E::IndexOutOfRange { .. } => FailureKind::Config,
    }
}

impl From<ddeid::Error> for CliError {
    fn from(err: ddeid::Error) -> Self {
        Self::new(classify(&err), err)
    }
}

pub(crate) trait Tag<T> {
    fn tag(self, kind: FailureKind) -> Result<T, CliError>;
}

impl<T, E: Into<anyhow::Error>> Tag<T> for Result<T, E> {
    fn tag(self, kind: FailureKind) -> Result<T, CliError> {
        self.map_err(|e| CliError::new(kind, e))
    }
}
