use std::path::PathBuf;

use eids::baselines::BaselineError;
use eids::chisel::ChiselError;
use eids::data::DataError;
use eids::idsmodel::IdsError;
use eids::metrics::MetricsError;

/// Process exit codes.
pub const EXIT_IO: i32 = 2;
pub const EXIT_CONTRACT: i32 = 3;
pub const EXIT_CONFIG: i32 = 4;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{0}")]
    Contract(String),
    #[error("config: {0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Io { .. } => EXIT_IO,
            CliError::Contract(_) => EXIT_CONTRACT,
            CliError::Config(_) => EXIT_CONFIG,
        }
    }

    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T, E = CliError> = std::result::Result<T, E>;

impl From<DataError> for CliError {
    fn from(e: DataError) -> Self {
        match e {
            DataError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Contract(other.to_string()),
        }
    }
}

impl From<IdsError> for CliError {
    fn from(e: IdsError) -> Self {
        match e {
            IdsError::Io { path, source } => CliError::Io { path, source },
            IdsError::Data(d) => d.into(),
            IdsError::InvalidSpec(m) | IdsError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Contract(other.to_string()),
        }
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        match e {
            MetricsError::Io { path, source } => CliError::Io { path, source },
            other => CliError::Contract(other.to_string()),
        }
    }
}

impl From<ChiselError> for CliError {
    fn from(e: ChiselError) -> Self {
        CliError::Contract(e.to_string())
    }
}

impl From<BaselineError> for CliError {
    fn from(e: BaselineError) -> Self {
        match e {
            BaselineError::InvalidConfig(m) => CliError::Config(m),
            other => CliError::Contract(other.to_string()),
        }
    }
}
