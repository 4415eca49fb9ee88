use firmscan_core::analytics::AnalyticsError;
use firmscan_core::classify::ClassifyError;
use firmscan_core::firmware::ExtractError;
use firmscan_core::inventory::SbomError;
use firmscan_core::vulndb::{FeedParseError, IndexError};

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Parse(String),
    #[error("{0}")]
    Io(String),
    #[error("{0}")]
    Extraction(String),
    #[error("{0}")]
    Config(String),
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Parse(_) => 2,
            CliError::Io(_) => 3,
            CliError::Extraction(_) => 4,
            CliError::Config(_) => 5,
        }
    }

    pub fn prefixed(self, context: &str) -> Self {
        match self {
            CliError::Parse(m) => CliError::Parse(format!("{context}: {m}")),
            CliError::Io(m) => CliError::Io(format!("{context}: {m}")),
            CliError::Extraction(m) => CliError::Extraction(format!("{context}: {m}")),
            CliError::Config(m) => CliError::Config(format!("{context}: {m}")),
        }
    }

    pub fn io(context: impl std::fmt::Display, e: std::io::Error) -> Self {
        CliError::Io(format!("{context}: {e}"))
    }
}

impl From<ExtractError> for CliError {
    fn from(e: ExtractError) -> Self {
        match e {
            ExtractError::Io(e) => CliError::Io(e.to_string()),
            ExtractError::NoFilesystemFound => CliError::Extraction("no filesystem found".into()),
            other => CliError::Extraction(other.to_string()),
        }
    }
}

impl From<FeedParseError> for CliError {
    fn from(e: FeedParseError) -> Self {
        CliError::Parse(e.to_string())
    }
}

impl From<IndexError> for CliError {
    fn from(e: IndexError) -> Self {
        match e {
            IndexError::Io(e) => CliError::Io(format!("index: {e}")),
            other => CliError::Parse(format!("index: {other}")),
        }
    }
}

impl From<SbomError> for CliError {
    fn from(e: SbomError) -> Self {
        CliError::Parse(format!("SBOM: {e}"))
    }
}

impl From<ClassifyError> for CliError {
    fn from(e: ClassifyError) -> Self {
        CliError::Parse(format!("classification: {e}"))
    }
}

impl From<AnalyticsError> for CliError {
    fn from(e: AnalyticsError) -> Self {
        match e {
            AnalyticsError::Io(e) => CliError::Io(e.to_string()),
            AnalyticsError::Csv(e) if e.is_io_error() => CliError::Io(e.to_string()),
            other => CliError::Parse(other.to_string()),
        }
    }
}
