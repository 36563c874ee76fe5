use std::path::Path;

/// Exit status for usage and validation problems.
pub const EXIT_USAGE: i32 = 2;
/// Exit status for failures while running.
pub const EXIT_RUNTIME: i32 = 1;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("{0}")]
    Validation(String),

    #[error("row {row}: {message}")]
    Data { row: usize, message: String },

    #[error("{path}: {source}")]
    InFile {
        path: String,
        #[source]
        source: Box<CliError>,
    },

    #[error("{0}")]
    Io(#[from] std::io::Error),

    #[error("{0}")]
    Csv(#[from] csv::Error),

    #[error("{0}")]
    Runtime(String),
}

impl CliError {
    pub fn io(path: &Path, e: std::io::Error) -> Self {
        CliError::Runtime(format!("{}: {e}", path.display()))
    }

    pub fn in_file(self, path: &Path) -> Self {
        CliError::InFile {
            path: path.display().to_string(),
            source: Box::new(self),
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) | CliError::Validation(_) | CliError::Data { .. } => EXIT_USAGE,
            CliError::InFile { source, .. } => source.exit_code(),
            CliError::Io(_) | CliError::Csv(_) | CliError::Runtime(_) => EXIT_RUNTIME,
        }
    }
}

/// Library errors about inputs or parameters are validation failures;
/// numerical breakdowns are runtime failures.
impl From<vlearn_core::error::Error> for CliError {
    fn from(e: vlearn_core::error::Error) -> Self {
        use vlearn_core::error::Error as E;
        match e {
            E::Singular(_) | E::ObjectiveNotFinite | E::NonFinite(_) => CliError::Runtime(e.to_string()),
            _ => CliError::Validation(e.to_string()),
        }
    }
}
