use std::path::PathBuf;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("check failed: {0}")]
    CheckFailed(String),

    #[error(transparent)]
    Core(#[from] clockwalk::Error),
}

impl CliError {
    pub fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.into(),
            source,
        }
    }

    /// 0 pass, 1 check failure, 2 usage or configuration error, 3 I/O error.
    pub fn exit_code(&self) -> i32 {
        use clockwalk::Error as E;
        match self {
            CliError::Config(_) => 2,
            CliError::Io { .. } => 3,
            CliError::CheckFailed(_) => 1,
            CliError::Core(e) => match e {
                E::InvalidConfig(_) | E::InvalidSite { .. } | E::InvalidArgument(_) => 2,
                E::Io(_) | E::Parse { .. } => 3,
                _ => 1,
            },
        }
    }
}
