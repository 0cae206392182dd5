use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Bad configuration or command line; exit code 2.
    #[error("invalid `{field}`: {message}")]
    Usage { field: String, message: String },

    #[error(transparent)]
    Core(#[from] weakcoupling::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: std::io::Error,
    },

    #[error("manifest: {0}")]
    Manifest(String),
}

impl CliError {
    pub fn io(context: impl Into<String>, source: std::io::Error) -> Self {
        CliError::Io { context: context.into(), source }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage { .. } => 2,
            CliError::Core(weakcoupling::Error::Config { .. }) => 2,
            _ => 1,
        }
    }
}
