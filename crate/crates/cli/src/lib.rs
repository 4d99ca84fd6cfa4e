//! Library side of the `qvc` command: configuration, model files and the
//! subcommand implementations, kept here so they can be tested in-process.

pub mod commands;
pub mod config;
pub mod model_file;

pub use config::RunConfig;
pub use model_file::ModelFile;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("configuration: {0}")]
    Config(String),
    #[error("data: {0}")]
    Data(String),
    #[error("model file: {0}")]
    Model(String),
    #[error("{0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] qvc_core::Error),
    /// The command ran but its check did not pass.
    #[error("{0}")]
    Failure(String),
}

impl CliError {
    /// 2 for bad input (config, data, model file), 1 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Data(_) | CliError::Model(_) => 2,
            _ => 1,
        }
    }
}
