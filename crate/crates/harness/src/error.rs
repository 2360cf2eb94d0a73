use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Core(#[from] ropegrad_core::Error),

    /// Bad flags, config files or parameters; the CLI exits with status 2.
    #[error("configuration error: {0}")]
    Config(String),

    #[error("i/o error: {0}")]
    Io(#[from] std::io::Error),

    #[error("csv error: {0}")]
    Csv(#[from] csv::Error),

    #[error("json error: {0}")]
    Json(#[from] serde_json::Error),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Config(_) => 2,
            HarnessError::Core(e) if is_config_like(e) => 2,
            _ => 1,
        }
    }
}

fn is_config_like(e: &ropegrad_core::Error) -> bool {
    use ropegrad_core::Error as E;
    matches!(
        e,
        E::Parameter(_) | E::Config(_) | E::Invariant(_) | E::InstanceBound(_) | E::Parse(_)
    )
}
