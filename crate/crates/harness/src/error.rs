use thiserror::Error;

pub type Result<T> = std::result::Result<T, HarnessError>;

#[derive(Debug, Error)]
pub enum HarnessError {
    /// Schema or validation problem; the message names the offending key.
    #[error("config: {0}")]
    Config(String),

    #[error("{context}: {source}")]
    Core {
        context: String,
        #[source]
        source: posmech::Error,
    },

    #[error("io: {0}")]
    Io(#[from] std::io::Error),

    #[error("report: {0}")]
    Report(String),
}

pub(crate) trait Context<T> {
    fn ctx(self, what: &str) -> Result<T>;
}

impl<T> Context<T> for posmech::Result<T> {
    fn ctx(self, what: &str) -> Result<T> {
        self.map_err(|source| HarnessError::Core { context: what.to_string(), source })
    }
}
