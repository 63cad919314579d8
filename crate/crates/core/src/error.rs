use thiserror::Error;

use crate::catalog::CatalogError;
use crate::llm::LlmError;
use crate::sql::ParseError;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Parse(#[from] ParseError),
    #[error(transparent)]
    Catalog(#[from] CatalogError),
    #[error(transparent)]
    Llm(#[from] LlmError),
    #[error("execution failed at {node}: {message}")]
    Execution { node: String, message: String },
    #[error("invalid configuration: {0}")]
    Config(String),
    #[error("{0}")]
    Corpus(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    pub fn execution(node: impl Into<String>, message: impl Into<String>) -> Self {
        Error::Execution {
            node: node.into(),
            message: message.into(),
        }
    }
}
