pub mod aqe;
pub mod bench;
pub mod catalog;
pub mod engine;
mod error;
pub mod llm;
pub mod optimizer;
pub mod sql;
pub mod value;

pub use error::{Error, Result};
