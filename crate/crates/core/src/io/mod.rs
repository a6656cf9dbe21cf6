//! Text formats: graph and model documents, record files and settings.

use std::fmt;

/// Located syntax error in a text input.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ParseError {
    pub line: usize,
    pub column: usize,
    pub message: String,
    pub expected: Option<String>,
}

impl fmt::Display for ParseError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "line {}, column {}: {}", self.line, self.column, self.message)?;
        if let Some(e) = &self.expected {
            write!(f, " (expected {e})")?;
        }
        Ok(())
    }
}

impl std::error::Error for ParseError {}

mod config;
mod dsl;
mod records;

pub use config::{load_config, parse_config, Settings, CONFIG_KEYS};
pub use dsl::{parse_graph, parse_model, parse_unchecked, serialize_graph, serialize_model};
pub use records::{check_known_columns, check_observed_columns, load_records, read_records, write_records};
