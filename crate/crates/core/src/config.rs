//! TOML scenario documents.
//!
//! Every key is optional; absent keys take the defaults of the owning
//! config struct. Unknown keys are rejected.

use thiserror::Error;

use crate::spec::{InvalidSpec, ScenarioSpec};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConfigError {
    #[error("parse error at line {line}, column {column}: {message}")]
    Parse { line: usize, column: usize, message: String },
    #[error("unknown key `{path}`: {message}")]
    UnknownKey { path: String, message: String },
    #[error("invalid value for `{path}`: {message}")]
    InvalidValue { path: String, message: String },
    #[error(transparent)]
    InvalidSpec(#[from] InvalidSpec),
}

/// 1-based line and column of byte `offset` in `doc`.
fn line_col(doc: &str, offset: usize) -> (usize, usize) {
    let before = &doc[..offset.min(doc.len())];
    let line = before.matches('\n').count() + 1;
    let column = before.rsplit('\n').next().map_or(0, |l| l.chars().count()) + 1;
    (line, column)
}

fn parse_error(doc: &str, e: &toml::de::Error) -> ConfigError {
    let (line, column) = e.span().map_or((1, 1), |s| line_col(doc, s.start));
    ConfigError::Parse { line, column, message: e.message().trim().to_string() }
}

/// Parse and validate a scenario document.
pub fn parse_config(doc: &str) -> Result<ScenarioSpec, ConfigError> {
    let de = toml::Deserializer::parse(doc).map_err(|e| parse_error(doc, &e))?;
    let spec: ScenarioSpec = serde_path_to_error::deserialize(de).map_err(|e| {
        let path = e.path().to_string();
        let inner = e.into_inner();
        let message = inner.message().trim().to_string();
        if message.starts_with("unknown field") {
            ConfigError::UnknownKey { path, message }
        } else {
            ConfigError::InvalidValue { path, message }
        }
    })?;
    spec.validate()?;
    Ok(spec)
}

/// Render the effective spec with every default resolved.
pub fn to_toml(spec: &ScenarioSpec) -> String {
    toml::to_string(spec).expect("scenario specs always serialize")
}
