//! Experiment resolution: config file values, flag overrides, and the
//! `--dump-config` provenance echo.
//!
//! A config file is a flat JSON object whose keys mirror the long flag
//! names one to one (`{"n": 10, "mode": "rational"}`). Flags override file
//! values; built-in defaults fill the rest.

use std::path::{Path, PathBuf};

use clap::ValueEnum;
use serde::de::DeserializeOwned;
use serde_json::{Map, Value};

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum Mode {
    Float,
    Rational,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum TableRoute {
    /// Evaluate the closed-form expressions.
    Closed,
    /// Solve the recurrences bottom-up.
    Recurrence,
}

impl Mode {
    pub fn as_str(self) -> &'static str {
        match self {
            Mode::Float => "float",
            Mode::Rational => "rational",
        }
    }
}

impl OutputFormat {
    pub fn as_str(self) -> &'static str {
        match self {
            OutputFormat::Csv => "csv",
            OutputFormat::Json => "json",
        }
    }
}

impl TableRoute {
    pub fn as_str(self) -> &'static str {
        match self {
            TableRoute::Closed => "closed",
            TableRoute::Recurrence => "recurrence",
        }
    }
}

/// The parsed config file, plus helpers to pull typed values out of it.
pub struct FileValues {
    values: Map<String, Value>,
}

impl FileValues {
    pub fn load(path: Option<&Path>) -> Result<FileValues, CliError> {
        let Some(path) = path else {
            return Ok(FileValues { values: Map::new() });
        };
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let value: Value = serde_json::from_str(&text)
            .map_err(|e| CliError::invalid(format!("config file {}: {e}", path.display())))?;
        match value {
            Value::Object(values) => Ok(FileValues { values }),
            _ => Err(CliError::invalid(format!(
                "config file {} must hold a JSON object",
                path.display()
            ))),
        }
    }

    /// Typed lookup of a config key; `None` when absent.
    pub fn get<T: DeserializeOwned>(&self, key: &str) -> Result<Option<T>, CliError> {
        match self.values.get(key) {
            None => Ok(None),
            Some(v) => serde_json::from_value(v.clone())
                .map(Some)
                .map_err(|e| CliError::invalid(format!("config key '{key}': {e}"))),
        }
    }

    /// Enum-valued keys are written as strings matching the flag values.
    pub fn get_enum<T: ValueEnum + Clone>(&self, key: &str) -> Result<Option<T>, CliError> {
        let Some(text) = self.get::<String>(key)? else {
            return Ok(None);
        };
        T::from_str(&text, true)
            .map(Some)
            .map_err(|e| CliError::invalid(format!("config key '{key}': {e}")))
    }
}

/// Flag value, then file value, then default.
pub fn pick<T>(flag: Option<T>, file: Option<T>, default: T) -> T {
    flag.or(file).unwrap_or(default)
}

/// Flag value, then file value; an absent required key is an invalid spec.
pub fn pick_required<T>(flag: Option<T>, file: Option<T>, key: &str) -> Result<T, CliError> {
    flag.or(file).ok_or_else(|| {
        CliError::invalid(format!(
            "missing required parameter '{key}' (flag or config file)"
        ))
    })
}

/// The fully resolved spec of one run, echoed by `--dump-config`.
pub struct ResolvedSpec {
    pub command: &'static str,
    pub seed: u64,
    pub mode: Option<Mode>,
    pub format: OutputFormat,
    pub output: Option<PathBuf>,
    pub params: Map<String, Value>,
}

impl ResolvedSpec {
    pub fn dump(&self) {
        let doc = serde_json::json!({
            "schema_version": 1,
            "command": self.command,
            "seed": self.seed,
            "mode": self.mode.map(Mode::as_str),
            "format": self.format.as_str(),
            "output": self.output.as_ref().map(|p| p.display().to_string()),
            "params": Value::Object(self.params.clone()),
        });
        eprintln!("{}", serde_json::to_string(&doc).expect("spec serializes"));
    }
}
