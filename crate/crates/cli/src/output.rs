//! Table assembly and the CSV/JSON writers shared by all subcommands.

use std::fs::File;
use std::io::{self, BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::spec::OutputFormat;
use crate::CliError;

/// A rectangular result table; every cell is already rendered to text so
/// exact-mode numerators and denominators survive untouched.
pub struct Table {
    pub kind: &'static str,
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(kind: &'static str, headers: Vec<String>) -> Table {
        Table {
            kind,
            headers,
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.headers.len());
        self.rows.push(row);
    }

    fn write_csv(&self, w: &mut (impl Write + ?Sized)) -> io::Result<()> {
        writeln!(w, "{}", self.headers.join(","))?;
        for row in &self.rows {
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }

    fn write_json(&self, w: &mut (impl Write + ?Sized)) -> io::Result<()> {
        let rows: Vec<serde_json::Value> = self
            .rows
            .iter()
            .map(|row| {
                let obj: serde_json::Map<String, serde_json::Value> = self
                    .headers
                    .iter()
                    .zip(row)
                    .map(|(h, v)| (h.clone(), serde_json::Value::String(v.clone())))
                    .collect();
                serde_json::Value::Object(obj)
            })
            .collect();
        let doc = serde_json::json!({
            "schema_version": 1,
            "kind": self.kind,
            "rows": rows,
        });
        writeln!(w, "{}", serde_json::to_string_pretty(&doc)?)
    }

    /// Render into a byte buffer.
    pub fn write_to_vec(&self, buf: &mut Vec<u8>, format: OutputFormat) -> io::Result<()> {
        match format {
            OutputFormat::Csv => self.write_csv(buf),
            OutputFormat::Json => self.write_json(buf),
        }
    }

    /// Write to `path` (or stdout when `None`) and return a one-line
    /// summary of what happened.
    pub fn write(&self, path: Option<&Path>, format: OutputFormat) -> Result<String, CliError> {
        let emit = |w: &mut dyn Write| -> io::Result<()> {
            match format {
                OutputFormat::Csv => self.write_csv(w),
                OutputFormat::Json => self.write_json(w),
            }
        };
        match path {
            Some(path) => {
                let file = File::create(path).map_err(|e| CliError::io(path, e))?;
                let mut w = BufWriter::new(file);
                emit(&mut w).map_err(|e| CliError::io(path, e))?;
                w.flush().map_err(|e| CliError::io(path, e))?;
                Ok(format!(
                    "{}: wrote {} rows to {}",
                    self.kind,
                    self.rows.len(),
                    path.display()
                ))
            }
            None => {
                let stdout = io::stdout();
                let mut w = stdout.lock();
                emit(&mut w).map_err(|e| CliError::io(Path::new("<stdout>"), e))?;
                Ok(format!(
                    "{}: wrote {} rows to stdout",
                    self.kind,
                    self.rows.len()
                ))
            }
        }
    }
}

/// Resolve an output path against `SANDPILE_OUT_DIR`: relative paths land
/// in that directory when the variable is set.
pub fn resolve_output(path: Option<PathBuf>) -> Option<PathBuf> {
    let path = path?;
    if path.is_relative() {
        if let Ok(dir) = std::env::var("SANDPILE_OUT_DIR") {
            if !dir.is_empty() {
                return Some(PathBuf::from(dir).join(path));
            }
        }
    }
    Some(path)
}

/// Write raw bytes to a side-channel file (PGM images, JSON extras).
pub fn write_file(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let mut file = BufWriter::new(File::create(path).map_err(|e| CliError::io(path, e))?);
    file.write_all(bytes).map_err(|e| CliError::io(path, e))?;
    file.flush().map_err(|e| CliError::io(path, e))
}
