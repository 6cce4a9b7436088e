//! CSV tables and JSON reports.
//!
//! Reals are written with 17 significant digits so every value reloads to the
//! same bits.

use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::CliError;

pub fn fmt_real(x: f64) -> String {
    format!("{x:.16e}")
}

fn io_error(path: &Path, source: std::io::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source,
    }
}

/// A header and string-formatted rows, written column order as given.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub headers: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new<S: Into<String>>(headers: impl IntoIterator<Item = S>) -> Self {
        Self {
            headers: headers.into_iter().map(Into::into).collect(),
            rows: Vec::new(),
        }
    }

    /// Appends a row of a leading label and reals; non-finite values are an error.
    pub fn push(&mut self, label: impl Into<String>, values: &[f64]) -> Result<(), CliError> {
        let mut row = vec![label.into()];
        for (i, x) in values.iter().enumerate() {
            if !x.is_finite() {
                return Err(CliError::Check(format!(
                    "non-finite value in column `{}`",
                    self.headers.get(i + 1).map_or("?", String::as_str)
                )));
            }
            row.push(fmt_real(*x));
        }
        self.push_raw(row)
    }

    pub fn push_raw(&mut self, row: Vec<String>) -> Result<(), CliError> {
        if row.len() != self.headers.len() {
            return Err(CliError::Validation(format!(
                "row has {} cells for {} columns",
                row.len(),
                self.headers.len()
            )));
        }
        self.rows.push(row);
        Ok(())
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.headers.iter().position(|h| h == name)
    }

    /// Values of a numeric column.
    pub fn reals(&self, name: &str) -> Result<Vec<f64>, CliError> {
        let j = self
            .column(name)
            .ok_or_else(|| CliError::Validation(format!("no column `{name}`")))?;
        self.rows
            .iter()
            .map(|r| {
                r[j].parse::<f64>()
                    .map_err(|e| CliError::Validation(format!("column `{name}`: {e} in `{}`", r[j])))
            })
            .collect()
    }

    pub fn write(&self, path: &Path) -> Result<(), CliError> {
        let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
        w.write_record(&self.headers).map_err(|e| csv_error(path, e))?;
        for row in &self.rows {
            w.write_record(row).map_err(|e| csv_error(path, e))?;
        }
        w.flush().map_err(|e| io_error(path, e))
    }

    pub fn read(path: &Path) -> Result<Self, CliError> {
        let mut r = csv::Reader::from_path(path).map_err(|e| csv_error(path, e))?;
        let headers = r
            .headers()
            .map_err(|e| csv_error(path, e))?
            .iter()
            .map(String::from)
            .collect();
        let rows = r
            .records()
            .map(|rec| rec.map(|rec| rec.iter().map(String::from).collect()))
            .collect::<Result<Vec<Vec<String>>, _>>()
            .map_err(|e| csv_error(path, e))?;
        Ok(Self { headers, rows })
    }
}

fn csv_error(path: &Path, e: csv::Error) -> CliError {
    CliError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

/// Coordinate column names: `q` for one dimension, `q1..qn` otherwise.
pub fn coordinate_names(prefix: &str, n: usize) -> Vec<String> {
    if n == 1 {
        vec![prefix.to_string()]
    } else {
        (1..=n).map(|i| format!("{prefix}{i}")).collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<(), CliError> {
    let mut text = serde_json::to_string_pretty(value)
        .map_err(|e| CliError::Validation(format!("cannot serialize {}: {e}", path.display())))?;
    text.push('\n');
    fs::write(path, text).map_err(|e| io_error(path, e))
}

pub fn read_json(path: &Path) -> Result<serde_json::Value, CliError> {
    let text = fs::read(path).map_err(|e| io_error(path, e))?;
    serde_json::from_slice(&text).map_err(|e| CliError::Validation(format!("{}: {e}", path.display())))
}

/// Keys whose value may legitimately be absent.
const OPTIONAL_KEYS: [&str; 1] = ["fitted_slope"];

/// Rejects reports holding non-finite values, which serialize as `null`.
pub fn check_finite_json(value: &serde_json::Value) -> Result<(), CliError> {
    fn walk(v: &serde_json::Value, path: &str) -> Result<(), CliError> {
        match v {
            serde_json::Value::Null if !OPTIONAL_KEYS.iter().any(|k| path.ends_with(k)) => {
                Err(CliError::Check(format!("non-finite or missing report value at {path}")))
            }
            serde_json::Value::Array(xs) => {
                for (i, x) in xs.iter().enumerate() {
                    walk(x, &format!("{path}[{i}]"))?;
                }
                Ok(())
            }
            serde_json::Value::Object(map) => {
                for (k, x) in map {
                    walk(x, &format!("{path}.{k}"))?;
                }
                Ok(())
            }
            _ => Ok(()),
        }
    }
    walk(value, "report")
}

pub fn ensure_dir(dir: &Path) -> Result<PathBuf, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_error(dir, e))?;
    Ok(dir.to_path_buf())
}
