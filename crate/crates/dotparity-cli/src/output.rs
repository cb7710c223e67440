//! CSV/JSON emission. CSV floats carry 17 significant digits so that files
//! round-trip bit-exactly; JSON uses the shortest round-trip representation.

use serde::Serialize;

use crate::CliError;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum OutputFormat {
    Csv,
    Json,
}

/// 17 significant digits, round-trip exact for f64.
pub fn fmt_float(x: f64) -> String {
    if x.is_infinite() {
        return if x > 0.0 { "inf".into() } else { "-inf".into() };
    }
    format!("{x:.16e}")
}

/// One emitted table: a header and stringly-typed rows (CSV), mirrored by a
/// serializable record list (JSON).
pub struct Table<T: Serialize> {
    pub header: &'static [&'static str],
    pub rows: Vec<Vec<String>>,
    pub records: Vec<T>,
}

impl<T: Serialize> Table<T> {
    pub fn render(&self, format: OutputFormat) -> Result<String, CliError> {
        match format {
            OutputFormat::Csv => {
                let mut out = String::new();
                out.push_str(&self.header.join(","));
                out.push('\n');
                for row in &self.rows {
                    out.push_str(&row.join(","));
                    out.push('\n');
                }
                Ok(out)
            }
            OutputFormat::Json => {
                let mut out = serde_json::to_string_pretty(&self.records)
                    .map_err(|e| CliError::Config(format!("json serialization: {e}")))?;
                out.push('\n');
                Ok(out)
            }
        }
    }
}
