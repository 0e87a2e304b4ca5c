use std::io::Write;
use std::path::Path;

use serde_json::{json, Map, Value};

use crate::args::{Format, OutputArgs};
use crate::error::CliError;

pub const UNITS_NOTE: &str = "times in 1/kappa, rates and frequencies in kappa (kappa = 1)";

/// One output cell. Floats print in shortest round-trip form.
#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Float(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl Cell {
    fn to_csv(&self) -> String {
        match self {
            Cell::Float(x) => format!("{x:?}"),
            Cell::Int(i) => i.to_string(),
            Cell::Text(s) => s.clone(),
            Cell::Empty => String::new(),
        }
    }

    fn to_json(&self) -> Value {
        match self {
            Cell::Float(x) if x.is_finite() => json!(x),
            Cell::Float(x) => json!(x.to_string()),
            Cell::Int(i) => json!(i),
            Cell::Text(s) => json!(s),
            Cell::Empty => Value::Null,
        }
    }
}

impl From<f64> for Cell {
    fn from(x: f64) -> Self {
        Cell::Float(x)
    }
}

impl From<usize> for Cell {
    fn from(x: usize) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<u64> for Cell {
    fn from(x: u64) -> Self {
        Cell::Int(x as i64)
    }
}

impl From<&str> for Cell {
    fn from(s: &str) -> Self {
        Cell::Text(s.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(x: Option<f64>) -> Self {
        x.map_or(Cell::Empty, Cell::Float)
    }
}

/// Header block and a fixed-column table.
#[derive(Debug, Clone)]
pub struct Report {
    pub header: Map<String, Value>,
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Cell>>,
}

impl Report {
    pub fn new(command: &str, config: Value, columns: Vec<&'static str>) -> Self {
        let mut header = Map::new();
        header.insert(
            "tool".into(),
            json!(concat!("laserlw ", env!("CARGO_PKG_VERSION"))),
        );
        header.insert("command".into(), json!(command));
        header.insert("config".into(), config);
        header.insert("units".into(), json!(UNITS_NOTE));
        Self {
            header,
            columns,
            rows: Vec::new(),
        }
    }

    pub fn set(&mut self, key: &str, value: Value) {
        self.header.insert(key.to_string(), value);
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> Result<Vec<u8>, CliError> {
        match format {
            Format::Csv => self.render_csv(),
            Format::Json => {
                let data: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|row| {
                        let obj: Map<String, Value> = self
                            .columns
                            .iter()
                            .zip(row)
                            .map(|(c, v)| (c.to_string(), v.to_json()))
                            .collect();
                        Value::Object(obj)
                    })
                    .collect();
                let doc = json!({ "header": Value::Object(self.header.clone()), "data": data });
                let mut bytes = serde_json::to_vec_pretty(&doc).expect("JSON values serialize");
                bytes.push(b'\n');
                Ok(bytes)
            }
        }
    }

    fn render_csv(&self) -> Result<Vec<u8>, CliError> {
        let mut out = Vec::new();
        for (key, value) in &self.header {
            let text = match value {
                Value::String(s) => s.clone(),
                other => other.to_string(),
            };
            writeln!(out, "# {key}: {text}").expect("writing to memory");
        }
        let mut w = csv::Writer::from_writer(out);
        let csv_err = |e: csv::Error| CliError::Validation(format!("CSV encoding failed: {e}"));
        w.write_record(&self.columns).map_err(csv_err)?;
        for row in &self.rows {
            w.write_record(row.iter().map(Cell::to_csv))
                .map_err(csv_err)?;
        }
        w.into_inner()
            .map_err(|e| CliError::Validation(format!("CSV encoding failed: {e}")))
    }
}

/// Write to `--out` atomically (temporary file in the same directory, then rename) or to stdout.
pub fn emit(report: &Report, output: &OutputArgs) -> Result<(), CliError> {
    let bytes = report.render(output.format)?;
    match &output.out {
        None => {
            let mut stdout = std::io::stdout().lock();
            stdout
                .write_all(&bytes)
                .and_then(|_| stdout.flush())
                .map_err(|source| CliError::Io {
                    path: "<stdout>".into(),
                    source,
                })
        }
        Some(path) => write_atomic(path, &bytes),
    }
}

fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), CliError> {
    let io = |source| CliError::Io {
        path: path.to_path_buf(),
        source,
    };
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(io)?;
    tmp.write_all(bytes).map_err(io)?;
    tmp.as_file().sync_all().map_err(io)?;
    tmp.persist(path).map_err(|e| io(e.error))?;
    Ok(())
}
