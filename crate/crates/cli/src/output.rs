use std::fs;
use std::path::{Path, PathBuf};

use serde::Serialize;
use serde_json::{json, Map, Value};

use crate::CliError;

/// Grid a table was sampled on.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct GridInfo {
    pub kind: String,
    pub n: usize,
}

/// Columnar numeric table written as one CSV file.
#[derive(Clone, Debug, PartialEq)]
pub struct Table {
    pub file: String,
    pub columns: Vec<String>,
    pub units: Vec<String>,
    pub rows: Vec<Vec<f64>>,
    pub grid: Option<GridInfo>,
}

impl Table {
    pub fn new(file: &str, grid: Option<GridInfo>) -> Self {
        Self {
            file: file.to_string(),
            columns: Vec::new(),
            units: Vec::new(),
            rows: Vec::new(),
            grid,
        }
    }

    /// Appends a column; all columns must have the same length.
    pub fn column(&mut self, name: &str, unit: &str, values: &[f64]) {
        if self.columns.is_empty() {
            self.rows = values.iter().map(|&v| vec![v]).collect();
        } else {
            assert_eq!(values.len(), self.rows.len(), "column {name} has the wrong length");
            for (r, &v) in self.rows.iter_mut().zip(values) {
                r.push(v);
            }
        }
        self.columns.push(name.to_string());
        self.units.push(unit.to_string());
    }

    fn describe(&self) -> Value {
        let units: Map<String, Value> = self
            .columns
            .iter()
            .zip(&self.units)
            .map(|(c, u)| (c.clone(), json!(u)))
            .collect();
        json!({
            "columns": self.columns,
            "units": units,
            "rows": self.rows.len(),
            "grid": self.grid,
        })
    }
}

/// Everything a run produces.
#[derive(Clone, Debug)]
pub struct ResultBundle {
    /// Config echo, reduction, versions and timings.
    pub metadata: Map<String, Value>,
    pub tables: Vec<Table>,
    pub scalars: Vec<(String, f64)>,
    /// gnuplot script body.
    pub plot: Option<String>,
}

impl ResultBundle {
    pub fn scalar(&self, name: &str) -> Option<f64> {
        self.scalars.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }
}

/// Locale-independent, 17 significant digits.
pub fn fmt_num(v: f64) -> String {
    format!("{v:.16e}")
}

fn io_err(path: &Path, e: impl std::fmt::Display) -> CliError {
    CliError::Io(format!("{}: {e}", path.display()))
}

fn write_rows(path: &Path, header: &[String], rows: impl Iterator<Item = Vec<String>>) -> Result<(), CliError> {
    let mut w = csv::Writer::from_path(path).map_err(|e| io_err(path, e))?;
    w.write_record(header).map_err(|e| io_err(path, e))?;
    for r in rows {
        w.write_record(&r).map_err(|e| io_err(path, e))?;
    }
    w.flush().map_err(|e| io_err(path, e))
}

pub fn emit_table(table: &Table, dir: &Path) -> Result<PathBuf, CliError> {
    let path = dir.join(&table.file);
    write_rows(
        &path,
        &table.columns,
        table.rows.iter().map(|r| r.iter().map(|&v| fmt_num(v)).collect()),
    )?;
    Ok(path)
}

pub fn emit_scalars(scalars: &[(String, f64)], dir: &Path) -> Result<PathBuf, CliError> {
    let path = dir.join("scalars.csv");
    write_rows(
        &path,
        &["name".to_string(), "value".to_string()],
        scalars.iter().map(|(n, v)| vec![n.clone(), fmt_num(*v)]),
    )?;
    Ok(path)
}

/// Writes all tables, `scalars.csv`, `metadata.json` and the plot script.
pub fn emit(bundle: &ResultBundle, dir: &Path) -> Result<Vec<PathBuf>, CliError> {
    fs::create_dir_all(dir).map_err(|e| io_err(dir, e))?;
    let mut written = Vec::new();
    for t in &bundle.tables {
        written.push(emit_table(t, dir)?);
    }
    written.push(emit_scalars(&bundle.scalars, dir)?);

    let mut meta = bundle.metadata.clone();
    let tables: Map<String, Value> = bundle.tables.iter().map(|t| (t.file.clone(), t.describe())).collect();
    meta.insert("tables".into(), Value::Object(tables));
    let scalars: Map<String, Value> = bundle.scalars.iter().map(|(n, v)| (n.clone(), json!(v))).collect();
    meta.insert("scalars".into(), Value::Object(scalars));
    let path = dir.join("metadata.json");
    let text = serde_json::to_string_pretty(&Value::Object(meta)).map_err(|e| io_err(&path, e))?;
    fs::write(&path, text + "\n").map_err(|e| io_err(&path, e))?;
    written.push(path);

    if let Some(script) = &bundle.plot {
        let path = dir.join("plot.gp");
        fs::write(&path, script).map_err(|e| io_err(&path, e))?;
        written.push(path);
    }
    Ok(written)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn number_format_round_trips() {
        for v in [0.1, -1.0 / 3.0, 1e-300, 6.02214076e23, -0.0] {
            let s = fmt_num(v);
            assert_eq!(s.parse::<f64>().unwrap().to_bits(), v.to_bits());
        }
        assert_eq!(fmt_num(1.5), "1.5000000000000000e0");
    }

    #[test]
    fn columns_line_up() {
        let mut t = Table::new("a.csv", None);
        t.column("x", "1", &[1.0, 2.0]);
        t.column("y", "1", &[3.0, 4.0]);
        assert_eq!(t.rows, vec![vec![1.0, 3.0], vec![2.0, 4.0]]);
    }

    #[test]
    fn empty_scalars_give_header_only() {
        let dir = std::env::temp_dir().join(format!("carleman-empty-{}", std::process::id()));
        fs::create_dir_all(&dir).unwrap();
        let p = emit_scalars(&[], &dir).unwrap();
        assert_eq!(fs::read_to_string(&p).unwrap(), "name,value\n");
        fs::remove_dir_all(&dir).unwrap();
    }
}
