//! File writers and the run manifest.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::error::CliError;

/// Column-oriented CSV table; reals are written with 17 significant digits.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<String>,
    pub rows: Vec<Vec<Cell>>,
}

#[derive(Debug, Clone, PartialEq)]
pub enum Cell {
    Real(f64),
    Int(i64),
    Text(String),
    Empty,
}

impl From<f64> for Cell {
    fn from(v: f64) -> Self {
        Cell::Real(v)
    }
}

impl From<usize> for Cell {
    fn from(v: usize) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<i64> for Cell {
    fn from(v: i64) -> Self {
        Cell::Int(v)
    }
}

impl From<bool> for Cell {
    fn from(v: bool) -> Self {
        Cell::Int(v as i64)
    }
}

impl From<&str> for Cell {
    fn from(v: &str) -> Self {
        Cell::Text(v.to_string())
    }
}

impl From<Option<f64>> for Cell {
    fn from(v: Option<f64>) -> Self {
        v.map_or(Cell::Empty, Cell::Real)
    }
}

impl Table {
    pub fn new(columns: &[&str]) -> Self {
        Self { columns: columns.iter().map(|c| c.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Cell>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    pub fn to_csv(&self) -> String {
        let mut s = self.columns.join(",");
        s.push('\n');
        for row in &self.rows {
            for (k, c) in row.iter().enumerate() {
                if k > 0 {
                    s.push(',');
                }
                match c {
                    Cell::Real(v) => write!(s, "{v:.16e}").unwrap(),
                    Cell::Int(v) => write!(s, "{v}").unwrap(),
                    Cell::Text(t) => s.push_str(t),
                    Cell::Empty => {}
                }
            }
            s.push('\n');
        }
        s
    }
}

/// Reads a CSV written by [`Table::to_csv`] back into named real columns.
/// Text and empty cells become NaN.
pub fn read_columns(text: &str) -> Result<BTreeMap<String, Vec<f64>>, CliError> {
    let mut lines = text.lines();
    let header = lines.next().ok_or(CliError::EmptyData)?;
    let names: Vec<&str> = header.split(',').map(str::trim).collect();
    let mut cols: Vec<Vec<f64>> = vec![Vec::new(); names.len()];
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let cells: Vec<&str> = line.split(',').collect();
        if cells.len() != names.len() {
            return Err(CliError::Usage(format!("csv row {}: expected {} fields", n + 2, names.len())));
        }
        for (k, c) in cells.iter().enumerate() {
            cols[k].push(c.trim().parse().unwrap_or(f64::NAN));
        }
    }
    Ok(names.into_iter().map(String::from).zip(cols).collect())
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

/// Keys are sorted because `serde_json` maps are ordered.
pub fn json_string(v: &Value) -> String {
    let mut s = serde_json::to_string_pretty(v).expect("serializable");
    s.push('\n');
    s
}

/// Collects outputs of one run; the manifest goes last.
pub struct Outputs {
    dir: PathBuf,
    stem: String,
    written: Vec<(String, String, usize)>,
}

impl Outputs {
    pub fn new(dir: &Path, command: &str, slug: &str) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Self { dir: dir.to_path_buf(), stem: format!("{command}-{slug}"), written: Vec::new() })
    }

    /// Writes `<command>-<slug><suffix>`; `suffix` includes the extension.
    pub fn write(&mut self, suffix: &str, bytes: &[u8]) -> Result<PathBuf, CliError> {
        let name = format!("{}{suffix}", self.stem);
        let path = self.dir.join(&name);
        std::fs::write(&path, bytes)?;
        self.written.push((name, sha256_hex(bytes), bytes.len()));
        Ok(path)
    }

    pub fn csv(&mut self, suffix: &str, t: &Table) -> Result<PathBuf, CliError> {
        self.write(&format!("{suffix}.csv"), t.to_csv().as_bytes())
    }

    pub fn json(&mut self, suffix: &str, v: &Value) -> Result<PathBuf, CliError> {
        self.write(&format!("{suffix}.json"), json_string(v).as_bytes())
    }

    pub fn svg(&mut self, suffix: &str, svg: &str) -> Result<PathBuf, CliError> {
        self.write(&format!("{suffix}.svg"), svg.as_bytes())
    }

    pub fn finish(self, run: RunInfo) -> Result<PathBuf, CliError> {
        let outputs: Vec<Value> =
            self.written.iter().map(|(f, h, n)| json!({ "file": f, "sha256": h, "bytes": n })).collect();
        let manifest = json!({
            "command": run.command,
            "config": run.config,
            "version": env!("CARGO_PKG_VERSION"),
            "wall_time_s": run.wall_time,
            "threads": run.threads,
            "outputs": outputs,
            "summary": run.summary,
        });
        let path = self.dir.join(format!("{}.manifest.json", self.stem));
        std::fs::write(&path, json_string(&manifest))?;
        Ok(path)
    }
}

pub struct RunInfo {
    pub command: String,
    pub config: BTreeMap<String, Value>,
    pub wall_time: f64,
    pub threads: usize,
    pub summary: Value,
}

/// First 10 hex digits of the hash of the resolved config.
pub fn config_slug(command: &str, config: &BTreeMap<String, Value>) -> String {
    let v = json!({ "command": command, "config": config });
    sha256_hex(serde_json::to_string(&v).expect("serializable").as_bytes())[..10].to_string()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_round_trip() {
        let mut t = Table::new(&["t", "x", "flag"]);
        t.push(vec![0.1.into(), (1.0 / 3.0).into(), true.into()]);
        t.push(vec![2.0.into(), Cell::Empty, false.into()]);
        let s = t.to_csv();
        assert!(s.starts_with("t,x,flag\n1.0000000000000001e-1,"));
        assert!(!s.contains('\r'));
        let cols = read_columns(&s).unwrap();
        assert_eq!(cols["x"][0], 1.0 / 3.0);
        assert!(cols["x"][1].is_nan());
        assert_eq!(cols["flag"], vec![1.0, 0.0]);
    }

    #[test]
    fn slug_is_stable_and_config_sensitive() {
        let mut c = BTreeMap::new();
        c.insert("A".to_string(), json!(0.05));
        let s1 = config_slug("kam-scan", &c);
        assert_eq!(s1.len(), 10);
        assert_eq!(s1, config_slug("kam-scan", &c));
        c.insert("A".to_string(), json!(0.25));
        assert_ne!(s1, config_slug("kam-scan", &c));
    }
}
