//! Tables written as CSV or JSON lines, and barrier files.

use std::fs;
use std::path::{Path, PathBuf};

use serde_json::Value;

use crate::config::{CliResult, Failure, Format};

/// Formats a number with 17 significant digits, which round-trips every `f64`.
pub fn num(x: f64) -> String {
    format!("{x:.16e}")
}

/// Rows of numbers under a fixed header.
#[derive(Debug, Clone)]
pub struct Table {
    header: Vec<String>,
    rows: Vec<Vec<f64>>,
}

impl Table {
    pub fn new<I, S>(header: I) -> Self
    where
        I: IntoIterator<Item = S>,
        S: Into<String>,
    {
        Self { header: header.into_iter().map(Into::into).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<f64>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn render(&self, format: Format) -> String {
        match format {
            Format::Csv => {
                let mut out = self.header.join(",");
                out.push('\n');
                for r in &self.rows {
                    out.push_str(&r.iter().map(|&v| num(v)).collect::<Vec<_>>().join(","));
                    out.push('\n');
                }
                out
            }
            Format::Jsonl => {
                let mut out = String::new();
                for r in &self.rows {
                    let fields: Vec<String> =
                        self.header.iter().zip(r).map(|(k, &v)| format!("{}:{}", Value::from(k.as_str()), json_num(v))).collect();
                    out.push('{');
                    out.push_str(&fields.join(","));
                    out.push_str("}\n");
                }
                out
            }
        }
    }
}

/// JSON number, or `null` for values JSON cannot hold.
fn json_num(x: f64) -> Value {
    serde_json::Number::from_f64(x).map_or(Value::Null, Value::Number)
}

/// Destination directory and table format for one command run.
#[derive(Debug, Clone)]
pub struct Sink {
    dir: PathBuf,
    format: Format,
}

impl Sink {
    pub fn new(dir: PathBuf, format: Format) -> Self {
        Self { dir, format }
    }

    /// Writes `table` to `<dir>/<stem>.csv` or `.jsonl` and returns the path.
    pub fn table(&self, stem: &str, table: &Table) -> CliResult<PathBuf> {
        let ext = match self.format {
            Format::Csv => "csv",
            Format::Jsonl => "jsonl",
        };
        self.text(&format!("{stem}.{ext}"), &table.render(self.format))
    }

    /// Writes `contents` to `<dir>/<name>` and returns the path.
    pub fn text(&self, name: &str, contents: &str) -> CliResult<PathBuf> {
        fs::create_dir_all(&self.dir).map_err(|e| Failure::Io(format!("{}: {e}", self.dir.display())))?;
        let path = self.dir.join(name);
        fs::write(&path, contents).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
        Ok(path)
    }
}

/// Reads a barrier file: either one number, or a `state,b` CSV with one row per state.
pub fn read_barriers(path: &Path) -> CliResult<Vec<f64>> {
    let text = fs::read_to_string(path).map_err(|e| Failure::Io(format!("{}: {e}", path.display())))?;
    let bad = |line: usize, what: &str| Failure::validation(format!("{}:{line}: {what}", path.display()));
    let mut out = Vec::new();
    for (n, line) in text.lines().enumerate() {
        let t = line.trim();
        if t.is_empty() || t.starts_with('#') || t == "state,b" {
            continue;
        }
        let field = t.rsplit(',').next().unwrap_or(t).trim();
        let b: f64 = field.parse().map_err(|_| bad(n + 1, &format!("not a number: {field:?}")))?;
        if let Some((state, _)) = t.split_once(',') {
            let i: usize = state.trim().parse().map_err(|_| bad(n + 1, "state index must be an integer"))?;
            if i != out.len() {
                return Err(bad(n + 1, &format!("expected state {}, found {i}", out.len())));
            }
        }
        out.push(b);
    }
    if out.is_empty() {
        return Err(Failure::validation(format!("{}: no barrier found", path.display())));
    }
    Ok(out)
}

/// `state,b` CSV body for a barrier vector.
pub fn barriers_csv(barriers: &[f64]) -> String {
    let mut out = String::from("state,b\n");
    for (i, b) in barriers.iter().enumerate() {
        out.push_str(&format!("{i},{}\n", num(*b)));
    }
    out
}
