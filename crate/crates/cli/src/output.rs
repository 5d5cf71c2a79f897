//! Tables, plot data and atomic file writes.

use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde_json::{Map, Value};

use crate::config::Format;
use crate::CliError;

/// Writes through a temporary file in the target directory and renames it
/// into place, so readers never see a partial file.
pub fn atomic_write<T>(
    path: &Path,
    body: impl FnOnce(&mut dyn Write) -> Result<T, CliError>,
) -> Result<T, CliError> {
    let dir = path.parent().filter(|p| !p.as_os_str().is_empty()).unwrap_or(Path::new("."));
    let tmp = tempfile::NamedTempFile::new_in(dir)?;
    let mut w = BufWriter::new(tmp);
    let out = body(&mut w)?;
    let tmp = w.into_inner().map_err(|e| CliError::Io(e.into_error()))?;
    tmp.persist(path).map_err(|e| CliError::Io(e.error))?;
    Ok(out)
}

/// A table of JSON scalars with named columns.
#[derive(Debug, Clone, Default)]
pub struct Table {
    pub columns: Vec<&'static str>,
    pub rows: Vec<Vec<Value>>,
}

impl Table {
    pub fn new(columns: &[&'static str]) -> Self {
        Table { columns: columns.to_vec(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<Value>) {
        debug_assert_eq!(row.len(), self.columns.len());
        self.rows.push(row);
    }

    fn cell(v: &Value) -> String {
        match v {
            Value::String(s) => s.clone(),
            other => other.to_string(),
        }
    }

    pub fn write(&self, out: &mut dyn Write, format: Format) -> Result<(), CliError> {
        match format {
            Format::Csv | Format::Tsv => {
                let delim = if format == Format::Csv { b',' } else { b'\t' };
                let mut w = csv::WriterBuilder::new().delimiter(delim).from_writer(out);
                w.write_record(&self.columns)?;
                for row in &self.rows {
                    w.write_record(row.iter().map(Self::cell))?;
                }
                w.flush()?;
            }
            Format::Json => {
                let rows: Vec<Value> = self
                    .rows
                    .iter()
                    .map(|r| {
                        let obj: Map<String, Value> =
                            self.columns.iter().map(|c| c.to_string()).zip(r.iter().cloned()).collect();
                        Value::Object(obj)
                    })
                    .collect();
                serde_json::to_writer_pretty(&mut *out, &rows)?;
                writeln!(out)?;
            }
        }
        Ok(())
    }
}

/// Collects the files a command writes, relative to the output directory.
#[derive(Debug)]
pub struct Sink {
    pub dir: PathBuf,
    pub files: Vec<String>,
}

impl Sink {
    pub fn new(dir: &Path) -> Result<Self, CliError> {
        std::fs::create_dir_all(dir)?;
        Ok(Sink { dir: dir.to_path_buf(), files: Vec::new() })
    }

    pub fn file<T>(&mut self, name: &str, body: impl FnOnce(&mut dyn Write) -> Result<T, CliError>) -> Result<T, CliError> {
        let out = atomic_write(&self.dir.join(name), body)?;
        if !self.files.iter().any(|f| f == name) {
            self.files.push(name.to_string());
        }
        Ok(out)
    }

    pub fn table(&mut self, stem: &str, table: &Table, format: Format) -> Result<(), CliError> {
        self.file(&format!("{stem}.{}", format.extension()), |w| table.write(w, format))
    }

    /// Two-column plot data; the header is a `#` comment.
    pub fn plot(&mut self, stem: &str, x: &str, y: &str, points: &[(f64, f64)]) -> Result<(), CliError> {
        self.file(&format!("{stem}.tsv"), |w| {
            writeln!(w, "# {x}\t{y}")?;
            for (a, b) in points {
                writeln!(w, "{a}\t{b}")?;
            }
            Ok(())
        })
    }

    pub fn json(&mut self, name: &str, v: &Value) -> Result<(), CliError> {
        self.file(name, |w| {
            serde_json::to_writer_pretty(&mut *w, v)?;
            writeln!(w)?;
            Ok(())
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use serde_json::json;

    #[test]
    fn table_formats() {
        let mut t = Table::new(&["n", "x"]);
        t.push(vec![json!(1), json!(0.5)]);
        t.push(vec![json!(2), json!("a")]);
        let render = |f| {
            let mut buf = Vec::new();
            t.write(&mut buf, f).unwrap();
            String::from_utf8(buf).unwrap()
        };
        assert_eq!(render(Format::Csv), "n,x\n1,0.5\n2,a\n");
        assert_eq!(render(Format::Tsv), "n\tx\n1\t0.5\n2\ta\n");
        let j: Value = serde_json::from_str(&render(Format::Json)).unwrap();
        assert_eq!(j, json!([{"n": 1, "x": 0.5}, {"n": 2, "x": "a"}]));
    }

    #[test]
    fn atomic_write_replaces() {
        let dir = tempfile::tempdir().unwrap();
        let mut sink = Sink::new(&dir.path().join("nested")).unwrap();
        sink.plot("p", "level", "value", &[(0.0, 1.5), (1.0, 2.0)]).unwrap();
        sink.plot("p", "level", "value", &[(0.0, 3.0)]).unwrap();
        let text = std::fs::read_to_string(dir.path().join("nested/p.tsv")).unwrap();
        assert_eq!(text, "# level\tvalue\n0\t3\n");
        // no temporaries left behind
        assert_eq!(std::fs::read_dir(dir.path().join("nested")).unwrap().count(), 1);
    }
}
