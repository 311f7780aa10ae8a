//! Delimited-text tables: a header row of column names, a row of units,
//! then numeric rows. Lines starting with `#` are ignored.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use crate::error::{CliError, CliResult};
use crate::units::{to_si, Dimension};

#[derive(Debug, Clone, PartialEq)]
pub struct Table {
    pub path: PathBuf,
    pub columns: Vec<String>,
    pub units: Vec<String>,
    /// Row-major, as written in the file (not converted).
    pub rows: Vec<Vec<f64>>,
}

fn sniff_delimiter(path: &Path) -> CliResult<u8> {
    let text = std::fs::read_to_string(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let header = text
        .lines()
        .find(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .unwrap_or("");
    Ok(if header.contains(',') {
        b','
    } else if header.contains('\t') {
        b'\t'
    } else if header.contains(';') {
        b';'
    } else {
        b','
    })
}

pub fn read_table(path: &Path, delimiter: Option<u8>) -> CliResult<Table> {
    let delimiter = match delimiter {
        Some(d) => d,
        None => sniff_delimiter(path)?,
    };
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .delimiter(delimiter)
        .comment(Some(b'#'))
        .trim(csv::Trim::All)
        .flexible(true)
        .from_path(path)
        .map_err(|e| CliError::Data(format!("cannot read {}: {e}", path.display())))?;
    let name = path.display();
    let mut records = reader.records();
    let mut next_row = |what: &str| -> CliResult<Option<(u64, Vec<String>)>> {
        match records.next() {
            None => Ok(None),
            Some(Err(e)) => Err(CliError::Data(format!("{name}: {what}: {e}"))),
            Some(Ok(r)) => {
                let line = r.position().map(|p| p.line()).unwrap_or(0);
                Ok(Some((line, r.iter().map(str::to_string).collect())))
            }
        }
    };
    let (_, columns) = next_row("header")?
        .ok_or_else(|| CliError::Data(format!("{name}: file is empty, expected a header row")))?;
    let (_, units) = next_row("unit row")?
        .ok_or_else(|| CliError::Data(format!("{name}: missing the unit row after the header")))?;
    if units.len() != columns.len() {
        return Err(CliError::Data(format!(
            "{name}: unit row has {} entries for {} columns",
            units.len(),
            columns.len()
        )));
    }
    let mut rows = Vec::new();
    while let Some((line, fields)) = next_row("data row")? {
        if fields.len() != columns.len() {
            return Err(CliError::Data(format!(
                "{name}, line {line}: expected {} fields, found {}",
                columns.len(),
                fields.len()
            )));
        }
        let row = fields
            .iter()
            .zip(&columns)
            .map(|(f, c)| {
                f.parse::<f64>().map_err(|_| {
                    CliError::Data(format!("{name}, line {line}: column '{c}': '{f}' is not a number"))
                })
            })
            .collect::<CliResult<Vec<f64>>>()?;
        rows.push(row);
    }
    Ok(Table {
        path: path.to_path_buf(),
        columns,
        units,
        rows,
    })
}

impl Table {
    pub fn has_column(&self, name: &str) -> bool {
        self.columns.iter().any(|c| c == name)
    }

    /// Column `name` converted to SI. The file's unit row is authoritative;
    /// a `declared` unit fills an empty cell and must agree with a filled one.
    pub fn column(&self, name: &str, dim: Dimension, declared: &BTreeMap<String, String>) -> CliResult<Vec<f64>> {
        let file = self.path.display();
        let k = self.columns.iter().position(|c| c == name).ok_or_else(|| {
            CliError::Data(format!(
                "column not found: '{name}' in {file} (columns: {})",
                self.columns.join(", ")
            ))
        })?;
        let in_file = self.units[k].trim();
        let unit = match (in_file, declared.get(name).map(|s| s.trim())) {
            ("", None) => {
                return Err(CliError::Data(format!(
                    "{file}: no unit for column '{name}' in the unit row or the configuration"
                )))
            }
            ("", Some(d)) => d,
            (f, Some(d)) if f != d => {
                return Err(CliError::Data(format!(
                    "{file}: column '{name}' is in '{f}' but the configuration declares '{d}'"
                )))
            }
            (f, _) => f,
        };
        let scale = to_si(unit, dim).map_err(|e| CliError::Data(format!("{file}, column '{name}': {e}")))?;
        Ok(self.rows.iter().map(|r| scale.apply(r[k])).collect())
    }
}

/// Shortest text that parses back to the same `f64`.
pub fn format_value(v: f64) -> String {
    let a = v.abs();
    if v == 0.0 || (1e-4..1e15).contains(&a) {
        format!("{v}")
    } else {
        format!("{v:e}")
    }
}

/// Writes SI-valued columns with their SI unit symbols.
pub fn write_table(path: &Path, columns: &[(&str, Dimension)], data: &[&[f64]]) -> CliResult<()> {
    let io = |e: std::io::Error| CliError::Data(format!("cannot write {}: {e}", path.display()));
    let n = data.first().map_or(0, |c| c.len());
    assert!(data.iter().all(|c| c.len() == n) && data.len() == columns.len());
    let mut out = BufWriter::new(File::create(path).map_err(io)?);
    let names: Vec<&str> = columns.iter().map(|c| c.0).collect();
    let units: Vec<&str> = columns.iter().map(|c| c.1.si_symbol()).collect();
    writeln!(out, "{}", names.join(",")).map_err(io)?;
    writeln!(out, "{}", units.join(",")).map_err(io)?;
    for k in 0..n {
        let row: Vec<String> = data.iter().map(|c| format_value(c[k])).collect();
        writeln!(out, "{}", row.join(",")).map_err(io)?;
    }
    out.flush().map_err(io)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn formatted_values_round_trip() {
        for &v in &[0.0, 1.0, -2.5, 1e-7, 3.3e-300, 6.02e23, 0.1 + 0.2, f64::MIN_POSITIVE, 123456.789] {
            assert_eq!(format_value(v).parse::<f64>().unwrap().to_bits(), v.to_bits(), "{v}");
        }
    }

    #[test]
    fn written_tables_read_back_bit_exactly() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let a = [0.0, 1e-9 / 3.0, 0.1 + 0.2, 7.5e22];
        let b = [1.0, f64::MIN_POSITIVE, -2.0 / 3.0, 1e15];
        write_table(&p, &[("delay", Dimension::Time), ("linewidth", Dimension::Frequency)], &[&a, &b]).unwrap();
        let t = read_table(&p, None).unwrap();
        assert_eq!(t.units, vec!["s", "Hz"]);
        let none = BTreeMap::new();
        let got_a = t.column("delay", Dimension::Time, &none).unwrap();
        let got_b = t.column("linewidth", Dimension::Frequency, &none).unwrap();
        for (x, y) in got_a.iter().chain(&got_b).zip(a.iter().chain(&b)) {
            assert_eq!(x.to_bits(), y.to_bits());
        }
    }

    #[test]
    fn reads_units_comments_and_reports_lines() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("d.csv");
        std::fs::write(&p, "# exported\ndelay,intensity\nns,\n0,1\n100,0.5\n").unwrap();
        let t = read_table(&p, None).unwrap();
        let mut declared = BTreeMap::new();
        assert!(t.column("intensity", Dimension::Dimensionless, &declared).is_err());
        declared.insert("intensity".to_string(), "1".to_string());
        assert_eq!(t.column("intensity", Dimension::Dimensionless, &declared).unwrap(), vec![1.0, 0.5]);
        let d = t.column("delay", Dimension::Time, &declared).unwrap();
        assert_eq!(d[1], 1e-7);
        declared.insert("delay".to_string(), "us".to_string());
        assert!(t.column("delay", Dimension::Time, &declared).is_err());

        std::fs::write(&p, "a\tb\ns\t1\n1\tx\n").unwrap();
        let err = read_table(&p, None).unwrap_err().to_string();
        assert!(err.contains("line 3") && err.contains("'x'"), "{err}");
    }
}
