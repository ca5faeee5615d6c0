use std::io::Write;

use serde::{Deserialize, Serialize};

use crate::SCHEMA_VERSION;

/// How a column is printed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Format {
    /// Three decimals (dB values).
    Db,
    /// Shortest representation that round-trips.
    Full,
    Integer,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Column {
    pub name: String,
    pub format: Format,
}

/// Rectangular numeric result table; missing values print as empty cells.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Table {
    pub columns: Vec<Column>,
    pub rows: Vec<Vec<Option<f64>>>,
}

impl Table {
    pub fn new(columns: &[(&str, Format)]) -> Self {
        Self {
            columns: columns
                .iter()
                .map(|(n, f)| Column {
                    name: n.to_string(),
                    format: *f,
                })
                .collect(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<Option<f64>>) {
        assert_eq!(row.len(), self.columns.len(), "row width");
        self.rows.push(row);
    }

    pub fn index(&self, name: &str) -> Option<usize> {
        self.columns.iter().position(|c| c.name == name)
    }

    /// Cell as written to CSV.
    pub fn cell(&self, row: usize, col: usize) -> String {
        match self.rows[row][col] {
            None => String::new(),
            Some(v) if !v.is_finite() => String::new(),
            Some(v) => match self.columns[col].format {
                Format::Db => format!("{v:.3}"),
                Format::Full => format!("{v}"),
                Format::Integer => format!("{}", v.round() as i64),
            },
        }
    }

    /// Column values exactly as printed (parsed back from the CSV text).
    pub fn printed(&self, name: &str) -> Option<Vec<Option<f64>>> {
        let c = self.index(name)?;
        Some(
            (0..self.rows.len())
                .map(|r| self.cell(r, c).parse().ok())
                .collect(),
        )
    }

    /// RFC 4180 CSV with CRLF-free LF line endings and a trailing
    /// `schema_version` column.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        let header: Vec<&str> = self.columns.iter().map(|c| c.name.as_str()).collect();
        writeln!(out, "{},schema_version", header.join(","))?;
        for r in 0..self.rows.len() {
            let cells: Vec<String> = (0..self.columns.len()).map(|c| self.cell(r, c)).collect();
            writeln!(out, "{},{SCHEMA_VERSION}", cells.join(","))?;
        }
        Ok(())
    }

    pub fn to_csv_string(&self) -> String {
        let mut buf = Vec::new();
        self.write_csv(&mut buf).expect("writing to memory");
        String::from_utf8(buf).expect("ascii output")
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn csv_formatting() {
        let mut t = Table::new(&[
            ("n", Format::Integer),
            ("x_db", Format::Db),
            ("x", Format::Full),
        ]);
        t.push(vec![Some(1.0), Some(-8.51234), Some(0.1)]);
        t.push(vec![Some(2.0), None, Some(f64::NAN)]);
        assert_eq!(
            t.to_csv_string(),
            "n,x_db,x,schema_version\n1,-8.512,0.1,1\n2,,,1\n"
        );
        assert_eq!(t.printed("x_db").unwrap(), vec![Some(-8.512), None]);
    }
}
