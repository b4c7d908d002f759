//! CSV tables.

use std::io::Write;
use std::path::Path;

use crate::CliError;

/// A header and rows of already formatted cells.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Table {
    pub header: Vec<&'static str>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&'static str]) -> Self {
        Self {
            header: header.to_vec(),
            rows: Vec::new(),
        }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn write_to<W: Write>(&self, sink: W) -> Result<(), CliError> {
        let io = |e: csv::Error| CliError::Io(e.to_string());
        let mut w = csv::WriterBuilder::new()
            .terminator(csv::Terminator::Any(b'\n'))
            .from_writer(sink);
        w.write_record(&self.header).map_err(io)?;
        for row in &self.rows {
            w.write_record(row).map_err(io)?;
        }
        w.flush().map_err(|e| CliError::Io(e.to_string()))
    }

    pub fn to_csv_string(&self) -> Result<String, CliError> {
        let mut buf = Vec::new();
        self.write_to(&mut buf)?;
        String::from_utf8(buf).map_err(|e| CliError::Io(e.to_string()))
    }
}

/// Seventeen significant digits in scientific notation, independent of locale.
pub fn float(x: f64) -> String {
    format!("{x:.16e}")
}

/// Writes `table` to `path`, or to standard output when `path` is `None`.
pub fn emit_csv(table: &Table, path: Option<&Path>) -> Result<(), CliError> {
    match path {
        Some(p) => {
            let file = std::fs::File::create(p).map_err(|e| CliError::Io(format!("{}: {e}", p.display())))?;
            table.write_to(std::io::BufWriter::new(file))
        }
        None => table.write_to(std::io::stdout().lock()),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn floats_round_trip() {
        for x in [6.474600379589358, 1e-300, 0.1 + 0.2, -2.5e17] {
            assert_eq!(float(x).parse::<f64>().unwrap(), x);
        }
        assert_eq!(float(0.5), "5.0000000000000000e-1");
    }

    #[test]
    fn header_once_and_line_feeds() {
        let mut t = Table::new(&["a", "b"]);
        t.push(vec!["1".into(), "x,y".into()]);
        t.push(vec!["2".into(), "z".into()]);
        let s = t.to_csv_string().unwrap();
        assert_eq!(s, "a,b\n1,\"x,y\"\n2,z\n");
    }
}
