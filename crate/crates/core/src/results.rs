//! Result tables and their CSV form.
//!
//! Header: `freq_hz`, then `re_<col>,im_<col>` per complex column, then
//! `iters,resid,wall_s,status`. Numbers use Rust's shortest round-trip
//! scientific formatting, so reading a file back reproduces the table
//! bit for bit.

use std::io::{Read, Write};
use std::path::Path;

use num_complex::Complex64;

use crate::error::{FitError, Result};
use crate::ports::NetworkResult;

#[derive(Debug, Clone, PartialEq)]
pub struct ResultRow {
    pub freq_hz: f64,
    pub values: Vec<Complex64>,
    pub iters: usize,
    pub resid: f64,
    pub wall_s: f64,
    /// `ok`, or a short description of what went wrong at this frequency.
    pub status: String,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct ResultTable {
    /// Names of the complex columns, e.g. `Z11`, `S21`.
    pub columns: Vec<String>,
    pub rows: Vec<ResultRow>,
}

fn entry_name(prefix: &str, m: usize, n: usize, n_ports: usize) -> String {
    if n_ports > 9 {
        format!("{prefix}{}_{}", m + 1, n + 1)
    } else {
        format!("{prefix}{}{}", m + 1, n + 1)
    }
}

impl ResultTable {
    /// Column layout for an `n_ports` network: all Z entries row by row,
    /// then all S entries.
    pub fn network_columns(n_ports: usize) -> Vec<String> {
        let mut cols = Vec::with_capacity(2 * n_ports * n_ports);
        for prefix in ["Z", "S"] {
            for m in 0..n_ports {
                for n in 0..n_ports {
                    cols.push(entry_name(prefix, m, n, n_ports));
                }
            }
        }
        cols
    }

    pub fn from_network(n_ports: usize, results: &[NetworkResult]) -> ResultTable {
        let rows = results
            .iter()
            .map(|r| {
                let mut values = Vec::with_capacity(2 * n_ports * n_ports);
                for mat in [&r.z, &r.s] {
                    for m in 0..n_ports {
                        for n in 0..n_ports {
                            values.push(mat[(m, n)]);
                        }
                    }
                }
                ResultRow {
                    freq_hz: r.frequency,
                    values,
                    iters: r.total_iterations(),
                    resid: r.max_residual(),
                    wall_s: r.wall_s,
                    status: match (&r.error, r.converged) {
                        (Some(e), _) => e.clone(),
                        (None, true) => "ok".into(),
                        (None, false) => "not converged".into(),
                    },
                }
            })
            .collect();
        ResultTable {
            columns: ResultTable::network_columns(n_ports),
            rows,
        }
    }

    pub fn header(&self) -> Vec<String> {
        let mut h = vec!["freq_hz".to_string()];
        for c in &self.columns {
            h.push(format!("re_{c}"));
            h.push(format!("im_{c}"));
        }
        h.extend(["iters", "resid", "wall_s", "status"].map(String::from));
        h
    }

    pub fn column(&self, name: &str) -> Option<Vec<Complex64>> {
        let i = self.columns.iter().position(|c| c == name)?;
        Some(self.rows.iter().map(|r| r.values[i]).collect())
    }

    pub fn write_to<W: Write>(&self, w: W) -> Result<()> {
        let mut out = csv::Writer::from_writer(w);
        out.write_record(self.header())?;
        for r in &self.rows {
            if r.values.len() != self.columns.len() {
                return Err(FitError::DimensionMismatch {
                    expected: self.columns.len(),
                    got: r.values.len(),
                });
            }
            let mut rec = Vec::with_capacity(2 * r.values.len() + 5);
            rec.push(format!("{:e}", r.freq_hz));
            for v in &r.values {
                rec.push(format!("{:e}", v.re));
                rec.push(format!("{:e}", v.im));
            }
            rec.push(r.iters.to_string());
            rec.push(format!("{:e}", r.resid));
            rec.push(format!("{:e}", r.wall_s));
            rec.push(r.status.clone());
            out.write_record(&rec)?;
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(r: R) -> Result<ResultTable> {
        let mut rdr = csv::Reader::from_reader(r);
        let header: Vec<String> = rdr.headers()?.iter().map(String::from).collect();
        let bad = |msg: String| FitError::InvalidArgument(format!("results csv: {msg}"));
        if header.len() < 5 || header[0] != "freq_hz" || (header.len() - 5) % 2 != 0 {
            return Err(bad(format!("unexpected header {header:?}")));
        }
        let n_cols = (header.len() - 5) / 2;
        let mut columns = Vec::with_capacity(n_cols);
        for c in 0..n_cols {
            let re = &header[1 + 2 * c];
            let im = &header[2 + 2 * c];
            match (re.strip_prefix("re_"), im.strip_prefix("im_")) {
                (Some(a), Some(b)) if a == b => columns.push(a.to_string()),
                _ => return Err(bad(format!("bad column pair {re}, {im}"))),
            }
        }
        let num = |s: &str| s.parse::<f64>().map_err(|e| bad(format!("'{s}': {e}")));
        let mut rows = Vec::new();
        for rec in rdr.records() {
            let rec = rec?;
            let values = (0..n_cols)
                .map(|c| Ok(Complex64::new(num(&rec[1 + 2 * c])?, num(&rec[2 + 2 * c])?)))
                .collect::<Result<Vec<_>>>()?;
            let base = 1 + 2 * n_cols;
            rows.push(ResultRow {
                freq_hz: num(&rec[0])?,
                values,
                iters: rec[base].parse().map_err(|e| bad(format!("iters: {e}")))?,
                resid: num(&rec[base + 1])?,
                wall_s: num(&rec[base + 2])?,
                status: rec[base + 3].to_string(),
            });
        }
        Ok(ResultTable { columns, rows })
    }
}

pub fn write_results(table: &ResultTable, path: impl AsRef<Path>) -> Result<()> {
    let file = std::fs::File::create(path)?;
    table.write_to(std::io::BufWriter::new(file))
}

pub fn read_results(path: impl AsRef<Path>) -> Result<ResultTable> {
    table_from_file(path.as_ref())
}

fn table_from_file(path: &Path) -> Result<ResultTable> {
    ResultTable::read_from(std::fs::File::open(path)?)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(f: f64, n: usize) -> ResultRow {
        ResultRow {
            freq_hz: f,
            values: (0..n).map(|i| Complex64::new(0.1 * i as f64 + 1.0 / 3.0, -f.sqrt() / 7.0)).collect(),
            iters: 17,
            resid: 3.2e-13,
            wall_s: 0.012345678901234,
            status: "ok".into(),
        }
    }

    #[test]
    fn empty_table_is_header_only() {
        let t = ResultTable {
            columns: ResultTable::network_columns(1),
            rows: vec![],
        };
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text, "freq_hz,re_Z11,im_Z11,re_S11,im_S11,iters,resid,wall_s,status\n");
    }

    #[test]
    fn one_port_one_frequency() {
        let t = ResultTable {
            columns: ResultTable::network_columns(1),
            rows: vec![row(1e9, 2)],
        };
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 2);
        assert_eq!(text.lines().nth(1).unwrap().split(',').count(), 9);
    }

    #[test]
    fn round_trip_is_exact() {
        let t = ResultTable {
            columns: ResultTable::network_columns(2),
            rows: (0..5).map(|i| row(1e9 + 1234.5678 * i as f64, 8)).collect(),
        };
        let mut buf = Vec::new();
        t.write_to(&mut buf).unwrap();
        let back = ResultTable::read_from(&buf[..]).unwrap();
        assert_eq!(back, t);
        for (a, b) in back.rows.iter().zip(&t.rows) {
            assert_eq!(a.wall_s.to_bits(), b.wall_s.to_bits());
        }
    }

    #[test]
    fn many_ports_use_separated_names() {
        assert_eq!(ResultTable::network_columns(10)[10], "Z2_1");
        assert_eq!(ResultTable::network_columns(2), vec!["Z11", "Z12", "Z21", "Z22", "S11", "S12", "S21", "S22"]);
    }
}
