//! Reference tables and their on-disk form.
//!
//! The CSV holds `row, <parameters>, <statistics>, checksum`, with floats
//! written in shortest round-trip form. Each checksum covers its own line, so
//! truncated or edited rows are detected on load. A JSON sidecar carries the
//! column names, the base seed and the statistic-layout id.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::mlkit::Matrix;
use crate::rng;

#[derive(Debug, Clone, PartialEq)]
pub struct ReferenceTable {
    pub param_names: Vec<String>,
    pub stat_names: Vec<String>,
    /// M x p.
    pub params: Matrix,
    /// M x D.
    pub stats: Matrix,
    /// Row index in the originating run (stable under row removal).
    pub rows: Vec<usize>,
    pub base_seed: u64,
    pub spec_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TableMeta {
    pub format: u32,
    pub simulator: String,
    pub spec_id: String,
    pub base_seed: u64,
    pub rows: usize,
    pub param_names: Vec<String>,
    pub stat_names: Vec<String>,
}

pub const TABLE_FORMAT: u32 = 1;

/// Seed of row `row` in a run with base seed `base`.
pub fn row_seed(base: u64, row: usize) -> u64 {
    rng::derive_seed(base, &[row as u64])
}

impl ReferenceTable {
    pub fn len(&self) -> usize {
        self.params.rows()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn n_params(&self) -> usize {
        self.params.cols()
    }

    pub fn n_stats(&self) -> usize {
        self.stats.cols()
    }

    pub fn seeds(&self) -> Vec<u64> {
        self.rows.iter().map(|&r| row_seed(self.base_seed, r)).collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.is_empty() {
            return Err(Error::Input("reference table is empty".into()));
        }
        if self.stats.rows() != self.len() || self.rows.len() != self.len() {
            return Err(Error::Input("reference table columns are not row-aligned".into()));
        }
        if self.param_names.len() != self.n_params() || self.stat_names.len() != self.n_stats() {
            return Err(Error::Input("reference table names do not match its columns".into()));
        }
        if self.params.as_slice().iter().chain(self.stats.as_slice()).any(|v| !v.is_finite()) {
            return Err(Error::Input("reference table has non-finite entries".into()));
        }
        Ok(())
    }

    pub fn select_rows(&self, idx: &[usize]) -> Self {
        Self {
            param_names: self.param_names.clone(),
            stat_names: self.stat_names.clone(),
            params: self.params.select_rows(idx),
            stats: self.stats.select_rows(idx),
            rows: idx.iter().map(|&i| self.rows[i]).collect(),
            base_seed: self.base_seed,
            spec_id: self.spec_id.clone(),
        }
    }

    /// The table with the given positions removed.
    pub fn without_rows(&self, drop: &[usize]) -> Self {
        let mut keep = vec![true; self.len()];
        for &i in drop {
            keep[i] = false;
        }
        let idx: Vec<usize> = (0..self.len()).filter(|&i| keep[i]).collect();
        self.select_rows(&idx)
    }

    pub fn meta(&self, simulator: &str) -> TableMeta {
        TableMeta {
            format: TABLE_FORMAT,
            simulator: simulator.into(),
            spec_id: self.spec_id.clone(),
            base_seed: self.base_seed,
            rows: self.len(),
            param_names: self.param_names.clone(),
            stat_names: self.stat_names.clone(),
        }
    }

    pub fn save(&self, path: &Path, simulator: &str) -> Result<()> {
        let mut w = TableWriter::create(path, &self.meta(simulator))?;
        for i in 0..self.len() {
            w.append(self.rows[i], self.params.row(i), self.stats.row(i))?;
        }
        w.finish()
    }

    /// Strict load: any malformed row or checksum mismatch is an error.
    pub fn load(path: &Path) -> Result<Self> {
        let meta = load_meta(path)?;
        let scan = scan_rows(path, &meta)?;
        if let Some((line, msg)) = scan.bad.first() {
            return Err(Error::Corrupt {
                path: path.into(),
                msg: format!("line {line}: {msg}"),
            });
        }
        let table = scan.into_table(&meta);
        table.validate()?;
        Ok(table)
    }
}

pub fn sidecar_path(path: &Path) -> PathBuf {
    let mut s = path.as_os_str().to_owned();
    s.push(".json");
    PathBuf::from(s)
}

pub fn load_meta(path: &Path) -> Result<TableMeta> {
    let side = sidecar_path(path);
    let meta: TableMeta = serde_json::from_str(&fs::read_to_string(&side)?)?;
    if meta.format != TABLE_FORMAT {
        return Err(Error::Corrupt {
            path: side,
            msg: format!("unsupported table format {}", meta.format),
        });
    }
    Ok(meta)
}

fn header(meta: &TableMeta) -> String {
    let mut h = vec!["row".to_string()];
    h.extend(meta.param_names.iter().cloned());
    h.extend(meta.stat_names.iter().cloned());
    h.push("checksum".into());
    h.join(",")
}

fn checksum(body: &str) -> String {
    let d = Sha256::digest(body.as_bytes());
    d[..8].iter().map(|b| format!("{b:02x}")).collect()
}

fn format_row(row: usize, params: &[f64], stats: &[f64]) -> String {
    let mut body = row.to_string();
    for v in params.iter().chain(stats) {
        body.push(',');
        body.push_str(&format!("{v:?}"));
    }
    let sum = checksum(&body);
    format!("{body},{sum}\n")
}

/// Rows recovered from a table file.
#[derive(Debug, Default)]
pub struct RowScan {
    pub rows: BTreeMap<usize, (Vec<f64>, Vec<f64>)>,
    /// `(line number, reason)` for every rejected line.
    pub bad: Vec<(usize, String)>,
}

impl RowScan {
    fn into_table(self, meta: &TableMeta) -> ReferenceTable {
        let p = meta.param_names.len();
        let d = meta.stat_names.len();
        let m = self.rows.len();
        let mut params = Vec::with_capacity(m * p);
        let mut stats = Vec::with_capacity(m * d);
        let mut rows = Vec::with_capacity(m);
        for (r, (a, b)) in self.rows {
            rows.push(r);
            params.extend(a);
            stats.extend(b);
        }
        ReferenceTable {
            param_names: meta.param_names.clone(),
            stat_names: meta.stat_names.clone(),
            params: Matrix::new(m, p, params).expect("row widths checked"),
            stats: Matrix::new(m, d, stats).expect("row widths checked"),
            rows,
            base_seed: meta.base_seed,
            spec_id: meta.spec_id.clone(),
        }
    }
}

/// Reads every line, keeping rows whose checksum and width are valid.
pub fn scan_rows(path: &Path, meta: &TableMeta) -> Result<RowScan> {
    let text = fs::read_to_string(path)?;
    let mut lines = text.split_inclusive('\n').enumerate();
    let mut scan = RowScan::default();
    match lines.next() {
        Some((_, h)) if h.trim_end() == header(meta) => {}
        _ => {
            return Err(Error::Corrupt {
                path: path.into(),
                msg: "header does not match sidecar".into(),
            })
        }
    }
    let (p, d) = (meta.param_names.len(), meta.stat_names.len());
    for (no, line) in lines {
        let no = no + 1;
        if !line.ends_with('\n') {
            scan.bad.push((no, "truncated line".into()));
            continue;
        }
        let line = line.trim_end();
        let Some((body, sum)) = line.rsplit_once(',') else {
            scan.bad.push((no, "missing checksum".into()));
            continue;
        };
        if checksum(body) != sum {
            scan.bad.push((no, "checksum mismatch".into()));
            continue;
        }
        let fields: Vec<&str> = body.split(',').collect();
        if fields.len() != 1 + p + d {
            scan.bad.push((no, "wrong field count".into()));
            continue;
        }
        let Ok(row) = fields[0].parse::<usize>() else {
            scan.bad.push((no, "bad row index".into()));
            continue;
        };
        let values: std::result::Result<Vec<f64>, _> = fields[1..].iter().map(|f| f.parse::<f64>()).collect();
        match values {
            Ok(v) => {
                let (a, b) = v.split_at(p);
                if scan.rows.insert(row, (a.to_vec(), b.to_vec())).is_some() {
                    scan.bad.push((no, format!("duplicate row {row}")));
                }
            }
            Err(_) => scan.bad.push((no, "bad number".into())),
        }
    }
    Ok(scan)
}

/// Appends rows to a table file; the sidecar is written on creation.
pub struct TableWriter {
    file: std::io::BufWriter<fs::File>,
}

impl TableWriter {
    pub fn create(path: &Path, meta: &TableMeta) -> Result<Self> {
        fs::write(sidecar_path(path), serde_json::to_string_pretty(meta)? + "\n")?;
        let mut file = std::io::BufWriter::new(fs::File::create(path)?);
        writeln!(file, "{}", header(meta))?;
        Ok(Self { file })
    }

    pub fn append_to(path: &Path) -> Result<Self> {
        let file = fs::OpenOptions::new().append(true).open(path)?;
        Ok(Self {
            file: std::io::BufWriter::new(file),
        })
    }

    pub fn append(&mut self, row: usize, params: &[f64], stats: &[f64]) -> Result<()> {
        self.file.write_all(format_row(row, params, stats).as_bytes())?;
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.file.flush()?;
        Ok(())
    }

    pub fn finish(mut self) -> Result<()> {
        self.flush()
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table() -> ReferenceTable {
        ReferenceTable {
            param_names: vec!["a".into(), "b".into()],
            stat_names: vec!["s".into()],
            params: Matrix::from_rows(&[[0.1, 1e-300], [2.0 / 3.0, -5.0], [1e10, 0.0]]),
            stats: Matrix::from_rows(&[[1.0], [f64::MIN_POSITIVE], [7.25]]),
            rows: vec![0, 1, 2],
            base_seed: 42,
            spec_id: "abc".into(),
        }
    }

    #[test]
    fn bit_exact_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        let t = table();
        t.save(&p, "test").unwrap();
        assert_eq!(ReferenceTable::load(&p).unwrap(), t);
    }

    #[test]
    fn detects_corruption() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("t.csv");
        table().save(&p, "test").unwrap();
        let text = fs::read_to_string(&p).unwrap();
        fs::write(&p, text.replacen("7.25", "7.26", 1)).unwrap();
        assert!(matches!(ReferenceTable::load(&p), Err(Error::Corrupt { .. })));
        let meta = load_meta(&p).unwrap();
        let scan = scan_rows(&p, &meta).unwrap();
        assert_eq!(scan.rows.len(), 2);
        assert_eq!(scan.bad.len(), 1);
        // A truncated final line is also rejected.
        fs::write(&p, &text[..text.len() - 3]).unwrap();
        let scan = scan_rows(&p, &meta).unwrap();
        assert_eq!((scan.rows.len(), scan.bad[0].1.as_str()), (2, "truncated line"));
    }

    #[test]
    fn row_removal_keeps_ids() {
        let t = table().without_rows(&[1]);
        assert_eq!(t.rows, vec![0, 2]);
        assert_eq!(t.params.row(1), &[1e10, 0.0]);
        assert_eq!(t.seeds()[1], row_seed(42, 2));
    }
}
