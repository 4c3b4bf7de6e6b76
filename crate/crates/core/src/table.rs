//! CSV tables with a leading `#` provenance comment.

use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::Result;

pub const TOOL: &str = concat!("wermlab ", env!("CARGO_PKG_VERSION"));

/// Where an output came from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProvenanceTag {
    pub config_digest: u64,
    pub base_seed: u64,
}

impl ProvenanceTag {
    pub fn new(config_digest: u64, base_seed: u64) -> Self {
        Self { config_digest, base_seed }
    }

    /// `tool=... config_digest=... base_seed=...`, without the comment marker.
    pub fn line(&self) -> String {
        format!("tool={TOOL} config_digest={:016x} base_seed={}", self.config_digest, self.base_seed)
    }
}

/// A header plus string rows.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Table {
    pub header: Vec<String>,
    pub rows: Vec<Vec<String>>,
}

impl Table {
    pub fn new(header: &[&str]) -> Self {
        Self { header: header.iter().map(|h| h.to_string()).collect(), rows: Vec::new() }
    }

    pub fn push(&mut self, row: Vec<String>) {
        debug_assert_eq!(row.len(), self.header.len());
        self.rows.push(row);
    }

    pub fn column(&self, name: &str) -> Option<usize> {
        self.header.iter().position(|h| h == name)
    }

    pub fn write(&self, path: &Path, provenance: &ProvenanceTag) -> Result<()> {
        let mut file = File::create(path)?;
        writeln!(file, "# {}", provenance.line())?;
        let mut w = csv::Writer::from_writer(file);
        w.write_record(&self.header)?;
        for r in &self.rows {
            w.write_record(r)?;
        }
        w.flush()?;
        Ok(())
    }

    /// Read a table, returning the provenance comment (without `# `) if any.
    pub fn read(path: &Path) -> Result<(Option<String>, Table)> {
        let mut first = String::new();
        BufReader::new(File::open(path)?).read_line(&mut first)?;
        let provenance = first.strip_prefix("# ").map(|s| s.trim_end().to_string());
        let mut r = csv::ReaderBuilder::new().comment(Some(b'#')).from_path(path)?;
        let header = r.headers()?.iter().map(String::from).collect();
        let mut rows = Vec::new();
        for rec in r.records() {
            rows.push(rec?.iter().map(String::from).collect());
        }
        Ok((provenance, Table { header, rows }))
    }
}

/// Shortest round-tripping decimal; absent values become empty cells.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map_or_else(String::new, |x| x.to_string())
}
